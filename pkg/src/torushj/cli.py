"""Command-line orchestration: scenario runs, CSV emission, run reports.

Subcommands: critical, weak-kam, discount, evolve, reach, check-sbg,
homogenize, report. Every pipeline echoes its configuration, writes plot-ready
CSVs into the output directory, evaluates the invariant checks it exercises,
and exits 0 only when all of them pass. Sequential runs are deterministic:
two runs of one config produce bit-identical CSVs.
"""

import argparse
import csv
import os
import sys as _sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .config import RunConfig, default_config, load_config, schema_text
from .critical import (
    check_critical_residual,
    corrector_discount,
    estimate_both,
    fixed_point_residuals,
    lambda_discount,
    weak_kam_fixed_point,
)
from .discounted import residual as pde_residual
from .discounted import solve_discounted
from .errors import ConfigError, TorusHJError
from .geometry import btc_bound, check_sbg, default_node_samples, minimal_time_table
from .grid import ScalarField, TorusGrid, read_field_csv, write_field_csv
from .homogenization import convergence_study, effective_initial_data
from .scheme import operator_for
from .semigroup import evolve
from .systems import BoundedControl, QuadraticControl


@dataclass
class RunReport:
    pipeline: str
    config_echo: str
    operations: list = field(default_factory=list)  # (name, summary) pairs
    checks: list = field(default_factory=list)  # (name, passed, detail)
    wall_clock: float = 0.0

    def add_op(self, name, summary):
        self.operations.append((name, summary))

    def add_check(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def all_passed(self):
        return all(p for _, p, _ in self.checks)

    def render(self):
        lines = [f"pipeline: {self.pipeline}", f"wall_clock_s: {self.wall_clock:.2f}",
                 "", "-- config --", self.config_echo, "", "-- operations --"]
        for name, summary in self.operations:
            lines.append(f"{name}: {summary}")
        lines.append("")
        lines.append("-- invariant checks --")
        for name, passed, detail in self.checks:
            tag = "PASS" if passed else "FAIL"
            lines.append(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
        lines.append("")
        lines.append(f"result: {'ok' if self.all_passed else 'FAILED'}")
        return "\n".join(lines)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(c, ".17g") if isinstance(c, float) else c for c in row])


def _grid_for(cfg, sys_n):
    sizes = cfg.grid_n
    if len(sizes) == 1:
        sizes = sizes * sys_n
    if len(sizes) != sys_n:
        raise ConfigError(f"grid_n has {len(sizes)} entries for an n={sys_n} scenario")
    return TorusGrid(tuple(sizes))


def _build_system(cfg):
    return catalog.build_system(cfg.scenario, **cfg.scenario_params)


def _slack():
    return 5e-2


# ----------------------------------------------------------------------------
# pipelines


def run_critical(cfg, report, out, method="both"):
    sys_ = _build_system(cfg)
    grid = _grid_for(cfg, sys_.n)
    lam_d = lam_t = float("nan")
    gap = float("nan")
    osc_min = float("nan")
    disc = lt = None
    if method == "both":
        disc, lt = estimate_both(sys_, grid, cfg.delta_schedule, cfg.t1, cfg.t2,
                                 dt=cfg.dt, tol=cfg.tol, max_iter=cfg.max_iter)
        lam_d, lam_t, gap = disc.lambda_bar, lt.lambda_bar, disc.agreement_gap
        osc_min = disc.oscs[-1]
    elif method == "discount":
        disc = lambda_discount(sys_, cfg.delta_schedule, grid, dt=cfg.dt,
                               tol=cfg.tol, max_iter=cfg.max_iter)
        lam_d, osc_min = disc.lambda_bar, disc.oscs[-1]
    else:
        from .critical import lambda_longtime

        lt = lambda_longtime(sys_, ScalarField(grid), cfg.t1, cfg.t2, dt=cfg.dt)
        lam_t = lt.lambda_bar
    if disc is not None:
        report.add_op("critical.discount",
                      f"lambda={lam_d:.6g} means={['%.4g' % m for m in disc.means]} "
                      f"oscs={['%.3g' % o for o in disc.oscs]}")
        x = grid.coords()
        lv = sys_.l(x)
        if isinstance(sys_.control, (QuadraticControl, BoundedControl)):
            report.add_check(
                "critical.bracketing",
                lv.min() - _slack() <= lam_d <= lv.max() + _slack(),
                f"min l={lv.min():.4g} lambda={lam_d:.4g} max l={lv.max():.4g}",
            )
        oscs = np.asarray(disc.oscs)
        report.add_check(
            "critical.osc_decreasing",
            bool(np.all(np.diff(oscs) <= 1e-12)),
            f"oscs={['%.3g' % o for o in oscs]}",
        )
    if lt is not None:
        report.add_op("critical.longtime",
                      f"lambda={lam_t:.6g} slope_spread={lt.slope_spread:.3g}")
    if disc is not None and lt is not None:
        tol_gap = max(_slack(), 3.0 * osc_min)
        report.add_check("critical.estimator_agreement", gap <= tol_gap,
                         f"gap={gap:.4g} tolerance={tol_gap:.4g}")
    _write_csv(
        os.path.join(out, "critical_summary.csv"),
        ["scenario", "lambda_discount", "lambda_longtime", "gap", "osc_min_delta",
         "fixedpoint_residual"],
        [[cfg.scenario, lam_d, lam_t, gap, osc_min, float("nan")]],
    )
    return disc


def run_weak_kam(cfg, report, out, bisect=False):
    sys_ = _build_system(cfg)
    grid = _grid_for(cfg, sys_.n)
    op = operator_for(sys_, grid, dt=cfg.dt)
    disc = lambda_discount(sys_, cfg.delta_schedule, grid, tol=cfg.tol,
                           max_iter=cfg.max_iter, operator=op)
    lam = disc.lambda_bar
    if bisect:
        lam = bisect_lambda(sys_, grid, lam - 0.25, lam + 0.25, operator=op)
        report.add_op("weak_kam.bisect", f"refined lambda={lam:.6g}")
    delta_min = disc.deltas[-1]
    corr = corrector_discount(sys_, grid, delta_min, lambda_bar=lam,
                              solve=disc.solves[-1])
    report.add_check("corrector.origin_normalization",
                     corr.v.values[(0,) * grid.n] == 0.0,
                     "v vanishes at the origin node")
    wk = weak_kam_fixed_point(sys_, lam, corr.u, tol=cfg.wk_tol, t_max=cfg.wk_t_max,
                              operator=op)
    resid = fixed_point_residuals(sys_, wk.chi, lam, ts=tuple(cfg.wk_ts), operator=op)
    worst = max(resid.values())
    report.add_op(
        "weak_kam.fixed_point",
        f"lambda={lam:.6g} sweeps={wk.monotone_iterations} "
        f"residuals={{{', '.join(f'{t:g}: {r:.3g}' for t, r in resid.items())}}}",
    )
    report.add_check("weak_kam.residual_bound", worst <= _slack(),
                     f"max residual {worst:.4g} <= {_slack()}")
    cres = check_critical_residual(sys_, wk.chi, lam)
    report.add_op(
        "weak_kam.critical_residual",
        f"sub_defect={cres.sup_subsolution_defect:.3g} "
        f"super_defect={cres.sup_supersolution_defect:.3g}",
    )
    write_field_csv(wk.chi, os.path.join(out, "chi.csv"))
    _write_csv(
        os.path.join(out, "weak_kam_summary.csv"),
        ["scenario", "lambda", "max_fixedpoint_residual", "sweeps", "stalled"],
        [[cfg.scenario, lam, worst, wk.monotone_iterations, int(wk.stalled)]],
    )
    return wk


def run_discount(cfg, report, out):
    sys_ = _build_system(cfg)
    grid = _grid_for(cfg, sys_.n)
    sol = solve_discounted(sys_, cfg.delta, grid, dt=cfg.dt, tol=cfg.tol,
                           max_iter=cfg.max_iter)
    res = pde_residual(sys_, cfg.delta, sol.w)
    report.add_op(
        "discount.solve",
        f"delta={cfg.delta:g} mean(dw)={sol.mean_delta_w:.6g} "
        f"osc(dw)={sol.osc_delta_w:.4g} sup_update={sol.sup_residual:.3g} "
        f"iterations={sol.iterations} clip_events={sol.clip_events}",
    )
    lv = sys_.l(grid.coords())
    bound = float(np.max(np.abs(lv))) + cfg.tol + 1e-9
    report.add_check(
        "discount.apriori_bound",
        float(np.max(np.abs(cfg.delta * sol.w.values))) <= bound,
        f"sup|delta w|={float(np.max(np.abs(cfg.delta * sol.w.values))):.4g} "
        f"<= sup|l|+tol={bound:.4g}",
    )
    report.add_check("discount.converged",
                     sol.sup_residual <= cfg.tol * cfg.delta * sol.dt + 1e-15,
                     f"sup_update={sol.sup_residual:.3g}")
    report.add_check("discount.residual_finite", np.isfinite(res.sup),
                     f"sup={res.sup:.4g} mean={res.mean:.4g}")
    write_field_csv(sol.w, os.path.join(out, "w_delta.csv"))
    _write_csv(
        os.path.join(out, "discount_summary.csv"),
        ["delta", "mean_delta_w", "osc_delta_w", "sup_residual", "iterations"],
        [[cfg.delta, sol.mean_delta_w, sol.osc_delta_w, sol.sup_residual,
          sol.iterations]],
    )
    return sol


def run_evolve(cfg, report, out):
    sys_ = _build_system(cfg)
    grid = _grid_for(cfg, sys_.n)
    if cfg.w0_csv:
        w0 = read_field_csv(cfg.w0_csv)
        if w0.grid.sizes != grid.sizes:
            raise ConfigError(
                f"w0 grid {w0.grid.sizes} does not match configured grid {grid.sizes}"
            )
    else:
        w0 = ScalarField(grid)
    run = evolve(sys_, w0, cfg.t_end, dt=cfg.dt, record_every=cfg.record_every)
    report.add_op("evolve", f"t_end={cfg.t_end:g} dt={run.dt:g} "
                            f"snapshots={len(run.snapshots)}")
    report.add_check("evolve.initial_snapshot_exact",
                     bool(np.array_equal(run.snapshots[0].values, w0.values)),
                     "w(.,0) equals the initial datum")
    sup_l = float(np.max(np.abs(sys_.l(grid.coords()))))
    defect = run.bound_defect(sup_l)
    report.add_check("evolve.apriori_bound", defect <= 1e-9,
                     f"max violation of |w| <= t sup|l| + sup|w0|: {defect:.3g}")
    index_rows = []
    for k, (t, snap) in enumerate(zip(run.times, run.snapshots)):
        name = f"snapshot_{k:04d}.csv"
        write_field_csv(snap, os.path.join(out, name))
        index_rows.append([k, t, name])
    _write_csv(os.path.join(out, "evolution_index.csv"),
               ["index", "time", "file"], index_rows)
    return run


def run_reach(cfg, report, out):
    sys_ = _build_system(cfg)
    grid = _grid_for(cfg, sys_.n)
    k = cfg.reach_k
    dt = cfg.reach_dt if cfg.reach_dt is not None else float(np.min(grid.h)) / (2.0 * k)
    samples = default_node_samples(grid, per_axis=cfg.reach_per_axis)
    table = minimal_time_table(sys_, k, dt, grid, node_samples=samples,
                               horizon=cfg.reach_horizon)
    verdict = btc_bound(table)
    report.add_op(
        "reach.table",
        f"K={k:g} dt={dt:g} samples={len(samples)} S="
        f"{verdict.S if verdict.bounded else 'inf'} bounded={verdict.bounded}",
    )
    ts = table.t_sharp
    report.add_check("reach.zero_diagonal", bool(np.all(np.diag(ts) == 0.0)),
                     "t_sharp(x, x) = 0")
    tri_slack = 2.0 * dt + 1e-12
    finite = np.isfinite(ts)
    worst_tri = 0.0
    nn = ts.shape[0]
    for i in range(nn):
        for jj in range(nn):
            if not finite[i, jj]:
                continue
            through = ts[i, :] + ts[:, jj]
            best = float(np.min(through))
            worst_tri = max(worst_tri, ts[i, jj] - best)
    report.add_check("reach.triangle_inequality", worst_tri <= tri_slack,
                     f"max violation {worst_tri:.3g} <= 2 dt")
    bvals = sys_.b(grid.coords())
    if float(np.max(np.abs(bvals))) == 0.0:
        sym_slack = 2.0 * dt + float(np.max(grid.h))
        sym = float(np.nanmax(np.abs(np.where(finite & finite.T, ts - ts.T, 0.0))))
        report.add_check("reach.symmetry", sym <= sym_slack,
                         f"max |t(x,y)-t(y,x)| = {sym:.3g} <= 2 dt + h")
    if cfg.scenario in catalog.SBG_TRUE:
        report.add_check("reach.bounded_time", verdict.bounded,
                         f"S={verdict.S if verdict.bounded else 'inf'}")
    rows = []
    for i, si in enumerate(table.sources):
        for j, sj in enumerate(table.sources):
            rows.append([int(si), int(sj), float(ts[i, j])])
    _write_csv(os.path.join(out, "time_table.csv"), ["src", "dst", "t_sharp"], rows)
    _write_csv(os.path.join(out, "reach_summary.csv"),
               ["K", "dt", "S", "bounded", "unreachable_pairs"],
               [[k, dt, verdict.S, int(verdict.bounded),
                 len(verdict.unreachable_pairs)]])
    return table


def run_check_sbg(cfg, report, out):
    sys_ = _build_system(cfg)
    rep = check_sbg(sys_, order_max=cfg.sbg_order, tol=cfg.sbg_tol,
                    points_per_axis=cfg.sbg_points)
    report.add_op(
        "check_sbg",
        f"order_max={rep.order_max} points={rep.sample_points.shape[0]} "
        f"worst_rank={rep.worst_rank()} generated={rep.generated}",
    )
    expected = cfg.scenario in catalog.SBG_TRUE
    if cfg.scenario in catalog.SBG_TRUE or cfg.scenario == "single2d":
        report.add_check("sbg.expected_verdict", rep.generated == expected,
                         f"generated={rep.generated}, catalog expectation={expected}")
    rows = [[*pt, int(rk)] for pt, rk in zip(rep.sample_points, rep.rank_at_point)]
    _write_csv(os.path.join(out, "sbg_report.csv"),
               [f"x{k + 1}" for k in range(sys_.n)] + ["rank"], rows)
    return rep


def run_homogenize(cfg, report, out):
    osc = catalog.build_oscillating(cfg.scenario, **cfg.scenario_params)
    z_samples = np.arange(cfg.z_samples) / cfg.z_samples
    p_samples = np.linspace(-cfg.p_max, cfg.p_max, cfg.p_samples)
    study, table = convergence_study(
        osc, cfg.epsilons, mode=cfg.homog_mode, z_samples=z_samples,
        p_samples=p_samples, nodes_per_cell=cfg.nodes_per_cell,
        cell_sizes=cfg.cell_n, cell_tol=cfg.tol, t_eval=cfg.t_eval,
        workers=cfg.workers,
    )
    report.add_op(
        "homogenize.study",
        f"mode={study.mode} epsilons={study.epsilons} "
        f"errors={['%.4g' % e for e in study.errors]} fine={study.fine_sizes}",
    )
    ok, worst, _ = table.modulus_check(2.0 * table.cell_tol)
    report.add_check("homogenize.modulus_bound", ok,
                     f"worst margin {worst:.3g} <= {2.0 * table.cell_tol:.3g}")
    report.add_check(
        "homogenize.error_decrease",
        study.errors[-1] <= study.errors[0] + 1e-12,
        f"errors {['%.4g' % e for e in study.errors]}",
    )
    resolved = all(nf * e >= 8 for nf, e in zip(study.fine_sizes, study.epsilons))
    report.add_check("homogenize.resolution", resolved,
                     f"fine sizes {study.fine_sizes} for eps {study.epsilons}")
    report.add_check(
        "homogenize.convexity_diagnostic",
        table.convexity_defect <= 2.0 * table.cell_tol,
        f"midpoint defect {table.convexity_defect:.3g}",
    )
    if cfg.homog_mode == "evolutive":
        stab = effective_initial_data(osc, 0.0)
        report.add_op("homogenize.effective_initial_data",
                      f"h_bar={stab.h_bar:.6g} stabilization gap={stab.gap:.3g}"
                      f"{' (flagged)' if stab.flagged else ''}")
    rows = [[z, p, float(table.values[i, j])]
            for i, z in enumerate(table.z_values)
            for j, p in enumerate(table.p_values)]
    _write_csv(os.path.join(out, "effective_table.csv"), ["z", "P", "Hbar"], rows)
    _write_csv(os.path.join(out, "study.csv"), ["epsilon", "error"],
               [[e, err] for e, err in zip(study.epsilons, study.errors)])
    return study


def bisect_lambda(sys_, grid, lo, hi, sweeps=200, rate_tol=2e-3, iters=12,
                  operator=None, w_start=None):
    """Bracketing search for the critical value via the monotone iteration.

    A candidate below the critical value makes chi <- max(chi, T chi - c dt)
    climb at rate about (critical - c); a candidate above freezes it. Bisect
    on the observed climb rate.
    """
    op = operator if operator is not None else operator_for(sys_, grid)
    w0 = (w_start.flat if w_start is not None else np.zeros(grid.size)).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        chi = w0.copy()
        for _ in range(sweeps):
            chi = np.maximum(chi, op.apply(chi) - mid * op.dt)
        rate = float(np.mean(chi - w0)) / (sweeps * op.dt)
        if rate > rate_tol:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------------
# entry point

_PIPELINES = {
    "critical": run_critical,
    "weak-kam": run_weak_kam,
    "discount": run_discount,
    "evolve": run_evolve,
    "reach": run_reach,
    "check-sbg": run_check_sbg,
    "homogenize": run_homogenize,
}


def run_scenario(cfg, pipeline, **kwargs):
    """Execute one pipeline; returns the RunReport (deterministic outputs)."""
    report = RunReport(pipeline=pipeline, config_echo=cfg.echo())
    out = _ensure_dir(cfg.out_dir)
    start = time.perf_counter()
    try:
        _PIPELINES[pipeline](cfg, report, out, **kwargs)
    except TorusHJError as exc:
        report.add_check(f"{pipeline}.completed", False, f"{type(exc).__name__}: {exc}")
    report.wall_clock = time.perf_counter() - start
    if not report.operations:
        report.add_op(pipeline, "aborted before completing any stage")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(report.render() + "\n")
    return report


def _add_common(p):
    p.add_argument("--config", default=None, help="configuration file")
    p.add_argument("--scenario", default=None)
    p.add_argument("--out-dir", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="torushj",
        description="Hamilton-Jacobi solvers on the flat torus: ergodic constants, "
                    "weak KAM fixed points, controllability, homogenization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("critical", "weak-kam", "discount", "evolve", "reach",
                 "check-sbg", "homogenize"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "critical":
            p.add_argument("--method", choices=("both", "discount", "longtime"),
                           default="both")
        if name == "weak-kam":
            p.add_argument("--bisect", action="store_true",
                           help="refine lambda by bisection before the fixed point")
        if name == "discount":
            p.add_argument("--delta", type=float, default=None)
        if name == "evolve":
            p.add_argument("--t-end", type=float, default=None)
            p.add_argument("--record-every", type=int, default=None)
        if name == "homogenize":
            p.add_argument("--mode", choices=("stationary", "evolutive"), default=None)
            p.add_argument("--epsilons", default=None,
                           help="comma separated decreasing ladder")
    p = sub.add_parser("report")
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--schema", action="store_true", help="print the config schema")
    return parser


def _config_from_args(args):
    overrides = {}
    if args.scenario:
        overrides["scenario"] = args.scenario
    if getattr(args, "out_dir", None):
        overrides["out_dir"] = args.out_dir
    if getattr(args, "delta", None) is not None:
        overrides["delta"] = args.delta
    if getattr(args, "t_end", None) is not None:
        overrides["t_end"] = args.t_end
    if getattr(args, "record_every", None) is not None:
        overrides["record_every"] = args.record_every
    if getattr(args, "mode", None) is not None:
        overrides["homog_mode"] = args.mode
    if getattr(args, "epsilons", None) is not None:
        overrides["epsilons"] = [float(tok) for tok in args.epsilons.split(",")]
    if args.config:
        return load_config(args.config, **overrides)
    return default_config(**overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "report":
        if args.schema:
            print(schema_text())
            return 0
        path = os.path.join(args.out_dir, "report.txt")
        if not os.path.exists(path):
            print(f"no report at {path}", file=_sys.stderr)
            return 1
        with open(path) as fh:
            print(fh.read(), end="")
        return 0
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return 2
    kwargs = {}
    if args.command == "critical":
        kwargs["method"] = args.method
    if args.command == "weak-kam":
        kwargs["bisect"] = args.bisect
    report = run_scenario(cfg, args.command, **kwargs)
    print(report.render())
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
