"""Critical (ergodic) value estimation, correctors, and weak KAM fixed points.

Two independent estimators of the critical constant:

  * vanishing discount: solve the discounted equation along a decreasing
    delta schedule and extrapolate mean(delta w_delta) linearly in delta;
  * long time: run the Cauchy problem and average the per-node slope
    (w(x, t2) - w(x, t1)) / (t2 - t1).

Correctors come from the smallest-delta solve, normalized at the origin node.
The weak KAM fixed point is the monotone iteration

    chi <- max(chi, T_dt chi - lambda_bar dt)

started from the discounted corrector proxy; the max makes the history
nodewise nondecreasing by construction and the iteration is bounded when
lambda_bar is not underestimated.
"""

from dataclasses import dataclass, field

import numpy as np

from .discounted import solve_discounted
from .errors import ConvergenceError
from .grid import ScalarField
from .scheme import as_field, operator_for
from .semigroup import evolve
from .systems import hamiltonian


@dataclass
class CriticalEstimate:
    lambda_bar: float
    method: str  # "discount" | "longtime"
    deltas: tuple = ()
    means: tuple = ()  # mean(delta * w_delta) per delta
    oscs: tuple = ()  # osc(delta * w_delta) per delta
    slope_spread: float = 0.0  # longtime: max - min of per-node slopes
    agreement_gap: float = float("nan")
    w_min_delta: ScalarField = None
    solves: tuple = ()


@dataclass
class WeakKamSolution:
    chi: ScalarField
    lambda_bar: float
    fixed_point_residuals: dict
    monotone_iterations: int
    stalled: bool
    sup_update: float


@dataclass
class CorrectorPair:
    """v = w - w(origin node); u = w - lambda_bar/delta when lambda_bar given."""

    v: ScalarField
    u: ScalarField = None
    delta: float = 0.0


@dataclass
class CriticalResidualReport:
    """Defects of lambda_bar + H(x, grad chi): positive part measures the
    subsolution defect, negative part the supersolution defect."""

    field: ScalarField
    sup_subsolution_defect: float
    sup_supersolution_defect: float


def lambda_discount(sys, delta_schedule, grid, dt=None, tol=1e-2, max_iter=200_000,
                    operator=None):
    """Vanishing-discount estimate of the critical value.

    The schedule must be decreasing with at least 3 entries; the same one-step
    operator is reused for every delta and solves are warm-started down the
    schedule. A non-converged solve raises ConvergenceError naming its delta.
    """
    deltas = [float(d) for d in delta_schedule]
    if len(deltas) < 3:
        raise ValueError("delta_schedule needs at least 3 values")
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_schedule must be positive and strictly decreasing")
    op = operator if operator is not None else operator_for(sys, grid, dt=dt)
    solves = []
    w_prev = None
    for d in deltas:
        try:
            s = solve_discounted(sys, d, grid, tol=tol, max_iter=max_iter,
                                 operator=op, w_init=w_prev)
        except ConvergenceError as exc:
            raise ConvergenceError(f"delta = {d:g}: {exc}") from exc
        solves.append(s)
        w_prev = s.w.flat
    means = np.array([s.mean_delta_w for s in solves])
    oscs = np.array([s.osc_delta_w for s in solves])
    # linear-in-delta extrapolation over the last three schedule points
    dd = np.array(deltas[-3:])
    mm = means[-3:]
    coef = np.polyfit(dd, mm, 1)
    lam = float(np.polyval(coef, 0.0))
    return CriticalEstimate(
        lambda_bar=lam,
        method="discount",
        deltas=tuple(deltas),
        means=tuple(means),
        oscs=tuple(oscs),
        w_min_delta=solves[-1].w,
        solves=tuple(solves),
    )


def lambda_longtime(sys, w0, t1, t2, dt=None, operator=None):
    """Long-time slope estimate of the critical value from the Cauchy problem."""
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    grid = w0.grid
    op = operator if operator is not None else operator_for(sys, grid, dt=dt)
    steps1 = int(round(t1 / op.dt))
    steps2 = int(round(t2 / op.dt))
    if abs(steps1 * op.dt - t1) > 1e-9 or abs(steps2 * op.dt - t2) > 1e-9:
        # re-align the step so both horizons are integer multiples
        dt_new = t1 / max(1, int(np.ceil(t1 / op.dt)))
        while abs(round(t2 / dt_new) * dt_new - t2) > 1e-9:
            dt_new /= 2.0
        op = operator_for(sys, grid, dt=dt_new)
        steps1 = int(round(t1 / op.dt))
        steps2 = int(round(t2 / op.dt))
    w = w0.flat.copy()
    for _ in range(steps1):
        w = op.apply(w)
    w_t1 = w.copy()
    for _ in range(steps2 - steps1):
        w = op.apply(w)
    slopes = (w - w_t1) / (t2 - t1)
    return CriticalEstimate(
        lambda_bar=float(slopes.mean()),
        method="longtime",
        slope_spread=float(slopes.max() - slopes.min()),
    )


def estimate_both(sys, grid, delta_schedule, t1, t2, dt=None, tol=1e-2,
                  max_iter=200_000):
    """Run both estimators on a shared operator and report the agreement gap."""
    op = operator_for(sys, grid, dt=dt)
    disc = lambda_discount(sys, delta_schedule, grid, tol=tol, max_iter=max_iter,
                           operator=op)
    lt = lambda_longtime(sys, ScalarField(grid), t1, t2, operator=op)
    gap = abs(disc.lambda_bar - lt.lambda_bar)
    disc.agreement_gap = gap
    lt.agreement_gap = gap
    return disc, lt


def corrector_discount(sys, grid, delta, lambda_bar=None, solve=None, tol=1e-2,
                       max_iter=200_000, operator=None):
    """Finite-delta corrector proxies from the discounted solution.

    v = w_delta - w_delta(origin node) vanishes at the origin exactly;
    u = w_delta - lambda_bar/delta is the height-normalized profile.
    """
    if solve is None:
        solve = solve_discounted(sys, delta, grid, tol=tol, max_iter=max_iter,
                                 operator=operator)
    w = solve.w
    origin = w.values[(0,) * grid.n]
    v = ScalarField(grid, w.values - origin)
    u = None
    if lambda_bar is not None:
        u = ScalarField(grid, w.values - lambda_bar / delta)
    return CorrectorPair(v=v, u=u, delta=delta)


def weak_kam_fixed_point(sys, lambda_bar, w_start, dt=None, tol=5e-3, t_max=80.0,
                         operator=None):
    """Monotone fixed-point iteration for the shifted semigroup.

    Iterates chi <- max(chi, T_dt chi - lambda_bar dt) until the sup update
    per unit time drops below tol; the history is nodewise nondecreasing by
    construction. Raises ConvergenceError with growth diagnostics when the
    iterate keeps climbing past t_max (the signature of an underestimated
    lambda_bar). `stalled` reports an exactly-zero final update, the
    signature of an overestimate freezing the iteration at its start.
    """
    grid = w_start.grid
    op = operator if operator is not None else operator_for(sys, grid, dt=dt)
    dt = op.dt
    shift = lambda_bar * dt
    chi = w_start.flat.copy()
    max_sweeps = max(1, int(np.ceil(t_max / dt)))
    sup_update = np.inf
    for it in range(1, max_sweeps + 1):
        cand = op.apply(chi) - shift
        nxt = np.maximum(chi, cand)
        sup_update = float(np.max(nxt - chi))
        chi = nxt
        if sup_update <= tol * dt:
            break
    else:
        growth = sup_update / dt
        raise ConvergenceError(
            "weak KAM iteration still growing at t_max = "
            f"{t_max:g} (rate {growth:.3e} per unit time); lambda_bar likely underestimated"
        )
    stalled = sup_update == 0.0
    chi_field = as_field(grid, chi)
    residuals = fixed_point_residuals(sys, chi_field, lambda_bar, operator=op)
    return WeakKamSolution(
        chi=chi_field,
        lambda_bar=lambda_bar,
        fixed_point_residuals=residuals,
        monotone_iterations=it,
        stalled=stalled,
        sup_update=sup_update,
    )


def fixed_point_residuals(sys, chi, lambda_bar, ts=(0.25, 0.5, 1.0), operator=None,
                          dt=None):
    """sup norm of T_t chi - chi - lambda_bar t at the requested times."""
    grid = chi.grid
    op = operator if operator is not None else operator_for(sys, grid, dt=dt)
    out = {}
    w = chi.flat.copy()
    t = 0.0
    targets = sorted(float(x) for x in ts)
    for target in targets:
        steps = int(round((target - t) / op.dt))
        for _ in range(steps):
            w = op.apply(w)
        t += steps * op.dt
        out[target] = float(np.max(np.abs(w - chi.flat - lambda_bar * t)))
    return out


def check_critical_residual(sys, chi, lambda_bar, exclude=None):
    """Sub/supersolution defects of lambda_bar + H(x, grad_fd chi).

    `exclude` is an optional boolean node mask (kink neighborhoods). The
    refinement trend is obtained by calling this at successive resolutions.
    """
    grid = chi.grid
    r = lambda_bar + hamiltonian(sys, grid.coords(), chi.gradient_nodes())
    keep = np.ones(grid.size, dtype=bool) if exclude is None else ~np.asarray(exclude).ravel()
    rp = np.maximum(r[keep], 0.0)
    rn = np.maximum(-r[keep], 0.0)
    return CriticalResidualReport(
        field=as_field(grid, r),
        sup_subsolution_defect=float(rp.max()) if rp.size else 0.0,
        sup_supersolution_defect=float(rn.max()) if rn.size else 0.0,
    )
