"""Effective Hamiltonian tabulation and two-scale convergence studies.

The effective Hamiltonian at frozen slow variable z and momentum P is minus
the critical value of the cell system with

    b_cell(x) = f(x) + sigma(x)^T sigma(x) P
    l_cell(x) = g(z, x) - f(x) . P - 0.5 |sigma(x) P|^2

which is exactly the momentum-shifted form of the fast-variable equation.
Oscillating stationary problems are solved directly on a fine grid as a
discount-one equation with coefficients evaluated at z/epsilon; the slow
variable is compactified to the torus, so epsilon must be the reciprocal of
an integer. Effective equations are solved by a monotone Lax-Friedrichs
scheme whose dissipation comes from the measured momentum Lipschitz constant
of the table.

Cell problems across (z, P) samples are independent; `workers` fans them out
to processes (results are assembled in index order, so output is identical
to the sequential run).
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .critical import lambda_discount
from .errors import SchemeError
from .fields import ConstantDrift
from .grid import ScalarField, TorusGrid, wrap
from .scheme import operator_for
from .semigroup import evolve
from .systems import AffineSystem, BoundedControl, QuadraticControl, control_samples

DEFAULT_CELL_DELTAS = (3e-2, 1e-2, 3e-3)


# ----------------------------------------------------------------------------
# frozen cell data


@dataclass(frozen=True)
class CellDrift:
    """b_cell(x) = f(x) + sigma(x)^T sigma(x) P with sigma^T sigma = F F^T (G = I)."""

    f: object
    F: object
    P: tuple

    def __call__(self, x):
        x = np.atleast_2d(x)
        fm = self.F(x)
        p = np.asarray(self.P, dtype=float)
        ftp = np.einsum("pnm,n->pm", fm, p)
        return self.f(x) + np.einsum("pnm,pm->pn", fm, ftp)


@dataclass(frozen=True)
class CellPotential:
    """l_cell(x) = g(z, x) - f(x).P - 0.5 |sigma(x) P|^2."""

    g: object
    f: object
    F: object
    z: tuple
    P: tuple

    def __call__(self, x):
        x = np.atleast_2d(x)
        p = np.asarray(self.P, dtype=float)
        sig_p = np.einsum("pnm,n->pm", self.F(x), p)
        return (
            self.g(np.asarray(self.z, dtype=float), x)
            - self.f(x) @ p
            - 0.5 * np.einsum("pm,pm->p", sig_p, sig_p)
        )


@dataclass(frozen=True)
class BoundedCellCost:
    """L(x, a, z, P) = 0.5|a|^2 + g(z, x) - P.(b(x) + F(x) a)."""

    g: object
    f: object
    F: object
    z: tuple
    P: tuple

    def __call__(self, x, a):
        x = np.atleast_2d(x)
        a = np.atleast_2d(a)
        p = np.asarray(self.P, dtype=float)
        fa = np.einsum("pnm,am->apn", self.F(x), a)
        base = 0.5 * np.sum(a * a, axis=1)[:, None] + self.g(
            np.asarray(self.z, dtype=float), x
        )[None, :]
        return base - (self.f(x) @ p)[None, :] - np.einsum("apn,n->ap", fa, p)


def _zscalar(z, n):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size != n:
        raise ValueError(f"slow variable must have {n} components")
    return tuple(float(v) for v in z)


def frozen_data(z, P, osc):
    """Cell system (AffineSystem) at frozen (z, P); quadratic control route."""
    zt = _zscalar(z, osc.n)
    pt = _zscalar(P, osc.n)
    return AffineSystem(
        n=osc.n,
        m=osc.m,
        b=CellDrift(f=osc.f, F=osc.F, P=pt),
        F=osc.F,
        control=QuadraticControl(),
        l=CellPotential(g=osc.g, f=osc.f, F=osc.F, z=zt, P=pt),
        name=f"{osc.name}-cell",
    )


def effective_hamiltonian(z, P, osc, delta_schedule=DEFAULT_CELL_DELTAS,
                          cell_sizes=64, tol=1e-2, max_iter=200_000,
                          bounded_radius=None):
    """H_bar(z, P) = -lambda_bar of the frozen cell problem.

    bounded_radius switches to the bounded-control cell route with running
    cost 0.5|a|^2 + g - P.(b + F a) over the ball of that radius.
    """
    grid = TorusGrid(cell_sizes if not np.isscalar(cell_sizes) else (int(cell_sizes),) * osc.n)
    if bounded_radius is None:
        sys = frozen_data(z, P, osc)
        est = lambda_discount(sys, delta_schedule, grid, tol=tol, max_iter=max_iter)
        return -est.lambda_bar
    sys, op = _bounded_cell_operator(z, P, osc, grid, bounded_radius)
    est = lambda_discount(sys, delta_schedule, grid, tol=tol, max_iter=max_iter,
                          operator=op)
    return -est.lambda_bar


def _bounded_cell_operator(z, P, osc, grid, radius):
    from .scheme import StepOperator

    zt = _zscalar(z, osc.n)
    pt = _zscalar(P, osc.n)
    sys = AffineSystem(
        n=osc.n,
        m=osc.m,
        b=osc.f,
        F=osc.F,
        control=BoundedControl(radius=float(radius), samples=41 if osc.m == 1 else 150),
        l=_FrozenG(osc.g, zt),
        name=f"{osc.name}-cell-bounded",
    )
    controls = control_samples(sys, grid=grid)
    cost_fn = BoundedCellCost(g=osc.g, f=osc.f, F=osc.F, z=zt, P=pt)
    cost = cost_fn(grid.coords(), controls)
    op = StepOperator(sys, grid, controls=controls, cost=cost)
    return sys, op


@dataclass(frozen=True)
class _FrozenG:
    g: object
    z: tuple

    def __call__(self, x):
        return self.g(np.asarray(self.z, dtype=float), np.atleast_2d(x))


# ----------------------------------------------------------------------------
# effective tables (1-D slow variable)


@dataclass
class EffectiveTable:
    z_values: np.ndarray
    p_values: np.ndarray
    values: np.ndarray  # (Z, Q)
    cell_tol: float
    modulus: object  # callable r -> omega(r), sampled from g
    p_lipschitz: float = 0.0
    convexity_defect: float = 0.0

    def __post_init__(self):
        dp = np.diff(self.p_values)
        slopes = np.abs(np.diff(self.values, axis=1)) / dp[None, :]
        self.p_lipschitz = float(slopes.max()) if slopes.size else 0.0
        if self.values.shape[1] >= 3:
            mid = self.values[:, 1:-1]
            avg = 0.5 * (self.values[:, :-2] + self.values[:, 2:])
            self.convexity_defect = float(np.max(mid - avg))

    def interp(self, z, p):
        """Bilinear in (z, P); periodic in z, clamped in P (range errors are
        the caller's job via p_range_check)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        zs, ps, vals = self.z_values, self.p_values, self.values
        nz = zs.size
        span = zs[1] - zs[0] if nz > 1 else 1.0
        u = np.mod(z - zs[0], 1.0) / span
        i0 = np.floor(u).astype(int)
        tz = u - i0
        over = i0 >= nz
        i0 = np.where(over, nz - 1, i0)
        i1 = (i0 + 1) % nz
        pc = np.clip(p, ps[0], ps[-1])
        j0 = np.clip(np.searchsorted(ps, pc, side="right") - 1, 0, ps.size - 2)
        tp = (pc - ps[j0]) / (ps[j0 + 1] - ps[j0])
        v00 = vals[i0, j0]
        v01 = vals[i0, j0 + 1]
        v10 = vals[i1, j0]
        v11 = vals[i1, j0 + 1]
        lo = v00 + tp * (v01 - v00)
        hi = v10 + tp * (v11 - v10)
        return lo + tz * (hi - lo)

    def p_range_check(self, p):
        return bool(np.all(p >= self.p_values[0]) and np.all(p <= self.p_values[-1]))

    def modulus_check(self, slack):
        """All sampled (z, z', P) triples against the continuity modulus of g.

        Returns (ok, worst_margin, triples) with triples rows
        (z, z', P, |dH|, omega)."""
        rows = []
        worst = -np.inf
        nz = self.z_values.size
        for i in range(nz):
            for j in range(i + 1, nz):
                dz = abs(self.z_values[i] - self.z_values[j])
                dz = min(dz, 1.0 - dz)  # torus distance in z
                om = float(self.modulus(dz))
                dh = np.abs(self.values[i] - self.values[j])
                for q, p in enumerate(self.p_values):
                    margin = float(dh[q]) - om
                    rows.append((self.z_values[i], self.z_values[j], p,
                                 float(dh[q]), om))
                    worst = max(worst, margin)
        return worst <= slack, worst, rows


@dataclass(frozen=True)
class SampledModulus:
    """omega(r) = max over sampled z-pairs within distance r of max_x |dg|."""

    distances: tuple
    values: tuple

    def __call__(self, r):
        out = 0.0
        for d, v in zip(self.distances, self.values):
            if d <= r + 1e-12:
                out = max(out, v)
        return out


def sample_modulus(osc, z_values, fast_sizes=256):
    grid = TorusGrid((int(fast_sizes),) * osc.n)
    x = grid.coords()
    gv = [np.asarray(osc.g(_zscalar(z, osc.n), x)) for z in z_values]
    dist, vals = [], []
    for i in range(len(z_values)):
        for j in range(i + 1, len(z_values)):
            dz = abs(z_values[i] - z_values[j])
            dz = min(dz, 1.0 - dz)
            dist.append(float(dz))
            vals.append(float(np.max(np.abs(gv[i] - gv[j]))))
    order = np.argsort(dist)
    return SampledModulus(
        distances=tuple(np.asarray(dist)[order]),
        values=tuple(np.asarray(vals)[order]),
    )


def _cell_job(args):
    z, p, osc, deltas, cell_sizes, tol, bounded_radius = args
    return effective_hamiltonian(z, p, osc, delta_schedule=deltas,
                                 cell_sizes=cell_sizes, tol=tol,
                                 bounded_radius=bounded_radius)


def effective_table(osc, z_samples, p_samples, delta_schedule=DEFAULT_CELL_DELTAS,
                    cell_sizes=64, tol=1e-2, workers=1, bounded_radius=None):
    """Tabulate H_bar over a (z, P) product grid; 1-D slow variable."""
    if osc.n != 1:
        raise SchemeError("effective tables are built for the 1-D slow variable")
    zs = np.asarray(sorted(float(z) for z in z_samples))
    ps = np.asarray(sorted(float(p) for p in p_samples))
    if zs.size == 0 or ps.size == 0:
        raise ValueError("z and P sample grids must be nonempty")
    jobs = [(float(z), float(p), osc, tuple(delta_schedule), cell_sizes, tol,
             bounded_radius) for z in zs for p in ps]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_cell_job, jobs))
    else:
        flat = [_cell_job(j) for j in jobs]
    values = np.asarray(flat).reshape(zs.size, ps.size)
    # per-cell value accuracy proxy: extrapolation residue O(delta_min) plus
    # the fixed-point stopping slack
    lam_tol = max(float(min(delta_schedule)), tol * float(max(delta_schedule)))
    return EffectiveTable(
        z_values=zs,
        p_values=ps,
        values=values,
        cell_tol=float(lam_tol),
        modulus=sample_modulus(osc, zs),
    )


# ----------------------------------------------------------------------------
# oscillating solves


@dataclass(frozen=True)
class _FastWrap:
    """Evaluate a fast field at z/epsilon (periodized)."""

    inner: object
    epsilon: float

    def __call__(self, x):
        return self.inner(wrap(np.atleast_2d(x) / self.epsilon))


@dataclass(frozen=True)
class _TwoScaleG:
    g: object
    epsilon: float

    def __call__(self, x):
        x = np.atleast_2d(x)
        fast = wrap(x / self.epsilon)
        # g couples slow and fast pointwise along the diagonal z -> (z, z/eps)
        return np.array([float(self.g(x[i], fast[i][None, :])) for i in range(x.shape[0])])


def _check_epsilon(epsilon):
    k = 1.0 / epsilon
    if abs(k - round(k)) > 1e-9:
        raise SchemeError(f"epsilon = {epsilon} must be a reciprocal integer for torus runs")


def oscillating_system(osc, epsilon):
    """The single-scale system at scale epsilon: coefficients at z/epsilon."""
    _check_epsilon(epsilon)
    return AffineSystem(
        n=osc.n,
        m=osc.m,
        b=_FastWrap(osc.f, epsilon),
        F=_FastWrap(osc.F, epsilon),
        control=QuadraticControl(),
        l=_TwoScaleG(osc.g, epsilon),
        name=f"{osc.name}-eps{epsilon:g}",
    )


def solve_oscillating_stationary(osc, epsilon, fine_sizes, tol=1e-2,
                                 max_iter=400_000, min_nodes_per_cell=8):
    """Direct fine-grid solve of the discount-one oscillating equation."""
    _check_epsilon(epsilon)
    sizes = fine_sizes if not np.isscalar(fine_sizes) else (int(fine_sizes),) * osc.n
    if min(sizes) * epsilon < min_nodes_per_cell:
        raise SchemeError(
            f"fine grid {sizes} does not resolve epsilon = {epsilon}: "
            f"need >= {min_nodes_per_cell} nodes per cell"
        )
    grid = TorusGrid(sizes)
    sys = oscillating_system(osc, epsilon)
    from .discounted import solve_discounted

    sol = solve_discounted(sys, 1.0, grid, tol=tol, max_iter=max_iter)
    # the solver's unknown obeys delta w + H = 0 with H(x,0) = -l; the
    # oscillating equation is v + 0.5|sigma Dv|^2 + f.Dv = g, i.e. w with l = g
    return sol.w


def solve_oscillating_evolutive(osc, epsilon, fine_sizes, t_end, record_every=10**9):
    """Cauchy problem with oscillating initial data h(z, z/epsilon)."""
    _check_epsilon(epsilon)
    sizes = fine_sizes if not np.isscalar(fine_sizes) else (int(fine_sizes),) * osc.n
    grid = TorusGrid(sizes)
    sys = oscillating_system(osc, epsilon)
    x = grid.coords()
    fast = wrap(x / epsilon)
    w0 = np.array([float(osc.h(x[i], fast[i][None, :])) for i in range(x.shape[0])])
    w0f = ScalarField(grid, w0.reshape(grid.shape))
    return evolve(sys, w0f, t_end, record_every=record_every)


# ----------------------------------------------------------------------------
# effective equation solves (Lax-Friedrichs, 1-D slow variable)


def solve_effective_stationary(table, z_sizes=128, tol=1e-10, max_iter=200_000):
    """Monotone Lax-Friedrichs fixed point for v + H_bar(z, Dv) = 0."""
    grid = TorusGrid((int(z_sizes),))
    h = grid.h[0]
    z = grid.coords()[:, 0]
    alpha = max(table.p_lipschitz, 1e-8)
    rho = h / (h + alpha)  # keeps the update monotone in every node value
    v = np.zeros(grid.size)
    for it in range(max_iter):
        vp = np.roll(v, -1)
        vm = np.roll(v, 1)
        dv = (vp - vm) / (2 * h)
        if not table.p_range_check(dv):
            bad = float(dv[np.argmax(np.abs(dv))])
            raise SchemeError(
                f"effective gradient {bad:.3f} outside the table momentum range "
                f"[{table.p_values[0]}, {table.p_values[-1]}]"
            )
        ham = table.interp(z, dv) - 0.5 * alpha * (vp - 2 * v + vm) / h
        nxt = v - rho * (v + ham)
        resid = float(np.max(np.abs(nxt - v)))
        v = nxt
        if resid <= tol:
            break
    else:
        raise SchemeError("effective stationary solve did not converge")
    return ScalarField(grid, v)


def solve_effective_evolutive(table, v0, t_end, cfl=0.45):
    """Explicit Lax-Friedrichs marching for v_t + H_bar(z, Dv) = 0."""
    grid = v0.grid
    h = grid.h[0]
    z = grid.coords()[:, 0]
    alpha = max(table.p_lipschitz, 1e-8)
    dt = cfl * h / alpha
    steps = max(1, int(np.ceil(t_end / dt)))
    dt = t_end / steps
    v = v0.flat.copy()
    for _ in range(steps):
        vp = np.roll(v, -1)
        vm = np.roll(v, 1)
        dv = (vp - vm) / (2 * h)
        if not table.p_range_check(dv):
            bad = float(dv[np.argmax(np.abs(dv))])
            raise SchemeError(
                f"effective gradient {bad:.3f} outside the table momentum range"
            )
        ham = table.interp(z, dv) - 0.5 * alpha * (vp - 2 * v + vm) / h
        v = v - dt * ham
    return ScalarField(grid, v)


# ----------------------------------------------------------------------------
# effective initial data and convergence studies


@dataclass
class StabilizationReport:
    h_bar: float
    stabilized_value: float
    gap: float
    flagged: bool


def effective_initial_data(osc, z, fast_sizes=128, t_end=5.0, tol=5e-2):
    """min_x h(z, x) plus a driftless stabilization cross-check.

    Runs w_t + 0.5|sigma(x) D_x w|^2 = 0 from w(., 0) = h(z, .) and compares
    the long-time profile with the direct minimum; disagreement beyond tol is
    flagged (not fatal) in the report.
    """
    grid = TorusGrid((int(fast_sizes),) * osc.n)
    x = grid.coords()
    zt = _zscalar(z, osc.n)
    hvals = np.asarray(osc.h(np.asarray(zt), x), dtype=float)
    h_bar = float(hvals.min())
    driftless = AffineSystem(
        n=osc.n,
        m=osc.m,
        b=ConstantDrift((0.0,) * osc.n),
        F=osc.F,
        control=QuadraticControl(),
        l=ConstantZero(),
        name="stabilization",
    )
    w0 = ScalarField(grid, hvals.reshape(grid.shape))
    run = evolve(driftless, w0, t_end, record_every=10**9)
    final = run.final.values
    stab = float(final.mean())
    gap = max(abs(stab - h_bar), float(np.max(np.abs(final - h_bar))))
    return StabilizationReport(h_bar=h_bar, stabilized_value=stab, gap=gap,
                               flagged=bool(gap > tol))


@dataclass(frozen=True)
class ConstantZero:
    def __call__(self, x):
        return np.zeros(np.atleast_2d(x).shape[0])


@dataclass
class HomogenizationStudy:
    epsilons: list
    errors: list
    fine_sizes: list
    mode: str


def convergence_study(osc, epsilons, mode="stationary", table=None,
                      z_samples=None, p_samples=None, nodes_per_cell=32,
                      z_sizes=128, t_eval=0.5, cell_sizes=64,
                      cell_tol=1e-2, workers=1):
    """Error of the oscillating solves against the effective solution.

    Stationary mode compares sup norms of v^eps - v on the coarse z-nodes;
    evolutive mode compares at t = t_eval (past the initial layer) starting
    from h(z, z/eps) against the effective run from min_x h(z, .).
    """
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    if osc.n != 1:
        raise SchemeError("convergence studies drive the 1-D slow variable")
    if table is None:
        if z_samples is None:
            z_samples = np.arange(0.0, 1.0, 1.0 / 9)
        if p_samples is None:
            p_samples = np.linspace(-2.0, 2.0, 33)
        table = effective_table(osc, z_samples, p_samples, cell_sizes=cell_sizes,
                                tol=cell_tol, workers=workers)
    errors = []
    fine_sizes = []
    zg = TorusGrid((int(z_sizes),))
    zc = zg.coords()[:, 0]
    if mode == "stationary":
        v_eff = solve_effective_stationary(table, z_sizes=z_sizes)
        for e in eps:
            nf = int(round(nodes_per_cell / e))
            nf = max(nf, z_sizes)
            nf = int(np.ceil(nf / z_sizes) * z_sizes)  # coarse nodes sit on the fine grid
            v_eps = solve_oscillating_stationary(osc, e, nf,
                                                 min_nodes_per_cell=8)
            stride = nf // z_sizes
            err = float(np.max(np.abs(v_eps.flat[::stride] - v_eff.flat)))
            errors.append(err)
            fine_sizes.append(nf)
    elif mode == "evolutive":
        hb = _hbar_values(osc, zc)
        v0 = ScalarField(zg, hb.reshape(zg.shape))
        v_eff = solve_effective_evolutive(table, v0, t_eval)
        for e in eps:
            nf = int(round(nodes_per_cell / e))
            nf = max(nf, z_sizes)
            nf = int(np.ceil(nf / z_sizes) * z_sizes)
            run = solve_oscillating_evolutive(osc, e, nf, t_eval)
            stride = nf // z_sizes
            err = float(np.max(np.abs(run.final.flat[::stride] - v_eff.flat)))
            errors.append(err)
            fine_sizes.append(nf)
    else:
        raise ValueError(f"unknown study mode {mode!r}")
    return HomogenizationStudy(epsilons=eps, errors=errors, fine_sizes=fine_sizes,
                               mode=mode), table


def _hbar_values(osc, z_nodes, fast_sizes=256):
    grid = TorusGrid((int(fast_sizes),) * osc.n)
    x = grid.coords()
    out = np.empty(z_nodes.size)
    for i, z in enumerate(z_nodes):
        out[i] = float(np.min(osc.h(np.atleast_1d(z), x)))
    return out
