"""Control-affine system data model and pointwise evaluators.

A system carries drift b, control matrix field F (columns are the control
vector fields), a control specification, and a scalar potential l. Trajectories
follow ydot = -b(y) - F(y) a. Two control regimes:

  * BoundedControl: controls range over the closed ball of radius K in R^m,
    discretized by a deterministic low-dispersion sample set containing 0.
  * QuadraticControl: controls range over all of R^m with running cost
    L(x, a) = 0.5 a^T G(x) a + l(x); the value Hamiltonian is then
    H(x, p) = b(x).p + 0.5 |sigma(x) p|^2 - l(x) with sigma = (F tau)^T,
    G^{-1} = tau tau^T. The sup over a is attained at a* = G^{-1} F^T p; the
    solvers truncate candidate controls to |a| <= truncation radius R and
    report when that truncation binds.

All evaluators are pure, vectorized over points of shape (P, n), and safe to
call concurrently; systems are immutable after construction.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ControlError, GridError

_DISPERSION_1D = 0.1  # target control spacing per unit radius scale, m = 1
_RING_STEP = 0.35  # target radial ring spacing for m = 2 quadratic sampling


@dataclass(frozen=True)
class BoundedControl:
    """Control set A = closed ball B_m(radius); `samples` is a target count."""

    radius: float
    samples: int = 64

    def kind(self):
        return "bounded"


@dataclass(frozen=True)
class QuadraticControl:
    """A = R^m with quadratic cost; g_matrix None means G = identity.

    truncation_radius None lets the solvers pick R from an a-priori bound on
    the optimal controls (see resolve_truncation_radius).
    """

    g_matrix: object = None  # callable (P,n)->(P,m,m), constant if None
    truncation_radius: float = None
    samples: int = 0  # 0 = automatic from the radius

    def kind(self):
        return "quadratic"


@dataclass(frozen=True)
class AffineSystem:
    n: int
    m: int
    b: object  # drift field (P,n)->(P,n)
    F: object  # matrix field (P,n)->(P,n,m)
    control: object
    l: object  # potential (P,n)->(P,)
    name: str = ""

    def drift(self, x):
        return self.b(np.atleast_2d(x))

    def matrix(self, x):
        return self.F(np.atleast_2d(x))

    def potential(self, x):
        return self.l(np.atleast_2d(x))


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x.reshape(1, n), True
    return x, False


def g_inverse_sqrt(sys, x):
    """tau(x) with G^{-1} = tau tau^T (symmetric principal root), (P, m, m)."""
    x2, _ = _as_points(x, sys.n)
    if not isinstance(sys.control, QuadraticControl):
        raise ControlError("tau is defined only for quadratic control")
    if sys.control.g_matrix is None:
        eye = np.eye(sys.m)
        return np.broadcast_to(eye, (x2.shape[0], sys.m, sys.m)).copy()
    g = np.asarray(sys.control.g_matrix(x2), dtype=float)
    vals, vecs = np.linalg.eigh(g)
    if np.any(vals <= 0):
        raise ControlError("G(x) must be symmetric positive definite")
    inv_sqrt = vecs @ (vecs.transpose(0, 2, 1) / np.sqrt(vals)[:, :, None])
    return inv_sqrt


def sigma(sys, x):
    """sigma(x) = (F(x) tau(x))^T, shape (P, m, n); quadratic control only."""
    x2, single = _as_points(x, sys.n)
    if not isinstance(sys.control, QuadraticControl):
        raise ControlError("sigma is defined only for quadratic control")
    f = sys.F(x2)
    tau = g_inverse_sqrt(sys, x2)
    sig = np.einsum("pnm,pmk->pkn", f, tau)
    return sig[0] if single else sig


def hamiltonian(sys, x, p):
    """H(x, p); vectorized over matching leading dimensions of x and p."""
    x2, single = _as_points(x, sys.n)
    p2 = np.asarray(p, dtype=float).reshape(x2.shape)
    if not np.all(np.isfinite(p2)):
        raise GridError("hamiltonian: non-finite momentum")
    bp = np.einsum("pn,pn->p", sys.b(x2), p2)
    lv = sys.l(x2)
    if isinstance(sys.control, QuadraticControl):
        sig = sigma(sys, x2)
        sp = np.einsum("pkn,pn->pk", sig, p2)
        val = bp + 0.5 * np.einsum("pk,pk->p", sp, sp) - lv
    else:
        a = control_samples(sys)
        f = sys.F(x2)
        pfa = np.einsum("pn,pnm,am->pa", p2, f, a)
        run = running_cost(sys, x2, a)  # (A, P)
        val = bp + np.max(pfa - run.T, axis=1)
    return float(val[0]) if single else val


def optimal_control(sys, x, p):
    """Maximizer a* = G^{-1} F^T p of the quadratic-control sup, clipped to R.

    Returns (a, clipped) where clipped flags points whose unclipped maximizer
    exceeded the truncation radius. Bounded control has no closed form; use
    the argmax over its sample set instead.
    """
    x2, single = _as_points(x, sys.n)
    if not isinstance(sys.control, QuadraticControl):
        raise ControlError("optimal_control requires quadratic control; use the sample argmax")
    p2 = np.asarray(p, dtype=float).reshape(x2.shape)
    tau = g_inverse_sqrt(sys, x2)
    ginv = tau @ tau.transpose(0, 2, 1)
    ftp = np.einsum("pnm,pn->pm", sys.F(x2), p2)
    a = np.einsum("pmk,pk->pm", ginv, ftp)
    radius = sys.control.truncation_radius
    if radius is None:
        clipped = np.zeros(a.shape[0], dtype=bool)
    else:
        norms = np.linalg.norm(a, axis=1)
        clipped = norms > radius
        scale = np.where(clipped, radius / np.maximum(norms, 1e-300), 1.0)
        a = a * scale[:, None]
    if single:
        return a[0], bool(clipped[0])
    return a, clipped


def running_cost(sys, x, a):
    """L(x, a) = 0.5 a^T G(x) a + l(x) for each control row of a, shape (A, P)."""
    x2, _ = _as_points(x, sys.n)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lv = sys.l(x2)
    if isinstance(sys.control, QuadraticControl) and sys.control.g_matrix is not None:
        g = np.asarray(sys.control.g_matrix(x2), dtype=float)  # (P, m, m)
        quad = 0.5 * np.einsum("am,pmk,ak->ap", a, g, a)
    else:
        quad = 0.5 * np.sum(a * a, axis=1)[:, None]
    return quad + lv[None, :]


def lagrangian(sys, x, a):
    """Running cost at a single (x, a) or batched x."""
    x2, single = _as_points(x, sys.n)
    out = running_cost(sys, x2, np.asarray(a, dtype=float).reshape(1, sys.m))[0]
    return float(out[0]) if single else out


def dynamics(sys, x, a):
    """State velocity -b(x) - F(x) a."""
    x2, single = _as_points(x, sys.n)
    a = np.asarray(a, dtype=float)
    f = sys.F(x2)
    if a.ndim == 1:
        vel = -sys.b(x2) - np.einsum("pnm,m->pn", f, a)
    else:
        vel = -sys.b(x2) - np.einsum("pnm,pm->pn", f, a)
    return vel[0] if single else vel


# ----------------------------------------------------------------------------
# deterministic control sample sets


def ball_grid(m, radius, target):
    """Deterministic low-dispersion samples of the closed ball B_m(radius).

    Contains the origin and the full-radius shell. The construction keeps the
    per-axis dispersion at or below radius/sqrt(M) for m <= 2 with M the
    returned count (verified in the tests at catalog sizes).
    """
    radius = float(radius)
    if radius <= 0:
        raise ControlError("control radius must be positive")
    if m == 1:
        count = max(int(target), 3)
        if count % 2 == 0:
            count += 1
        return np.linspace(-radius, radius, count).reshape(-1, 1)
    if m == 2:
        rings = max(2, int(np.ceil(np.sqrt(max(target, 1) / np.pi))) + 1)
        pts = [np.zeros(2)]
        for k in range(1, rings + 1):
            r = radius * k / rings
            npts = int(np.ceil(2.0 * np.pi * k))
            ang = 2.0 * np.pi * np.arange(npts) / npts
            pts.extend(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1))
        return np.array(pts)
    # m == 3: cubic lattice intersected with the ball, plus axis poles
    side = max(3, int(np.ceil(target ** (1.0 / 3.0))))
    if side % 2 == 0:
        side += 1
    axis = np.linspace(-radius, radius, side)
    mesh = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    mesh = mesh[np.linalg.norm(mesh, axis=1) <= radius + 1e-12]
    poles = radius * np.concatenate([np.eye(3), -np.eye(3)])
    return np.unique(np.concatenate([mesh, poles]), axis=0)


def per_axis_dispersion(samples, radius, probes=4096):
    """Max over probe points of the ball of the per-axis gap to the nearest sample."""
    m = samples.shape[1]
    rng = np.random.default_rng(12345)  # fixed probe cloud, diagnostic only
    u = rng.normal(size=(probes, m))
    u /= np.linalg.norm(u, axis=1)[:, None]
    rad = radius * rng.uniform(size=probes) ** (1.0 / m)
    cloud = u * rad[:, None]
    worst = 0.0
    for chunk in np.array_split(cloud, max(1, probes // 512)):
        d2 = np.sum((chunk[:, None, :] - samples[None, :, :]) ** 2, axis=-1)
        nearest = np.argmin(d2, axis=1)
        gaps = np.max(np.abs(chunk - samples[nearest]), axis=1)
        worst = max(worst, float(gaps.max()))
    return worst


def resolve_truncation_radius(sys, grid):
    """Truncation radius for quadratic control, from an a-priori control bound.

    Optimal controls scale like |G^{-1} F^T Dw|; Dw is bounded through the
    oscillation of l and the drift size, so R = max(2, 1.5 max|b| + 1.5
    sqrt(2 osc l)) leaves headroom and should never bind at convergence.
    """
    ctl = sys.control
    if ctl.truncation_radius is not None:
        return float(ctl.truncation_radius)
    x = grid.coords()
    bmax = float(np.max(np.linalg.norm(sys.b(x), axis=1)))
    losc = float(np.ptp(sys.l(x)))
    return max(2.0, 1.5 * bmax + 1.5 * np.sqrt(2.0 * losc))


def control_samples(sys, grid=None, radius=None):
    """The deterministic candidate-control set used by the schemes, (M, m)."""
    ctl = sys.control
    if isinstance(ctl, BoundedControl):
        return ball_grid(sys.m, ctl.radius, ctl.samples)
    if radius is None:
        if ctl.truncation_radius is not None:
            radius = float(ctl.truncation_radius)
        elif grid is not None:
            radius = resolve_truncation_radius(sys, grid)
        else:
            raise ControlError("quadratic control needs a radius or a grid to derive one")
    if ctl.samples:
        target = int(ctl.samples)
    elif sys.m == 1:
        target = 2 * int(np.ceil(radius / _DISPERSION_1D)) + 1
    else:
        rings = max(3, int(np.ceil(radius / _RING_STEP)))
        target = int(np.pi * rings * rings)
    return ball_grid(sys.m, radius, target)


# ----------------------------------------------------------------------------
# sampled diagnostics


def estimate_lipschitz(fn, grid, refine=4):
    """Sampled Lipschitz bound of a field by divided differences on a finer grid."""
    from .grid import TorusGrid  # local to avoid cycle at import time

    fine = TorusGrid(tuple(s * refine for s in grid.sizes))
    x = fine.coords()
    vals = np.asarray(fn(x), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    flat = vals.reshape(fine.shape + (-1,))
    worst = 0.0
    for k in range(fine.n):
        d = np.abs(np.roll(flat, -1, axis=k) - flat) / fine.h[k]
        worst = max(worst, float(d.max()))
    return worst


def lipschitz_report(sys, grid, refine=4):
    """Sampled Lipschitz bounds for b, F and l; all must be finite."""
    report = {
        "b": estimate_lipschitz(sys.b, grid, refine),
        "F": estimate_lipschitz(lambda x: sys.F(x).reshape(x.shape[0], -1), grid, refine),
        "l": estimate_lipschitz(sys.l, grid, refine),
    }
    return report


def periodicity_defect(sys, points, shifts=((1,), (2, -1), (-3, 2, 1))):
    """Max evaluator mismatch between x and x + k over integer shifts k."""
    pts = np.atleast_2d(points)
    n = sys.n
    worst = 0.0
    for raw in shifts:
        k = np.array((list(raw) + [0] * n)[:n], dtype=float)
        shifted = pts + k
        worst = max(worst, float(np.max(np.abs(sys.b(pts) - sys.b(shifted)))))
        worst = max(worst, float(np.max(np.abs(sys.F(pts) - sys.F(shifted)))))
        worst = max(worst, float(np.max(np.abs(sys.l(pts) - sys.l(shifted)))))
    return worst
