"""Bracket-generation certification and minimal-time reachability tables.

The rank check evaluates the control vector fields together with their
iterated commutators (left-normed, up to a requested order) at sample points
and reads the rank off singular values. Reachability discretizes one control
step per edge: from every grid node x and sampled control a the edge

    x -> nearest-node(wrap(x + dt * (-b(x) - F(x) a)))

gets weight dt, and shortest paths give the sampled minimal transfer times.
The per-source runs are independent (csgraph handles them in one call); the
graph is immutable once built.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import ControlError, SchemeError
from .grid import wrap
from .systems import dynamics


def lie_bracket(f, g, x, h_fd=1e-5):
    """[f, g](x) = Dg(x) f(x) - Df(x) g(x) with central-difference Jacobians."""
    x = np.asarray(x, dtype=float)
    n = x.size

    def jac(field):
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = h_fd
            cols.append((np.asarray(field(x + e)) - np.asarray(field(x - e))) / (2 * h_fd))
        return np.stack(cols, axis=-1)

    fx = np.asarray(f(x), dtype=float)
    gx = np.asarray(g(x), dtype=float)
    return jac(g) @ fx - jac(f) @ gx


@dataclass
class BracketReport:
    order_max: int
    sample_points: np.ndarray
    rank_at_point: np.ndarray
    generated: bool
    tolerance: float

    def worst_rank(self):
        return int(self.rank_at_point.min())


def _field_column(sys, i):
    def column(x):
        return sys.F(np.atleast_2d(x))[0, :, i]

    return column


def _bracket_closure(f, g, h_fd):
    def br(x):
        return lie_bracket(f, g, x, h_fd=h_fd)

    return br


def check_sbg(sys, order_max=4, sample_points=None, tol=1e-8, h_fd=1e-5,
              points_per_axis=8):
    """Numerical strong-bracket-generation certificate.

    Builds left-normed commutators of the control fields up to depth
    `order_max` and tests that they span the state space at every sample
    point: rank via singular values above tol * (largest singular value).
    """
    if order_max < 1:
        raise ValueError("order_max must be at least 1")
    n = sys.n
    if sample_points is None:
        axes = [np.arange(points_per_axis) / points_per_axis for _ in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        sample_points = np.stack([m.ravel() for m in mesh], axis=-1)
    sample_points = np.atleast_2d(np.asarray(sample_points, dtype=float))

    base = [_field_column(sys, i) for i in range(sys.m)]
    ranks = np.zeros(sample_points.shape[0], dtype=int)
    for pos, x in enumerate(sample_points):
        vectors = []
        frontier = list(base)
        for fld in frontier:
            v = np.asarray(fld(x), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ControlError(f"field evaluation degenerate at {x}")
            vectors.append(v)
        for _ in range(2, order_max + 1):
            new_frontier = []
            for fld in frontier:
                for i in range(sys.m):
                    br = _bracket_closure(base[i], fld, h_fd)
                    new_frontier.append(br)
                    vectors.append(br(x))
            frontier = new_frontier
        mat = np.stack(vectors, axis=0)
        if not np.all(np.isfinite(mat)):
            raise ControlError(f"bracket evaluation degenerate at {x}")
        svals = np.linalg.svd(mat, compute_uv=False)
        ranks[pos] = int(np.sum(svals > tol * svals[0])) if svals[0] > 0 else 0
    return BracketReport(
        order_max=order_max,
        sample_points=sample_points,
        rank_at_point=ranks,
        generated=bool(np.all(ranks == n)),
        tolerance=tol,
    )


# ----------------------------------------------------------------------------
# minimal-time tables


@dataclass
class TimeTable:
    sources: np.ndarray  # flat node indices
    t_sharp: np.ndarray  # (S, S) times between sampled nodes, inf if unreachable
    S: float  # max over finite entries
    K_used: float
    dt: float
    horizon: float
    all_reachable: bool
    grid: object

    def pair_time(self, i, j):
        return float(self.t_sharp[i, j])


@dataclass
class BtcResult:
    bounded: bool
    S: float
    unreachable_pairs: list


def reach_controls(m, K, radii=None, directions=16):
    """Zero control plus direction fans on a nested ladder of radii.

    Defaults to {K, K/2, K/4}; passing an explicit list makes control sets
    nested across radius enlargements (append a shell to grow K).
    """
    if radii is None:
        radii = [K, K / 2.0, K / 4.0]
    pts = [np.zeros(m)]
    for r in radii:
        if r <= 0:
            raise ControlError("reach radii must be positive")
        if m == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif m == 2:
            ang = 2.0 * np.pi * np.arange(directions) / directions
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        else:
            dirs = np.concatenate([np.eye(m), -np.eye(m)])
        pts.extend(r * dirs)
    return np.array(pts)


def minimal_time_table(sys, K, dt, grid, node_samples=None, horizon=10.0,
                       radii=None, directions=16):
    """Sampled minimal transfer times via one-step node-snapped edges.

    node_samples: flat node indices used as sources and targets (default: a
    coarse sublattice of about 8 nodes per axis). Entries farther than
    `horizon` are flagged unreachable (inf).
    """
    if K <= 0 or dt <= 0 or horizon <= 0:
        raise ValueError("K, dt and horizon must be positive")
    controls = reach_controls(sys.m, K, radii=radii, directions=directions)
    x = grid.coords()
    sizes = np.asarray(grid.sizes)
    rows, cols = [], []
    max_speed = 0.0
    for a in controls:
        vel = dynamics(sys, x, a)
        max_speed = max(max_speed, float(np.max(np.linalg.norm(vel, axis=1))))
        feet = wrap(x + dt * vel)
        idx = np.floor(feet * sizes + 0.5).astype(np.int64) % sizes  # nearest node
        dest = np.ravel_multi_index(tuple(idx.T), grid.sizes)
        src = np.arange(grid.size)
        keep = dest != src  # drop stagnating self-edges
        rows.append(src[keep])
        cols.append(dest[keep])
    diag = float(np.linalg.norm(grid.h))
    if dt * max_speed < diag:
        warnings.warn(
            f"dt*max speed = {dt * max_speed:.3e} below the grid diagonal "
            f"{diag:.3e}; edges may stagnate", RuntimeWarning, stacklevel=2,
        )
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sp.csr_matrix(
        (np.full(rows.size, dt), (rows, cols)), shape=(grid.size, grid.size)
    )
    graph.data[:] = dt  # duplicate edges collapse to a single dt-weight edge

    if node_samples is None:
        node_samples = default_node_samples(grid)
    node_samples = np.asarray(node_samples, dtype=np.int64)
    dist = dijkstra(graph, indices=node_samples, min_only=False)
    table = dist[:, node_samples]
    table = np.where(table <= horizon + 1e-12, table, np.inf)
    finite = table[np.isfinite(table)]
    return TimeTable(
        sources=node_samples,
        t_sharp=table,
        S=float(finite.max()) if finite.size else float("inf"),
        K_used=float(K),
        dt=float(dt),
        horizon=float(horizon),
        all_reachable=bool(np.all(np.isfinite(table))),
        grid=grid,
    )


def default_node_samples(grid, per_axis=8):
    steps = [max(1, s // per_axis) for s in grid.sizes]
    axes = [np.arange(0, s, st) for s, st in zip(grid.sizes, steps)]
    mesh = np.meshgrid(*axes, indexing="ij")
    multi = tuple(m.ravel() for m in mesh)
    return np.ravel_multi_index(multi, grid.sizes)


def btc_bound(table):
    """Bounded-time controllability verdict for a computed table."""
    if table.all_reachable:
        return BtcResult(bounded=True, S=table.S, unreachable_pairs=[])
    bad = []
    srcs = table.sources
    for i in range(len(srcs)):
        for j in range(len(srcs)):
            if not np.isfinite(table.t_sharp[i, j]):
                bad.append((int(srcs[i]), int(srcs[j])))
    return BtcResult(bounded=False, S=float("inf"), unreachable_pairs=bad)
