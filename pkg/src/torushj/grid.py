"""Periodic uniform grids on the flat torus T^n = R^n/Z^n and scalar fields on them.

Coordinates live in [0,1)^n; node j along axis k sits at j/N_k. All interpolation
is periodic multilinear, so nodewise ordering of two fields is preserved at every
query point and constants are reproduced exactly.
"""

import csv

import numpy as np

from .errors import GridError


def wrap(x):
    """Map points of R^n to their torus representative in [0,1)^n.

    The returned point differs from the input by an integer vector per axis.
    Raises GridError on non-finite input.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise GridError("wrap: input contains non-finite coordinates")
    r = np.mod(x, 1.0)
    # x % 1.0 can round to 1.0 for tiny negative x; keep the half-open range.
    return np.where(r >= 1.0, 0.0, r)


class TorusGrid:
    """Uniform periodic grid, N_k nodes along axis k, spacing h_k = 1/N_k."""

    def __init__(self, sizes):
        if np.isscalar(sizes):
            sizes = (int(sizes),)
        sizes = tuple(int(s) for s in sizes)
        if not 1 <= len(sizes) <= 3:
            raise GridError(f"dimension {len(sizes)} unsupported (1 <= n <= 3)")
        if any(s < 4 for s in sizes):
            raise GridError(f"need at least 4 nodes per axis, got {sizes}")
        self.sizes = sizes
        self.n = len(sizes)
        self.shape = sizes
        self.size = int(np.prod(sizes))
        self.h = np.array([1.0 / s for s in sizes])
        self._coords = None

    def __repr__(self):
        return f"TorusGrid(sizes={self.sizes})"

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and other.sizes == self.sizes

    def __hash__(self):
        return hash(self.sizes)

    def axis_coords(self, k):
        return np.arange(self.sizes[k]) * self.h[k]

    def coords(self):
        """All node coordinates, row-major over axes, shape (size, n)."""
        if self._coords is None:
            axes = [self.axis_coords(k) for k in range(self.n)]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._coords = np.stack([m.ravel() for m in mesh], axis=-1)
        return self._coords

    def node_point(self, index):
        """Coordinates of a node given its multi-index."""
        index = np.atleast_1d(np.asarray(index, dtype=int))
        return (index % np.array(self.sizes)) * self.h

    def ravel_index(self, multi):
        return int(np.ravel_multi_index(tuple(np.mod(multi, self.sizes)), self.sizes))

    def locate(self, points):
        """Lower corner index and fractional offset of each point, per axis.

        Returns (i0, t) with i0 integer arrays of shape (P, n), t in [0, 1).
        """
        y = wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        ns = np.asarray(self.sizes, dtype=float)
        u = y * ns  # index-space position; N exact, so nodes land on integers
        i0 = np.floor(u).astype(np.int64)
        t = u - i0
        high = i0 >= np.asarray(self.sizes)
        if np.any(high):  # guard against u == N from rounding
            i0 = np.where(high, np.asarray(self.sizes) - 1, i0)
            t = np.where(high, 1.0, t)
        t = np.clip(t, 0.0, 1.0)
        return i0, t

    def corner_data(self, points):
        """Corner node flat indices and multilinear weights for each point.

        Returns (cols, weights) of shape (P, 2^n). Weights are the plain
        products of one-dimensional hat weights; each row sums to 1 up to
        roundoff and every weight is nonnegative.
        """
        i0, t = self.locate(points)
        p = i0.shape[0]
        ncor = 1 << self.n
        cols = np.empty((p, ncor), dtype=np.int64)
        wgts = np.empty((p, ncor))
        sizes = np.asarray(self.sizes)
        for corner in range(ncor):
            bits = [(corner >> k) & 1 for k in range(self.n)]
            idx = (i0 + np.array(bits)) % sizes
            cols[:, corner] = np.ravel_multi_index(tuple(idx.T), self.sizes)
            w = np.ones(p)
            for k, bit in enumerate(bits):
                w = w * (t[:, k] if bit else (1.0 - t[:, k]))
            wgts[:, corner] = w
        return cols, wgts


class ScalarField:
    """Real values on the nodes of a TorusGrid with periodic interpolation."""

    def __init__(self, grid, values=None):
        self.grid = grid
        if values is None:
            self.values = np.zeros(grid.shape)
        else:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                if values.size == grid.size:
                    values = values.reshape(grid.shape)
                else:
                    raise GridError(
                        f"values shape {values.shape} does not match grid {grid.shape}"
                    )
            self.values = values.copy()

    @classmethod
    def constant(cls, grid, c):
        f = cls(grid)
        f.values.fill(float(c))
        return f

    @classmethod
    def from_function(cls, grid, fn):
        """Sample a callable of node coordinates, fn((P,n)) -> (P,)."""
        vals = np.asarray(fn(grid.coords()), dtype=float)
        return cls(grid, vals.reshape(grid.shape))

    def copy(self):
        return ScalarField(self.grid, self.values)

    @property
    def flat(self):
        return self.values.ravel()

    def interpolate(self, x):
        """Periodic multilinear interpolation at one point or an array of points.

        Evaluated as nested 1-D lerps a + t*(b-a), which reproduces constant
        fields exactly and is exact at nodes whose index-space position is
        floating-point exact.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        i0, t = self.grid.locate(x)
        n = self.grid.n
        sizes = np.asarray(self.grid.sizes)
        # gather the 2^n corner values into shape (2,)*n + (P,)
        corners = np.empty((2,) * n + (i0.shape[0],))
        for corner in range(1 << n):
            bits = [(corner >> k) & 1 for k in range(n)]
            idx = (i0 + np.array(bits)) % sizes
            corners[tuple(bits)] = self.values[tuple(idx.T)]
        out = corners
        for k in range(n - 1, -1, -1):
            lo = np.take(out, 0, axis=k)
            hi = np.take(out, 1, axis=k)
            out = lo + t[:, k] * (hi - lo)
        return float(out[0]) if single else out

    def gradient_nodes(self):
        """Central-difference gradient with periodic wrap at every node, (size, n)."""
        v = self.values
        comps = []
        for k in range(self.grid.n):
            d = (np.roll(v, -1, axis=k) - np.roll(v, 1, axis=k)) / (2.0 * self.grid.h[k])
            comps.append(d.ravel())
        return np.stack(comps, axis=-1)

    def gradient_at(self, index):
        """Gradient at a single node given by its multi-index."""
        index = tuple(np.atleast_1d(np.asarray(index, dtype=int)))
        g = np.empty(self.grid.n)
        for k in range(self.grid.n):
            up = list(index)
            dn = list(index)
            up[k] = (up[k] + 1) % self.grid.sizes[k]
            dn[k] = (dn[k] - 1) % self.grid.sizes[k]
            g[k] = (self.values[tuple(up)] - self.values[tuple(dn)]) / (2.0 * self.grid.h[k])
        return g

    def min(self):
        return float(self.values.min())

    def max(self):
        return float(self.values.max())

    def osc(self):
        return float(self.values.max() - self.values.min())

    def __add__(self, other):
        out = self.copy()
        out.values = out.values + (other.values if isinstance(other, ScalarField) else other)
        return out

    def __sub__(self, other):
        out = self.copy()
        out.values = out.values - (other.values if isinstance(other, ScalarField) else other)
        return out


def write_field_csv(field, path):
    """Write a field as rows `i1,...,in,value`, row-major, 17 significant digits."""
    grid = field.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{k + 1}" for k in range(grid.n)] + ["value"])
        flat = field.flat
        for pos, multi in enumerate(np.ndindex(grid.shape)):
            writer.writerow([*multi, format(flat[pos], ".17g")])


def read_field_csv(path):
    """Read a field written by write_field_csv; grid sizes inferred from indices."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "value" or any(
            h != f"i{k + 1}" for k, h in enumerate(header[:-1])
        ):
            raise GridError(f"{path}: malformed field CSV header {header!r}")
        n = len(header) - 1
        rows = [(tuple(int(c) for c in row[:n]), float(row[n])) for row in reader if row]
    if not rows:
        raise GridError(f"{path}: empty field CSV")
    sizes = tuple(max(r[0][k] for r in rows) + 1 for k in range(n))
    grid = TorusGrid(sizes)
    if len(rows) != grid.size:
        raise GridError(f"{path}: expected {grid.size} rows, found {len(rows)}")
    values = np.full(sizes, np.nan)
    for multi, val in rows:
        values[multi] = val
    if np.any(np.isnan(values)):
        raise GridError(f"{path}: duplicate or missing node rows")
    return ScalarField(grid, values)
