"""One-step semi-Lagrangian dynamic-programming operator on a torus grid.

The operator precomputes, for every candidate control a and node x, the
periodic multilinear interpolation stencil of the foot point
wrap(x + dt * (-b(x) - F(x) a)) and the running-cost table. One application is

    (U w)(x) = min_a [ dt * L(x, a) + factor * I[w](x + dt * v(x, a)) ]

with factor = 1 - delta * dt for the discounted equation and factor = 1 for the
finite-horizon semigroup. All stencil weights are nonnegative and the control
set is fixed, so the update is nodewise nondecreasing in w (exactly, in
floating point: shared products, fixed summation order, componentwise min) and
commutes with adding constants up to roundoff.

Node updates within one application are independent (vectorized here); callers
double-buffer, reading one iterate and writing the next.
"""

import numpy as np
import scipy.sparse as sp

from .errors import SchemeError
from .grid import ScalarField, wrap
from .systems import control_samples, dynamics, resolve_truncation_radius, running_cost


def interpolation_matrix(grid, points):
    """CSR matrix mapping node values to interpolated values at `points`."""
    cols, wgts = grid.corner_data(points)
    p, ncor = cols.shape
    rows = np.repeat(np.arange(p, dtype=np.int64), ncor)
    mat = sp.csr_matrix(
        (wgts.ravel(), (rows, cols.ravel())), shape=(p, grid.size)
    )
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def stable_dt(speed_axis_max, h, safety=0.5):
    """Default step: safety * h_min / (max sampled speed)."""
    vmax = float(np.max(speed_axis_max))
    hmin = float(np.min(h))
    if vmax <= 0.0:
        return safety * hmin
    return safety * hmin / vmax


class StepOperator:
    """Precomputed one-step operator for a fixed (system, grid, dt, controls)."""

    def __init__(self, sys, grid, dt=None, controls=None, cost=None, cfl_safety=0.5):
        self.sys = sys
        self.grid = grid
        if controls is None:
            controls = control_samples(sys, grid=grid)
        self.controls = np.atleast_2d(np.asarray(controls, dtype=float))
        x = grid.coords()
        m = self.controls.shape[0]
        # per-axis speed extrema over all sampled (x, a)
        speed = np.zeros(grid.n)
        vel = np.empty((m, grid.size, grid.n))
        for j, a in enumerate(self.controls):
            vel[j] = dynamics(sys, x, a)
            speed = np.maximum(speed, np.abs(vel[j]).max(axis=0))
        self.speed_axis_max = speed
        if dt is None:
            dt = stable_dt(speed, grid.h, cfl_safety)
        self.dt = float(dt)
        if self.dt <= 0:
            raise SchemeError("dt must be positive")
        violation = self.dt * speed - grid.h
        if np.any(violation > 1e-12):
            k = int(np.argmax(violation))
            raise SchemeError(
                f"one-cell step bound violated on axis {k}: "
                f"dt*speed = {self.dt * speed[k]:.3e} > h = {grid.h[k]:.3e}"
            )
        feet = wrap(x[None, :, :] + self.dt * vel).reshape(m * grid.size, grid.n)
        self.stencil = interpolation_matrix(grid, feet)
        if cost is None:
            cost = running_cost(sys, x, self.controls)  # (M, N)
        self.cost = self.dt * np.asarray(cost, dtype=float)
        if self.cost.shape != (m, grid.size):
            raise SchemeError(f"cost table must have shape {(m, grid.size)}")
        self._mn = (m, grid.size)

    def apply(self, w_flat, factor=1.0):
        """One monotone sweep; returns the updated flat node array."""
        vals = (self.stencil @ w_flat).reshape(self._mn)
        if factor != 1.0:
            vals = factor * vals
        vals += self.cost
        return vals.min(axis=0)

    def apply_argmin(self, w_flat, factor=1.0):
        """Sweep that also reports the index of the minimizing control."""
        vals = (self.stencil @ w_flat).reshape(self._mn)
        if factor != 1.0:
            vals = factor * vals
        vals += self.cost
        return vals.min(axis=0), vals.argmin(axis=0)


def build_operator(sys, grid, dt=None, controls=None, cfl_safety=0.5):
    return StepOperator(sys, grid, dt=dt, controls=controls, cfl_safety=cfl_safety)


def operator_for(sys, grid, dt=None, radius=None, cfl_safety=0.5):
    """Operator with the scheme's default candidate controls for `sys`."""
    from .systems import QuadraticControl

    if radius is None and isinstance(sys.control, QuadraticControl):
        radius = resolve_truncation_radius(sys, grid)
    controls = control_samples(sys, grid=grid, radius=radius)
    return StepOperator(sys, grid, dt=dt, controls=controls, cfl_safety=cfl_safety)


def as_field(grid, flat):
    return ScalarField(grid, np.asarray(flat).reshape(grid.shape))
