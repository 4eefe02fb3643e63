"""The discrete finite-horizon value semigroup and the Cauchy-problem driver.

One step costs dt of running time:

    (T_dt phi)(x) = min_a [ dt L(x,a) + I[phi](x + dt(-b(x) - F(x)a)) ]

and the Cauchy solution of w_t + H(x, Dw) = 0, w(.,0) = w0 is T_t w0. Steps
are sequential; the node updates inside a step are independent. The step is
nodewise nondecreasing in phi and commutes exactly with composition on
step-aligned times (identical operation sequences), and with constant shifts
up to roundoff.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SchemeError
from .grid import ScalarField
from .scheme import as_field, operator_for


@dataclass
class Evolution:
    """Recorded snapshots of a Cauchy run; snapshot 0 is the initial datum."""

    times: list
    snapshots: list
    dt: float

    def at(self, t):
        for tt, snap in zip(self.times, self.snapshots):
            if abs(tt - t) <= 1e-12 * max(1.0, abs(t)):
                return snap
        raise KeyError(f"no snapshot recorded at t = {t}")

    @property
    def final(self):
        return self.snapshots[-1]

    def bound_defect(self, sup_l):
        """Max violation of |w(.,t)| <= t sup|l| + sup|w0| over the record."""
        w0 = float(np.max(np.abs(self.snapshots[0].values)))
        worst = 0.0
        for t, snap in zip(self.times, self.snapshots):
            bound = t * sup_l + w0
            worst = max(worst, float(np.max(np.abs(snap.values))) - bound)
        return worst


def semigroup_step(sys, phi, dt=None, operator=None):
    """One step of the value semigroup applied to the field phi."""
    op = operator if operator is not None else operator_for(sys, phi.grid, dt=dt)
    return as_field(phi.grid, op.apply(phi.flat))


def evolve(sys, w0, t_end, dt=None, record_every=1, operator=None):
    """Repeated semigroup steps from w0 up to t_end; snapshots are deep copies.

    dt is adjusted downward to divide t_end exactly so the reported times are
    step aligned.
    """
    if t_end <= 0:
        raise SchemeError("t_end must be positive")
    grid = w0.grid
    if operator is not None:
        op = operator
        ratio = t_end / op.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise SchemeError(f"t_end = {t_end} is not a multiple of dt = {op.dt}")
        steps = int(round(ratio))
        dt_run = op.dt
    else:
        op = operator_for(sys, grid, dt=dt)
        steps = int(np.ceil(round(t_end / op.dt, 9)))
        dt_run = t_end / steps
        if abs(dt_run - op.dt) > 1e-12 * op.dt:
            op = operator_for(sys, grid, dt=dt_run)
    record_every = max(1, int(record_every))
    w = w0.flat.copy()
    times = [0.0]
    snaps = [ScalarField(grid, w0.values)]
    for k in range(1, steps + 1):
        w = op.apply(w)
        if k % record_every == 0 or k == steps:
            times.append(k * dt_run)
            snaps.append(as_field(grid, w.copy()))
    return Evolution(times, snaps, dt_run)


def apply_semigroup(op, phi_flat, steps, shift_per_step=0.0):
    """T applied `steps` times, optionally subtracting a constant per step."""
    w = phi_flat.copy()
    for _ in range(steps):
        w = op.apply(w)
        if shift_per_step:
            w = w - shift_per_step
    return w
