"""Named scenario catalog.

Scenarios are built from closed-form trigonometric fields, never from parsed
expressions, so every run is reproducible from a name plus scalar parameters.

Standalone control scenarios (AffineSystem):

    eikonal1d    b = 0, F = 1, G = I, l = c0 + amp cos(2 pi x)
    drift1d      b = (drift,), F = 1, l = amp (1 + cos 2 pi x)
    bounded1d    like eikonal1d but with a bounded control ball of radius K
    grushin2d    f1 = (1, 0), f2 = (0, sin 2 pi x1), optional drift (0, beta)
    highorder2d  f2 = (0, sin^k 2 pi x1): degenerates to order k brackets
    single2d     the single field (1, 0): deliberately not bracket generating

Oscillating-data scenarios (OscillatingScenario) for homogenization:

    osc1d        sigma = 1, f = (f0,), g(z,x) = (1 - cos 2 pi x)(1 + gamma cos 2 pi z),
                 h(z,x) = cos 2 pi x + hz cos 2 pi z
    osc2d        F = I2, f = 0, g(z,x) = (1 - (cos 2 pi x1 + cos 2 pi x2)/2)(1 + gamma cos 2 pi z1)
"""

from dataclasses import dataclass

import numpy as np

from . import fields as ff
from .errors import ConfigError
from .systems import AffineSystem, BoundedControl, QuadraticControl


@dataclass(frozen=True)
class OscillatingScenario:
    """Data (F, f, g, h) of a two-scale problem; fast fields on the unit torus."""

    n: int
    m: int
    F: object
    f: object  # slow-equation drift sampled at the fast variable
    g: object  # g(z, x)
    h: object  # initial data h(z, x) for the evolutive problem
    name: str = ""


def _eikonal1d(c0=1.0, amp=1.0, radius=None, samples=0):
    return AffineSystem(
        n=1,
        m=1,
        b=ff.zero_drift(1),
        F=ff.identity_matrix(1),
        control=QuadraticControl(truncation_radius=radius, samples=int(samples)),
        l=ff.TrigScalar(c0, ((amp, (1,), 0.0),)),
        name="eikonal1d",
    )


def _drift1d(drift=0.5, amp=1.0, radius=None, samples=0):
    return AffineSystem(
        n=1,
        m=1,
        b=ff.ConstantDrift((drift,)),
        F=ff.identity_matrix(1),
        control=QuadraticControl(truncation_radius=radius, samples=int(samples)),
        l=ff.TrigScalar(amp, ((amp, (1,), 0.0),)),
        name="drift1d",
    )


def _bounded1d(c0=1.0, amp=1.0, k=2.0, samples=41):
    return AffineSystem(
        n=1,
        m=1,
        b=ff.zero_drift(1),
        F=ff.identity_matrix(1),
        control=BoundedControl(radius=k, samples=int(samples)),
        l=ff.TrigScalar(c0, ((amp, (1,), 0.0),)),
        name="bounded1d",
    )


def _grushin2d(beta=0.0, radius=None, samples=0):
    return AffineSystem(
        n=2,
        m=2,
        b=ff.ConstantDrift((0.0, beta)),
        F=ff.GrushinMatrix(power=1),
        control=QuadraticControl(truncation_radius=radius, samples=int(samples)),
        l=ff.TrigScalar(1.0, ((0.5, (1, 0), 0.0), (0.5, (0, 1), 0.0))),
        name="grushin2d",
    )


def _highorder2d(k=2, beta=0.0, radius=None, samples=0):
    return AffineSystem(
        n=2,
        m=2,
        b=ff.ConstantDrift((0.0, beta)),
        F=ff.GrushinMatrix(power=int(k)),
        control=QuadraticControl(truncation_radius=radius, samples=int(samples)),
        l=ff.TrigScalar(1.0, ((0.5, (1, 0), 0.0), (0.5, (0, 1), 0.0))),
        name="highorder2d",
    )


def _single2d(radius=None, samples=0):
    return AffineSystem(
        n=2,
        m=1,
        b=ff.zero_drift(2),
        F=ff.SingleColumnMatrix((1.0, 0.0)),
        control=QuadraticControl(truncation_radius=radius, samples=int(samples)),
        l=ff.TrigScalar(1.0, ((0.5, (1, 0), 0.0),)),
        name="single2d",
    )


def _osc1d(gamma=0.5, f0=0.0, hz=0.0):
    return OscillatingScenario(
        n=1,
        m=1,
        F=ff.identity_matrix(1),
        f=ff.ConstantDrift((f0,)),
        g=ff.ProductOsc(
            base=ff.TrigScalar(1.0, ((-1.0, (1,), 0.0),)),
            mod=ff.TrigScalar(1.0, ((gamma, (1,), 0.0),)),
        ),
        h=ff.SumOsc(
            fast=ff.TrigScalar(0.0, ((1.0, (1,), 0.0),)),
            slow=ff.TrigScalar(0.0, ((hz, (1,), 0.0),)),
        ),
        name="osc1d",
    )


def _osc2d(gamma=0.5):
    return OscillatingScenario(
        n=2,
        m=2,
        F=ff.identity_matrix(2),
        f=ff.zero_drift(2),
        g=ff.ProductOsc(
            base=ff.TrigScalar(1.0, ((-0.5, (1, 0), 0.0), (-0.5, (0, 1), 0.0))),
            mod=ff.TrigScalar(1.0, ((gamma, (1, 0), 0.0),)),
        ),
        h=ff.SumOsc(
            fast=ff.TrigScalar(0.0, ((1.0, (1, 0), 0.0),)),
            slow=ff.TrigScalar(0.0, ()),
        ),
        name="osc2d",
    )


_SYSTEMS = {
    "eikonal1d": (_eikonal1d, {"c0": 1.0, "amp": 1.0, "radius": None, "samples": 0}),
    "drift1d": (_drift1d, {"drift": 0.5, "amp": 1.0, "radius": None, "samples": 0}),
    "bounded1d": (_bounded1d, {"c0": 1.0, "amp": 1.0, "k": 2.0, "samples": 41}),
    "grushin2d": (_grushin2d, {"beta": 0.0, "radius": None, "samples": 0}),
    "highorder2d": (_highorder2d, {"k": 2, "beta": 0.0, "radius": None, "samples": 0}),
    "single2d": (_single2d, {"radius": None, "samples": 0}),
}

_OSC = {
    "osc1d": (_osc1d, {"gamma": 0.5, "f0": 0.0, "hz": 0.0}),
    "osc2d": (_osc2d, {"gamma": 0.5}),
}

SYSTEM_NAMES = tuple(sorted(_SYSTEMS))
OSC_NAMES = tuple(sorted(_OSC))
# scenarios expected to pass the bracket-generation check, used by sweep drivers
SBG_TRUE = ("eikonal1d", "drift1d", "bounded1d", "grushin2d", "highorder2d")


def scenario_defaults(name):
    if name in _SYSTEMS:
        return dict(_SYSTEMS[name][1])
    if name in _OSC:
        return dict(_OSC[name][1])
    raise ConfigError(f"unknown scenario {name!r}; choose from {SYSTEM_NAMES + OSC_NAMES}")


def build_system(name, **params):
    """Instantiate a standalone control scenario by name."""
    if name not in _SYSTEMS:
        raise ConfigError(f"unknown system scenario {name!r}; choose from {SYSTEM_NAMES}")
    builder, defaults = _SYSTEMS[name]
    merged = dict(defaults)
    for key, val in params.items():
        if key not in defaults:
            raise ConfigError(f"scenario {name!r} has no parameter {key!r}")
        merged[key] = val
    return builder(**merged)


def build_oscillating(name, **params):
    """Instantiate an oscillating-data scenario by name."""
    if name not in _OSC:
        raise ConfigError(f"unknown oscillating scenario {name!r}; choose from {OSC_NAMES}")
    builder, defaults = _OSC[name]
    merged = dict(defaults)
    for key, val in params.items():
        if key not in defaults:
            raise ConfigError(f"scenario {name!r} has no parameter {key!r}")
        merged[key] = val
    return builder(**merged)


def is_oscillating(name):
    return name in _OSC
