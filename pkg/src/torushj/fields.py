"""Closed-form trigonometric-polynomial field callables.

Every field is a small frozen dataclass evaluating deterministically from its
parameters, Z^n-periodic by construction, and picklable (needed to ship cell
problems to worker processes). Vectorized conventions:

    drift/vector field : (P, n) -> (P, n)
    matrix field       : (P, n) -> (P, n, m)
    scalar field       : (P, n) -> (P,)
"""

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ConstantDrift:
    values: tuple

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.values, dtype=float), x.shape).copy()


def zero_drift(n):
    return ConstantDrift((0.0,) * n)


@dataclass(frozen=True)
class ConstantMatrix:
    """Constant n x m matrix of control vector fields (columns)."""

    entries: tuple  # row-major tuple of tuples

    def __call__(self, x):
        x = np.atleast_2d(x)
        mat = np.asarray(self.entries, dtype=float)
        return np.broadcast_to(mat, (x.shape[0],) + mat.shape).copy()


def identity_matrix(n):
    return ConstantMatrix(tuple(tuple(float(i == j) for j in range(n)) for i in range(n)))


@dataclass(frozen=True)
class GrushinMatrix:
    """Columns (1,0) and (0, sin^k(2 pi x1)) on the 2-torus."""

    power: int = 1

    def __call__(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = np.sin(TWO_PI * x[:, 0]) ** self.power
        return out


@dataclass(frozen=True)
class SingleColumnMatrix:
    """One constant control field, n x 1."""

    column: tuple

    def __call__(self, x):
        x = np.atleast_2d(x)
        col = np.asarray(self.column, dtype=float).reshape(-1, 1)
        return np.broadcast_to(col, (x.shape[0],) + col.shape).copy()


@dataclass(frozen=True)
class TrigScalar:
    """c0 + sum_j amp_j * cos(2 pi k_j . x + phase_j), k_j integer vectors."""

    c0: float = 0.0
    terms: tuple = ()  # ((amp, (k1,..,kn), phase), ...)

    def __call__(self, x):
        x = np.atleast_2d(x)
        out = np.full(x.shape[0], float(self.c0))
        for amp, kvec, phase in self.terms:
            out = out + amp * np.cos(TWO_PI * (x @ np.asarray(kvec, dtype=float)) + phase)
        return out


@dataclass(frozen=True)
class ProductOsc:
    """g(z, x) = base(x) * mod(z): oscillating data with separable slow factor."""

    base: TrigScalar
    mod: TrigScalar

    def __call__(self, z, x):
        x = np.atleast_2d(x)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        mz = self.mod(z)
        scale = float(mz[0]) if mz.shape[0] == 1 else mz
        return self.base(x) * scale


@dataclass(frozen=True)
class SumOsc:
    """h(z, x) = fast(x) + slow(z)."""

    fast: TrigScalar
    slow: TrigScalar

    def __call__(self, z, x):
        x = np.atleast_2d(x)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        sz = self.slow(z)
        shift = float(sz[0]) if sz.shape[0] == 1 else sz
        return self.fast(x) + shift
