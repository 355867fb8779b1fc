"""Radial pair potentials, their strength measures and the N/beta scaling family.

A potential is a nonnegative radial profile ``V(r)`` supported in ``[0, R]``.
The scaled family is ``N**(3*beta - 1) * V(N**beta * r)``; ``beta = 1`` gives
``N**2 V(N r)``, the dilute (scattering-length) regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

KINDS = ("square_well", "gaussian_bump", "smooth_bump_table")

# number of uniform samples used for the sup in rho_measure
SUP_SAMPLES = 100_000
QUAD_EPSABS = 1e-10


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class RadialPotential:
    """Compactly supported, nonnegative radial profile.

    ``table`` is an optional ``(r, V)`` pair of sampled values used by the
    ``smooth_bump_table`` kind; without it that kind uses the standard bump
    ``strength * exp(1 - 1/(1 - (r/R)**2))``.
    """

    kind: str
    strength: float
    R: float
    table: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not self.strength >= 0:
            raise ValueError(f"strength must be nonnegative, got {self.strength}")
        if not self.R > 0:
            raise ValueError(f"support radius R must be positive, got {self.R}")
        if self.table is not None:
            r, v = (np.asarray(a, dtype=float) for a in self.table)
            if r.ndim != 1 or r.shape != v.shape or r.size < 4:
                raise ValueError("table must be two 1D arrays of equal length >= 4")
            if np.any(np.diff(r) <= 0) or r[0] != 0.0 or r[-1] > self.R:
                raise ValueError("table radii must increase from 0 and stay within R")
            if np.any(v < 0):
                raise ValueError("tabulated potential must be nonnegative")
            spline = CubicSpline(r, v, bc_type=((1, 0.0), "not-a-knot"))
            object.__setattr__(self, "_spline", (spline, r[-1]))

    @property
    def support(self) -> float:
        return self.R

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.R
        if self.kind == "square_well":
            out = np.where(inside, self.strength, 0.0)
        elif self.kind == "gaussian_bump":
            width = self.R / 3.0
            window = 1.0 - _smoothstep(2.0 * r / self.R - 1.0)
            out = np.where(inside, self.strength * np.exp(-0.5 * (r / width) ** 2) * window, 0.0)
        elif self.table is None:
            t2 = np.where(r < self.R, (r / self.R) ** 2, 0.0)
            out = np.where(r < self.R, self.strength * np.exp(1.0 - 1.0 / (1.0 - t2)), 0.0)
        else:
            spline, r_last = self._spline
            vals = np.clip(spline(np.minimum(r, r_last)), 0.0, None)
            out = np.where(r <= r_last, self.strength * vals, 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ScaledPotential:
    """``N**(3 beta - 1) * base(N**beta * r)``."""

    base: RadialPotential
    N: int
    beta: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")

    @property
    def length_scale(self) -> float:
        return float(self.N) ** self.beta

    @property
    def prefactor(self) -> float:
        return float(self.N) ** (3.0 * self.beta - 1.0)

    @property
    def support(self) -> float:
        return self.base.R / self.length_scale

    @property
    def kind(self) -> str:
        return self.base.kind

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self.prefactor * self.base(r * self.length_scale)
        return out if np.ndim(out) else float(out)


Potential = Union[RadialPotential, ScaledPotential]


def square_well(strength: float, R: float) -> RadialPotential:
    return RadialPotential("square_well", strength, R)


def gaussian_bump(strength: float, R: float) -> RadialPotential:
    return RadialPotential("gaussian_bump", strength, R)


def smooth_bump(strength: float, R: float, table=None) -> RadialPotential:
    return RadialPotential("smooth_bump_table", strength, R, table)


def zero_potential(R: float = 1.0) -> RadialPotential:
    return RadialPotential("square_well", 0.0, R)


def bundled_suite():
    """The three reference potentials: strong well, weak well, smooth bump."""
    return [square_well(2.0, 1.0), square_well(0.02, 1.0), smooth_bump(1.0, 1.0)]


def evaluate(pot: Potential, r):
    """V(r) for r >= 0; zero outside the support."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be nonnegative")
    return pot(r)


def _breakpoints(pot: Potential):
    if isinstance(pot, ScaledPotential):
        base = pot.base
        scale = pot.length_scale
    else:
        base, scale = pot, 1.0
    if base.kind == "gaussian_bump":
        return [0.5 * base.R / scale]
    return []


def radial_integral(pot: Potential, power: int) -> float:
    """int_0^R r**power V(r) dr by adaptive quadrature."""
    R = pot.support
    val, _ = integrate.quad(lambda r: r**power * pot(r), 0.0, R,
                            points=_breakpoints(pot) or None,
                            epsabs=QUAD_EPSABS, epsrel=1e-12, limit=200)
    return float(val)


def rho_measure(pot: Potential) -> float:
    """sup r^2 V(r) + int r V(r) dr (dimensionless strength)."""
    R = pot.support
    r = np.linspace(0.0, R, SUP_SAMPLES)
    sup = float(np.max(r**2 * pot(r)))
    return sup + radial_integral(pot, 1)


def born_coupling(pot: Potential) -> float:
    """b0 = int_{R^3} V = 4 pi int r^2 V(r) dr."""
    return 4.0 * np.pi * radial_integral(pot, 2)
