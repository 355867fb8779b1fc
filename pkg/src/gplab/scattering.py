"""Zero-energy scattering and the Neumann cell problem for radial potentials.

With ``m(r) = r f(r)`` the radial zero-energy equation ``(-Delta + V/2) f = 0``
becomes ``m'' = V m / 2``.  Outside the support ``m`` is affine,
``m = alpha (r - a0)``, which fixes both the normalisation ``f -> 1`` and the
scattering length ``a0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .potentials import Potential, ScaledPotential, born_coupling, rho_measure

MIN_SUPPORT_POINTS = 200
EXTERIOR_POINTS = 400


class BoundStateError(ValueError):
    """The zero-energy solution changed sign: the potential binds."""


class ShootingError(RuntimeError):
    pass


@dataclass
class ScatteringSolution:
    r_grid: np.ndarray
    m_values: np.ndarray
    f_values: np.ndarray
    a0: float
    ode_residual: float
    v_values: np.ndarray
    support: float
    slope: float

    @property
    def w_values(self):
        return 1.0 - self.f_values

    @property
    def interior(self):
        """Index slice of the nodes in ``[0, support]``."""
        return slice(0, int(np.searchsorted(self.r_grid, self.support, side="right")))


def _rk4_linear(v_left, v_mid, v_right, h, energy, u0=0.0, p0=1.0):
    """RK4 for ``u'' = (v/2 - energy) u`` with per-interval potential samples.

    Returns arrays ``u``, ``u'`` on the nodes.
    """
    n = len(v_left)
    u = np.empty(n + 1)
    p = np.empty(n + 1)
    u[0], p[0] = u0, p0
    a_left = (0.5 * np.asarray(v_left) - energy).tolist()
    a_mid = (0.5 * np.asarray(v_mid) - energy).tolist()
    a_right = (0.5 * np.asarray(v_right) - energy).tolist()
    uu, pp = u0, p0
    half = 0.5 * h
    for i in range(n):
        am = a_mid[i]
        k1u, k1p = pp, a_left[i] * uu
        k2u, k2p = pp + half * k1p, am * (uu + half * k1u)
        k3u, k3p = pp + half * k2p, am * (uu + half * k2u)
        k4u, k4p = pp + h * k3p, a_right[i] * (uu + h * k3u)
        uu = uu + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        pp = pp + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        u[i + 1] = uu
        p[i + 1] = pp
    return u, p


def _interior_samples(pot: Potential, support: float, step: float):
    n_in = max(int(math.ceil(support / step - 1e-9)), 1)
    if n_in < MIN_SUPPORT_POINTS:
        raise ValueError(
            f"step {step:g} resolves the support radius {support:g} with only "
            f"{n_in} points; at least {MIN_SUPPORT_POINTS} are required")
    r = np.linspace(0.0, support, n_in + 1)
    h = support / n_in
    # potential is read at min(r, support) so the last interval sees V's inner limit
    v_nodes = np.asarray(pot(np.minimum(r, support)), dtype=float)
    v_mid = np.asarray(pot(r[:-1] + 0.5 * h), dtype=float)
    return r, h, v_nodes, v_mid


def solve_zero_energy(pot: Potential, r_max: float | None = None,
                      step: float | None = None) -> ScatteringSolution:
    """Integrate ``m'' = V m / 2`` from ``m(0)=0, m'(0)=1`` and extract ``a0``.

    Defaults: ``r_max = 4 R`` and ``step = 1e-4 R``.
    """
    support = pot.support
    if r_max is None:
        r_max = 4.0 * support
    if step is None:
        step = 1e-4 * support
    if not r_max > support:
        raise ValueError(f"r_max={r_max:g} must exceed the support radius {support:g}")
    if not step > 0:
        raise ValueError("step must be positive")

    r_in, h, v_nodes, v_mid = _interior_samples(pot, support, step)
    m_in, p_in = _rk4_linear(v_nodes[:-1], v_mid, v_nodes[1:], h, 0.0)

    n_out = max(int(math.ceil((r_max - support) / step)), EXTERIOR_POINTS)
    r_out = np.linspace(support, r_max, n_out + 1)[1:]
    # V vanishes outside the support, so m is exactly affine there
    m_out = m_in[-1] + p_in[-1] * (r_out - support)

    r = np.concatenate([r_in, r_out])
    m = np.concatenate([m_in, m_out])
    v = np.concatenate([v_nodes, np.zeros_like(r_out)])

    ext = r >= support
    if not (np.any(v_nodes) or np.any(v_mid)):
        # m = r exactly; integration and fit would only add roundoff
        slope, a0 = 1.0, 0.0
        m = r.copy()
        m_in, p_in = r_in.copy(), np.ones_like(r_in)
    else:
        slope, intercept = np.polyfit(r[ext], m[ext], 1)
        a0 = -intercept / slope
    if np.any(m[1:] <= 0) or slope <= 0:
        raise BoundStateError("zero-energy solution crosses zero: potential is in the bound-state regime")

    f = np.empty_like(m)
    f[1:] = m[1:] / (slope * r[1:])
    f[0] = 1.0 / slope
    if np.any(f <= 0):
        raise BoundStateError("scattering solution f is not positive")

    # discrete ODE defect: centered difference of the RK4 derivative on the
    # uniform interior block (second-difference of m is roundoff-limited at
    # small steps); the exterior is affine, so its defect vanishes exactly
    d2_in = (p_in[2:] - p_in[:-2]) / (2.0 * h)
    defect_in = np.abs(d2_in - 0.5 * v_nodes[1:-1] * m_in[1:-1])
    residual = float(defect_in.max(initial=0.0) / slope)

    return ScatteringSolution(r_grid=r, m_values=m / slope, f_values=f, a0=float(a0),
                              ode_residual=residual, v_values=v, support=support,
                              slope=float(slope))


@dataclass
class IdentityCheck:
    integral: float
    target: float
    error: float
    relative: bool


def scattering_identity_check(sol: ScatteringSolution, pot: Potential | None = None) -> IdentityCheck:
    """Compare ``int V (1 - w0) dx`` with ``8 pi a0``.

    The error is relative unless ``a0 == 0``, in which case the absolute error
    is reported and ``relative`` is False.
    """
    sl = sol.interior
    r = sol.r_grid[sl]
    if pot is None:
        v = sol.v_values[sl]
    else:
        v = np.asarray(pot(np.minimum(r, sol.support)), dtype=float)
    # r^2 V f = r V m
    integral = 4.0 * np.pi * integrate.simpson(r * v * sol.m_values[sl], x=r)
    target = 8.0 * np.pi * sol.a0
    if target == 0.0:
        return IdentityCheck(integral, target, abs(integral), relative=False)
    return IdentityCheck(integral, target, abs(integral - target) / target, relative=True)


def born_bound_check(sol: ScatteringSolution, pot: Potential):
    """``(a0, b0 / 8 pi, a0 <= b0 / 8 pi)``."""
    born = born_coupling(pot) / (8.0 * np.pi)
    return sol.a0, born, bool(sol.a0 <= born + 1e-12)


@dataclass
class BoundReport:
    """Smallest constants realising the pointwise bounds on ``w``."""

    N: int
    a: float
    rho: float
    min_f: float
    c_lower: float  # 1 - c rho <= 1 - w
    max_f: float
    exterior_deviation: float  # max |w(x)|x| - a| outside the support
    c_grad_a: float  # |grad w| <= c a / |x|^2
    c_grad_rho: float  # |grad w| <= c rho / |x|
    c_hess_rho: float  # |Hess w| <= c rho / |x|^2

    def as_row(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ratio(num, den):
    peak = float(np.max(num, initial=0.0))
    if den == 0:
        return 0.0 if peak == 0 else math.inf
    return peak / den


def verify_w_bounds(sol: ScatteringSolution, pot: Potential, N: int | None = None) -> BoundReport:
    """Empirical constants for the bounds on ``w = 1 - f``.

    If ``pot`` is a ScaledPotential, ``sol`` must be its solution and ``N`` is
    read from it.  Otherwise ``sol`` belongs to the unscaled potential and is
    mapped to ``w(x) = w0(N x)`` for the requested ``N`` (default 1).
    """
    if isinstance(pot, ScaledPotential):
        rho = rho_measure(pot.base)
        N = pot.N
        r, w = sol.r_grid, sol.w_values
        a, support = sol.a0, sol.support
    else:
        rho = rho_measure(pot)
        N = 1 if N is None else int(N)
        r, w = sol.r_grid / N, sol.w_values
        a, support = sol.a0 / N, sol.support / N

    dw = np.gradient(w, r, edge_order=2)
    d2w = np.gradient(dw, r, edge_order=2)
    x = r[1:]
    grad = np.abs(dw[1:])
    hess = np.maximum(np.abs(d2w[1:]), grad / x)
    f = 1.0 - w
    ext = r > support * (1 + 1e-12)
    exterior_dev = float(np.max(np.abs(w[ext] * r[ext] - a), initial=0.0))
    return BoundReport(
        N=N, a=a, rho=rho,
        min_f=float(f.min()), c_lower=_ratio(w, rho), max_f=float(f.max()),
        exterior_deviation=exterior_dev,
        c_grad_a=_ratio(grad * x**2, a),
        c_grad_rho=_ratio(grad * x, rho),
        c_hess_rho=_ratio(hess * x**2, rho),
    )


@dataclass
class NeumannSolution:
    ell: float
    e_ell: float
    a: float
    r_grid: np.ndarray
    omega_values: np.ndarray
    normalization_check: float
    c0: float

    @property
    def eigenvalue_ratio(self) -> float:
        """``e_ell * ell**3 / (3 a)``; tends to 1 as ``a / ell -> 0``."""
        return self.e_ell * self.ell**3 / (3.0 * self.a)


def _exterior(u_s, p_s, r_s, r, energy):
    """Free solution of ``u'' = -energy u`` continued from ``(u_s, p_s)`` at ``r_s``."""
    d = np.asarray(r, dtype=float) - r_s
    if energy == 0.0:
        return u_s + p_s * d, p_s + 0.0 * d
    k = math.sqrt(energy)
    c, s = np.cos(k * d), np.sin(k * d)
    return u_s * c + p_s / k * s, -u_s * k * s + p_s * c


def solve_neumann_cell(pot_scaled: Potential, ell: float, step: float | None = None,
                       n_out: int = 2000) -> NeumannSolution:
    """Lowest radial Neumann eigenpair of ``-Delta + V/2`` on the ball of radius ``ell``.

    ``u = r (1 - omega)`` solves ``-u'' + V u / 2 = e u``; the Neumann condition
    reads ``u'(ell) ell - u(ell) = 0``.  The eigenvalue is bracketed in
    ``[0, 30 a / ell**3]`` and located by a bracketing root finder.
    """
    support = pot_scaled.support
    if not ell > support:
        raise ValueError(f"cell radius {ell:g} must exceed the support radius {support:g}")
    if step is None:
        step = support / 2000
    zero = solve_zero_energy(pot_scaled, r_max=max(ell, 1.5 * support), step=step)
    a = zero.a0
    if a / ell >= 0.5:
        raise ValueError(f"a/ell = {a / ell:.3g} must be below 0.5")

    r_in, h, v_nodes, v_mid = _interior_samples(pot_scaled, support, step)
    r_out = np.linspace(support, ell, n_out + 1)[1:]

    def shoot(e):
        u, p = _rk4_linear(v_nodes[:-1], v_mid, v_nodes[1:], h, e)
        return u, p

    def mismatch(e):
        u, p = shoot(e)
        ue, pe = _exterior(u[-1], p[-1], support, ell, e)
        return float(pe * ell - ue)

    if a == 0.0:
        e_ell = 0.0
    else:
        hi = 10.0 * 3.0 * a / ell**3
        g_lo, g_hi = mismatch(0.0), mismatch(hi)
        if not (g_lo > 0 > g_hi):
            raise ShootingError(
                f"no sign change of the Neumann mismatch on [0, {hi:.6g}]: "
                f"g(0)={g_lo:.3g}, g(hi)={g_hi:.3g}")
        e_ell = optimize.brentq(mismatch, 0.0, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=200)

    u_in, p_in = shoot(e_ell)
    u_out, _ = _exterior(u_in[-1], p_in[-1], support, r_out, e_ell)
    r = np.concatenate([r_in, r_out])
    u = np.concatenate([u_in, u_out])
    g = np.empty_like(u)
    g[1:] = u[1:] / r[1:]
    g[0] = 1.0
    g /= g[-1]
    omega = 1.0 - g
    return NeumannSolution(ell=ell, e_ell=float(e_ell), a=a, r_grid=r, omega_values=omega,
                           normalization_check=float(abs(omega[-1])), c0=float(g.min()))
