"""Analytic reference eigenvalues via special functions and 1D reduction.

These oracles share no code with the mesh/assembly/iteration modules, so
they can certify the 2D solver independently:

* ``robin_disk_lambda(h)``: on the unit disk the radial mode J0(s r) gives
  the characteristic equation J0(s) - h s J1(s) = 0; the principal
  eigenvalue is s*^2 with s* the unique root below the first zero of J0.
* ``robin_square_lambda(h)``: separation on the unit square reduces to
  cos(w/2) - h w sin(w/2) = 0 per axis; the principal eigenvalue is 2 w*^2.
* ``mixed_annulus_lambda(r0)``: the radial problem -(r u')' = lambda r u
  with u(r0) = 0 and u'(1) = 0, discretized by symmetric second-order
  finite differences on 2000 and 4000 cells plus Richardson extrapolation
  (documented accuracy 1e-8 relative).

Bessel functions are evaluated by the power series for x <= 12 and by
backward (Miller) recurrence with even-order normalization beyond; roots
are located by plain bisection, which trades speed for a guaranteed
bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

BESSEL_X_MAX = 50.0
_SERIES_X_MAX = 12.0


class BracketError(ValueError):
    """Bisection endpoints do not bracket a sign change."""


@dataclass(frozen=True)
class RootBracket:
    """Result of a bisection run: a sign-change interval of width <= tol."""

    lo: float
    hi: float
    f_lo: float
    f_hi: float
    tol: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError("bracket endpoints out of order")
        if self.f_lo * self.f_hi > 0.0:
            raise ValueError("endpoints do not bracket a sign change")

    @property
    def root(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


def bisect(f, lo: float, hi: float, tol: float = 1e-12,
           max_iter: int = 200) -> RootBracket:
    """Bisection of f on [lo, hi] down to interval width tol."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return RootBracket(lo, lo + tol, f_lo, f(lo + tol), tol)
    if f_hi == 0.0:
        return RootBracket(hi - tol, hi, f(hi - tol), f_hi, tol)
    if f_lo * f_hi > 0.0:
        raise BracketError(
            f"no sign change on [{lo:g}, {hi:g}]: f values {f_lo:g}, {f_hi:g}"
        )
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            lo, f_lo = mid - 0.25 * tol, f(mid - 0.25 * tol)
            hi, f_hi = mid + 0.25 * tol, f(mid + 0.25 * tol)
            break
        if f_lo * f_mid < 0.0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return RootBracket(lo, hi, f_lo, f_hi, tol)


def _bessel_series(order: int, x: float) -> float:
    # sum_k (-1)^k (x/2)^(2k+order) / (k! (k+order)!), stable for x <= 12
    q = 0.25 * x * x
    term = 1.0 if order == 0 else 0.5 * x
    total = term
    for k in range(1, 80):
        term *= -q / (k * (k + order))
        total += term
        if abs(term) < 1e-18 * max(1.0, abs(total)):
            break
    return total


def _bessel_miller(x: float) -> tuple:
    # Backward recurrence J_{k-1} = (2k/x) J_k - J_{k+1} from a high order,
    # normalized with J0 + 2 sum J_{2k} = 1.  Start order keeps the seeded
    # tail below 1e-18 relative for x <= 50.
    start = int(x + 20 + 12.0 * x ** (1.0 / 3.0))
    if start % 2:
        start += 1
    jp1, j = 0.0, 1e-300
    j1 = 0.0
    even_sum = 0.0
    for k in range(start, 0, -1):
        jm1 = (2.0 * k / x) * j - jp1
        jp1, j = j, jm1  # now j holds J_{k-1}
        if k - 1 == 1:
            j1 = j
        if (k - 1) % 2 == 0 and k - 1 > 0:
            even_sum += j
        if abs(j) > 1e250:  # rescale to avoid overflow
            jp1 *= 1e-250
            j *= 1e-250
            even_sum *= 1e-250
            j1 *= 1e-250
    j0 = j
    norm = j0 + 2.0 * even_sum
    return j0 / norm, j1 / norm


def bessel_j(order: int, x: float) -> float:
    """Bessel function J0 or J1 on [0, 50], absolute error below 1e-12."""
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order}")
    if not (0.0 <= x <= BESSEL_X_MAX):
        raise ValueError(f"argument must lie in [0, {BESSEL_X_MAX:g}], got {x}")
    if x == 0.0:
        return 1.0 if order == 0 else 0.0
    if x <= _SERIES_X_MAX:
        return _bessel_series(order, x)
    j0, j1 = _bessel_miller(x)
    return j0 if order == 0 else j1


def _j0_first_zero() -> float:
    return bisect(lambda s: bessel_j(0, s), 2.0, 3.0, tol=1e-13).root


def robin_disk_lambda(h_const: float) -> float:
    """Principal eigenvalue on the unit disk with uniform insulation h.

    Returns s*^2 where s* is the unique root of J0(s) - h s J1(s) in
    (0, first zero of J0), located by bisection to 1e-12.
    """
    if h_const <= 0.0:
        raise ValueError(f"insulation value must be positive, got {h_const}")
    j01 = _j0_first_zero()

    def f(s):
        return bessel_j(0, s) - h_const * s * bessel_j(1, s)

    s_star = bisect(f, 0.0, j01, tol=1e-12).root
    return s_star * s_star


def robin_square_lambda(h_const: float) -> float:
    """Principal eigenvalue on the unit square with uniform insulation h.

    Separable: per axis the even mode satisfies cos(w/2) = h w sin(w/2)
    with w in (0, pi); the eigenvalue is 2 w*^2.
    """
    if h_const <= 0.0:
        raise ValueError(f"insulation value must be positive, got {h_const}")

    def f(w):
        return math.cos(0.5 * w) - h_const * w * math.sin(0.5 * w)

    w_star = bisect(f, 0.0, math.pi, tol=1e-12).root
    return 2.0 * w_star * w_star


def annulus_lambda_fd(r0: float, n_cells: int) -> float:
    """Principal eigenvalue of -(r u')'/r = lambda u on (r0, 1).

    Dirichlet at r0, natural (Neumann) condition at 1; symmetric
    second-order compact scheme on a uniform grid of n_cells cells:
    midpoint-flux differences for the stiffness (exact for the linear
    weight r) and the exact tridiagonal weighted mass.  Solved by
    deterministic inverse power iteration on the banded factorization.
    """
    if not (0.0 < r0 < 1.0):
        raise ValueError(f"inner radius r0 must lie in (0, 1), got {r0}")
    if n_cells < 2:
        raise ValueError(f"need at least 2 cells, got {n_cells}")
    dr = (1.0 - r0) / n_cells
    r = r0 + dr * np.arange(n_cells + 1)
    r_half = r0 + dr * (np.arange(n_cells) + 0.5)

    # unknowns u_1 .. u_N (u_0 = 0)
    n = n_cells
    k_main = np.empty(n)
    k_main[: n - 1] = (r_half[:-1] + r_half[1:]) / dr
    k_main[n - 1] = r_half[-1] / dr
    k_off = -r_half[1:] / dr

    # exact integrals of r * hat_i * hat_j per cell
    m_main = np.empty(n)
    m_main[: n - 1] = dr * (r[:n-1] + 6.0 * r[1:n] + r[2:]) / 12.0
    m_main[n - 1] = dr * (r[n - 1] + 3.0 * r[n]) / 12.0
    m_off = dr * (r[1:n] + r[2:]) / 12.0

    def mass_apply(v):
        out = m_main * v
        out[:-1] += m_off * v[1:]
        out[1:] += m_off * v[:-1]
        return out

    # banded Cholesky of the tridiagonal stiffness (lower form)
    ab = np.zeros((2, n))
    ab[0] = k_main
    ab[1, : n - 1] = k_off
    cb = sla.cholesky_banded(ab, lower=True)

    u = np.ones(n)
    lam_old = 0.0
    for _ in range(200):
        w = sla.cho_solve_banded((cb, True), mass_apply(u))
        w /= math.sqrt(float(w @ mass_apply(w)))
        num = float(w @ (k_main * w)) + 2.0 * float(w[:-1] @ (k_off * w[1:]))
        lam = num / float(w @ mass_apply(w))
        u = w
        if abs(lam - lam_old) <= 1e-15 * lam:
            break
        lam_old = lam
    return lam


def mixed_annulus_lambda(r0: float) -> float:
    """Principal mixed eigenvalue of the annulus r0 < r < 1.

    Richardson extrapolation of the second-order 1D scheme on 2000 and
    4000 cells; accuracy about 1e-8 relative.
    """
    lam_coarse = annulus_lambda_fd(r0, 2000)
    lam_fine = annulus_lambda_fd(r0, 4000)
    return (4.0 * lam_fine - lam_coarse) / 3.0
