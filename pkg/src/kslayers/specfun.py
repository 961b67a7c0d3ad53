"""Modified-Bessel kernels and the canonical radial fundamental pair.

Everything downstream (Green's functions, layered profiles, matched
asymptotics) is built from the four order-zero kernels I0, I1, K0, K1 of
the screened radial Laplacian -u'' - u'/r + u = 0.  They are evaluated
from scratch:

* I0, I1: ascending power series on the whole working range (0, 10.6];
  the terms are positive, so there is no cancellation and the series is
  accurate to a few ulp.
* K0, K1: ascending log-form series for x <= 2 (cancellation there costs
  at most e^4 * eps), and Chebyshev fits of e^x sqrt(x) K_nu(x) in an
  affine 1/x variable for x > 2.  The tables live below and are
  regenerated by scripts/gen_bessel_coeffs.py with 60-digit arithmetic.

Derivatives are always analytic: I0' = I1 and K0' = -K1.

The pair (xi, zeta) is the normalized fundamental system on (0, 1]:
xi = I0 (bounded, increasing, xi'(0) = 0) and zeta = K0 + c_mix * I0
with the constant c_mix fixed once so that zeta'(1) = 0.  The mixing
leaves the Wronskian identity r (xi' zeta - xi zeta') = 1 exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "EULER_MASCHERONI",
    "R_MAX",
    "BesselEval",
    "BesselPair",
    "modified_bessel",
    "xi_zeta",
    "bessel_table",
    "xi_zeta_table",
    "C_MIX",
]

# Euler-Mascheroni constant, 20 digits.
EULER_MASCHERONI = 0.57721566490153286061

# Largest radius the kernels are certified for (the library itself only
# ever evaluates on (0, 1]; the headroom exists for the identity checks).
R_MAX = 10.0

# ---------------------------------------------------------------------------
# Chebyshev tables for e^x sqrt(x) K_nu(x) on [1.9, 10.6], variable
# w = A/x + B.  Generated by scripts/gen_bessel_coeffs.py; truncated where
# the coefficients fall below double-precision relevance.
# ---------------------------------------------------------------------------

_KCHEB_A = 4.629885057471264
_KCHEB_B = -1.4367816091954022

_K0_CHEB = np.array([
    2.4245959152738794,
    -0.025844557688087993,
    0.0010358268967223133,
    -6.657154665035254e-05,
    5.57484115972777e-06,
    -5.563726101056945e-07,
    6.306656946324155e-08,
    -7.88395488843775e-09,
    1.0658487132192617e-09,
    -1.5369408215886893e-10,
    2.3399838149577724e-11,
    -3.732490299810581e-12,
    6.199859782999895e-13,
    -1.0672246485623419e-13,
    1.8962858275262315e-14,
    -3.4666063452009604e-15,
    6.502280829581764e-16,
    -1.2484622935940901e-16,
    2.4488715515330697e-17,
    -4.898767589433882e-18,
    9.978915647467701e-19,
])

_K1_CHEB = np.array([
    2.771717199789552,
    0.08737879198700434,
    -0.001926244176181964,
    0.00010320288337297663,
    -7.888957140388295e-06,
    7.447119726788654e-07,
    -8.128102827552682e-08,
    9.884477148871198e-09,
    -1.3083884283402579e-09,
    1.8553531883538437e-10,
    -2.786472105792168e-11,
    4.394430569990305e-12,
    -7.229350892417137e-13,
    1.2341611973662783e-13,
    -2.177126438404991e-14,
    3.9548016650292005e-15,
    -7.37625018740366e-16,
    1.409135378938249e-16,
    -2.751488409968142e-17,
    5.481476933620193e-18,
    -1.1124020211032635e-18,
])

_SERIES_TINY = 1e-20
_K_SERIES_CUT = 2.0


def _i0_series(x: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    out = np.ones_like(x)
    for k in range(1, 42):
        term = term * q / (k * k)
        out += term
    return out


def _i1_series(x: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    out = np.ones_like(x)
    for k in range(1, 42):
        term = term * q / (k * (k + 1))
        out += term
    return out * (0.5 * x)


def _k0_series(x: np.ndarray, i0: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    h = 0.0
    for k in range(1, 26):
        term = term * q / (k * k)
        h += 1.0 / k
        acc += term * h
    return -(np.log(0.5 * x) + EULER_MASCHERONI) * i0 + acc


def _k1_series(x: np.ndarray, i1: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    hk = 0.0
    hk1 = 1.0
    acc = np.full_like(x, hk + hk1 - 2.0 * EULER_MASCHERONI)
    for k in range(1, 26):
        term = term * q / (k * (k + 1))
        hk += 1.0 / k
        hk1 += 1.0 / (k + 1)
        acc += term * (hk + hk1 - 2.0 * EULER_MASCHERONI)
    return np.log(0.5 * x) * i1 + 1.0 / x - 0.25 * x * acc


def _clenshaw(coeffs: np.ndarray, w: np.ndarray) -> np.ndarray:
    b1 = np.zeros_like(w)
    b2 = np.zeros_like(w)
    for c in coeffs[:0:-1]:
        b1, b2 = 2.0 * w * b1 - b2 + c, b1
    return w * b1 - b2 + 0.5 * coeffs[0]


def _k_cheb(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    w = _KCHEB_A / x + _KCHEB_B
    return _clenshaw(coeffs, w) * np.exp(-x) / np.sqrt(x)


def bessel_table(r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (I0, I1, K0, K1) on an array of radii in (0, R_MAX]."""
    r = np.asarray(r, dtype=float)
    i0 = _i0_series(r)
    i1 = _i1_series(r)
    small = r <= _K_SERIES_CUT
    k0 = np.empty_like(r)
    k1 = np.empty_like(r)
    if np.any(small):
        rs = r[small]
        k0[small] = _k0_series(rs, i0[small])
        k1[small] = _k1_series(rs, i1[small])
    if np.any(~small):
        rl = r[~small]
        k0[~small] = _k_cheb(_K0_CHEB, rl)
        k1[~small] = _k_cheb(_K1_CHEB, rl)
    return i0, i1, k0, k1


def _validate_radius(r: float, upper: float) -> float:
    r = float(r)
    if not np.isfinite(r) or r <= 0.0 or r > upper:
        raise DomainError(f"radius must lie in (0, {upper}], got {r!r}")
    return r


@dataclass(frozen=True)
class BesselEval:
    """Order-zero modified Bessel values and first derivatives at one radius.

    Satisfies the Wronskian identity r * (I0p * K0 - I0 * K0p) = 1.
    """

    r: float
    I0: float
    I0p: float
    K0: float
    K0p: float


@dataclass(frozen=True)
class BesselPair:
    """The normalized fundamental pair (xi, zeta) at one radius in (0, 1].

    xi is bounded and increasing with xi'(0) = 0; zeta blows up like
    -ln r at the origin and has zeta'(1) = 0.  The mixing constant
    defining zeta from the (I0, K0) basis is stored in ``c_mix``.
    """

    r: float
    xi: float
    xip: float
    zeta: float
    zetap: float
    c_mix: float


def modified_bessel(r: float) -> BesselEval:
    """Evaluate I0, K0 and their derivatives at a radius in (0, R_MAX].

    Raises
    ------
    DomainError
        If ``r`` is non-positive, non-finite, or beyond ``R_MAX``.
    """
    r = _validate_radius(r, R_MAX)
    arr = np.array([r])
    i0, i1, k0, k1 = bessel_table(arr)
    return BesselEval(r=r, I0=float(i0[0]), I0p=float(i1[0]),
                      K0=float(k0[0]), K0p=float(-k1[0]))


def _c_mix() -> float:
    i0, i1, k0, k1 = bessel_table(np.array([1.0]))
    return float(k1[0] / i1[0])


# zeta = K0 + C_MIX * I0 kills the derivative at r = 1: C_MIX = K1(1)/I1(1).
C_MIX = _c_mix()


def xi_zeta(r: float) -> BesselPair:
    """Evaluate the fundamental pair (xi, zeta) at a radius in (0, 1]."""
    r = _validate_radius(r, 1.0)
    arr = np.array([r])
    i0, i1, k0, k1 = bessel_table(arr)
    return BesselPair(
        r=r,
        xi=float(i0[0]),
        xip=float(i1[0]),
        zeta=float(k0[0] + C_MIX * i0[0]),
        zetap=float(-k1[0] + C_MIX * i1[0]),
        c_mix=C_MIX,
    )


def xi_zeta_table(r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (xi, xi', zeta, zeta') on radii in (0, 1]."""
    i0, i1, k0, k1 = bessel_table(np.asarray(r, dtype=float))
    return i0, i1, k0 + C_MIX * i0, -k1 + C_MIX * i1
