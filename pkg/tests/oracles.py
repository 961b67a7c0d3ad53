"""Independent oracles for the test suite.

Everything here deliberately avoids the library's evaluation paths:
special functions come from ascending series summed directly (cross-checked
against scipy's cephes builds), boundary-value facts from adaptive
Runge-Kutta shooting, derivatives from finite differences.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy import special

EULER = 0.5772156649015328606


# ---------------------------------------------------------------------------
# series oracles for the modified Bessel pair
# ---------------------------------------------------------------------------

def i0_series(x: float, terms: int = 80) -> float:
    q = 0.25 * x * x
    term, acc = 1.0, 1.0
    for k in range(1, terms):
        term *= q / (k * k)
        acc += term
        if term < 1e-18 * acc:
            break
    return acc


def i1_series(x: float, terms: int = 80) -> float:
    q = 0.25 * x * x
    term, acc = 1.0, 1.0
    for k in range(1, terms):
        term *= q / (k * (k + 1))
        acc += term
        if term < 1e-18 * acc:
            break
    return 0.5 * x * acc


def k0_series(x: float, terms: int = 60) -> float:
    q = 0.25 * x * x
    term, h, acc = 1.0, 0.0, 0.0
    for k in range(1, terms):
        term *= q / (k * k)
        h += 1.0 / k
        acc += term * h
    return -(np.log(0.5 * x) + EULER) * i0_series(x) + acc


def k1_series(x: float, terms: int = 60) -> float:
    q = 0.25 * x * x
    term = 1.0
    hk, hk1 = 0.0, 1.0
    acc = hk + hk1 - 2.0 * EULER
    for k in range(1, terms):
        term *= q / (k * (k + 1))
        hk += 1.0 / k
        hk1 += 1.0 / (k + 1)
        acc += term * (hk + hk1 - 2.0 * EULER)
    return np.log(0.5 * x) * i1_series(x) + 1.0 / x - 0.25 * x * acc


# ---------------------------------------------------------------------------
# shooting oracles for the screened radial equation -u'' - u'/r + u = 0
# ---------------------------------------------------------------------------

def _rhs(r, y):
    return [y[1], -y[1] / r + y[0]]


def _integrate(r0, r1, y0):
    sol = solve_ivp(_rhs, [r0, r1], y0, rtol=1e-12, atol=1e-14,
                    dense_output=True)
    assert sol.success
    return sol


def shoot_two_point(r_left, r_right, v_left, v_right, at=None):
    """Solve the annulus two-point problem by superposing two IVP shots.

    Returns (value, derivative) at ``at`` (default: r_right's left side).
    """
    s1 = _integrate(r_left, r_right, [1.0, 0.0])
    s2 = _integrate(r_left, r_right, [0.0, 1.0])
    a1, a2 = s1.y[0, -1], s2.y[0, -1]
    # v(r) = c1 y1 + c2 y2 with y1(r_left)=1, y2'(r_left)=1
    c1 = v_left
    c2 = (v_right - a1 * v_left) / a2
    at = r_right if at is None else at
    y1 = s1.sol(at)
    y2 = s2.sol(at)
    return (c1 * y1[0] + c2 * y2[0], c1 * y1[1] + c2 * y2[1])


def singular_solution(b, alpha, value=1.0, r0=1e-7):
    """Inner solution with -ln r coefficient b and given value at alpha.

    Shoots the regular and singular basis solutions from r0, seeding the
    singular one with the small-r asymptotics -ln(r/2) - gamma of the
    decaying mode.
    """
    reg = _integrate(r0, alpha, [1.0 + r0**2 / 4, r0 / 2])
    lnpart = -np.log(0.5 * r0) - EULER
    sing = _integrate(r0, alpha, [lnpart, -1.0 / r0])
    c_reg = (value - b * sing.y[0, -1]) / reg.y[0, -1]

    def eval_at(r):
        yr = reg.sol(r)
        ys = sing.sol(r)
        return (c_reg * yr[0] + b * ys[0], c_reg * yr[1] + b * ys[1])

    return eval_at


def one_layer_defect(alpha, b, outer_mode):
    """Reflection defect at a single interface, fully by shooting."""
    inner = singular_solution(b, alpha)
    _, d_left = inner(alpha)
    if outer_mode == "dirichlet_one":
        _, d_right = shoot_two_point(alpha, 1.0, 1.0, 1.0, at=alpha)
    else:
        # impose u'(1) = 0: combine shots from alpha with value 1
        s1 = _integrate(alpha, 1.0, [1.0, 0.0])
        s2 = _integrate(alpha, 1.0, [0.0, 1.0])
        # u = y1 + c y2 with u'(1) = 0
        c = -s1.y[1, -1] / s2.y[1, -1]
        d_right = s1.sol(alpha)[1] + c * s2.sol(alpha)[1]
    return d_left + d_right


def one_layer_bisect(b, outer_mode, lo=0.05, hi=0.995, tol=5e-11):
    grid = np.linspace(lo, hi, 16)
    vals = [one_layer_defect(a, b, outer_mode) for a in grid]
    bracket = None
    for j in range(len(grid) - 1):
        if vals[j] * vals[j + 1] < 0:
            bracket = (grid[j], grid[j + 1])
            break
    assert bracket is not None, "no sign change for the one-layer defect"
    lo, hi = bracket
    flo = one_layer_defect(lo, b, outer_mode)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = one_layer_defect(mid, b, outer_mode)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# oscillatory Bessel for the eigenvalue oracle
# ---------------------------------------------------------------------------

def j1_series(x: float, terms: int = 120) -> float:
    q = 0.25 * x * x
    term = 0.5 * x
    acc = term
    for k in range(1, terms):
        term *= -q / (k * (k + 1))
        acc += term
        if abs(term) < 1e-18 * (abs(acc) + 1e-30):
            break
    return acc


def first_j1_root(lo=3.0, hi=4.5, tol=1e-12) -> float:
    flo = j1_series(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = j1_series(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def fd_second(f, r, h=1e-4):
    return (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h)


def fd_first(f, r, h=1e-6):
    return (f(r + h) - f(r - h)) / (2.0 * h)


def scipy_bessel_reference(x):
    """cephes values for cross-checks (an implementation-independent build)."""
    return special.i0(x), special.i1(x), special.k0(x), special.k1(x)
