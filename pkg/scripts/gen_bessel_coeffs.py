#!/usr/bin/env python3
"""Regenerate the Chebyshev tables embedded in kslayers.specfun.

The mid-range kernels for K0 and K1 are Chebyshev fits of the scaled
functions e^x sqrt(x) K_nu(x) on x in [KCHEB_LO, KCHEB_HI], in the affine
variable w = A/x + B chosen so that w(KCHEB_LO) = 1 and w(KCHEB_HI) = -1.
All node values are computed with 60-digit Decimal arithmetic from the
ascending (log-form) power series, so the resulting double-precision
coefficients are correct to the last bit.

Run from the repository root:

    python scripts/gen_bessel_coeffs.py

and paste the printed arrays into src/kslayers/specfun.py.
"""

from decimal import Decimal, getcontext
import math

getcontext().prec = 60

# Euler-Mascheroni to 60 digits
GAMMA = Decimal("0.577215664901532860606512090082402431042159335939923598805767")

KCHEB_LO = Decimal("1.9")
KCHEB_HI = Decimal("10.6")
NNODES = 64
NKEEP = 28


def dec_cos(x: Decimal) -> Decimal:
    i, lasts, s, fact, num, sign = 0, 0, Decimal(1), Decimal(1), Decimal(1), 1
    while s != lasts:
        lasts = s
        i += 2
        fact *= i * (i - 1)
        num *= x * x
        sign *= -1
        s += sign * num / fact
    return s


def i0_dec(x: Decimal) -> Decimal:
    q = x * x / 4
    term = Decimal(1)
    s = Decimal(1)
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        s += term
        if term < Decimal("1e-70") * s:
            return s


def i1_dec(x: Decimal) -> Decimal:
    q = x * x / 4
    term = Decimal(1)
    s = Decimal(1)
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + 1))
        s += term
        if term < Decimal("1e-70") * s:
            return s * x / 2


def k0_dec(x: Decimal) -> Decimal:
    # K0 = -(ln(x/2) + gamma) I0 + sum_{k>=1} H_k q^k / (k!)^2
    q = x * x / 4
    term = Decimal(1)
    h = Decimal(0)
    s = Decimal(0)
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        h += Decimal(1) / k
        add = term * h
        s += add
        if add < Decimal("1e-70") * (abs(s) + 1):
            break
    return -((x / 2).ln() + GAMMA) * i0_dec(x) + s


def k1_dec(x: Decimal) -> Decimal:
    # K1 = ln(x/2) I1 + 1/x - (x/4) sum_{k>=0} (H_k + H_{k+1} - 2 gamma) q^k / (k! (k+1)!)
    q = x * x / 4
    term = Decimal(1)
    hk = Decimal(0)
    hk1 = Decimal(1)
    s = (hk + hk1 - 2 * GAMMA) * term
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + 1))
        hk += Decimal(1) / k
        hk1 += Decimal(1) / (k + 1)
        add = term * (hk + hk1 - 2 * GAMMA)
        s += add
        if abs(add) < Decimal("1e-70") * (abs(s) + 1):
            break
    return (x / 2).ln() * i1_dec(x) + 1 / x - (x / 4) * s


def scaled(fn, x: Decimal) -> Decimal:
    return fn(x) * x.exp() * x.sqrt()


def cheb_fit(fn, n: int = NNODES, keep: int = NKEEP):
    a = 2 / (1 / KCHEB_LO - 1 / KCHEB_HI)
    b = Decimal(1) - a / KCHEB_LO
    pi = Decimal("3.14159265358979323846264338327950288419716939937510582097494")
    nodes = []
    vals = []
    for j in range(n):
        w = dec_cos(pi * (2 * Decimal(j) + 1) / (2 * n))
        x = a / (w - b)
        nodes.append(w)
        vals.append(scaled(fn, x))
    coeffs = []
    for k in range(keep):
        s = Decimal(0)
        for j in range(n):
            s += vals[j] * dec_cos(pi * Decimal(k) * (2 * Decimal(j) + 1) / (2 * n))
        coeffs.append(s * 2 / n)
    return a, b, coeffs


def emit(name: str, coeffs) -> None:
    print(f"{name} = np.array([")
    for c in coeffs:
        print(f"    {float(c)!r},")
    print("])")


def main() -> None:
    a, b, ck0 = cheb_fit(k0_dec)
    _, _, ck1 = cheb_fit(k1_dec)
    print(f"_KCHEB_LO = {float(KCHEB_LO)!r}")
    print(f"_KCHEB_HI = {float(KCHEB_HI)!r}")
    print(f"_KCHEB_A = {float(a)!r}")
    print(f"_KCHEB_B = {float(b)!r}")
    emit("_K0_CHEB", ck0)
    emit("_K1_CHEB", ck1)

    # spot check against an independent high-precision evaluation
    for xf in (2.0, 3.5, 7.75, 10.0):
        x = Decimal(str(xf))
        print(f"# K0({xf}) = {k0_dec(x)}")
        print(f"# K1({xf}) = {k1_dec(x)}")
    print(f"# I0(1) = {i0_dec(Decimal(1))}")
    print(f"# K0(1) = {k0_dec(Decimal(1))}")


if __name__ == "__main__":
    main()
