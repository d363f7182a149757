"""Spherical Bessel functions j_l and associated Legendre functions P_l^n.

Legendre convention: no Condon-Shortley phase, so P_1^1(u) = +sqrt(1 - u^2)
and P_2^1(u) = 3 u sqrt(1 - u^2).  Negative orders use
P_l^{-n} = (l - n)! / (l + n)! * P_l^n.  The choice only rescales the
amplitude of a spinning mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAYLOR_THRESHOLD = 1e-2
_TAYLOR_TERMS = 6
_RESCALE_AT = 1e250


@dataclass(frozen=True)
class ModeIndex:
    l: int = 0
    n: int = 0

    def __post_init__(self):
        if int(self.l) != self.l or int(self.n) != self.n:
            raise ValueError("mode indices must be integers")
        if self.l < 0:
            raise ValueError(f"l must be >= 0, got {self.l}")
        if abs(self.n) > self.l:
            raise ValueError(f"|n| must not exceed l, got l={self.l}, n={self.n}")


def double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def _check_order(l) -> int:
    if int(l) != l or l < 0:
        raise ValueError(f"order l must be a non-negative integer, got {l!r}")
    return int(l)


def _taylor(l: int, x: np.ndarray) -> np.ndarray:
    # j_l(x) = x^l/(2l+1)!! * sum_k (-x^2/2)^k / (k! (2l+3)(2l+5)...(2l+2k+1))
    term = np.ones_like(x)
    total = np.ones_like(x)
    w = -0.5 * x * x
    for k in range(1, _TAYLOR_TERMS):
        term = term * w / (k * (2 * l + 2 * k + 1))
        total = total + term
    return x**l / double_factorial(2 * l + 1) * total


def _start_order(l: int, x: np.ndarray) -> np.ndarray:
    return (l + 30 + np.floor(x + 8.0 * np.cbrt(x))).astype(int)


def _miller(l: int, x: np.ndarray) -> np.ndarray:
    """Downward recurrence normalised against the closed forms of j_0 or j_1."""
    start = _start_order(l, x)
    f_hi = np.zeros_like(x)      # f_{k+1}
    f = np.zeros_like(x)         # f_k
    f_l = np.zeros_like(x)
    f_1 = np.zeros_like(x)
    for k in range(int(start.max()), 0, -1):
        f = np.where(start == k, 1.0, f)
        if k == l:
            f_l = f.copy()
        if k == 1:
            f_1 = f.copy()
        # j_{k-1} = (2k+1)/x j_k - j_{k+1}
        f_lo = (2 * k + 1) / x * f - f_hi
        f_hi, f = f, f_lo
        big = np.abs(f) > _RESCALE_AT
        if big.any():
            scale = np.where(big, 1.0 / _RESCALE_AT, 1.0)
            f, f_hi, f_l, f_1 = f * scale, f_hi * scale, f_l * scale, f_1 * scale
    f_0 = f
    if l == 0:
        f_l = f_0
    j0 = np.sin(x) / x
    j1 = np.sin(x) / (x * x) - np.cos(x) / x
    use_j0 = np.abs(j0) >= np.abs(j1)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(use_j0, j0 / f_0, j1 / f_1)
    return f_l * norm


def spherical_bessel_j(l: int, x):
    """Spherical Bessel function of the first kind, j_l(x), for x >= 0.

    Miller's downward recurrence for x >= 1e-2, Taylor series below.
    Accepts scalars or arrays; returns the same shape.
    """
    l = _check_order(l)
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise ValueError("spherical_bessel_j requires x >= 0")
    flat = x_arr.reshape(-1)
    out = np.empty_like(flat)
    small = flat < TAYLOR_THRESHOLD
    if small.any():
        out[small] = _taylor(l, flat[small])
    if (~small).any():
        xs = flat[~small]
        # j_0 is its own normaliser; the recurrence would only reproduce sin(x)/x
        out[~small] = np.sin(xs) / xs if l == 0 else _miller(l, xs)
    out = out.reshape(x_arr.shape)
    return float(out) if np.ndim(x) == 0 else out


def spherical_bessel_j_zero(l: int, index: int = 1, tol: float = 1e-14) -> float:
    """The ``index``-th positive zero of j_l, bracketed on a scan and bisected."""
    l = _check_order(l)
    found = 0
    step = 0.05
    a = step
    fa = spherical_bessel_j(l, a)
    while True:
        b = a + step
        fb = spherical_bessel_j(l, b)
        if fa == 0.0:
            found += 1
            if found == index:
                return a
        elif fa * fb < 0:
            found += 1
            if found == index:
                lo, hi, flo = a, b, fa
                while hi - lo > tol * hi:
                    mid = 0.5 * (lo + hi)
                    fm = spherical_bessel_j(l, mid)
                    if fm == 0.0:
                        return mid
                    if (fm < 0) == (flo < 0):
                        lo, flo = mid, fm
                    else:
                        hi = mid
                return 0.5 * (lo + hi)
        a, fa = b, fb


def associated_legendre(l: int, n: int, u):
    """P_l^n(u) without the Condon-Shortley phase, by upward recurrence in l."""
    l = _check_order(l)
    if int(n) != n or abs(n) > l:
        raise ValueError(f"need |n| <= l, got l={l}, n={n}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(np.abs(u_arr) > 1) or np.any(np.isnan(u_arr)):
        raise ValueError("associated_legendre requires |u| <= 1")
    m = abs(int(n))
    s = np.sqrt((1.0 - u_arr) * (1.0 + u_arr))
    p_prev = double_factorial(2 * m - 1) * s**m
    if l == m:
        result = p_prev
    else:
        p = u_arr * (2 * m + 1) * p_prev
        for ll in range(m + 2, l + 1):
            p_prev, p = p, (u_arr * (2 * ll - 1) * p - (ll + m - 1) * p_prev) / (ll - m)
        result = p
    if n < 0:
        result = result * (math.factorial(l - m) / math.factorial(l + m))
    return float(result) if np.ndim(u) == 0 else np.asarray(result, dtype=float)
