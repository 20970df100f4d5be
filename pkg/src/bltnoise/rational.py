"""Rational approximation of sqrt(1-x) with explicit real poles, and the
factorization factory built on it.

The approximant is a trapezoid discretization of an integral representation
of the square root,

    rt(x) = (2h*sqrt(2)/pi) * sum_{k=-d_minus}^{d_plus}
            [e^{hk} - 2 e^{3hk} / (1 + 2 e^{2hk} - x)],

whose poles 1 + 2e^{2hk} all exceed 1 and whose error on the closed unit disc
is at most 8*exp(-(pi/2)*sqrt(d-2)) for degree d = d_plus + d_minus + 1.
Setting the C-generator to 1/rt (and B's to rt/(1-x)) gives a factorization
whose MaxErr exceeds the optimal Toeplitz value only by an additive term
controlled by that approximation error.

rt(1) = 0 analytically, and the remaining d-1 zeros strictly interlace the
poles (the pole weights are all positive, so rt is decreasing between
consecutive poles), which lets bisection locate every zero with guaranteed
brackets.  At large degree the extreme poles are closer to 1 than float64
spacing; stored roots are then separated by ulp-sized nudges while the
analytically exact residues are carried alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import BltFactorization

_BISECT_ITERS = 90


@dataclass(frozen=True)
class SqrtApproxTerms:
    """Pole expansion of the degree-d approximant to sqrt(1-x).

    ``terms`` holds (center, weight) pairs with all centers > 1 (up to float
    collapse at extreme degrees) and the evaluation rule
    ``rt(x) = constant - sum_k weight_k / (center_k - x)``.
    """

    d_plus: int
    d_minus: int
    h: float
    terms: tuple

    @property
    def degree(self) -> int:
        return self.d_plus + self.d_minus + 1

    @property
    def constant(self) -> float:
        k = np.arange(-self.d_minus, self.d_plus + 1)
        return float(2.0 * self.h * math.sqrt(2.0) / math.pi * np.exp(self.h * k).sum())

    def evaluate(self, x):
        """Evaluate the approximant at (arrays of) complex or real ``x``."""
        x = np.asarray(x)
        centers = np.array([c for c, _ in self.terms])
        weights = np.array([w for _, w in self.terms])
        vals = self.constant - np.sum(
            weights / (centers - x[..., None]), axis=-1
        )
        return vals if vals.shape else vals[()]


def newman_error_bound(d: int) -> float:
    """Uniform error bound 8*exp(-(pi/2)*sqrt(d-2)) on the closed unit disc."""
    if d < 3:
        raise ValueError("d must be >= 3")
    return 8.0 * math.exp(-0.5 * math.pi * math.sqrt(d - 2))


def newman_sqrt(d: int) -> SqrtApproxTerms:
    """Degree-d rational approximation of sqrt(1-x) with real simple poles."""
    if d < 3:
        raise ValueError("d must be >= 3 (two-sided pole ladder needs d_plus >= 1)")
    d_plus = (d - 1) // 2
    d_minus = d - 1 - d_plus
    h = math.pi / math.sqrt(2.0 * d_plus)
    scale = 2.0 * h * math.sqrt(2.0) / math.pi
    k = np.arange(-d_minus, d_plus + 1)
    centers = 1.0 + 2.0 * np.exp(2.0 * h * k)
    weights = scale * 2.0 * np.exp(3.0 * h * k)
    return SqrtApproxTerms(
        d_plus=d_plus,
        d_minus=d_minus,
        h=h,
        terms=tuple(zip(centers.tolist(), weights.tolist())),
    )


def degree_for_error(n: int, mu: float) -> int:
    """Smallest degree meeting both accuracy conditions for horizon n, slack mu.

    Condition (a): d >= 2 + ((12 + 4 ln n)/pi)^2.
    Condition (b): 16 sqrt(n) exp(-(pi/2) sqrt(d-2)) <= mu/(4 + ln n).
    """
    if n < 5:
        raise ValueError("n must be >= 5")
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    ln_n = math.log(n)
    d_a = math.ceil(2.0 + ((12.0 + 4.0 * ln_n) / math.pi) ** 2)
    d_b = math.ceil(
        2.0 + (2.0 / math.pi * math.log(16.0 * math.sqrt(n) * (4.0 + ln_n) / mu)) ** 2
    )
    return int(max(d_a, d_b, 3))


def _nudge_descending(arr: np.ndarray) -> np.ndarray:
    """Force strict decrease by stepping collided entries down one ulp each."""
    out = arr.copy()
    for i in range(1, out.size):
        if out[i] >= out[i - 1]:
            out[i] = np.nextafter(out[i - 1], -np.inf)
    return out


def _interlaced_zeros(h: float, d_plus: int, d_minus: int) -> np.ndarray:
    """Zeros of the approximant other than x = 1, as offsets y = x - 1.

    In the y coordinate the approximant is A - sum_k w_k/(2 e^{2hk} - y) with
    all w_k > 0, hence strictly decreasing between consecutive pole offsets
    2 e^{2hk}; bisection in log y resolves each bracket.
    """
    scale = 2.0 * h * math.sqrt(2.0) / math.pi
    k = np.arange(-d_minus, d_plus + 1)
    offs = 2.0 * np.exp(2.0 * h * k)  # ascending pole offsets
    weights = scale * 2.0 * np.exp(3.0 * h * k)
    A = scale * np.exp(h * k).sum()

    def g(y: float) -> float:
        return A - float(np.sum(weights / (offs - y)))

    zeros = np.empty(offs.size - 1)
    for j in range(offs.size - 1):
        lo = math.log(offs[j])
        hi = math.log(offs[j + 1])
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            if g(math.exp(mid)) > 0.0:
                lo = mid
            else:
                hi = mid
        zeros[j] = math.exp(0.5 * (lo + hi))
    return zeros


def ra_blt_build(d: int, n: int) -> BltFactorization:
    """Factorization whose inverse-C generator is the degree-d approximant
    to sqrt(1-x), normalized to constant term 1.

    The poles give theta_k = 1/(1 + 2 e^{2hk}) with exact residues
    -weight_k * theta_k^2 / rt(0); the zeros give theta_hat (including the
    exact zero at x = 1).  The construction depends on n only through the
    stored target horizon.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    if n < 1:
        raise ValueError("n must be >= 1")
    d_plus = (d - 1) // 2
    d_minus = d - 1 - d_plus
    h = math.pi / math.sqrt(2.0 * d_plus)
    scale = 2.0 * h * math.sqrt(2.0) / math.pi
    k = np.arange(-d_minus, d_plus + 1)
    offs = 2.0 * np.exp(2.0 * h * k)
    weights = scale * 2.0 * np.exp(3.0 * h * k)
    A = scale * np.exp(h * k).sum()
    theta = 1.0 / (1.0 + offs)  # offsets ascend, so theta is descending
    t_raw = A - float(np.sum(weights * theta))
    omega = -(weights * theta * theta) / t_raw
    ys = _interlaced_zeros(h, d_plus, d_minus)
    theta_hat = np.concatenate(([1.0], 1.0 / (1.0 + ys)))
    theta_stored = _nudge_descending(theta)
    theta_hat_stored = _nudge_descending(theta_hat)
    return BltFactorization(
        theta_stored,
        theta_hat_stored,
        n,
        method="ra",
        omega_override=omega,
    )


def rational_sqrt_free(x, d_plus: int, d_minus: int, h: float):
    """Free-step approximant (2h/pi) sum_k x e^{hk}/(x + e^{2hk}) to sqrt(x).

    Test-only building block: the unit-disc approximant equals
    sqrt(2) * rational_sqrt_free((1-x)/2, ...) at the canonical step.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.complex128)
    k = np.arange(-d_minus, d_plus + 1)
    e1 = np.exp(h * k)
    e2 = np.exp(2.0 * h * k)
    vals = (2.0 * h / math.pi) * np.sum(
        x[..., None] * e1 / (x[..., None] + e2), axis=-1
    )
    return vals if vals.shape else vals[()]


def rational_sqrt_free_bound(x, d_plus: int, d_minus: int, h: float):
    """Error bound for the free-step approximant at Re(x) >= 0.

    Splits into discretization terms (depending on the phase of x through
    c = arg(x)/pi) and two truncation terms from the finite ladder.
    """
    x = np.asarray(x, dtype=np.complex128)
    c = np.angle(x) / math.pi
    disc = 1.0 / np.expm1((1.0 - c) * math.pi**2 / h) + 1.0 / np.expm1(
        (1.0 + c) * math.pi**2 / h
    )
    trunc = (2.0 * h / (math.pi * math.expm1(h))) * (
        np.abs(x) * math.exp(-h * d_plus) + math.exp(-h * d_minus)
    )
    vals = 2.0 * np.sqrt(np.abs(x)) * disc + trunc
    return vals if vals.shape else vals[()]


def weighted_parseval_check(f_eval, g_eval, f_coeffs, g_coeffs, tau: float, M: int):
    """Compare (1/2pi) int |f-g|^2 on the circle of radius e^{-tau} against
    the damped coefficient sum sum_k |f_k - g_k|^2 e^{-2 tau k}.

    Returns (quadrature_value, coefficient_sum); for analytic f, g and
    coefficient sequences long enough, the two agree.
    """
    if M < 16:
        raise ValueError("M must be >= 16")
    if tau <= 0:
        raise ValueError("tau must be positive")
    phi = 2.0 * np.pi * np.arange(M) / M
    x = np.exp(1j * phi - tau)
    diff = np.asarray(f_eval(x)) - np.asarray(g_eval(x))
    quad = float(np.mean(np.abs(diff) ** 2))
    fc = np.atleast_1d(np.asarray(f_coeffs, dtype=np.complex128))
    gc = np.atleast_1d(np.asarray(g_coeffs, dtype=np.complex128))
    size = max(fc.size, gc.size)
    fc = np.pad(fc, (0, size - fc.size))
    gc = np.pad(gc, (0, size - gc.size))
    damp = np.exp(-2.0 * tau * np.arange(size))
    csum = float(np.sum(np.abs(fc - gc) ** 2 * damp))
    return quad, csum
