"""Exact combinatorial quantities behind one-step parity learning.

Everything here is computed in exact integer / rational arithmetic and only
converted to binary floating point at the API boundary: the 2**-d factors in
the closed forms destroy float accuracy long before d reaches interesting
sizes.  For very large d a companion log-space view (sign, log-magnitude) is
provided; it is built from the same exact integers, so its documented 1e-10
relative accuracy is conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

__all__ = [
    "ActivationKind",
    "DeltaQuery",
    "binom",
    "alt_binom_sum",
    "alternating_moment_sum",
    "tail_alt_sum_closed",
    "range_alt_sum_closed",
    "delta",
    "delta_exact",
    "delta_sign_log",
    "delta_oracle",
    "a_ladder",
    "a_ladder_exact",
    "a_ladder_sign_log",
    "b_coeff",
    "b_coeff_exact",
    "b_coeff_from_ladder",
    "b_coeff_sign_log",
    "full_parity_bias",
    "almost_full_bias_pair",
    "low_codegree_bias",
]


# ---------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class ActivationKind:
    """ReLU, clipped ReLU with a positive ceiling, or the 0/1 step."""

    tag: Literal["relu", "crelu", "threshold"]
    clip: float = 0.0

    def __post_init__(self) -> None:
        if self.tag not in ("relu", "crelu", "threshold"):
            raise ValueError(f"unknown activation tag {self.tag!r}")
        if self.tag == "crelu" and not self.clip > 0:
            raise ValueError("clipped ReLU needs clip > 0")

    @staticmethod
    def relu() -> "ActivationKind":
        return ActivationKind("relu")

    @staticmethod
    def clipped(clip: float) -> "ActivationKind":
        return ActivationKind("crelu", clip=float(clip))

    @staticmethod
    def threshold() -> "ActivationKind":
        return ActivationKind("threshold")

    def value(self, z):
        """Vectorized activation value."""
        z = np.asarray(z)
        if self.tag == "relu":
            return np.maximum(z, 0.0)
        if self.tag == "crelu":
            return np.clip(z, 0.0, self.clip)
        return (z >= 0).astype(float)

    def derivative(self, z):
        """Vectorized weak derivative; the kink at 0 is closed (value 1)."""
        z = np.asarray(z)
        if self.tag == "relu":
            return (z >= 0).astype(float)
        if self.tag == "crelu":
            return ((z >= 0) & (z < self.clip)).astype(float)
        return np.zeros_like(z, dtype=float)

    def value_fraction(self, z: Fraction) -> Fraction:
        """Exact scalar activation on a rational pre-activation."""
        if self.tag == "relu":
            return z if z > 0 else Fraction(0)
        if self.tag == "crelu":
            clip = Fraction(self.clip)
            if z <= 0:
                return Fraction(0)
            return z if z < clip else clip
        return Fraction(1) if z >= 0 else Fraction(0)


RELU = ActivationKind.relu()


# ---------------------------------------------------------------------------
# binomial sums


def binom(n: int, k: int) -> int:
    """Exact C(n, k); by convention 0 whenever k < 0 or k > n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


def _cnk(n: int, k: int) -> int:
    # internal variant: also tolerates n < 0 by returning 0
    if n < 0 or k < 0 or k > n:
        return 0
    return math.comb(n, k)


def alt_binom_sum(d: int, c: int, c_hi: int, weighted: bool = False) -> int:
    """Signed binomial sum over k in [c, c_hi] by direct summation.

    Returns sum of (-1)^k C(d, k), or of (-1)^k k C(d, k) when ``weighted``.
    The lower endpoint must exceed 1.
    """
    if c <= 1:
        raise ValueError("lower endpoint c must exceed 1")
    if not c <= c_hi <= d:
        raise ValueError("need c <= c_hi <= d")
    total = 0
    for k in range(c, c_hi + 1):
        term = binom(d, k) * (k if weighted else 1)
        total += -term if k % 2 else term
    return total


def tail_alt_sum_closed(d: int, c: int, weighted: bool = False) -> int:
    """Closed form for the tail sum over k in [c, d]."""
    sign = -1 if c % 2 else 1
    if weighted:
        return sign * d * binom(d - 2, c - 2)
    return sign * binom(d - 1, c - 1)


def range_alt_sum_closed(d: int, c: int, c_hi: int, weighted: bool = False) -> int:
    """Closed form for the sum over k in [c, c_hi]."""
    s_lo = -1 if c % 2 else 1
    s_hi = -1 if c_hi % 2 else 1
    if weighted:
        return s_lo * d * binom(d - 2, c - 2) + s_hi * d * binom(d - 2, c_hi - 1)
    return s_lo * binom(d - 1, c - 1) + s_hi * binom(d - 1, c_hi)


def alternating_moment_sum(d: int, power: int) -> int:
    """Full-range sum of (-1)^k C(d, k) k^power; vanishes exactly for power < d."""
    total = 0
    for k in range(d + 1):
        term = binom(d, k) * k**power
        total += -term if k % 2 else term
    return total


# ---------------------------------------------------------------------------
# the delta family


@dataclass(frozen=True)
class DeltaQuery:
    """Arguments of the signed parity/activation coupling.

    d is the input dimension, a the co-degree of the almost-full parity
    (the target is the product of the first d - a coordinates), b the bias.
    """

    d: int
    a: int
    b: float
    act: ActivationKind = RELU

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("dimension d must be at least 2")
        if self.a < 0:
            raise ValueError("co-degree a must be non-negative")
        if 2 * self.a > self.d:
            raise ValueError("co-degree a must not exceed d/2")


def _delta0_exact(d: int, b: Fraction, act: ActivationKind) -> Fraction:
    """Closed form for the a = 0 coupling at dimension d, exact rational."""
    c = math.ceil(Fraction(d - b, 2))
    s1 = -1 if (d + c) % 2 else 1
    lead = (d + b) * _cnk(d - 2, c - 2) - (d - b) * _cnk(d - 2, c - 1)
    total = s1 * lead
    if act.tag == "crelu":
        clip = Fraction(act.clip)
        cp = math.floor(Fraction(d - b + clip, 2))
        s2 = -1 if (d + cp) % 2 else 1
        total = total + s2 * (
            (d + b - clip) * _cnk(d - 2, cp - 1) - (d - b + clip) * _cnk(d - 2, cp)
        )
    return Fraction(total, 2**d)


def delta_exact(q: DeltaQuery) -> Fraction:
    """Exact rational value of the coupling; see :func:`delta`."""
    if q.act.tag == "threshold":
        raise ValueError("no closed form for the threshold activation; use delta_oracle")
    if q.d - q.a < 2:
        raise ValueError("closed form requires d - a >= 2")
    b = Fraction(q.b)
    if q.a == 0:
        return _delta0_exact(q.d, b, q.act)
    # co-degree a > 0 reduces to a 2^-a binomial mixture of a = 0 terms at
    # dimension d - a and shifted biases
    total = Fraction(0)
    for ell in range(q.a + 1):
        total += math.comb(q.a, ell) * _delta0_exact(q.d - q.a, b - q.a + 2 * ell, q.act)
    return total / 2**q.a


def delta(q: DeltaQuery) -> float:
    """Signed expectation coupling the parity sign with the shifted activation.

    For an input drawn uniformly from the hypercube, this is the expectation
    of the parity sign of the first d - a coordinates times
    act(sum of all d coordinates + b).  Exact closed form, converted to float
    on return.
    """
    return float(delta_exact(q))


def _sign_log(fr: Fraction) -> tuple[int, float]:
    if fr == 0:
        return 0, float("-inf")
    sign = 1 if fr > 0 else -1
    return sign, math.log(abs(fr.numerator)) - math.log(fr.denominator)


def delta_sign_log(q: DeltaQuery) -> tuple[int, float]:
    """(sign, log |value|) companion of :func:`delta` for very large d."""
    return _sign_log(delta_exact(q))


def delta_oracle(q: DeltaQuery, mode: Literal["enumerate", "binomial"]) -> float:
    """Independent evaluation of the coupling straight from its definition.

    ``enumerate`` sums over all 2^d hypercube points (d <= 22).  ``binomial``
    groups points by the coordinate sums of the first d - a and the last a
    coordinates, an exact O(d^2) double sum valid for any activation,
    including the threshold.
    """
    d, a, act = q.d, q.a, q.act
    if mode == "enumerate":
        if d > 22:
            raise ValueError("enumeration supports d <= 22 only")
        idx = np.arange(1 << d, dtype=np.uint32)
        ones_first = np.bitwise_count(idx & np.uint32((1 << (d - a)) - 1))
        ones_total = np.bitwise_count(idx)
        # bit value 1 encodes coordinate +1, bit value 0 encodes -1
        pre = 2.0 * ones_total.astype(float) - d + q.b
        sign = np.where((d - a - ones_first) % 2, -1.0, 1.0)
        return float(np.mean(sign * act.value(pre)))
    if mode == "binomial":
        total = Fraction(0)
        b = Fraction(q.b)
        for n1 in range(d - a + 1):
            s = -1 if (d - a - n1) % 2 else 1
            w1 = s * math.comb(d - a, n1)
            for n2 in range(a + 1):
                pre = 2 * (n1 + n2) - d + b
                total += w1 * math.comb(a, n2) * act.value_fraction(pre)
        return float(total / 2**d)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# the difference ladder of central binomial terms


def _ladder_range_check(a: int, d: int, k: int) -> int:
    n = d // 2
    if not (n - d <= k <= n - a):
        raise ValueError(f"k={k} outside admissible range [{n - d}, {n - a}]")
    return n


def a_ladder_exact(
    a: int, d: int, k: int, mode: Literal["recursive", "expanded"] = "recursive"
) -> Fraction:
    n = _ladder_range_check(a, d, k)
    if mode == "recursive":
        if a == 0:
            return Fraction(binom(d, n - k), 2**d)
        return a_ladder_exact(a - 1, d, k, mode) - a_ladder_exact(a - 1, d, k + 1, mode)
    if mode == "expanded":
        total = 0
        for ell in range(a + 1):
            term = math.comb(a, ell) * _cnk(d, n - k - ell)
            total += -term if ell % 2 else term
        return Fraction(total, 2**d)
    raise ValueError(f"unknown mode {mode!r}")


def a_ladder(a: int, d: int, k: int, mode: Literal["recursive", "expanded"] = "recursive") -> float:
    """a-fold difference of normalized binomial slices around the center.

    The order-0 entry is 2^-d C(d, floor(d/2) - k); each level subtracts the
    entry one slot to the right.  Both modes agree exactly.
    """
    return float(a_ladder_exact(a, d, k, mode))


def a_ladder_sign_log(a: int, d: int, k: int) -> tuple[int, float]:
    return _sign_log(a_ladder_exact(a, d, k, "expanded"))


# ---------------------------------------------------------------------------
# bias coefficient of the almost-full coupling


def b_coeff_exact(d: int, c: int, a: int) -> Fraction:
    if d - a - 2 < 0:
        raise ValueError("need d - a - 2 >= 0")
    total = 0
    for ell in range(a + 1):
        term = math.comb(a, ell) * (_cnk(d - a - 2, c - ell - 2) + _cnk(d - a - 2, c - ell - 1))
        total += -term if ell % 2 else term
    sign = -1 if (d - a + c) % 2 else 1
    return Fraction(sign * total, 2**d)


def b_coeff(d: int, c: int, a: int) -> float:
    """Coefficient of the bias in the decomposition of the coupling.

    Its magnitude governs how large the coupling can be made by a benign
    bias dither; decays like d^(-1/2 - ceil(a/2)).
    """
    return float(b_coeff_exact(d, c, a))


def b_coeff_from_ladder(d: int, c: int, a: int) -> Fraction:
    """Same coefficient assembled from two ladder entries (tested identity)."""
    dd = d - a - 2
    n = dd // 2
    sign = -1 if (d - a + c) % 2 else 1
    combo = a_ladder_exact(a, dd, n - c + 2, "expanded") + a_ladder_exact(
        a, dd, n - c + 1, "expanded"
    )
    return Fraction(sign, 2 ** (a + 2)) * combo


def b_coeff_sign_log(d: int, c: int, a: int) -> tuple[int, float]:
    return _sign_log(b_coeff_exact(d, c, a))


# ---------------------------------------------------------------------------
# bias schemes used by the one-step constructions


def full_parity_bias(d: int) -> float:
    """Bias for the full parity: 0 for even d, -1 for odd d."""
    return 0.0 if d % 2 == 0 else -1.0


def almost_full_bias_pair(a: int) -> tuple[float, float]:
    """The two equally likely biases used for co-degree a targets.

    A dither of 0.1 guards against the unlucky biases where the coupling
    itself nearly vanishes while its bias coefficient does not.
    """
    return (float(a + 2), float(a + 2) + 0.1)


def low_codegree_bias(d: int) -> float:
    """Bias for co-degree 1 and 2 targets: -2 for even d, -1 for odd d."""
    return -2.0 if d % 2 == 0 else -1.0
