"""Gradient-alignment evaluators.

The alignment of an initialization against a target is the expected squared
norm of the difference between the population gradient under true labels and
under random +-1 labels.  For two families of initializations the
per-coordinate values reduce to alternating binomial sums against bivariate
Gaussian kernels and are computed exactly here; everything else is estimated
by Monte Carlo with a bias-free paired-batch estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import mpmath as mp
import numpy as np

from .exactcomb import ActivationKind
from .gaussiankit import (
    BivariateQuery,
    alternating_kernel_sum,
    lambda_cdf,
    relu_cross_moment,
    _mp_relu_kernel,
    _mp_step_kernel,
)
from .nets import (
    InitSpec,
    LossKind,
    NetParams,
    NetworkSpec,
    ResourceLimitError,
    TargetSpec,
    flatten_grads,
    loss_grad,
    sample_net,
)

__all__ = [
    "GaussianGalQuery",
    "PerturbedGalQuery",
    "GalResult",
    "gal_gaussian_coord",
    "gal_gaussian_total",
    "gal_perturbed_exact",
    "gal_mc",
    "junk_flow_run",
    "gaussian_theory_net",
]


@dataclass(frozen=True)
class GaussianGalQuery:
    """Two-layer ReLU network with N(0, 1/d) rows, N(0, sigma_b^2) biases and
    N(0, 1/n) output weights, against the parity of the first d - a inputs."""

    d: int
    a: int = 0
    sigma_b: float = 0.0
    n: int = 1

    def __post_init__(self) -> None:
        if self.d < 2 or self.d > 2000:
            raise ValueError("d must lie in [2, 2000]")
        if not 0 <= 2 * self.a <= self.d:
            raise ValueError("co-degree a must lie in [0, d/2]")
        if self.sigma_b < 0:
            raise ValueError("sigma_b must be non-negative")
        if self.n < 1:
            raise ValueError("width n must be positive")


@dataclass(frozen=True)
class PerturbedGalQuery:
    """Sign-plus-Gaussian rows at scale 1/sqrt(d); mu is the sign magnitude
    relative to the unit-variance Gaussian part."""

    d: int
    mu: float

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")


@dataclass(frozen=True)
class GalResult:
    """Alignment value with its provenance; std_err is 0 for exact values."""

    value: float
    method: Literal["exact", "monte_carlo"]
    std_err: float = 0.0


def _gaussian_coord_sum(d: int, s_size: int, sigma_b: float, kernel) -> float:
    sig2 = sigma_b * sigma_b

    def rho_of_t(t: "mp.mpf") -> "mp.mpf":
        raw = (d - 2 * t) / d + sig2
        r = raw / (1 + sig2)
        return max(mp.mpf(-1), min(mp.mpf(1), r))

    return alternating_kernel_sum(s_size, d - s_size, rho_of_t, kernel)


def gal_gaussian_coord(
    q: GaussianGalQuery,
    coord: Literal["hidden", "bias", "output"],
    j: int | None = None,
) -> float:
    """Exact squared expected gradient of one coordinate at Gaussian init.

    Averaging the squared population gradient over the initialization turns
    each coordinate into a sum over Hamming splits of two inputs: splits on
    the coordinates carried by the parity-times-gradient product alternate in
    sign, the rest do not, and the pair correlation depends only on the total
    split.  The kernel is the joint-positivity probability for hidden and
    bias coordinates and the ReLU product moment for output coordinates.
    """
    d, a = q.d, q.a
    if coord == "hidden":
        if j is None or not 1 <= j <= d:
            raise ValueError("hidden coordinate index j must lie in [1, d]")
        s_size = d - a - 1 if j <= d - a else d - a + 1
        return _gaussian_coord_sum(d, s_size, q.sigma_b, _mp_step_kernel) / q.n
    if coord == "bias":
        return _gaussian_coord_sum(d, d - a, q.sigma_b, _mp_step_kernel) / q.n
    if coord == "output":
        scale = 1.0 + q.sigma_b**2
        return scale * _gaussian_coord_sum(d, d - a, q.sigma_b, _mp_relu_kernel)
    raise ValueError(f"unknown coordinate kind {coord!r}")


def gal_gaussian_total(q: GaussianGalQuery) -> float:
    """Alignment summed over all n d + 2 n coordinates, using the symmetry of
    hidden weights inside and outside the parity support."""
    inside = gal_gaussian_coord(q, "hidden", j=1)
    outside = gal_gaussian_coord(q, "hidden", j=q.d) if q.a > 0 else 0.0
    bias = gal_gaussian_coord(q, "bias")
    output = gal_gaussian_coord(q, "output")
    return q.n * ((q.d - q.a) * inside + q.a * outside + bias + output)


# ---------------------------------------------------------------------------
# perturbed sign initialization, no biases


def gal_perturbed_exact(q: PerturbedGalQuery, layer: Literal["hidden", "output"]) -> float:
    """Exact alignment coordinate for sign-plus-Gaussian rows.

    After flipping signs into the inputs, the expectation over the two
    inputs is a sum over joint sign-pattern counts of the first d - 1
    coordinate pairs, with the last pair enumerated separately; each term
    weighs a shifted bivariate kernel at the pair correlation.  The hidden
    value uses the parity of the first d - 1 coordinates with the
    joint-positivity kernel; the output value uses the full parity with the
    ReLU product kernel.  O(d^3) kernel evaluations.
    """
    d, mu = q.d, q.mu
    if d > 200:
        raise ResourceLimitError(f"perturbed evaluator limited to d <= 200, got {d}")
    if layer == "hidden":
        kernel = lambda a, b, rho: lambda_cdf(BivariateQuery(a, b, rho))
    elif layer == "output":
        kernel = lambda a, b, rho: relu_cross_moment(BivariateQuery(a, b, rho))
    else:
        raise ValueError(f"unknown layer {layer!r}")
    cache: dict[tuple[int, int, int], float] = {}
    terms: list[float] = []
    m = d - 1
    for n1 in range(m + 1):
        c1 = math.comb(m, n1)
        for n2 in range(m - n1 + 1):
            c2 = c1 * math.comb(m - n1, n2)
            for n3 in range(m - n1 - n2 + 1):
                n4 = m - n1 - n2 - n3
                weight = float(c2 * math.comb(m - n1 - n2, n3))
                sign0 = -1.0 if (n2 + n3) % 2 else 1.0
                base_s = n1 + n2 - n3 - n4
                base_sp = n1 + n3 - n2 - n4
                agree0 = n1 + n4
                for x_last in (1, -1):
                    for xp_last in (1, -1):
                        s = base_s + x_last
                        sp = base_sp + xp_last
                        agree = agree0 + (x_last == xp_last)
                        key = (s, sp, agree)
                        k_val = cache.get(key)
                        if k_val is None:
                            rho = (2 * agree - d) / d
                            k_val = kernel(mu * s, mu * sp, rho)
                            cache[key] = k_val
                        sign = sign0
                        if layer == "output" and x_last != xp_last:
                            sign = -sign
                        terms.append(sign * weight * k_val)
    return math.fsum(terms) / 4.0**d


# ---------------------------------------------------------------------------
# Monte-Carlo estimator


def gaussian_theory_net(
    d: int, n: int, sigma_b: float, rng: np.random.Generator
) -> NetParams:
    """Two-layer ReLU net with N(0,1/d) rows, N(0,sigma_b^2) biases (always a
    parameter, possibly identically 0) and N(0,1/n) output weights."""
    w = rng.standard_normal((n, d)) / math.sqrt(d)
    b = sigma_b * rng.standard_normal(n)
    v = rng.standard_normal((1, n)) / math.sqrt(n)
    return NetParams([w, v], [b, None], activation=ActivationKind.relu())


def _difference_gradient(
    net: NetParams,
    x: np.ndarray,
    target: TargetSpec,
    loss: LossKind,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean over the batch of grad L(NN, f(x)) minus grad L(NN, y~Rad(1/2)).

    For the correlation loss the random-label part has exactly zero mean and
    is dropped without sampling.
    """
    y_true = target.values(x)
    g_true = flatten_grads(loss_grad(net, x, y_true, loss))
    if loss.tag == "correlation":
        return g_true
    y_rand = rng.integers(0, 2, size=x.shape[0]) * 2.0 - 1.0
    g_rand = flatten_grads(loss_grad(net, x, y_rand, loss))
    return g_true - g_rand


def gal_mc(
    net: NetworkSpec | None,
    init: InitSpec | Callable[[np.random.Generator], NetParams] | None,
    loss: LossKind,
    target: TargetSpec,
    n_theta: int,
    n_inner: int,
    seed: int,
    theta_samples: Sequence[NetParams] | None = None,
) -> GalResult:
    """Unbiased Monte-Carlo alignment estimate with jackknife standard error.

    Per initialization sample, two independent inner batches of ``n_inner``
    inputs each produce difference-gradient means whose coordinatewise
    product is summed; squaring a single mean would bias the estimate upward
    by its variance.  ``init`` may be an initialization family (applied to
    ``net``), a custom sampler, or ``theta_samples`` may supply parameter
    vectors directly (e.g. snapshots of a training flow).

    The estimate is unbiased, so it may come out slightly negative when the
    true alignment is near zero.
    """
    if n_inner < 2:
        raise ValueError("need inner batches of at least 2 samples")
    if theta_samples is not None:
        n_theta = len(theta_samples)
    if n_theta < 2:
        raise ValueError("need at least 2 initialization samples")
    rng = np.random.default_rng(seed)
    estimates = np.empty(n_theta)
    for i in range(n_theta):
        if theta_samples is not None:
            theta = theta_samples[i]
        elif callable(init):
            theta = init(rng)
        else:
            theta = sample_net(net, init, rng)
        d = theta.in_dim
        g_pair = []
        for _ in range(2):
            x = rng.integers(0, 2, size=(n_inner, d)) * 2.0 - 1.0
            g_pair.append(_difference_gradient(theta, x, target, loss, rng))
        estimates[i] = float(np.dot(g_pair[0], g_pair[1]))
    value = float(estimates.mean())
    # jackknife over the outer samples
    total = estimates.sum()
    loo = (total - estimates) / (n_theta - 1)
    se = math.sqrt((n_theta - 1) / n_theta * float(np.sum((loo - loo.mean()) ** 2)))
    return GalResult(value=value, method="monte_carlo", std_err=se)


# ---------------------------------------------------------------------------
# junk flow


def junk_flow_run(
    theta0: NetParams,
    loss: LossKind,
    gamma: float,
    tau: float,
    steps: int,
    batch: int,
    seed: int,
) -> NetParams:
    """Noisy-GD driven by random labels.

    Each step subtracts gamma times (the random-label gradient estimate plus
    N(0, tau^2) per-coordinate noise).  For the correlation loss the
    random-label gradient is exactly zero, so the flow is a pure Gaussian
    random walk on the parameters and no data is sampled.
    """
    from .nets import step_rng, _apply_update  # local import to avoid a cycle

    if steps < 0:
        raise ValueError("step count must be non-negative")
    net = theta0.copy()
    d = net.in_dim
    for t in range(steps):
        if loss.tag == "correlation":
            grads = [
                (np.zeros_like(w), None if b is None else np.zeros_like(b))
                for w, b in zip(net.weights, net.biases)
            ]
        else:
            rng = step_rng(seed, t, tag=1)
            x = rng.integers(0, 2, size=(batch, d)) * 2.0 - 1.0
            y = rng.integers(0, 2, size=batch) * 2.0 - 1.0
            grads = loss_grad(net, x, y, loss)
        noise_rng = step_rng(seed, t, tag=2) if tau > 0 else None
        _apply_update(net, grads, gamma, noise_rng, tau)
    return net
