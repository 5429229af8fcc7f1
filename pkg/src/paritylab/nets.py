"""Fully connected ReLU networks, initialization families, losses, data and
the training procedures: noisy-(S)GD, the closed-form one-step update for the
correlation loss at sign initialization, and margin-counted hinge SGD.

Reproducibility: online batches and per-step gradient noise come from a
counter-based generator keyed by (seed, step), so a training run is
bit-reproducible regardless of scheduling, and two runs differing only in
later steps share their earlier batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .exactcomb import (
    ActivationKind,
    DeltaQuery,
    almost_full_bias_pair,
    delta,
    full_parity_bias,
)

__all__ = [
    "InitSpec",
    "NetworkSpec",
    "NetParams",
    "LossKind",
    "TrainConfig",
    "TargetSpec",
    "MetricsTrace",
    "ResourceLimitError",
    "sample_init",
    "build_mlp",
    "two_layer_sign_net",
    "forward",
    "loss_value",
    "loss_grad",
    "flatten_grads",
    "flatten_params",
    "one_step_gd_closed_form",
    "noisy_sgd",
    "hinge_sgd_count_updates",
    "parity_batch",
    "enumerate_cube",
    "eval_accuracy",
    "eval_accuracy_detail",
    "rescale_check",
    "step_rng",
]

RELU = ActivationKind.relu()

ENUM_LIMIT = 22  # full enumeration of the hypercube is allowed up to here


class ResourceLimitError(RuntimeError):
    """An operation exceeded a documented size limit (e.g. enumeration)."""


def step_rng(seed: int, step: int, tag: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, step); independent streams per tag."""
    if not 0 <= step < 1 << 48:
        raise ValueError("step outside the 48-bit counter range")
    key = np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, ((tag & 0xFFFF) << 48) | step], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# initialization families


@dataclass(frozen=True)
class InitSpec:
    """One of the i.i.d. weight initialization families.

    All families except plain ``rademacher`` are normalized so that the
    variance entering each neuron is 1 (entry second moment 1/fan-in).
    Plain ``rademacher`` keeps raw +-1 entries, as used by the one-step and
    hinge constructions.
    """

    family: Literal[
        "gaussian",
        "rademacher",
        "perturbed_rademacher",
        "uniform_perturbed",
        "sparsified_rademacher",
        "discrete_symmetric",
    ]
    sigma: float = 0.0
    sparsity: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError("sparsity must lie in [0, 1)")


def sample_init(spec: InitSpec, shape: tuple[int, ...], fan_in: int, rng: np.random.Generator):
    """Sample one parameter tensor; ``fan_in`` is the layer input dimension."""
    fam = spec.family
    if fam == "gaussian":
        return rng.standard_normal(shape) / math.sqrt(fan_in)
    if fam == "rademacher":
        return rng.integers(0, 2, size=shape) * 2.0 - 1.0
    if fam == "perturbed_rademacher":
        base = rng.integers(0, 2, size=shape) * 2.0 - 1.0
        noise = rng.standard_normal(shape) * spec.sigma
        return (base + noise) / math.sqrt(fan_in * (1.0 + spec.sigma**2))
    if fam == "uniform_perturbed":
        base = rng.integers(0, 2, size=shape) * 2.0 - 1.0
        half_width = math.sqrt(3.0) * spec.sigma
        noise = rng.uniform(-half_width, half_width, size=shape)
        return (base + noise) / math.sqrt(fan_in * (1.0 + spec.sigma**2))
    if fam == "sparsified_rademacher":
        keep = rng.random(shape) < (1.0 - spec.sparsity)
        base = rng.integers(0, 2, size=shape) * 2.0 - 1.0
        return keep * base / math.sqrt(fan_in * (1.0 - spec.sparsity))
    if fam == "discrete_symmetric":
        vals = np.array([-2.0, -1.0, 1.0, 2.0])
        return rng.choice(vals, size=shape) * math.sqrt(2.0 / (5.0 * fan_in))
    raise ValueError(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: layer sizes (input, hidden..., output), activation,
    per-layer bias flags (a single bool applies to every layer), and whether
    the final layer output is passed through the activation (single-neuron
    probes) or left linear (default)."""

    sizes: tuple[int, ...]
    activation: ActivationKind = RELU
    bias: bool | tuple[bool, ...] = True
    final_activation: bool = False
    dtype: str = "float64"

    def __post_init__(self) -> None:
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if isinstance(self.bias, tuple) and len(self.bias) != len(self.sizes) - 1:
            raise ValueError("need one bias flag per layer")

    def bias_flags(self) -> tuple[bool, ...]:
        n_layers = len(self.sizes) - 1
        if isinstance(self.bias, tuple):
            return self.bias
        return (self.bias,) * n_layers


@dataclass
class NetParams:
    """Layered weights/biases; ``weights[l]`` has shape (out, in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray | None]
    activation: ActivationKind = RELU
    final_activation: bool = False

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "NetParams":
        return NetParams(
            [w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
            self.activation,
            self.final_activation,
        )

    def __post_init__(self) -> None:
        for w_prev, w_next in zip(self.weights, self.weights[1:]):
            if w_next.shape[1] != w_prev.shape[0]:
                raise ValueError("adjacent layer shapes do not compose")


def build_mlp(spec: NetworkSpec, init: InitSpec, seed: int) -> NetParams:
    """Sample a fully connected network, weights and biases per the family."""
    rng = np.random.default_rng(seed)
    return sample_net(spec, init, rng)


def sample_net(spec: NetworkSpec, init: InitSpec, rng: np.random.Generator) -> NetParams:
    dtype = np.dtype(spec.dtype)
    weights, biases = [], []
    for (fan_in, fan_out), has_bias in zip(zip(spec.sizes, spec.sizes[1:]), spec.bias_flags()):
        weights.append(sample_init(init, (fan_out, fan_in), fan_in, rng).astype(dtype))
        if has_bias:
            biases.append(sample_init(init, (fan_out,), fan_in, rng).astype(dtype))
        else:
            biases.append(None)
    return NetParams(weights, biases, spec.activation, spec.final_activation)


def two_layer_sign_net(
    d: int,
    n: int,
    a: int = 0,
    act: ActivationKind = RELU,
    bias_scheme: str = "auto",
    seed: int = 0,
    sigma: float = 0.0,
) -> NetParams:
    """Two-layer network with +-1 hidden weights, schemed biases, zero output.

    ``sigma`` adds unnormalized Gaussian noise to the sign weights (the
    perturbed variant of the hinge analysis).  Bias schemes: ``auto`` picks
    0 / -1 by the parity of d when a = 0 and the (a+2, a+2.1) coin otherwise;
    ``pair`` forces the coin; a float is used as a constant bias.
    """
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 2, size=(n, d)) * 2.0 - 1.0
    if sigma > 0:
        w = w + sigma * rng.standard_normal((n, d))
    if isinstance(bias_scheme, (int, float)):
        b = np.full(n, float(bias_scheme))
    elif bias_scheme == "auto" and a == 0:
        b = np.full(n, full_parity_bias(d))
    elif bias_scheme in ("auto", "pair"):
        lo, hi = almost_full_bias_pair(a)
        b = np.where(rng.random(n) < 0.5, lo, hi)
    else:
        raise ValueError(f"unknown bias scheme {bias_scheme!r}")
    v = np.zeros((1, n))
    return NetParams([w, v], [b, None], act, final_activation=False)


def forward(net: NetParams, x: np.ndarray) -> np.ndarray:
    """Network output for a batch; x has shape (batch, d) or (d,)."""
    squeeze = x.ndim == 1
    h = np.atleast_2d(x)
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T
        if b is not None:
            z = z + b
        last = layer == net.depth - 1
        h = net.activation.value(z) if (not last or net.final_activation) else z
    out = h[:, 0] if h.shape[1] == 1 else h
    return out[0] if squeeze else out


def _forward_cache(net: NetParams, x: np.ndarray):
    h = np.atleast_2d(x)
    pre, post = [], [h]
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = post[-1] @ w.T
        if b is not None:
            z = z + b
        pre.append(z)
        last = layer == net.depth - 1
        post.append(net.activation.value(z) if (not last or net.final_activation) else z)
    return pre, post


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class LossKind:
    """correlation, hinge(beta), squared or l1."""

    tag: Literal["correlation", "hinge", "squared", "l1"]
    beta: float = 0.0

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("hinge margin beta must be non-negative")

    @staticmethod
    def correlation() -> "LossKind":
        return LossKind("correlation")

    @staticmethod
    def hinge(beta: float = 1.0) -> "LossKind":
        return LossKind("hinge", beta=beta)

    @staticmethod
    def squared() -> "LossKind":
        return LossKind("squared")

    @staticmethod
    def l1() -> "LossKind":
        return LossKind("l1")

    def value(self, y_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.tag == "correlation":
            return -y * y_hat
        if self.tag == "hinge":
            return np.maximum(0.0, self.beta - y * y_hat)
        if self.tag == "squared":
            return (y_hat - y) ** 2
        return np.abs(y_hat - y)

    def dloss(self, y_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Weak derivative in y_hat; the hinge kink at equality contributes 0."""
        if self.tag == "correlation":
            return -y * np.ones_like(y_hat)
        if self.tag == "hinge":
            return np.where(y * y_hat < self.beta, -y, 0.0)
        if self.tag == "squared":
            return 2.0 * (y_hat - y)
        return np.sign(y_hat - y)


def loss_value(net: NetParams, x: np.ndarray, y: np.ndarray, loss: LossKind) -> float:
    return float(np.mean(loss.value(forward(net, x), np.asarray(y))))


def loss_grad(
    net: NetParams,
    x: np.ndarray,
    y: np.ndarray,
    loss: LossKind,
    train_layers: str = "all",
) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Mean gradient of the loss over the batch, per layer (dW, db)."""
    x = np.atleast_2d(x)
    y = np.atleast_1d(np.asarray(y, dtype=x.dtype))
    batch = x.shape[0]
    pre, post = _forward_cache(net, x)
    out = post[-1][:, 0]
    delta_out = (loss.dloss(out, y) / batch).astype(x.dtype)
    if net.final_activation:
        delta_out = delta_out * net.activation.derivative(pre[-1][:, 0])
    grad_z = delta_out[:, None]
    grads: list[tuple[np.ndarray, np.ndarray | None]] = [None] * net.depth
    for layer in range(net.depth - 1, -1, -1):
        w = net.weights[layer]
        dW = grad_z.T @ post[layer]
        db = grad_z.sum(axis=0) if net.biases[layer] is not None else None
        grads[layer] = (dW, db)
        if layer > 0:
            grad_z = (grad_z @ w) * net.activation.derivative(pre[layer - 1])
    if train_layers == "output":
        grads = [
            (np.zeros_like(g[0]), None if g[1] is None else np.zeros_like(g[1]))
            if layer != net.depth - 1
            else g
            for layer, g in enumerate(grads)
        ]
    elif train_layers != "all":
        raise ValueError(f"unknown train_layers {train_layers!r}")
    return grads


def flatten_grads(grads: Iterable[tuple[np.ndarray, np.ndarray | None]]) -> np.ndarray:
    parts = []
    for dW, db in grads:
        parts.append(dW.ravel())
        if db is not None:
            parts.append(db.ravel())
    return np.concatenate(parts)


def flatten_params(net: NetParams) -> np.ndarray:
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        if b is not None:
            parts.append(b.ravel())
    return np.concatenate(parts)


def _apply_update(
    net: NetParams,
    grads,
    gamma: float,
    noise_rng=None,
    tau: float = 0.0,
    start_layer: int = 0,
) -> None:
    for offset, (dW, db) in enumerate(grads):
        layer = start_layer + offset
        step = dW
        if tau > 0:
            step = step + tau * noise_rng.standard_normal(dW.shape)
        net.weights[layer] -= gamma * step.astype(net.weights[layer].dtype)
        if net.biases[layer] is not None:
            bstep = db if db is not None else np.zeros_like(net.biases[layer])
            if tau > 0:
                bstep = bstep + tau * noise_rng.standard_normal(bstep.shape)
            net.biases[layer] -= gamma * bstep.astype(net.biases[layer].dtype)


# ---------------------------------------------------------------------------
# targets and data


@dataclass(frozen=True)
class TargetSpec:
    """Parity over a support set, or the fixed degree-3 leap polynomial."""

    kind: Literal["parity", "leap_poly"] = "parity"
    support: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "parity" and len(self.support) == 0:
            raise ValueError("parity target needs a nonempty support")

    @staticmethod
    def parity(support: Sequence[int]) -> "TargetSpec":
        return TargetSpec("parity", tuple(sorted(support)))

    @staticmethod
    def full_parity(d: int) -> "TargetSpec":
        return TargetSpec.parity(range(1, d + 1))

    @staticmethod
    def almost_full(d: int, a: int) -> "TargetSpec":
        return TargetSpec.parity(range(1, d - a + 1))

    @staticmethod
    def leap_poly() -> "TargetSpec":
        return TargetSpec("leap_poly")

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "parity":
            cols = [s - 1 for s in self.support]
            return np.prod(x[:, cols], axis=1)
        return (
            0.125 * x[:, 0] * x[:, 1] * x[:, 2]
            + 0.375 * x[:, 0] * x[:, 1] * x[:, 3]
            + 0.25 * x[:, 0] * x[:, 2] * x[:, 3]
            + 0.25 * x[:, 1] * x[:, 2] * x[:, 3]
        )


def parity_batch(d: int, support: Sequence[int], batch: int, seed: int, step: int = 0):
    """Uniform hypercube batch with parity labels over ``support``."""
    rng = step_rng(seed, step, tag=1)
    x = rng.integers(0, 2, size=(batch, d)) * 2.0 - 1.0
    target = TargetSpec.parity(support)
    return x, target.values(x)


def enumerate_cube(d: int) -> np.ndarray:
    if d > ENUM_LIMIT:
        raise ResourceLimitError(f"enumeration limited to d <= {ENUM_LIMIT}, got {d}")
    idx = np.arange(1 << d, dtype=np.uint32)
    bits = (idx[:, None] >> np.arange(d, dtype=np.uint32)) & 1
    return bits.astype(np.float64) * 2.0 - 1.0


def eval_accuracy_detail(
    net: NetParams,
    target: TargetSpec,
    mode: str = "enumerate",
    n_samples: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """(accuracy, tie fraction); a zero network output counts as an error."""
    d = net.in_dim
    if mode == "enumerate":
        x = enumerate_cube(d)
    elif mode == "sample":
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 2, size=(n_samples, d)) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    width = max(w.shape[0] for w in net.weights)
    chunk = max(256, int(3e7) // max(1, width))
    n_correct = 0
    n_ties = 0
    for lo in range(0, x.shape[0], chunk):
        xs = x[lo : lo + chunk]
        out = forward(net, xs)
        labels = np.sign(target.values(xs))
        n_correct += int(np.count_nonzero((np.sign(out) == labels) & (out != 0.0)))
        n_ties += int(np.count_nonzero(out == 0.0))
    return n_correct / x.shape[0], n_ties / x.shape[0]


def eval_accuracy(
    net: NetParams,
    target: TargetSpec,
    mode: str = "enumerate",
    n_samples: int = 10_000,
    seed: int = 0,
) -> float:
    return eval_accuracy_detail(net, target, mode, n_samples, seed)[0]


# ---------------------------------------------------------------------------
# one-step GD closed form


def one_step_gd_closed_form(
    d: int,
    a: int,
    n: int,
    gamma: float,
    bias_scheme: str = "auto",
    act: ActivationKind = RELU,
    seed: int = 0,
    tau: float = 0.0,
) -> NetParams:
    """One full-population GD step on the correlation loss, without any data.

    At sign initialization with zero output weights, the population update of
    each output weight is gamma times the coupling at that neuron's bias
    times the product of its first d - a input weights; GD noise, when
    requested, adds gamma * N(0, tau^2) per coordinate.
    """
    net = two_layer_sign_net(d, n, a, act, bias_scheme, seed)
    w, b = net.weights[0], net.biases[0]
    sign_prod = np.prod(w[:, : d - a], axis=1)
    by_bias = {bv: delta(DeltaQuery(d, a, float(bv), act)) for bv in np.unique(b)}
    deltas = np.array([by_bias[bv] for bv in b])
    v = gamma * deltas * sign_prod
    if tau > 0:
        noise_rng = step_rng(seed, 0, tag=2)
        v = v + gamma * tau * noise_rng.standard_normal(n)
    net.weights[1] = v[None, :]
    return net


# ---------------------------------------------------------------------------
# noisy (S)GD


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a noisy-(S)GD run.

    ``batch`` is an integer or "full" (population mean by enumeration, d <= 22).
    ``data`` is "online" (fresh batches) or "offline" (fixed dataset of
    ``n_samples``, reshuffled each epoch, stopping when the epoch training
    loss falls below ``offline_loss_stop`` or at the step cap).
    """

    gamma: float
    tau: float = 0.0
    batch: int | str = 64
    steps: int = 1000
    seed: int = 0
    train_layers: Literal["all", "output"] = "all"
    data: Literal["online", "offline"] = "online"
    n_samples: int | None = None
    eval_every: int = 0
    eval_samples: int = 4096
    offline_loss_stop: float = 1e-2
    stop_at_accuracy: float | None = None

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError("learning rate gamma must be positive")
        if self.tau < 0:
            raise ValueError("noise level tau must be non-negative")
        if self.data == "offline":
            if self.n_samples is None:
                raise ValueError("offline mode needs n_samples")
            if isinstance(self.batch, int) and self.n_samples < self.batch:
                raise ValueError("offline dataset smaller than the batch")


@dataclass
class MetricsTrace:
    """Flat (step, metric, value) records collected during training."""

    records: list[tuple[int, str, float]] = field(default_factory=list)

    def add(self, step: int, metric: str, value: float) -> None:
        self.records.append((step, metric, float(value)))

    def series(self, metric: str) -> list[tuple[int, float]]:
        return [(s, v) for s, m, v in self.records if m == metric]

    def last(self, metric: str) -> float:
        series = self.series(metric)
        if not series:
            raise KeyError(metric)
        return series[-1][1]


def _eval_net(net: NetParams, target: TargetSpec, cfg: TrainConfig) -> float:
    d = net.in_dim
    if d <= 16:
        return eval_accuracy(net, target, "enumerate")
    return eval_accuracy(net, target, "sample", n_samples=cfg.eval_samples, seed=cfg.seed ^ 0xE7A1)


def noisy_sgd(
    net: NetParams,
    target: TargetSpec,
    cfg: TrainConfig,
    loss: LossKind,
) -> tuple[NetParams, MetricsTrace]:
    """Noisy-(S)GD: per step, the batch (or population) mean gradient plus
    i.i.d. N(0, tau^2) noise on every trained coordinate, scaled by gamma."""
    net = net.copy()
    d = net.in_dim
    trace = MetricsTrace()
    full_batch = cfg.batch == "full"
    if full_batch:
        if d > ENUM_LIMIT:
            raise ResourceLimitError(f"full-batch GD needs d <= {ENUM_LIMIT}, got {d}")
        x_all = enumerate_cube(d)
        y_all = target.values(x_all)
    dataset = None
    if cfg.data == "offline":
        rng = step_rng(cfg.seed, 0, tag=3)
        dataset = rng.integers(0, 2, size=(cfg.n_samples, d)) * 2.0 - 1.0
        labels = target.values(dataset)
        order = np.arange(cfg.n_samples)
        cursor = 0
        epoch = 0
        rng_shuffle = step_rng(cfg.seed, epoch, tag=4)
        rng_shuffle.shuffle(order)

    def record_eval(step: int, batch_loss: float) -> float:
        acc = _eval_net(net, target, cfg)
        trace.add(step, "train_loss", batch_loss)
        trace.add(step, "test_accuracy", acc)
        return acc

    dtype = net.weights[0].dtype
    # noise is drawn only for trained coordinates
    train_start = net.depth - 1 if cfg.train_layers == "output" else 0
    last_eval_step = -1
    steps_done = 0
    for step in range(cfg.steps):
        if full_batch:
            x, y = x_all, y_all
        elif cfg.data == "online":
            rng = step_rng(cfg.seed, step, tag=1)
            x = (rng.integers(0, 2, size=(cfg.batch, d)) * 2.0 - 1.0).astype(dtype)
            y = target.values(x)
        else:
            if cursor + cfg.batch > cfg.n_samples:
                epoch += 1
                rng_shuffle = step_rng(cfg.seed, epoch, tag=4)
                rng_shuffle.shuffle(order)
                cursor = 0
                epoch_loss = loss_value(net, dataset, labels, loss)
                trace.add(step, "epoch_train_loss", epoch_loss)
                if epoch_loss < cfg.offline_loss_stop:
                    break
            sel = order[cursor : cursor + cfg.batch]
            cursor += cfg.batch
            x, y = dataset[sel], labels[sel]
        batch_loss = loss_value(net, x, y, loss)
        grads = loss_grad(net, x, y, loss, cfg.train_layers)[train_start:]
        noise_rng = step_rng(cfg.seed, step, tag=2) if cfg.tau > 0 else None
        _apply_update(net, grads, cfg.gamma, noise_rng, cfg.tau, start_layer=train_start)
        steps_done = step + 1
        if cfg.eval_every and steps_done % cfg.eval_every == 0:
            acc = record_eval(steps_done, batch_loss)
            last_eval_step = steps_done
            if cfg.stop_at_accuracy is not None and acc >= cfg.stop_at_accuracy:
                break
    if steps_done and last_eval_step != steps_done:
        record_eval(steps_done, loss_value(net, x, y, loss))
    return net, trace


def hinge_sgd_count_updates(
    net: NetParams,
    target: TargetSpec,
    cfg: TrainConfig,
    beta: float,
    zero_streak_stop: int = 1000,
    max_steps: int = 2_000_000,
) -> tuple[NetParams, int]:
    """Batch-one hinge SGD on both layers, counting nonzero updates.

    Stops after ``zero_streak_stop`` consecutive zero updates (the sample
    stream keeps flowing, only the update is skipped) or at ``max_steps``.
    """
    net = net.copy()
    d = net.in_dim
    loss = LossKind.hinge(beta)
    nonzero = 0
    streak = 0
    for step in range(max_steps):
        rng = step_rng(cfg.seed, step, tag=1)
        x = rng.integers(0, 2, size=(1, d)) * 2.0 - 1.0
        y = target.values(x)
        y_hat = forward(net, x)
        if y[0] * y_hat < beta:
            grads = loss_grad(net, x, y, loss, "all")
            _apply_update(net, grads, cfg.gamma)
            nonzero += 1
            streak = 0
        else:
            streak += 1
            if streak >= zero_streak_stop:
                break
    return net, nonzero


# ---------------------------------------------------------------------------
# layer rescaling report


def rescale_check(
    net: NetParams,
    constants: Sequence[float],
    n_points: int = 100,
    seed: int = 0,
    margin: float = 1e-3,
) -> dict:
    """Check the layer-rescaling covariance of a ReLU network.

    Scaling layer l by C_l multiplies the output by the product of all C_l,
    and the gradient of a layer-m parameter by the product over l != m (hence
    by at most the full product).  Verified at random smooth points.  Only
    first-layer biases are compatible with per-layer scaling, so deeper
    biases are rejected.
    """
    if len(constants) != net.depth:
        raise ValueError("need one constant per layer")
    if any(c < 1.0 for c in constants):
        raise ValueError("rescaling constants must not be below 1")
    if net.activation.tag != "relu":
        raise ValueError("rescaling check supports the ReLU activation")
    if any(b is not None for b in net.biases[1:]):
        raise ValueError("per-layer rescaling requires biases in the first layer only")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_points, net.in_dim))
    scaled = net.copy()
    for layer, c in enumerate(constants):
        scaled.weights[layer] *= c
        if scaled.biases[layer] is not None:
            scaled.biases[layer] *= c
    factor = float(np.prod(constants))
    out_base = forward(net, x)
    out_scaled = forward(scaled, x)
    denom = np.maximum(np.abs(out_base) * factor, 1e-12)
    output_rel_err = float(np.max(np.abs(out_scaled - factor * out_base) / denom))

    # gradient ratios at smooth points only (all pre-activations off the kink)
    pre_base, _ = _forward_cache(net, x)
    pre_scaled, _ = _forward_cache(scaled, x)
    smooth = np.ones(x.shape[0], dtype=bool)
    for z_b, z_s in zip(pre_base, pre_scaled):
        smooth &= np.all(np.abs(z_b) > margin, axis=1) & np.all(np.abs(z_s) > margin, axis=1)
    corr_loss = LossKind.correlation()
    ones = np.ones(1)
    grad_rel_err = 0.0
    bound_ok = True
    full_product = factor
    for i in np.nonzero(smooth)[0]:
        gb = loss_grad(net, x[i : i + 1], -ones, corr_loss)  # gradient of +NN
        gs = loss_grad(scaled, x[i : i + 1], -ones, corr_loss)
        for layer in range(net.depth):
            expected = factor / constants[layer]
            for g_b, g_s in ((gb[layer][0], gs[layer][0]), (gb[layer][1], gs[layer][1])):
                if g_b is None:
                    continue
                mask = np.abs(g_b) > 1e-9
                if not np.any(mask):
                    continue
                ratios = g_s[mask] / g_b[mask]
                grad_rel_err = max(
                    grad_rel_err, float(np.max(np.abs(ratios - expected) / expected))
                )
                if np.any(np.abs(ratios) > full_product * (1 + 1e-9)):
                    bound_ok = False
    return {
        "scale_factor": factor,
        "output_rel_err": output_rel_err,
        "n_smooth_points": int(np.count_nonzero(smooth)),
        "grad_ratio_rel_err": grad_rel_err,
        "grad_bound_ok": bound_ok,
    }
