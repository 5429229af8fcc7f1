"""Experiment recipes at desk scale.

Each recipe expands its parameter block into a grid of parameter points,
runs one (point, seed) job at a time and emits (step, metric, value) rows.
Budgets default to desk scale and every one of them can be overridden from
the config; nothing here claims to match any particular published budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

from .alignment import GaussianGalQuery, gal_gaussian_total, gal_mc, junk_flow_run
from .exactcomb import ActivationKind, DeltaQuery, delta
from .nets import (
    InitSpec,
    LossKind,
    NetParams,
    NetworkSpec,
    TargetSpec,
    TrainConfig,
    build_mlp,
    eval_accuracy,
    noisy_sgd,
    one_step_gd_closed_form,
    two_layer_sign_net,
)
from .records import stream_seed

__all__ = ["ConfigError", "RecipeJob", "RECIPES", "expand_jobs", "run_job"]


class ConfigError(ValueError):
    """Invalid configuration; carries the JSON path of the offending key."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class RecipeJob:
    recipe: str
    label: str
    params: dict
    seed: int


def _take(params: dict, key: str, default: Any, kind: type, where: str) -> Any:
    value = params.get(key, default)
    if value is None:
        raise ConfigError(f"$.params.{key}", f"required by recipe {where}")
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"$.params.{key}", f"expected {kind.__name__}, got {value!r}")
    return value


def _take_list(params: dict, key: str, default: Any, where: str) -> list:
    value = params.get(key, default)
    if value is None:
        raise ConfigError(f"$.params.{key}", f"required by recipe {where}")
    if not isinstance(value, list) or not value:
        raise ConfigError(f"$.params.{key}", "expected a nonempty list")
    return value


def _activation(tag: str, clip: float) -> ActivationKind:
    if tag == "relu":
        return ActivationKind.relu()
    if tag == "crelu":
        return ActivationKind.clipped(clip)
    if tag == "threshold":
        return ActivationKind.threshold()
    raise ConfigError("$.params.activation", f"unknown activation {tag!r}")


def _init_spec(block: dict, where: str) -> InitSpec:
    family = _take(block, "family", None, str, where)
    try:
        return InitSpec(
            family,
            sigma=float(block.get("sigma", 0.0)),
            sparsity=float(block.get("sparsity", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"$.params.{where}", str(exc)) from exc


# ---------------------------------------------------------------------------
# MLP training recipes (sigma_sweep, other_inits, sparse_parity, dim_sweep)


def _mlp_points(params: dict, recipe: str) -> list[tuple[str, dict]]:
    base = {
        "d": _take(params, "d", 50, int, recipe),
        "hidden": _take_list(params, "hidden", [512, 512, 64], recipe),
        "batch": _take(params, "batch", 64, int, recipe),
        "lr": _take(params, "lr", 0.01, float, recipe),
        "beta": _take(params, "beta", 1.0, float, recipe),
        "train_samples": _take(params, "train_samples", 2_000_000, int, recipe),
        "eval_every_samples": _take(params, "eval_every_samples", 160_000, int, recipe),
        "eval_samples": _take(params, "eval_samples", 4096, int, recipe),
        "stop_at_accuracy": _take(params, "stop_at_accuracy", 0.995, float, recipe),
        "loss": _take(params, "loss", "hinge", str, recipe),
        "data": _take(params, "data", "online", str, recipe),
        "n_samples": params.get("n_samples"),
        "support_size": _take(params, "support_size", 0, int, recipe),
        "tau": _take(params, "tau", 0.0, float, recipe),
    }
    points = []
    if recipe == "sigma_sweep":
        for sigma in _take_list(params, "sigmas", [0.0, 0.5, 1.0], recipe):
            point = dict(base, init={"family": "perturbed_rademacher", "sigma": sigma})
            points.append((f"sigma={sigma:g}", point))
    elif recipe == "other_inits":
        default_inits = [
            {"family": "uniform_perturbed", "sigma": 0.1},
            {"family": "uniform_perturbed", "sigma": 1.0},
            {"family": "sparsified_rademacher", "sparsity": 1 / 3},
            {"family": "discrete_symmetric"},
            {"family": "gaussian"},
        ]
        for init in _take_list(params, "inits", default_inits, recipe):
            spec = _init_spec(init, "inits")
            extras = [f"{k}={v:g}" for k, v in init.items() if k != "family"]
            label = ",".join([spec.family] + extras)
            points.append((label, dict(base, init=init)))
    elif recipe == "sparse_parity":
        k = _take(params, "support_size", 3, int, recipe)
        base["support_size"] = k
        for sigma in _take_list(params, "sigmas", [0.0, 1.0], recipe):
            point = dict(base, init={"family": "perturbed_rademacher", "sigma": sigma})
            points.append((f"k={k},sigma={sigma:g}", point))
    elif recipe == "dim_sweep":
        sigma = _take(params, "sigma", 0.1, float, recipe)
        for d in _take_list(params, "ds", [30, 50, 70], recipe):
            point = dict(base, d=int(d), init={"family": "perturbed_rademacher", "sigma": sigma})
            points.append((f"d={d},sigma={sigma:g}", point))
    else:
        raise ConfigError("$.recipe", f"unknown MLP recipe {recipe!r}")
    return points


def _run_mlp_point(point: dict, seed: int, recipe: str) -> list[tuple[int, str, float]]:
    d = point["d"]
    sizes = (d, *point["hidden"], 1)
    spec = NetworkSpec(tuple(sizes), bias=True, dtype="float32")
    init = _init_spec(point["init"], "init")
    run_seed = stream_seed(seed, recipe, "net")
    net = build_mlp(spec, init, run_seed)
    k = point["support_size"]
    target = TargetSpec.parity(range(1, k + 1)) if k else TargetSpec.full_parity(d)
    loss = LossKind.hinge(point["beta"]) if point["loss"] == "hinge" else LossKind.squared()
    batch = point["batch"]
    steps = max(1, point["train_samples"] // batch)
    eval_every = max(1, point["eval_every_samples"] // batch)
    cfg = TrainConfig(
        gamma=point["lr"],
        tau=point["tau"],
        batch=batch,
        steps=steps,
        seed=run_seed,
        eval_every=eval_every,
        eval_samples=point["eval_samples"],
        data=point["data"],
        n_samples=point["n_samples"],
        stop_at_accuracy=point["stop_at_accuracy"],
    )
    _, trace = noisy_sgd(net, target, cfg, loss)
    rows = []
    for step, acc in trace.series("test_accuracy"):
        rows.append((step * batch, "test_accuracy", acc))
    for step, lv in trace.series("train_loss"):
        rows.append((step * batch, "train_loss", lv))
    rows.append((trace.series("test_accuracy")[-1][0] * batch, "final_accuracy",
                 trace.last("test_accuracy")))
    return rows


# ---------------------------------------------------------------------------
# alignment recipes


def _gal_curves_points(params: dict) -> list[tuple[str, dict]]:
    ds = _take_list(params, "ds", [6, 8, 10, 12, 14], "gal_curves")
    default_inits = [
        {"family": "rademacher"},
        {"family": "gaussian"},
        {"family": "perturbed_rademacher", "sigma": 0.8},
    ]
    inits = _take_list(params, "inits", default_inits, "gal_curves")
    base = {
        "ds": [int(d) for d in ds],
        "loss": _take(params, "loss", "hinge", str, "gal_curves"),
        "beta": _take(params, "beta", 1.0, float, "gal_curves"),
        "n_theta": _take(params, "n_theta", 2000, int, "gal_curves"),
        "n_inner": _take(params, "n_inner", 128, int, "gal_curves"),
    }
    points = []
    for init in inits:
        spec = _init_spec(init, "inits")
        extras = [f"{k}={v:g}" for k, v in init.items() if k != "family"]
        label = ",".join([spec.family] + extras)
        points.append((label, dict(base, init=init)))
    return points


def _run_gal_curves(point: dict, seed: int) -> list[tuple[int, str, float]]:
    init = _init_spec(point["init"], "init")
    loss = LossKind.hinge(point["beta"]) if point["loss"] == "hinge" else LossKind.correlation()
    rows = []
    for d in point["ds"]:
        spec = NetworkSpec((d, 1), bias=False, final_activation=True)
        res = gal_mc(
            spec,
            init,
            loss,
            TargetSpec.full_parity(d),
            n_theta=point["n_theta"],
            n_inner=point["n_inner"],
            seed=stream_seed(seed, "gal_curves", f"d={d}"),
        )
        rows.append((d, "gal", res.value))
        rows.append((d, "gal_se", res.std_err))
    return rows


def _gal_exact_points(params: dict) -> list[tuple[str, dict]]:
    ds = _take_list(params, "ds", list(range(10, 41, 2)), "gal_exact_scan")
    point = {
        "ds": [int(d) for d in ds],
        "a": _take(params, "a", 0, int, "gal_exact_scan"),
        "sigma_b": _take(params, "sigma_b", 0.0, float, "gal_exact_scan"),
        "n": _take(params, "n", 1, int, "gal_exact_scan"),
    }
    label = f"a={point['a']},sigma_b={point['sigma_b']:g},n={point['n']}"
    return [(label, point)]


def _run_gal_exact(point: dict, seed: int) -> list[tuple[int, str, float]]:
    rows = []
    for d in point["ds"]:
        q = GaussianGalQuery(d, point["a"], point["sigma_b"], point["n"])
        rows.append((d, "gal", gal_gaussian_total(q)))
    return rows


def _loss_compare_points(params: dict) -> list[tuple[str, dict]]:
    base = {
        "d": _take(params, "d", 20, int, "loss_compare"),
        "hidden": _take_list(params, "hidden", [64, 64, 16], "loss_compare"),
        "n_theta": _take(params, "n_theta", 800, int, "loss_compare"),
        "n_inner": _take(params, "n_inner", 128, int, "loss_compare"),
    }
    losses = _take_list(params, "losses", ["l1", "squared"], "loss_compare")
    return [(f"loss={tag}", dict(base, loss=tag)) for tag in losses]


def _run_loss_compare(point: dict, seed: int) -> list[tuple[int, str, float]]:
    d = point["d"]
    spec = NetworkSpec((d, *point["hidden"], 1), bias=True)
    loss = {"l1": LossKind.l1(), "squared": LossKind.squared()}.get(point["loss"])
    if loss is None:
        raise ConfigError("$.params.losses", f"unknown loss {point['loss']!r}")
    res = gal_mc(
        spec,
        InitSpec("gaussian"),
        loss,
        TargetSpec.leap_poly(),
        n_theta=point["n_theta"],
        n_inner=point["n_inner"],
        seed=stream_seed(seed, "loss_compare", point["loss"]),
    )
    return [(0, "gal", res.value), (0, "gal_se", res.std_err)]


def _junk_flow_points(params: dict) -> list[tuple[str, dict]]:
    point = {
        "d": _take(params, "d", 10, int, "junk_flow_gal"),
        "ts": [int(t) for t in _take_list(params, "ts", [0, 2, 5], "junk_flow_gal")],
        "gamma": _take(params, "gamma", 1.0, float, "junk_flow_gal"),
        "tau": _take(params, "tau", 0.0, float, "junk_flow_gal"),
        "batch": _take(params, "batch", 32, int, "junk_flow_gal"),
        "beta": _take(params, "beta", 1.0, float, "junk_flow_gal"),
        "n_theta": _take(params, "n_theta", 1200, int, "junk_flow_gal"),
        "n_inner": _take(params, "n_inner", 64, int, "junk_flow_gal"),
    }
    return [(f"d={point['d']}", point)]


def _run_junk_flow(point: dict, seed: int) -> list[tuple[int, str, float]]:
    d = point["d"]
    loss = LossKind.hinge(point["beta"])
    target = TargetSpec.full_parity(d)
    rows = []
    for t in point["ts"]:
        def sampler(rng, _t=t):
            start = NetParams(
                [rng.standard_normal((1, d)) / math.sqrt(d)],
                [None],
                ActivationKind.relu(),
                final_activation=True,
            )
            if _t == 0:
                return start
            flow_seed = int(rng.integers(0, 2**48))
            return junk_flow_run(
                start, loss, point["gamma"], point["tau"], _t, point["batch"], flow_seed
            )

        res = gal_mc(
            None,
            sampler,
            loss,
            target,
            n_theta=point["n_theta"],
            n_inner=point["n_inner"],
            seed=stream_seed(seed, "junk_flow_gal", f"t={t}"),
        )
        rows.append((t, "gal", res.value))
        rows.append((t, "gal_se", res.std_err))
    return rows


def _width_sweep_points(params: dict) -> list[tuple[str, dict]]:
    ds = _take_list(params, "ds", [8, 10, 12], "width_sweep")
    base = {
        "width_factors": [
            float(f) for f in _take_list(params, "width_factors", [1.0, 2.0, 4.0], "width_sweep")
        ],
        "activation": _take(params, "activation", "crelu", str, "width_sweep"),
        "clip": _take(params, "clip", 1.0, float, "width_sweep"),
        "lr": _take(params, "lr", 0.1, float, "width_sweep"),
        "batch": _take(params, "batch", 1024, int, "width_sweep"),
        "steps": _take(params, "steps", 200, int, "width_sweep"),
    }
    return [(f"d={d}", dict(base, d=int(d))) for d in ds]


def _run_width_sweep(point: dict, seed: int) -> list[tuple[int, str, float]]:
    d = point["d"]
    act = _activation(point["activation"], point["clip"])
    target = TargetSpec.full_parity(d)
    rows = []
    for factor in point["width_factors"]:
        width = int(round(factor * d * d))
        net = two_layer_sign_net(
            d, width, 0, act, "auto", seed=stream_seed(seed, "width_sweep", f"{d}:{width}")
        )
        cfg = TrainConfig(
            gamma=point["lr"],
            batch=point["batch"],
            steps=point["steps"],
            seed=stream_seed(seed, "width_sweep", f"sgd:{d}:{width}"),
            train_layers="output",
        )
        trained, _ = noisy_sgd(net, target, cfg, LossKind.correlation())
        acc = eval_accuracy(trained, target, "enumerate")
        rows.append((width, "final_accuracy", acc))
    return rows


def _one_step_points(params: dict) -> list[tuple[str, dict]]:
    point = {
        "d": _take(params, "d", 12, int, "one_step_demo"),
        "a": _take(params, "a", 0, int, "one_step_demo"),
        "n": _take(params, "n", 12**4, int, "one_step_demo"),
        "gamma": _take(params, "gamma", 1.0, float, "one_step_demo"),
        "tau": _take(params, "tau", 0.0, float, "one_step_demo"),
        "activation": _take(params, "activation", "relu", str, "one_step_demo"),
        "clip": _take(params, "clip", 5.0, float, "one_step_demo"),
    }
    label = f"d={point['d']},a={point['a']},n={point['n']},act={point['activation']}"
    return [(label, point)]


def _run_one_step(point: dict, seed: int) -> list[tuple[int, str, float]]:
    d, a = point["d"], point["a"]
    act = _activation(point["activation"], point["clip"])
    net = one_step_gd_closed_form(
        d, a, point["n"], point["gamma"], "auto", act, stream_seed(seed, "one_step_demo", "w"),
        point["tau"],
    )
    target = TargetSpec.almost_full(d, a)
    acc = eval_accuracy(net, target, "enumerate")
    bias = float(net.biases[0][0])
    coupling = abs(delta(DeltaQuery(d, a, bias, act)))
    return [(0, "final_accuracy", acc), (0, "delta_abs", coupling)]


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Recipe:
    name: str
    points: Callable[[dict], list[tuple[str, dict]]]
    run: Callable[[dict, int], list[tuple[int, str, float]]]


RECIPES: dict[str, Recipe] = {
    "sigma_sweep": Recipe(
        "sigma_sweep", lambda p: _mlp_points(p, "sigma_sweep"),
        lambda pt, s: _run_mlp_point(pt, s, "sigma_sweep"),
    ),
    "other_inits": Recipe(
        "other_inits", lambda p: _mlp_points(p, "other_inits"),
        lambda pt, s: _run_mlp_point(pt, s, "other_inits"),
    ),
    "sparse_parity": Recipe(
        "sparse_parity", lambda p: _mlp_points(p, "sparse_parity"),
        lambda pt, s: _run_mlp_point(pt, s, "sparse_parity"),
    ),
    "dim_sweep": Recipe(
        "dim_sweep", lambda p: _mlp_points(p, "dim_sweep"),
        lambda pt, s: _run_mlp_point(pt, s, "dim_sweep"),
    ),
    "gal_curves": Recipe("gal_curves", _gal_curves_points, _run_gal_curves),
    "gal_exact_scan": Recipe("gal_exact_scan", _gal_exact_points, _run_gal_exact),
    "loss_compare": Recipe("loss_compare", _loss_compare_points, _run_loss_compare),
    "junk_flow_gal": Recipe("junk_flow_gal", _junk_flow_points, _run_junk_flow),
    "width_sweep": Recipe("width_sweep", _width_sweep_points, _run_width_sweep),
    "one_step_demo": Recipe("one_step_demo", _one_step_points, _run_one_step),
}


def expand_jobs(recipe: str, params: dict, seeds: list[int]) -> list[tuple[RecipeJob, str]]:
    """All (job, label) pairs of a run, in deterministic order."""
    if recipe not in RECIPES:
        raise ConfigError("$.recipe", f"unknown recipe {recipe!r}")
    jobs = []
    for label, point in RECIPES[recipe].points(params):
        for seed in seeds:
            jobs.append((RecipeJob(recipe, label, point, seed), label))
    return jobs


def run_job(job: RecipeJob) -> list[tuple[int, str, float]]:
    return RECIPES[job.recipe].run(job.params, job.seed)
