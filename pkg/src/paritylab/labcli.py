"""Command line: run experiment recipes, summarize runs, evaluate one-off
quantities.  All numeric subcommands print fixed key=value lines."""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .alignment import GaussianGalQuery, PerturbedGalQuery, gal_gaussian_total, gal_mc, gal_perturbed_exact
from .exactcomb import ActivationKind, DeltaQuery, delta
from .nets import InitSpec, LossKind, NetworkSpec, ResourceLimitError, TargetSpec
from .recipes import ConfigError, expand_jobs, run_job
from .records import (
    SCHEMA_VERSION,
    ExperimentRecord,
    params_hash,
    read_records_csv,
    write_manifest,
    write_records_csv,
)

EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def _anchor_line(text: str, key: str) -> int:
    """Best-effort line of a config key for error messages."""
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return 1


def _load_config(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    if not isinstance(config, dict):
        print(f"{path}:1: top level must be an object", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    return config, text


def _config_field(config: dict, text: str, path: Path, key: str, kind, default=None):
    if key not in config:
        if default is not None:
            return default
        print(f"{path}:1: missing required field {key!r}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    value = config[key]
    if not isinstance(value, kind):
        line = _anchor_line(text, key)
        print(f"{path}:{line}: field {key!r} must be {kind.__name__}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    return value


def cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.config)
    config, text = _load_config(path)
    recipe = _config_field(config, text, path, "recipe", str)
    seeds = _config_field(config, text, path, "seeds", list)
    if not seeds or not all(isinstance(s, int) for s in seeds):
        print(f"{path}:{_anchor_line(text, 'seeds')}: seeds must be a nonempty list of integers",
              file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(_config_field(config, text, path, "output_dir", str))
    workers = _config_field(config, text, path, "workers", int, default=1)
    params = _config_field(config, text, path, "params", dict, default={})
    start = time.time()
    try:
        jobs = expand_jobs(recipe, params, seeds)
    except ConfigError as exc:
        key = exc.path.rsplit(".", 1)[-1]
        print(f"{path}:{_anchor_line(text, key)}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = [params_hash(job.params) for job, _ in jobs]
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                all_rows = list(pool.map(run_job, [job for job, _ in jobs]))
        else:
            all_rows = [run_job(job) for job, _ in jobs]
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    records = []
    for (job, _), phash, rows in zip(jobs, hashes, all_rows):
        for step, metric, value in rows:
            records.append(ExperimentRecord(job.recipe, phash, job.seed, step, metric, value))
    write_records_csv(out_dir / "records.csv", records)
    point_index = {}
    for (job, label), phash in zip(jobs, hashes):
        entry = point_index.setdefault(
            phash, {"label": label, "params": job.params, "seeds": []}
        )
        entry["seeds"].append(job.seed)
    manifest = {
        "schema": SCHEMA_VERSION,
        "version": __version__,
        "start_time": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(start)),
        "wall_time_s": round(time.time() - start, 3),
        "config": {"recipe": recipe, "seeds": seeds, "workers": workers, "params": params,
                   "output_dir": str(out_dir)},
        "points": [
            {"params_hash": phash, **entry} for phash, entry in sorted(point_index.items())
        ],
    }
    write_manifest(out_dir / "manifest.json", manifest)
    print(f"wrote {len(records)} records to {out_dir / 'records.csv'}")
    return 0


def _labels_from_manifest(run_dir: Path) -> dict[str, str]:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        return {}
    try:
        manifest = json.loads(manifest_path.read_text())
        return {pt["params_hash"]: pt["label"] for pt in manifest.get("points", [])}
    except (json.JSONDecodeError, KeyError, TypeError):
        return {}


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    csv_path = run_dir / "records.csv"
    if not csv_path.exists():
        print(f"{csv_path}: missing records.csv", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records = read_records_csv(csv_path)
    except (ValueError, OSError) as exc:
        print(f"{csv_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    labels = _labels_from_manifest(run_dir)
    # final value per (recipe, point, metric, seed)
    finals: dict[tuple, dict[int, tuple[int, float]]] = {}
    for rec in records:
        key = (rec.recipe, rec.params_hash, rec.metric)
        per_seed = finals.setdefault(key, {})
        prev = per_seed.get(rec.seed)
        if prev is None or rec.step >= prev[0]:
            per_seed[rec.seed] = (rec.step, rec.value)
    current_recipe = None
    for (recipe, phash, metric), per_seed in sorted(finals.items()):
        if recipe != current_recipe:
            print(f"== {recipe} ==")
            current_recipe = recipe
        values = [v for _, v in per_seed.values()]
        mean = statistics.fmean(values)
        if len(values) > 1:
            half = 1.96 * statistics.stdev(values) / math.sqrt(len(values))
            ci = f"+-{half:.6g}"
        else:
            ci = "+-n/a"
        label = labels.get(phash, phash)
        print(f"{label:>32}  {metric:<16} mean={mean:.6g} {ci} (seeds={len(values)})")
    return 0


def _act_from_args(args: argparse.Namespace) -> ActivationKind:
    if args.act == "relu":
        return ActivationKind.relu()
    if args.act == "crelu":
        return ActivationKind.clipped(args.clip)
    return ActivationKind.threshold()


def cmd_delta(args: argparse.Namespace) -> int:
    q = DeltaQuery(args.d, args.a, args.b, _act_from_args(args))
    print(f"delta={delta(q)!r}")
    return 0


def cmd_gal_exact(args: argparse.Namespace) -> int:
    if args.kind == "gaussian":
        q = GaussianGalQuery(args.d, args.a, args.sigma_b, args.n)
        print(f"gal={gal_gaussian_total(q)!r}")
    else:
        q = PerturbedGalQuery(args.d, args.mu)
        print(f"gal={gal_perturbed_exact(q, args.layer)!r}")
    return 0


def cmd_gal_mc(args: argparse.Namespace) -> int:
    hidden = tuple(int(h) for h in args.hidden.split(",") if h) if args.hidden else ()
    sizes = (args.d, *hidden, 1)
    spec = NetworkSpec(
        sizes,
        activation=_act_from_args(args),
        bias=args.bias,
        final_activation=not hidden and args.act != "threshold",
    )
    init = InitSpec(args.init, sigma=args.sigma, sparsity=args.sparsity)
    loss = {
        "correlation": LossKind.correlation(),
        "hinge": LossKind.hinge(args.beta),
        "squared": LossKind.squared(),
        "l1": LossKind.l1(),
    }[args.loss]
    target = TargetSpec.leap_poly() if args.target == "leap" else TargetSpec.full_parity(args.d)
    res = gal_mc(spec, init, loss, target, args.n_theta, args.n_inner, args.seed)
    print(f"gal={res.value!r}")
    print(f"se={res.std_err!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parity-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a recipe config and write CSV records")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("run_dir")
    p_rep.set_defaults(func=cmd_report)

    p_delta = sub.add_parser("delta", help="evaluate the parity/activation coupling")
    p_delta.add_argument("--d", type=int, required=True)
    p_delta.add_argument("--a", type=int, default=0)
    p_delta.add_argument("--b", type=float, required=True)
    p_delta.add_argument("--act", choices=["relu", "crelu"], default="relu")
    p_delta.add_argument("--clip", type=float, default=5.0)
    p_delta.set_defaults(func=cmd_delta)

    p_ge = sub.add_parser("gal-exact", help="exact alignment evaluators")
    p_ge.add_argument("--kind", choices=["gaussian", "perturbed"], required=True)
    p_ge.add_argument("--d", type=int, required=True)
    p_ge.add_argument("--a", type=int, default=0)
    p_ge.add_argument("--sigma-b", dest="sigma_b", type=float, default=0.0)
    p_ge.add_argument("--n", type=int, default=1)
    p_ge.add_argument("--mu", type=float, default=0.0)
    p_ge.add_argument("--layer", choices=["hidden", "output"], default="hidden")
    p_ge.set_defaults(func=cmd_gal_exact)

    p_mc = sub.add_parser("gal-mc", help="Monte-Carlo alignment estimate")
    p_mc.add_argument("--d", type=int, required=True)
    p_mc.add_argument("--hidden", default="", help="comma-separated hidden sizes")
    p_mc.add_argument("--init", default="gaussian")
    p_mc.add_argument("--sigma", type=float, default=0.0)
    p_mc.add_argument("--sparsity", type=float, default=0.0)
    p_mc.add_argument("--act", choices=["relu", "crelu", "threshold"], default="relu")
    p_mc.add_argument("--clip", type=float, default=5.0)
    p_mc.add_argument("--bias", action="store_true")
    p_mc.add_argument("--loss", choices=["correlation", "hinge", "squared", "l1"],
                      default="correlation")
    p_mc.add_argument("--beta", type=float, default=1.0)
    p_mc.add_argument("--target", choices=["full", "leap"], default="full")
    p_mc.add_argument("--n-theta", dest="n_theta", type=int, default=2000)
    p_mc.add_argument("--n-inner", dest="n_inner", type=int, default=128)
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.set_defaults(func=cmd_gal_mc)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
