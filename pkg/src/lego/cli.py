"""Command-line front end.

Every verb prints a one-line JSON summary on stdout.  Exit status is 0 on
success, 1 when a run fails or a validation check does not hold, and 2 on
usage errors.  Settings are resolved as defaults < ``--preset`` <
``--config`` file < ``--override key=value`` < dedicated flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from threadpoolctl import threadpool_limits

from . import __version__
from . import dataset as ds
from . import pipeline as pl
from . import spectral as sp
from .errors import LegoError

THREADS_ENV = "LEGO_THREADS"

RUN_VERBS = ("generate", "estimate", "evaluate", "embed", "boundary", "spectrum", "ablate-noise", "ablate-hyper")
VALIDATE_VERBS = ("validate-tube", "validate-stability")
OVERRIDE_ALIASES = {"method": "methods", "n": "dataset.params.n"}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lego", description="Tangent space estimation from noisy point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--schema", action="store_true", help="print the JSON schema of the run configuration and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", metavar="VERB")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, help=f"BLAS threads (default from ${THREADS_ENV})")
    common.add_argument("--out", help="output directory")

    run = argparse.ArgumentParser(add_help=False, parents=[common])
    run.add_argument("--config", help="JSON run configuration")
    run.add_argument("--preset", choices=sorted(pl.PRESETS), help="start from a named configuration")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="set a config key (dotted for nested keys, value parsed as JSON when possible)")

    helps = {
        "generate": "sample a dataset (with noise) and write it",
        "estimate": "estimate tangent frames and discrepancy reports",
        "evaluate": "recompute discrepancy reports from a run directory",
        "embed": "align local views into a global embedding",
        "boundary": "detect boundary points",
        "spectrum": "write the low-frequency Laplacian eigenpairs",
        "ablate-noise": "discrepancy as the noise is scaled",
        "ablate-hyper": "discrepancy over a grid of (m, m0)",
        "validate-tube": "thin-rectangle spectrum checks",
        "validate-stability": "noisy vs clean Laplacian deviation as n grows",
    }
    for verb in RUN_VERBS:
        p = sub.add_parser(verb, parents=[run], help=helps[verb])
        if verb == "evaluate":
            p.add_argument("--run-dir", help="directory written by 'estimate' (default --out)")
        if verb == "embed":
            p.add_argument("--method", choices=["lego", "lpca"], default="lego")
        if verb == "boundary":
            p.add_argument("--percentile", type=float)
        if verb == "ablate-noise":
            p.add_argument("--sigmas", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
        if verb == "ablate-hyper":
            p.add_argument("--m-grid", type=_ints, default=[10, 20, 30, 40, 50, 60])
            p.add_argument("--m0-grid", type=_ints, default=[100])
    t = sub.add_parser("validate-tube", parents=[common], help=helps["validate-tube"])
    t.add_argument("--grid-x", type=int, default=400)
    t.add_argument("--grid-y", type=int, default=9)
    t.add_argument("--length", type=float, default=1.0)
    t.add_argument("--halfwidth", type=float, default=0.04)
    t.add_argument("--k-nn", type=int, default=48)
    t.add_argument("--bandwidth", type=float)
    t.add_argument("--m0", type=int, default=20)
    s = sub.add_parser("validate-stability", parents=[common], help=helps["validate-stability"])
    s.add_argument("--n-grid", type=_ints, default=[250, 500, 1000, 2000])
    s.add_argument("--c", type=float, default=0.01)
    s.add_argument("--bandwidth", type=float, default=0.1)
    s.add_argument("--seeds", type=int, default=5)
    return parser


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data: dict, item: str) -> dict:
    if "=" not in item:
        raise UsageError(f"--override expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    key = OVERRIDE_ALIASES.get(key.strip(), key.strip())
    parts = key.split(".")
    fields = pl.RunConfig.model_fields
    if parts[0] not in fields:
        raise UsageError(f"--override: unknown key {parts[0]!r}")
    if len(parts) > 1 and parts[0] in ("dataset", "noise") and parts[1] not in fields[parts[0]].annotation.model_fields:
        raise UsageError(f"--override: unknown key {key!r}")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise UsageError(f"--override: {key!r} is not a nested key")
    node[parts[-1]] = _parse_value(raw)
    return data


def resolve_config(args) -> pl.RunConfig:
    data: dict = {}
    if args.preset:
        data = pl.merge(data, json.loads(json.dumps(pl.PRESETS[args.preset])))
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"--config: file not found: {path}")
        try:
            pl.merge(data, json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config: invalid JSON in {path}: {exc}") from None
    for item in args.override:
        apply_override(data, item)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    try:
        return pl.RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first["loc"]) or "config"
        raise UsageError(f"invalid configuration at {loc!r}: {first['msg']}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.generic,)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(out, name, payload):
    if out:
        path = Path(out) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(payload), indent=2))


def run_verb(args) -> tuple[dict, int]:
    verb = args.verb
    if verb == "validate-tube":
        rep = pl.tube_spectrum_validation(args.grid_x, args.grid_y, args.length, args.halfwidth, args.k_nn,
                                          args.bandwidth, args.m0)
        _write_json(args.out, "tube_validation.json", rep)
        if args.out:
            pl.write_table(rep["rows"], Path(args.out) / "tube_validation.csv")
        summary = {k: rep[k] for k in ("passed", "checks", "max_vertical_low", "first_vertical_index",
                                       "second_correlation", "ambiguous", "runtime")}
        return summary, 0 if rep["passed"] else 1
    if verb == "validate-stability":
        rep = pl.laplacian_stability_sweep(args.n_grid, args.c, args.bandwidth, args.seed or 0, args.seeds)
        _write_json(args.out, "stability.json", rep)
        if args.out:
            pl.write_table(rep["rows"], Path(args.out) / "stability.csv")
        return {k: rep[k] for k in ("passed", "checks", "slopes", "runtime")}, 0 if rep["passed"] else 1

    config = resolve_config(args)
    if verb == "generate":
        cloud = pl.make_cloud(config)
        paths = ds.write_cloud(cloud, Path(config.out or ".") / "cloud")
        return {"n": cloud.n, "p": cloud.p, "artifacts": paths}, 0
    if verb == "estimate":
        res = pl.run_estimation(config)
        return res.summary(), 0
    if verb == "evaluate":
        run_dir = args.run_dir or config.out
        if not run_dir:
            raise UsageError("evaluate: give --run-dir or --out")
        reports = pl.evaluate_artifacts(run_dir)
        return {"reports": {k: r.summary() for k, r in reports.items()}}, 0
    if verb == "spectrum":
        res = pl.run_estimation(config.model_copy(update={"methods": ["lego"]}), persist=False)
        paths = sp.write_spectrum(res.basis, config.out or ".", "spectrum")
        return {"m0": res.basis.m0, "eigenvalues": res.basis.eigenvalues[:10].tolist(), "artifacts": paths}, 0
    if verb == "embed":
        res, alignment, Z = pl.run_embedding(config, args.method)
        summary = {"method": args.method, "alignment_error": alignment.error, "history": alignment.history,
                   "warnings": len(alignment.warnings), "artifacts": res.artifacts}
        if res.cloud.clean is not None and res.cloud.clean.params.shape[1] == Z.shape[1] \
                and config.dataset.name == "swiss_roll":
            summary["stress_vs_chart"] = pl.clean_chart_stress(Z, res.cloud.clean.params)
        return summary, 0
    if verb == "boundary":
        if args.percentile is not None:
            config = config.model_copy(update={"boundary_percentile": args.percentile})
        res, rep = pl.run_boundary(config)
        return {k: v for k, v in rep.items() if k != "reports"} | {"artifacts": res.artifacts}, 0
    if verb == "ablate-noise":
        rows = pl.noise_ablation(config, args.sigmas)
        return {"rows": rows}, 0
    if verb == "ablate-hyper":
        rows = pl.hyperparam_sweep(config, args.m_grid, args.m0_grid)
        return {"rows": rows}, 0
    raise UsageError(f"unknown verb {verb!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.schema:
        print(json.dumps(pl.RunConfig.model_json_schema()))
        return 0
    if args.verb is None:
        parser.print_usage(sys.stderr)
        print("lego: error: a verb is required", file=sys.stderr)
        return 2
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            print(f"lego {args.verb}: error: ${THREADS_ENV} must be an integer", file=sys.stderr)
            return 2
    if threads is not None and threads < 1:
        print(f"lego {args.verb}: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=threads):
            summary, status = run_verb(args)
    except UsageError as exc:
        print(f"lego {args.verb}: error: {exc}", file=sys.stderr)
        return 2
    except LegoError as exc:
        print(json.dumps({"verb": args.verb, "status": "error", "error": str(exc)}))
        print(f"lego {args.verb}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_jsonable({"verb": args.verb, "status": "ok" if status == 0 else "failed", **summary})))
    return status


if __name__ == "__main__":
    sys.exit(main())
