"""Command line entry point: ``celluq <verb> [options] SEQUENCE``.

Options may also come from a TOML config file (``--config``); flags given on
the command line win.  Config keys are the long flag names with dashes
replaced by underscores, e.g.::

    cost = "l2"
    lambda = 1.0
    method = ["SM", "AS+TS"]
    k = 10
    noise = "gaussian_centroid"
    gamma = 0.1
    subsample = 10
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .bayes import exact_edge_probabilities, sni_edge_probabilities
from .costs import (
    DEFAULT_APPEAR_COST,
    DEFAULT_DISAPPEAR_COST,
    assignment_score,
    make_cost_model,
)
from .dbmc import Temperature, load_temperature, save_temperature
from .io import load_sequence
from .model import BOTTOM, ORACLE_LIMIT, enumerate_feasible
from .perturb import GAUSSIAN, NoiseSpec
from .pipeline import (
    MethodSpec,
    compute_pair,
    fit_method_temperature,
    run_experiment,
    subsample,
    write_edges_csv,
)
from .solver import solve_map, top_k

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("celluq")

DEFAULTS = {
    "format": "detections-jsonl",
    "cost": "l2",
    "lambda": 1.0,
    "appear_cost": DEFAULT_APPEAR_COST,
    "disappear_cost": DEFAULT_DISAPPEAR_COST,
    "method": ["SM"],
    "k": 10,
    "noise": GAUSSIAN,
    "gamma": 0.1,
    "radius": 1,
    "samples": 10,
    "seed": 0,
    "subsample": 1,
    "bins": 10,
    "quantiles": list(ev.DEFAULT_QUANTILES),
    "tau": None,
    "temperature_file": None,
    "calibration": None,
    "parental": False,
    "out_dir": "out",
    "workers": 1,
}


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _methods(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="celluq", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("sequence", help="detections .jsonl file or CTC directory")
        p.add_argument("--config", help="TOML file with default options")
        p.add_argument("--format", choices=["detections-jsonl", "ctc"])
        p.add_argument("--cost", choices=["l2", "activity", "overlap"])
        p.add_argument("--lambda", dest="lambda", type=float)
        p.add_argument("--appear-cost", type=float)
        p.add_argument("--disappear-cost", type=float)
        p.add_argument("--subsample", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--workers", type=int)

    def methods(p):
        p.add_argument("--method", type=_methods, help="comma list, e.g. SM,FP+A,AS+TS")
        p.add_argument("--k", type=int)
        p.add_argument("--noise", choices=["gaussian_centroid", "mask_inflate_deflate"])
        p.add_argument("--gamma", type=float)
        p.add_argument("--radius", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--temperature-file")
        p.add_argument("--parental", action="store_true", default=None)

    p = sub.add_parser("track", help="MAP assignment for every frame pair")
    common(p)
    p = sub.add_parser("uncertainty", help="edge probabilities per method")
    common(p)
    methods(p)
    p = sub.add_parser("fit-temp", help="fit a temperature on a calibration sequence")
    common(p)
    methods(p)
    p = sub.add_parser("evaluate", help="ECE and sparsification against ground truth")
    common(p)
    methods(p)
    p.add_argument("--calibration", help="sequence used only for temperature fitting")
    p.add_argument("--bins", type=int)
    p.add_argument("--quantiles", type=_floats)
    p = sub.add_parser("oracle", help="exhaustive cross-check on small frame pairs")
    common(p)
    p.add_argument("--k", type=int)
    return parser


def resolve_options(args) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            cfg = tomllib.load(fh)
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        opts.update(cfg)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            opts[key] = value
    if isinstance(opts["method"], str):
        opts["method"] = _methods(opts["method"])
    return opts


def method_specs(opts) -> list:
    noise = NoiseSpec(opts["noise"], opts["gamma"], opts["radius"], opts["seed"], opts["samples"])
    tau = None
    if opts["tau"] is not None:
        tau = Temperature(opts["tau"])
    elif opts["temperature_file"]:
        tau = Temperature(load_temperature(opts["temperature_file"])["tau"])
    out = []
    for name in opts["method"]:
        needs_noise = name.split("+TS")[0] in ("FP", "FP+A")
        out.append(MethodSpec(name, opts["cost"], noise if needs_noise else None, opts["k"],
                              tau if name.endswith("+TS") else None, bool(opts["parental"])))
    return out


def _load(opts, path):
    seq = load_sequence(path, opts["format"])
    return subsample(seq, opts["subsample"])


def _cost_model(opts):
    return make_cost_model(opts["cost"], opts["lambda"], opts["appear_cost"],
                           opts["disappear_cost"])


def _config_record(opts, verb):
    rec = {k: v for k, v in sorted(opts.items()) if k != "out_dir"}
    rec["verb"] = verb
    for key in ("calibration", "temperature_file"):
        if rec.get(key):
            rec[key] = Path(rec[key]).name
    return rec


def cmd_track(opts, args):
    seq = _load(opts, args.sequence)
    cm = _cost_model(opts)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_pair", "mother", "daughter", "log_score"])
        for src, tgt in seq.pairs():
            sol = solve_map(src, tgt, cm)
            key = f"{src.time_index}-{tgt.time_index}"
            for e in sorted(sol.assignment.edges):
                mother = "_" if e.mother == BOTTOM else src[e.mother].id
                daughter = "_" if e.daughter == BOTTOM else tgt[e.daughter].id
                w.writerow([key, mother, daughter, repr(round(sol.log_score, 12))])
    _manifest(out, _config_record(opts, "track"), ["tracks.csv"], [])
    return 0


def cmd_uncertainty(opts, args):
    seq = _load(opts, args.sequence)
    cm = _cost_model(opts)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    files, failures = [], []
    pairs = seq.pairs()
    for method in method_specs(opts):
        try:
            results = [compute_pair(method, s, t, cm) for s, t in pairs]
        except Exception as exc:  # noqa: BLE001 - recorded in the manifest
            logger.error("%s failed: %s", method.name, exc)
            failures.append({"method": method.name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        name = f"edges_{method.name}.csv"
        write_edges_csv(out / name, pairs, results)
        files.append(name)
    _manifest(out, _config_record(opts, "uncertainty"), files, failures)
    return 1 if failures else 0


def cmd_fit_temp(opts, args):
    seq = _load(opts, args.sequence)
    cm = _cost_model(opts)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    methods = method_specs(opts)
    if len(methods) != 1:
        raise SystemExit("fit-temp takes exactly one --method")
    tau = fit_method_temperature(seq, methods[0], cm, opts["workers"])
    name = methods[0].base + "+TS"
    save_temperature(out / "temperature.json", tau, name, cm.name, seq.subsample_factor)
    _manifest(out, _config_record(opts, "fit-temp"), ["temperature.json"], [])
    print(f"{name}: tau = {tau.tau:.6g} (log tau = {tau.log_tau:.4f})")
    return 0


def cmd_evaluate(opts, args):
    seq = _load(opts, args.sequence)
    calibration = _load(opts, opts["calibration"]) if opts["calibration"] else None
    cm = _cost_model(opts)
    result = run_experiment(seq, method_specs(opts), cm, opts["bins"], opts["quantiles"],
                            opts["out_dir"], calibration, opts["workers"],
                            _config_record(opts, "evaluate"))
    for name, rep in result["reports"].items():
        imp = ", ".join(f"{k}={v:+.4f}" for k, v in sorted(rep.improvement.items()))
        print(f"{name:10s} ECE={rep.ece:.4f} acc={rep.accuracy:.4f} {imp}")
    for f in result["failures"]:
        print(f"{f['method']:10s} FAILED: {f['error']}", file=sys.stderr)
    return 1 if result["failures"] else 0


def cmd_oracle(opts, args):
    seq = _load(opts, args.sequence)
    cm = _cost_model(opts)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows, ok = [], True
    for src, tgt in seq.pairs():
        key = f"{src.time_index}-{tgt.time_index}"
        if len(src) > ORACLE_LIMIT or len(tgt) > ORACLE_LIMIT:
            rows.append({"frame_pair": key, "status": "skipped"})
            continue
        costs = cm.matrix(src, tgt)
        space = list(enumerate_feasible(len(src), len(tgt)))
        scores = sorted((assignment_score(costs, a, cm.appear_cost, cm.disappear_cost)
                         for a in space), reverse=True)
        map_gap = abs(solve_map(src, tgt, cm).log_score - scores[0])
        ranked = top_k(src, tgt, cm, len(space))
        topk_gap = max(abs(r.log_score - s) for r, s in zip(ranked, scores))
        exact = exact_edge_probabilities(src, tgt, cm)
        sni = sni_edge_probabilities(ranked, src, tgt, cm)
        p_gap = float(np.max(np.abs(exact.values - sni.values), initial=0.0))
        good = map_gap <= 1e-9 and topk_gap <= 1e-9 and p_gap <= 1e-9 and len(ranked) == len(space)
        ok &= good
        rows.append({"frame_pair": key, "status": "ok" if good else "mismatch",
                     "feasible_count": len(space), "map_gap": map_gap,
                     "topk_gap": topk_gap, "probability_gap": p_gap})
    with open(out / "oracle.json", "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r in rows:
        print(f"{r['frame_pair']}: {r['status']}")
    return 0 if ok else 1


def _manifest(out, config, files, failures):
    doc = {
        "config": config,
        "outputs": [{"file": f, "sha256": hashlib.sha256((out / f).read_bytes()).hexdigest()}
                    for f in files],
        "failures": failures,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


COMMANDS = {
    "track": cmd_track,
    "uncertainty": cmd_uncertainty,
    "fit-temp": cmd_fit_temp,
    "evaluate": cmd_evaluate,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    opts = resolve_options(args)
    return COMMANDS[args.verb](opts, args)


if __name__ == "__main__":
    sys.exit(main())
