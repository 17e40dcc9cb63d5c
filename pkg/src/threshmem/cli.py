"""Command-line entry point wiring all modules.

Commands: generate, build, eval, audit, lowerbound, separate, bits, sweep.
Every command writes machine-readable artifacts (CSV/JSON) plus a manifest
recording the full parameter set, and keeps human chatter on stderr. Reruns
driven by a manifest reproduce integer artifacts bit-exactly.

Exit codes: 0 ok, 1 I/O failure, 2 input-contract violation,
3 construction retry exhaustion, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, capacity, construct, geometry, lowerbound, netcore

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONTRACT = 2
EXIT_RETRY = 3
EXIT_INVARIANT = 4

SEED_ENV_VAR = "THRESHMEM_SEED"


class CliError(Exception):
    def __init__(self, code: int, message: str, **details):
        super().__init__(message)
        self.code = code
        self.details = details


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(EXIT_CONTRACT, f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _mode(kind: str, delta: float) -> geometry.SeparationMode:
    try:
        if kind == "angular":
            return geometry.SeparationMode.angular(delta)
        return geometry.SeparationMode.distance(delta)
    except ValueError as exc:
        raise CliError(EXIT_CONTRACT, str(exc))


def _load_dataset(path) -> geometry.Dataset:
    try:
        return geometry.load_dataset_csv(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read dataset {path}: {exc}")
    except ValueError as exc:
        raise CliError(EXIT_CONTRACT, f"bad dataset {path}: {exc}")


def _write_json(path, payload) -> None:
    try:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}")


def _manifest_path(args, primary_out) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    out = Path(primary_out)
    return out.with_name(out.stem + ".manifest.json")


def _emit_manifest(args, command: str, params: dict, artifacts: dict, started: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "params": params,
        "seed": params.get("seed"),
        "artifacts": artifacts,
        "wall_clock_s": round(time.monotonic() - started, 6),
    }
    if getattr(args, "manifest", None):
        path = Path(args.manifest)
    elif artifacts:
        path = _manifest_path(args, next(iter(artifacts.values())))
    else:
        return  # stdout-only invocation with no anchor for a manifest
    _write_json(path, manifest)


def _info(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(args) -> int:
    started = time.monotonic()
    mode = _mode(args.mode, args.delta)
    try:
        ds = geometry.generate_separated_dataset(args.n, args.d, mode, args.seed)
    except geometry.InfeasibleGenerationError as exc:
        raise CliError(EXIT_CONTRACT, str(exc))
    except ValueError as exc:
        raise CliError(EXIT_CONTRACT, str(exc))
    try:
        geometry.save_dataset_csv(ds, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    params = {"n": args.n, "d": args.d, "mode": args.mode, "delta": args.delta,
              "seed": args.seed}
    _emit_manifest(args, "generate", params, {"out": str(args.out)}, started)
    _info(f"generated {ds.n} points in d={ds.dim} -> {args.out}")
    return EXIT_OK


def _build_params(args) -> dict:
    return {
        "dataset": str(args.dataset),
        "mode": args.mode,
        "delta": args.delta,
        "seed": args.seed,
        "eps1": args.eps1,
        "eps2": args.eps2,
        "c_dist": args.c_dist,
        "max_retries": args.max_retries,
    }


def cmd_build(args) -> int:
    started = time.monotonic()
    if args.from_manifest:
        try:
            manifest = json.loads(Path(args.from_manifest).read_text())
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read manifest {args.from_manifest}: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONTRACT, f"bad manifest {args.from_manifest}: {exc}")
        if manifest.get("command") != "build":
            raise CliError(EXIT_CONTRACT, "manifest does not describe a build command")
        params = manifest["params"]
        for key, value in params.items():
            setattr(args, key, value)
        if args.out is None:
            args.out = manifest["artifacts"]["out"]
        if args.report is None:
            args.report = manifest["artifacts"]["report"]
    if args.out is None or args.report is None or args.dataset is None or args.delta is None:
        raise CliError(EXIT_CONTRACT, "build requires --dataset, --delta, --out and --report")

    ds = _load_dataset(args.dataset)
    cfg = construct.ConstructionConfig(
        mode=_mode(args.mode, args.delta),
        eps1=args.eps1,
        eps2=args.eps2,
        seed=args.seed,
        max_retries=args.max_retries,
        c_dist=args.c_dist,
    )
    try:
        net, report = construct.construct_memorizer(ds, cfg)
    except construct.DatasetNotSeparatedError as exc:
        raise CliError(EXIT_CONTRACT, str(exc),
                       worst_pair=list(exc.verdict.worst_pair) if exc.verdict and exc.verdict.worst_pair else None,
                       worst_value=exc.verdict.worst_value if exc.verdict else None)
    except construct.ConstructionRetryError as exc:
        raise CliError(EXIT_RETRY, str(exc),
                       worst_pair=list(exc.worst_pair) if exc.worst_pair else None,
                       worst_value=exc.worst_value)
    except construct.MemorizationCheckError as exc:
        raise CliError(EXIT_INVARIANT, str(exc))

    try:
        netcore.save_network(net, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    _write_json(args.report, report.to_json_dict())
    _emit_manifest(args, "build", _build_params(args),
                   {"out": str(args.out), "report": str(args.report)}, started)
    _info(
        f"memorized {report.n} points: {report.total_neurons} neurons "
        f"(bound {report.neuron_bound}), d1={report.d1} d2={report.d2} K={report.K}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.monotonic()
    try:
        net = netcore.load_network(args.network)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read network {args.network}: {exc}")
    except netcore.SerializationError as exc:
        raise CliError(EXIT_CONTRACT, f"bad network {args.network}: {exc}")
    ds = _load_dataset(args.dataset)
    if ds.dim != net.input_dim:
        raise CliError(EXIT_CONTRACT,
                       f"dataset dim {ds.dim} != network input dim {net.input_dim}")
    preds = netcore.forward_batch(net, ds.features)
    try:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "label", "prediction"])
            for i in range(ds.n):
                writer.writerow([i, int(ds.labels[i]), int(preds[i])])
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    correct = int((preds == ds.labels).sum())
    summary = {"n": ds.n, "correct": correct, "accuracy": correct / ds.n}
    _write_json(args.summary, summary)
    _emit_manifest(args, "eval",
                   {"network": str(args.network), "dataset": str(args.dataset), "seed": None},
                   {"out": str(args.out), "summary": str(args.summary)}, started)
    _info(f"accuracy {correct}/{ds.n} = {correct / ds.n:.4f}")
    return EXIT_OK


def cmd_audit(args) -> int:
    started = time.monotonic()
    try:
        net = netcore.load_network(args.network)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read network {args.network}: {exc}")
    except netcore.SerializationError as exc:
        raise CliError(EXIT_CONTRACT, f"bad network {args.network}: {exc}")
    totals = netcore.audit(net)
    payload = {
        "neurons": totals.neurons,
        "weight_entries": totals.weight_entries,
        "bias_count": totals.bias_count,
        "weights": totals.weights,
        "max_abs_integer_weight": totals.max_abs_integer_weight,
        "layers": [
            {
                "domain": la.domain,
                "neurons": la.neurons,
                "weight_entries": la.weight_entries,
                "biases": la.biases,
                "max_abs_integer_weight": la.max_abs_integer_weight,
            }
            for la in totals.layers
        ],
    }
    _write_json(args.out, payload)
    _emit_manifest(args, "audit", {"network": str(args.network), "seed": None},
                   {"out": str(args.out)}, started)
    _info(f"{totals.neurons} neurons, {totals.weights} weights (incl. biases)")
    return EXIT_OK


def cmd_lowerbound(args) -> int:
    started = time.monotonic()
    try:
        cds = lowerbound.build_cluster_dataset(args.n, args.d, args.delta, args.seed)
    except (ValueError, geometry.InfeasibleGenerationError) as exc:
        raise CliError(EXIT_CONTRACT, str(exc))
    try:
        lowerbound.save_clustered_csv(cds, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    params = {"n": args.n, "d": args.d, "delta": args.delta, "seed": args.seed}
    _emit_manifest(args, "lowerbound", params, {"out": str(args.out)}, started)
    _info(f"clustered dataset: {cds.num_clusters} clusters x {cds.num_clusters} points -> {args.out}")
    return EXIT_OK


def cmd_separate(args) -> int:
    started = time.monotonic()
    try:
        points, labels, _ = lowerbound.load_points_csv(args.points)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read points {args.points}: {exc}")
    except ValueError as exc:
        raise CliError(EXIT_CONTRACT, str(exc))
    try:
        raw = json.loads(Path(args.planes).read_text())
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read planes {args.planes}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONTRACT, f"bad planes file {args.planes}: {exc}")
    if not isinstance(raw, dict) or not isinstance(raw.get("planes"), list):
        raise CliError(EXIT_CONTRACT, f'{args.planes}: expected {{"planes": [...]}}')
    planes = []
    for k, entry in enumerate(raw["planes"]):
        try:
            planes.append(lowerbound.Hyperplane.from_general(entry["normal"], entry["offset"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(EXIT_CONTRACT, f"{args.planes}: plane {k}: {exc}")
    mode = lowerbound.ALL_PAIRS if args.mode == "all" else lowerbound.OPPOSITE_LABEL_PAIRS
    result = lowerbound.count_separated_pairs(points, labels, planes, mode)
    payload = {
        "mode": args.mode,
        "separated": result.separated,
        "total": result.total,
        "on_plane_incidents": result.on_plane_incidents,
    }
    _write_json(args.out, payload)
    _emit_manifest(args, "separate",
                   {"points": str(args.points), "planes": str(args.planes),
                    "mode": args.mode, "seed": None},
                   {"out": str(args.out)}, started)
    _info(f"separated {result.separated}/{result.total} required pairs")
    return EXIT_OK


def cmd_bits(args) -> int:
    started = time.monotonic()
    try:
        query = capacity.CapacityQuery(args.n, args.d, args.delta)
    except ValueError as exc:
        raise CliError(EXIT_CONTRACT, str(exc))
    pb = capacity.packing_bounds(query.d, query.delta)
    lower = capacity.bits_lower_bound(query)
    upper = capacity.bits_upper_bound(query)
    payload = {
        "n": query.n,
        "d": query.d,
        "delta": query.delta,
        "lower_bits": lower.bits,
        "upper_bits": upper.bits,
        "packing_lower_log2": pb.lower_log2,
        "packing_upper_log2": pb.upper_log2,
        "flags": {
            "lower_degenerate": lower.degenerate,
            "packing_lower_clamped": pb.lower_clamped,
        },
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        _write_json(args.out, payload)
    _emit_manifest(args, "bits",
                   {"n": args.n, "d": args.d, "delta": args.delta, "seed": None},
                   {"out": str(args.out)} if args.out else {}, started)
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = time.monotonic()
    deltas = args.deltas
    if not deltas:
        raise CliError(EXIT_CONTRACT, "sweep needs a nonempty --deltas list")
    seeds = list(range(args.seeds)) if args.seed_list is None else args.seed_list
    if not seeds:
        raise CliError(EXIT_CONTRACT, "sweep needs at least one seed")

    rows = []
    widths = []
    for delta_idx, delta in enumerate(deltas):
        for seed in seeds:
            cell_seed = int(np.random.default_rng(
                np.random.SeedSequence(args.seed, spawn_key=(int(seed), delta_idx))
            ).integers(0, 2**62))
            row = {"delta": delta, "seed": seed}
            try:
                mode = _mode(args.mode, delta)
                ds = geometry.generate_separated_dataset(args.n, args.d, mode, cell_seed)
                cfg = construct.ConstructionConfig(mode=mode, seed=cell_seed)
                net, report = construct.construct_memorizer(ds, cfg)
                row.update(
                    first_layer_neurons=report.d1,
                    total_neurons=report.total_neurons,
                    total_weights=report.total_weights,
                    retries=report.retries["first_layer"] + report.retries["compression"],
                    error="",
                )
                widths.append((delta, report.d1))
            except Exception as exc:  # per-cell failure recorded, sweep continues
                row.update(first_layer_neurons="", total_neurons="",
                           total_weights="", retries="", error=str(exc))
            rows.append(row)

    try:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=[
                "delta", "seed", "first_layer_neurons", "total_neurons",
                "total_weights", "retries", "error"])
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")

    slope = None
    distinct = sorted({d for d, _ in widths})
    if len(distinct) >= 2:
        xs = np.log([1.0 / d for d, _ in widths])
        ys = np.log([w for _, w in widths])
        slope = float(np.polyfit(xs, ys, 1)[0])
    summary = {"n": args.n, "d": args.d, "deltas": deltas, "rows": len(rows),
               "loglog_slope_first_layer_vs_inv_delta": slope}
    _write_json(args.summary, summary)
    _emit_manifest(args, "sweep",
                   {"n": args.n, "d": args.d, "mode": args.mode, "deltas": deltas,
                    "seeds": seeds, "seed": args.seed},
                   {"out": str(args.out), "summary": str(args.summary)}, started)
    _info(f"swept {len(rows)} cells; slope={slope}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: ${SEED_ENV_VAR} or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threshmem",
        description="Constructive memorization with threshold networks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a separated dataset CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mode", choices=["angular", "distance"], default="distance")
    p.add_argument("--delta", type=float, required=True)
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build", help="construct a memorizing network")
    p.add_argument("--dataset")
    p.add_argument("--mode", choices=["angular", "distance"], default="distance")
    p.add_argument("--delta", type=float)
    _add_seed(p)
    p.add_argument("--eps1", type=float, default=0.1)
    p.add_argument("--eps2", type=float, default=0.1)
    p.add_argument("--c-dist", dest="c_dist", type=float, default=13.0)
    p.add_argument("--max-retries", dest="max_retries", type=int, default=20)
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--manifest")
    p.add_argument("--from-manifest", dest="from_manifest",
                   help="rerun a previous build from its manifest")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="evaluate a network on a dataset CSV")
    p.add_argument("--network", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="per-point predictions CSV")
    p.add_argument("--summary", required=True, help="accuracy summary JSON")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="size accounting of a network JSON")
    p.add_argument("--network", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("lowerbound", help="build a clustered lower-bound dataset")
    p.add_argument("--n", type=int, required=True, help="perfect square >= 4")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("separate", help="count hyperplane-separated pairs")
    p.add_argument("--points", required=True, help="dataset CSV (cluster column optional)")
    p.add_argument("--planes", required=True, help='JSON {"planes": [{"normal": [...], "offset": b}]}')
    p.add_argument("--mode", choices=["all", "opposite"], default="opposite")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("bits", help="bit-complexity bounds for a query")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--out", help="also write the JSON here")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_bits)

    p = sub.add_parser("sweep", help="size scaling across deltas")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mode", choices=["angular", "distance"], default="distance")
    p.add_argument("--deltas", type=_delta_list, required=True,
                   help="comma-separated list, e.g. 0.4,0.2,0.1,0.05")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds per delta")
    p.add_argument("--seed-list", dest="seed_list", type=_int_list,
                   help="explicit comma-separated seeds (overrides --seeds)")
    _add_seed(p)
    p.add_argument("--out", required=True, help="sweep table CSV")
    p.add_argument("--summary", required=True, help="slope summary JSON")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_sweep)

    return parser


def _delta_list(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad delta list {text!r}")
    return values


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", None) is None and hasattr(args, "seed"):
            args.seed = _default_seed()
        return args.func(args)
    except CliError as exc:
        payload = {"error": {"code": exc.code, "type": type(exc).__name__,
                             "message": str(exc), **exc.details}}
        print(json.dumps(payload, sort_keys=True))
        _info(f"error: {exc}")
        return exc.code
    except OSError as exc:
        print(json.dumps({"error": {"code": EXIT_IO, "type": "OSError",
                                    "message": str(exc)}}))
        _info(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
