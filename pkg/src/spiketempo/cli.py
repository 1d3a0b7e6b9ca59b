"""Command-line entry point.

Subcommands: gen-data, bin, train, eval, transform, profile-energy,
profile-throughput, ablate. Every run that writes artifacts also writes a
manifest (config echo, seed, sha256 of each artifact) sufficient to
reproduce it. Exit codes: 0 success, 2 usage error, 3 configuration or
data-format error, 1 runtime failure. The ``SPIKETEMPO_THREADS``
environment variable caps ablation-row parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    IngestionError,
    ShapeError,
    SpikeTempoError,
)
from .network import (
    NetworkSpec,
    TrPlacement,
    build_network,
    count_parameters,
    forward_pass,
    load_checkpoint,
    load_network_spec,
    network_spec_to_dict,
    save_checkpoint,
)
from .profiling import (
    energy,
    format_energy_kv,
    format_energy_text,
    format_model_table,
    format_throughput_kv,
    format_throughput_text,
    model_row,
    throughput,
)
from .raster import (
    dataset_from_streams,
    default_synth_spec,
    gen_event_streams,
    load_event_file,
    load_raster_cache,
    load_synth_spec,
    save_event_file,
    save_raster_cache,
    save_synth_spec,
    split_dataset,
    SpikeRaster,
)
from .temporal import max_pool_time, nar_residual, tr_no_overlap, tr_overlap
from .training import TrainConfig, evaluate, train, train_run_to_dict


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, seed, artifacts) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifacts": {p.name: _sha256(p) for p in artifacts},
        "version": __version__,
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _max_threads() -> int:
    raw = os.environ.get("SPIKETEMPO_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SPIKETEMPO_THREADS must be an integer, got {raw!r}") from None


def _load_dataset(args):
    streams = load_event_file(args.data)
    units = args.units
    if units is None:
        units = max((u for s in streams for _, u in s.events), default=-1) + 1
        if units < 1:
            raise ConfigError("cannot infer unit count from an event file with no events")
    return dataset_from_streams(streams, args.bins, units, binary=not args.counts)


def _add_data_args(sub, bins_default=100):
    sub.add_argument("--data", required=True, help="event file (JSON lines)")
    sub.add_argument("--bins", type=int, default=bins_default, help="time bins per sample")
    sub.add_argument("--units", type=int, default=None, help="unit count (default: inferred)")
    sub.add_argument("--counts", action="store_true", help="keep per-bin counts instead of binarizing")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    out = _out_dir(args)
    if args.spec:
        spec = load_synth_spec(args.spec)
    else:
        spec = default_synth_spec(
            n_classes=args.classes,
            n_units=args.units,
            duration=args.duration,
            units_per_class=args.units_per_class,
            noise_rate=args.noise_rate,
            seed=args.seed,
        )
    streams = gen_event_streams(spec, args.count_per_class)
    events_path = out / args.name
    save_event_file(events_path, streams)
    spec_path = out / "synth_spec.json"
    save_synth_spec(spec_path, spec)
    _write_manifest(
        out, "gen-data",
        {"count_per_class": args.count_per_class, "spec": spec_path.name},
        spec.seed, [events_path, spec_path],
    )
    print(f"wrote {len(streams)} samples to {events_path}")
    return 0


def _cmd_bin(args) -> int:
    out = _out_dir(args)
    streams = load_event_file(args.data)
    if not streams:
        raise ConfigError(f"{args.data}: no samples")
    units = args.units
    if units is None:
        units = max((u for s in streams for _, u in s.events), default=-1) + 1
        if units < 1:
            raise ConfigError("cannot infer unit count from an event file with no events")
    from .raster import bin_events

    rasters = [bin_events(s, args.bins, units, binary=not args.counts) for s in streams]
    stacked = np.concatenate([r.values for r in rasters], axis=1)
    cache_path = out / args.name
    save_raster_cache(cache_path, SpikeRaster(stacked, binary=not args.counts))
    artifacts = [cache_path]
    if args.labels_name:
        labels_path = out / args.labels_name
        with open(labels_path, "w", encoding="utf-8") as f:
            json.dump([s.label for s in streams], f)
            f.write("\n")
        artifacts.append(labels_path)
    _write_manifest(
        out, "bin",
        {"data": str(args.data), "bins": args.bins, "units": units, "binary": not args.counts},
        None, artifacts,
    )
    print(f"wrote raster cache {cache_path} with shape ({args.bins}, {len(streams)}, {units})")
    return 0


def _parse_fractions(raw: str):
    parts = raw.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--fractions needs three comma-separated values, got {raw!r}")
    return tuple(float(p) for p in parts)


def _train_config_from_args(args) -> TrainConfig:
    base = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                base = json.load(f)
            except json.JSONDecodeError as e:
                raise IngestionError(f"{args.config}: invalid JSON ({e.msg})") from e
    allowed = {
        "epochs", "batch_size", "learning_rate", "optimizer", "momentum",
        "beta1", "beta2", "adam_eps", "seed", "soft_forward",
    }
    unknown = set(base) - allowed
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    cfg = TrainConfig(**base)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.optimizer is not None:
        overrides["optimizer"] = args.optimizer
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def _run_training(spec: NetworkSpec, dataset, config: TrainConfig, fractions, out: Path):
    splits = split_dataset(dataset, fractions, seed=config.seed)
    net = build_network(spec, seed=config.seed)
    run = train(net, splits, config)
    ck_path = out / "checkpoint.stnet"
    save_checkpoint(ck_path, net)
    run_path = out / "trainrun.json"
    with open(run_path, "w", encoding="utf-8") as f:
        json.dump(train_run_to_dict(run), f, indent=2, sort_keys=True)
        f.write("\n")
    return net, run, [ck_path, run_path]


def _cmd_train(args) -> int:
    out = _out_dir(args)
    dataset = _load_dataset(args)
    spec = load_network_spec(args.net)
    config = _train_config_from_args(args)
    fractions = _parse_fractions(args.fractions)
    net, run, artifacts = _run_training(spec, dataset, config, fractions, out)
    _write_manifest(
        out, "train",
        {
            "data": str(args.data),
            "net": network_spec_to_dict(spec),
            "bins": args.bins,
            "fractions": list(fractions),
            "train_config": train_run_to_dict(run)["config"],
        },
        config.seed, artifacts,
    )
    if args.format == "kv":
        print(f"test_accuracy={run.test_accuracy}")
        print(f"best_valid_accuracy={run.best_valid_accuracy}")
        print(f"parameters={count_parameters(net)}")
    else:
        print(format_model_table([model_row(net, accuracy=run.test_accuracy, label="trained")]))
    return 0


def _cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args)
    acc = evaluate(net, dataset)
    if args.format == "kv":
        print(f"accuracy={acc}")
    else:
        print(f"accuracy: {acc:.4f} ({len(dataset)} samples)")
    return 0


def _cmd_transform(args) -> int:
    actions = [args.tr is not None, args.nar_with is not None, args.pool]
    if sum(actions) != 1:
        raise ConfigError("exactly one of --tr, --pool, --nar-with is required")
    raster = load_raster_cache(args.input)
    values = raster.values
    if args.tr is not None or args.pool:
        if args.len is None:
            raise ConfigError("--len is required for grouping transforms")
        if args.pool:
            result = max_pool_time(values, args.len, args.stride)
        elif args.tr == "overlap":
            result = tr_overlap(values, args.len, args.stride)
        else:
            result = tr_no_overlap(values, args.len, args.stride)
    else:
        other = load_raster_cache(args.nar_with)
        result = nar_residual(values, other.values)
    out_raster = SpikeRaster(result, binary=bool(result.max(initial=0.0) <= 1.0))
    save_raster_cache(args.output, out_raster)
    print(f"wrote {args.output} with shape {tuple(result.shape)}")
    return 0


def _load_net(args):
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    if args.net:
        return build_network(load_network_spec(args.net), seed=args.seed)
    raise ConfigError("either --checkpoint or --net is required")


def _parse_shape(raw: str):
    parts = raw.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--shape needs T,B,N, got {raw!r}")
    return tuple(int(p) for p in parts)


def _cmd_profile_energy(args) -> int:
    net = _load_net(args)
    if args.input:
        values = load_raster_cache(args.input).values
    elif args.shape:
        t_len, batch, units = _parse_shape(args.shape)
        rng = np.random.default_rng(args.seed)
        values = (rng.random((t_len, batch, units)) < 0.5).astype(np.float64)
    else:
        raise ConfigError("either --input or --shape is required")
    result = forward_pass(net, values, training=False)
    report = energy(result.record, net, fold_bn=not args.no_fold_bn)
    if args.format == "kv":
        print(format_energy_kv(report))
    else:
        print(format_energy_text(report))
        print(format_model_table([model_row(net, energy_report=report)]))
    return 0


def _cmd_profile_throughput(args) -> int:
    net = _load_net(args)
    shape = _parse_shape(args.shape)
    report = throughput(net, shape, iterations=args.iterations, parallel=args.parallel,
                        seed=args.seed)
    if args.format == "kv":
        print(format_throughput_kv(report))
    else:
        print(format_throughput_text(report))
        print(format_model_table([model_row(net, throughput_report=report)]))
    return 0


# --------------------------------------------------------------------------
# ablation matrix
# --------------------------------------------------------------------------

ABLATION_ROWS = (
    ("none", False, False, False, False),
    ("NAR", True, False, False, False),
    ("NAR+Pool", True, False, False, True),
    ("NAR+TR-o", True, True, False, False),
    ("NAR+TR-no", True, False, True, False),
    ("NAR+TR-o+TR-no", True, True, True, False),
)


def ablation_spec(base: NetworkSpec, nar: bool, tr_o: bool, tr_no: bool, pool: bool,
                  tr_len: int = 3, tr_stride: int = 1,
                  tro_len: int = 2, tro_stride: int = 1) -> NetworkSpec:
    """Derive one ablation row's network spec from a base spec.

    At most one of tr_o/tr_no/pool may be active unless the combined
    tr_o+tr_no row is requested. The residual toggle flags every module
    whose input and output widths match. The no-overlap/pool operator goes
    after the last hidden module; when both operators are requested the
    overlapping one goes after the second-to-last module (same module if
    only one exists).
    """
    if pool and (tr_o or tr_no):
        raise ConfigError("pool cannot be combined with grouping operators")
    n_hidden = len(base.hidden)
    if nar:
        widths = [base.n_inputs] + [h.size for h in base.hidden]
        nar_flags = [widths[i] == widths[i + 1] for i in range(n_hidden)]
    else:
        nar_flags = [False] * n_hidden
    placements = []
    last = n_hidden - 1
    if tr_o:
        after = max(0, last - 1) if tr_no else last
        placements.append(TrPlacement("overlap", tro_len, tro_stride, after))
    if tr_no:
        placements.append(TrPlacement("no_overlap", tr_len, tr_stride, last))
    if pool:
        placements.append(TrPlacement("pool", tr_len, tr_stride, last))
    return NetworkSpec(
        n_inputs=base.n_inputs,
        n_classes=base.n_classes,
        hidden=list(base.hidden),
        nar=nar_flags,
        tr=placements,
        readout_eta=base.readout_eta,
        readout_max_delay=base.readout_max_delay,
    )


def _format_grid_text(rows) -> str:
    header = ("NAR", "TR-o", "TR-no", "Pool", "Acc(%)")
    body = [header]
    for name, nar, tr_o, tr_no, pool, acc in rows:
        mark = lambda v: "x" if v else "-"
        body.append((mark(nar), mark(tr_o), mark(tr_no), mark(pool), f"{100.0 * acc:.2f}"))
    widths = [max(len(r[c]) for r in body) for c in range(5)]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in body
    )


def _format_grid_kv(rows) -> str:
    lines = []
    for i, (name, nar, tr_o, tr_no, pool, acc) in enumerate(rows):
        lines.append(
            f"row{i}.name={name} row{i}.nar={int(nar)} row{i}.tr_o={int(tr_o)} "
            f"row{i}.tr_no={int(tr_no)} row{i}.pool={int(pool)} row{i}.acc={acc}"
        )
    return "\n".join(lines)


def _cmd_ablate(args) -> int:
    out = _out_dir(args)
    dataset = _load_dataset(args)
    base = load_network_spec(args.net)
    config = _train_config_from_args(args)
    fractions = _parse_fractions(args.fractions)

    def run_row(item):
        index, (name, nar, tr_o, tr_no, pool) = item
        spec = ablation_spec(
            base, nar, tr_o, tr_no, pool,
            tr_len=args.tr_len, tr_stride=args.tr_stride,
            tro_len=args.tro_len, tro_stride=args.tro_stride,
        )
        row_config = replace(config, seed=config.seed + index)
        row_dir = out / f"row{index}_{name.replace('+', '_').replace('-', '').lower()}"
        row_dir.mkdir(parents=True, exist_ok=True)
        _, run, artifacts = _run_training(spec, dataset, row_config, fractions, row_dir)
        _write_manifest(
            row_dir, "ablate-row",
            {
                "row": name,
                "toggles": {"nar": nar, "tr_o": tr_o, "tr_no": tr_no, "pool": pool},
                "net": network_spec_to_dict(spec),
                "train_config": train_run_to_dict(run)["config"],
                "fractions": list(fractions),
                "data": str(args.data),
                "bins": args.bins,
            },
            row_config.seed, artifacts,
        )
        return (name, nar, tr_o, tr_no, pool, run.test_accuracy)

    items = list(enumerate(ABLATION_ROWS))
    workers = min(_max_threads(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            rows = list(pool_exec.map(run_row, items))
    else:
        rows = [run_row(item) for item in items]

    grid_text = _format_grid_text(rows)
    grid_path = out / "grid.txt"
    grid_path.write_text(grid_text + "\n", encoding="utf-8")
    kv_path = out / "grid.kv"
    kv_path.write_text(_format_grid_kv(rows) + "\n", encoding="utf-8")
    _write_manifest(
        out, "ablate",
        {"data": str(args.data), "net": str(args.net), "rows": [r[0] for r in rows]},
        config.seed, [grid_path, kv_path],
    )
    print(grid_text if args.format == "text" else _format_grid_kv(rows))
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiketempo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"spiketempo {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="generate a synthetic event file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--spec", default=None, help="synth spec JSON (overrides the flags below)")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--units", type=int, default=64)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--noise-rate", type=float, default=1.5)
    p.add_argument("--units-per-class", type=int, default=6)
    p.add_argument("--count-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--name", default="events.jsonl")
    p.set_defaults(func=_cmd_gen_data)

    p = subs.add_parser("bin", help="bin an event file into a raster cache")
    _add_data_args(p)
    p.add_argument("--out", default=".")
    p.add_argument("--name", default="raster.stras")
    p.add_argument("--labels-name", default=None, help="also write labels JSON")
    p.set_defaults(func=_cmd_bin)

    p = subs.add_parser("train", help="train a network on an event file")
    _add_data_args(p)
    p.add_argument("--net", required=True, help="network spec JSON")
    p.add_argument("--config", default=None, help="train config JSON")
    p.add_argument("--out", default=".")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--format", choices=["text", "kv"], default="text")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("eval", help="evaluate a checkpoint on an event file")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--format", choices=["text", "kv"], default="text")
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("transform", help="apply a grouping or residual op to a raster cache")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--tr", choices=["overlap", "no_overlap"], default=None)
    p.add_argument("--pool", action="store_true")
    p.add_argument("--len", type=int, default=None)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--nar-with", default=None, help="second cache for the residual sum")
    p.set_defaults(func=_cmd_transform)

    p = subs.add_parser("profile-energy", help="energy report for one forward pass")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--net", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", default=None, help="raster cache")
    p.add_argument("--shape", default=None, help="T,B,N synthetic input")
    p.add_argument("--no-fold-bn", action="store_true")
    p.add_argument("--format", choices=["text", "kv"], default="text")
    p.set_defaults(func=_cmd_profile_energy)

    p = subs.add_parser("profile-throughput", help="fixed-iteration throughput report")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--net", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", required=True, help="T,B,N synthetic batch")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--format", choices=["text", "kv"], default="text")
    p.set_defaults(func=_cmd_profile_throughput)

    p = subs.add_parser("ablate", help="run the toggle matrix and emit the grid")
    _add_data_args(p)
    p.add_argument("--net", required=True, help="base network spec JSON")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=".")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--tr-len", type=int, default=3)
    p.add_argument("--tr-stride", type=int, default=1)
    p.add_argument("--tro-len", type=int, default=2)
    p.add_argument("--tro-stride", type=int, default=1)
    p.add_argument("--format", choices=["text", "kv"], default="text")
    p.set_defaults(func=_cmd_ablate)

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except (ConfigError, ShapeError, IngestionError) as e:
        print(f"error: {str(e).replace(chr(10), ' ')}", file=sys.stderr)
        return 3
    except SpikeTempoError as e:
        print(f"error: {str(e).replace(chr(10), ' ')}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
