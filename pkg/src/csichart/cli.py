"""Command line interface.

Four subcommands cover the pipeline stages: ``stream`` curates a record
stream into bounded memories, ``train`` fits a chart model, ``evaluate``
scores a model, and ``reproduce`` runs the full strategy comparison in
one pass.  Every run echoes its resolved configuration into the output
directory and writes delimited text plus (optionally) rendered figures.

Outputs contain no wall-clock values, so rerunning a command with the
same configuration rewrites byte-identical artifacts.

Exit codes: 0 success, 2 configuration error, 3 data or file-format
error, 4 numeric failure during training.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import load_memory, load_model, save_memory, save_model
from .csi import ZeroFeatureError
from .curation import CoreMemory, RandosConfig, SimsConfig, memory_snapshot
from .metrics import MetricReport, compute_all
from .network import NanLossError, TrainConfig, forward
from .pipeline import run_curation, train_chart, train_from_memory
from .recordio import RecordFormatError, RecordStream, import_external
from .synthetic import SyntheticStream, default_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    """Invalid configuration key, value, or combination."""


@dataclass
class RunConfig:
    """All run settings as flat key=value pairs.

    Values come from defaults, then an optional config file, then
    ``--set key=value`` overrides, in that order.
    """

    # data source
    input: str = "synthetic"
    format: str = "auto"
    record_range: str = ""
    stream_seed: int = 0
    n_samples: int = 0
    n_subcarriers: int = 1024
    antennas_per_ap: int = 8
    noise_std: float = 0.01
    # feature extraction
    c_taps: int = 16
    # curation
    capacity: int = 1000
    strategy: str = "sims"
    p_update: float = 0.5
    p_tiebreak: float = 0.5
    curation_seed: int = 0
    store_csi: bool = False
    # chart training
    k_neighbors: int = 20
    widths: str = "256,128,64,32,16,2"
    epochs: int = 200
    batch_pairs: int = 1024
    steps_per_epoch: int = 0
    learning_rate: float = 1e-3
    train_seed: int = 0
    init_seed: int = 0
    # evaluation
    neighbor_k: int = 0
    histogram_bins: int = 128
    max_metric_pairs: int = 1_000_000
    metric_seed: int = 0
    all_subset: int = 3000
    # outputs
    figures: bool = True

    def render(self) -> str:
        """Canonical config text, one key=value per line."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


def _coerce(name: str, kind: type, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL_WORDS[raw.lower()]
        return kind(raw)
    except (KeyError, ValueError):
        raise ConfigError(
            f"bad value {raw!r} for {name} (expected {kind.__name__})") from None


def load_config(path: str | None, overrides: list[str] | None) -> RunConfig:
    """Build a RunConfig from a key=value file plus override pairs."""
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(cfg)}
    kinds = {"int": int, "float": float, "str": str, "bool": bool}

    def apply(text: str, source: str):
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{ln}: expected key=value, got {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{source}:{ln}: unknown setting {key!r}")
            setattr(cfg, key, _coerce(key, kinds[str(types[key])], raw))

    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        apply(p.read_text(), path)
    for item in overrides or []:
        apply(item, "--set")
    return cfg


def _parse_range(spec: str) -> tuple[int, int | None]:
    if not spec:
        return 0, None
    if ":" not in spec:
        raise ConfigError(f"record_range must be start:stop, got {spec!r}")
    lo_s, hi_s = spec.split(":", 1)
    try:
        lo = int(lo_s) if lo_s else 0
        hi = int(hi_s) if hi_s else None
    except ValueError:
        raise ConfigError(f"record_range must be start:stop, got {spec!r}") from None
    if lo < 0 or (hi is not None and hi < lo):
        raise ConfigError(f"bad record_range {spec!r}")
    return lo, hi


def _parse_widths(spec: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in spec.split(","))
    except ValueError:
        raise ConfigError(f"widths must be comma-separated integers, got {spec!r}") from None
    if not widths or any(w < 1 for w in widths):
        raise ConfigError(f"widths must be positive, got {spec!r}")
    if widths[-1] != 2:
        raise ConfigError(f"the chart is 2-D; final width must be 2, got {spec!r}")
    return widths


def _spans_for(n_antennas: int, group: int):
    if group < 1 or n_antennas % group:
        raise ConfigError(
            f"antennas_per_ap={group} does not divide the stream's "
            f"{n_antennas} antennas")
    return tuple((i, i + group) for i in range(0, n_antennas, group))


def open_stream(cfg: RunConfig, outdir: Path):
    """Resolve the configured input into a lazy record stream."""
    start, stop = _parse_range(cfg.record_range)
    if cfg.input == "synthetic":
        scenario = default_scenario(
            n_samples=cfg.n_samples or None,
            n_subcarriers=cfg.n_subcarriers,
            antennas_per_ap=cfg.antennas_per_ap,
            noise_std=cfg.noise_std)
        return SyntheticStream(scenario, seed=cfg.stream_seed,
                               start=start, stop=stop)
    path = Path(cfg.input)
    if not path.is_file():
        raise RecordFormatError(f"input file not found: {cfg.input}")
    fmt = cfg.format
    if fmt == "auto":
        fmt = "npz" if path.suffix == ".npz" else "ccsf"
    if fmt == "npz":
        probe = np.load(str(path))
        if "csi" not in probe:
            raise RecordFormatError(f"{path}: npz archive has no 'csi' array")
        b = probe["csi"].shape[1]
        return import_external(path, "npz", outdir / "imported.ccsf",
                               start=start, stop=stop,
                               ap_spans=_spans_for(b, cfg.antennas_per_ap))
    if fmt != "ccsf":
        raise ConfigError(f"unknown input format {fmt!r}")
    stream = RecordStream(path, start=start, stop=stop)
    return RecordStream(path, start=start, stop=stop,
                        ap_spans=_spans_for(stream.n_antennas, cfg.antennas_per_ap))


def _strategies(cfg: RunConfig, names: str) -> dict:
    out = {}
    for name in names.split("+"):
        if name == "sims":
            out[name] = SimsConfig(p_tiebreak=cfg.p_tiebreak,
                                   rng_seed=cfg.curation_seed)
        elif name == "randos":
            out[name] = RandosConfig(p_update=cfg.p_update,
                                     rng_seed=cfg.curation_seed)
        else:
            raise ConfigError(
                f"unknown strategy {name!r} (expected sims, randos, or both)")
    return out


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_pairs=cfg.batch_pairs,
        epochs=cfg.epochs,
        steps_per_epoch=cfg.steps_per_epoch or None,
        rng_seed=cfg.train_seed)


def _write(path: Path, text: str):
    path.write_text(text)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def memory_csv(mem: CoreMemory) -> str:
    """slot,arrival_index,timestamp,gt coordinates,max_sim rows."""
    dim = mem.position_dim or 0
    gt_cols = ",".join(f"gt_{axis}" for axis in "xyz"[:dim])
    header = "slot,arrival_index,timestamp" + (f",{gt_cols}" if dim else "") + ",max_sim"
    coords, mask = mem.positions()
    row_max = mem.row_max_sims()
    ts = mem.timestamps
    lines = [header]
    for i in range(mem.count):
        stamp = "" if np.isnan(ts[i]) else _fmt(ts[i])
        cells = [str(i), str(int(mem.arrival_indices[i])), stamp]
        if dim:
            cells.extend(_fmt(coords[i, d]) if mask[i] else "" for d in range(dim))
        cells.append(_fmt(float(row_max[i])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def chart_csv(arrivals, gt, mask, chart) -> str:
    """index,arrival_index,gt coordinates,chart_x,chart_y rows."""
    gt = np.asarray(gt, dtype=np.float64)
    dim = gt.shape[1] if gt.ndim == 2 else 0
    gt_cols = ",".join(f"gt_{axis}" for axis in "xyz"[:dim])
    header = "index,arrival_index" + (f",{gt_cols}" if dim else "") + ",chart_x,chart_y"
    lines = [header]
    for i in range(len(chart)):
        cells = [str(i), str(int(arrivals[i]))]
        if dim:
            cells.extend(_fmt(gt[i, d]) if mask[i] else "" for d in range(dim))
        cells.extend([_fmt(chart[i, 0]), _fmt(chart[i, 1])])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def loss_csv(epoch_losses) -> str:
    lines = ["epoch,mean_pair_loss"]
    lines.extend(f"{i + 1},{_fmt(v)}" for i, v in enumerate(epoch_losses))
    return "\n".join(lines) + "\n"


def _figures(cfg):
    if not cfg.figures:
        return None
    from . import figures
    return figures


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: RunConfig, out: Path):
    _write(out / "config.txt", cfg.render())


def _memory_artifacts(name: str, mem: CoreMemory, out: Path, cfg: RunConfig,
                      n_stream: int | None):
    save_memory(out / f"memory_{name}.cckp", mem)
    snap = memory_snapshot(mem)
    _write(out / f"memory_{name}.csv", memory_csv(mem))
    fig = _figures(cfg)
    if fig:
        fig.save_memory_figure(snap, out / f"memory_{name}.png",
                               title=f"{name} memory", n_stream_samples=n_stream)


def _apply_flags(cfg: RunConfig, args):
    if getattr(args, "record_range", None) is not None:
        cfg.record_range = args.record_range
    if getattr(args, "input", None) is not None:
        cfg.input = args.input


def cmd_stream(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args)
    _apply_flags(cfg, args)
    _echo_config(cfg, out)
    names = "sims+randos" if cfg.strategy == "both" else cfg.strategy
    stream = open_stream(cfg, out)
    run = run_curation(stream, _strategies(cfg, names), capacity=cfg.capacity,
                       c_taps=cfg.c_taps, store_full_csi=cfg.store_csi)
    n_stream = getattr(stream, "n_samples", None)
    lines = [f"n_offered={run.n_offered}", f"n_zero_feature={run.n_zero_feature}"]
    for name, res in run.results.items():
        _memory_artifacts(name, res.memory, out, cfg, n_stream)
        lines.extend([
            f"{name}_inserted={res.n_inserted}",
            f"{name}_replaced={res.n_replaced}",
            f"{name}_discarded={res.n_discarded}",
            f"{name}_stored={res.memory.count}",
        ])
    _write(out / "stream_summary.txt", "\n".join(lines) + "\n")
    print(f"curated {run.n_offered} samples into {out}")
    return EXIT_OK


def _trained_artifacts(name: str, outcome, out: Path, cfg: RunConfig):
    save_model(out / f"model_{name}.cckp", outcome.model)
    _write(out / f"loss_{name}.csv", loss_csv(outcome.report.epoch_losses))
    fig = _figures(cfg)
    if fig:
        fig.save_loss_figure(outcome.report.epoch_losses,
                             out / f"loss_{name}.png", title=f"{name} training")


def _chart_artifacts(name: str, arrivals, gt, mask, chart, out: Path,
                     cfg: RunConfig):
    _write(out / f"chart_{name}.csv", chart_csv(arrivals, gt, mask, chart))
    fig = _figures(cfg)
    if fig and np.asarray(mask).any():
        known = np.asarray(mask, dtype=bool)
        fig.save_chart_figure(np.asarray(gt)[known], np.asarray(chart)[known],
                              out / f"chart_{name}.png", title=name)


def _evaluate(gt, mask, chart, cfg: RunConfig) -> MetricReport:
    known = np.asarray(mask, dtype=bool)
    if known.sum() < 3:
        raise ConfigError("evaluation needs at least 3 samples with "
                          "reference positions")
    return compute_all(np.asarray(gt)[known], np.asarray(chart)[known],
                       k=cfg.neighbor_k or None, bins=cfg.histogram_bins,
                       max_pairs=cfg.max_metric_pairs, seed=cfg.metric_seed)


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args)
    _apply_flags(cfg, args)
    _echo_config(cfg, out)
    if args.memory:
        mem = load_memory(Path(args.memory))
        name = "memory"
    else:
        if cfg.strategy not in ("sims", "randos"):
            raise ConfigError("train runs a single strategy; set strategy to "
                              "sims or randos, or pass --memory")
        stream = open_stream(cfg, out)
        run = run_curation(stream, _strategies(cfg, cfg.strategy),
                           capacity=cfg.capacity, c_taps=cfg.c_taps,
                           store_full_csi=cfg.store_csi)
        mem = run.results[cfg.strategy].memory
        name = cfg.strategy
        _memory_artifacts(name, mem, out, cfg, getattr(stream, "n_samples", None))
    outcome = train_from_memory(mem, k_neighbors=cfg.k_neighbors,
                                widths=_parse_widths(cfg.widths),
                                cfg=_train_config(cfg), init_seed=cfg.init_seed)
    _trained_artifacts(name, outcome, out, cfg)
    chart = forward(outcome.model, mem.features)
    coords, mask = mem.positions()
    _chart_artifacts(name, mem.arrival_indices, coords, mask, chart, out, cfg)
    _write(out / "train_summary.txt", "\n".join([
        f"strategy={name}",
        f"stored_samples={mem.count}",
        f"epochs={len(outcome.report.epoch_losses)}",
        f"steps_per_epoch={outcome.report.steps_per_epoch}",
        f"final_loss={_fmt(outcome.report.final_loss)}",
    ]) + "\n")
    print(f"trained on {mem.count} stored samples; final mean pair loss "
          f"{outcome.report.final_loss:.6f} ({outcome.report.wall_seconds:.1f}s)",
          file=sys.stderr)
    print(f"model written to {out / f'model_{name}.cckp'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args)
    _apply_flags(cfg, args)
    _echo_config(cfg, out)
    model = load_model(Path(args.model))
    if args.memory:
        mem = load_memory(Path(args.memory))
        if mem.count == 0:
            raise ConfigError("memory checkpoint is empty")
        feats = mem.features
        arrivals = mem.arrival_indices
        gt, mask = mem.positions()
        label = "memory"
    else:
        stream = open_stream(cfg, out)
        run = run_curation(stream, {}, capacity=2, c_taps=cfg.c_taps,
                           collect_all=True)
        if run.all_features is None:
            raise RecordFormatError("input stream yielded no usable samples")
        feats = run.all_features
        arrivals = run.all_arrivals
        gt, mask = run.all_positions, run.all_position_mask
        label = "stream"
    chart = forward(model, feats)
    report = _evaluate(gt, mask, chart, cfg)
    _chart_artifacts(label, arrivals, gt, mask, chart, out, cfg)
    _write(out / "metrics.txt", report.as_text())
    _write(out / "metrics.csv",
           MetricReport.csv_header() + "\n" + report.as_csv_row(label) + "\n")
    print(report.as_text(), end="")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args)
    _apply_flags(cfg, args)
    _echo_config(cfg, out)
    stream = open_stream(cfg, out)
    run = run_curation(stream, _strategies(cfg, "sims+randos"),
                       capacity=cfg.capacity, c_taps=cfg.c_taps,
                       store_full_csi=cfg.store_csi, collect_all=True)
    n_stream = getattr(stream, "n_samples", None)
    tcfg = _train_config(cfg)
    widths = _parse_widths(cfg.widths)
    rows = []
    summary = [f"n_offered={run.n_offered}", f"n_zero_feature={run.n_zero_feature}"]

    for name in ("sims", "randos"):
        mem = run.results[name].memory
        _memory_artifacts(name, mem, out, cfg, n_stream)
        outcome = train_from_memory(mem, k_neighbors=cfg.k_neighbors,
                                    widths=widths, cfg=tcfg,
                                    init_seed=cfg.init_seed)
        _trained_artifacts(name, outcome, out, cfg)
        chart = forward(outcome.model, mem.features)
        coords, mask = mem.positions()
        _chart_artifacts(name, mem.arrival_indices, coords, mask, chart, out, cfg)
        report = _evaluate(coords, mask, chart, cfg)
        rows.append(report.as_csv_row(name))
        summary.append(f"{name}_final_loss={_fmt(outcome.report.final_loss)}")

    # no-curation baseline, subsampled when the stream is large
    feats, taps = run.all_features, run.all_taps
    gt, mask, arrivals = run.all_positions, run.all_position_mask, run.all_arrivals
    n_all = len(feats)
    if cfg.all_subset and n_all > cfg.all_subset:
        pick = np.sort(np.random.default_rng(cfg.metric_seed).choice(
            n_all, size=cfg.all_subset, replace=False))
        feats, taps = feats[pick], taps[pick]
        gt, mask, arrivals = gt[pick], mask[pick], arrivals[pick]
    outcome = train_chart(taps, feats, run.ap_spans, k_neighbors=cfg.k_neighbors,
                          widths=widths, cfg=tcfg, init_seed=cfg.init_seed)
    _trained_artifacts("all", outcome, out, cfg)
    chart = forward(outcome.model, feats)
    _chart_artifacts("all", arrivals, gt, mask, chart, out, cfg)
    report = _evaluate(gt, mask, chart, cfg)
    rows.append(report.as_csv_row("all"))
    summary.append(f"all_final_loss={_fmt(outcome.report.final_loss)}")
    summary.append(f"all_samples_used={len(feats)}")

    _write(out / "comparison.csv",
           MetricReport.csv_header() + "\n" + "\n".join(rows) + "\n")
    _write(out / "reproduce_summary.txt", "\n".join(summary) + "\n")
    print((out / "comparison.csv").read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csichart",
        description="Streaming channel charting: curation, training, scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, record_range=True):
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--out", required=True, help="output directory")
        if record_range:
            p.add_argument("--record-range", dest="record_range", default=None,
                           metavar="START:STOP", help="slice of the input stream")
        p.add_argument("--input", default=None,
                       help="record file, npz archive, or 'synthetic'")

    p = sub.add_parser("stream", help="curate a stream into bounded memories")
    common(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("train", help="fit a chart model")
    common(p)
    p.add_argument("--memory", default=None,
                   help="train on this memory checkpoint instead of streaming")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model")
    common(p)
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--memory", default=None,
                   help="evaluate on this memory checkpoint instead of a stream")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce", help="full strategy comparison in one run")
    common(p, record_range=False)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"csichart: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RecordFormatError, FileNotFoundError) as exc:
        print(f"csichart: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NanLossError as exc:
        print(f"csichart: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ZeroFeatureError as exc:
        print(f"csichart: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"csichart: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())