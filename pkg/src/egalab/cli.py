"""Command-line interface: `egalab {train, ablate, analyze, plot}`.

Configuration precedence is defaults < `--config` file < explicit flags.
The config file is plain text, one `key = value` per line, keys named
after the long flags (dashes or underscores both work), `#` comments
allowed.

Exit codes: 0 success, 1 usage or input error, 2 training divergence.
All CSV artifacts are byte-reproducible given identical flags, except the
wall_ms timing column of metrics.csv; SVGs omit timestamps and use a
fixed hash salt so they are byte-reproducible too.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis
from .data import Corpus, Vocab, load_corpus, synthetic_corpus
from .gates import VARIANTS
from .model import ModelConfig, build_model, count_gate_params
from .trainer import (TrainConfig, TrainingDiverged, load_checkpoint, train,
                      write_csv)

DATASET_FILES = {"shakespeare": "data/tinyshakespeare.txt", "ptb": "data/ptb.txt"}
DATASET_CHOICES = ("shakespeare", "ptb", "synthetic")
DEFAULT_PROBE = ("To be or not to be that is the question Whether tis nobler "
                 "in the mind to suffer")

# stable variant-keyed palette so rerendered figures match byte for byte
VARIANT_COLORS = {
    "base": "#4c72b0", "ega1": "#dd8452", "ega2": "#55a868", "ega4": "#c44e52",
    "egac": "#8172b3", "egam": "#937860", "egadb2": "#da8bc3", "egadb4": "#8c8c8c",
}
SVG_METADATA = {"Date": None}  # drop the creation timestamp for reproducibility


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this artifact reserves 2 for
    training divergence, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------
# option schema: single source for defaults, types, config-file parsing
# ---------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# dest -> (converter, default, choices or None)
_TRAIN_SCHEMA = {
    "dataset": (str, "synthetic", DATASET_CHOICES),
    "data_path": (str, None, None),
    "variant": (str, "base", tuple(sorted(VARIANTS))),
    "seed": (int, 1337, None),
    "steps": (int, 5000, None),
    "context": (int, 256, None),
    "batch": (int, 64, None),
    "znorm": (str, "paper", ("paper", "causal")),
    "out": (str, None, None),
    "layers": (int, 6, None),
    "heads": (int, 8, None),
    "dim": (int, 256, None),
    "dropout": (float, 0.1, None),
    "tau_init": (float, 0.0, None),
    "alpha_init": (float, 2.0, None),
    "lr": (float, 3e-4, None),
    "warmup": (int, None, None),
    "eval_every": (int, 100, None),
    "eval_batches": (int, 200, None),
    "snapshot_every": (int, 100, None),
    "quiet": (_parse_bool, False, None),
}

_FLAG_HELP = {
    "dataset": "named corpus; shakespeare/ptb read data/ files, synthetic needs no file",
    "data_path": "corpus text file, overrides the named dataset location",
    "variant": "attention gate variant",
    "seed": "seed for weights, batches, and dropout streams",
    "steps": "optimizer steps",
    "context": "sequence length T",
    "batch": "sequences per batch B",
    "znorm": "energy normalization: whole-sequence stats or causal prefix stats",
    "out": "run directory for config.json/metrics.csv/gates.csv/checkpoint.bin",
    "layers": "transformer blocks",
    "heads": "attention heads",
    "dim": "model width",
    "dropout": "dropout probability",
    "tau_init": "initial gate threshold",
    "alpha_init": "initial gate sharpness",
    "lr": "peak learning rate",
    "warmup": "warmup steps (when omitted: 300, shrunk to steps/10 for short runs)",
    "eval_every": "evaluate every N steps",
    "eval_batches": "fixed validation batches per evaluation",
    "snapshot_every": "log gate scalars every N steps",
    "quiet": "suppress progress lines",
}


def _add_schema_flags(p: argparse.ArgumentParser, schema: dict, skip=()):
    for dest, (conv, default, choices) in schema.items():
        if dest in skip:
            continue
        flag = "--" + dest.replace("_", "-")
        help_txt = f"{_FLAG_HELP[dest]} (default: {default})"
        if conv is _parse_bool:
            p.add_argument(flag, dest=dest, action="store_true",
                           default=argparse.SUPPRESS, help=help_txt)
        else:
            p.add_argument(flag, dest=dest, type=conv, choices=choices,
                           default=argparse.SUPPRESS, help=help_txt)
    p.add_argument("--config", default=None,
                   help="key = value file; precedence defaults < file < flags")


def _read_config_file(path) -> dict[str, str]:
    entries = {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{p}:{lineno}: expected 'key = value', got {line!r}")
        key, val = stripped.split("=", 1)
        entries[key.strip().replace("-", "_")] = val.strip()
    return entries


def _merge_opts(args, schema: dict, parser: argparse.ArgumentParser,
                skip=()) -> dict:
    """defaults < config file < explicitly passed flags.

    Keys set anywhere above the defaults layer are recorded in the
    "_explicit" entry so commands can distinguish a chosen value from a
    fallback.
    """
    opts = {d: default for d, (_, default, _) in schema.items() if d not in skip}
    explicit = set()
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        for key, raw in _read_config_file(cfg_path).items():
            if key not in opts:
                parser.error(f"unknown config key {key!r} in {cfg_path}")
            conv, _, choices = schema[key]
            try:
                val = conv(raw)
            except ValueError as exc:
                parser.error(f"config key {key!r}: {exc}")
            if choices is not None and val not in choices:
                parser.error(f"config key {key!r}: {val!r} not in {sorted(choices)}")
            opts[key] = val
            explicit.add(key)
    for key in opts:
        if hasattr(args, key):
            opts[key] = getattr(args, key)
            explicit.add(key)
    opts["_explicit"] = explicit
    return opts


# ---------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------

def _resolve_corpus(opts) -> Corpus:
    if opts.get("data_path"):
        # honor an explicitly chosen dataset label; otherwise the file stem
        name = opts["dataset"] if "dataset" in opts.get("_explicit", ()) else None
        return load_corpus(opts["data_path"], name=name)
    name = opts.get("dataset") or "synthetic"
    if name == "synthetic":
        return synthetic_corpus()
    path = Path(DATASET_FILES[name])
    if not path.is_file():
        raise FileNotFoundError(
            f"dataset file {path} not found; pass --data-path or run "
            "scripts/fetch_datasets.py")
    return load_corpus(path, name=name)


def _model_config(opts, vocab_size: int, variant: str | None = None) -> ModelConfig:
    return ModelConfig(
        n_layers=opts["layers"], n_heads=opts["heads"], d_model=opts["dim"],
        context_len=opts["context"], vocab_size=vocab_size,
        dropout=opts["dropout"], gate_variant=variant or opts.get("variant", "base"),
        znorm_mode=opts["znorm"], seed=opts["seed"],
        tau_init=opts["tau_init"], alpha_init=opts["alpha_init"])


def _train_config(opts) -> TrainConfig:
    warmup = opts["warmup"]
    if warmup is None:
        warmup = 300 if opts["steps"] > 300 else max(1, opts["steps"] // 10)
    return TrainConfig(
        steps=opts["steps"], batch=opts["batch"], context=opts["context"],
        lr_max=opts["lr"], warmup=warmup, eval_every=opts["eval_every"],
        eval_batches=opts["eval_batches"], snapshot_every=opts["snapshot_every"],
        seed=opts["seed"])


def _load_run_model(rec: analysis.RunRecord):
    if rec.checkpoint_path is None:
        raise FileNotFoundError(f"run {rec.run_dir} has no checkpoint.bin")
    model, _ = load_checkpoint(rec.checkpoint_path)
    if rec.vocab_chars is None:
        raise ValueError(f"run {rec.run_dir} predates vocab_chars manifests; "
                         "cannot encode probe text")
    return model, Vocab(tuple(rec.vocab_chars))


def _artifact_stem(rec: analysis.RunRecord, kind: str) -> str:
    return f"{kind}_{rec.variant}_{rec.dataset}_s{rec.seed}"


# ---------------------------------------------------------------------
# plotting (matplotlib, Agg, reproducible SVG)
# ---------------------------------------------------------------------

def _plt():
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "egalab"
    return plt


def _variant_color(variant: str) -> str:
    return VARIANT_COLORS.get(variant, "#555555")


def plot_runs(records: list[analysis.RunRecord], out_path):
    """Three panels: validation curves, final validation bars, gap traces."""
    plt = _plt()
    fig, axes = plt.subplots(1, 3, figsize=(13.5, 4.2))
    for rec in records:
        rows = [(r["step"], r["val_loss"]) for r in rec.metrics
                if r.get("val_loss") is not None]
        steps, vals = zip(*rows)
        label = f"{rec.variant} ({rec.dataset}, s{rec.seed})"
        axes[0].plot(steps, vals, color=_variant_color(rec.variant), label=label)
        gaps = analysis.gap_trace(rec.metrics)
        axes[2].plot([s for s, _ in gaps], [g for _, g in gaps],
                     color=_variant_color(rec.variant), label=label)
    axes[1].bar(range(len(records)), [r.final_val_loss for r in records],
                color=[_variant_color(r.variant) for r in records])
    axes[1].set_xticks(range(len(records)))
    axes[1].set_xticklabels([r.variant for r in records], rotation=45, ha="right")
    axes[0].set_xlabel("step"); axes[0].set_ylabel("validation loss (nats/char)")
    axes[0].set_title("validation loss")
    axes[1].set_ylabel("final validation loss"); axes[1].set_title("final loss")
    axes[2].set_xlabel("step"); axes[2].set_ylabel("val - smoothed train")
    axes[2].set_title("generalization gap")
    for ax in axes:
        ax.margins(0.05)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def plot_scalogram(report: analysis.ScalogramReport, out_path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 5))
    im = ax.imshow(report.matrix, aspect="auto", origin="lower",
                   cmap="magma", interpolation="nearest")
    ticks = range(0, report.scales.size, max(1, report.scales.size // 8))
    ax.set_yticks(list(ticks))
    ax.set_yticklabels([f"{report.scales[i]:.1f}" for i in ticks])
    ax.set_xlabel("position")
    ax.set_ylabel("scale (tokens)")
    ax.set_title(f"mean wavelet power, block {report.layer} output")
    fig.colorbar(im, ax=ax, label="power")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def plot_spectrum(rows: list[dict], out_path,
                  markers=analysis.EGAC_MARKER_LENGTHS):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    scales = [r["scale"] for r in rows]
    energy = [r["energy"] for r in rows]
    ax.plot(scales, energy, color="#333333")
    ax.set_xscale("log")
    marker_colors = ("#4c72b0", "#dd8452", "#55a868", "#c44e52")
    for k, c in zip(markers, marker_colors):
        ax.axvline(k, color=c, linestyle="--", linewidth=1, label=f"length {k}")
    ax.set_xlabel("scale (tokens)")
    ax.set_ylabel("total power")
    ax.set_title("energy by scale")
    ax.margins(0.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


# ---------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------

def cmd_train(args, parser) -> int:
    opts = _merge_opts(args, _TRAIN_SCHEMA, parser)
    corpus = _resolve_corpus(opts)
    model = build_model(_model_config(opts, len(corpus.vocab)))
    log = None if opts["quiet"] else print
    res = train(model, corpus, _train_config(opts), out_dir=opts["out"], log=log)
    print(f"final: train {res.final_train_loss:.4f} val {res.final_val_loss:.4f} "
          f"batches {res.batch_fingerprint}")
    if opts["out"]:
        print(f"artifacts in {opts['out']}")
    return 0


def _ablate_worker(payload):
    """Top-level so process pools can pickle it; one independent run."""
    corpus, mcfg_dict, tcfg_dict, out_dir = payload
    model = build_model(ModelConfig.from_dict(mcfg_dict))
    res = train(model, corpus, TrainConfig.from_dict(tcfg_dict),
                out_dir=out_dir, log=None)
    return {"variant": mcfg_dict["gate_variant"], "val": res.final_val_loss,
            "train": res.final_train_loss, "fingerprint": res.batch_fingerprint,
            "extra_params": count_gate_params(model)}


def cmd_ablate(args, parser) -> int:
    opts = _merge_opts(args, _TRAIN_SCHEMA, parser, skip=("variant",))
    if not opts["out"]:
        parser.error("ablate requires --out DIR for the summary CSV")
    requested = [v.strip() for v in args.variants.split(",") if v.strip()]
    variants = []
    for v in requested:
        if v not in VARIANTS:
            parser.error(f"unknown variant {v!r}; valid: {sorted(VARIANTS)}")
        if v in variants:
            print(f"warning: duplicate variant {v!r} dropped", file=sys.stderr)
        else:
            variants.append(v)
    if not variants:
        parser.error("--variants list is empty")
    corpus = _resolve_corpus(opts)
    tcfg = _train_config(opts)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(corpus, _model_config(opts, len(corpus.vocab), v).to_dict(),
                 tcfg.to_dict(), str(out / v)) for v in variants]

    results = []
    if args.parallel > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(args.parallel) as pool:
            results = pool.map(_ablate_worker, payloads)
    else:
        for payload in payloads:
            if not opts["quiet"]:
                print(f"training {payload[1]['gate_variant']} ...")
            results.append(_ablate_worker(payload))

    fingerprints = {r["fingerprint"] for r in results}
    if len(fingerprints) != 1:
        print(f"error: batch fingerprints diverged across variants: "
              f"{sorted(fingerprints)}; ablation invalid", file=sys.stderr)
        return 1
    by_variant = {r["variant"]: r for r in results}
    base_val = by_variant.get("base", {}).get("val")
    rows = []
    for v in variants:
        r = by_variant[v]
        rows.append({"variant": v, "val": r["val"],
                     "delta": None if base_val is None else base_val - r["val"],
                     "gap": r["val"] - r["train"],
                     "extra_params": r["extra_params"]})
    write_csv(out / "ablation.csv",
              ["variant", "val", "delta", "gap", "extra_params"], rows)
    print(f"{'variant':<8} {'val':>8} {'delta':>8} {'gap':>8} {'extra':>8}")
    for r in rows:
        d = "" if r["delta"] is None else f"{r['delta']:+.4f}"
        print(f"{r['variant']:<8} {r['val']:>8.4f} {d:>8} {r['gap']:>8.4f} "
              f"{r['extra_params']:>8}")
    print(f"summary: {out / 'ablation.csv'} (shared batches {results[0]['fingerprint']})")
    return 0


def cmd_analyze_tau(args, parser) -> int:
    rec = analysis.load_run(args.run)
    stats = analysis.tau_statistics(rec.snapshots)
    out = Path(args.out or rec.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _artifact_stem(rec, "tau")
    write_csv(out / f"{stem}_trajectory.csv", ["step", "mean_tau"],
              [{"step": s, "mean_tau": m} for s, m in stats["trajectory"]])
    write_csv(out / f"{stem}_final.csv", ["layer", "head", "scale", "tau"],
              [{"layer": l, "head": h, "scale": s, "tau": t}
               for (l, h, s), t in sorted(stats["final"].items())])
    print(f"mean final tau {stats['mean']:.4f} "
          f"(offset from 0.35: {stats['offset_from_0.35']:+.4f})")
    frac = analysis.above_threshold_fraction(stats["mean"])
    print(f"analytic above-threshold fraction 1-Phi(tau): {frac['analytic']:.4f}")
    print(f"wrote {out / f'{stem}_trajectory.csv'} and {out / f'{stem}_final.csv'}")
    return 0


def cmd_analyze_scalogram(args, parser) -> int:
    rec = analysis.load_run(args.run)
    model, vocab = _load_run_model(rec)
    report = analysis.scalogram_report(model, vocab, args.probe, args.layer)
    out = Path(args.out or rec.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{_artifact_stem(rec, 'scalogram')}_L{args.layer}"
    analysis.write_scalogram_csv(report, out / f"{stem}.csv")
    plot_scalogram(report, out / f"{stem}.svg")
    print(f"scalogram [{report.matrix.shape[0]} scales x "
          f"{report.matrix.shape[1]} positions], min {report.matrix.min():.3e}")
    print(f"wrote {out / f'{stem}.csv'} and {out / f'{stem}.svg'}")
    return 0


def cmd_analyze_spectrum(args, parser) -> int:
    rec = analysis.load_run(args.run)
    model, vocab = _load_run_model(rec)
    report = analysis.scalogram_report(model, vocab, args.probe, args.layer)
    rows = analysis.energy_spectrum(report.matrix, report.scales)
    out = Path(args.out or rec.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{_artifact_stem(rec, 'spectrum')}_L{args.layer}"
    write_csv(out / f"{stem}.csv", ["scale", "energy"], rows)
    plot_spectrum(rows, out / f"{stem}.svg")
    peak = max(rows, key=lambda r: r["energy"])
    print(f"spectrum over {len(rows)} scales; peak at scale {peak['scale']:.2f}")
    print(f"wrote {out / f'{stem}.csv'} and {out / f'{stem}.svg'}")
    return 0


def cmd_analyze_seqlen(args, parser) -> int:
    opts = _merge_opts(args, _TRAIN_SCHEMA, parser,
                       skip=("variant", "context", "batch"))
    lengths = tuple(int(x) for x in args.lengths.split(","))
    if not lengths:
        parser.error("--lengths list is empty")
    corpus = _resolve_corpus(opts)
    opts = opts | {"context": max(lengths),
                   "batch": analysis.SEQLEN_TOKENS_PER_BATCH // max(lengths)}
    mcfg = _model_config(opts, len(corpus.vocab), "base")
    tcfg = _train_config(opts)
    log = None if opts["quiet"] else print
    rows = analysis.seqlen_ablation(corpus, mcfg, tcfg, lengths=lengths,
                                    out_dir=opts["out"], log=log)
    print(f"{'T':>5} {'B':>5} {'val_base':>9} {'val_ega1':>9} {'delta':>8}")
    for r in rows:
        print(f"{r['T']:>5} {r['B']:>5} {r['val_base']:>9.4f} "
              f"{r['val_ega1']:>9.4f} {r['delta']:>+8.4f}")
    if opts["out"]:
        print(f"wrote {Path(opts['out']) / 'seqlen.csv'}")
    return 0


def cmd_analyze_compare(args, parser) -> int:
    base = analysis.load_run(args.base)
    other = analysis.load_run(args.other)
    result = analysis.compare_runs(base, other)
    print(f"delta = {result['delta']:+.4f} "
          f"({base.variant} {result['val_base']:.4f} -> "
          f"{other.variant} {result['val_other']:.4f})")
    print(f"gap {base.variant} {result['gap_base']:.4f}, "
          f"{other.variant} {result['gap_other']:.4f}")
    return 0


def cmd_plot(args, parser) -> int:
    records = [analysis.load_run(d) for d in args.runs]
    out = args.out
    if out is None:
        name = "curves_" + "_".join(r.variant for r in records) + ".svg"
        out = str(Path(records[0].run_dir) / name)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    plot_runs(records, out)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="egalab",
                     description="energy-gated attention training laboratory")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_train = sub.add_parser("train", help="train one model variant",
                             description="Train one variant and write run artifacts.")
    _add_schema_flags(p_train, _TRAIN_SCHEMA)
    p_train.set_defaults(func=cmd_train)

    p_ablate = sub.add_parser(
        "ablate", help="train several variants on identical batches",
        description="Sequentially train variants on identical batches and "
                    "emit a summary CSV (variant, val, delta, gap, extra_params).")
    p_ablate.add_argument("--variants", default="base,ega1",
                          help="comma list of variants (default: base,ega1)")
    p_ablate.add_argument("--parallel", type=int, default=1,
                          help="worker processes; runs are independent and "
                               "deterministic, so results match sequential "
                               "(default: 1)")
    _add_schema_flags(p_ablate, _TRAIN_SCHEMA, skip=("variant",))
    p_ablate.set_defaults(func=cmd_ablate)

    p_an = sub.add_parser("analyze", help="post-hoc analyses on run directories")
    an_sub = p_an.add_subparsers(dest="analysis", required=True, metavar="kind")

    p_tau = an_sub.add_parser("tau", help="gate threshold trajectory and finals")
    p_tau.add_argument("--run", required=True, help="run directory")
    p_tau.add_argument("--out", default=None, help="artifact directory (default: run dir)")
    p_tau.set_defaults(func=cmd_analyze_tau)

    for kind, fn in (("scalogram", cmd_analyze_scalogram),
                     ("spectrum", cmd_analyze_spectrum)):
        p_k = an_sub.add_parser(kind, help=f"{kind} of block output on a probe")
        p_k.add_argument("--run", required=True, help="run directory with checkpoint")
        p_k.add_argument("--probe", default=DEFAULT_PROBE,
                         help="probe text (default: opening soliloquy fragment)")
        p_k.add_argument("--layer", type=int, default=3,
                         help="1-indexed block whose output is analyzed (default: 3)")
        p_k.add_argument("--out", default=None,
                         help="artifact directory (default: run dir)")
        p_k.set_defaults(func=fn)

    p_seq = an_sub.add_parser(
        "seqlen", help="base vs ega1 at fixed tokens-per-batch")
    p_seq.add_argument("--lengths", default="64,128,256",
                       help="comma list of context lengths (default: 64,128,256)")
    _add_schema_flags(p_seq, _TRAIN_SCHEMA, skip=("variant", "context", "batch"))
    p_seq.set_defaults(func=cmd_analyze_seqlen)

    p_cmp = an_sub.add_parser("compare", help="validation delta between two runs")
    p_cmp.add_argument("--base", required=True, help="baseline run directory")
    p_cmp.add_argument("--other", required=True, help="comparison run directory")
    p_cmp.set_defaults(func=cmd_analyze_compare)

    p_plot = sub.add_parser("plot", help="three-panel loss/gap figure for runs")
    p_plot.add_argument("runs", nargs="+", help="run directories")
    p_plot.add_argument("--out", default=None,
                        help="output SVG (default: curves_<variants>.svg in "
                             "the first run directory)")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except TrainingDiverged as exc:
        print(f"egalab: training diverged: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"egalab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
