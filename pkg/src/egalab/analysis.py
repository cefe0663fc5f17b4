"""Post-hoc analyses over finished runs: ablation comparison, threshold
statistics, scalogram and spectrum reports, and the sequence-length sweep.

All readers work from the run directory artifacts (config.json,
metrics.csv, gates.csv, checkpoint.bin); nothing here mutates a run.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import wavelets
from .data import Corpus, Vocab, sample_batch
from .model import TransformerModel, forward
from .trainer import (EMA_FACTOR, TrainConfig, read_csv, write_csv)

EGAC_MARKER_LENGTHS = (3, 7, 15, 31)


@dataclass
class RunRecord:
    run_dir: str
    variant: str
    seed: int
    dataset: str
    metrics: list[dict]
    snapshots: list[dict]
    checkpoint_path: str | None
    batch_fingerprint: str
    final_train_loss: float
    final_val_loss: float
    param_count: int
    gate_param_count: int
    vocab_chars: str | None = None


def smoothed_train_loss(metrics: list[dict], factor: float = EMA_FACTOR) -> float:
    """Deterministic replay of the logging EMA over raw per-step losses."""
    ema = None
    for row in metrics:
        x = row["train_loss"]
        ema = x if ema is None else factor * ema + (1.0 - factor) * x
    if ema is None:
        raise ValueError("metrics history is empty")
    return float(ema)


def gap_trace(metrics: list[dict], factor: float = EMA_FACTOR) -> list[tuple[int, float]]:
    """(step, val - smoothed train) at every evaluation row."""
    ema = None
    out = []
    for row in metrics:
        x = row["train_loss"]
        ema = x if ema is None else factor * ema + (1.0 - factor) * x
        if row.get("val_loss") is not None:
            out.append((row["step"], row["val_loss"] - ema))
    return out


def load_run(run_dir) -> RunRecord:
    """Read one run directory written by the trainer/CLI."""
    d = Path(run_dir)
    cfg_path = d / "config.json"
    if not cfg_path.is_file():
        raise FileNotFoundError(f"no run at {d}: missing {cfg_path}")
    manifest = json.loads(cfg_path.read_text())
    metrics = read_csv(d / "metrics.csv")
    if not metrics:
        raise ValueError(f"metrics history at {d} is empty")
    snapshots = read_csv(d / "gates.csv") if (d / "gates.csv").is_file() else []
    vals = [r["val_loss"] for r in metrics if r.get("val_loss") is not None]
    if not vals:
        raise ValueError(f"no evaluation rows in {d}/metrics.csv")
    ckpt = d / "checkpoint.bin"
    return RunRecord(
        run_dir=str(d),
        variant=manifest["model_config"]["gate_variant"],
        seed=manifest["train_config"]["seed"],
        dataset=manifest["dataset"],
        metrics=metrics,
        snapshots=snapshots,
        checkpoint_path=str(ckpt) if ckpt.is_file() else None,
        batch_fingerprint=manifest["batch_fingerprint"],
        final_train_loss=smoothed_train_loss(metrics),
        final_val_loss=float(vals[-1]),
        param_count=manifest["param_count"],
        gate_param_count=manifest["gate_param_count"],
        vocab_chars=manifest.get("vocab_chars"),
    )


def compare_runs(base: RunRecord, other: RunRecord) -> dict:
    """Improvement of `other` over `base` (positive = better) plus gaps.

    Refuses to compare runs that did not consume identical batches.
    """
    if base.batch_fingerprint != other.batch_fingerprint:
        raise ValueError(
            f"batch fingerprints differ ({base.batch_fingerprint} vs "
            f"{other.batch_fingerprint}): runs trained on different data "
            "streams cannot be compared as an ablation")
    return {
        "delta": base.final_val_loss - other.final_val_loss,
        "gap_base": base.final_val_loss - base.final_train_loss,
        "gap_other": other.final_val_loss - other.final_train_loss,
        "val_base": base.final_val_loss,
        "val_other": other.final_val_loss,
    }


def tau_statistics(snapshots: list[dict]) -> dict:
    """Final tau per (layer, head, scale), the overall mean, and the
    trajectory of the mean across snapshot steps."""
    if not snapshots:
        raise ValueError("no gate snapshots to analyze")
    steps = sorted({r["step"] for r in snapshots})
    if len(steps) < 2:
        raise ValueError(f"need snapshots from >= 2 steps, got {len(steps)}")
    by_step: dict[int, list[float]] = {s: [] for s in steps}
    for r in snapshots:
        by_step[r["step"]].append(r["tau"])
    trajectory = [(s, float(np.mean(by_step[s]))) for s in steps]
    last = steps[-1]
    final = {(r["layer"], r["head"], r["scale"]): r["tau"]
             for r in snapshots if r["step"] == last}
    mean_tau = float(np.mean([v for v in final.values()]))
    return {
        "final": final,
        "mean": mean_tau,
        "trajectory": trajectory,
        "offset_from_0.35": mean_tau - 0.35,
    }


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def above_threshold_fraction(tau: float, samples=None) -> dict:
    """Analytic P(z > tau) for standard normal z, optionally alongside the
    empirical fraction of given z-scored energy samples above tau."""
    analytic = 1.0 - normal_cdf(tau)
    if samples is None:
        return {"analytic": analytic, "empirical": None, "difference": None}
    emp = float(np.mean(np.asarray(samples) > tau))
    return {"analytic": analytic, "empirical": emp, "difference": emp - analytic}


class EnergyFractionCollector:
    """Streams z-normalized gate energies and counts the share above tau."""

    def __init__(self, tau: float):
        self.tau = tau
        self.above = 0
        self.total = 0

    def __call__(self, e_norm: np.ndarray):
        self.above += int((e_norm > self.tau).sum())
        self.total += int(e_norm.size)

    @property
    def fraction(self) -> float:
        if self.total == 0:
            raise ValueError("no energies collected (ungated variant?)")
        return self.above / self.total


def empirical_above_fraction(model: TransformerModel, corpus: Corpus,
                             cfg: TrainConfig, tau: float = 0.35,
                             n_batches: int = 50) -> dict:
    """Fraction of z-scored energies above tau over fixed eval batches,
    next to the standard-normal prediction."""
    collector = EnergyFractionCollector(tau)
    for i in range(n_batches):
        inputs, _ = sample_batch(corpus, "val", cfg.context, cfg.batch, cfg.seed, i)
        forward(model, inputs, training=False, energy_hook=collector)
    analytic = 1.0 - normal_cdf(tau)
    return {"analytic": analytic, "empirical": collector.fraction,
            "difference": collector.fraction - analytic}


# ---------------------------------------------------------------------
# scalograms of the residual stream
# ---------------------------------------------------------------------

@dataclass
class ScalogramReport:
    scales: np.ndarray     # [S]
    matrix: np.ndarray     # [S, T] mean power over embedding dimensions
    probe: str
    layer: int             # 1-indexed block whose output was analyzed


def _scalogram_mean_power(x: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Mean over channels of per-channel Morlet power; x is [T, d]."""
    t, d = x.shape
    out = np.empty((scales.size, t))
    for i, a in enumerate(scales):
        kern = wavelets.morlet_kernel(wavelets.ADMISSIBILITY_MIN / a, a)
        taps = kern.taps
        half = (taps.shape[0] - 1) // 2
        xp = np.pad(x, ((half, half), (0, 0)), mode="reflect") if t > 1 else \
            np.repeat(x, 2 * half + t, axis=0)[:t + 2 * half]
        resp = np.zeros((t, d), dtype=np.complex128)
        for j in range(taps.shape[0]):
            # same alignment as np.convolve(..., 'valid') per channel
            resp += taps[taps.shape[0] - 1 - j] * xp[j:j + t]
        out[i] = (resp.real ** 2 + resp.imag ** 2).mean(axis=1)
    return out


def scalogram_report(model: TransformerModel, vocab: Vocab, probe_text: str,
                     layer: int, scales: np.ndarray | None = None) -> ScalogramReport:
    """Morlet power of every embedding dimension of one block's output on a
    probe string, averaged over dimensions.

    The probe is encoded with the run's vocabulary, truncated (with a
    warning) to the context length, and pushed through the model in eval
    mode under its configured normalization.
    """
    cfg = model.config
    if not 1 <= layer <= cfg.n_layers:
        raise ValueError(f"layer must be in [1, {cfg.n_layers}], got {layer}")
    if scales is None:
        scales = wavelets.default_scales()
    ids = vocab.encode(probe_text)
    if ids.shape[0] > cfg.context_len:
        warnings.warn(f"probe length {ids.shape[0]} exceeds context "
                      f"{cfg.context_len}; truncating")
        ids = ids[:cfg.context_len]
    if ids.shape[0] < 1:
        raise ValueError("probe text is empty")
    residuals: list[np.ndarray] = []
    forward(model, ids[None, :], training=False, return_residuals=residuals)
    emb = residuals[layer - 1][0].astype(np.float64)   # [T, d]
    matrix = _scalogram_mean_power(emb, np.asarray(scales, dtype=np.float64))
    return ScalogramReport(scales=np.asarray(scales, dtype=np.float64),
                           matrix=matrix, probe=probe_text, layer=layer)


def write_scalogram_csv(report: ScalogramReport, path):
    rows = []
    for i, a in enumerate(report.scales):
        row = {"scale": float(a)}
        row.update({f"p{j}": float(v) for j, v in enumerate(report.matrix[i])})
        rows.append(row)
    cols = ["scale"] + [f"p{j}" for j in range(report.matrix.shape[1])]
    write_csv(path, cols, rows)


def energy_spectrum(matrix: np.ndarray, scales: np.ndarray) -> list[dict]:
    """Total power per scale (summed over positions)."""
    matrix = np.asarray(matrix)
    scales = np.asarray(scales)
    if matrix.shape[0] != scales.shape[0]:
        raise ValueError("scale list does not match matrix rows")
    return [{"scale": float(a), "energy": float(matrix[i].sum())}
            for i, a in enumerate(scales)]


# ---------------------------------------------------------------------
# sequence-length ablation
# ---------------------------------------------------------------------

SEQLEN_TOKENS_PER_BATCH = 16384


def seqlen_ablation(corpus: Corpus, model_config, train_config: TrainConfig,
                    lengths=(64, 128, 256), out_dir=None, log=None) -> list[dict]:
    """Train BASE and EGA-1 at each context length with the token budget
    held fixed (B*T = 16384) and tabulate the validation-loss improvement.

    Returns rows {T, B, val_base, val_ega1, delta, fingerprint}; any
    fingerprint mismatch between the two variants at one T is an error.
    """
    from dataclasses import replace as dc_replace
    from .model import build_model
    from .trainer import train

    rows = []
    for t in lengths:
        if t > model_config.context_len:
            raise ValueError(f"length {t} exceeds model context_len "
                             f"{model_config.context_len}")
        b = SEQLEN_TOKENS_PER_BATCH // t
        tcfg = dc_replace(train_config, context=t, batch=b)
        finals = {}
        fps = {}
        for variant in ("base", "ega1"):
            mcfg = dc_replace(model_config, gate_variant=variant)
            mdl = build_model(mcfg)
            sub = None
            if out_dir is not None:
                sub = Path(out_dir) / f"T{t}_{variant}"
            if log is not None:
                log(f"seqlen ablation: T={t} B={b} variant={variant}")
            res = train(mdl, corpus, tcfg, out_dir=sub, log=log)
            finals[variant] = res.final_val_loss
            fps[variant] = res.batch_fingerprint
        if fps["base"] != fps["ega1"]:
            raise ValueError(f"fingerprint mismatch at T={t}: {fps}")
        rows.append({"T": t, "B": b, "val_base": finals["base"],
                     "val_ega1": finals["ega1"],
                     "delta": finals["base"] - finals["ega1"],
                     "fingerprint": fps["base"]})
    if out_dir is not None:
        write_csv(Path(out_dir) / "seqlen.csv",
                  ["T", "B", "val_base", "val_ega1", "delta", "fingerprint"], rows)
    return rows


def summary_table(records: list[RunRecord]) -> list[dict]:
    """Ablation summary (one row per run): val, delta vs the base run,
    generalization gap, and extra gate parameters."""
    base = next((r for r in records if r.variant == "base"), None)
    if base is None:
        warnings.warn("no base run in the set; delta column left empty")
    rows = []
    for r in records:
        delta = None
        if base is not None:
            if r.batch_fingerprint != base.batch_fingerprint:
                raise ValueError(f"run {r.run_dir} used different batches than base")
            delta = base.final_val_loss - r.final_val_loss
        rows.append({
            "variant": r.variant,
            "val": r.final_val_loss,
            "delta": delta,
            "gap": r.final_val_loss - r.final_train_loss,
            "extra_params": r.gate_param_count,
        })
    return rows
