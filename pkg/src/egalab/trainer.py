"""Training loop: AdamW with warmup+cosine schedule, global-norm clipping,
periodic fixed-batch evaluation, gate snapshots, and checkpointing.

Every logged number is a pure function of (seed, config, corpus) except
wall_ms, which is real elapsed time. Batches, dropout masks, and eval
batches come from counter-based streams keyed by step, so an interrupted
run resumed from a checkpoint continues the metrics stream exactly.
"""

from __future__ import annotations

import json
import math
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import gates
from .autodiff import Tensor
from .data import Corpus, batch_fingerprint, sample_batch
from .model import (ModelConfig, TransformerModel, STREAM_DROPOUT, build_model,
                    count_gate_params, count_params, cross_entropy_loss, forward,
                    stream_rng)

CHECKPOINT_MAGIC = b"EGALAB-CKPT v1\n"
EMA_FACTOR = 0.99
FINGERPRINT_STEPS = 50  # batches hashed into the identical-batch digest
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, lr: float, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step} (lr {lr:.3e})")
        self.step = step
        self.lr = lr


@dataclass
class TrainConfig:
    steps: int = 5000
    batch: int = 64
    context: int = 256
    lr_max: float = 3e-4
    warmup: int = 300
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    clip_norm: float = 1.0
    eval_every: int = 100
    eval_batches: int = 200
    snapshot_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.warmup < self.steps:
            raise ValueError(f"need 0 < warmup ({self.warmup}) < steps ({self.steps})")
        for name in ("batch", "context", "lr_max", "eval_every", "eval_batches",
                     "snapshot_every", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class OptimState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_model(cls, model: TransformerModel) -> "OptimState":
        m = {k: np.zeros_like(p.data) for k, p in model.trainable().items()}
        v = {k: np.zeros_like(p.data) for k, p in model.trainable().items()}
        return cls(m=m, v=v, step=0)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to lr_max at step==warmup, then cosine to 0 at steps."""
    if step <= cfg.warmup:
        return cfg.lr_max * step / cfg.warmup
    progress = (step - cfg.warmup) / (cfg.steps - cfg.warmup)
    return cfg.lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


def wants_decay(name: str) -> bool:
    """Decoupled weight decay hits projection/filter matrices only:
    embeddings, LayerNorm, biases, and gate scalars are exempt."""
    leaf = name.rsplit(".", 1)[-1]
    if ".attn." in name and leaf in ("wq", "wk", "wv", "wo"):
        return True
    if ".mlp." in name and leaf in ("w1", "w2"):
        return True
    if ".gate." in name and (leaf in ("w_proj", "mix") or leaf.startswith("filters")):
        return True
    return False


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm. Scaling reassigns fresh arrays because two
    parameters can share one gradient buffer after broadcasting.
    """
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            g = p.grad.astype(np.float64, copy=False)
            total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def adamw_step(params: dict[str, Tensor], state: OptimState, lr: float,
               cfg: TrainConfig):
    """Bias-corrected Adam update plus decoupled decay lr*wd*theta."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        if not p.requires_grad:
            continue
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        if cfg.weight_decay > 0.0 and wants_decay(name):
            p.data -= lr * cfg.weight_decay * p.data


def evaluate(model: TransformerModel, corpus: Corpus, cfg: TrainConfig,
             split: str = "val") -> float:
    """Mean loss over eval_batches fixed batches keyed by (seed, index)."""
    total = 0.0
    for i in range(cfg.eval_batches):
        inputs, targets = sample_batch(corpus, split, cfg.context, cfg.batch,
                                       cfg.seed, i)
        logits = forward(model, inputs, training=False)
        total += float(cross_entropy_loss(logits, targets).data)
    return total / cfg.eval_batches


def gate_snapshot_rows(model: TransformerModel, step: int) -> list[dict]:
    """One row per (layer, head, scale): tau, alpha, omega0*sigma product
    (Morlet only), and the effective scale-combination weight."""
    rows = []
    cfg = model.config
    spec = gates.gate_spec(cfg.gate_variant)
    if spec.estimator == "none":
        return rows
    for layer in range(cfg.n_layers):
        pre = f"layers.{layer}.gate."
        tau = model.params[pre + "tau"].data
        alpha = model.params[pre + "alpha"].data
        omega_sigma = None
        if pre + "omega0" in model.params:
            omega_sigma = model.params[pre + "omega0"].data * model.params[pre + "sigma"].data
        weights = None
        if pre + "scale_logits" in model.params:
            logits = model.params[pre + "scale_logits"].data
            e = np.exp(logits - logits.max(axis=-1, keepdims=True))
            weights = e / e.sum(axis=-1, keepdims=True)
        h, s = tau.shape
        for head in range(h):
            for scale in range(s):
                rows.append({
                    "step": step, "layer": layer, "head": head, "scale": scale,
                    "tau": float(tau[head, scale]),
                    "alpha": float(alpha[head, scale]),
                    "omega_sigma": (None if omega_sigma is None
                                    else float(omega_sigma[head, scale])),
                    "scale_weight": (1.0 / s if weights is None
                                     else float(weights[head, scale])),
                })
    return rows


METRICS_COLUMNS = ("step", "train_loss", "val_loss", "lr", "grad_norm", "wall_ms")
SNAPSHOT_COLUMNS = ("step", "layer", "head", "scale", "tau", "alpha",
                    "omega_sigma", "scale_weight")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for r in rows:
            f.write(",".join(_fmt(r.get(c)) for c in columns) + "\n")


def read_csv(path) -> list[dict]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = []
        for line in f:
            vals = line.rstrip("\n").split(",")
            row = {}
            for k, v in zip(header, vals):
                if v == "":
                    row[k] = None
                else:
                    try:
                        row[k] = int(v)
                    except ValueError:
                        try:
                            row[k] = float(v)
                        except ValueError:
                            row[k] = v
            rows.append(row)
        return rows


@dataclass
class TrainResult:
    metrics: list[dict]
    snapshots: list[dict]
    checkpoint_path: str | None
    batch_fingerprint: str
    final_train_loss: float        # smoothed (0.99 EMA of per-step losses)
    final_val_loss: float | None
    admissibility_clamps: int = 0  # Morlet boundary hits across the run


def train(model: TransformerModel, corpus: Corpus, cfg: TrainConfig,
          out_dir=None, opt_state: OptimState | None = None,
          start_step: int = 0, ema_loss: float | None = None,
          stop_step: int | None = None, log=None) -> TrainResult:
    """Run the protocol from start_step to cfg.steps (or stop_step).

    Per iteration i (logged as step i+1): seeded batch -> forward (training
    mode, step-keyed dropout stream) -> loss -> backward -> global clip ->
    AdamW -> Morlet admissibility projection. Evaluates every eval_every
    steps and snapshots gate scalars every snapshot_every steps (plus the
    initial state). A non-finite loss aborts with TrainingDiverged.

    stop_step pauses a run early while keeping the cfg.steps learning-rate
    horizon; saving a checkpoint there and resuming with start_step
    reproduces the uninterrupted metrics stream exactly, because batches,
    dropout masks, and eval batches are all keyed by absolute step.
    """
    mcfg = model.config
    fingerprint = batch_fingerprint(corpus, cfg.seed, min(cfg.steps, FINGERPRINT_STEPS),
                                    t=cfg.context, b=cfg.batch)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "model_config": mcfg.to_dict(),
            "train_config": cfg.to_dict(),
            "dataset": corpus.name,
            "vocab_size": len(corpus.vocab),
            # charset travels with the run so probe text can be encoded later
            "vocab_chars": "".join(corpus.vocab.chars),
            "train_chars": int(corpus.train_ids.shape[0]),
            "val_chars": int(corpus.val_ids.shape[0]),
            "batch_fingerprint": fingerprint,
            "param_count": count_params(model),
            "gate_param_count": count_gate_params(model),
        }
        (out / "config.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if opt_state is None:
        opt_state = OptimState.for_model(model)
    params = model.named_params()
    metrics: list[dict] = []
    snapshots: list[dict] = []
    clamp_total = 0
    if start_step == 0:
        snapshots.extend(gate_snapshot_rows(model, 0))
    val_loss = None

    last = cfg.steps if stop_step is None else min(stop_step, cfg.steps)
    for i in range(start_step, last):
        step = i + 1
        t0 = time.perf_counter()
        lr = lr_at(step, cfg)
        inputs, targets = sample_batch(corpus, "train", cfg.context, cfg.batch,
                                       cfg.seed, i)
        drop_rng = stream_rng(cfg.seed, STREAM_DROPOUT, i)
        with ad.Tape() as tape:
            logits = forward(model, inputs, training=True, dropout_rng=drop_rng)
            loss = cross_entropy_loss(logits, targets)
        loss_val = float(loss.data)
        if not math.isfinite(loss_val):
            raise TrainingDiverged(step, lr, loss_val)
        ad.backward(loss, tape)
        grad_norm = clip_global_norm(params, cfg.clip_norm)
        adamw_step(params, opt_state, lr, cfg)
        model.zero_grad()
        for layer in range(mcfg.n_layers):
            pre = f"layers.{layer}.gate."
            gp = {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}
            clamp_total += gates.clamp_admissibility(gp)

        ema_loss = loss_val if ema_loss is None else (
            EMA_FACTOR * ema_loss + (1.0 - EMA_FACTOR) * loss_val)
        row_val = None
        if step % cfg.eval_every == 0 or step == cfg.steps:
            val_loss = evaluate(model, corpus, cfg)
            row_val = val_loss
        wall_ms = (time.perf_counter() - t0) * 1000.0
        metrics.append({"step": step, "train_loss": loss_val, "val_loss": row_val,
                        "lr": lr, "grad_norm": grad_norm, "wall_ms": wall_ms})
        if step % cfg.snapshot_every == 0 or step == cfg.steps:
            snapshots.extend(gate_snapshot_rows(model, step))
        if log is not None and (step % cfg.eval_every == 0 or step == 1):
            log(f"step {step}/{cfg.steps} loss {loss_val:.4f} ema {ema_loss:.4f}"
                + (f" val {row_val:.4f}" if row_val is not None else "")
                + f" lr {lr:.2e} gnorm {grad_norm:.2f}")

    ckpt_path = None
    if out is not None:
        write_csv(out / "metrics.csv", METRICS_COLUMNS, metrics)
        write_csv(out / "gates.csv", SNAPSHOT_COLUMNS, snapshots)
        ckpt_path = str(out / "checkpoint.bin")
        save_checkpoint(model, opt_state, ckpt_path, train_config=cfg,
                        ema_loss=ema_loss, fingerprint=fingerprint)
    return TrainResult(metrics=metrics, snapshots=snapshots,
                       checkpoint_path=ckpt_path, batch_fingerprint=fingerprint,
                       final_train_loss=(ema_loss if ema_loss is not None else float("nan")),
                       final_val_loss=val_loss,
                       admissibility_clamps=clamp_total)


# ---------------------------------------------------------------------
# checkpoint format: magic, u32 header length, JSON header, f32-LE payload
# ---------------------------------------------------------------------

def _param_table(entries: dict[str, np.ndarray], offset: int):
    table = []
    for name in sorted(entries):
        arr = entries[name]
        nbytes = arr.size * 4
        table.append({"name": name, "shape": list(arr.shape),
                      "offset": offset, "nbytes": nbytes})
        offset += nbytes
    return table, offset


def save_checkpoint(model: TransformerModel, opt_state: OptimState | None,
                    path, train_config: TrainConfig | None = None,
                    ema_loss: float | None = None, fingerprint: str | None = None):
    """Write atomically: temp file then rename. Payload is float32 LE."""
    params = {k: p.data for k, p in model.params.items()}
    offset = 0
    ptable, offset = _param_table(params, offset)
    header = {
        "format_version": 1,
        "model_config": model.config.to_dict(),
        "train_config": None if train_config is None else train_config.to_dict(),
        "ema_loss": ema_loss,
        "batch_fingerprint": fingerprint,
        "params": ptable,
        "opt": None,
    }
    blobs = [params]
    if opt_state is not None:
        mtable, offset = _param_table(opt_state.m, offset)
        vtable, offset = _param_table(opt_state.v, offset)
        header["opt"] = {"step": opt_state.step, "m": mtable, "v": vtable}
        blobs += [opt_state.m, opt_state.v]
    head_bytes = json.dumps(header, sort_keys=True).encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(head_bytes)))
        f.write(head_bytes)
        for blob in blobs:
            for name in sorted(blob):
                f.write(np.ascontiguousarray(blob[name], dtype="<f4").tobytes())
    os.replace(tmp, path)


def _read_table(payload: bytes, table: list[dict], what: str) -> dict[str, np.ndarray]:
    out = {}
    for entry in table:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise ValueError(f"checkpoint payload truncated reading {what} {entry['name']!r}")
        arr = np.frombuffer(payload[start:start + nbytes], dtype="<f4")
        out[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return out


def load_checkpoint(path):
    """Returns (model, aux) where aux carries opt state, configs, ema,
    and the stored batch fingerprint."""
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        got = raw[:16]
        raise ValueError(f"checkpoint format/version mismatch: expected "
                         f"{CHECKPOINT_MAGIC!r}, file begins {got!r}")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack("<I", raw[pos:pos + 4])
    pos += 4
    header = json.loads(raw[pos:pos + hlen].decode())
    payload = raw[pos + hlen:]
    mcfg = ModelConfig.from_dict(header["model_config"])
    model = build_model(mcfg)
    stored = _read_table(payload, header["params"], "parameter")
    if set(stored) != set(model.params):
        missing = sorted(set(model.params) - set(stored))[:3]
        extra = sorted(set(stored) - set(model.params))[:3]
        raise ValueError(f"checkpoint parameters do not match config "
                         f"(variant {mcfg.gate_variant!r}); missing {missing}, "
                         f"unexpected {extra}")
    for name, arr in stored.items():
        p = model.params[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise ValueError(f"shape mismatch for {name!r}: checkpoint "
                             f"{arr.shape}, model {p.data.shape}")
        p.data = arr.astype(mcfg.np_dtype)
    opt_state = None
    if header.get("opt"):
        m = _read_table(payload, header["opt"]["m"], "moment")
        v = _read_table(payload, header["opt"]["v"], "moment")
        opt_state = OptimState(
            m={k: a.astype(mcfg.np_dtype) for k, a in m.items()},
            v={k: a.astype(mcfg.np_dtype) for k, a in v.items()},
            step=header["opt"]["step"])
    aux = {
        "opt_state": opt_state,
        "train_config": (None if header.get("train_config") is None
                         else TrainConfig.from_dict(header["train_config"])),
        "ema_loss": header.get("ema_loss"),
        "batch_fingerprint": header.get("batch_fingerprint"),
    }
    return model, aux
