"""GPT-style decoder with a pluggable attention-gate slot.

Pre-LayerNorm blocks, learned absolute positional embeddings, weight
tying between the token embedding and the output head, MLP expansion 4x
with tanh-approximate GELU. Residual output projections are scaled by
1/sqrt(2L) at init.

Non-gate weights draw from one RNG stream and gate parameters from a
separate one, so every gate variant at the same seed shares bit-identical
base weights with the ungated model.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import gates
from .autodiff import Tensor

MASK_NEG = -1e9


@dataclass
class ModelConfig:
    n_layers: int = 6
    n_heads: int = 8
    d_model: int = 256
    context_len: int = 256
    vocab_size: int = 65
    dropout: float = 0.1
    gate_variant: str = "base"
    znorm_mode: str = "paper"   # "paper" (whole-sequence stats) or "causal"
    seed: int = 0
    tau_init: float = 0.0
    alpha_init: float = 2.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.znorm_mode not in ("paper", "causal"):
            raise ValueError(f"unknown znorm_mode {self.znorm_mode!r}")
        gates.gate_spec(self.gate_variant)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def np_dtype(self):
        return {"float32": np.float32, "float64": np.float64}[self.dtype]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class TransformerModel:
    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    def named_params(self) -> dict[str, Tensor]:
        return self.params

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def fingerprint(self) -> str:
        """Order-stable hash of every parameter buffer (frozen ones too)."""
        h = hashlib.blake2b(digest_size=16)
        for name in sorted(self.params):
            p = self.params[name]
            h.update(name.encode())
            h.update(str(p.data.shape).encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()


# RNG stream ids; keyed Philox counters make every consumer independent
STREAM_WEIGHTS = 0
STREAM_GATE = 1
STREAM_TRAIN_BATCH = 2
STREAM_EVAL_BATCH = 3
STREAM_DROPOUT = 4
STREAM_SAMPLE = 5


def stream_rng(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    """Counter-based generator: (seed, stream) picks the key, step the block."""
    return np.random.Generator(np.random.Philox(key=[seed, stream], counter=[0, step, 0, 0]))


def build_model(config: ModelConfig) -> TransformerModel:
    """Initialize all parameters deterministically from config.seed."""
    cfg = config
    dt = cfg.np_dtype
    w_rng = stream_rng(cfg.seed, STREAM_WEIGHTS)
    g_rng = stream_rng(cfg.seed, STREAM_GATE)
    params: dict[str, Tensor] = {}

    def normal(shape, scale=0.02):
        return Tensor(w_rng.normal(0.0, scale, size=shape).astype(dt), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape, dtype=dt), requires_grad=True)

    def ones(shape):
        return Tensor(np.ones(shape, dtype=dt), requires_grad=True)

    d = cfg.d_model
    params["tok_emb"] = normal((cfg.vocab_size, d))
    params["pos_emb"] = normal((cfg.context_len, d))
    resid_scale = 1.0 / np.sqrt(2.0 * cfg.n_layers)
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        params[pre + "ln1.gain"] = ones((d,))
        params[pre + "ln1.bias"] = zeros((d,))
        params[pre + "attn.wq"] = normal((d, d))
        params[pre + "attn.wk"] = normal((d, d))
        params[pre + "attn.wv"] = normal((d, d))
        wo = w_rng.normal(0.0, 0.02, size=(d, d)) * resid_scale
        params[pre + "attn.wo"] = Tensor(wo.astype(dt), requires_grad=True)
        params[pre + "attn.bo"] = zeros((d,))
        params[pre + "ln2.gain"] = ones((d,))
        params[pre + "ln2.bias"] = zeros((d,))
        params[pre + "mlp.w1"] = normal((d, 4 * d))
        params[pre + "mlp.b1"] = zeros((4 * d,))
        w2 = w_rng.normal(0.0, 0.02, size=(4 * d, d)) * resid_scale
        params[pre + "mlp.w2"] = Tensor(w2.astype(dt), requires_grad=True)
        params[pre + "mlp.b2"] = zeros((d,))
    params["ln_f.gain"] = ones((d,))
    params["ln_f.bias"] = zeros((d,))

    for i in range(cfg.n_layers):
        gp = gates.init_gate_params(cfg.gate_variant, d, cfg.n_heads, g_rng,
                                    tau_init=cfg.tau_init, alpha_init=cfg.alpha_init,
                                    dtype=dt)
        for name, tensor in gp.items():
            params[f"layers.{i}.gate.{name}"] = tensor
    return TransformerModel(config=cfg, params=params)


def causal_mask(t: int, dtype) -> np.ndarray:
    """Additive [1, 1, T, T] mask: 0 on and below the diagonal, -1e9 above."""
    m = np.triu(np.full((t, t), MASK_NEG, dtype=dtype), k=1)
    return m[None, None, :, :]


def layer_gate_params(model: TransformerModel, layer: int) -> dict[str, Tensor]:
    pre = f"layers.{layer}.gate."
    return {k[len(pre):]: v for k, v in model.params.items() if k.startswith(pre)}


def forward(model: TransformerModel, tokens: np.ndarray, training: bool = False,
            dropout_rng: np.random.Generator | None = None,
            znorm_mode: str | None = None,
            diag_out: list | None = None,
            return_residuals: list | None = None,
            energy_hook=None) -> Tensor:
    """Token ids [B, T] -> logits [B, T, V].

    Dropout fires only when training=True (requires dropout_rng). The
    z-normalization mode defaults to the config; generation and causality
    tests pass "causal" explicitly. When return_residuals is a list, the
    post-block residual stream of every layer is appended (eval analysis).
    """
    cfg = model.config
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ValueError(f"tokens must be [B, T], got shape {tokens.shape}")
    b, t = tokens.shape
    if t > cfg.context_len:
        raise ValueError(f"sequence length {t} exceeds context_len {cfg.context_len}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError(f"token id out of range [0, {cfg.vocab_size})")
    if training and cfg.dropout > 0.0 and dropout_rng is None:
        raise ValueError("training forward with dropout needs an explicit rng")
    zmode = cfg.znorm_mode if znorm_mode is None else znorm_mode
    p = model.params
    hd = cfg.head_dim
    nh = cfg.n_heads

    x = ad.embedding(p["tok_emb"], tokens) + p["pos_emb"][:t]
    if training and cfg.dropout > 0.0:
        x = ad.dropout(x, cfg.dropout, dropout_rng)
    mask = causal_mask(t, cfg.np_dtype)
    inv_sqrt_dk = float(1.0 / np.sqrt(hd))  # numpy scalar would promote float32

    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        a_in = ad.layer_norm(x, p[pre + "ln1.gain"], p[pre + "ln1.bias"])

        def heads(w):
            y = ad.matmul(a_in, w).reshape((b, t, nh, hd))
            return ad.transpose(y, (0, 2, 1, 3))  # [B, H, T, hd]

        q = heads(p[pre + "attn.wq"])
        k = heads(p[pre + "attn.wk"])
        v = heads(p[pre + "attn.wv"])
        # fused score/softmax and gate/dropout/value ops: composing them
        # from the tested primitives is numerically identical (see the
        # autodiff equivalence tests) but retains several extra [B,H,T,T]
        # activations per layer, which does not fit in memory at batch 64
        attn = ad.masked_attention(q, k, inv_sqrt_dk, mask)
        g = gates.compute_gate(cfg.gate_variant, layer_gate_params(model, i),
                               a_in, nh, zmode, diag_out, energy_hook=energy_hook)
        p_attn = cfg.dropout if training else 0.0
        y = ad.gated_attention_values(attn, g, v, p_attn, dropout_rng,
                                      eps=gates.RENORM_EPS)
        y = ad.transpose(y, (0, 2, 1, 3)).reshape((b, t, cfg.d_model))
        y = ad.linear(y, p[pre + "attn.wo"], p[pre + "attn.bo"])
        if training and cfg.dropout > 0.0:
            y = ad.dropout(y, cfg.dropout, dropout_rng)
        x = x + y

        m_in = ad.layer_norm(x, p[pre + "ln2.gain"], p[pre + "ln2.bias"])
        h1 = ad.gelu(ad.linear(m_in, p[pre + "mlp.w1"], p[pre + "mlp.b1"]))
        m_out = ad.linear(h1, p[pre + "mlp.w2"], p[pre + "mlp.b2"])
        if training and cfg.dropout > 0.0:
            m_out = ad.dropout(m_out, cfg.dropout, dropout_rng)
        x = x + m_out
        if return_residuals is not None:
            return_residuals.append(x.data.copy())

    x = ad.layer_norm(x, p["ln_f.gain"], p["ln_f.bias"])
    return ad.matmul(x, ad.transpose(p["tok_emb"]))


def cross_entropy_loss(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean next-token negative log-likelihood in nats."""
    return ad.cross_entropy(logits, targets)


def count_params(model: TransformerModel) -> int:
    """Trainable parameter count (frozen gate taps excluded)."""
    return int(sum(p.size for p in model.params.values() if p.requires_grad))


def count_gate_params(model: TransformerModel) -> int:
    """Trainable parameters added by the gate variant on top of the base."""
    return int(sum(p.size for name, p in model.params.items()
                   if ".gate." in name and p.requires_grad))


def sample(model: TransformerModel, prompt, n_new: int, temperature: float = 1.0,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Autoregressive continuation in a sliding context window (eval mode).

    Uses causal-prefix z-normalization so gate statistics never look past
    the position being generated. temperature <= 0 means greedy argmax.
    """
    if n_new < 0:
        raise ValueError("n_new must be >= 0")
    cfg = model.config
    toks = [int(v) for v in np.asarray(prompt).reshape(-1)]
    if not toks:
        raise ValueError("prompt must contain at least one token")
    if rng is None:
        rng = stream_rng(cfg.seed, STREAM_SAMPLE)
    for _ in range(n_new):
        ctx = np.array([toks[-cfg.context_len:]], dtype=np.int64)
        logits = forward(model, ctx, training=False, znorm_mode="causal")
        last = logits.data[0, -1].astype(np.float64)
        if temperature <= 0.0:
            nxt = int(np.argmax(last))
        else:
            z = last / temperature
            z -= z.max()
            prob = np.exp(z)
            prob /= prob.sum()
            nxt = int(rng.choice(cfg.vocab_size, p=prob))
        toks.append(nxt)
    return np.asarray(toks, dtype=np.int64)
