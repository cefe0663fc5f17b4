"""Energy-gate variants for attention: the four-step gate pipeline plus
the linear, causal-conv, Morlet, and Daubechies-detail energy estimators.

Pipeline per layer, per head (and per scale where S > 1):
  1. energy estimate e[t] from the token embeddings entering attention
  2. z-normalization of e (full-sequence or causal-prefix statistics)
  3. g = sigmoid(alpha * (e_norm - tau))
  4. attention rows reweighted by g and renormalized to sum one

The conv / Morlet / DWT estimators are fused primitives: their per-scale
filter responses are recomputed during backward instead of being kept on
the tape, because retaining [B, d, T] responses for every scale and layer
would dominate peak memory at full model scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import wavelets
from .autodiff import Tensor

ZNORM_EPS = 1e-5
ZNORM_VAR_FLOOR = 1e-12  # added under the sqrt so zero-variance rows keep a finite gradient
RENORM_EPS = 1e-8

EGAC_FILTER_LENGTHS = (3, 7, 15, 31)
EGADB_LEVELS = 2
# Morlet gate kernels live on a fixed support so the parameterization is
# stable across checkpoint round-trips; at the init sigma ~ 1 the tails
# beyond +-4 sigma are < 3e-4 of peak, and the admissibility projection
# keeps sigma near 1 in practice.
EGAM_SUPPORT = 8
EGAM_INIT_JITTER = 0.05


@dataclass(frozen=True)
class GateSpec:
    name: str
    scales: int          # 0 means ungated
    estimator: str       # "none" | "linear" | "conv" | "morlet" | "dwt"
    learned_weights: bool = False
    db_order: int = 0


VARIANTS: dict[str, GateSpec] = {
    "base": GateSpec("base", 0, "none"),
    "ega1": GateSpec("ega1", 1, "linear"),
    "ega2": GateSpec("ega2", 2, "linear"),
    "ega4": GateSpec("ega4", 4, "linear"),
    "egac": GateSpec("egac", 4, "conv", learned_weights=True),
    "egam": GateSpec("egam", 4, "morlet", learned_weights=True),
    "egadb2": GateSpec("egadb2", 1, "dwt", db_order=2),
    "egadb4": GateSpec("egadb4", 1, "dwt", db_order=4),
}


def gate_spec(variant: str) -> GateSpec:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown gate variant {variant!r}; expected one of {sorted(VARIANTS)}")


@dataclass
class GateDiagnostics:
    """Per-layer gate summary captured during a forward pass."""
    energy_mean: np.ndarray      # [H] mean of raw energy per head
    energy_std: np.ndarray       # [H]
    tau: np.ndarray              # [H, S]
    alpha: np.ndarray            # [H, S]
    activation_fraction: np.ndarray  # [H] share of positions with g > 0.5
    scale_weights: np.ndarray | None  # [H, S] post-softforms, None when uniform/S=1


# ---------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------

def init_gate_params(variant: str, d_model: int, n_heads: int,
                     rng: np.random.Generator,
                     tau_init: float = 0.0, alpha_init: float = 2.0,
                     dtype=np.float32) -> dict[str, Tensor]:
    """Fresh gate parameters for one layer; draw order is fixed.

    Scale-combination weights are stored as logits (softmax applied in the
    forward pass). Daubechies taps are stored frozen (requires_grad False)
    so they appear in checkpoints and fingerprints but never train.
    """
    spec = gate_spec(variant)
    h, s = n_heads, spec.scales
    params: dict[str, Tensor] = {}
    if spec.estimator == "none":
        return params

    def learn(arr):
        return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

    if spec.estimator == "linear":
        params["w_proj"] = learn(rng.normal(0.0, 0.02, size=(d_model, h * s)))
        params["bias"] = learn(np.zeros(h * s))
    elif spec.estimator == "conv":
        for i, k in enumerate(EGAC_FILTER_LENGTHS):
            params[f"filters{i}"] = learn(rng.normal(0.0, 0.02, size=(d_model, k)))
        params["mix"] = learn(rng.normal(0.0, 0.02, size=(h, s, d_model)))
        params["bias"] = learn(np.zeros((h, s)))
    elif spec.estimator == "morlet":
        omega0 = 5.0 + rng.uniform(-EGAM_INIT_JITTER, EGAM_INIT_JITTER, size=(h, s))
        sigma = 1.0 + rng.uniform(-EGAM_INIT_JITTER, EGAM_INIT_JITTER, size=(h, s))
        sigma = np.maximum(sigma, wavelets.ADMISSIBILITY_MIN / omega0)
        params["omega0"] = learn(omega0)
        params["sigma"] = learn(sigma)
    elif spec.estimator == "dwt":
        filt = wavelets.daubechies_coefficients(spec.db_order)
        params["taps_lo"] = Tensor(filt.lowpass.astype(dtype))
        params["taps_hi"] = Tensor(filt.highpass.astype(dtype))

    params["tau"] = learn(np.full((h, s), tau_init))
    params["alpha"] = learn(np.full((h, s), alpha_init))
    if spec.learned_weights and s > 1:
        params["scale_logits"] = learn(np.zeros((h, s)))
    return params


def clamp_admissibility(params: dict[str, Tensor]) -> int:
    """Project Morlet gate params back to omega0*sigma >= 5 (in place).

    Returns how many (head, scale) entries were clamped; call after every
    optimizer step for the Morlet variant.
    """
    if "omega0" not in params or "sigma" not in params:
        return 0
    w = params["omega0"].data
    s = params["sigma"].data
    floor = wavelets.ADMISSIBILITY_MIN / w
    hit = s < floor
    if np.any(hit):
        s[hit] = floor[hit]
    return int(hit.sum())


# ---------------------------------------------------------------------
# the four public pipeline steps
# ---------------------------------------------------------------------

def energy_linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """e[b, t] = w . x[b, t] + b for x [B, T, d], w [d], b scalar."""
    return ad.sum_(x * w.reshape((1, 1, -1)), axis=-1) + b


def z_normalize(e: Tensor, mode: str = "paper") -> Tensor:
    """Standardize energies over the last (time) axis.

    "paper": mean/std over all T positions (whole-sequence statistics).
    "causal": mean/std over the prefix <= t, so position 0 maps to 0 and
    no statistic looks ahead. The causal branch first subtracts e[.., 0];
    prefix z-scores are algebraically invariant to a constant shift, and
    the smaller magnitudes keep the cumulative moment subtraction well
    conditioned in float32. The shift must itself be causally available
    (the whole-sequence mean would leak future rounding noise into early
    positions), which is why the first element is used.
    """
    if mode == "paper":
        mu = ad.mean(e, axis=-1, keepdims=True)
        xc = e - mu
        var = ad.mean(xc * xc, axis=-1, keepdims=True)
        std = ad.sqrt(var + ZNORM_VAR_FLOOR)
        return xc / (std + ZNORM_EPS)
    if mode == "causal":
        t = e.shape[-1]
        shift = e[..., 0:1]
        ec = e - shift
        n = np.arange(1, t + 1, dtype=e.dtype)
        mu = ad.cumsum(ec, axis=-1) / Tensor(n)
        var = ad.cumsum(ec * ec, axis=-1) / Tensor(n) - mu * mu
        var = ad.relu(var)  # rounding can push exact zeros a hair negative
        std = ad.sqrt(var + ZNORM_VAR_FLOOR)
        return (ec - mu) / (std + ZNORM_EPS)
    raise ValueError(f"unknown z-normalization mode {mode!r}; expected 'paper' or 'causal'")


def gate_from_energy(e_norm: Tensor, tau, alpha) -> Tensor:
    """g = sigmoid(alpha * (e_norm - tau)), elementwise with broadcasting."""
    if not isinstance(tau, Tensor):
        tau = Tensor(np.asarray(tau, dtype=e_norm.dtype))
    if not isinstance(alpha, Tensor):
        alpha = Tensor(np.asarray(alpha, dtype=e_norm.dtype))
    return ad.sigmoid(alpha * (e_norm - tau))


def apply_gate(attn: Tensor, g: Tensor) -> Tensor:
    """Gate attention rows by per-key weights and renormalize to sum one.

    attn [..., Tq, Tk] row-stochastic, g [..., Tk] in (0, 1); masked zeros
    stay zero because gating is multiplicative.
    """
    return ad.gate_renormalize(attn, g, eps=RENORM_EPS)


def combine_scale_gates(gates: list[Tensor], scale_weights: Tensor | None = None) -> Tensor:
    """Convex combination of per-scale gates.

    scale_weights are logits over scales (softmax applied here, last axis
    broadcastable against the gate stack); None means uniform averaging.
    """
    s = len(gates)
    if s < 1:
        raise ValueError("need at least one scale gate")
    stacked = ad.concat([g.reshape((1,) + g.shape) for g in gates], axis=0)  # [S, ...]
    if scale_weights is None:
        return ad.mean(stacked, axis=0)
    if scale_weights.shape[-1] != s:
        raise ValueError(f"scale weight count {scale_weights.shape[-1]} != scale count {s}")
    w = ad.softmax_lastdim(scale_weights)
    w = ad.transpose(w.reshape((-1, s)), (1, 0))  # [S, H] or [S, 1]
    while w.ndim < stacked.ndim:
        w = w.reshape(w.shape + (1,))
    return ad.sum_(stacked * w, axis=0)


# ---------------------------------------------------------------------
# numpy helpers shared by the fused energy estimators
# ---------------------------------------------------------------------

def _cc_index(t: int, klen: int) -> np.ndarray:
    # Left-pad by replicating the first sample. Mirror padding (the obvious
    # alternative) would read positions 1..klen-1 into the virtual past and
    # make early outputs depend on later inputs; replication keeps every
    # output a function of x[0..t] only.
    pad = klen - 1
    return np.pad(np.arange(t), (pad, 0), mode="edge")


def _cc_fwd(xp: np.ndarray, kern: np.ndarray, t: int) -> np.ndarray:
    """y[.., t] = sum_j kern[.., j] * x[.., t - j] on a pre-padded signal."""
    klen = kern.shape[-1]
    pad = klen - 1
    y = np.zeros(np.broadcast_shapes(xp.shape[:-1], kern.shape[:-1]) + (t,), dtype=xp.dtype)
    for j in range(klen):
        y += kern[..., j:j + 1] * xp[..., pad - j:pad - j + t]
    return y


def _cc_dx(dy: np.ndarray, kern: np.ndarray, idx: np.ndarray, t: int) -> np.ndarray:
    klen = kern.shape[-1]
    pad = klen - 1
    dxp = np.zeros(dy.shape[:-1] + (t + pad,), dtype=dy.dtype)
    for j in range(klen):
        dxp[..., pad - j:pad - j + t] += kern[..., j:j + 1] * dy
    dxp_t = np.moveaxis(dxp, -1, 0)
    g = np.zeros((t,) + dxp_t.shape[1:], dtype=dy.dtype)
    np.add.at(g, idx, dxp_t)
    return np.moveaxis(g, 0, -1)


def _cc_dk(dy: np.ndarray, xp: np.ndarray, kshape: tuple, t: int) -> np.ndarray:
    klen = kshape[-1]
    pad = klen - 1
    dk = np.empty(kshape, dtype=dy.dtype)
    for j in range(klen):
        contrib = (dy * xp[..., pad - j:pad - j + t]).sum(axis=-1)
        dk[..., j] = ad._unbroadcast(contrib, kshape[:-1])
    return dk


# ---------------------------------------------------------------------
# fused energy estimators
# ---------------------------------------------------------------------

def conv_mix_energy(x: Tensor, filt: Tensor, mix: Tensor, bias: Tensor) -> Tensor:
    """One causal-conv energy scale: depthwise filter, then per-head mix.

    x [B, C, T]; filt [C, K]; mix [C, H]; bias [H] -> e [B, H, T] with
    e[b,h,t] = sum_c mix[c,h] * (filt_c * x_c)[t] + bias[h]. Fused: only x
    and the small parameters stay alive for backward; the [B, C, T]
    response is recomputed there.
    """
    t = x.data.shape[-1]
    idx = _cc_index(t, filt.data.shape[-1])
    xp = x.data[..., idx]
    conv = _cc_fwd(xp, filt.data, t)
    e = np.einsum("bct,ch->bht", conv, mix.data) + bias.data[None, :, None]

    def bw(dy):
        conv_b = _cc_fwd(xp, filt.data, t)
        ad._accum(bias, dy.sum(axis=(0, 2)))
        ad._accum(mix, np.einsum("bht,bct->ch", dy, conv_b))
        dconv = np.einsum("bht,ch->bct", dy, mix.data)
        del conv_b
        ad._accum(filt, _cc_dk(dconv, xp, filt.data.shape, t))
        ad._accum(x, _cc_dx(dconv, filt.data, idx, t))

    return ad._record(e, (x, filt, mix, bias), bw)


def morlet_bank_energy(x: Tensor, kre: Tensor, kim: Tensor) -> Tensor:
    """Squared-magnitude causal Morlet response, averaged over channels.

    x [B, C, T]; kre/kim [H, S, K] -> e [B, H, S, T] with
    e = mean_c((kre*x_c)^2 + (kim*x_c)^2). The kernel is applied causally:
    position t sees samples t-K+1..t. Responses are recomputed in backward.
    """
    b, c, t = x.data.shape
    h, s, klen = kre.data.shape
    idx = _cc_index(t, klen)
    xp = x.data[..., idx]
    e = np.empty((b, h, s, t), dtype=x.data.dtype)
    for i in range(h):
        for j in range(s):
            rr = _cc_fwd(xp, kre.data[i, j], t)
            ri = _cc_fwd(xp, kim.data[i, j], t)
            e[:, i, j] = (rr * rr + ri * ri).mean(axis=1)

    def bw(dy):
        dx = np.zeros_like(x.data) if x.requires_grad else None
        dkre = np.zeros_like(kre.data)
        dkim = np.zeros_like(kim.data)
        for i in range(h):
            for j in range(s):
                scale = (2.0 / c) * dy[:, i, j][:, None, :]
                rr = _cc_fwd(xp, kre.data[i, j], t)
                drr = scale * rr
                del rr
                dkre[i, j] = _cc_dk(drr, xp, (klen,), t)
                if dx is not None:
                    dx += _cc_dx(drr, kre.data[i, j], idx, t)
                del drr
                ri = _cc_fwd(xp, kim.data[i, j], t)
                dri = scale * ri
                del ri
                dkim[i, j] = _cc_dk(dri, xp, (klen,), t)
                if dx is not None:
                    dx += _cc_dx(dri, kim.data[i, j], idx, t)
        ad._accum(kre, dkre)
        ad._accum(kim, dkim)
        if dx is not None:
            ad._accum(x, dx)

    return ad._record(e, (x, kre, kim), bw)


def dwt_detail_energy(x: Tensor, taps_lo: Tensor, taps_hi: Tensor,
                      levels: int = EGADB_LEVELS) -> Tensor:
    """Undecimated causal detail energy: sum over levels of detail^2,
    averaged over channels.

    x [B, C, T] -> e [B, T]. Level 1 detail = hi * x; deeper levels filter
    the running lowpass with a-trous (zero-upsampled) taps. Taps are
    frozen; only x receives gradient.
    """
    t = x.data.shape[-1]
    c = x.data.shape[1]
    lo = taps_lo.data
    hi = taps_hi.data

    def forward(xd):
        details = []
        approx = xd
        approxes = [xd]
        for lev in range(levels):
            hi_l = wavelets.upsample_kernel(hi, 2 ** lev)
            lo_l = wavelets.upsample_kernel(lo, 2 ** lev)
            idx = _cc_index(t, hi_l.shape[-1])
            ap = approx[..., idx]
            details.append(_cc_fwd(ap, hi_l, t))
            if lev + 1 < levels:
                approx = _cc_fwd(ap, lo_l, t)
                approxes.append(approx)
        return details, approxes

    details, _ = forward(x.data)
    e = np.zeros((x.data.shape[0], t), dtype=x.data.dtype)
    for d in details:
        e += (d * d).mean(axis=1)

    def bw(dy):
        details_b, approxes_b = forward(x.data)
        scale = (2.0 / c) * dy[:, None, :]
        dapprox = None
        for lev in range(levels - 1, -1, -1):
            hi_l = wavelets.upsample_kernel(hi, 2 ** lev)
            lo_l = wavelets.upsample_kernel(lo, 2 ** lev)
            idx = _cc_index(t, hi_l.shape[-1])
            da = _cc_dx(scale * details_b[lev], hi_l, idx, t)
            if dapprox is not None:
                da += _cc_dx(dapprox, lo_l, idx, t)
            dapprox = da
        ad._accum(x, dapprox)

    return ad._record(e, (x, taps_lo, taps_hi), bw)


# ---------------------------------------------------------------------
# Morlet kernels as a differentiable function of (omega0, sigma)
# ---------------------------------------------------------------------

def morlet_gate_kernels(omega0: Tensor, sigma: Tensor, support: int = EGAM_SUPPORT):
    """Build zero-mean, L2-normalized Morlet taps from parameter tensors.

    omega0/sigma [H, S] -> (real, imag) each [H, S, 2*support+1]. Same
    construction as wavelets.morlet_kernel but expressed in recorded ops
    so gradients flow into omega0 and sigma; the support is fixed rather
    than 4*sigma so the parameterization stays smooth and checkpointable.
    """
    tgrid = np.arange(-support, support + 1, dtype=omega0.dtype)
    tconst = Tensor(tgrid.reshape(1, 1, -1))
    t2 = Tensor((tgrid * tgrid).reshape(1, 1, -1))
    h, s = omega0.shape
    w = omega0.reshape((h, s, 1))
    sg = sigma.reshape((h, s, 1))
    env = ad.exp(t2 / (sg * sg * (-2.0)))
    phase = w * tconst
    cosp = ad.cos(phase)
    sinp = ad.sin(phase)
    envsum = ad.sum_(env, axis=-1, keepdims=True)
    beta_re = ad.sum_(cosp * env, axis=-1, keepdims=True) / envsum
    beta_im = ad.sum_(sinp * env, axis=-1, keepdims=True) / envsum
    re = (cosp - beta_re) * env
    im = (sinp - beta_im) * env
    norm = ad.sqrt(ad.sum_(re * re + im * im, axis=-1, keepdims=True))
    return re / norm, im / norm


# ---------------------------------------------------------------------
# per-layer gate computation
# ---------------------------------------------------------------------

def compute_gate(variant: str, params: dict[str, Tensor], x: Tensor,
                 n_heads: int, znorm_mode: str = "paper",
                 diag_out: list | None = None,
                 energy_hook=None) -> Tensor | None:
    """Full gate for one layer: energies -> z-norm -> sigmoid -> combine.

    x is the normalized block input [B, T, d] (the same tensor the Q/K/V
    projections consume). Returns g [B, H, T] in (0, 1), or None for the
    ungated variant. When diag_out is a list, a GateDiagnostics is
    appended; energy_hook, when given, receives the z-normalized energy
    array [B, H|1, S, T] of every layer (read-only use).
    """
    spec = gate_spec(variant)
    if spec.estimator == "none":
        return None
    b, t, d = x.shape
    h, s = n_heads, spec.scales

    if spec.estimator == "linear":
        e = ad.matmul(x, params["w_proj"]) + params["bias"]   # [B, T, H*S]
        e = ad.transpose(e.reshape((b, t, h, s)), (0, 2, 3, 1))  # [B, H, S, T]
    elif spec.estimator == "conv":
        xc = ad.transpose(x, (0, 2, 1))  # [B, d, T]
        per_scale = []
        for i in range(s):
            mix_i = ad.transpose(params["mix"][:, i, :], (1, 0))   # [d, H]
            e_i = conv_mix_energy(xc, params[f"filters{i}"], mix_i, params["bias"][:, i])
            per_scale.append(e_i.reshape((b, h, 1, t)))
        e = ad.concat(per_scale, axis=2)  # [B, H, S, T]
    elif spec.estimator == "morlet":
        xc = ad.transpose(x, (0, 2, 1))
        kre, kim = morlet_gate_kernels(params["omega0"], params["sigma"])
        e = morlet_bank_energy(xc, kre, kim)  # [B, H, S, T]
    elif spec.estimator == "dwt":
        xc = ad.transpose(x, (0, 2, 1))
        e = dwt_detail_energy(xc, params["taps_lo"], params["taps_hi"])
        e = e.reshape((b, 1, 1, t))  # heads share the energy, differ via tau/alpha
    else:
        raise AssertionError(spec.estimator)

    e_norm = z_normalize(e, znorm_mode)
    if energy_hook is not None:
        energy_hook(e_norm.data)
    tau = params["tau"].reshape((1, h, s, 1))
    alpha = params["alpha"].reshape((1, h, s, 1))
    g_scales = gate_from_energy(e_norm, tau, alpha)  # [B, H, S, T]

    weights = None
    if s == 1:
        # broadcasting against tau/alpha [1, H, 1, 1] already gave [B, H, 1, T]
        g = g_scales.reshape((b, h, t))
    else:
        if spec.learned_weights:
            weights = ad.softmax_lastdim(params["scale_logits"])  # [H, S]
            wbc = weights.reshape((1, h, s, 1))
            g = ad.sum_(g_scales * wbc, axis=2)  # [B, H, T]
        else:
            g = ad.mean(g_scales, axis=2)

    if diag_out is not None:
        ed = e.data
        g_np = g.data
        act = (g_np > 0.5).mean(axis=(0, 2))
        if ed.shape[1] == h:
            e_mean = ed.mean(axis=(0, 2, 3))
            e_std = ed.std(axis=(0, 2, 3))
        else:
            e_mean = np.repeat(ed.mean(), h)
            e_std = np.repeat(ed.std(), h)
        diag_out.append(GateDiagnostics(
            energy_mean=e_mean, energy_std=e_std,
            tau=params["tau"].data.copy(), alpha=params["alpha"].data.copy(),
            activation_fraction=act,
            scale_weights=None if weights is None else weights.data.copy()))
    return g
