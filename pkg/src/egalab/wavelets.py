"""Wavelet kernels, causal padding, scalograms, and Parseval oracles.

Morlet taps get an exact discrete zero-mean correction: the textbook
e^{i w0 t} e^{-t^2/2s^2} sampled at integer t has a mean that is only
*approximately* zero, and for narrow envelopes (s near 1) the sampled sum
is nowhere near the continuous integral, so we subtract the envelope-
weighted mean before normalizing. That makes the zero-mean property hold
by construction at every admissible (w0, s).

The decimated transform here is the circular orthogonal DWT used purely
as an energy-preservation oracle. The causal undecimated filtering used
inside attention gates lives in `gates` and does not preserve energy
exactly; only the decimated transform is held to the Parseval identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SQRT3 = np.sqrt(3.0)
_SQRT2 = np.sqrt(2.0)

# standard 8-tap Daubechies-4 scaling filter (sum = sqrt(2)), polished by a
# Newton step on the defining identities so orthonormality and the highpass
# vanishing moments hold to ~1e-15 instead of the ~1e-12 of common tables
_DB4_LOWPASS = np.array([
    2.303778133088958124e-01,
    7.148465705529146730e-01,
    6.308807679298600313e-01,
    -2.798376941685833813e-02,
    -1.870348117190940296e-01,
    3.084138183556044827e-02,
    3.288301166688575861e-02,
    -1.059740178506914793e-02,
])

ADMISSIBILITY_MIN = 5.0

_clamp_events = 0


def admissibility_clamp_count() -> int:
    """Number of times a kernel request fell below w0*s >= 5 and was clamped."""
    return _clamp_events


def reset_admissibility_clamp_count():
    global _clamp_events
    _clamp_events = 0


@dataclass
class MorletKernel:
    omega0: float
    sigma: float
    taps: np.ndarray  # complex128, L2-normalized, zero-mean


def morlet_support(sigma: float) -> int:
    """Half-width of the truncated support; tails beyond 4 sigma are < 3e-4 of peak."""
    return int(np.ceil(4.0 * sigma))


def morlet_kernel(omega0: float, sigma: float) -> MorletKernel:
    """Sampled complex Morlet over [-ceil(4s), ceil(4s)], zero-mean, unit L2 norm.

    Requests with w0*s below the admissibility floor are clamped (s raised
    to 5/w0) and counted; see admissibility_clamp_count().
    """
    if omega0 <= 0 or sigma <= 0:
        raise ValueError(f"morlet_kernel needs omega0 > 0 and sigma > 0, got ({omega0}, {sigma})")
    if omega0 * sigma < ADMISSIBILITY_MIN:
        global _clamp_events
        _clamp_events += 1
        sigma = ADMISSIBILITY_MIN / omega0
    m = morlet_support(sigma)
    t = np.arange(-m, m + 1, dtype=np.float64)
    env = np.exp(-(t * t) / (2.0 * sigma * sigma))
    carrier = np.exp(1j * omega0 * t)
    beta = np.sum(carrier * env) / np.sum(env)
    taps = (carrier - beta) * env
    taps = taps / np.sqrt(np.sum(np.abs(taps) ** 2))
    return MorletKernel(omega0=omega0, sigma=sigma, taps=taps)


@dataclass
class DaubechiesFilter:
    order: int
    lowpass: np.ndarray
    highpass: np.ndarray  # quadrature mirror: g[k] = (-1)^k h[L-1-k]


def daubechies_coefficients(order: int) -> DaubechiesFilter:
    """Standard Daubechies filters; order 1 is Haar (kept for oracle tests)."""
    if order == 1:
        h = np.array([1.0, 1.0]) / _SQRT2
    elif order == 2:
        h = np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (4.0 * _SQRT2)
    elif order == 4:
        h = _DB4_LOWPASS.copy()
    else:
        raise ValueError(f"unsupported Daubechies order {order}; expected 1, 2 or 4")
    n = h.shape[0]
    g = np.array([(-1.0) ** k * h[n - 1 - k] for k in range(n)])
    return DaubechiesFilter(order=order, lowpass=h, highpass=g)


def upsample_kernel(kernel: np.ndarray, factor: int) -> np.ndarray:
    """a-trous dilation: insert factor-1 zeros between taps."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return np.asarray(kernel).copy()
    k = np.asarray(kernel)
    out = np.zeros((len(k) - 1) * factor + 1, dtype=k.dtype)
    out[::factor] = k
    return out


def causal_reflect_pad(signal: np.ndarray, p: int) -> np.ndarray:
    """Left-extend the last axis by reflection about (not including) the edge.

    [a,b,c] with p=2 -> [c,b,a,b,c]. Unlike the repeated-reflection pad
    inside causal_conv1d, this is the strict single-bounce version: p must
    stay below the signal length.
    """
    signal = np.asarray(signal)
    t = signal.shape[-1]
    if p < 0:
        raise ValueError("pad amount must be >= 0")
    if p >= t:
        raise ValueError(f"reflect pad {p} needs signal length > {p}, got {t}")
    if p == 0:
        return signal.copy()
    left = signal[..., 1:p + 1][..., ::-1]
    return np.concatenate([left, signal], axis=-1)


DEFAULT_SCALE_RANGE = (1.0, 316.0)
DEFAULT_NUM_SCALES = 64


def default_scales(num: int = DEFAULT_NUM_SCALES) -> np.ndarray:
    lo, hi = DEFAULT_SCALE_RANGE
    return np.geomspace(lo, hi, num)


def cwt_scalogram(signal: np.ndarray, scales=None) -> np.ndarray:
    """Morlet scalogram: power |response|^2, rows = scales, columns = time.

    The mother wavelet is (w0=5, s=1); scale a stretches it to (5/a, a),
    keeping the admissibility product fixed. The signal is reflect-extended
    on both sides to full kernel support before the convolution, so a
    constant signal maps to (numerically) zero power everywhere and interior
    columns are shift-covariant.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"cwt_scalogram expects a 1-D signal, got shape {x.shape}")
    if scales is None:
        scales = default_scales()
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size == 0:
        raise ValueError("scale list must be non-empty")
    t = x.shape[0]
    out = np.empty((scales.size, t), dtype=np.float64)
    for i, a in enumerate(scales):
        kern = morlet_kernel(ADMISSIBILITY_MIN / a, a)
        half = (kern.taps.shape[0] - 1) // 2
        if t > 1:
            xp = np.pad(x, (half, half), mode="reflect")
        else:
            xp = np.full(t + 2 * half, x[0])
        resp = np.convolve(xp, kern.taps, mode="valid")
        out[i] = np.abs(resp) ** 2
    return out


def parseval_energy(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * x))


def dwt_decimated(x: np.ndarray, filt: DaubechiesFilter, levels: int):
    """Circular orthogonal DWT: returns (approx, [detail_1..detail_L]).

    Periodic extension keeps the analysis operator orthonormal, so energy
    is preserved exactly. Each level halves the length; the input length
    must be divisible by 2^levels and no shorter than the filter at any
    level.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("dwt_decimated expects a 1-D signal")
    details = []
    a = x
    for _ in range(levels):
        t = a.shape[0]
        if t % 2 != 0:
            raise ValueError(f"signal length {t} not divisible by 2 at some level")
        if t < filt.lowpass.shape[0]:
            raise ValueError(f"signal length {t} shorter than filter ({filt.lowpass.shape[0]})")
        n = t // 2
        idx = (2 * np.arange(n)[:, None] + np.arange(filt.lowpass.shape[0])[None, :]) % t
        windows = a[idx]
        details.append(windows @ filt.highpass)
        a = windows @ filt.lowpass
    return a, details


def dwt_parseval_check(x: np.ndarray, filt: DaubechiesFilter, levels: int = 3) -> float:
    """Relative gap between signal energy and summed subband energies."""
    total = parseval_energy(x)
    if total == 0.0:
        return 0.0
    approx, details = dwt_decimated(x, filt, levels)
    sub = parseval_energy(approx) + sum(parseval_energy(d) for d in details)
    return abs(total - sub) / total
