"""Wavelet identities at their defining tolerances, Parseval oracles, and
scalogram behavior on signals with known time-scale structure."""

import numpy as np
import pytest

from egalab import wavelets as wv

# Scale-index band used for impulse-peak checks. At the very first grid
# scale (a=1) the zero-mean correction re-weights the +-1 taps above the
# center tap, so an impulse peaks one scale off the end of the grid; from
# a ~ 1.1 upward the envelope dominates and argmax lands in-band.
FINE_BAND = (1, 10)


# -- Daubechies identities ---------------------------------------------

@pytest.mark.parametrize("order", [1, 2, 4])
def test_lowpass_sums_to_sqrt2(order):
    f = wv.daubechies_coefficients(order)
    assert abs(f.lowpass.sum() - np.sqrt(2.0)) < 1e-12


@pytest.mark.parametrize("order", [1, 2, 4])
def test_orthonormality_at_even_shifts(order):
    f = wv.daubechies_coefficients(order)
    h = f.lowpass
    for k in range(0, len(h) // 2):
        target = 1.0 if k == 0 else 0.0
        inner = np.dot(h[: len(h) - 2 * k], h[2 * k:])
        assert abs(inner - target) < 1e-12, f"shift {k}"


@pytest.mark.parametrize("order", [1, 2, 4])
def test_quadrature_mirror_highpass(order):
    f = wv.daubechies_coefficients(order)
    n = len(f.lowpass)
    expected = np.array([(-1.0) ** k * f.lowpass[n - 1 - k] for k in range(n)])
    np.testing.assert_allclose(f.highpass, expected, atol=0)
    assert abs(f.highpass.sum()) < 1e-12          # zero mean
    assert abs(np.dot(f.highpass, f.lowpass)) < 1e-12


def test_db2_closed_form():
    f = wv.daubechies_coefficients(2)
    s3 = np.sqrt(3.0)
    expected = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * np.sqrt(2.0))
    np.testing.assert_allclose(f.lowpass, expected, atol=0)


def test_unknown_order_rejected():
    with pytest.raises(ValueError):
        wv.daubechies_coefficients(3)


# -- Parseval ----------------------------------------------------------

@pytest.mark.parametrize("order", [2, 4])
def test_decimated_dwt_preserves_energy_100_signals(order):
    f = wv.daubechies_coefficients(order)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(256)
        worst = max(worst, wv.dwt_parseval_check(x, f, levels=3))
    assert worst < 1e-10, f"worst relative energy error {worst:.3e}"


def test_dwt_shapes_and_length_checks():
    f = wv.daubechies_coefficients(2)
    approx, details = wv.dwt_decimated(np.ones(64), f, levels=2)
    assert approx.shape == (16,) and [d.shape for d in details] == [(32,), (16,)]
    with pytest.raises(ValueError):
        wv.dwt_decimated(np.ones(63), f, levels=2)   # not divisible by 4


def test_upsample_kernel_atrous():
    np.testing.assert_array_equal(wv.upsample_kernel(np.array([1.0, 2.0, 3.0]), 2),
                                  [1.0, 0.0, 2.0, 0.0, 3.0])
    np.testing.assert_array_equal(wv.upsample_kernel(np.array([1.0, 2.0]), 1),
                                  [1.0, 2.0])


# -- Morlet ------------------------------------------------------------

def test_morlet_zero_mean_and_unit_norm():
    for w0, s in [(5.0, 1.0), (6.0, 2.5), (2.0, 2.5), (0.5, 10.0)]:
        k = wv.morlet_kernel(w0, s)
        assert abs(k.taps.sum()) < 1e-12
        assert abs(np.sum(np.abs(k.taps) ** 2) - 1.0) < 1e-12


def test_morlet_support_covers_four_sigma():
    k = wv.morlet_kernel(5.0, 3.0)
    assert k.taps.shape[0] == 2 * wv.morlet_support(3.0) + 1 == 25


def test_morlet_admissibility_clamp_counted():
    wv.reset_admissibility_clamp_count()
    k = wv.morlet_kernel(5.0, 0.5)        # product 2.5 < 5 -> clamp
    assert k.sigma == pytest.approx(1.0)
    assert wv.admissibility_clamp_count() == 1
    wv.morlet_kernel(5.0, 2.0)            # admissible, no count
    assert wv.admissibility_clamp_count() == 1
    wv.reset_admissibility_clamp_count()
    assert wv.admissibility_clamp_count() == 0


def test_morlet_rejects_nonpositive():
    with pytest.raises(ValueError):
        wv.morlet_kernel(-1.0, 1.0)
    with pytest.raises(ValueError):
        wv.morlet_kernel(5.0, 0.0)


def test_morlet_peak_frequency():
    """The kernel's DFT peaks at its carrier frequency (w0 rad/sample)."""
    k = wv.morlet_kernel(1.25, 4.0)      # product 5.0, carrier below Nyquist
    n = 4096
    spec = np.abs(np.fft.fft(k.taps, n))
    freqs = 2 * np.pi * np.fft.fftfreq(n)
    peak = freqs[np.argmax(spec)]
    assert abs(peak - 1.25) < 0.05


# -- causal padding ----------------------------------------------------

def test_causal_reflect_pad_values():
    np.testing.assert_array_equal(
        wv.causal_reflect_pad(np.array([1.0, 2.0, 3.0]), 2), [3, 2, 1, 2, 3])
    x2 = np.arange(8.0).reshape(2, 4)
    assert wv.causal_reflect_pad(x2, 3).shape == (2, 7)


def test_causal_reflect_pad_strict_limit():
    with pytest.raises(ValueError, match="3"):
        wv.causal_reflect_pad(np.array([1.0, 2.0, 3.0]), 3)


# -- scalograms ---------------------------------------------------------

def test_default_scales_grid():
    s = wv.default_scales()
    assert s.shape == (64,) and s[0] == pytest.approx(1.0) and s[-1] == pytest.approx(316.0)
    assert np.all(np.diff(np.log(s)) > 0)


def test_scalogram_shape_and_nonnegative():
    x = np.random.default_rng(0).standard_normal(64)
    m = wv.cwt_scalogram(x)
    assert m.shape == (64, 64) and m.min() >= 0.0


def test_constant_signal_has_no_energy():
    m = wv.cwt_scalogram(np.full(64, 3.7), wv.default_scales(16))
    assert m.max() < 1e-6 * 64 * 3.7 ** 2


def test_impulse_peak_power_sits_at_fine_scales():
    """Kernels are L2-normalized, so an impulse deposits total energy 1 at
    every scale; what distinguishes scales is concentration: the power AT
    the impulse position is largest for fine scales and spreads thin as the
    envelope widens."""
    x = np.zeros(128)
    x[64] = 1.0
    m = wv.cwt_scalogram(x, wv.default_scales())
    at_impulse = m[:, 64]
    lo, hi = FINE_BAND
    assert lo <= int(np.argmax(at_impulse)) <= hi
    assert at_impulse[1] > 10 * at_impulse[32]


def test_sinusoid_peaks_at_matching_scale():
    t = np.arange(256)
    period = 8.0
    x = np.sin(2 * np.pi * t / period)
    scales = wv.default_scales()
    m = wv.cwt_scalogram(x, scales)
    # response peaks where center frequency w0/a matches 2 pi/period
    a_star = 5.0 * period / (2 * np.pi)
    expected = int(np.argmin(np.abs(scales - a_star)))
    got = int(np.argmax(m.sum(axis=1)))
    assert abs(got - expected) <= 1


def test_interior_shift_covariance():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(200)
    scales = wv.default_scales(16)[:8]   # keep support well inside the signal
    m1 = wv.cwt_scalogram(x, scales)
    m2 = wv.cwt_scalogram(np.roll(x, 1), scales)
    # away from the edges, shifting the signal shifts the columns
    np.testing.assert_allclose(m2[:, 60:140], m1[:, 59:139], rtol=1e-6, atol=1e-9)


def test_scalogram_rejects_2d():
    with pytest.raises(ValueError):
        wv.cwt_scalogram(np.ones((4, 4)))
