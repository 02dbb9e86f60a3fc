import numpy as np
import pytest

from hlslab.filterbank import (
    ChannelSignals,
    FilterbankSpec,
    analyze,
    design_filterbank,
    erb_bandwidth,
    erb_number,
    erb_space,
    estimate_levels,
)

FS = 48000.0


@pytest.fixture(scope="module")
def small_bank():
    return design_filterbank(FilterbankSpec(sample_rate=FS, n_channels=16))


def freq_response_oracle(bank, nfft=1 << 18):
    """Independent magnitude-response evaluation: zero-padded FFT of taps."""
    freqs = np.fft.rfftfreq(nfft, 1.0 / bank.sample_rate)
    mags = np.abs(np.fft.rfft(bank.taps, nfft, axis=1))
    return freqs, mags


class TestErbScale:
    def test_formula_at_1khz(self):
        assert erb_bandwidth(1000.0) == pytest.approx(132.639, abs=1e-3)

    def test_low_frequency_limit(self):
        assert erb_bandwidth(1e-4) == pytest.approx(24.7, abs=1e-3)

    def test_monotone_increasing(self):
        fcs = np.linspace(100, 8000, 500)
        assert np.all(np.diff(erb_bandwidth(fcs)) > 0)

    def test_two_channel_endpoints(self):
        fcs = erb_space(100.0, 8000.0, 2)
        np.testing.assert_allclose(fcs, [100.0, 8000.0], rtol=1e-12)

    def test_uniform_erb_spacing(self, small_bank):
        e = erb_number(small_bank.center_frequencies)
        np.testing.assert_allclose(np.diff(e), np.diff(e)[0], atol=1e-9)
        assert np.all(np.diff(small_bank.center_frequencies) > 0)


class TestDesign:
    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            FilterbankSpec(sample_rate=FS, n_channels=1)
        with pytest.raises(ValueError):
            FilterbankSpec(sample_rate=FS, f_lo=8000, f_hi=100)
        with pytest.raises(ValueError):
            FilterbankSpec(sample_rate=12000.0, f_hi=8000.0)

    def test_peak_location_within_one_percent(self, small_bank):
        freqs, mags = freq_response_oracle(small_bank)
        for fc, mag in zip(small_bank.center_frequencies, mags):
            peak = freqs[np.argmax(mag)]
            assert abs(peak - fc) / fc < 0.01

    def test_peak_gain_normalized(self, small_bank):
        freqs, mags = freq_response_oracle(small_bank)
        for fc, mag in zip(small_bank.center_frequencies, mags):
            gain_db = 20 * np.log10(np.interp(fc, freqs, mag))
            assert abs(gain_db) < 0.5


class TestAnalyze:
    def test_silence(self, small_bank):
        out = analyze(small_bank, np.zeros(4096))
        assert np.all(out.signals == 0)

    def test_sample_rate_mismatch(self, small_bank):
        with pytest.raises(ValueError):
            analyze(small_bank, np.zeros(16), sample_rate=44100.0)

    def test_linearity_superposition(self, small_bank):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(4096)
        y = rng.standard_normal(4096)
        a, b = 0.7, -1.3
        left = analyze(small_bank, a * x + b * y).signals
        right = a * analyze(small_bank, x).signals + b * analyze(small_bank, y).signals
        scale = np.max(np.abs(right)) or 1.0
        assert np.max(np.abs(left - right)) / scale < 1e-9

    def test_time_invariance(self, small_bank):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(2048)
        shift = 100
        shifted = np.concatenate([np.zeros(shift), x])
        y = analyze(small_bank, np.concatenate([x, np.zeros(shift)])).signals
        y_shift = analyze(small_bank, shifted).signals
        scale = np.max(np.abs(y)) or 1.0
        assert np.max(np.abs(y_shift[:, shift:] - y[:, : y.shape[1] - shift])) / scale < 1e-9

    def test_on_frequency_selectivity(self, small_bank):
        t = np.arange(int(0.25 * FS)) / FS
        for k in (0, 7, 15):
            fc = small_bank.center_frequencies[k]
            out = analyze(small_bank, np.sin(2 * np.pi * fc * t)).signals
            rms = np.sqrt(np.mean(out**2, axis=1))
            assert np.argmax(rms) == k

    def test_white_noise_power_matches_response_integral(self, small_bank):
        rng = np.random.default_rng(99)
        x = rng.standard_normal(int(4 * FS))
        out = analyze(small_bank, x).signals
        # independent oracle: output variance for unit white noise equals the
        # mean squared magnitude over the full FFT circle
        nfft = 1 << 16
        h = np.fft.fft(small_bank.taps, nfft, axis=1)
        expected = np.mean(np.abs(h) ** 2, axis=1)
        measured = np.mean(out**2, axis=1)
        db_err = 10 * np.log10(measured / expected)
        assert np.max(np.abs(db_err)) < 1.0


class TestEstimateLevels:
    def test_silence_floor(self, small_bank):
        out = analyze(small_bank, np.zeros(int(0.05 * FS)))
        lv = estimate_levels(out)
        assert np.all(lv.levels == -20.0)

    def test_steady_sine_calibration(self, small_bank):
        k = 8
        fc = small_bank.center_frequencies[k]
        t = np.arange(int(0.3 * FS)) / FS
        x = np.sqrt(2.0) * np.sin(2 * np.pi * fc * t)  # digital RMS 1.0
        lv = estimate_levels(analyze(small_bank, x))
        mid = lv.levels[k, lv.levels.shape[1] // 2]
        assert mid == pytest.approx(30.0, abs=1.0)

    def test_doubling_amplitude(self, small_bank):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(int(0.1 * FS))
        lv1 = estimate_levels(analyze(small_bank, x))
        lv2 = estimate_levels(analyze(small_bank, 2 * x))
        keep = lv1.levels > -20.0 + 1e-6
        np.testing.assert_allclose(
            lv2.levels[keep] - lv1.levels[keep], 20 * np.log10(2), atol=1e-6
        )

    def test_zero_padding_invariance(self, small_bank):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(int(0.05 * FS))
        ch = analyze(small_bank, x)
        ch_pad = analyze(small_bank, np.concatenate([x, np.zeros(480)]))
        lv = estimate_levels(ch)
        lv_pad = estimate_levels(ch_pad)
        # frames that do not overlap the padded tail must be untouched; the
        # final frames see filter ringing past the old end and may change
        hop, length = int(0.001 * FS), int(0.002 * FS)
        full = [
            i
            for i in range(lv.levels.shape[1])
            if i * hop + length <= len(x)
        ]
        np.testing.assert_allclose(
            lv_pad.levels[:, full], lv.levels[:, full], atol=1e-9
        )

    def test_monotone_in_amplitude(self, small_bank):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(int(0.05 * FS))
        base = estimate_levels(analyze(small_bank, x))
        louder = estimate_levels(analyze(small_bank, 1.01 * x))
        assert np.all(louder.levels >= base.levels - 1e-12)

    def test_frame_longer_than_signal(self, small_bank):
        sig = ChannelSignals(
            center_frequencies=small_bank.center_frequencies,
            signals=np.ones((small_bank.n_channels, 10)),
            sample_rate=FS,
        )
        lv = estimate_levels(sig, frame_hop=0.001, frame_len=0.010)
        assert lv.levels.shape[1] == 1

    def test_frame_grid_uniform(self, small_bank):
        x = np.random.default_rng(6).standard_normal(int(0.05 * FS))
        lv = estimate_levels(analyze(small_bank, x))
        hops = np.diff(lv.frame_times)
        np.testing.assert_allclose(hops, 0.001, atol=1e-12)
