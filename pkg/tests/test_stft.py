import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepvqe.audio import AudioBuffer
from deepvqe.errors import ConfigError, FrameContractError, ShapeError
from deepvqe.stft import (
    ComplexSpectrum,
    StftConfig,
    StreamingIstft,
    StreamingStft,
    compress,
    compress_array,
    decompress,
    decompress_array,
    istft,
    sqrt_hann,
    stft,
)

CFG = StftConfig()


class TestWindow:
    def test_cola_exact(self):
        w = sqrt_hann(480)
        overlap = w[:240] ** 2 + w[240:] ** 2
        np.testing.assert_allclose(overlap, 1.0, atol=1e-12)

    def test_bins(self):
        assert CFG.bins == 241


class TestStft:
    def test_zero_signal(self):
        spec = stft(np.zeros(2400), CFG)
        assert spec.data.shape == (10, 241)
        assert np.all(spec.data == 0)

    def test_frame_count(self):
        assert stft(np.zeros(239), CFG).frames == 0
        assert stft(np.zeros(240), CFG).frames == 1
        assert stft(np.zeros(480), CFG).frames == 2
        assert stft(np.zeros(500), CFG).frames == 2

    def test_impulse_frame0_oracle(self):
        # Frame 0 covers [pad(240), x[0:240)]; impulse at sample 0 sits at
        # window position 240. Oracle: direct DFT of the windowed impulse.
        x = np.zeros(480)
        x[0] = 1.0
        spec = stft(x, CFG).data
        windowed = np.zeros(480)
        windowed[240] = CFG.window[240]
        expected = np.fft.rfft(windowed)
        np.testing.assert_allclose(spec[0], expected, atol=1e-12)
        np.testing.assert_allclose(np.abs(spec[0]), CFG.window[240], atol=1e-12)

    def test_sine_energy_at_mapped_bin(self):
        f0 = 1000.0
        bin_expected = round(f0 * 480 / 24000)   # oracle: bin mapping
        n = np.arange(24000)
        x = np.sin(2 * np.pi * f0 * n / 24000)
        spec = np.abs(stft(x, CFG).data)
        interior = spec[5:-5]
        assert np.all(np.argmax(interior, axis=1) == bin_expected)

    def test_causality(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 4800)
        y = x.copy()
        s = 2400
        y[s:] = rng.uniform(-1, 1, 2400)
        a = stft(x, CFG).data
        b = stft(y, CFG).data
        # frame t reads samples < t*hop + hop; frames below s/hop match.
        safe = s // 240
        np.testing.assert_array_equal(a[:safe], b[:safe])
        assert not np.array_equal(a[safe:], b[safe:])


class TestIstft:
    def test_zero_spectrum(self):
        out = istft(ComplexSpectrum(np.zeros((5, 241), dtype=complex)), CFG)
        assert out.shape == (1200,)
        assert np.all(out == 0)

    def test_round_trip_white_noise(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, 24000)
        y = istft(stft(x, CFG), CFG)
        assert y.shape == x.shape
        err = y[:-240] - x[:-240]
        rms = np.sqrt(np.mean(err**2)) / np.sqrt(np.mean(x**2))
        assert rms < 1e-6

    def test_single_frame_dc_inverse_oracle(self):
        row = np.zeros(241, dtype=complex)
        row[0] = 480.0
        out = istft(ComplexSpectrum(row[None, :]), CFG)
        # Oracle: inverse DFT of the row is all-ones; synthesis applies the
        # window; the emitted hop is the tail half (lead pad removed).
        expected = (np.fft.irfft(row, 480) * CFG.window)[240:]
        np.testing.assert_allclose(out, expected, atol=1e-12)
        np.testing.assert_allclose(out, CFG.window[240:], atol=1e-12)

    def test_bad_bin_count(self):
        with pytest.raises(ShapeError):
            istft(ComplexSpectrum(np.zeros((3, 100), dtype=complex)), CFG)


class TestStreaming:
    def test_stft_stream_bit_identical(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, 4800)
        offline = stft(x, CFG).data
        ss = StreamingStft(CFG)
        rows = [ss.push(x[i * 240 : (i + 1) * 240]).copy() for i in range(20)]
        np.testing.assert_array_equal(np.stack(rows), offline)

    def test_istft_stream_bit_identical(self):
        rng = np.random.default_rng(3)
        spec = rng.standard_normal((20, 241)) + 1j * rng.standard_normal((20, 241))
        offline = istft(ComplexSpectrum(spec), CFG)
        si = StreamingIstft(CFG)
        emits = [si.push(spec[i]).copy() for i in range(20)]
        # Offline drops the lead-pad emit and appends the partial tail.
        streamed = np.concatenate(emits[1:])
        np.testing.assert_array_equal(streamed, offline[: streamed.size])

    def test_contract_errors(self):
        with pytest.raises(FrameContractError):
            StreamingStft(CFG).push(np.zeros(100))
        with pytest.raises(ShapeError):
            StreamingIstft(CFG).push(np.zeros(100, dtype=complex))

    def test_reset(self):
        rng = np.random.default_rng(4)
        packets = rng.uniform(-1, 1, (5, 240))
        ss = StreamingStft(CFG)
        first = [ss.push(p).copy() for p in packets]
        ss.reset()
        second = [ss.push(p).copy() for p in packets]
        np.testing.assert_array_equal(np.stack(first), np.stack(second))


class TestCompression:
    def test_zero_maps_to_zero(self):
        spec = ComplexSpectrum(np.zeros((2, 241), dtype=complex))
        out = compress(spec, 0.3)
        assert np.all(out.data == 0)

    def test_exponent_one_identity(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((3, 241)) + 1j * rng.standard_normal((3, 241))
        out = compress(ComplexSpectrum(data), 1.0)
        np.testing.assert_allclose(out.data, data, rtol=1e-12)

    def test_simple_value(self):
        data = np.full((1, 241), 4.0 + 0.0j)
        out = compress(ComplexSpectrum(data), 0.5)
        np.testing.assert_allclose(out.data, 2.0 + 0.0j, rtol=1e-12)
        back = decompress(out, 0.5)
        np.testing.assert_allclose(back.data, 4.0 + 0.0j, rtol=1e-12)

    def test_phase_preserved(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((4, 241)) + 1j * rng.standard_normal((4, 241))
        out = compress_array(data, 0.3)
        mask = np.abs(data) > 0
        np.testing.assert_allclose(
            np.angle(out[mask]), np.angle(data[mask]), atol=1e-9
        )

    def test_round_trip_random(self):
        rng = np.random.default_rng(7)
        data = rng.standard_normal((6, 241)) + 1j * rng.standard_normal((6, 241))
        back = decompress_array(compress_array(data, 0.3), 0.3)
        mask = np.abs(data) > 1e-12
        rel = np.abs(back[mask] - data[mask]) / np.abs(data[mask])
        assert np.max(rel) < 1e-6

    @given(
        re=st.floats(-1e3, 1e3),
        im=st.floats(-1e3, 1e3),
        exponent=st.floats(0.05, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, re, im, exponent):
        z = np.array([[complex(re, im)]])
        back = decompress_array(compress_array(z, exponent), exponent)
        if abs(z[0, 0]) > 1e-12:
            assert abs(back[0, 0] - z[0, 0]) <= 1e-6 * abs(z[0, 0])
        else:
            assert abs(back[0, 0]) < 1e-9

    def test_bad_exponent(self):
        spec = ComplexSpectrum(np.zeros((1, 241), dtype=complex))
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ConfigError):
                compress(spec, bad)
            with pytest.raises(ConfigError):
                decompress(spec, bad)


def test_stft_accepts_audio_buffer():
    buf = AudioBuffer(np.zeros(480), 24000)
    assert stft(buf, CFG).frames == 2
