import math

import numpy as np
import pytest

import m2rec


def test_fft_matches_numpy():
    rng = np.random.default_rng(3)
    for n in (1, 7, 16, 97, 128):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        np.testing.assert_allclose(m2rec.fft(list(x)), np.fft.fft(x), rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(m2rec.ifft(m2rec.fft(list(x))), x, atol=1e-12)


def test_power_spectrum_peak():
    t = np.arange(64)
    freqs, power = m2rec.power_spectrum(list(np.sin(2 * np.pi * t / 8)))
    assert len(freqs) == 33
    assert int(np.argmax(power)) == 8


def test_spectral_filter_identity_and_lowpass():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(32, 3))
    np.testing.assert_allclose(m2rec.spectral_filter(x, 1.0), x, atol=1e-12)
    t = np.arange(64)
    slow = np.sin(2 * np.pi * t / 32)
    fast = 0.3 * np.sin(2 * np.pi * t * 28 / 64)  # on a bin, so no leakage
    y = m2rec.spectral_filter(np.stack([slow + fast], axis=1), 0.25)[:, 0]
    np.testing.assert_allclose(y, slow, atol=1e-9)


def test_synthetic_and_metrics():
    seqs = m2rec.synthetic(users=3, items=64, length=21, periods=[7], seed=2)
    assert len(seqs) == 3
    for s in seqs:
        assert s[7:] == s[:-7]
    scores = [-math.inf, 0.1, 0.9, 0.5]
    assert m2rec.target_rank(scores, 3) == 2
    report = m2rec.metrics([5], [3], ks=[10])
    assert report["hr@10"] == 1.0
    assert report["mrr@10"] == pytest.approx(0.2)
    assert report["ndcg@10"] == pytest.approx(1 / math.log2(6))


def test_errors_surface_as_exceptions():
    with pytest.raises(m2rec.Error):
        m2rec.target_rank([-math.inf, 1.0], 5)
    with pytest.raises(m2rec.Error):
        m2rec.synthetic(periods=[7, 24], items=100)


def test_cli_round_trip(tmp_path):
    code, out, _ = m2rec.run_cli(["--help"])
    assert code == 0 and "synth" in out
    code, _, err = m2rec.run_cli(["no-such-command"])
    assert code == 2 and err
    data = str(tmp_path / "syn")
    code, out, _ = m2rec.run_cli(
        ["synth", "--users", "10", "--length", "20", "--out", data, "--log-level", "warn"]
    )
    assert code == 0 and "users 10" in out
    assert (tmp_path / "syn" / "vocab.txt").exists()
