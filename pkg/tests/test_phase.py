import numpy as np
import pytest

from rimml.dataset import generate_noise, synth_utterance
from rimml.dsp import RISpectrogram, StftConfig, istft, stft
from rimml.phase import (
    noisy_phase_resynthesis,
    noisy_phase_ssnr_table,
    phase_diff_mask,
    phase_of,
    wrap_phase,
    write_pgm,
)


def ri(re, im):
    return RISpectrogram(np.atleast_2d(re).astype(float), np.atleast_2d(im).astype(float))


class TestPhaseOf:
    def test_axes(self):
        assert phase_of(ri([1.0], [0.0]))[0, 0] == 0.0
        assert phase_of(ri([0.0], [1.0]))[0, 0] == pytest.approx(np.pi / 2)

    def test_third_quadrant(self):
        assert phase_of(ri([-1.0], [-1e-12]))[0, 0] == pytest.approx(-np.pi, abs=1e-9)

    def test_zero_bin(self):
        assert phase_of(ri([0.0], [0.0]))[0, 0] == 0.0

    def test_range(self, rng):
        p = phase_of(stft(rng.standard_normal(4000)))
        assert np.all(p > -np.pi) and np.all(p <= np.pi)
        assert phase_of(ri([-1.0], [-0.0]))[0, 0] == np.pi


class TestMask:
    def test_identical(self, rng):
        p = rng.uniform(-np.pi, np.pi, (4, 9))
        m = phase_diff_mask(p, p, 0.1)
        assert m.mask.all() and m.fraction == 1.0

    def test_opposite(self):
        m = phase_diff_mask(np.zeros((3, 5)), np.full((3, 5), np.pi), 0.1)
        assert not m.mask.any() and m.fraction == 0.0

    def test_wraps(self):
        m = phase_diff_mask(np.array([[np.pi - 0.01]]), np.array([[-np.pi + 0.01]]), 0.1)
        assert m.mask[0, 0]

    def test_wrap_range(self, rng):
        w = wrap_phase(rng.uniform(-20, 20, 1000))
        assert np.all(w > -np.pi) and np.all(w <= np.pi)
        assert wrap_phase(-np.pi) == pytest.approx(np.pi)

    def test_errors(self):
        with pytest.raises(ValueError):
            phase_diff_mask(np.zeros((2, 3)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            phase_diff_mask(np.zeros(3), np.zeros(3), threshold=0.0)


class TestResynthesis:
    def test_clean_phase_reconstructs(self, rng):
        x = rng.standard_normal(4096)
        cfg = StftConfig()
        y, cp, npz = noisy_phase_resynthesis(x, x, cfg)
        np.testing.assert_array_equal(cp, npz)
        ref = istft(stft(x, cfg), cfg).samples
        np.testing.assert_allclose(y.samples, ref, atol=1e-10)

    def test_no_noise_hits_ceiling(self):
        clean = synth_utterance(1, 1.0)
        noise = generate_noise("white", 24000, seed=1)
        rows = noisy_phase_ssnr_table(clean, noise, [np.inf])
        assert rows[0][1] == 35.0 and rows[0][2] == 1.0

    def test_monotone_white(self):
        clean = synth_utterance(2, 1.0)
        noise = generate_noise("white", 24000, seed=2)
        rows = noisy_phase_ssnr_table(clean, noise, [-12, 0, 12])
        ssnrs = [r[1] for r in rows]
        fracs = [r[2] for r in rows]
        assert ssnrs[0] < ssnrs[1] < ssnrs[2]
        assert fracs[0] <= fracs[1] <= fracs[2]

    def test_empty_levels(self):
        with pytest.raises(ValueError):
            noisy_phase_ssnr_table(np.ones(2048), np.ones(4096), [])


def test_pgm(tmp_path):
    mask = np.array([[True, False, False], [True, True, False]])  # 2 frames x 3 bins
    p = tmp_path / "m.pgm"
    write_pgm(p, mask)
    lines = p.read_text().splitlines()
    assert lines[:3] == ["P2", "2 3", "1"]
    assert lines[3:] == ["0 0", "0 1", "1 1"]
