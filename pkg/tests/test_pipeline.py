import csv
import math

import numpy as np
import pytest

from rimml.cli import main
from rimml.config import load_config, subseed
from rimml.dataset import MixtureSpec, NormStats, synth_utterance, write_manifest
from rimml.dsp import StftConfig, Waveform, cola_span
from rimml.metrics import ssnr
from rimml.model import Model
from rimml.model.checkpoint import checkpoint_bytes, load_checkpoint
from rimml.pipeline import (
    cmd_beta_sweep,
    cmd_enhance,
    cmd_evaluate,
    cmd_phase_study,
    cmd_prepare,
    cmd_train,
    enhance_waveform,
    evaluate_model,
)
from rimml.train import TrainingDiverged
from rimml.wavio import read_wav, write_wav

TINY_MODEL = """[model]
conv_layers = 1
filters_per_layer = 3
filter_len = 5
dense_layers = 1
dense_width = 32
"""


def write_setup(d, specs, extra="", epochs=3):
    write_manifest(d / "m.csv", specs)
    (d / "c.ini").write_text(TINY_MODEL + extra + f"""
[train]
epochs = {epochs}
seed = 4

[data]
manifest = m.csv
utterance_seconds = 0.5
""")
    return load_config(d / "c.ini")


def small_specs():
    return [MixtureSpec(f"tr{k}", f"synth:{k}", kind, snr, 10 + k, "train")
            for k, (kind, snr) in enumerate([("white", 0.0), ("babble_like", 5.0),
                                              ("engine_like", -5.0), ("white", 10.0)])] + \
        [MixtureSpec("te0", "synth:90", "white", 0.0, 20, "test"),
         MixtureSpec("te1", "synth:91", "white", 6.0, 21, "test")]


@pytest.fixture
def setup(tmp_path):
    return tmp_path, write_setup(tmp_path, small_specs())


def file_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def read_csv(p):
    with open(p, newline="") as f:
        return list(csv.DictReader(f))


class TestPrepare:
    def test_outputs_and_normalization(self, setup):
        d, cfg = setup
        fdir = cmd_prepare(cfg, d / "run")
        x = np.load(fdir / "train_inputs.npy")
        assert x.shape[1] == 2 * 257
        np.testing.assert_allclose(x.mean(axis=0), 0, atol=1e-9)
        idx = read_csv(fdir / "test_index.csv")
        assert [r["utterance_id"] for r in idx] == ["te0", "te1"]
        assert int(idx[-1]["stop"]) == len(np.load(fdir / "test_targets.npy"))
        assert NormStats.load(fdir / "input_stats.nrm").dim == 514

    def test_rerun_byte_identical(self, setup):
        d, cfg = setup
        a = file_bytes(cmd_prepare(cfg, d / "a"))
        b = file_bytes(cmd_prepare(cfg, d / "b"))
        assert a == b

    def test_stats_from_train_only(self, setup):
        d, cfg = setup
        fdir = cmd_prepare(cfg, d / "a")
        specs = small_specs()
        specs[-1] = MixtureSpec("te1", "synth:91", "white", -20.0, 99, "test")
        cfg2 = write_setup(d, specs)
        fdir2 = cmd_prepare(cfg2, d / "b")
        assert (fdir / "input_stats.nrm").read_bytes() == (fdir2 / "input_stats.nrm").read_bytes()

    def test_empty_manifest(self, tmp_path):
        cfg = write_setup(tmp_path, [])
        with pytest.raises(ValueError, match="no utterances"):
            cmd_prepare(cfg, tmp_path)

    def test_missing_wav_names_path(self, tmp_path):
        cfg = write_setup(tmp_path, [MixtureSpec("a", "gone.wav", "white", 0.0, 1, "train")])
        with pytest.raises(FileNotFoundError, match="gone.wav"):
            cmd_prepare(cfg, tmp_path)


class TestTrain:
    def test_zero_epochs_is_init(self, tmp_path):
        cfg = write_setup(tmp_path, small_specs(), epochs=0)
        cmd_prepare(cfg, tmp_path)
        model, rows = cmd_train(cfg, tmp_path)
        assert rows == []
        ck = tmp_path / "checkpoints"
        assert (ck / "model.riml").read_bytes() == (ck / "epoch000.riml").read_bytes()
        fresh = Model(cfg.model, seed=subseed(4, "init"), dtype=np.float32,
                      input_stats=model.input_stats, target_stats=model.target_stats)
        assert checkpoint_bytes(fresh) == (ck / "model.riml").read_bytes()

    def test_checkpoint_per_epoch_and_log(self, setup):
        d, cfg = setup
        cmd_prepare(cfg, d)
        _, rows = cmd_train(cfg, d)
        names = sorted(p.name for p in (d / "checkpoints").iterdir())
        assert names == ["epoch000.riml", "epoch001.riml", "epoch002.riml", "epoch003.riml",
                         "model.riml"]
        log = read_csv(d / "loss_log.csv")
        assert list(log[0]) == ["epoch", "step", "alpha", "beta", "ri_term", "lps_term", "total"]
        assert len(log) == len(rows)

    def test_beta_changes_only_lps_contribution(self, setup):
        d, cfg = setup
        cmd_prepare(cfg, d)
        _, r0 = cmd_train(cfg.with_beta(0.0), d / "b0", features_dir=d)
        _, r1 = cmd_train(cfg.with_beta(0.1), d / "b1", features_dir=d)
        # identical init and first batch; the weights only part ways after step 0
        assert r0[0].ri_term == r1[0].ri_term and r0[0].lps_term == r1[0].lps_term
        assert r0[0].total == r0[0].ri_term
        assert r1[0].total == pytest.approx(r1[0].ri_term + 0.1 * r1[0].lps_term, rel=1e-12)

    def test_deterministic(self, setup):
        d, cfg = setup
        cmd_prepare(cfg, d)
        cmd_train(cfg, d / "r1", features_dir=d)
        cmd_train(cfg, d / "r2", features_dir=d)
        assert (d / "r1/loss_log.csv").read_bytes() == (d / "r2/loss_log.csv").read_bytes()
        assert (d / "r1/checkpoints/model.riml").read_bytes() == \
            (d / "r2/checkpoints/model.riml").read_bytes()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_keeps_last_good(self, setup):
        d, cfg = setup
        fdir = cmd_prepare(cfg, d)
        y = np.load(fdir / "train_targets.npy")
        y[40] = np.inf
        np.save(fdir / "train_targets.npy", y)
        with pytest.raises(TrainingDiverged):
            cmd_train(cfg, d)
        ck = d / "checkpoints"
        assert (ck / "model.riml").read_bytes() == (ck / "epoch000.riml").read_bytes()
        assert (d / "loss_log.csv").exists()

    def test_needs_prepare(self, setup):
        d, cfg = setup
        with pytest.raises(FileNotFoundError, match="prepare"):
            cmd_train(cfg, d)


def identity_model(tmp_path):
    """Memorize clean -> clean on one utterance."""
    write_manifest(tmp_path / "m.csv", [MixtureSpec("c0", "synth:0", "white", math.inf, 0, "train")])
    (tmp_path / "c.ini").write_text("""[model]
conv_layers = 1
filters_per_layer = 2
filter_len = 3
dense_layers = 1
dense_width = 600
use_batch_norm = False

[optimizer]
batch_size = 8

[train]
epochs = 150

[data]
manifest = m.csv
utterance_seconds = 1.0
""")
    cfg = load_config(tmp_path / "c.ini")
    cmd_prepare(cfg, tmp_path)
    model, _ = cmd_train(cfg, tmp_path)
    return cfg, model


class TestEnhance:
    def test_identity_model_reproduces_input(self, tmp_path):
        cfg, model = identity_model(tmp_path)
        x = synth_utterance(0, 1.0)
        y = enhance_waveform(model, x, cfg.stft)
        span = cola_span(cfg.stft.num_frames(len(x)), cfg.stft)
        assert ssnr(x.samples[span], y.samples[span]) > 20.0

    def test_files(self, setup):
        d, cfg = setup
        cmd_prepare(cfg, d)
        cmd_train(cfg, d)
        ck = d / "checkpoints" / "model.riml"
        x = Waveform(0.3 * synth_utterance(3, 0.7).samples)
        write_wav(d / "in.wav", x)
        a = cmd_enhance(ck, d / "in.wav", d / "out1.wav", cfg.stft)
        cmd_enhance(ck, d / "in.wav", d / "out2.wav", cfg.stft)
        assert (d / "out1.wav").read_bytes() == (d / "out2.wav").read_bytes()
        assert len(a) == cfg.stft.synthesis_length(cfg.stft.num_frames(len(x)))
        assert len(read_wav(d / "out1.wav")) == len(a)

    def test_silence(self, setup):
        d, cfg = setup
        cmd_prepare(cfg, d)
        model, _ = cmd_train(cfg, d)
        out = enhance_waveform(load_checkpoint(d / "checkpoints/model.riml"), np.zeros(8000), cfg.stft)
        speech = enhance_waveform(model, synth_utterance(5, 0.5), cfg.stft)
        assert np.sqrt(np.mean(out.samples ** 2)) < np.sqrt(np.mean(speech.samples ** 2))

    def test_sample_rate_mismatch(self, setup):
        d, cfg = setup
        cmd_prepare(cfg, d)
        cmd_train(cfg, d)
        write_wav(d / "in.wav", Waveform(np.zeros(4000), 8000))
        with pytest.raises(ValueError, match="sample rate"):
            cmd_enhance(d / "checkpoints/model.riml", d / "in.wav", d / "o.wav", cfg.stft)


class TestEvaluate:
    def test_noisy_only_and_levels(self, setup):
        d, cfg = setup
        rows, summary = cmd_evaluate(cfg, None, d / "r.csv")
        assert [r[0] for r in rows] == ["te0", "te1"]
        assert [(s[1], s[3]) for s in summary] == [(0.0, "noisy"), (6.0, "noisy")]
        rep = read_csv(d / "r.csv")
        assert list(rep[0]) == ["utterance_id", "snr_db", "noise_kind", "model", "ssnr_db", "lsd_db"]
        assert len(rep) == 4

    def test_clean_against_itself(self, tmp_path):
        cfg = write_setup(tmp_path, [MixtureSpec("c", "synth:2", "white", math.inf, 1, "test")])
        rows, _ = cmd_evaluate(cfg)
        assert rows[0][4] == 35.0 and rows[0][5] == 0.0

    def test_identity_mapping_matches_noisy_row(self, setup):
        d, cfg = setup

        class Passthrough:
            class cfg:
                target_kind = "ri"

            def enhance_features(self, f):
                return f

        specs = [s for s in small_specs() if s.split == "test"]
        rows, _ = evaluate_model(Passthrough(), cfg, specs, d, "identity")
        by = {(r[0], r[3]): r[4:] for r in rows}
        for s in specs:
            assert by[(s.utterance_id, "identity")] == pytest.approx(by[(s.utterance_id, "noisy")], abs=1e-9)

    def test_empty_split(self, setup):
        d, cfg = setup
        with pytest.raises(ValueError, match="no utterances"):
            cmd_evaluate(cfg, split="dev")


class TestBetaSweep:
    def test_grid_checks(self, setup):
        d, cfg = setup
        for grid in ([0.0, 0.0], [0.1, 0.0], []):
            with pytest.raises(ValueError):
                cmd_beta_sweep(cfg, grid, d)

    def test_single_beta_matches_plain_run(self, setup):
        d, cfg = setup
        res = cmd_beta_sweep(cfg, [0.0], d / "sweep")
        cmd_prepare(cfg, d / "plain")
        cmd_train(cfg, d / "plain")
        rows, _ = cmd_evaluate(cfg, d / "plain/checkpoints/model.riml")
        s = np.mean([r[4] for r in rows if r[3] == "ri_cnn"])
        l = np.mean([r[5] for r in rows if r[3] == "ri_cnn"])
        assert res == [(0.0, s, l)]
        out = read_csv(d / "sweep/beta_sweep.csv")
        assert list(out[0]) == ["beta", "ssnr_db", "lsd_db"] and len(out) == 1


class TestPhaseStudy:
    def test_single_file(self, tmp_path):
        (tmp_path / "clean").mkdir()
        write_wav(tmp_path / "clean" / "a.wav", synth_utterance(7, 1.0))
        table = cmd_phase_study(tmp_path / "clean", "white", [-12, 0, 12], tmp_path / "o", StftConfig())
        assert len(table) == 3
        s = [r[1] for r in table]
        f = [r[2] for r in table]
        assert s[0] <= s[1] <= s[2] and f[0] <= f[1] <= f[2]
        assert len(list((tmp_path / "o").glob("mask_a_snr*.pgm"))) == 3
        assert read_csv(tmp_path / "o/phase_study.csv")[0].keys() == {"snr_db", "ssnr_db", "mask_fraction"}

    def test_empty_levels(self, tmp_path):
        with pytest.raises(ValueError):
            cmd_phase_study("synth:1", "white", [], tmp_path, StftConfig())

    def test_empty_dir(self, tmp_path):
        with pytest.raises(ValueError):
            cmd_phase_study(tmp_path, "white", [0], tmp_path, StftConfig())


class TestCli:
    def test_print_config(self, capsys):
        assert main(["print-config", "--seed", "9"]) == 0
        out = capsys.readouterr().out
        assert "[train]" in out and "seed = 9" in out
        assert load_config(text=out).train.seed == 9

    def test_usage_errors_exit_1(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 1
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 1
        assert main(["prepare", "--config", str(tmp_path / "missing.ini")]) == 1

    def test_runtime_error_exit_2(self, setup, capsys):
        d, _ = setup
        assert main(["train", "--config", str(d / "c.ini"), "--out", str(d / "x")]) == 2
        assert "prepare" in capsys.readouterr().err

    def test_end_to_end(self, setup, capsys):
        d, _ = setup
        base = ["--config", str(d / "c.ini"), "--out", str(d / "run")]
        assert main(["prepare"] + base) == 0
        assert main(["train"] + base) == 0
        assert main(["evaluate", "--checkpoint", str(d / "run/checkpoints/model.riml")] + base) == 0
        assert (d / "run/report.csv").exists()
        write_wav(d / "n.wav", synth_utterance(1, 0.5))
        assert main(["enhance", "--checkpoint", str(d / "run/checkpoints/model.riml"),
                     str(d / "n.wav"), str(d / "e.wav")] + base) == 0
        assert main(["phase-study", "--clean", "synth:1", "--levels", "0,6", "--seconds", "0.5"]
                    + base) == 0
        assert len(read_csv(d / "run/phase_study.csv")) == 2
        out = capsys.readouterr().out
        assert "ri_cnn: SSNR" in out and "noisy: SSNR" in out
