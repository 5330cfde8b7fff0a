"""End-to-end commands: prepare, train, enhance, evaluate, beta sweep, phase study.

Every command is a deterministic function of its config, seed and input
files; CSVs are written with 9 significant digits.
"""
import csv
import json
import math
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import (
    NormStats,
    compute_norm_stats,
    features,
    load_clean,
    load_noise,
    mix_components,
    read_manifest,
    stack_context,
    synth_utterance,
)
from .dsp import (
    LOG_EPS,
    RISpectrogram,
    cola_span,
    combine_magnitude_phase,
    istft,
    lps_from_ri,
    stft,
)
from .metrics import score
from .model.checkpoint import load_checkpoint
from .phase import noisy_phase_ssnr_table, noisy_phase_resynthesis, phase_diff_mask, phase_of, write_pgm
from .train import TrainingDiverged, train_model, write_loss_log
from .wavio import read_wav, write_wav

__all__ = [
    "cmd_prepare",
    "cmd_train",
    "cmd_enhance",
    "cmd_evaluate",
    "cmd_beta_sweep",
    "cmd_phase_study",
    "enhance_waveform",
    "mix_spec",
    "REPORT_FIELDS",
]

REPORT_FIELDS = ("utterance_id", "snr_db", "noise_kind", "model", "ssnr_db", "lsd_db")
NOISY_LABEL = "noisy"


def _g(x):
    return f"{x:.9g}"


def _manifest_specs(cfg):
    if not cfg.data.manifest:
        raise ValueError("config has no [data] manifest")
    specs = read_manifest(cfg.data.manifest)
    if not specs:
        raise ValueError("no utterances in manifest")
    return specs, Path(cfg.data.manifest).parent


def mix_spec(spec, cfg, base_dir=None):
    clean = load_clean(spec.clean_path, base_dir, cfg.data.utterance_seconds)
    noise = load_noise(spec.noise_kind, len(clean), spec.seed, base_dir, clean.sample_rate)
    return mix_components(clean, noise, spec.snr_db, spec.seed)


def _feature_dir(out_dir):
    return Path(out_dir) / "features"


def cmd_prepare(cfg, out_dir=None):
    """Mix every manifest row, extract features, fit normalization on train only."""
    out = _feature_dir(out_dir or cfg.out_dir)
    specs, base = _manifest_specs(cfg)
    kind = cfg.model.target_kind
    per_split = defaultdict(list)
    for spec in specs:
        mix = mix_spec(spec, cfg, base)
        per_split[spec.split].append((spec.utterance_id,
                                      features(mix.noisy, cfg.stft, kind),
                                      features(mix.clean, cfg.stft, kind)))
    if not per_split.get("train"):
        raise ValueError("no utterances in the train split")
    in_stats = compute_norm_stats(np.concatenate([x for _, x, _ in per_split["train"]]))
    tgt_stats = compute_norm_stats(np.concatenate([y for _, _, y in per_split["train"]]))
    out.mkdir(parents=True, exist_ok=True)
    in_stats.save(out / "input_stats.nrm")
    tgt_stats.save(out / "target_stats.nrm")
    for split, items in sorted(per_split.items()):
        xs = [stack_context(in_stats.normalize(x), cfg.model.context) for _, x, _ in items]
        np.save(out / f"{split}_inputs.npy", np.concatenate(xs))
        np.save(out / f"{split}_targets.npy", np.concatenate([y for _, _, y in items]))
        with open(out / f"{split}_index.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("utterance_id", "start", "stop"))
            pos = 0
            for (uid, x, _) in items:
                w.writerow((uid, pos, pos + len(x)))
                pos += len(x)
    (out / "meta.json").write_text(json.dumps({
        "target_kind": kind,
        "context": cfg.model.context,
        "fft_size": cfg.stft.fft_size,
        "hop": cfg.stft.hop,
        "splits": {k: len(v) for k, v in sorted(per_split.items())},
    }, indent=1, sort_keys=True) + "\n")
    return out


def _load_features(cfg, out_dir):
    fdir = _feature_dir(out_dir)
    meta_path = fdir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no prepared features in {fdir}; run prepare first")
    meta = json.loads(meta_path.read_text())
    if meta["target_kind"] != cfg.model.target_kind or meta["context"] != cfg.model.context:
        raise ValueError("prepared features do not match the model config; rerun prepare")
    return (np.load(fdir / "train_inputs.npy"), np.load(fdir / "train_targets.npy"),
            NormStats.load(fdir / "input_stats.nrm"), NormStats.load(fdir / "target_stats.nrm"))


def cmd_train(cfg, out_dir=None, features_dir=None):
    """Train on prepared features; writes checkpoints and ``loss_log.csv``."""
    out = Path(out_dir or cfg.out_dir)
    x, y, in_stats, tgt_stats = _load_features(cfg, features_dir or out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        model, rows = train_model(cfg, x, y, in_stats, tgt_stats, out / "checkpoints")
    except TrainingDiverged as exc:
        write_loss_log(out / "loss_log.csv", exc.rows)
        raise
    write_loss_log(out / "loss_log.csv", rows)
    return model, rows


def enhance_waveform(model, noisy, stft_cfg):
    """Noisy waveform -> enhanced waveform (length truncated to whole frames)."""
    ri = stft(noisy, stft_cfg)
    if model.cfg.target_kind == "ri":
        pred = model.enhance_features(ri.stacked())
        out = RISpectrogram.from_stacked(pred)
        out.imag[:, 0] = 0.0
        out.imag[:, -1] = 0.0
    else:
        pred = model.enhance_features(lps_from_ri(ri.stacked(), LOG_EPS))
        out = combine_magnitude_phase(np.sqrt(np.exp(pred)), phase_of(ri))
    return istft(out, stft_cfg)


def cmd_enhance(checkpoint, noisy_wav, out_wav, stft_cfg):
    model = load_checkpoint(checkpoint)
    noisy = read_wav(noisy_wav)
    if noisy.sample_rate != stft_cfg.sample_rate:
        raise ValueError(f"sample rate {noisy.sample_rate} Hz does not match config {stft_cfg.sample_rate} Hz")
    if model.cfg.bins != stft_cfg.bins:
        raise ValueError("checkpoint STFT size does not match config")
    enhanced = enhance_waveform(model, noisy, stft_cfg)
    write_wav(out_wav, enhanced)
    return enhanced


def _scored(uid, clean, test, stft_cfg, n_frames):
    span = cola_span(n_frames, stft_cfg)
    ref = clean.samples[span]
    return score(uid, ref, np.asarray(test)[span], stft_cfg)


def evaluate_model(model, cfg, specs, base_dir, label):
    """Per-utterance (model, noisy) rows plus per-SNR averages."""
    rows = []
    for spec in specs:
        mix = mix_spec(spec, cfg, base_dir)
        n_frames = cfg.stft.num_frames(len(mix.noisy))
        if model is not None:
            enh = enhance_waveform(model, mix.noisy, cfg.stft)
            r = _scored(spec.utterance_id, mix.clean, enh.samples, cfg.stft, n_frames)
            rows.append((spec.utterance_id, spec.snr_db, spec.noise_kind, label, r.ssnr_db, r.lsd_db))
        r = _scored(spec.utterance_id, mix.clean, mix.noisy.samples, cfg.stft, n_frames)
        rows.append((spec.utterance_id, spec.snr_db, spec.noise_kind, NOISY_LABEL, r.ssnr_db, r.lsd_db))
    groups = defaultdict(list)
    for uid, snr, kind, mdl, s, l in rows:
        groups[(snr, mdl)].append((s, l))
    summary = []
    for (snr, mdl), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        arr = np.array(vals)
        summary.append(("mean", snr, "all", mdl, float(arr[:, 0].mean()), float(arr[:, 1].mean())))
    return rows, summary


def write_report(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for uid, snr, kind, mdl, s, l in rows:
            w.writerow((uid, _g(snr), kind, mdl, _g(s), _g(l)))


def cmd_evaluate(cfg, checkpoint=None, out_path=None, split="test"):
    """Score a checkpoint (or only the noisy input if ``checkpoint`` is None)."""
    specs, base = _manifest_specs(cfg)
    specs = [s for s in specs if s.split == split]
    if not specs:
        raise ValueError(f"no utterances in the {split} split")
    model = load_checkpoint(checkpoint) if checkpoint is not None else None
    label = model.cfg.arch if model is not None else NOISY_LABEL
    rows, summary = evaluate_model(model, cfg, specs, base, label)
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        write_report(out_path, rows + summary)
    return rows, summary


def model_means(rows, label):
    sel = np.array([(s, l) for _, _, _, m, s, l in rows if m == label])
    return float(sel[:, 0].mean()), float(sel[:, 1].mean())


def cmd_beta_sweep(cfg, betas, out_dir=None):
    """Train and evaluate once per beta (alpha = 1) on shared features and seed."""
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("beta grid is empty")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("grid not strictly increasing")
    if cfg.model.target_kind != "ri":
        raise ValueError("beta sweep needs an RI model")
    out = Path(out_dir or cfg.out_dir)
    if not (_feature_dir(out) / "meta.json").exists():
        cmd_prepare(cfg, out)
    results = []
    for beta in betas:
        run_cfg = replace(cfg, mml=replace(cfg.mml, alpha=1.0, beta=beta))
        run_dir = out / f"beta_{beta:.9g}"
        cmd_train(run_cfg, run_dir, features_dir=out)
        rows, _ = cmd_evaluate(run_cfg, run_dir / "checkpoints" / "model.riml",
                               run_dir / "report.csv")
        s, l = model_means(rows, run_cfg.model.arch)
        results.append((beta, s, l))
    with open(out / "beta_sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("beta", "ssnr_db", "lsd_db"))
        for beta, s, l in results:
            w.writerow((_g(beta), _g(s), _g(l)))
    return results


def _clean_set(clean_dir, seconds):
    if str(clean_dir).startswith("synth:"):
        n = int(str(clean_dir).split(":", 1)[1])
        return [(f"synth{k}", synth_utterance(k, seconds)) for k in range(n)]
    d = Path(clean_dir)
    wavs = sorted(d.glob("*.wav"))
    if not wavs:
        raise ValueError(f"no WAV files in {d}")
    return [(p.stem, read_wav(p)) for p in wavs]


def cmd_phase_study(clean_dir, noise_kind, snr_levels, out_dir, stft_cfg, seconds=2.0,
                    threshold=0.1, seed=0):
    """Clean-magnitude/noisy-phase SSNR and phase-agreement fraction per SNR,
    averaged over utterances; PGM masks for the first utterance."""
    levels = [float(s) for s in snr_levels]
    if not levels:
        raise ValueError("snr level list is empty")
    utts = _clean_set(clean_dir, seconds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    acc = np.zeros((len(levels), 2))
    for k, (uid, clean) in enumerate(utts):
        noise = load_noise(noise_kind, len(clean), seed + k, None, clean.sample_rate)
        rows = noisy_phase_ssnr_table(clean, noise, levels, stft_cfg, seed + k, threshold)
        acc += np.array([(s, f) for _, s, f in rows])
        if k == 0:
            for lvl in levels:
                mix = mix_components(clean, noise, lvl, seed + k)
                _, cp, npz = noisy_phase_resynthesis(mix.clean, mix.noisy, stft_cfg)
                tag = "inf" if math.isinf(lvl) else f"{lvl:g}"
                write_pgm(out / f"mask_{uid}_snr{tag}.pgm", phase_diff_mask(cp, npz, threshold).mask)
    acc /= len(utts)
    table = [(lvl, float(s), float(f)) for lvl, (s, f) in zip(levels, acc)]
    with open(out / "phase_study.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("snr_db", "ssnr_db", "mask_fraction"))
        for lvl, s, fr in table:
            w.writerow((_g(lvl), _g(s), _g(fr)))
    return table
