"""Command-line entry point: ``rimml <verb> [options]``.

Exit status is 0 on success, 1 for usage or config errors and 2 when a
command fails at run time (missing inputs, numerical divergence, ...).
"""
import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, dump_config, load_config
from .pipeline import (
    cmd_beta_sweep,
    cmd_enhance,
    cmd_evaluate,
    cmd_phase_study,
    cmd_prepare,
    cmd_train,
    model_means,
)

log = logging.getLogger("rimml")

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    # SUPPRESS lets the global flags appear before or after the verb
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="experiment config (INI)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="rimml", description="RI-spectrogram speech enhancement toolkit",
                parents=[common])
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    sub.add_parser("prepare", parents=[common], help="mix the manifest and extract features")

    t = sub.add_parser("train", parents=[common], help="train on prepared features")
    t.add_argument("--features", type=Path, help="directory holding features/ (default: --out)")
    t.add_argument("--beta", type=float, help="override the LPS weight")

    e = sub.add_parser("enhance", parents=[common], help="enhance one WAV file")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("input", type=Path)
    e.add_argument("output", type=Path)

    v = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on a manifest split")
    v.add_argument("--checkpoint", type=Path, help="omit to score only the noisy input")
    v.add_argument("--split", default="test")
    v.add_argument("--report", type=Path, help="CSV path (default: OUT/report.csv)")

    b = sub.add_parser("beta-sweep", parents=[common], help="train and score one model per beta")
    b.add_argument("--betas", type=_floats, default=[0.0, 0.1])

    ph = sub.add_parser("phase-study", parents=[common], help="clean magnitude with noisy phase")
    ph.add_argument("--clean", default="synth:5", help="WAV directory or synth:<count>")
    ph.add_argument("--noise", default="white")
    ph.add_argument("--levels", type=_floats, default=[-12.0, -6.0, 0.0, 6.0, 12.0])
    ph.add_argument("--threshold", type=float, default=0.1)
    ph.add_argument("--seconds", type=float, default=2.0)

    sub.add_parser("print-config", parents=[common], help="print the effective config")
    return p


def _resolve_config(args):
    try:
        path = getattr(args, "config", None)
        cfg = load_config(path) if path else ExperimentConfig()
        if getattr(args, "seed", None) is not None:
            cfg = cfg.with_seed(args.seed)
        if getattr(args, "out", None) is not None:
            cfg = cfg.with_out(args.out)
        if getattr(args, "beta", None) is not None:
            cfg = cfg.with_beta(args.beta)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def run(args):
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    if args.verb == "print-config":
        sys.stdout.write(dump_config(cfg))
    elif args.verb == "prepare":
        print(cmd_prepare(cfg, out))
    elif args.verb == "train":
        _, rows = cmd_train(cfg, out, features_dir=args.features or out)
        if rows:
            print(f"trained {rows[-1].epoch} epochs, final loss {rows[-1].total:.6g}")
    elif args.verb == "enhance":
        cmd_enhance(args.checkpoint, args.input, args.output, cfg.stft)
        print(args.output)
    elif args.verb == "evaluate":
        report = args.report or out / "report.csv"
        rows, _ = cmd_evaluate(cfg, args.checkpoint, report, args.split)
        for label in sorted({r[3] for r in rows}):
            s, l = model_means(rows, label)
            print(f"{label}: SSNR {s:.3f} dB, LSD {l:.3f} dB")
    elif args.verb == "beta-sweep":
        for beta, s, l in cmd_beta_sweep(cfg, args.betas, out):
            print(f"beta {beta:g}: SSNR {s:.3f} dB, LSD {l:.3f} dB")
    elif args.verb == "phase-study":
        seed = cfg.train.seed
        for snr, s, f in cmd_phase_study(args.clean, args.noise, args.levels, out, cfg.stft,
                                         args.seconds, args.threshold, seed):
            print(f"{snr:g} dB: SSNR {s:.3f} dB, mask fraction {f:.4f}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except UsageError as exc:
        print(f"rimml: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"rimml {args.verb}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
