"""Minibatch training of an enhancement model."""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import subseed
from .model.checkpoint import save_checkpoint
from .model.losses import MMLTerms, mml_terms, ri_loss
from .model.network import Model
from .model.optim import AdamState, adam_step

__all__ = ["TrainingDiverged", "LossRow", "train_model", "batch_loss", "write_loss_log",
           "LOSS_LOG_FIELDS"]

log = logging.getLogger(__name__)

LOSS_LOG_FIELDS = ("epoch", "step", "alpha", "beta", "ri_term", "lps_term", "total")


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient stops being finite; ``rows`` holds
    the loss log up to that point."""

    def __init__(self, msg, rows=()):
        super().__init__(msg)
        self.rows = list(rows)


@dataclass
class LossRow:
    epoch: int
    step: int
    alpha: float
    beta: float
    ri_term: float
    lps_term: float
    total: float


def batch_loss(model, yhat, y, mml):
    """Objective for one batch, summed per frame and averaged over the batch."""
    n = len(y)
    if model.cfg.target_kind == "lps":
        # the baseline regresses log power directly; its loss is the LPS term
        sq, g = ri_loss(yhat, y)
        return MMLTerms(0.0, sq / n, sq / n, g / n)
    t = mml_terms(yhat, y, mml)
    return MMLTerms(t.ri / n, t.lps / n, t.total / n, t.grad / n)


def train_model(cfg, inputs, targets, input_stats, target_stats, ckpt_dir=None):
    """Train from scratch; returns ``(model, loss_rows)``.

    ``inputs`` are normalized (and context-stacked) feature rows, ``targets``
    raw target rows. One checkpoint per epoch is written to ``ckpt_dir``
    (``epoch000`` is the initialization) and ``model.riml`` always points at
    the last epoch that finished without diverging.
    """
    dtype = np.dtype(cfg.train.precision)
    seed = cfg.train.seed
    model = Model(cfg.model, seed=subseed(seed, "init"), dtype=dtype,
                  input_stats=input_stats, target_stats=target_stats)
    opt = cfg.optimizer
    state = AdamState(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps_adam=opt.eps_adam)
    shuffle = np.random.default_rng(subseed(seed, "shuffle"))
    x = np.asarray(inputs, dtype=dtype)
    y = np.asarray(targets, dtype=np.float64)
    n = len(y)
    if n < 2:
        raise ValueError("need at least 2 training frames")
    if ckpt_dir is not None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt_dir / "epoch000.riml", model)
        save_checkpoint(ckpt_dir / "model.riml", model)
    rows = []
    step = 0
    for epoch in range(1, cfg.train.epochs + 1):
        order = shuffle.permutation(n)
        for start in range(0, n, opt.batch_size):
            idx = order[start:start + opt.batch_size]
            if len(idx) < 2:
                continue  # batch norm needs two frames
            try:
                yhat = model.forward(x[idx], train=True).astype(np.float64)
                terms = batch_loss(model, yhat, y[idx], cfg.mml)
                if not np.isfinite(terms.total):
                    raise FloatingPointError("non-finite loss")
                model.backward(terms.grad)
                adam_step(state, model.parameters(), model.gradients())
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch} step {step}: {exc}", rows) from exc
            rows.append(LossRow(epoch, step, cfg.mml.alpha, cfg.mml.beta,
                                terms.ri, terms.lps, terms.total))
            step += 1
        if ckpt_dir is not None:
            save_checkpoint(ckpt_dir / f"epoch{epoch:03d}.riml", model)
            save_checkpoint(ckpt_dir / "model.riml", model)
        last = [r.total for r in rows if r.epoch == epoch]
        log.info("epoch %d: mean loss %.6g", epoch, float(np.mean(last)) if last else float("nan"))
    return model, rows


def write_loss_log(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOSS_LOG_FIELDS)
        for r in rows:
            w.writerow([r.epoch, r.step, f"{r.alpha:.9g}", f"{r.beta:.9g}",
                        f"{r.ri_term:.9g}", f"{r.lps_term:.9g}", f"{r.total:.9g}"])
