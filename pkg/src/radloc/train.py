"""Minimax training loop: supervised source, unsupervised target, and
dynamic adversarial adaptation in one optimizer step per mini-batch."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import losses as L
from .autograd import Tensor
from .network import DaanConfig, DaanModel, images_to_input
from .optim import lr_at, sgd_step
from .simulate import FingerprintDataset


class TrainingError(ValueError):
    pass


@dataclass
class TrainState:
    """Per-run bookkeeping; history holds one record per completed epoch."""

    epoch: int = 0
    mu: float = 0.5
    epoch_loss_g: float = 0.0
    epoch_loss_l: float = 0.0
    history: list = field(default_factory=list)


class _DiscStats:
    """Error-rate accumulators for the A-distance estimates."""

    def __init__(self, rp_count: int):
        self.global_err = 0
        self.global_total = 0
        self.local_err = np.zeros(rp_count, dtype=np.int64)
        self.local_total = np.zeros(rp_count, dtype=np.int64)

    def add_global(self, preds: np.ndarray, domain: np.ndarray):
        decided = preds[:, 0] > 0.5
        self.global_err += int((decided != (domain[:, 0] > 0.5)).sum())
        self.global_total += preds.shape[0]

    def add_local(self, rp: int, preds: np.ndarray, domain: np.ndarray,
                  active: np.ndarray):
        if not active.any():
            return
        decided = preds[active, 0] > 0.5
        self.local_err[rp] += int((decided != (domain[active, 0] > 0.5)).sum())
        self.local_total[rp] += int(active.sum())

    def global_error_rate(self) -> float:
        if self.global_total == 0:
            return 0.5
        return self.global_err / self.global_total

    def local_error_rate(self) -> float:
        seen = self.local_total > 0
        if not seen.any():
            return 0.5
        rates = self.local_err[seen] / self.local_total[seen]
        return float(rates.mean())


def _epoch_slots(n: int, slots: int, rng: np.random.Generator,
                 is_major: bool) -> np.ndarray:
    """Index stream for one epoch: the larger domain cycles a shuffled
    permutation, the smaller one is resampled with replacement."""
    if is_major:
        perm = rng.permutation(n)
        reps = math.ceil(slots / n)
        return np.tile(perm, reps)[:slots]
    return rng.integers(0, n, size=slots)


def _adversarial_step(model: DaanModel, cfg: DaanConfig, mu: float,
                      x_src, y_src, x_tgt, stats: _DiscStats):
    half, n_tgt = x_src.shape[0], x_tgt.shape[0]
    total = half + n_tgt
    x = Tensor(np.concatenate([x_src, x_tgt], axis=0))
    feats = model.forward_features(x)
    probs = model.predict_labels(feats)
    probs_const = probs.data.copy()

    l_y = L.loss_label(ag.slice_rows(probs, 0, half), y_src)
    l_tar = L.loss_target_entropy(ag.slice_rows(probs, half, total))
    domain = np.concatenate([np.ones((half, 1)), np.zeros((n_tgt, 1))])
    weights = (L.uncertainty_weight_rows(probs_const).reshape(-1, 1)
               if cfg.pus_enabled else None)

    feats_rev = ag.grad_reverse(feats, cfg.lambda_adv)
    fixed = cfg.mu_mode == "fixed"
    l_g = l_l = None
    if not (fixed and mu == 1.0):
        l_g, g_preds = L.loss_global(model, feats_rev, domain, weights)
        stats.add_global(g_preds, domain)
    if not (fixed and mu == 0.0):
        l_l, aux = L.loss_local(model, feats_rev, probs_const, domain, weights)
        for rp in range(cfg.rp_count):
            stats.add_local(rp, aux["preds"][rp], domain, aux["active"][rp])

    if l_g is None:
        l_adv = ag.mul(l_l, mu)
    elif l_l is None:
        l_adv = ag.mul(l_g, 1.0 - mu)
    else:
        l_adv = L.adv_loss_dynamic(l_g, l_l, mu)

    loss = ag.add(ag.add(l_y, ag.mul(l_tar, cfg.gamma)), l_adv)
    acc = float((probs_const[:half].argmax(axis=1) == y_src).mean())
    return loss, {
        "l_y": l_y.item(),
        "l_tar": l_tar.item(),
        "l_g": l_g.item() if l_g is not None else 0.0,
        "l_l": l_l.item() if l_l is not None else 0.0,
        "batch_acc": acc,
    }


def _supervised_step(model: DaanModel, x_src, y_src):
    feats = model.forward_features(Tensor(x_src))
    probs = model.predict_labels(feats)
    l_y = L.loss_label(probs, y_src)
    acc = float((probs.data.argmax(axis=1) == y_src).mean())
    return l_y, {"l_y": l_y.item(), "l_tar": 0.0, "l_g": 0.0, "l_l": 0.0,
                 "batch_acc": acc}


def source_accuracy(model: DaanModel, dataset: FingerprintDataset,
                    batch: int = 256) -> float:
    """Eval-mode classification accuracy over a labeled dataset."""
    was_training = model.training
    model.set_training(False)
    correct = 0
    try:
        for start in range(0, dataset.n_samples, batch):
            chunk = images_to_input(dataset.images[start:start + batch])
            probs = model.predict_labels(model.forward_features(Tensor(chunk)))
            correct += int((probs.data.argmax(axis=1)
                            == dataset.labels[start:start + batch]).sum())
    finally:
        model.set_training(was_training)
    return correct / dataset.n_samples


def _validate(model: DaanModel, source: FingerprintDataset,
              target: FingerprintDataset | None, cfg: DaanConfig,
              adversarial: bool):
    if source.labels is None:
        raise TrainingError("source dataset must be labeled")
    if source.rp_count != cfg.rp_count:
        raise TrainingError(
            f"source has {source.rp_count} RPs, config expects {cfg.rp_count}")
    k, n, m = source.image_shape
    if model.input_shape != (m, k, n):
        raise TrainingError(
            f"model input {model.input_shape} does not match images {(m, k, n)}")
    if target is not None:
        if target.labels is not None:
            raise TrainingError(
                "target dataset must be unlabeled; refusing labeled-target leakage")
        if target.image_shape != source.image_shape:
            raise TrainingError(
                f"target image shape {target.image_shape} != source "
                f"{source.image_shape}")
    elif adversarial:
        raise TrainingError("adversarial training requires a target dataset")


def train(model: DaanModel, source: FingerprintDataset,
          target: FingerprintDataset | None, cfg: DaanConfig,
          shuffle_seed: int = 0) -> tuple[DaanModel, TrainState]:
    """Run the full minimax optimization; returns the model and its history.

    Source-only training (lambda = gamma = 0, or no target) never touches
    target samples, so its batch statistics stay a clean baseline.
    """
    adversarial = cfg.lambda_adv > 0.0 or cfg.gamma > 0.0
    _validate(model, source, target, cfg, adversarial)
    adversarial = adversarial and target is not None

    state = TrainState(mu=cfg.mu_fixed if cfg.mu_mode == "fixed" else cfg.mu_init)
    half = cfg.batch_size // 2
    if adversarial:
        n_major = max(source.n_samples, target.n_samples)
        steps_per_epoch = math.ceil(n_major / half)
    else:
        steps_per_epoch = math.ceil(source.n_samples / cfg.batch_size)
    total_steps = max(cfg.epochs * steps_per_epoch, 1)

    groups = model.param_groups()
    model.set_training(True)
    global_step = 0
    try:
        for epoch in range(cfg.epochs):
            rng = np.random.default_rng([shuffle_seed & 0xFFFFFFFF, epoch])
            stats = _DiscStats(cfg.rp_count)
            sums = {"l_y": 0.0, "l_tar": 0.0, "l_g": 0.0, "l_l": 0.0,
                    "batch_acc": 0.0}
            slots = steps_per_epoch * (half if adversarial else cfg.batch_size)
            src_major = (not adversarial) or source.n_samples >= target.n_samples
            src_idx = _epoch_slots(source.n_samples, slots, rng, src_major)
            if adversarial:
                tgt_idx = _epoch_slots(target.n_samples, slots, rng, not src_major)

            lr = lr_at(cfg.lr, 0.0)
            for step in range(steps_per_epoch):
                width = half if adversarial else cfg.batch_size
                sel = src_idx[step * width:(step + 1) * width]
                x_src = images_to_input(source.images[sel])
                y_src = source.labels[sel]
                if adversarial:
                    tsel = tgt_idx[step * width:(step + 1) * width]
                    x_tgt = images_to_input(target.images[tsel])
                    loss, info = _adversarial_step(
                        model, cfg, state.mu, x_src, y_src, x_tgt, stats)
                else:
                    loss, info = _supervised_step(model, x_src, y_src)
                loss.backward()
                progress = global_step / max(total_steps - 1, 1)
                lr = lr_at(cfg.lr, min(progress, 1.0))
                sgd_step(groups["base"], lr, cfg.momentum)
                sgd_step(groups["predictor"], lr * cfg.predictor_lr_scale,
                         cfg.momentum)
                global_step += 1
                for key, value in info.items():
                    sums[key] += value

            means = {key: value / steps_per_epoch for key, value in sums.items()}
            state.epoch_loss_g = means["l_g"]
            state.epoch_loss_l = means["l_l"]

            if adversarial:
                if cfg.a_mode == "error_rate":
                    a_g = L.a_distance(stats.global_error_rate())
                    a_l = L.a_distance(stats.local_error_rate())
                else:
                    a_g = float(np.clip(2.0 * (1.0 - 2.0 * means["l_g"]), 0.0, 2.0))
                    a_l = float(np.clip(2.0 * (1.0 - 2.0 * means["l_l"]), 0.0, 2.0))
            else:
                a_g = a_l = 0.0

            record = {
                "epoch": epoch,
                "l_y": means["l_y"],
                "l_g": means["l_g"],
                "l_l": means["l_l"],
                "l_tar": means["l_tar"],
                "a_g": a_g,
                "a_l": a_l,
                "mu": state.mu,
                "lr": lr,
                "source_batch_acc": means["batch_acc"],
                "objective": L.total_objective(
                    means["l_y"], means["l_tar"],
                    L.adv_loss_dynamic(means["l_g"], means["l_l"], state.mu),
                    cfg.gamma, cfg.lambda_adv),
            }

            stop = False
            if cfg.early_stop_source_acc is not None:
                acc = source_accuracy(model, source)
                record["source_eval_acc"] = acc
                stop = acc >= cfg.early_stop_source_acc
                model.set_training(True)

            state.history.append(record)
            state.epoch = epoch + 1
            if adversarial and cfg.mu_mode == "dynamic":
                state.mu = L.mu_from_a(a_g, a_l, cfg.mu_init)
            if stop:
                break
    finally:
        model.set_training(False)
    return model, state
