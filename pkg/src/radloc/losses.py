"""Loss terms of the adaptation objective and the dynamics-adaptive factor.

Sign conventions: domain label 1 = source, 0 = target. The adversarial
terms are written as plain discriminator losses; the minimax direction is
realized by passing features through grad_reverse before any discriminator,
so a single minimization trains everything.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor

ACTIVE_NORM_EPS = 1e-8  # below this, a conditioned feature row is "inactive"


# ---------------------------------------------------------------------------
# entropy and uncertainty weights (plain arrays; used as constants)
# ---------------------------------------------------------------------------

def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy per row, with 0*log(0) = 0."""
    p = np.asarray(probs, dtype=np.float64)
    logs = np.where(p > 0.0, np.log(np.maximum(p, 1e-300)), 0.0)
    return -(p * logs).sum(axis=-1)


def uncertainty_weight_rows(probs: np.ndarray) -> np.ndarray:
    """w = 1 + exp(-H(y)); 2 for one-hot rows, toward 1 + 1/R for uniform."""
    return 1.0 + np.exp(-entropy_rows(probs))


def entropy_tensor(probs: Tensor) -> Tensor:
    """Differentiable per-row entropy of softmax outputs."""
    return ag.mul(ag.tsum(ag.mul(probs, ag.log(probs)), axis=1), -1.0)


# ---------------------------------------------------------------------------
# supervised / unsupervised terms
# ---------------------------------------------------------------------------

def loss_label(probs_source: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the true RP labels (source only)."""
    return ag.cross_entropy(probs_source, labels)


def loss_target_entropy(probs_target: Tensor) -> Tensor:
    """Mean prediction entropy over target rows (entropy minimization)."""
    return ag.tmean(entropy_tensor(probs_target))


# ---------------------------------------------------------------------------
# adversarial terms
# ---------------------------------------------------------------------------

def loss_global(model, feats_rev: Tensor, domain_labels: np.ndarray,
                weights: np.ndarray | None = None):
    """Weighted BCE of the global discriminator over both domains.

    Returns (loss, detached predictions) so the caller can track the
    discriminator's error rate.
    """
    pred = model.discriminate_global(feats_rev)
    loss = ag.binary_cross_entropy(pred, domain_labels, weights)
    return loss, pred.data.copy()


def loss_local(model, feats_rev: Tensor, probs_const: np.ndarray,
               domain_labels: np.ndarray, weights: np.ndarray | None = None):
    """Sum over RPs of the weighted per-class discriminator BCE.

    Discriminator r sees the features scaled elementwise by the predicted
    class probability y_hat^r; the probabilities are constants here (the
    reversal applies on the feature path only). Returns (loss, aux) where
    aux carries detached predictions and the active-sample masks used for
    the per-class error rates.
    """
    feat_norms = np.linalg.norm(feats_rev.data, axis=1)
    total = None
    preds, actives = [], []
    for rp in range(model.config.rp_count):
        coef = probs_const[:, rp:rp + 1]
        conditioned = ag.mul(feats_rev, Tensor(coef))
        pred = model.discriminate_local(rp, conditioned)
        term = ag.binary_cross_entropy(pred, domain_labels, weights)
        total = term if total is None else ag.add(total, term)
        preds.append(pred.data.copy())
        actives.append(coef[:, 0] * feat_norms > ACTIVE_NORM_EPS)
    return total, {"preds": preds, "active": actives}


def adv_loss_dynamic(l_global, l_local, mu: float):
    """(1 - mu) * global + mu * local; accepts floats or graph tensors."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must be in [0,1], got {mu}")
    if isinstance(l_global, Tensor) or isinstance(l_local, Tensor):
        return ag.add(ag.mul(l_global, 1.0 - mu), ag.mul(l_local, mu))
    return (1.0 - mu) * l_global + mu * l_local


def total_objective(l_y: float, l_tar: float, l_adv: float,
                    gamma: float, lambda_adv: float) -> float:
    """Reported objective value: L_y + gamma*L_tar - lambda*L_adv."""
    return l_y + gamma * l_tar - lambda_adv * l_adv


# ---------------------------------------------------------------------------
# dynamics-adaptive factor
# ---------------------------------------------------------------------------

def a_distance(error_rate: float) -> float:
    """Proxy A-distance 2(1 - 2*err) from a domain classifier error rate."""
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError(f"error rate must be in [0,1], got {error_rate}")
    return float(np.clip(2.0 * (1.0 - 2.0 * error_rate), 0.0, 2.0))


def mu_from_a(a_global: float, a_local: float, mu_init: float = 0.5) -> float:
    """mu = A_g / (A_g + A_l); falls back to mu_init when both are zero."""
    total = a_global + a_local
    if total == 0.0:
        return mu_init
    return float(np.clip(a_global / total, 0.0, 1.0))


def estimate_mu(epoch_err_g: float, epoch_err_l: float,
                mu_init: float = 0.5) -> float:
    """Dynamics-adaptive factor from the epoch-mean discriminator error rates."""
    return mu_from_a(a_distance(epoch_err_g), a_distance(epoch_err_l), mu_init)
