"""Localization-error statistics and model evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import DaanModel, predict_location
from .simulate import FingerprintDataset


@dataclass
class ErrorStats:
    """Summary of localization errors in meters.

    Percentiles use linear interpolation between closest ranks; std is the
    population standard deviation; the CDF is the empirical distribution,
    one point per sorted error, ending at fraction 1.0.
    """

    errors: np.ndarray
    median: float
    p90: float
    rmse: float
    mae: float
    std: float
    cdf: list

    def to_dict(self) -> dict:
        return {
            "median": self.median,
            "p90": self.p90,
            "rmse": self.rmse,
            "mae": self.mae,
            "std": self.std,
            "n": int(len(self.errors)),
            "cdf": [[float(e), float(f)] for e, f in self.cdf],
        }


def localization_error(pred, truth) -> float:
    """Euclidean distance between a predicted and a true position."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.hypot(pred[0] - truth[0], pred[1] - truth[1]))


def summarize(errors) -> ErrorStats:
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        raise ValueError("cannot summarize an empty error list")
    ordered = np.sort(errors)
    fractions = np.arange(1, ordered.size + 1) / ordered.size
    return ErrorStats(
        errors=errors,
        median=float(np.percentile(errors, 50)),
        p90=float(np.percentile(errors, 90)),
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mae=float(np.mean(errors)),
        std=float(np.std(errors)),
        cdf=list(zip(ordered.tolist(), fractions.tolist())),
    )


def evaluate_model(model: DaanModel, queries: FingerprintDataset,
                   mode: str = "argmax", batch: int = 256) -> ErrorStats:
    """Per-query localization error against the true sample coordinates.

    On-grid queries use their RP coordinate as ground truth; off-grid
    datasets carry explicit sample coordinates.
    """
    if queries.labels is None:
        raise ValueError("query dataset must be labeled for evaluation")
    if queries.sample_coords is not None:
        truth = queries.sample_coords
    else:
        truth = queries.rp_coords[queries.labels]
    errors = np.empty(queries.n_samples)
    for start in range(0, queries.n_samples, batch):
        stop = min(start + batch, queries.n_samples)
        coords, _ = predict_location(
            model, queries.images[start:stop], queries.rp_coords, mode=mode)
        diff = coords - truth[start:stop]
        errors[start:stop] = np.hypot(diff[:, 0], diff[:, 1])
    return summarize(errors)
