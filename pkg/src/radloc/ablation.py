"""Ablation harness: adaptation-mode and uncertainty-suppression arms.

All arms share the same datasets and the same initial weights (same init
seed), so rows differ only through their configuration flags.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

from .metrics import ErrorStats, evaluate_model
from .network import DaanConfig, build_model
from .simulate import FingerprintDataset
from .train import TrainState, train

# (name, mu_mode, mu_fixed, pus, source_only)
ARM_SPECS = [
    ("source_only", "fixed", 0.0, False, True),
    ("gda_pus", "fixed", 0.0, True, False),
    ("gda_nopus", "fixed", 0.0, False, False),
    ("lda_pus", "fixed", 1.0, True, False),
    ("lda_nopus", "fixed", 1.0, False, False),
    ("jda_pus", "fixed", 0.5, True, False),
    ("jda_nopus", "fixed", 0.5, False, False),
    ("dynamic_pus", "dynamic", 0.5, True, False),
    ("dynamic_nopus", "dynamic", 0.5, False, False),
]


@dataclass
class ArmResult:
    name: str
    seed: int
    stats: ErrorStats
    final_mu: float
    state: TrainState


def arm_config(base: DaanConfig, name: str) -> DaanConfig:
    for arm, mu_mode, mu_fixed, pus, source_only in ARM_SPECS:
        if arm == name:
            cfg = replace(base, mu_mode=mu_mode, mu_fixed=mu_fixed,
                          pus_enabled=pus)
            if source_only:
                cfg = replace(cfg, lambda_adv=0.0, gamma=0.0)
            return cfg
    raise ValueError(f"unknown ablation arm {name!r}")


def ablate(source: FingerprintDataset, target: FingerprintDataset,
           queries: FingerprintDataset, base_config: DaanConfig,
           seed: int = 0, mode: str = "argmax",
           arms: list[str] | None = None) -> list[ArmResult]:
    """Train and evaluate every arm with identical seeds and init weights."""
    names = [spec[0] for spec in ARM_SPECS] if arms is None else list(arms)
    results = []
    for name in names:
        cfg = arm_config(base_config, name)
        model = build_model(cfg, source.image_shape, seed=seed)
        model, state = train(model, source, target, cfg, shuffle_seed=seed)
        stats = evaluate_model(model, queries, mode=mode)
        results.append(ArmResult(name, seed, stats, state.mu, state))
    return results


def write_summary_csv(results: list[ArmResult], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "seed", "median", "p90", "rmse", "mae",
                         "std", "final_mu"])
        for r in results:
            s = r.stats
            writer.writerow([r.name, r.seed, repr(s.median), repr(s.p90),
                             repr(s.rmse), repr(s.mae), repr(s.std),
                             repr(r.final_mu)])


def write_metrics_json(results: list[ArmResult], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        r.name: {
            "seed": r.seed,
            "final_mu": r.final_mu,
            "stats": r.stats.to_dict(),
            "history": r.state.history,
        }
        for r in results
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True),
                    encoding="utf-8")
