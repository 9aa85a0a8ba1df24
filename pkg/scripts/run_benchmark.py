#!/usr/bin/env python3
"""Desk-scale adaptation benchmark on the hall preset.

Runs the ablation arms over several seeds on a mixed-shift scenario
(global gain + exponent change, local per-subcarrier perturbation on a
subset of RPs) plus pure-global / pure-local runs for the shift-direction
study. Prints a summary table and writes the raw numbers as JSON; the
frozen acceptance thresholds were calibrated from this script's output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from radloc.ablation import ablate
from radloc.network import DaanConfig
from radloc.optim import LrSchedule
from radloc.simulate import ShiftSpec, generate_domain, mix_seed, preset_environment
from radloc.train import train
from radloc.network import build_model

BENCH_ARMS = ["source_only", "gda_pus", "lda_pus", "dynamic_pus", "dynamic_nopus"]


def benchmark_config(rp_count: int, epochs: int) -> DaanConfig:
    """Small network so the multi-seed matrix fits a desk-scale budget."""
    return DaanConfig(
        rp_count=rp_count,
        feature_dim=64,
        conv_channels=(6, 12),
        fc_predictor=(48,),
        fc_global_disc=(48,),
        fc_local_disc=(24,),
        batch_size=32,
        epochs=epochs,
        lr=LrSchedule(eta0=0.01, alpha=10.0, beta=0.75),
    )


def mixed_shift(rp_count: int, seed: int) -> ShiftSpec:
    rng = np.random.default_rng(mix_seed(seed, 0x736866) % 2**63)
    local = tuple(sorted(rng.choice(rp_count, size=round(0.3 * rp_count),
                                    replace=False).tolist()))
    return ShiftSpec(global_gain_db=6.0, global_exponent_delta=0.3,
                     local_rp_set=local, local_perturb_db=3.0,
                     noise_sigma_db=1.0, seed=seed + 17)


def pure_global_shift(seed: int) -> ShiftSpec:
    return ShiftSpec(global_gain_db=6.0, global_exponent_delta=0.4,
                     noise_sigma_db=1.0, seed=seed + 17)


def pure_local_shift(rp_count: int, seed: int) -> ShiftSpec:
    rng = np.random.default_rng(mix_seed(seed, 0x6C6F63) % 2**63)
    local = tuple(sorted(rng.choice(rp_count, size=round(0.3 * rp_count),
                                    replace=False).tolist()))
    return ShiftSpec(local_rp_set=local, local_perturb_db=4.0,
                     noise_sigma_db=1.0, seed=seed + 17)


def make_datasets(env, shift, samples: int, queries: int, seed: int):
    clean = ShiftSpec(noise_sigma_db=1.0)
    source = generate_domain(env, clean, samples, labeled=True, seed=seed)
    target = generate_domain(env, shift, samples, labeled=False, seed=seed + 1)
    query = generate_domain(env, shift, queries, labeled=True, seed=seed + 2)
    return source, target, query


def run_arms(env, samples, queries, epochs, seeds, arms):
    rows = {}
    for seed in seeds:
        shift = mixed_shift(env.rp_count, seed)
        source, target, query = make_datasets(env, shift, samples, queries,
                                              seed * 1000 + 11)
        cfg = benchmark_config(env.rp_count, epochs)
        t0 = time.perf_counter()
        results = ablate(source, target, query, cfg, seed=seed, arms=arms)
        dt = time.perf_counter() - t0
        rows[seed] = {r.name: {"mae": r.stats.mae, "median": r.stats.median,
                               "final_mu": r.final_mu}
                      for r in results}
        line = " ".join(f"{r.name}={r.stats.mae:.3f}" for r in results)
        print(f"seed {seed} ({dt:.0f}s): {line}", flush=True)
    return rows


def run_shift_direction(env, samples, epochs, seeds):
    out = {}
    for kind, make in (("global", lambda s: pure_global_shift(s)),
                       ("local", lambda s: pure_local_shift(env.rp_count, s))):
        per_seed = {}
        for seed in seeds:
            shift = make(seed)
            source, target, _ = make_datasets(env, shift, samples, 2,
                                              seed * 1000 + 77)
            cfg = benchmark_config(env.rp_count, epochs)
            model = build_model(cfg, source.image_shape, seed=seed)
            _, state = train(model, source, target, cfg, shuffle_seed=seed)
            tail = [h for h in state.history if h["epoch"] + 1 >= 5]
            a_g = float(np.mean([h["a_g"] for h in tail]))
            a_l = float(np.mean([h["a_l"] for h in tail]))
            per_seed[seed] = {"a_g": a_g, "a_l": a_l}
            print(f"{kind} shift seed {seed}: mean A_g={a_g:.3f} A_l={a_l:.3f}",
                  flush=True)
        out[kind] = per_seed
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--samples", type=int, default=16)
    ap.add_argument("--queries", type=int, default=8)
    ap.add_argument("--scale", type=float, default=0.1)
    ap.add_argument("--direction-epochs", type=int, default=12)
    ap.add_argument("--skip-arms", action="store_true")
    ap.add_argument("--skip-direction", action="store_true")
    ap.add_argument("--out", default="benchmark_results.json")
    args = ap.parse_args()

    env = preset_environment("hall", args.scale)
    print(f"hall scale={args.scale}: {env.rp_count} RPs, image {env.image_shape}")
    seeds = list(range(args.seeds))
    payload = {"config": vars(args)}

    if not args.skip_arms:
        payload["arms"] = run_arms(env, args.samples, args.queries,
                                   args.epochs, seeds, BENCH_ARMS)
        reductions = []
        for seed in seeds:
            row = payload["arms"][seed]
            base, dyn = row["source_only"]["mae"], row["dynamic_pus"]["mae"]
            reductions.append(1.0 - dyn / base)
        print("mean-error reduction vs source-only per seed:",
              [f"{r:.1%}" for r in reductions])

    if not args.skip_direction:
        payload["direction"] = run_shift_direction(
            env, args.samples, args.direction_epochs, seeds)

    Path(args.out).write_text(json.dumps(payload, indent=2, default=str))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
