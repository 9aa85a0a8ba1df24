"""Command-line entry point: simulate, train, eval, ablate, gradcheck.

Configuration is strict and flat: defaults < JSON config file (--config) <
command-line overrides. Unknown keys fail fast, naming the offender. All
randomness derives from the single run seed through named sub-seeds
(data-source, data-target, data-query, shift, init, shuffle), so artifacts
are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .ablation import ablate, write_metrics_json, write_summary_csv
from .dataio import read_dataset, write_dataset
from .gradcheck import run_suite
from .metrics import evaluate_model
from .network import DaanConfig, build_model, load_checkpoint, save_checkpoint
from .optim import LrSchedule
from .simulate import ShiftSpec, generate_domain, mix_seed, preset_environment
from .train import train


class ConfigError(ValueError):
    pass


def derive_seed(seed: int, label: str) -> int:
    """Named sub-seed from the run seed; stable across platforms."""
    return mix_seed(seed, *label.encode("utf-8"))


_SIM_DEFAULTS = {
    "out": "runs/sim",
    "preset": "hall",
    "scale": 1.0,
    "samples_per_rp": 20,
    "query_samples_per_rp": 8,
    "noise_sigma_db": 1.0,
    "shift_profile": "mixed",      # none | global | local | mixed
    "shift_gain_db": 6.0,
    "shift_exponent_delta": 0.3,
    "shift_local_fraction": 0.3,
    "shift_local_perturb_db": 3.0,
    "off_grid_queries": False,
    "seed": 0,
}

_MODEL_DEFAULTS = {
    "epochs": 50,
    "batch_size": 64,
    "lambda": 1.0,
    "gamma": 0.1,
    "mu": "dynamic",               # dynamic | fixed:<value>
    "pus": True,
    "eta0": 0.01,
    "lr_alpha": 10.0,
    "lr_beta": 0.75,
    "momentum": 0.9,
    "feature_dim": 128,
    "conv_channels": (8, 16, 32, 64),
    "fc_predictor": (64,),
    "fc_global_disc": (64,),
    "fc_local_disc": (32,),
    "a_mode": "error_rate",
    "early_stop_acc": 0.0,         # <= 0 disables
    "seed": 0,
}

_TRAIN_DEFAULTS = {
    "source": "",
    "target": "",
    "out": "runs/ckpt",
    "source_only": False,
    **_MODEL_DEFAULTS,
}

_EVAL_DEFAULTS = {
    "checkpoint": "",
    "queries": "",
    "out": "runs/metrics",
    "mode": "argmax",
}

_ABLATE_DEFAULTS = {
    "source": "",
    "target": "",
    "queries": "",
    "out": "runs/ablation",
    "mode": "argmax",
    **_MODEL_DEFAULTS,
}

_GRADCHECK_DEFAULTS = {"seed": 0}


def _coerce(key: str, default, raw):
    """Convert a raw string/JSON value to the default's type."""
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("true", "1", "yes", "on"):
            return True
        if text in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key {key!r} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if isinstance(raw, (list, tuple)):
            return tuple(int(v) for v in raw)
        return tuple(int(v) for v in str(raw).split(",") if v.strip())
    return str(raw)


def _merge_config(defaults: dict, file_path: str | None,
                  overrides: dict) -> dict:
    merged = dict(defaults)
    if file_path:
        try:
            payload = json.loads(Path(file_path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in payload.items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r} in {file_path}")
            merged[key] = _coerce(key, defaults[key], value)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, defaults[key], value)
    return merged


def _add_command(subparsers, name: str, defaults: dict, help_text: str):
    sub = subparsers.add_parser(name, help=help_text)
    sub.add_argument("--config", default=None,
                     help="JSON file with config keys (CLI overrides it)")
    for key in defaults:
        sub.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    return sub


def _parse_mu(spec: str) -> tuple[str, float]:
    if spec == "dynamic":
        return "dynamic", 0.5
    if spec.startswith("fixed:"):
        value = float(spec.split(":", 1)[1])
        return "fixed", value
    raise ConfigError(f"--mu must be 'dynamic' or 'fixed:<value>', got {spec!r}")


def _daan_config(cfg: dict, rp_count: int) -> DaanConfig:
    mu_mode, mu_fixed = _parse_mu(cfg["mu"])
    lambda_adv, gamma = cfg["lambda"], cfg["gamma"]
    if cfg.get("source_only"):
        lambda_adv, gamma = 0.0, 0.0
    return DaanConfig(
        rp_count=rp_count,
        feature_dim=cfg["feature_dim"],
        conv_channels=cfg["conv_channels"],
        fc_predictor=cfg["fc_predictor"],
        fc_global_disc=cfg["fc_global_disc"],
        fc_local_disc=cfg["fc_local_disc"],
        lambda_adv=lambda_adv,
        gamma=gamma,
        mu_mode=mu_mode,
        mu_fixed=mu_fixed,
        pus_enabled=cfg["pus"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        lr=LrSchedule(cfg["eta0"], cfg["lr_alpha"], cfg["lr_beta"]),
        momentum=cfg["momentum"],
        a_mode=cfg["a_mode"],
        early_stop_source_acc=(cfg["early_stop_acc"]
                               if cfg["early_stop_acc"] > 0 else None),
    )


def _build_shift(cfg: dict, rp_count: int) -> ShiftSpec:
    profile = cfg["shift_profile"]
    if profile not in ("none", "global", "local", "mixed"):
        raise ConfigError(f"unknown shift profile {profile!r}")
    gain = exp_delta = perturb = 0.0
    local_set: tuple = ()
    if profile in ("global", "mixed"):
        gain, exp_delta = cfg["shift_gain_db"], cfg["shift_exponent_delta"]
    if profile in ("local", "mixed"):
        perturb = cfg["shift_local_perturb_db"]
        count = int(round(cfg["shift_local_fraction"] * rp_count))
        rng = np.random.default_rng(derive_seed(cfg["seed"], "shift") % 2**63)
        local_set = tuple(sorted(rng.choice(rp_count, size=min(count, rp_count),
                                            replace=False).tolist()))
    return ShiftSpec(
        global_gain_db=gain,
        global_exponent_delta=exp_delta,
        local_rp_set=local_set,
        local_perturb_db=perturb,
        noise_sigma_db=cfg["noise_sigma_db"],
        seed=derive_seed(cfg["seed"], "shift-field") % 2**31,
    )


def cmd_simulate(cfg: dict) -> int:
    env = preset_environment(cfg["preset"], cfg["scale"])
    seed = cfg["seed"]
    clean = ShiftSpec(noise_sigma_db=cfg["noise_sigma_db"])
    shift = _build_shift(cfg, env.rp_count)
    jitter = 0.4 if cfg["off_grid_queries"] else 0.0

    source = generate_domain(env, clean, cfg["samples_per_rp"], labeled=True,
                             seed=derive_seed(seed, "data-source") % 2**31)
    target = generate_domain(env, shift, cfg["samples_per_rp"], labeled=False,
                             seed=derive_seed(seed, "data-target") % 2**31)
    queries = generate_domain(env, shift, cfg["query_samples_per_rp"],
                              labeled=True,
                              seed=derive_seed(seed, "data-query") % 2**31,
                              off_grid_jitter=jitter)
    out = Path(cfg["out"])
    write_dataset(source, out / "source")
    write_dataset(target, out / "target")
    write_dataset(queries, out / "query")
    print(f"simulate: {env.rp_count} RPs, {len(env.ap_coords)} APs, "
          f"image shape {env.image_shape}")
    print(f"  source: {source.n_samples} labeled samples -> {out / 'source'}")
    print(f"  target: {target.n_samples} unlabeled samples -> {out / 'target'}")
    print(f"  query:  {queries.n_samples} labeled samples -> {out / 'query'}")
    return 0


def cmd_train(cfg: dict) -> int:
    if not cfg["source"]:
        raise ConfigError("--source dataset path is required")
    source = read_dataset(cfg["source"])
    target = read_dataset(cfg["target"]) if cfg["target"] else None
    daan_cfg = _daan_config(cfg, source.rp_count)
    model = build_model(daan_cfg, source.image_shape,
                        seed=derive_seed(cfg["seed"], "init") % 2**31)
    model, state = train(model, source, target, daan_cfg,
                         shuffle_seed=derive_seed(cfg["seed"], "shuffle") % 2**31)
    out = Path(cfg["out"])
    save_checkpoint(model, out, mu=state.mu, epoch=state.epoch)
    (out / "history.json").write_text(
        json.dumps({"seed": cfg["seed"], "final_mu": state.mu,
                    "epochs_run": state.epoch, "epochs": state.history},
                   indent=2, sort_keys=True),
        encoding="utf-8")
    last = state.history[-1]
    print(f"train: {state.epoch} epochs, final mu={state.mu:.4f}, "
          f"L_y={last['l_y']:.4f}, checkpoint -> {out}")
    return 0


def cmd_eval(cfg: dict) -> int:
    if not cfg["checkpoint"] or not cfg["queries"]:
        raise ConfigError("--checkpoint and --queries are required")
    model, extra = load_checkpoint(cfg["checkpoint"])
    queries = read_dataset(cfg["queries"])
    stats = evaluate_model(model, queries, mode=cfg["mode"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    name = Path(cfg["checkpoint"]).name or "model"
    (out / "metrics.json").write_text(
        json.dumps({"arm": name, "mode": cfg["mode"], "mu": extra["mu"],
                    "stats": stats.to_dict()}, indent=2, sort_keys=True),
        encoding="utf-8")
    with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write("arm,median,p90,rmse,mae,std,final_mu\n")
        fh.write(f"{name},{stats.median!r},{stats.p90!r},{stats.rmse!r},"
                 f"{stats.mae!r},{stats.std!r},{extra['mu']!r}\n")
    print(f"eval: {queries.n_samples} queries, median={stats.median:.3f} m, "
          f"mae={stats.mae:.3f} m -> {out}")
    return 0


def cmd_ablate(cfg: dict) -> int:
    for key in ("source", "target", "queries"):
        if not cfg[key]:
            raise ConfigError(f"--{key} dataset path is required")
    source = read_dataset(cfg["source"])
    target = read_dataset(cfg["target"])
    queries = read_dataset(cfg["queries"])
    base = _daan_config(cfg, source.rp_count)
    results = ablate(source, target, queries, base,
                     seed=derive_seed(cfg["seed"], "init") % 2**31,
                     mode=cfg["mode"])
    out = Path(cfg["out"])
    write_summary_csv(results, out / "summary.csv")
    write_metrics_json(results, out / "metrics.json")
    print(f"{'arm':<14} {'mae':>8} {'median':>8} {'final_mu':>9}")
    for r in results:
        print(f"{r.name:<14} {r.stats.mae:>8.3f} {r.stats.median:>8.3f} "
              f"{r.final_mu:>9.4f}")
    print(f"ablate: {len(results)} arms -> {out}")
    return 0


def cmd_gradcheck(cfg: dict) -> int:
    reports = run_suite(cfg["seed"])
    failed = False
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<24} max_rel_err={r.max_rel_err:.3e} "
              f"tol={r.tolerance:g} {status}")
        failed |= not r.passed
    worst = max(r.max_rel_err for r in reports)
    print(f"gradcheck: {len(reports)} checks, worst relative error {worst:.3e}")
    return 1 if failed else 0


_COMMANDS = {
    "simulate": (_SIM_DEFAULTS, cmd_simulate,
                 "generate source/target/query datasets"),
    "train": (_TRAIN_DEFAULTS, cmd_train, "train the adaptation network"),
    "eval": (_EVAL_DEFAULTS, cmd_eval, "evaluate a checkpoint on queries"),
    "ablate": (_ABLATE_DEFAULTS, cmd_ablate, "run the 9-arm ablation matrix"),
    "gradcheck": (_GRADCHECK_DEFAULTS, cmd_gradcheck,
                  "finite-difference check of every layer"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radloc",
        description="adversarially adaptive fingerprint localization")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (defaults, _, help_text) in _COMMANDS.items():
        _add_command(subparsers, name, defaults, help_text)
    args = parser.parse_args(argv)

    defaults, handler, _ = _COMMANDS[args.command]
    overrides = {key: getattr(args, key) for key in defaults}
    try:
        cfg = _merge_config(defaults, args.config, overrides)
        return handler(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
