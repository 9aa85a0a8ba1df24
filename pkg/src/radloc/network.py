"""Model assembly: feature extractor, location predictor, discriminators.

The extractor is a stack of conv blocks (two 3x3 convolutions with
LeakyReLU, a 2x2 max-pool, then batch normalization) followed by a linear
projection to the feature width. The predictor and every discriminator are
small LeakyReLU MLPs on top of those features; there is exactly one local
discriminator per reference point.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .layers import BatchNorm, Conv2d, LeakyReLU, Linear, MaxPool2, Sequential, mlp
from .optim import LrSchedule

CHECKPOINT_VERSION = "1"


@dataclass
class DaanConfig:
    """Architecture and training knobs for the adaptation network."""

    rp_count: int
    feature_dim: int = 128
    conv_channels: tuple = (8, 16, 32, 64)   # one entry per conv block
    kernel_size: int = 3
    lrelu_alpha: float = 0.1
    fc_predictor: tuple = (64,)
    fc_global_disc: tuple = (64,)
    fc_local_disc: tuple = (32,)
    lambda_adv: float = 1.0
    gamma: float = 0.1
    mu_init: float = 0.5
    mu_mode: str = "dynamic"                 # "dynamic" | "fixed"
    mu_fixed: float = 0.5
    pus_enabled: bool = True
    batch_size: int = 64
    epochs: int = 50
    lr: LrSchedule = field(default_factory=LrSchedule)
    momentum: float = 0.9
    predictor_lr_scale: float = 10.0
    a_mode: str = "error_rate"               # "error_rate" | "raw_loss"
    early_stop_source_acc: float | None = None

    def __post_init__(self):
        if isinstance(self.lr, dict):
            self.lr = LrSchedule(**self.lr)
        self.conv_channels = tuple(self.conv_channels)
        self.fc_predictor = tuple(self.fc_predictor)
        self.fc_global_disc = tuple(self.fc_global_disc)
        self.fc_local_disc = tuple(self.fc_local_disc)
        if self.rp_count < 1:
            raise ValueError("rp_count must be >= 1")
        if self.lambda_adv < 0 or self.gamma < 0:
            raise ValueError("lambda and gamma must be >= 0")
        if not 0.0 <= self.mu_init <= 1.0 or not 0.0 <= self.mu_fixed <= 1.0:
            raise ValueError("mu values must be in [0,1]")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.mu_mode not in ("dynamic", "fixed"):
            raise ValueError(f"unknown mu_mode {self.mu_mode!r}")
        if self.a_mode not in ("error_rate", "raw_loss"):
            raise ValueError(f"unknown a_mode {self.a_mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr"] = {"eta0": self.lr.eta0, "alpha": self.lr.alpha,
                   "beta": self.lr.beta}
        for key in ("conv_channels", "fc_predictor", "fc_global_disc",
                    "fc_local_disc"):
            d[key] = list(d[key])
        return d

    @staticmethod
    def from_dict(d: dict) -> "DaanConfig":
        return DaanConfig(**d)


class DaanModel:
    """Feature extractor F, predictor G, global disc D, local discs D^r."""

    def __init__(self, config: DaanConfig, input_shape: tuple,
                 seed: int = 0):
        self.config = config
        self.input_shape = tuple(int(v) for v in input_shape)  # (M, K, N)
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x6D6F64])

        chans, height, width = self.input_shape
        blocks = []
        for out_ch in config.conv_channels:
            blocks += [
                Conv2d(chans, out_ch, config.kernel_size, padding=config.kernel_size // 2, rng=rng),
                LeakyReLU(config.lrelu_alpha),
                Conv2d(out_ch, out_ch, config.kernel_size, padding=config.kernel_size // 2, rng=rng),
                LeakyReLU(config.lrelu_alpha),
                MaxPool2(),
                BatchNorm(out_ch),
            ]
            chans = out_ch
            height, width = (height + 1) // 2, (width + 1) // 2
        self.conv = Sequential(blocks)
        self.flat_dim = chans * height * width
        self.feature_fc = Linear(self.flat_dim, config.feature_dim, rng=rng)
        self.feature_act = LeakyReLU(config.lrelu_alpha)

        alpha = config.lrelu_alpha
        self.predictor = mlp(
            [config.feature_dim, *config.fc_predictor, config.rp_count],
            alpha, rng=rng)
        self.global_disc = mlp(
            [config.feature_dim, *config.fc_global_disc, 1], alpha, rng=rng)
        self.local_discs = [
            mlp([config.feature_dim, *config.fc_local_disc, 1], alpha, rng=rng)
            for _ in range(config.rp_count)
        ]
        self.training = True

    # -- modes ------------------------------------------------------------
    def set_training(self, training: bool):
        self.training = training
        self.conv.set_training(training)

    # -- forward paths ----------------------------------------------------
    def forward_features(self, x: Tensor) -> Tensor:
        """Images (B, M, K, N) -> features (B, feature_dim)."""
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"input shape {tuple(x.shape[1:])} does not match model "
                f"input {self.input_shape}")
        h = self.conv(x)
        h = ag.reshape(h, (x.shape[0], self.flat_dim))
        return self.feature_act(self.feature_fc(h))

    def predict_logits(self, feats: Tensor) -> Tensor:
        return self.predictor(feats)

    def predict_labels(self, feats: Tensor) -> Tensor:
        """Softmax location probabilities, rows summing to 1."""
        return ag.softmax(self.predictor(feats))

    def discriminate_global(self, feats: Tensor) -> Tensor:
        return ag.sigmoid(self.global_disc(feats))

    def discriminate_local(self, rp: int, conditioned: Tensor) -> Tensor:
        return ag.sigmoid(self.local_discs[rp](conditioned))

    # -- parameter registry -------------------------------------------------
    def param_groups(self) -> dict:
        """Parameter lists by role; the predictor trains at a scaled rate."""
        base = [p for _, p in self.conv.params()]
        base += [p for _, p in self.feature_fc.params()]
        base += [p for _, p in self.global_disc.params()]
        for disc in self.local_discs:
            base += [p for _, p in disc.params()]
        predictor = [p for _, p in self.predictor.params()]
        return {"base": base, "predictor": predictor}

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        out = [(f"conv.{n}", p) for n, p in self.conv.params()]
        out += [(f"feature_fc.{n}", p) for n, p in self.feature_fc.params()]
        out += [(f"predictor.{n}", p) for n, p in self.predictor.params()]
        out += [(f"global_disc.{n}", p) for n, p in self.global_disc.params()]
        for r, disc in enumerate(self.local_discs):
            out += [(f"local_disc.{r}.{n}", p) for n, p in disc.params()]
        return out

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return [(f"conv.{n}", b) for n, b in self.conv.buffers()]

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        tensors = [(n, p.data) for n, p in self.named_parameters()]
        tensors += self.named_buffers()
        return tensors

    def all_parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes()
                        for _, t in self.named_tensors())


def build_model(config: DaanConfig, image_shape: tuple, seed: int = 0) -> DaanModel:
    """Build from a dataset image shape (K, N_total, M)."""
    k, n, m = image_shape
    return DaanModel(config, (m, k, n), seed=seed)


def images_to_input(images: np.ndarray) -> np.ndarray:
    """Dataset layout (B, K, N, M) -> network layout (B, M, K, N) float64."""
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2), dtype=np.float64)


def predict_location(model: DaanModel, images: np.ndarray,
                     rp_coords: np.ndarray, mode: str = "argmax"):
    """Predicted (x, y) per image plus the predictor's confidence.

    argmax mode returns the coordinate of the most likely RP; centroid mode
    returns the probability-weighted mean of all RP coordinates.
    """
    if mode not in ("argmax", "centroid"):
        raise ValueError(f"unknown prediction mode {mode!r}")
    was_training = model.training
    model.set_training(False)
    try:
        feats = model.forward_features(Tensor(images_to_input(images)))
        probs = model.predict_labels(feats).data
    finally:
        model.set_training(was_training)
    confidence = probs.max(axis=1)
    if mode == "argmax":
        coords = np.asarray(rp_coords)[probs.argmax(axis=1)]
    else:
        coords = probs @ np.asarray(rp_coords)
    return coords, confidence


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: DaanModel, path, mu: float, epoch: int) -> None:
    """Directory with manifest.json and params.bin (little-endian float64)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = model.named_tensors()
    entries, offset = [], 0
    for name, arr in tensors:
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "input_shape": list(model.input_shape),
        "tensors": entries,
        "total_elements": offset,
        "mu": float(mu),
        "epoch": int(epoch),
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    (path / "params.bin").write_bytes(model.parameter_bytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[DaanModel, dict]:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise CheckpointError(f"missing {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {manifest.get('format_version')!r}")
    config = DaanConfig.from_dict(manifest["config"])
    model = DaanModel(config, tuple(manifest["input_shape"]))

    raw = np.frombuffer((path / "params.bin").read_bytes(), dtype="<f8")
    if raw.size != manifest["total_elements"]:
        raise CheckpointError(
            f"params.bin holds {raw.size} float64 values, manifest expects "
            f"{manifest['total_elements']}")
    by_name = dict(model.named_tensors())
    if set(by_name) != {e["name"] for e in manifest["tensors"]}:
        raise CheckpointError("manifest tensor names do not match architecture")
    for entry in manifest["tensors"]:
        arr = by_name[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise CheckpointError(
                f"tensor {entry['name']} shape {entry['shape']} does not "
                f"match architecture {list(arr.shape)}")
        start = entry["offset"]
        arr[...] = raw[start:start + arr.size].reshape(arr.shape)
    model.set_training(False)
    return model, {"mu": manifest["mu"], "epoch": manifest["epoch"]}
