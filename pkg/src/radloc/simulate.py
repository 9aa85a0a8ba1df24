"""Synthetic CSI fingerprint generation with controllable domain shift.

Propagation follows a log-distance path-loss model with static per-location
shadowing and a sparse multipath tap profile. The tap geometry (delays,
powers, phases) is a pure function of the transmitter/receiver coordinates,
so the same environment always produces the same radio map; domain shift
enters only through a ShiftSpec, and per-sample variation only through the
generation seed. Everything is reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# stream tags keep the independent random fields from colliding
_TAG_GEOMETRY = 0x67656F6D65747279
_TAG_ANTENNA = 0x616E74656E6E6161
_TAG_SHADOW = 0x736861646F777777
_TAG_LOCAL = 0x6C6F63616C736674
_TAG_SAMPLE = 0x73616D706C657278

SAMPLE_PHASE_JITTER = 0.1   # rad, per-sample tap phase wobble
FRAME_PHASE_JITTER = 0.05   # rad, within-image frame-to-frame wobble
TAP_DELAY_SPREAD = 6.0      # cycles across the subcarrier band
TAP_POWER_DECAY = 0.5       # exponential decay per tap index


def splitmix64(z: int) -> int:
    """One round of the splitmix64 mixer."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix_seed(*parts: int) -> int:
    """Fold integers into a 64-bit stream seed via repeated splitmix rounds."""
    state = 0x5DEECE66D
    for part in parts:
        state = splitmix64(state ^ (int(part) & _MASK64))
    return state


def _coord_bits(xy) -> tuple[int, int]:
    x, y = float(xy[0]), float(xy[1])
    return (int(np.float64(x).view(np.uint64)), int(np.float64(y).view(np.uint64)))


def _stream(*parts: int) -> np.random.Generator:
    return np.random.default_rng(mix_seed(*parts))


@dataclass(frozen=True)
class Environment:
    """Geometry and propagation constants of one deployment."""

    rp_coords: tuple          # ((x, y) meters, ...) reference points
    ap_coords: tuple          # ((x, y) meters, ...) access points
    pl_exponent: float = 2.0
    pl_ref_db: float = 40.0   # loss at the reference distance d0
    d0: float = 1.0
    shadowing_sigma_db: float = 2.0
    multipath_taps: int = 8
    subcarriers: int = 30
    antennas: int = 3
    frames: int = 16

    def __post_init__(self):
        if len(self.rp_coords) == 0:
            raise ValueError("environment needs at least one reference point")
        if len(set(map(tuple, self.rp_coords))) != len(self.rp_coords):
            raise ValueError("reference points must be pairwise distinct")
        if self.d0 <= 0:
            raise ValueError(f"d0 must be positive, got {self.d0}")
        if not 1.5 <= self.pl_exponent <= 6.0:
            raise ValueError(f"path-loss exponent out of range: {self.pl_exponent}")
        if min(self.multipath_taps, self.subcarriers,
               self.antennas, self.frames) < 1:
            raise ValueError("taps, subcarriers, antennas and frames must be >= 1")

    @property
    def rp_count(self) -> int:
        return len(self.rp_coords)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.frames, self.subcarriers * len(self.ap_coords), self.antennas)

    def to_dict(self) -> dict:
        return {
            "rp_coords": [list(c) for c in self.rp_coords],
            "ap_coords": [list(c) for c in self.ap_coords],
            "pl_exponent": self.pl_exponent,
            "pl_ref_db": self.pl_ref_db,
            "d0": self.d0,
            "shadowing_sigma_db": self.shadowing_sigma_db,
            "multipath_taps": self.multipath_taps,
            "subcarriers": self.subcarriers,
            "antennas": self.antennas,
            "frames": self.frames,
        }

    @staticmethod
    def from_dict(d: dict) -> "Environment":
        return Environment(
            rp_coords=tuple(tuple(c) for c in d["rp_coords"]),
            ap_coords=tuple(tuple(c) for c in d["ap_coords"]),
            pl_exponent=d["pl_exponent"],
            pl_ref_db=d["pl_ref_db"],
            d0=d["d0"],
            shadowing_sigma_db=d["shadowing_sigma_db"],
            multipath_taps=d["multipath_taps"],
            subcarriers=d["subcarriers"],
            antennas=d["antennas"],
            frames=d["frames"],
        )


@dataclass(frozen=True)
class ShiftSpec:
    """Domain shift applied on top of an environment.

    Global fields move every location; the local perturbation applies a
    static per-subcarrier dB pattern (drawn from `seed`) only at the RPs in
    `local_rp_set`. `noise_sigma_db` is per-sample multiplicative
    measurement noise in dB and is not a domain shift by itself.
    """

    global_gain_db: float = 0.0
    global_exponent_delta: float = 0.0
    local_rp_set: tuple = ()
    local_perturb_db: float = 0.0
    noise_sigma_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.local_perturb_db < 0 or self.noise_sigma_db < 0:
            raise ValueError("perturbation scales must be >= 0")
        object.__setattr__(self, "local_rp_set",
                           tuple(sorted(set(int(r) for r in self.local_rp_set))))

    def to_dict(self) -> dict:
        return {
            "global_gain_db": self.global_gain_db,
            "global_exponent_delta": self.global_exponent_delta,
            "local_rp_set": list(self.local_rp_set),
            "local_perturb_db": self.local_perturb_db,
            "noise_sigma_db": self.noise_sigma_db,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ShiftSpec":
        return ShiftSpec(
            global_gain_db=d["global_gain_db"],
            global_exponent_delta=d["global_exponent_delta"],
            local_rp_set=tuple(d["local_rp_set"]),
            local_perturb_db=d["local_perturb_db"],
            noise_sigma_db=d["noise_sigma_db"],
            seed=d["seed"],
        )


@dataclass
class RadioImage:
    """K x N x M array of normalized channel magnitudes."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"radio image must be 3-d, got shape {self.data.shape}")


@dataclass
class FingerprintDataset:
    """Labeled source domain or unlabeled target domain."""

    images: np.ndarray                    # (n, K, N_total, M) float32
    labels: Optional[np.ndarray]          # (n,) RP indices, None for target
    rp_coords: np.ndarray                 # (R, 2) meters
    meta: dict = field(default_factory=dict)
    sample_coords: Optional[np.ndarray] = None  # (n, 2), set in off-grid mode

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[0] == 0:
            raise ValueError("dataset images must be a non-empty (n,K,N,M) array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.images.shape[0],):
                raise ValueError("labels length does not match sample count")
            if self.labels.min() < 0 or self.labels.max() >= len(self.rp_coords):
                raise ValueError("labels out of RP range")

    @property
    def n_samples(self) -> int:
        return self.images.shape[0]

    @property
    def rp_count(self) -> int:
        return len(self.rp_coords)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    @property
    def labeled(self) -> bool:
        return self.labels is not None


# ---------------------------------------------------------------------------
# preset layouts
# ---------------------------------------------------------------------------

_SPACING = 0.8

_PRESETS = {
    # name: (grid nx, grid ny, AP count, exponent, shadowing dB)
    "hall": (47, 4, 2, 2.0, 2.0),
    "corridor": (90, 4, 8, 2.8, 3.0),
    "lounge": (25, 17, 8, 3.2, 4.0),
}


def _ap_ring(width: float, height: float, count: int) -> tuple:
    """APs 1 m outside the RP bounding box: ends for 2, corners+mids for 8."""
    if count == 2:
        return ((-1.0, height / 2.0), (width + 1.0, height / 2.0))
    spots = [(-1.0, -1.0), (width + 1.0, -1.0),
             (-1.0, height + 1.0), (width + 1.0, height + 1.0),
             (width / 2.0, -1.0), (width / 2.0, height + 1.0),
             (-1.0, height / 2.0), (width + 1.0, height / 2.0)]
    return tuple(spots[:count])


def preset_environment(name: str, scale: float = 1.0) -> Environment:
    """Named deployment layout, optionally cropped to `scale` of its RPs."""
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale must be in (0,1], got {scale}")
    nx, ny, n_aps, exponent, shadowing = _PRESETS[name]
    coords = [(ix * _SPACING, iy * _SPACING)
              for iy in range(ny) for ix in range(nx)]
    keep = int(round(len(coords) * scale))
    if keep < 4:
        raise ValueError(
            f"scale {scale} leaves {keep} RPs; at least 4 are required")
    width, height = (nx - 1) * _SPACING, (ny - 1) * _SPACING
    return Environment(
        rp_coords=tuple(coords[:keep]),
        ap_coords=_ap_ring(width, height, n_aps),
        pl_exponent=exponent,
        shadowing_sigma_db=shadowing,
    )


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def path_loss_db(env: Environment, distance: float, shadow_draw: float = 0.0) -> float:
    """Log-distance path loss; distance clamped to d0/10, shadow in std units."""
    d = max(float(distance), env.d0 / 10.0)
    return (env.pl_ref_db
            + 10.0 * env.pl_exponent * np.log10(d / env.d0)
            + env.shadowing_sigma_db * float(shadow_draw))


def _static_geometry(env: Environment, rp: int, ap: int):
    """Tap delays/powers/phases for one RP-AP link; fixed by coordinates."""
    bits = _coord_bits(env.rp_coords[rp]) + _coord_bits(env.ap_coords[ap])
    rng = _stream(_TAG_GEOMETRY, *bits)
    taps = env.multipath_taps
    delays = np.concatenate([[0.0], rng.uniform(0.0, TAP_DELAY_SPREAD, taps - 1)])
    powers = np.exp(-TAP_POWER_DECAY * np.arange(taps))
    powers /= powers.sum()
    phases = rng.uniform(0.0, 2.0 * np.pi, taps)
    return delays, powers, phases


def _antenna_offsets(env: Environment, rp: int, ap: int, antenna: int) -> np.ndarray:
    bits = _coord_bits(env.rp_coords[rp]) + _coord_bits(env.ap_coords[ap])
    rng = _stream(_TAG_ANTENNA, *bits, antenna)
    return rng.uniform(0.0, 2.0 * np.pi, env.multipath_taps)


def _shadow_draw(env: Environment, rp: int, ap: int) -> float:
    bits = _coord_bits(env.rp_coords[rp]) + _coord_bits(env.ap_coords[ap])
    return float(_stream(_TAG_SHADOW, *bits).standard_normal())


def _local_field(shift: ShiftSpec, rp: int, ap: int, n_sub: int) -> np.ndarray:
    rng = _stream(_TAG_LOCAL, shift.seed, rp, ap)
    return rng.normal(0.0, shift.local_perturb_db, n_sub)


def synth_csi(env: Environment, rp: int, ap: int, shift: ShiftSpec,
              rng: np.random.Generator, antenna: int = 0,
              position=None) -> np.ndarray:
    """One K x N complex CSI frame stack for a single antenna.

    `position` overrides the RP coordinate (off-grid queries) while keeping
    the RP's multipath geometry. Sample-level randomness comes only from
    `rng`; the shift's own perturbation field comes from `shift.seed`.
    """
    if not 0 <= rp < env.rp_count:
        raise ValueError(f"rp index {rp} out of range")
    if not 0 <= ap < len(env.ap_coords):
        raise ValueError(f"ap index {ap} out of range")
    if shift.local_rp_set and max(shift.local_rp_set) >= env.rp_count:
        raise ValueError("local_rp_set contains RP indices outside the environment")

    pos = np.asarray(env.rp_coords[rp] if position is None else position, float)
    dist = float(np.hypot(*(pos - np.asarray(env.ap_coords[ap], float))))
    shifted_env = env if shift.global_exponent_delta == 0.0 else replace(
        env, pl_exponent=env.pl_exponent + shift.global_exponent_delta)
    loss_db = path_loss_db(shifted_env, dist, _shadow_draw(env, rp, ap))
    amp = 10.0 ** (-(loss_db - shift.global_gain_db) / 20.0)

    delays, powers, phases = _static_geometry(env, rp, ap)
    phases = phases + _antenna_offsets(env, rp, ap, antenna)

    k, n = env.frames, env.subcarriers
    taps = env.multipath_taps
    sample_jitter = rng.normal(0.0, SAMPLE_PHASE_JITTER, taps)
    frame_jitter = rng.normal(0.0, FRAME_PHASE_JITTER, (k, taps))
    coeff = np.sqrt(powers) * np.exp(1j * (phases + sample_jitter + frame_jitter))
    steering = np.exp(-2j * np.pi * np.outer(delays, np.arange(n) / n))
    frame = amp * (coeff @ steering)

    if shift.local_perturb_db > 0.0 and rp in shift.local_rp_set:
        frame = frame * 10.0 ** (_local_field(shift, rp, ap, n) / 20.0)
    if shift.noise_sigma_db > 0.0:
        frame = frame * 10.0 ** (rng.normal(0.0, shift.noise_sigma_db, (k, n)) / 20.0)
    return frame


def make_radio_image(frames, normalize: bool = True) -> RadioImage:
    """Stack per-antenna complex frames into a K x N x M magnitude image."""
    mags = [np.abs(np.asarray(f)) for f in frames]
    shapes = {m.shape for m in mags}
    if len(shapes) != 1:
        raise ValueError(f"antenna frames disagree in shape: {sorted(shapes)}")
    image = np.stack(mags, axis=-1)
    if normalize:
        std = image.std()
        if std < 1e-20:
            image = np.zeros_like(image)
        else:
            image = (image - image.mean()) / std
    return RadioImage(image.astype(np.float32))


def generate_domain(env: Environment, shift: ShiftSpec, samples_per_rp: int,
                    labeled: bool, seed: int, normalize: bool = True,
                    off_grid_jitter: float = 0.0) -> FingerprintDataset:
    """Sample a fingerprint dataset: samples_per_rp images at every RP.

    Per-AP frames are concatenated along the subcarrier axis, so each image
    is K x (N * num_aps) x M. With off_grid_jitter > 0 every sample is taken
    at a uniformly jittered position around its RP (at most that many meters
    per axis) and the true positions are recorded in sample_coords.
    """
    if samples_per_rp < 1:
        raise ValueError("samples_per_rp must be >= 1")
    if shift.local_rp_set and max(shift.local_rp_set) >= env.rp_count:
        raise ValueError("local_rp_set contains RP indices outside the environment")

    n_aps = len(env.ap_coords)
    k, n, m = env.frames, env.subcarriers, env.antennas
    total = env.rp_count * samples_per_rp
    images = np.empty((total, k, n * n_aps, m), dtype=np.float32)
    coords = np.empty((total, 2)) if off_grid_jitter > 0.0 else None

    idx = 0
    for rp in range(env.rp_count):
        for si in range(samples_per_rp):
            rng = _stream(_TAG_SAMPLE, seed, rp, si)
            if off_grid_jitter > 0.0:
                pos = np.asarray(env.rp_coords[rp], float) + rng.uniform(
                    -off_grid_jitter, off_grid_jitter, 2)
                coords[idx] = pos
            else:
                pos = None
            per_antenna = [[] for _ in range(m)]
            for ap in range(n_aps):
                for ant in range(m):
                    per_antenna[ant].append(
                        synth_csi(env, rp, ap, shift, rng, ant, position=pos))
            stacked = [np.concatenate(fr, axis=1) for fr in per_antenna]
            images[idx] = make_radio_image(stacked, normalize=normalize).data
            idx += 1

    labels = np.repeat(np.arange(env.rp_count), samples_per_rp) if labeled else None
    meta = {
        "environment": env.to_dict(),
        "shift": shift.to_dict(),
        "seed": int(seed),
        "samples_per_rp": int(samples_per_rp),
        "normalize": bool(normalize),
        "off_grid_jitter": float(off_grid_jitter),
    }
    return FingerprintDataset(
        images=images,
        labels=labels,
        rp_coords=np.asarray(env.rp_coords, dtype=np.float64),
        meta=meta,
        sample_coords=coords,
    )
