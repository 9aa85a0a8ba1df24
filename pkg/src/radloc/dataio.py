"""Dataset directory format: meta.json + samples.bin (little-endian float32).

Samples are stored sample-major, row-major K -> N -> M within a sample. The
reader validates the element count in samples.bin against the metadata
before accepting anything.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .simulate import FingerprintDataset

FORMAT_VERSION = "1"


class DatasetFormatError(ValueError):
    pass


def write_dataset(ds: FingerprintDataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    k, n, m = ds.image_shape
    meta = {
        "format_version": FORMAT_VERSION,
        "shape": [int(k), int(n), int(m)],
        "n_samples": int(ds.n_samples),
        "rp_count": int(ds.rp_count),
        "rp_coords": [[float(x), float(y)] for x, y in ds.rp_coords],
        "labels": None if ds.labels is None else [int(v) for v in ds.labels],
        "sample_coords": None if ds.sample_coords is None else
            [[float(x), float(y)] for x, y in ds.sample_coords],
        "environment": ds.meta.get("environment"),
        "shift": ds.meta.get("shift"),
        "seed": ds.meta.get("seed"),
        "samples_per_rp": ds.meta.get("samples_per_rp"),
        "normalize": ds.meta.get("normalize"),
        "off_grid_jitter": ds.meta.get("off_grid_jitter"),
    }
    (path / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    (path / "samples.bin").write_bytes(
        np.ascontiguousarray(ds.images, dtype="<f4").tobytes())


def read_dataset(path) -> FingerprintDataset:
    path = Path(path)
    meta_path, bin_path = path / "meta.json", path / "samples.bin"
    if not meta_path.is_file():
        raise DatasetFormatError(f"missing {meta_path}")
    if not bin_path.is_file():
        raise DatasetFormatError(f"missing {bin_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported format version {meta.get('format_version')!r}")

    k, n, m = (int(v) for v in meta["shape"])
    n_samples = int(meta["n_samples"])
    expected = n_samples * k * n * m
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    if raw.size != expected:
        raise DatasetFormatError(
            f"samples.bin holds {raw.size} float32 values, "
            f"metadata expects {expected}")
    images = raw.reshape(n_samples, k, n, m).copy()

    labels = meta["labels"]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n_samples,):
            raise DatasetFormatError(
                f"labels length {labels.shape[0]} != n_samples {n_samples}")
    coords = meta.get("sample_coords")
    if coords is not None:
        coords = np.asarray(coords, dtype=np.float64)

    return FingerprintDataset(
        images=images,
        labels=labels,
        rp_coords=np.asarray(meta["rp_coords"], dtype=np.float64),
        meta={
            "environment": meta.get("environment"),
            "shift": meta.get("shift"),
            "seed": meta.get("seed"),
            "samples_per_rp": meta.get("samples_per_rp"),
            "normalize": meta.get("normalize"),
            "off_grid_jitter": meta.get("off_grid_jitter"),
        },
        sample_coords=coords,
    )
