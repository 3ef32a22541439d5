"""Dataset ingestion and generation.

Supports CSV and IDX files, synthetic two-Gaussian data with controllable
class overlap, seeded label-flip noise with ground-truth corruption flags,
and seeded train/validation/test splitting.

CSV layout: UTF-8, comma separated, header ``f0,...,f{d-1},label`` with an
optional trailing ``noise_flag`` column; ``label`` and ``noise_flag`` are 0/1.
IDX files are the big-endian image/label archives (magics 0x803 / 0x801).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, DataFormatError

__all__ = [
    "LabeledSample",
    "Dataset",
    "generate_synthetic",
    "inject_noise",
    "read_csv",
    "write_csv",
    "read_idx",
    "split",
]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledSample:
    """One feature vector with its binary label.

    ``noise_flag`` is True iff the label was artificially flipped; it is
    None for data without corruption ground truth.
    """

    features: np.ndarray
    label: int
    id: int
    noise_flag: bool | None = None


@dataclass
class Dataset:
    """Column-oriented sample collection with stable integer ids."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int, values in {0, 1}
    ids: np.ndarray  # (n,) int, unique
    noise_flags: np.ndarray | None = None  # (n,) bool, present for synthetic data
    name: str = "dataset"
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.ids = np.asarray(self.ids, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n = len(self.features)
        if len(self.labels) != n or len(self.ids) != n:
            raise ValueError("features, labels and ids must have equal length")
        if len(np.unique(self.ids)) != n:
            raise ValueError("sample ids must be unique")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if self.noise_flags is not None:
            self.noise_flags = np.asarray(self.noise_flags, dtype=bool)
            if len(self.noise_flags) != n:
                raise ValueError("noise_flags length mismatch")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __getitem__(self, i: int) -> LabeledSample:
        flag = None if self.noise_flags is None else bool(self.noise_flags[i])
        return LabeledSample(self.features[i], int(self.labels[i]), int(self.ids[i]), flag)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, indices, name: str | None = None) -> "Dataset":
        """New dataset holding the given row positions (ids preserved)."""
        indices = np.asarray(indices, dtype=int)
        flags = None if self.noise_flags is None else self.noise_flags[indices]
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.ids[indices],
            noise_flags=flags,
            name=name or self.name,
            provenance=self.provenance,
        )


def generate_synthetic(
    n: int,
    overlap: float,
    dim: int = 2,
    positive_fraction: float = 0.5,
    seed: int = 0,
) -> Dataset:
    """Two unit-covariance Gaussian classes separated along the first axis.

    ``overlap`` is the Bayes error of the equal-prior problem: the class
    means are placed 2 * ndtri(1 - overlap) apart (capped at 8 sigma so
    overlap = 0 stays finite). Labels are clean; noise flags all False.
    """
    if n < 2:
        raise ConfigError("n must be >= 2")
    if dim < 2:
        raise ConfigError("dim must be >= 2")
    if not 0.0 < positive_fraction < 1.0:
        raise ConfigError("positive_fraction must be in (0, 1)")
    if not 0.0 <= overlap < 0.5:
        raise ConfigError("overlap must be in [0, 0.5)")
    separation = 8.0 if overlap == 0.0 else min(2.0 * float(ndtri(1.0 - overlap)), 8.0)
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_fraction * n))
    labels = np.zeros(n, dtype=int)
    labels[:n_pos] = 1
    labels = labels[rng.permutation(n)]
    features = rng.standard_normal((n, dim))
    features[:, 0] += np.where(labels == 1, separation / 2.0, -separation / 2.0)
    return Dataset(
        features,
        labels,
        np.arange(n),
        noise_flags=np.zeros(n, dtype=bool),
        name="synthetic",
        provenance=(
            f"synthetic(n={n}, overlap={overlap}, dim={dim}, "
            f"positive_fraction={positive_fraction}, seed={seed})"
        ),
    )


def inject_noise(ds: Dataset, rho, seed: int) -> Dataset:
    """Flip each label independently; flipped samples get noise_flag=True.

    ``rho`` is a single flip probability or a pair (rho_pos, rho_neg) for
    asymmetric corruption of samples labeled 1 and 0 respectively. The input
    dataset is left unmodified.
    """
    if np.isscalar(rho):
        rho_pos = rho_neg = float(rho)
    else:
        rho_pos, rho_neg = (float(r) for r in rho)
    for r in (rho_pos, rho_neg):
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"flip probability must be in [0, 1], got {r}")
    rng = np.random.default_rng(seed)
    u = rng.random(len(ds))
    flips = u < np.where(ds.labels == 1, rho_pos, rho_neg)
    labels = np.where(flips, 1 - ds.labels, ds.labels)
    return Dataset(
        ds.features.copy(),
        labels,
        ds.ids.copy(),
        noise_flags=flips,
        name=ds.name,
        provenance=f"{ds.provenance} + noise(rho=({rho_pos}, {rho_neg}), seed={seed})",
    )


def _expected_header(dim: int, with_flags: bool) -> list[str]:
    cols = [f"f{i}" for i in range(dim)] + ["label"]
    if with_flags:
        cols.append("noise_flag")
    return cols


def read_csv(path) -> Dataset:
    """Parse a dataset CSV; raises DataFormatError naming the faulty line."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].strip():
        raise DataFormatError(f"{path}: no header")
    header = [c.strip() for c in lines[0].split(",")]
    if len(set(header)) != len(header):
        raise DataFormatError(f"{path}: duplicate header column")
    with_flags = header[-1] == "noise_flag"
    dim = len(header) - (2 if with_flags else 1)
    if dim < 1 or header != _expected_header(dim, with_flags):
        raise DataFormatError(
            f"{path}: header must be f0..f{{d-1}},label[,noise_flag], got {header!r}"
        )
    features, labels, flags = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataFormatError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}"
            )
        try:
            row = [float(c) for c in cells[:dim]]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric feature cell") from None
        label_cell = cells[dim].strip()
        if label_cell not in ("0", "1"):
            raise DataFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label_cell!r}")
        if with_flags:
            flag_cell = cells[dim + 1].strip()
            if flag_cell not in ("0", "1"):
                raise DataFormatError(
                    f"{path}:{lineno}: noise_flag must be 0 or 1, got {flag_cell!r}"
                )
            flags.append(flag_cell == "1")
        features.append(row)
        labels.append(int(label_cell))
    n = len(features)
    return Dataset(
        np.asarray(features, dtype=float).reshape(n, dim),
        np.asarray(labels, dtype=int),
        np.arange(n),
        noise_flags=np.asarray(flags, dtype=bool) if with_flags else None,
        name=path.stem,
        provenance=str(path),
    )


def write_csv(ds: Dataset, path) -> None:
    """Write a dataset in the CSV layout read_csv accepts (round-trip safe)."""
    path = Path(path)
    with_flags = ds.noise_flags is not None
    rows = [",".join(_expected_header(ds.dim, with_flags))]
    for i in range(len(ds)):
        cells = [repr(float(v)) for v in ds.features[i]]
        cells.append(str(int(ds.labels[i])))
        if with_flags:
            cells.append(str(int(ds.noise_flags[i])))
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _read_idx_header(data: bytes, path, magic: int, n_dims: int) -> tuple[int, ...]:
    header_len = 4 * (1 + n_dims)
    if len(data) < header_len:
        raise DataFormatError(f"{path}: truncated IDX header")
    values = struct.unpack(f">{1 + n_dims}I", data[:header_len])
    if values[0] != magic:
        raise DataFormatError(f"{path}: bad IDX magic 0x{values[0]:08x}")
    return values[1:]


def read_idx(images_path, labels_path, positive_digits, keep_digits=None) -> Dataset:
    """Load an IDX image/label archive pair as a binary task.

    Pixels are scaled to [0, 1]; a sample is positive iff its digit is in
    ``positive_digits``. Samples with digits outside ``keep_digits`` (default:
    keep everything) are dropped.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    img_data = images_path.read_bytes()
    n_img, rows, cols = _read_idx_header(img_data, images_path, _IDX_IMAGES_MAGIC, 3)
    pixels = np.frombuffer(img_data, dtype=np.uint8, offset=16)
    if len(pixels) != n_img * rows * cols:
        raise DataFormatError(f"{images_path}: pixel payload length mismatch")
    lbl_data = labels_path.read_bytes()
    (n_lbl,) = _read_idx_header(lbl_data, labels_path, _IDX_LABELS_MAGIC, 1)
    digits = np.frombuffer(lbl_data, dtype=np.uint8, offset=8)
    if len(digits) != n_lbl:
        raise DataFormatError(f"{labels_path}: label payload length mismatch")
    if n_img != n_lbl:
        raise DataFormatError(
            f"image/label count mismatch: {n_img} images vs {n_lbl} labels"
        )
    positive = set(int(d) for d in positive_digits)
    keep = None if keep_digits is None else set(int(d) for d in keep_digits)
    mask = np.ones(n_img, dtype=bool) if keep is None else np.isin(digits, sorted(keep))
    idx = np.flatnonzero(mask)
    features = pixels.reshape(n_img, rows * cols)[idx].astype(float) / 255.0
    labels = np.isin(digits[idx], sorted(positive)).astype(int)
    return Dataset(
        features,
        labels,
        idx,
        name=images_path.stem,
        provenance=f"idx({images_path}, {labels_path}, positive={sorted(positive)})",
    )


def split(ds: Dataset, train_frac: float, val_frac: float, seed: int):
    """Seeded shuffle then contiguous partition; the remainder is the test set."""
    for name, f in (("train_frac", train_frac), ("val_frac", val_frac)):
        if not 0.0 <= f <= 1.0:
            raise ConfigError(f"{name} must be in [0, 1], got {f}")
    if train_frac + val_frac > 1.0 + 1e-12:
        raise ConfigError("train_frac + val_frac must not exceed 1")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_frac * n))
    n_val = min(int(round(val_frac * n)), n - n_train)
    if train_frac > 0 and n_train == 0:
        raise ConfigError("train split is empty")
    if val_frac > 0 and n_val == 0:
        raise ConfigError("validation split is empty")
    parts = (
        ds.subset(perm[:n_train], name=f"{ds.name}/train"),
        ds.subset(perm[n_train : n_train + n_val], name=f"{ds.name}/val"),
        ds.subset(perm[n_train + n_val :], name=f"{ds.name}/test"),
    )
    return parts
