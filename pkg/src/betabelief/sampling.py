"""Stochastic strategies for estimating evidence: deep ensembles and MC dropout.

Evidence is averaged on the raw (e_pos, e_neg) scale, before the +1 offset
to Beta parameters; averaging the offset parameters would inflate the total
evidence by the pseudo-counts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import ConfigError
from .network import TrainConfig, TrainedModel, forward, load_model, save_model, train

__all__ = [
    "EnsembleModel",
    "ensemble_train",
    "ensemble_evidence",
    "mc_dropout_evidence",
    "save_ensemble",
    "load_ensemble",
]

_MANIFEST_NAME = "manifest.txt"


@dataclass
class EnsembleModel:
    """Independently trained members sharing one input dimensionality."""

    members: list
    subset_fraction: float
    member_seeds: list

    def __post_init__(self):
        if not self.members:
            raise ConfigError("ensemble needs at least one member")
        dims = {m.params.input_dim for m in self.members}
        if len(dims) != 1:
            raise ValueError(f"members disagree on input dimension: {sorted(dims)}")

    @property
    def input_dim(self) -> int:
        return self.members[0].params.input_dim


def ensemble_train(
    data: Dataset,
    cfg: TrainConfig,
    m: int,
    subset_fraction: float,
    seed: int,
    val: Dataset | None = None,
) -> EnsembleModel:
    """Train ``m`` members, each on a seeded random subset of the data.

    Member k trains with seed ``seed + k`` and sees floor(fraction * N)
    samples drawn without replacement from its own generator (the full data,
    in original order, when the fraction is 1). Deterministic for a fixed
    run seed.
    """
    if m < 1:
        raise ConfigError("ensemble size must be >= 1")
    if not 0.0 < subset_fraction <= 1.0:
        raise ConfigError(f"subset_fraction must be in (0, 1], got {subset_fraction}")
    n = len(data)
    subset_size = int(subset_fraction * n)
    if subset_size < cfg.batch_size:
        raise ConfigError(
            f"member subset ({subset_size}) smaller than one batch ({cfg.batch_size})"
        )
    members, seeds = [], []
    for k in range(m):
        member_seed = seed + k
        member_cfg = replace(cfg, seed=member_seed)
        if subset_fraction == 1.0:
            member_data = data
        else:
            idx = np.random.default_rng(member_seed).choice(n, size=subset_size, replace=False)
            member_data = data.subset(np.sort(idx), name=f"{data.name}/member{k}")
        members.append(train(member_data, val, member_cfg))
        seeds.append(member_seed)
    return EnsembleModel(members, subset_fraction, seeds)


def ensemble_evidence(ens: EnsembleModel, x) -> np.ndarray:
    """Component-wise arithmetic mean of member evidence (eval mode)."""
    acc = forward(ens.members[0].params, x)
    for member in ens.members[1:]:
        acc = acc + forward(member.params, x)
    return acc / len(ens.members)


def mc_dropout_evidence(model: TrainedModel, x, n_passes: int, seed: int) -> np.ndarray:
    """Mean evidence over stochastic dropout passes; deterministic per seed."""
    if n_passes < 1:
        raise ConfigError("n_passes must be >= 1")
    rng = np.random.default_rng(seed)
    acc = forward(model.params, x, train=True, rng=rng)
    for _ in range(n_passes - 1):
        acc = acc + forward(model.params, x, train=True, rng=rng)
    return acc / n_passes


def save_ensemble(ens: EnsembleModel, directory) -> None:
    """Write one model file per member plus a manifest of names/seeds/fractions."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, (member, seed) in enumerate(zip(ens.members, ens.member_seeds)):
        fname = f"member_{k:02d}.evdl"
        save_model(member, directory / fname)
        lines.append(f"{fname}\t{seed}\t{repr(float(ens.subset_fraction))}")
    (directory / _MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ensemble(directory) -> EnsembleModel:
    directory = Path(directory)
    manifest = directory / _MANIFEST_NAME
    if not manifest.exists():
        raise ConfigError(f"{directory}: missing ensemble manifest")
    members, seeds = [], []
    fraction = 1.0
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        fname, seed, frac = line.split("\t")
        members.append(load_model(directory / fname))
        seeds.append(int(seed))
        fraction = float(frac)
    return EnsembleModel(members, fraction, seeds)
