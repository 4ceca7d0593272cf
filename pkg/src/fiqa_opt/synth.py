"""Synthetic identity-structured embeddings with known quality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import DataError, EmbeddingRecord, QualityTable
from .hashing import derive_seed


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``images_per_identity`` is either a count or an inclusive ``(lo, hi)``
    range drawn per identity.
    """

    identities: int = 50
    images_per_identity: int | tuple[int, int] = 40
    dimension: int = 64
    noise_floor: float = 0.1
    noise_ceil: float = 1.5
    baseline_corruption: float = 0.3
    seed: int = 42

    def __post_init__(self):
        if self.identities < 2:
            raise DataError("identities must be >= 2")
        lo, hi = self.image_range
        if lo < 1 or hi < lo:
            raise DataError("images_per_identity must be >= 1 (and lo <= hi)")
        if self.dimension < 2:
            raise DataError("dimension must be >= 2")
        if not (0 < self.noise_floor <= self.noise_ceil):
            raise DataError("need 0 < noise_floor <= noise_ceil")
        if self.baseline_corruption < 0:
            raise DataError("baseline_corruption must be >= 0")

    @property
    def image_range(self) -> tuple[int, int]:
        ipi = self.images_per_identity
        if isinstance(ipi, (tuple, list)):
            return int(ipi[0]), int(ipi[1])
        return int(ipi), int(ipi)


@dataclass(frozen=True, eq=False)
class SynthDataset:
    records: list[EmbeddingRecord]
    truth: QualityTable
    baseline: QualityTable
    sigma: np.ndarray


def generate_synthetic(config: SynthConfig) -> SynthDataset:
    """Draw a dataset.

    Identity ``k`` gets a prototype uniform on the unit sphere; each image adds
    Gaussian noise of scale ``sigma ~ U[noise_floor, noise_ceil]`` and is
    renormalized. True quality is ``1 / (1 + sigma)``; the baseline adds
    ``baseline_corruption`` times a standard normal draw.
    """
    lo, hi = config.image_range
    records, truth, baseline, sigmas = [], [], [], []
    for k in range(config.identities):
        rng = np.random.default_rng(derive_seed(config.seed, "identity", k))
        proto = rng.standard_normal(config.dimension)
        proto /= np.linalg.norm(proto)
        n_k = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        identity = f"id{k:05d}"
        for i in range(n_k):
            sigma = rng.uniform(config.noise_floor, config.noise_ceil)
            g = rng.standard_normal(config.dimension)
            h = rng.standard_normal()
            vec = proto + sigma * g
            vec /= np.linalg.norm(vec)
            image_id = f"{identity}_{i:05d}"
            t = 1.0 / (1.0 + sigma)
            records.append(EmbeddingRecord(image_id, identity, vec))
            truth.append((image_id, t))
            baseline.append((image_id, t + config.baseline_corruption * h))
            sigmas.append(sigma)
    return SynthDataset(records, QualityTable(truth), QualityTable(baseline),
                        np.asarray(sigmas))
