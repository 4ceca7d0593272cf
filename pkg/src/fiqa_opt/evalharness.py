"""Verification-style evaluation: FMR threshold, FNMR and ERC curves."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .datamodel import DataError, DatasetBundle
from .pairing import pair_similarities

DEFAULT_DROP_GRID = np.arange(96) / 100.0


@dataclass(frozen=True, eq=False)
class VerificationPairSet:
    """Genuine and impostor comparisons as ``(n, 2)`` index arrays plus similarities."""

    genuine: np.ndarray
    genuine_sims: np.ndarray
    impostor: np.ndarray
    impostor_sims: np.ndarray


@dataclass(frozen=True, eq=False)
class ErcCurve:
    drop_rates: np.ndarray
    fnmr_values: np.ndarray
    threshold: float
    fmr_target: float
    auc: float
    genuine_count: int = 0
    impostor_count: int = 0
    truncated_at: float | None = None


def build_verification_pairs(bundle: DatasetBundle, seed: int, genuine_cap: int = 50,
                             impostor_count: int | None = None) -> VerificationPairSet:
    """Sample genuine and impostor comparisons.

    Genuine pairs are all within-identity pairs ``i < j``, subsampled without
    replacement to ``genuine_cap`` per identity. Impostor pairs (default
    ``10 * N``) are drawn uniformly, with replacement, over cross-identity
    index pairs.
    """
    if bundle.n_identities < 2:
        raise DataError("verification pairs need at least two identities")
    n = bundle.n_images
    if impostor_count is None:
        impostor_count = 10 * n
    rng = np.random.default_rng(seed)
    genuine = []
    for members in bundle.identity_index.values():
        m = len(members)
        if m < 2:
            continue
        iu, ju = np.triu_indices(m, k=1)
        if genuine_cap is not None and len(iu) > genuine_cap:
            keep = np.sort(rng.choice(len(iu), size=genuine_cap, replace=False))
            iu, ju = iu[keep], ju[keep]
        mem = np.asarray(members)
        genuine.append(np.stack([mem[iu], mem[ju]], axis=1))
    genuine_arr = np.concatenate(genuine) if genuine else np.zeros((0, 2), dtype=np.int64)

    ident = bundle.identity_of
    imp = np.zeros((0, 2), dtype=np.int64)
    while len(imp) < impostor_count:
        need = impostor_count - len(imp)
        draw = rng.integers(n, size=(2 * need + 16, 2))
        draw = draw[ident[draw[:, 0]] != ident[draw[:, 1]]]
        imp = np.concatenate([imp, draw[:need]])
    vecs = bundle.vectors
    return VerificationPairSet(
        genuine=genuine_arr,
        genuine_sims=pair_similarities(vecs, genuine_arr[:, 0], genuine_arr[:, 1]),
        impostor=imp,
        impostor_sims=pair_similarities(vecs, imp[:, 0], imp[:, 1]),
    )


def calibrate_threshold(impostor_similarities, fmr_target: float = 1e-3) -> float:
    """Smallest observed impostor similarity whose FMR does not exceed ``fmr_target``.

    With ``k = floor(fmr_target * n)`` the candidate is the ascending order
    statistic ``s[n - k]``. When it is tied with ``s[n - k - 1]`` more than
    ``k`` impostors would reach it, so the next larger distinct value is used.
    If no observed value qualifies (``k = 0`` or the ties run to the maximum),
    the threshold is the next float above the maximum, giving FMR 0.
    """
    sims = np.sort(np.asarray(impostor_similarities, dtype=np.float64))
    n = len(sims)
    if n == 0:
        raise DataError("cannot calibrate a threshold on zero impostor scores")
    if not (0.0 < fmr_target < 1.0):
        raise DataError(f"fmr_target must lie in (0, 1), got {fmr_target}")
    k = math.floor(fmr_target * n + 1e-9)
    if k == 0:
        return float(np.nextafter(sims[-1], np.inf))
    pos = n - k
    if sims[pos - 1] == sims[pos]:
        pos = int(np.searchsorted(sims, sims[pos], side="right"))
        if pos == n:
            return float(np.nextafter(sims[-1], np.inf))
    return float(sims[pos])


def false_match_rate(impostor_similarities, threshold: float) -> float:
    sims = np.asarray(impostor_similarities, dtype=np.float64)
    return float(np.count_nonzero(sims >= threshold) / len(sims))


def compute_fnmr(genuine_similarities, threshold: float) -> float:
    """Fraction of genuine similarities strictly below ``threshold``."""
    sims = np.asarray(genuine_similarities, dtype=np.float64)
    if len(sims) == 0:
        raise DataError("no genuine comparisons left to compute FNMR on")
    return float(np.count_nonzero(sims < threshold) / len(sims))


def _trapezoid_auc(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 1:
        return float(y[0])
    span = x[-1] - x[0]
    area = float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))
    return area / span


def erc_auc(curve: ErcCurve) -> float:
    """Trapezoidal area under the ERC divided by the drop-rate span."""
    return _trapezoid_auc(curve.drop_rates, curve.fnmr_values)


def erc_from_similarities(genuine_sims, pair_quality, threshold: float, fmr_target: float,
                          drop_grid=DEFAULT_DROP_GRID, impostor_count: int = 0) -> ErcCurve:
    """ERC at a fixed ``threshold`` given per-genuine-pair qualities."""
    sims = np.asarray(genuine_sims, dtype=np.float64)
    quality = np.asarray(pair_quality, dtype=np.float64)
    g = len(sims)
    if g == 0:
        raise DataError("ERC needs at least one genuine comparison")
    grid = np.asarray(drop_grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) == 0 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise DataError("drop grid must be ascending and start at 0")
    order = np.argsort(quality, kind="stable")
    fails = (sims[order] < threshold).astype(np.int64)
    # remaining_fails[d] = failures among pairs order[d:]
    remaining_fails = np.concatenate([np.cumsum(fails[::-1])[::-1], [0]])
    drops = np.floor(grid * g + 1e-9).astype(np.int64)
    valid = drops < g
    truncated_at = None
    if not valid.all():
        cut = int(np.argmin(valid))
        truncated_at = float(grid[cut])
        grid, drops = grid[:cut], drops[:cut]
    fnmr = remaining_fails[drops] / (g - drops)
    return ErcCurve(
        drop_rates=grid,
        fnmr_values=fnmr,
        threshold=float(threshold),
        fmr_target=float(fmr_target),
        auc=_trapezoid_auc(grid, fnmr),
        genuine_count=g,
        impostor_count=impostor_count,
        truncated_at=truncated_at,
    )


def erc_curve(pair_set: VerificationPairSet, qualities, fmr_target: float = 1e-3,
              drop_grid=DEFAULT_DROP_GRID, image_ids=None) -> ErcCurve:
    """ERC of a quality scorer on ``pair_set``.

    ``qualities`` is either an array aligned with image indices or a mapping
    ``image_id -> score`` (then ``image_ids`` gives the index order). The
    threshold is calibrated once on all impostors; a genuine pair's quality is
    the lower of its two image qualities.
    """
    if isinstance(qualities, Mapping):
        if image_ids is None:
            raise DataError("image_ids are required with a quality mapping")
        try:
            q = np.array([qualities[i] for i in image_ids], dtype=np.float64)
        except KeyError as exc:
            raise DataError(f"no quality score for image {exc.args[0]!r}") from None
    else:
        q = np.asarray(qualities, dtype=np.float64)
    if len(pair_set.genuine) == 0:
        raise DataError("no genuine comparisons (all identities are singletons?)")
    threshold = calibrate_threshold(pair_set.impostor_sims, fmr_target)
    pair_q = np.minimum(q[pair_set.genuine[:, 0]], q[pair_set.genuine[:, 1]])
    return erc_from_similarities(pair_set.genuine_sims, pair_q, threshold, fmr_target,
                                 drop_grid, impostor_count=len(pair_set.impostor))


def summary(curve: ErcCurve) -> dict:
    return {
        "fmr_target": curve.fmr_target,
        "threshold": curve.threshold,
        "auc": curve.auc,
        "auc_x1000": curve.auc * 1000.0,
        "genuine_count": curve.genuine_count,
        "impostor_count": curve.impostor_count,
        "truncated_at": curve.truncated_at,
    }
