"""User-user Pearson similarity over feature profiles (MCF) or co-ratings (BCF)."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from profilecf.profile import FeatureProfile

MCF, BCF = "MCF", "BCF"
MCF_DOMAINS = ("common", "imputed")

# Relative variance floor below which a vector counts as constant.
_VARIANCE_RTOL = 1e-12


def _negligible(ss: np.ndarray | float, n, scale) -> np.ndarray | bool:
    return ss <= n * (_VARIANCE_RTOL * np.maximum(1.0, scale)) ** 2


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation of two equal-length vectors.

    Returns ``None`` when the coefficient is undefined: fewer than two points
    or a (numerically) constant vector.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d vectors of equal length")
    n = x.size
    if n < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if _negligible(sxx, n, np.abs(x).max()) or _negligible(syy, n, np.abs(y).max()):
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _fill_value(profile: FeatureProfile) -> float | None:
    known = [s for s in profile.scores if s is not None]
    return sum(known) / len(known) if known else None


def mcf_similarity(a: FeatureProfile, b: FeatureProfile, domain: str = "common") -> float:
    """Pearson over feature scores; 0 when undefined.

    ``domain="common"`` uses genres encountered by both users. ``"imputed"``
    uses genres encountered by either, filling the other side's gap with that
    user's mean feature score.
    """
    if domain == "common":
        keep = [g for g, (na, nb) in enumerate(zip(a.encounters, b.encounters)) if na and nb]
        x = [a.scores[g] for g in keep]
        y = [b.scores[g] for g in keep]
    elif domain == "imputed":
        fa, fb = _fill_value(a), _fill_value(b)
        if fa is None or fb is None:
            return 0.0
        keep = [g for g, (na, nb) in enumerate(zip(a.encounters, b.encounters)) if na or nb]
        x = [fa if a.scores[g] is None else a.scores[g] for g in keep]
        y = [fb if b.scores[g] is None else b.scores[g] for g in keep]
    else:
        raise ValueError(f"unknown MCF domain {domain!r}; expected one of {MCF_DOMAINS}")
    r = pearson(x, y)
    return 0.0 if r is None else r


def bcf_similarity(a_ratings: Mapping[int, float], b_ratings: Mapping[int, float]) -> float:
    """Pearson over the ratings of co-rated items; 0 when undefined."""
    common = sorted(a_ratings.keys() & b_ratings.keys())
    r = pearson([a_ratings[i] for i in common], [b_ratings[i] for i in common])
    return 0.0 if r is None else r


@dataclass(frozen=True)
class SimilarityMatrix:
    user_ids: tuple[int, ...]
    values: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "_pos", {u: k for k, u in enumerate(self.user_ids)})
        lookup = np.full(max(self.user_ids, default=0) + 1, -1, dtype=np.int64)
        lookup[list(self.user_ids)] = np.arange(len(self.user_ids))
        object.__setattr__(self, "_lookup", lookup)

    def position(self, user_id: int) -> int:
        return self._pos[user_id]

    def positions(self, user_ids: np.ndarray) -> np.ndarray:
        """Row positions for an array of user ids; every id must be indexed."""
        user_ids = np.asarray(user_ids, dtype=np.int64)
        pos = self._lookup[np.clip(user_ids, 0, self._lookup.size - 1)]
        missing = (pos < 0) | (user_ids >= self._lookup.size)
        if missing.any():
            raise KeyError(f"users not in matrix: {user_ids[missing][:5].tolist()}")
        return pos

    def row(self, user_id: int) -> np.ndarray:
        return self.values[self._pos[user_id]]

    def get(self, a: int, b: int) -> float:
        return float(self.values[self._pos[a], self._pos[b]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user_a", "user_b", "similarity"])
        n = len(self.user_ids)
        for i in range(n):
            for j in range(i + 1, n):
                writer.writerow([self.user_ids[i], self.user_ids[j], repr(float(self.values[i, j]))])
        return buf.getvalue()


def _mirror_upper(values: np.ndarray) -> np.ndarray:
    upper = np.triu(values, k=1)
    return upper + upper.T


def _mcf_row(i: int, scores: np.ndarray, mask: np.ndarray, fill: np.ndarray, domain: str) -> np.ndarray:
    """Similarities of user ``i`` against users ``i+1..``, vectorised."""
    x_all, y_all = scores[i], scores[i + 1 :]
    if domain == "common":
        use = mask[i] & mask[i + 1 :]
        x = np.where(use, x_all, 0.0)
        y = np.where(use, y_all, 0.0)
    else:
        use = mask[i] | mask[i + 1 :]
        x = np.where(mask[i], x_all, fill[i])
        y = np.where(mask[i + 1 :], y_all, fill[i + 1 :, None])
        valid = np.isfinite(fill[i]) & np.isfinite(fill[i + 1 :])
        use &= valid[:, None]
        x = np.where(use, x, 0.0)
        y = np.where(use, y, 0.0)
    n = use.sum(axis=1)
    safe_n = np.maximum(n, 1)
    dx = np.where(use, x - (x.sum(axis=1) / safe_n)[:, None], 0.0)
    dy = np.where(use, y - (y.sum(axis=1) / safe_n)[:, None], 0.0)
    sxx = (dx * dx).sum(axis=1)
    syy = (dy * dy).sum(axis=1)
    sxy = (dx * dy).sum(axis=1)
    undefined = (
        (n < 2)
        | _negligible(sxx, n, np.abs(x).max(axis=1))
        | _negligible(syy, n, np.abs(y).max(axis=1))
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        r = sxy / np.sqrt(sxx * syy)
    return np.clip(np.where(undefined, 0.0, r), -1.0, 1.0)


def mcf_matrix(
    profiles: Mapping[int, FeatureProfile],
    user_ids: Sequence[int],
    domain: str = "common",
    threads: int = 1,
) -> SimilarityMatrix:
    if domain not in MCF_DOMAINS:
        raise ValueError(f"unknown MCF domain {domain!r}; expected one of {MCF_DOMAINS}")
    user_ids = tuple(user_ids)
    scores = np.vstack([profiles[u].score_array() for u in user_ids]) if user_ids else np.zeros((0, 0))
    mask = np.isfinite(scores)
    scores = np.where(mask, scores, 0.0)
    fill = np.array([_fill_value(profiles[u]) or np.nan for u in user_ids], dtype=float)

    n = len(user_ids)
    values = np.zeros((n, n))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = pool.map(lambda i: _mcf_row(i, scores, mask, fill, domain), range(n))
        for i, row in enumerate(rows):
            values[i, i + 1 :] = row
    values = _mirror_upper(values)
    for i, u in enumerate(user_ids):
        values[i, i] = 1.0 if mcf_similarity(profiles[u], profiles[u], domain) == 1.0 else 0.0
    return SimilarityMatrix(user_ids, values, MCF)


def bcf_matrix(
    ratings: Mapping[int, Mapping[int, float]],
    user_ids: Sequence[int],
) -> SimilarityMatrix:
    """Co-rating Pearson for all pairs via masked matrix products.

    ``ratings`` maps user -> {item: rating}. The sum form is exact for integer
    star ratings, so zero variance is detected without a tolerance there.
    """
    user_ids = tuple(user_ids)
    items = sorted({i for u in user_ids for i in ratings.get(u, {})})
    col = {item: k for k, item in enumerate(items)}
    R = np.zeros((len(user_ids), len(items)))
    for row, u in enumerate(user_ids):
        for item, value in ratings.get(u, {}).items():
            R[row, col[item]] = value
    M = (R != 0).astype(float)

    n = M @ M.T
    sx = R @ M.T  # [a, b] = sum of a's ratings over items both rated
    sxx = (R * R) @ M.T
    sxy = R @ R.T
    var_x = n * sxx - sx * sx
    var_y = var_x.T
    cov = n * sxy - sx * sx.T
    scale = R.max(initial=1.0)
    undefined = (n < 2) | _negligible(var_x, n * n, scale) | _negligible(var_y, n * n, scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = cov / np.sqrt(var_x * var_y)
    values = np.clip(np.where(undefined, 0.0, r), -1.0, 1.0)
    values = _mirror_upper(values)
    diag = np.diag(n).copy()
    self_defined = (diag >= 2) & ~_negligible(np.diag(var_x), diag * diag, scale)
    values[np.diag_indices_from(values)] = np.where(self_defined, 1.0, 0.0)
    return SimilarityMatrix(user_ids, values, BCF)
