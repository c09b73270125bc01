"""Temporal state detection: K-means state signatures and nearest-signature assignment.

States are found by K-means with k-means++ seeding over standardized
feature vectors. Each restart draws from its own generator seeded by
``(seed, restart)``, so restarts are independent of execution order. The
best restart (lowest within-cluster sum of squares) is kept and its states
are relabelled by sorting centroids lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInput, KTooLarge
from .features import FeatureVector, as_array


@dataclass(frozen=True)
class StateSignatureVector:
    state_id: int
    centroid: tuple[float, ...]
    member_count: int
    scale_minutes: int


@dataclass(frozen=True)
class StateModel:
    signatures: tuple[StateSignatureVector, ...]
    seed: int = 0
    iterations: int = 0
    inertia: float = 0.0
    inertia_history: tuple[float, ...] = ()
    restart_inertias: tuple[float, ...] = ()

    @property
    def K(self) -> int:
        return len(self.signatures)

    @property
    def scale_minutes(self) -> int:
        return self.signatures[0].scale_minutes

    @property
    def centroids(self) -> np.ndarray:
        return np.array([s.centroid for s in self.signatures], dtype=float)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "scale_minutes": self.scale_minutes,
            "iterations": self.iterations,
            "inertia": self.inertia,
            "inertia_history": list(self.inertia_history),
            "restart_inertias": list(self.restart_inertias),
            "states": [
                {"state_id": s.state_id, "centroid": list(s.centroid),
                 "member_count": s.member_count}
                for s in self.signatures
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateModel":
        sigs = tuple(
            StateSignatureVector(int(s["state_id"]), tuple(float(x) for x in s["centroid"]),
                                 int(s["member_count"]), int(d["scale_minutes"]))
            for s in d["states"]
        )
        return cls(sigs, int(d["seed"]), int(d["iterations"]), float(d["inertia"]),
                   tuple(d.get("inertia_history", ())), tuple(d.get("restart_inertias", ())))


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)
    restart_inertias: list[float] = field(default_factory=list)


def _sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_distances(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than requested; pick any not yet chosen
            idx = next(i for i in range(n) if i not in chosen)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_distances(x, x[idx:idx + 1])[:, 0])
    return x[chosen].copy()


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int):
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_distances(x, centroids)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids = _update(x, labels, centroids, d2)
    else:
        if labels is None:
            labels = np.argmin(_sq_distances(x, centroids), axis=1)
    d2 = _sq_distances(x, centroids)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    return centroids, labels, inertia, it, history


def _update(x, labels, centroids, d2):
    k = centroids.shape[0]
    new = np.empty_like(centroids)
    counts = np.bincount(labels, minlength=k)
    own = d2[np.arange(len(x)), labels]
    for j in range(k):
        if counts[j]:
            new[j] = x[labels == j].mean(axis=0)
    for j in np.flatnonzero(counts == 0):
        # empty cluster: reseed from the point farthest from its centroid
        far = int(np.argmax(own))
        new[j] = x[far]
        labels[far] = j
        own[far] = -1.0
    return new


def kmeans(x: np.ndarray, k: int, seed: int = 0, restarts: int = 10,
           max_iter: int = 300) -> KMeansResult:
    """Best-of-``restarts`` K-means with k-means++ seeding.

    Raises :class:`DegenerateInput` if all rows are identical and ``k > 1``,
    :class:`KTooLarge` if ``k`` exceeds the number of distinct rows.
    """
    x = np.asarray(x, dtype=float)
    if k < 1:
        raise KTooLarge(f"K must be >= 1, got {k}")
    distinct = len(np.unique(x, axis=0)) if len(x) else 0
    if k > 1 and distinct == 1:
        raise DegenerateInput("all feature vectors are identical")
    if k > distinct:
        raise KTooLarge(f"K={k} exceeds {distinct} distinct vectors")

    best = None
    inertias = []
    for r in range(max(1, restarts)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        init = kmeans_plusplus(x, k, rng)
        centroids, labels, inertia, it, hist = _lloyd(x, init, max_iter)
        inertias.append(inertia)
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia, it, hist)
    centroids, labels, inertia, it, hist = best
    return KMeansResult(centroids, labels, inertia, it, hist, inertias)


def canonical_order(centroids: np.ndarray) -> np.ndarray:
    """Permutation sorting centroid rows lexicographically."""
    return np.lexsort(centroids.T[::-1])


def cluster_states(features: Sequence[FeatureVector] | np.ndarray, K: int, seed: int = 0,
                   restarts: int = 10, max_iter: int = 300,
                   scale_minutes: int | None = None) -> tuple[StateModel, np.ndarray]:
    """Fit a :class:`StateModel` and return it with per-period state ids."""
    if isinstance(features, np.ndarray):
        x = features
    else:
        x = as_array(features)
        if scale_minutes is None and len(features):
            scale_minutes = features[0].scale_minutes
    res = kmeans(x, K, seed=seed, restarts=restarts, max_iter=max_iter)
    order = canonical_order(res.centroids)
    relabel = np.empty(K, dtype=int)
    relabel[order] = np.arange(K)
    labels = relabel[res.labels]
    counts = np.bincount(labels, minlength=K)
    sigs = tuple(
        StateSignatureVector(j, tuple(float(v) for v in res.centroids[order[j]]), int(counts[j]),
                             int(scale_minutes or 0))
        for j in range(K)
    )
    model = StateModel(sigs, seed, res.iterations, res.inertia, tuple(res.inertia_history),
                       tuple(res.restart_inertias))
    return model, labels


def assign_state(feature: FeatureVector | Sequence[float], model: StateModel) -> int:
    """Nearest signature by Euclidean distance; ties go to the lowest state id."""
    v = np.asarray(feature.values() if isinstance(feature, FeatureVector) else feature, dtype=float)
    d2 = ((model.centroids - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def assign_states(x: np.ndarray, model: StateModel) -> np.ndarray:
    return np.argmin(_sq_distances(np.asarray(x, dtype=float), model.centroids), axis=1)


def state_feature_matrix(model: StateModel) -> np.ndarray:
    """``|S| x 4`` matrix whose row ``s`` is the signature of state ``s``."""
    return model.centroids


# Signature of a pluggable state detector: (features, K, seed) -> (model, labels).
StateDetector = Callable[..., tuple[StateModel, np.ndarray]]
