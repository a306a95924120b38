"""Clustering: k-means, normalized-cuts spectral, signed spectral, and the
two-stage grouping of typed verbs.

Stage one clusters each verb's type signatures into argument senses (cosine
affinity over signature embeddings, normalized-cuts spectral partitioning,
sense count from an inventory). Stage two clusters the sense centroids of
all verbs globally (RBF affinity, antonym pairs overwritten with negative
edges, signed spectral partitioning). The map f sends a typed verb to its
(verb, local sense) pair; g sends each local sense to its global cluster.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.linalg import eigsh
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_affinity, check_n_clusters, check_vectors
from .corpus import TypedVerb
from .embedding import KIND_RELATION, EmbeddingTable
from .errors import DataError
from .seeding import derive_seed

logger = logging.getLogger(__name__)

# dense eigendecomposition below this size, Lanczos iteration above
_DENSE_EIG_LIMIT = 2000


def _kmeanspp_centers(X: np.ndarray, k: int, rng) -> np.ndarray:
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(len(X))]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[c] = X[rng.integers(len(X))]
            continue
        target = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), target))
        idx = min(idx, len(X) - 1)
        centers[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def _assign(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def kmeans_fit(points, k: int, seed: int, max_iter: int = 300
               ) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding; returns (labels, centers).

    Iterates to an assignment fixpoint or ``max_iter`` sweeps; a cluster
    that empties is reseeded to the point farthest from its own center.
    """
    X = check_vectors(points, "points")
    check_n_clusters(k, len(X))
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_centers(X, k, rng)
    labels = _assign(X, centers)
    for _ in range(max_iter):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
            else:
                spread = np.linalg.norm(X - centers[labels], axis=1)
                centers[c] = X[int(np.argmax(spread))]
        new_labels = _assign(X, centers)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers


def kmeans(points, k: int, seed: int, max_iter: int = 300) -> np.ndarray:
    labels, _ = kmeans_fit(points, k, seed, max_iter)
    return labels


def cosine_affinity(vectors) -> np.ndarray:
    """Pairwise affinity (1 + cos(x_i, x_j)) / 2, in [0, 1] with unit
    diagonal. The shift keeps anti-aligned vectors at affinity 0 instead of
    introducing negative weights, preserving the cosine ordering."""
    X = check_vectors(vectors, "vectors")
    norms = np.linalg.norm(X, axis=1)
    if (norms == 0).any():
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"vector {bad} has zero norm; cosine affinity undefined")
    cos = (X @ X.T) / np.outer(norms, norms)
    np.clip(cos, -1.0, 1.0, out=cos)
    W = (1.0 + cos) / 2.0
    W = (W + W.T) / 2.0
    np.fill_diagonal(W, 1.0)
    return W


def rbf_affinity(centroids, sigma="median") -> np.ndarray:
    """Gaussian affinity exp(-||e_i - e_j||^2 / (2 sigma^2)) with unit
    diagonal; sigma="median" uses the median nonzero pairwise distance."""
    X = check_vectors(centroids, "centroids", min_rows=2)
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    if sigma == "median":
        upper = d2[np.triu_indices(len(X), k=1)]
        nonzero = upper[upper > 0]
        if nonzero.size == 0:
            raise ValueError("all centroids identical; median bandwidth undefined")
        bandwidth = float(np.sqrt(np.median(nonzero)))
    else:
        bandwidth = float(sigma)
        if not bandwidth > 0:
            raise ValueError(f"sigma must be positive or 'median', got {sigma!r}")
    W = np.exp(-d2 / (2.0 * bandwidth**2))
    W = (W + W.T) / 2.0
    np.fill_diagonal(W, 1.0)
    return W


def _spectral_labels(W: np.ndarray, k: int, seed: int, signed: bool) -> np.ndarray:
    """Shared normalized spectral embedding + k-means discretization.

    The signed variant differs only in using absolute-value degrees, so on
    a nonnegative matrix both variants perform identical arithmetic.
    """
    check_n_clusters(k, len(W))
    degrees = np.abs(W).sum(axis=1) if signed else W.sum(axis=1)
    degrees[degrees <= 0] = 1.0
    inv_sqrt = 1.0 / np.sqrt(degrees)
    M = np.eye(len(W)) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    M = (M + M.T) / 2.0
    if len(W) < _DENSE_EIG_LIMIT or k >= len(W) - 1:
        _, vectors = np.linalg.eigh(M)
        embedding = vectors[:, :k]
    else:
        v0 = np.full(len(W), 1.0 / np.sqrt(len(W)))
        _, embedding = eigsh(M, k=k, which="SA", tol=1e-10, v0=v0)
    row_norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    np.maximum(row_norms, 1e-300, out=row_norms)
    embedding = embedding / row_norms
    return kmeans(embedding, k, seed)


def spectral_cluster(W, k: int, seed: int) -> np.ndarray:
    """Normalized-cuts spectral clustering of a nonnegative affinity matrix:
    k smallest eigenvectors of I - D^{-1/2} W D^{-1/2} (isolated rows get
    unit degree), row-normalized and discretized by k-means."""
    W = check_affinity(W, "affinity", allow_negative=False)
    return _spectral_labels(W, k, seed, signed=False)


def signed_spectral_cluster(W, k: int, seed: int) -> np.ndarray:
    """Spectral clustering of a signed affinity matrix via the signed
    Laplacian with degrees D_ii = sum_j |W_ij|; reduces exactly to
    spectral_cluster when W has no negative entries."""
    W = check_affinity(W, "affinity", allow_negative=True)
    return _spectral_labels(W, k, seed, signed=True)


class KMeans(ClusterMixin, BaseEstimator):
    """Seeded k-means estimator over raw vectors."""

    def __init__(self, n_clusters=8, seed=0, max_iter=300):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        self.labels_, self.cluster_centers_ = kmeans_fit(
            X, self.n_clusters, self.seed, self.max_iter)
        return self

    def predict(self, X):
        if not hasattr(self, "cluster_centers_"):
            raise ValueError("estimator is not fitted; call fit first")
        return _assign(check_vectors(X, "X"), self.cluster_centers_)


class SpectralClustering(ClusterMixin, BaseEstimator):
    """Normalized-cuts estimator over a precomputed nonnegative affinity."""

    def __init__(self, n_clusters=8, seed=0):
        self.n_clusters = n_clusters
        self.seed = seed

    def fit(self, X, y=None):
        self.labels_ = spectral_cluster(X, self.n_clusters, self.seed)
        return self


class SignedSpectralClustering(ClusterMixin, BaseEstimator):
    """Signed-Laplacian estimator over a precomputed signed affinity."""

    def __init__(self, n_clusters=8, seed=0):
        self.n_clusters = n_clusters
        self.seed = seed

    def fit(self, X, y=None):
        self.labels_ = signed_spectral_cluster(X, self.n_clusters, self.seed)
        return self


class SenseInventory:
    """Verb-to-sense-count table; absent verbs default to ``default_k``."""

    def __init__(self, counts: dict[str, int] | None = None, default_k: int = 2):
        self.counts = dict(counts or {})
        if default_k < 1:
            raise ValueError(f"default sense count must be >= 1, got {default_k}")
        for verb, k in self.counts.items():
            if k < 1:
                raise ValueError(f"sense count for {verb!r} must be >= 1, got {k}")
        self.default_k = default_k

    def k_for(self, verb: str) -> int:
        return self.counts.get(verb, self.default_k)

    @classmethod
    def load(cls, path, default_k: int = 2) -> "SenseInventory":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read sense inventory {path}: {exc}") from exc
        counts = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
            try:
                k = int(fields[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if k < 1:
                raise DataError(f"{path}:{lineno}: sense count must be >= 1, got {k}")
            counts[fields[0].strip().lower()] = k
        return cls(counts, default_k=default_k)

    def save(self, path) -> None:
        lines = ["# verb\tsenses"]
        lines += [f"{verb}\t{self.counts[verb]}" for verb in sorted(self.counts)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class Thesaurus:
    """Unordered antonym verb pairs; symmetric and irreflexive."""

    def __init__(self, pairs: Iterable[tuple[str, str]] = ()):
        self.pairs: set[tuple[str, str]] = set()
        for a, b in pairs:
            self.add(a, b)

    def add(self, a: str, b: str) -> None:
        if a == b:
            raise ValueError(f"antonym pair must relate two distinct verbs, got {a!r}")
        self.pairs.add((min(a, b), max(a, b)))

    def are_antonyms(self, a: str, b: str) -> bool:
        return (min(a, b), max(a, b)) in self.pairs

    def __len__(self):
        return len(self.pairs)

    @classmethod
    def load(cls, path) -> "Thesaurus":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read thesaurus {path}: {exc}") from exc
        t = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3 or fields[2].strip() != "antonym":
                raise DataError(f"{path}:{lineno}: expected 'verb\\tverb\\tantonym'")
            a, b = fields[0].strip().lower(), fields[1].strip().lower()
            try:
                t.add(a, b)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
        return t

    def save(self, path) -> None:
        lines = ["# verb\tverb\trelation"]
        lines += [f"{a}\t{b}\tantonym" for a, b in sorted(self.pairs)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class ClusterMaps:
    """The two-stage cluster assignment.

    ``f`` maps each embedded typed verb to its (verb, local sense index);
    ``centroids`` and ``sizes`` describe each local sense; ``g`` maps each
    (verb, local sense index) to a global predicate-cluster id.
    """

    f: dict[TypedVerb, tuple[str, int]] = field(default_factory=dict)
    centroids: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    sizes: dict[tuple[str, int], int] = field(default_factory=dict)
    g: dict[tuple[str, int], int] = field(default_factory=dict)

    def verbs(self) -> set[str]:
        return {verb for verb, _ in self.sizes}

    def sense_keys(self) -> list[tuple[str, int]]:
        return sorted(self.sizes)

    def global_id(self, typed_verb: TypedVerb) -> int:
        return self.g[self.f[typed_verb]]

    def largest_sense(self, verb: str) -> tuple[str, int]:
        """The verb's biggest local cluster; ties go to the lowest index."""
        candidates = [key for key in self.sizes if key[0] == verb]
        if not candidates:
            raise KeyError(f"verb {verb!r} has no local clusters")
        return max(candidates, key=lambda key: (self.sizes[key], -key[1]))

    def n_global(self) -> int:
        return len(set(self.g.values()))


def verb_argument_clusters(table: EmbeddingTable, inventory: SenseInventory,
                           seed: int) -> ClusterMaps:
    """Cluster each verb's embedded type signatures into argument senses.

    Signatures are grouped by bare verb lemma (prepositional variants and
    pure intransitives count as signatures of the same verb). The sense
    count is min(inventory count, #signatures); single-signature verbs form
    their own sense without an eigendecomposition. Each verb's k-means seed
    is derived from the master seed and the verb name, so per-verb results
    do not depend on scheduling or on which other verbs are present.
    """
    typed_verbs = [TypedVerb.from_signature(s) for s in table.symbols(KIND_RELATION)]
    if not typed_verbs:
        raise ValueError("embedding table contains no typed verbs")
    by_verb: dict[str, list[TypedVerb]] = {}
    for tv in typed_verbs:
        by_verb.setdefault(tv.verb, []).append(tv)
    maps = ClusterMaps()
    for verb in sorted(by_verb):
        sigs = sorted(by_verb[verb], key=lambda tv: tv.sort_key())
        X = np.array([table.relation(tv.signature()) for tv in sigs])
        k = min(inventory.k_for(verb), len(sigs))
        if len(sigs) == 1:
            labels = np.zeros(1, dtype=np.int64)
        else:
            W = cosine_affinity(X)
            labels = spectral_cluster(W, k, derive_seed(seed, "verb", verb))
        compact = {old: new for new, old in enumerate(sorted(set(labels.tolist())))}
        for tv, label in zip(sigs, labels):
            maps.f[tv] = (verb, compact[label])
        for old, new in compact.items():
            members = labels == old
            maps.centroids[(verb, new)] = X[members].mean(axis=0)
            maps.sizes[(verb, new)] = int(members.sum())
    return maps


def apply_antonym_edges(W: np.ndarray, thesaurus: Thesaurus,
                        sense_keys: Sequence[tuple[str, int]],
                        beta: float) -> np.ndarray:
    """Overwrite affinities between senses of antonym verbs with -beta.

    ``sense_keys[i]`` names the (verb, local index) behind row i of W. With
    beta = 0 the input is returned unchanged (a copy), not overwritten with
    -0. Antonym verbs with no senses in the matrix are ignored with a
    warning.
    """
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    out = np.array(W, dtype=np.float64, copy=True)
    if beta == 0 or not len(thesaurus):
        return out
    rows_by_verb: dict[str, list[int]] = {}
    for i, (verb, _) in enumerate(sense_keys):
        rows_by_verb.setdefault(verb, []).append(i)
    for a, b in sorted(thesaurus.pairs):
        missing = [v for v in (a, b) if v not in rows_by_verb]
        if missing:
            logger.warning("antonym pair (%s, %s) ignored: no senses for %s",
                           a, b, ", ".join(missing))
            continue
        ia, ib = rows_by_verb[a], rows_by_verb[b]
        out[np.ix_(ia, ib)] = -beta
        out[np.ix_(ib, ia)] = -beta
    return out


def predicate_clusters(maps: ClusterMaps, thesaurus: Thesaurus, k: int,
                       beta: float = 1.0, sigma="median", seed: int = 0
                       ) -> ClusterMaps:
    """Cluster all sense centroids globally; fills and returns ``maps.g``.

    RBF affinity over centroids, antonym cross-edges overwritten with
    -beta, then signed spectral partitioning into k global clusters.
    """
    keys = maps.sense_keys()
    if not keys:
        raise ValueError("no local clusters to group; run the argument stage first")
    check_n_clusters(k, len(keys))
    if len(keys) == 1:
        maps.g = {keys[0]: 0}
        return maps
    X = np.array([maps.centroids[key] for key in keys])
    W = rbf_affinity(X, sigma)
    W = apply_antonym_edges(W, thesaurus, keys, beta)
    labels = signed_spectral_cluster(W, k, derive_seed(seed, "global"))
    maps.g = {key: int(label) for key, label in zip(keys, labels)}
    return maps


def save_cluster_maps(maps: ClusterMaps, path, centroid_path=None) -> None:
    """Write one row per typed verb: verb, preposition, subject type, object
    type, local cluster, global cluster. Optionally also write sense
    centroids (verb, local cluster, coordinates) for inspection."""
    if not maps.g:
        raise ValueError("cluster maps have no global assignment to save")
    lines = ["# verb\tpreposition\tsubject_type\tobject_type\tlocal_cluster\tglobal_cluster"]
    for tv in sorted(maps.f, key=lambda t: t.sort_key()):
        verb, local = maps.f[tv]
        lines.append("\t".join([
            tv.verb, tv.preposition or "", tv.subject_type, tv.object_type or "",
            str(local), str(maps.g[(verb, local)]),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if centroid_path is not None:
        rows = ["# verb\tlocal_cluster\tcentroid"]
        for verb, local in maps.sense_keys():
            coords = " ".join(repr(float(x)) for x in maps.centroids[(verb, local)])
            rows.append(f"{verb}\t{local}\t{coords}")
        Path(centroid_path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_cluster_maps(path) -> ClusterMaps:
    """Rebuild f, g, and sizes from a cluster file (centroids are not part
    of the on-disk interchange format and stay empty)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read cluster maps {path}: {exc}") from exc
    maps = ClusterMaps()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
        verb, prep, ts, to, local_text, global_text = fields
        try:
            tv = TypedVerb(verb, prep or None, ts, to or None)
            local, global_ = int(local_text), int(global_text)
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        key = (verb, local)
        if tv in maps.f:
            raise DataError(f"{path}:{lineno}: duplicate typed verb {tv.signature()}")
        existing = maps.g.get(key)
        if existing is not None and existing != global_:
            raise DataError(f"{path}:{lineno}: conflicting global cluster for {key}")
        maps.f[tv] = key
        maps.g[key] = global_
        maps.sizes[key] = maps.sizes.get(key, 0) + 1
    return maps
