"""Map message kernels to predicate-cluster features.

Each extracted kernel (subject, verb [+preposition], object) is typed with
the training-corpus associations, looked up through the cluster maps, and
counted under its global predicate cluster. Kernels that cannot be matched
exactly fall back in a fixed order: the verb's largest argument sense, then
a reserved out-of-vocabulary feature, so every kernel contributes exactly
one count. A baseline featurizer clusters averaged subject-verb-object
word vectors instead.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .cluster import ClusterMaps, kmeans_fit, _assign
from .corpus import SLOT_OBJECT, SLOT_SUBJECT, AssociationTable, ParseError, TypedVerb
from .errors import DataError

logger = logging.getLogger(__name__)


class KernelRecord(NamedTuple):
    """One extracted sentence kernel, owned by a message."""

    message_id: str
    subject_np: str
    verb: str
    preposition: str | None
    object_np: str | None


@dataclass
class FeatureVector:
    """Sparse nonnegative counts over feature ids for one message."""

    message_id: str
    counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        for fid, count in self.counts.items():
            if fid < 0 or count < 0:
                raise ValueError(f"feature ids and counts must be nonnegative, "
                                 f"got {fid}:{count}")

    def increment(self, feature_id: int) -> None:
        self.counts[feature_id] = self.counts.get(feature_id, 0) + 1

    def total(self) -> int:
        return sum(self.counts.values())

    def binarized(self) -> dict[int, int]:
        return {fid: 1 for fid, count in self.counts.items() if count > 0}

    def to_dense(self, n_features: int, binary: bool = False) -> np.ndarray:
        out = np.zeros(n_features)
        source = self.binarized() if binary else self.counts
        for fid, count in source.items():
            if fid >= n_features:
                raise ValueError(f"feature id {fid} outside width {n_features}")
            out[fid] = count
        return out


def load_kernels(path) -> tuple[list[KernelRecord], list[ParseError]]:
    """Read a kernel file (message id, subject, verb, preposition, object).

    Malformed lines go into the returned error report; '#' comments and
    blank lines are skipped.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read kernel file {path}: {exc}") from exc
    kernels: list[KernelRecord] = []
    errors: list[ParseError] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            errors.append(ParseError(lineno, f"expected 5 fields, got {len(fields)}"))
            continue
        message_id = fields[0].strip()
        subject, verb, prep, obj = (f.strip().lower() for f in fields[1:])
        if not message_id or not subject or not verb:
            errors.append(ParseError(lineno, "message id, subject, and verb required"))
            continue
        kernels.append(KernelRecord(message_id, subject, verb, prep or None, obj or None))
    return kernels, errors


def type_kernel(kernel: KernelRecord, category_map: dict[str, tuple[str, ...]],
                assoc: AssociationTable) -> TypedVerb | None:
    """The typed verb a kernel resolves to, or None when an argument cannot
    be typed (NP missing from the category map, or a preposition with no
    object). Uses the same argmax-association choice as corpus typing."""
    subj_cats = category_map.get(kernel.subject_np)
    if not subj_cats:
        return None
    subj_best = assoc.best_category(kernel.verb, kernel.preposition,
                                    SLOT_SUBJECT, subj_cats)
    if subj_best is None:
        return None
    object_type = None
    if kernel.object_np is not None:
        obj_cats = category_map.get(kernel.object_np)
        if not obj_cats:
            return None
        obj_best = assoc.best_category(kernel.verb, kernel.preposition,
                                       SLOT_OBJECT, obj_cats)
        if obj_best is None:
            return None
        object_type = obj_best[0]
    elif kernel.preposition is not None:
        return None
    return TypedVerb(kernel.verb, kernel.preposition, subj_best[0], object_type)


def oov_feature_id(maps: ClusterMaps) -> int:
    """The reserved out-of-vocabulary id: one past the largest global id."""
    if not maps.g:
        raise ValueError("cluster maps carry no global assignment")
    return 1 + max(maps.g.values())


def featurize(kernels: Iterable[KernelRecord],
              category_map: dict[str, tuple[str, ...]],
              assoc: AssociationTable,
              maps: ClusterMaps,
              message_ids: Sequence[str] | None = None) -> list[FeatureVector]:
    """Count each kernel under a global predicate cluster, one per message.

    Fallback chain per kernel: (1) the kernel's typed verb is mapped
    exactly, count its global cluster; (2) the verb lemma has senses but
    this signature is unmapped, count the global cluster of the verb's
    largest sense (ties to the lowest sense index); (3) unknown verb, count
    the OOV feature. Messages listed in ``message_ids`` but owning no
    kernels yield all-zero vectors; by default messages appear in order of
    first kernel.
    """
    kernels = list(kernels)
    oov = oov_feature_id(maps)
    known_verbs = maps.verbs()
    if message_ids is None:
        message_ids = list(dict.fromkeys(k.message_id for k in kernels))
    else:
        message_ids = list(message_ids)
    vectors = {mid: FeatureVector(mid) for mid in message_ids}
    for kernel in kernels:
        vec = vectors.get(kernel.message_id)
        if vec is None:
            continue
        tv = type_kernel(kernel, category_map, assoc)
        if tv is not None and tv in maps.f:
            vec.increment(maps.g[maps.f[tv]])
        elif kernel.verb in known_verbs:
            vec.increment(maps.g[maps.largest_sense(kernel.verb)])
        else:
            vec.increment(oov)
    return [vectors[mid] for mid in message_ids]


class ClusterFeaturizer:
    """Bundles the category map, associations, and cluster maps needed to
    turn kernels into predicate-cluster features."""

    def __init__(self, category_map, assoc: AssociationTable, maps: ClusterMaps):
        self.category_map = category_map
        self.assoc = assoc
        self.maps = maps

    @property
    def n_features(self) -> int:
        return oov_feature_id(self.maps) + 1

    def transform(self, kernels, message_ids=None) -> list[FeatureVector]:
        return featurize(kernels, self.category_map, self.assoc, self.maps,
                         message_ids=message_ids)


def _kernel_vector(kernel: KernelRecord, word_vectors) -> np.ndarray | None:
    words = [kernel.subject_np, kernel.verb]
    if kernel.object_np is not None:
        words.append(kernel.object_np)
    found = [word_vectors.entity(w) for w in words
             if word_vectors.has("entity", w)]
    if not found:
        return None
    return np.mean(found, axis=0)


class SvoBaselineFeaturizer:
    """Baseline features: k-means over averaged subject-verb-object word
    vectors; feature ids are cluster ids 0..k-1 plus OOV id k."""

    def __init__(self, word_vectors, k: int, seed: int = 0):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.word_vectors = word_vectors
        self.k = k
        self.seed = seed

    @property
    def n_features(self) -> int:
        return self.k + 1

    def fit(self, kernels) -> "SvoBaselineFeaturizer":
        vectors = [v for v in (_kernel_vector(k, self.word_vectors) for k in kernels)
                   if v is not None]
        if not vectors:
            raise ValueError("no kernel has any in-vocabulary word; cannot fit")
        X = np.array(vectors)
        n_distinct = len(np.unique(X, axis=0))
        if self.k > n_distinct:
            raise ValueError(f"k={self.k} exceeds the {n_distinct} distinct "
                             "kernel vectors")
        _, self.centers_ = kmeans_fit(X, self.k, self.seed)
        return self

    def transform(self, kernels, message_ids=None) -> list[FeatureVector]:
        if not hasattr(self, "centers_"):
            raise ValueError("featurizer is not fitted; call fit first")
        kernels = list(kernels)
        if message_ids is None:
            message_ids = list(dict.fromkeys(k.message_id for k in kernels))
        vectors = {mid: FeatureVector(mid) for mid in message_ids}
        for kernel in kernels:
            vec = vectors.get(kernel.message_id)
            if vec is None:
                continue
            point = _kernel_vector(kernel, self.word_vectors)
            if point is None:
                vec.increment(self.k)
            else:
                vec.increment(int(_assign(point[None, :], self.centers_)[0]))
        return [vectors[mid] for mid in message_ids]


def featurize_svo_baseline(kernels, word_vectors, k: int, seed: int = 0
                           ) -> list[FeatureVector]:
    """Fit the S-V-O baseline on these kernels and featurize them."""
    kernels = list(kernels)
    return SvoBaselineFeaturizer(word_vectors, k, seed).fit(kernels).transform(kernels)


def feature_matrix(vectors: Sequence[FeatureVector], n_features: int,
                   binary: bool = False) -> np.ndarray:
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    out = np.zeros((len(vectors), n_features))
    for i, vec in enumerate(vectors):
        out[i] = vec.to_dense(n_features, binary=binary)
    return out


def save_features(vectors: Sequence[FeatureVector], n_features: int, path) -> None:
    """Write one row per message: message id, then id:count pairs sorted by
    feature id. The header records the feature-space width."""
    lines = [f"# n_features={n_features}"]
    for vec in vectors:
        pairs = [f"{fid}:{vec.counts[fid]}" for fid in sorted(vec.counts)
                 if vec.counts[fid] > 0]
        lines.append("\t".join([vec.message_id] + pairs))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path) -> tuple[list[FeatureVector], int]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    n_features = None
    vectors: list[FeatureVector] = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("# n_features="):
            try:
                n_features = int(line.split("=", 1)[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            continue
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        message_id = fields[0]
        if not message_id:
            raise DataError(f"{path}:{lineno}: empty message id")
        if message_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate message id {message_id!r}")
        seen.add(message_id)
        counts = {}
        for pair in fields[1:]:
            if not pair:
                continue
            fid_text, _, count_text = pair.partition(":")
            try:
                counts[int(fid_text)] = int(count_text)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad pair {pair!r}: {exc}") from exc
        try:
            vectors.append(FeatureVector(message_id, counts))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if n_features is None:
        n_features = 1 + max((max(v.counts, default=0) for v in vectors), default=0)
    return vectors, n_features
