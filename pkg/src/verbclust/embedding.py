"""Translation embeddings for typed verbs, noun phrases, and prepositions.

Transitive typed triples are scored by the translation distance
``d(n_s + v_t, n_o)``: the subject NP vector plus the typed-verb vector
should land near the object NP vector. Pure intransitives ride along in the
same space through their prepositional kernels, scored ``d(v_i + p, n_o)``
with the typed intransitive verb as the head symbol and the preposition as
the relation. Training minimizes the margin ranking loss between each
observed triple and a corrupted one, by minibatch SGD.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import IntransitiveTriple, TypedTriple, TypedVerb
from .errors import DataError, NumericError
from .seeding import derive_seed

KIND_ENTITY = "entity"
KIND_RELATION = "relation"
KIND_PREPOSITION = "preposition"
KINDS = (KIND_ENTITY, KIND_RELATION, KIND_PREPOSITION)

# integer codes used in encoded training rows
_HEAD_ENTITY, _HEAD_RELATION = 0, 1
_REL_RELATION, _REL_PREPOSITION = 0, 1


def l2_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def margin_loss(pos_dist: float, neg_dist: float, gamma: float) -> float:
    return max(0.0, gamma + pos_dist - neg_dist)


@dataclass
class TrainConfig:
    dimension: int = 300
    epochs: int = 100
    margin: float = 1.0
    learning_rate: float = 0.01
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be positive, got {self.batch_size}")


class EmbeddingTable:
    """Vectors for entities (NPs), relations (typed-verb signatures), and
    prepositions, all of one dimension. Lookup of an absent symbol raises
    KeyError rather than inventing a zero vector."""

    def __init__(self, dimension: int,
                 entities: Sequence[str], entity_vectors: np.ndarray,
                 relations: Sequence[str], relation_vectors: np.ndarray,
                 prepositions: Sequence[str], preposition_vectors: np.ndarray):
        self.dimension = int(dimension)
        self.entity_index = {s: i for i, s in enumerate(entities)}
        self.relation_index = {s: i for i, s in enumerate(relations)}
        self.preposition_index = {s: i for i, s in enumerate(prepositions)}
        self.entity_vectors = np.asarray(entity_vectors, dtype=np.float64)
        self.relation_vectors = np.asarray(relation_vectors, dtype=np.float64)
        self.preposition_vectors = np.asarray(preposition_vectors, dtype=np.float64)
        for name, index, arr in self._parts():
            if arr.shape != (len(index), self.dimension):
                raise ValueError(f"{name} vectors have shape {arr.shape}, "
                                 f"expected ({len(index)}, {self.dimension})")

    def _parts(self):
        return [(KIND_ENTITY, self.entity_index, self.entity_vectors),
                (KIND_RELATION, self.relation_index, self.relation_vectors),
                (KIND_PREPOSITION, self.preposition_index, self.preposition_vectors)]

    @property
    def count(self) -> int:
        return (len(self.entity_index) + len(self.relation_index)
                + len(self.preposition_index))

    def has(self, kind: str, symbol: str) -> bool:
        index, _ = self._kind(kind)
        return symbol in index

    def _kind(self, kind: str):
        if kind == KIND_ENTITY:
            return self.entity_index, self.entity_vectors
        if kind == KIND_RELATION:
            return self.relation_index, self.relation_vectors
        if kind == KIND_PREPOSITION:
            return self.preposition_index, self.preposition_vectors
        raise ValueError(f"unknown symbol kind {kind!r}")

    def vector(self, kind: str, symbol: str) -> np.ndarray:
        index, arr = self._kind(kind)
        if symbol not in index:
            raise KeyError(f"no {kind} vector for symbol {symbol!r}")
        return arr[index[symbol]].copy()

    def entity(self, np_: str) -> np.ndarray:
        return self.vector(KIND_ENTITY, np_)

    def relation(self, signature: str) -> np.ndarray:
        return self.vector(KIND_RELATION, signature)

    def preposition(self, prep: str) -> np.ndarray:
        return self.vector(KIND_PREPOSITION, prep)

    def symbols(self, kind: str) -> list[str]:
        index, _ = self._kind(kind)
        return list(index)

    def save(self, path) -> None:
        """Write "<count> <dimension>" then one "kind symbol v1 ... vd" line
        per symbol, at full decimal precision."""
        lines = [f"{self.count} {self.dimension}"]
        for kind, index, arr in self._parts():
            for symbol, i in index.items():
                coords = " ".join(repr(float(x)) for x in arr[i])
                lines.append(f"{kind} {symbol} {coords}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read embedding file {path}: {exc}") from exc

        def fail(offset, message):
            raise DataError(f"{path}: at byte {offset}: {message}")

        lines = text.splitlines(keepends=True)
        if not lines:
            fail(0, "empty embedding file")
        header = lines[0].split()
        if len(header) != 2:
            fail(0, f"header must be '<count> <dimension>', got {lines[0].strip()!r}")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            fail(0, f"non-integer header fields {lines[0].strip()!r}")
        if count < 0 or dim < 1:
            fail(0, f"invalid header values count={count} dimension={dim}")

        symbols = {kind: [] for kind in KINDS}
        rows = {kind: [] for kind in KINDS}
        seen = set()
        offset = len(lines[0])
        n_rows = 0
        for line in lines[1:]:
            if line.strip():
                n_rows += 1
                if n_rows > count:
                    fail(offset, f"more than the {count} rows announced in the header")
                tokens = line.split()
                if len(tokens) < 2 + dim:
                    fail(offset, f"expected kind, symbol, and {dim} coordinates, "
                                 f"got {len(tokens)} fields")
                kind = tokens[0]
                if kind not in KINDS:
                    fail(offset, f"unknown symbol kind {kind!r}")
                symbol = " ".join(tokens[1:len(tokens) - dim])
                if (kind, symbol) in seen:
                    fail(offset, f"duplicate {kind} symbol {symbol!r}")
                seen.add((kind, symbol))
                try:
                    vec = [float(t) for t in tokens[len(tokens) - dim:]]
                except ValueError as exc:
                    fail(offset, str(exc))
                if not all(math.isfinite(v) for v in vec):
                    fail(offset, f"non-finite coordinate for {kind} {symbol!r}")
                symbols[kind].append(symbol)
                rows[kind].append(vec)
            offset += len(line)
        if n_rows < count:
            fail(offset, f"truncated: header announced {count} rows, found {n_rows}")

        def arr(kind):
            return (np.array(rows[kind], dtype=np.float64) if rows[kind]
                    else np.zeros((0, dim)))

        return cls(dim, symbols[KIND_ENTITY], arr(KIND_ENTITY),
                   symbols[KIND_RELATION], arr(KIND_RELATION),
                   symbols[KIND_PREPOSITION], arr(KIND_PREPOSITION))


def corrupt(triple, entity_pool: Sequence[str], rng):
    """Replace one NP of a triple with a uniformly drawn different NP.

    Transitive triples have subject or object replaced with probability 0.5
    each; intransitive rows only have their (object) NP replaced, since the
    head is the typed verb itself.
    """
    pool = list(entity_pool)
    if len(set(pool)) < 2:
        raise ValueError("entity pool must contain at least 2 distinct NPs")

    def draw_other(current):
        others = [p for p in pool if p != current]
        if not others:
            raise ValueError(f"no replacement candidate differs from {current!r}")
        return others[int(rng.integers(len(others)))]

    if isinstance(triple, IntransitiveTriple):
        return triple._replace(object_np=draw_other(triple.object_np))
    if triple.object_np is None:
        raise ValueError("cannot corrupt an objectless triple; use its "
                         "intransitive training rows instead")
    if rng.random() < 0.5:
        return triple._replace(subject_np=draw_other(triple.subject_np))
    return triple._replace(object_np=draw_other(triple.object_np))


def _vocabulary(typed_triples, intransitive_triples):
    entities, relations, prepositions = set(), set(), set()
    n_transitive = 0
    for row in typed_triples:
        if row.object_np is None:
            continue
        n_transitive += 1
        entities.add(row.subject_np)
        entities.add(row.object_np)
        relations.add(row.typed_verb.signature())
    for row in intransitive_triples:
        entities.add(row.object_np)
        relations.add(row.typed_verb.signature())
        prepositions.add(row.preposition)
    if n_transitive == 0:
        raise ValueError("training needs at least one transitive typed triple")
    return sorted(entities), sorted(relations), sorted(prepositions)


def encode_training_rows(table: EmbeddingTable,
                         typed_triples: Iterable[TypedTriple],
                         intransitive_triples: Iterable[IntransitiveTriple] = ()
                         ) -> np.ndarray:
    """Distinct training rows as an (n, 5) int array.

    Columns: head kind (0 entity / 1 relation), head row, relation kind
    (0 relation / 1 preposition), relation row, object entity row. Counts
    are ignored: each distinct triple trains once per epoch.
    """
    rows = set()
    for r in typed_triples:
        if r.object_np is None:
            continue
        rows.add((_HEAD_ENTITY, table.entity_index[r.subject_np],
                  _REL_RELATION, table.relation_index[r.typed_verb.signature()],
                  table.entity_index[r.object_np]))
    for r in intransitive_triples:
        rows.add((_HEAD_RELATION, table.relation_index[r.typed_verb.signature()],
                  _REL_PREPOSITION, table.preposition_index[r.preposition],
                  table.entity_index[r.object_np]))
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, 5)


def initialize_embeddings(typed_triples, intransitive_triples,
                          config: TrainConfig) -> EmbeddingTable:
    """Seeded uniform initialization in [-6/sqrt(dim), +6/sqrt(dim)], with
    entity vectors normalized to unit L2."""
    entities, relations, prepositions = _vocabulary(typed_triples, intransitive_triples)
    rng = np.random.default_rng(config.seed)
    bound = 6.0 / math.sqrt(config.dimension)
    E = rng.uniform(-bound, bound, size=(len(entities), config.dimension))
    R = rng.uniform(-bound, bound, size=(len(relations), config.dimension))
    P = rng.uniform(-bound, bound, size=(len(prepositions), config.dimension))
    _normalize_rows(E)
    return EmbeddingTable(config.dimension, entities, E, relations, R, prepositions, P)


def _normalize_rows(arr: np.ndarray) -> None:
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    np.maximum(norms, 1e-300, out=norms)
    arr /= norms


def corrupt_rows(rows: np.ndarray, n_entities: int, rng) -> np.ndarray:
    """Vectorized corruption of encoded rows: entity heads flip a fair coin
    between subject and object replacement, relation heads always replace
    the object. Replacements are uniform over the other entities."""
    if n_entities < 2:
        raise ValueError("need at least 2 entities to corrupt")
    neg = rows.copy()
    corrupt_head = (rows[:, 0] == _HEAD_ENTITY) & (rng.random(len(rows)) < 0.5)
    target_col = np.where(corrupt_head, 1, 4)
    original = neg[np.arange(len(rows)), target_col]
    draw = rng.integers(0, n_entities - 1, size=len(rows))
    draw += (draw >= original)
    neg[np.arange(len(rows)), target_col] = draw
    return neg


def _gather(rows_kind, rows_idx, arrays):
    out = np.empty((len(rows_idx), arrays[0].shape[1]))
    for code, arr in enumerate(arrays):
        mask = rows_kind == code
        if mask.any():
            out[mask] = arr[rows_idx[mask]]
    return out


def batch_loss_and_gradients(table: EmbeddingTable, pos: np.ndarray,
                             neg: np.ndarray, margin: float):
    """Total hinge loss of a batch and dense gradients w.r.t. each array.

    Per active pair the gradient of an L2 distance term is the unit vector
    of its difference: +u on the head and relation, -u on the tail, with the
    corrupted term entering with opposite sign.
    """
    E, R, P = table.entity_vectors, table.relation_vectors, table.preposition_vectors
    heads_pos = _gather(pos[:, 0], pos[:, 1], (E, R))
    heads_neg = _gather(neg[:, 0], neg[:, 1], (E, R))
    rels = _gather(pos[:, 2], pos[:, 3], (R, P))
    diff_pos = heads_pos + rels - E[pos[:, 4]]
    diff_neg = heads_neg + rels - E[neg[:, 4]]
    with np.errstate(over="ignore", invalid="ignore"):
        d_pos = np.linalg.norm(diff_pos, axis=1)
        d_neg = np.linalg.norm(diff_neg, axis=1)
    if not (np.isfinite(d_pos).all() and np.isfinite(d_neg).all()):
        raise NumericError("non-finite translation distances; training has diverged")
    slack = margin + d_pos - d_neg
    active = slack > 0
    loss = float(slack[active].sum())

    grad_E = np.zeros_like(E)
    grad_R = np.zeros_like(R)
    grad_P = np.zeros_like(P)
    u_pos = np.zeros_like(diff_pos)
    u_neg = np.zeros_like(diff_neg)
    safe_pos = active & (d_pos > 0)
    safe_neg = active & (d_neg > 0)
    u_pos[safe_pos] = diff_pos[safe_pos] / d_pos[safe_pos, None]
    u_neg[safe_neg] = diff_neg[safe_neg] / d_neg[safe_neg, None]

    grads = (grad_E, grad_R)
    for head_code in (_HEAD_ENTITY, _HEAD_RELATION):
        m = active & (pos[:, 0] == head_code)
        if m.any():
            np.add.at(grads[head_code], pos[m, 1], u_pos[m])
            np.add.at(grads[head_code], neg[m, 1], -u_neg[m])
    rel_grads = (grad_R, grad_P)
    for rel_code in (_REL_RELATION, _REL_PREPOSITION):
        m = active & (pos[:, 2] == rel_code)
        if m.any():
            np.add.at(rel_grads[rel_code], pos[m, 3], u_pos[m] - u_neg[m])
    np.add.at(grad_E, pos[active, 4], -u_pos[active])
    np.add.at(grad_E, neg[active, 4], u_neg[active])
    return loss, grad_E, grad_R, grad_P


def train_embeddings(typed_triples, intransitive_triples, config: TrainConfig,
                     workers: int = 1) -> tuple[EmbeddingTable, np.ndarray]:
    """Minibatch SGD over both loss families in one shared space.

    Returns the trained table and the per-epoch mean hinge loss. Entity
    vectors are renormalized to unit L2 after every epoch. With a fixed
    seed and a single worker the result is bit-identical across runs; with
    several workers minibatch updates interleave unsynchronized and the
    result may differ between runs and worker counts.
    """
    intransitive_triples = list(intransitive_triples)
    table = initialize_embeddings(typed_triples, intransitive_triples, config)
    rows = encode_training_rows(table, typed_triples, intransitive_triples)
    if config.epochs == 0:
        return table, np.zeros(0)
    rng = np.random.default_rng(derive_seed(config.seed, "sgd-epochs"))
    n = len(rows)
    n_entities = len(table.entity_index)
    lr = config.learning_rate
    trace = np.zeros(config.epochs)

    def step(pos, neg, where):
        try:
            loss, gE, gR, gP = batch_loss_and_gradients(table, pos, neg, config.margin)
        except NumericError as exc:
            raise NumericError(f"{exc} ({where})") from None
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss in {where}")
        table.entity_vectors -= lr * gE
        table.relation_vectors -= lr * gR
        table.preposition_vectors -= lr * gP
        return loss

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        shuffled = rows[order]
        negatives = corrupt_rows(shuffled, n_entities, rng)
        starts = range(0, n, config.batch_size)
        slices = [(shuffled[s:s + config.batch_size],
                   negatives[s:s + config.batch_size],
                   f"epoch {epoch} batch {i}") for i, s in enumerate(starts)]
        if workers <= 1:
            total = sum(step(*sl) for sl in slices)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                total = sum(pool.map(lambda sl: step(*sl), slices))
        _normalize_rows(table.entity_vectors)
        trace[epoch] = total / n
    for kind, _, arr in table._parts():
        if arr.size and not np.isfinite(arr).all():
            raise NumericError(f"training produced non-finite {kind} vectors; "
                               "lower the learning rate")
    return table, trace


def _total_loss(table, pos, neg, margin) -> float:
    E, R = table.entity_vectors, table.relation_vectors
    P = table.preposition_vectors
    heads_pos = _gather(pos[:, 0], pos[:, 1], (E, R))
    heads_neg = _gather(neg[:, 0], neg[:, 1], (E, R))
    rels = _gather(pos[:, 2], pos[:, 3], (R, P))
    d_pos = np.linalg.norm(heads_pos + rels - E[pos[:, 4]], axis=1)
    d_neg = np.linalg.norm(heads_neg + rels - E[neg[:, 4]], axis=1)
    return float(np.maximum(0.0, margin + d_pos - d_neg).sum())


def gradient_check_at(table: EmbeddingTable, pos: np.ndarray, neg: np.ndarray,
                      margin: float, step: float = 1e-5) -> float:
    """Max coordinate-wise relative error between the analytic batch gradient
    and central finite differences, over every parameter of the table."""
    _, gE, gR, gP = batch_loss_and_gradients(table, pos, neg, margin)
    worst = 0.0
    for analytic, arr in ((gE, table.entity_vectors),
                          (gR, table.relation_vectors),
                          (gP, table.preposition_vectors)):
        flat = arr.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = _total_loss(table, pos, neg, margin)
            flat[i] = saved - step
            down = _total_loss(table, pos, neg, margin)
            flat[i] = saved
            numeric = (up - down) / (2 * step)
            a = analytic.ravel()[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-2)
            worst = max(worst, err)
    return worst


def gradient_check(typed_triples, intransitive_triples, config: TrainConfig,
                   step: float = 1e-5, max_resample: int = 100) -> float:
    """Finite-difference check of the hinge-loss gradient on a small sample.

    Corruptions are redrawn if any pair lands too close to a hinge kink or
    a zero-distance kink for central differences at the given step.
    """
    table = initialize_embeddings(typed_triples, intransitive_triples, config)
    rows = encode_training_rows(table, typed_triples, intransitive_triples)
    rng = np.random.default_rng(derive_seed(config.seed, "gradient-check"))
    guard = max(1e-3, 100 * step)
    E, R, P = table.entity_vectors, table.relation_vectors, table.preposition_vectors
    for _ in range(max_resample):
        neg = corrupt_rows(rows, len(table.entity_index), rng)
        heads_pos = _gather(rows[:, 0], rows[:, 1], (E, R))
        heads_neg = _gather(neg[:, 0], neg[:, 1], (E, R))
        rels = _gather(rows[:, 2], rows[:, 3], (R, P))
        d_pos = np.linalg.norm(heads_pos + rels - E[rows[:, 4]], axis=1)
        d_neg = np.linalg.norm(heads_neg + rels - E[neg[:, 4]], axis=1)
        slack = config.margin + d_pos - d_neg
        if (np.abs(slack) > guard).all() and (d_pos > guard).all() \
                and (d_neg > guard).all():
            return gradient_check_at(table, rows, neg, config.margin, step)
    raise NumericError(f"could not find a kink-free corruption in {max_resample} draws")


def rank_objects(table: EmbeddingTable, typed_triples) -> np.ndarray:
    """Rank of the true object among all entities by translation distance
    (rank 1 = closest), one rank per distinct transitive triple."""
    rows = encode_training_rows(table, typed_triples)
    E, R = table.entity_vectors, table.relation_vectors
    ranks = np.zeros(len(rows), dtype=np.int64)
    for i, (_, h, _, r, t) in enumerate(rows):
        target = E[h] + R[r]
        dists = np.linalg.norm(E - target, axis=1)
        ranks[i] = 1 + int(np.sum(dists < dists[t]))
    return ranks


def mean_reciprocal_rank(table: EmbeddingTable, typed_triples) -> float:
    ranks = rank_objects(table, typed_triples)
    if len(ranks) == 0:
        raise ValueError("no transitive triples to rank")
    return float(np.mean(1.0 / ranks))


class TranslationEmbedding(BaseEstimator):
    """Estimator wrapper around translation-embedding training.

    fit() learns a table from typed triples; transform() maps typed verbs
    (or signature strings) to their learned vectors.
    """

    def __init__(self, dimension=300, epochs=100, margin=1.0, learning_rate=0.01,
                 batch_size=512, seed=0, workers=1):
        self.dimension = dimension
        self.epochs = epochs
        self.margin = margin
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.workers = workers

    def _config(self) -> TrainConfig:
        return TrainConfig(dimension=self.dimension, epochs=self.epochs,
                           margin=self.margin, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, seed=self.seed)

    def fit(self, typed_triples, intransitive_triples=()):
        self.table_, self.loss_trace_ = train_embeddings(
            typed_triples, intransitive_triples, self._config(),
            workers=self.workers)
        return self

    def transform(self, typed_verbs) -> np.ndarray:
        if not hasattr(self, "table_"):
            raise ValueError("estimator is not fitted; call fit first")
        out = np.zeros((len(typed_verbs), self.table_.dimension))
        missing = []
        for i, tv in enumerate(typed_verbs):
            sig = tv.signature() if isinstance(tv, TypedVerb) else str(tv)
            if self.table_.has(KIND_RELATION, sig):
                out[i] = self.table_.relation(sig)
            else:
                missing.append(sig)
        if missing:
            raise ValueError(f"no embedding for {len(missing)} typed verb(s): "
                             + ", ".join(missing[:5]))
        return out

    def score_triples(self, typed_triples) -> np.ndarray:
        """Translation distance of each transitive triple (lower is better)."""
        if not hasattr(self, "table_"):
            raise ValueError("estimator is not fitted; call fit first")
        table = self.table_
        out = np.zeros(len(typed_triples))
        for i, row in enumerate(typed_triples):
            if row.object_np is None:
                raise ValueError(f"triple {i} has no object NP to score")
            head = table.entity(row.subject_np)
            rel = table.relation(row.typed_verb.signature())
            out[i] = l2_distance(head + rel, table.entity(row.object_np))
        return out
