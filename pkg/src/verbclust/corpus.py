"""Triple corpora, selectional association scores, and typed-verb construction.

A corpus is a flat file of (subject, verb [+preposition], object, count)
kernels. Subjects and objects are noun phrases; a category map assigns each
noun phrase a list of semantic categories. From the co-occurrence counts we
estimate, per verb and argument slot, Resnik-style selectional association
scores, and use them to pick one category per argument. The result is a
collection of typed triples whose relation is a *typed verb* such as
``marry(person,person)`` or ``sleep in(person,location)``.
"""

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import DataError

logger = logging.getLogger(__name__)

SLOT_SUBJECT = "subject"
SLOT_OBJECT = "object"
SLOTS = (SLOT_SUBJECT, SLOT_OBJECT)

# Below this, a verb-slot's category distribution is treated as matching the
# prior exactly and all its associations are defined as 0.
STRENGTH_EPS = 1e-12

_NAME_RE = re.compile(r"^[^\s(),]+$")
_SIGNATURE_RE = re.compile(
    r"^(?P<verb>[^\s(),]+)(?: (?P<prep>[^\s(),]+))?"
    r"\((?P<ts>[^\s(),]+)(?:,(?P<to>[^\s(),]+))?\)$"
)


class ParseError(NamedTuple):
    line: int
    message: str


@dataclass(frozen=True)
class Triple:
    """One observed (subject, verb [+prep], object) kernel with a count."""

    subject_np: str
    verb: str
    preposition: str | None
    object_np: str | None
    count: int

    def __post_init__(self):
        if not self.verb:
            raise ValueError("triple verb must be nonempty")
        if not self.subject_np:
            raise ValueError("triple subject must be nonempty")
        if self.count < 1:
            raise ValueError(f"triple count must be >= 1, got {self.count}")
        if self.preposition is not None and self.object_np is None:
            raise ValueError("a preposition implies a prepositional object")


@dataclass(frozen=True)
class TypedVerb:
    """A verb (+ optional preposition) with typed argument slots.

    ``object_type`` is absent only for pure intransitives (no preposition,
    no object). Equality is field-wise, so each distinct signature carries
    its own embedding.
    """

    verb: str
    preposition: str | None
    subject_type: str
    object_type: str | None

    def __post_init__(self):
        for label, value in (("verb", self.verb), ("preposition", self.preposition),
                             ("subject_type", self.subject_type),
                             ("object_type", self.object_type)):
            if value is None:
                continue
            if not _NAME_RE.match(value):
                raise ValueError(
                    f"typed-verb {label} {value!r} must be nonempty and free of "
                    "whitespace, parentheses, and commas")
        if self.preposition is not None and self.object_type is None:
            raise ValueError("a typed verb with a preposition must carry an object type")

    @property
    def unit(self) -> tuple[str, str | None]:
        """The verb(+preposition) predicate unit this signature belongs to."""
        return (self.verb, self.preposition)

    def signature(self) -> str:
        head = self.verb if self.preposition is None else f"{self.verb} {self.preposition}"
        if self.object_type is None:
            return f"{head}({self.subject_type})"
        return f"{head}({self.subject_type},{self.object_type})"

    @classmethod
    def from_signature(cls, text: str) -> "TypedVerb":
        m = _SIGNATURE_RE.match(text)
        if m is None:
            raise DataError(f"malformed typed-verb signature: {text!r}")
        return cls(m.group("verb"), m.group("prep"), m.group("ts"), m.group("to"))

    def sort_key(self) -> tuple:
        return (self.verb, self.preposition or "", self.subject_type, self.object_type or "")


class TypedTriple(NamedTuple):
    """A typed verb with the noun phrases that instantiated it."""

    subject_np: str
    typed_verb: TypedVerb
    object_np: str | None
    count: int


class IntransitiveTriple(NamedTuple):
    """Training triple for a pure intransitive: (typed verb, preposition, object NP)."""

    typed_verb: TypedVerb
    preposition: str
    object_np: str
    count: int


def _clean(field: str) -> str:
    return field.strip().lower()


def load_triples(path, min_count: int = 1) -> tuple[list[Triple], list[ParseError]]:
    """Read a tab-separated triple file.

    Columns: subject, verb, preposition (may be empty), object (may be
    empty), count. Lines starting with '#' and blank lines are ignored.
    Malformed lines are collected into the returned error report instead of
    aborting the load; records with count below ``min_count`` are dropped
    silently.
    """
    path = Path(path)
    triples: list[Triple] = []
    errors: list[ParseError] = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read triples file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            errors.append(ParseError(lineno, f"expected 5 tab-separated fields, got {len(fields)}"))
            continue
        subject, verb, prep, obj, count_text = (_clean(f) for f in fields)
        try:
            count = int(count_text)
        except ValueError:
            errors.append(ParseError(lineno, f"count field {count_text!r} is not an integer"))
            continue
        try:
            triple = Triple(subject, verb, prep or None, obj or None, count)
        except ValueError as exc:
            errors.append(ParseError(lineno, str(exc)))
            continue
        if count >= min_count:
            triples.append(triple)
    return triples, errors


def load_category_map(path) -> dict[str, tuple[str, ...]]:
    """Read a noun-phrase-to-categories file (NP, then comma-separated categories).

    Category lists are deduplicated preserving order; repeated NP rows are
    merged. Rows with no categories are rejected.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read category map {path}: {exc}") from exc
    cmap: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}")
        np_, cats_text = _clean(fields[0]), fields[1]
        cats = [c for c in (_clean(c) for c in cats_text.split(",")) if c]
        if not np_ or not cats:
            raise DataError(f"{path}:{lineno}: NP and category list must be nonempty")
        seen = cmap.setdefault(np_, [])
        for c in cats:
            if c not in seen:
                seen.append(c)
    return {np_: tuple(cats) for np_, cats in cmap.items()}


def _slot_np(triple: Triple, slot: str) -> str | None:
    return triple.subject_np if slot == SLOT_SUBJECT else triple.object_np


class AssociationTable:
    """Selectional association scores per (verb unit, slot, category).

    For a verb-slot distribution P(c|v) against the slot prior P(c), the
    selectional preference strength is the KL divergence
    ``S(v) = sum_c P(c|v) * log(P(c|v) / P(c))`` and the association of one
    category is its normalized summand ``A(v,c) = P(c|v) log(P(c|v)/P(c)) / S(v)``.
    Natural log throughout. A verb-slot whose conditional matches the prior
    (strength below ``STRENGTH_EPS``) has all associations defined as 0.
    """

    def __init__(self):
        # keyed by (verb, preposition, slot)
        self._joint: dict[tuple, dict[str, float]] = {}
        self._assoc: dict[tuple, dict[str, float]] = {}
        self._strength: dict[tuple, float] = {}

    def has(self, verb: str, preposition: str | None, slot: str) -> bool:
        return (verb, preposition, slot) in self._assoc

    def keys(self) -> list[tuple]:
        return sorted(self._assoc, key=lambda k: (k[0], k[1] or "", k[2]))

    def categories(self, verb: str, preposition: str | None, slot: str) -> list[str]:
        return sorted(self._assoc.get((verb, preposition, slot), ()))

    def association(self, verb: str, preposition: str | None, slot: str, category: str) -> float:
        """Association score; 0.0 for any combination never observed."""
        return self._assoc.get((verb, preposition, slot), {}).get(category, 0.0)

    def strength(self, verb: str, preposition: str | None, slot: str) -> float:
        key = (verb, preposition, slot)
        if key not in self._strength:
            raise KeyError(f"no association data for verb {verb!r} (prep {preposition!r}) "
                           f"in slot {slot!r}")
        return self._strength[key]

    def joint_count(self, verb: str, preposition: str | None, slot: str, category: str) -> float:
        return self._joint.get((verb, preposition, slot), {}).get(category, 0.0)

    def best_category(self, verb: str, preposition: str | None, slot: str,
                      candidates: Iterable[str]) -> tuple[str, float] | None:
        """Argmax-association category among ``candidates``; ties break
        toward the lexicographically smaller name. None if no candidates."""
        best = None
        for cat in sorted(set(candidates)):
            score = self.association(verb, preposition, slot, cat)
            if best is None or score > best[1]:
                best = (cat, score)
        return best

    def _finalize(self):
        """Recompute strengths and associations from the joint counts."""
        self._assoc = {}
        self._strength = {}
        marginal: dict[str, dict[str, float]] = {s: defaultdict(float) for s in SLOTS}
        slot_total = {s: 0.0 for s in SLOTS}
        for (verb, prep, slot), cats in self._joint.items():
            for cat, w in cats.items():
                marginal[slot][cat] += w
                slot_total[slot] += w
        for key in sorted(self._joint, key=lambda k: (k[0], k[1] or "", k[2])):
            slot = key[2]
            cats = self._joint[key]
            verb_total = sum(cats[c] for c in sorted(cats))
            terms = {}
            strength = 0.0
            for cat in sorted(cats):
                p_cond = cats[cat] / verb_total
                p_prior = marginal[slot][cat] / slot_total[slot]
                term = p_cond * math.log(p_cond / p_prior)
                terms[cat] = term
                strength += term
            strength = max(strength, 0.0)
            if strength < STRENGTH_EPS:
                self._strength[key] = 0.0
                self._assoc[key] = {cat: 0.0 for cat in terms}
            else:
                self._strength[key] = strength
                self._assoc[key] = {cat: term / strength for cat, term in terms.items()}

    def save(self, path) -> None:
        """Write one row per (verb, prep, slot, category) with the weighted
        joint count, association, and the verb-slot strength."""
        lines = ["# verb\tpreposition\tslot\tcategory\tjoint_count\tassociation\tstrength"]
        for key in self.keys():
            verb, prep, slot = key
            strength = self._strength[key]
            for cat in sorted(self._joint[key]):
                lines.append("\t".join([
                    verb, prep or "", slot, cat,
                    repr(self._joint[key][cat]),
                    repr(self._assoc[key].get(cat, 0.0)),
                    repr(strength),
                ]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AssociationTable":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read association table {path}: {exc}") from exc
        table = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(fields)}")
            verb, prep, slot, cat, joint, assoc, strength = fields
            if slot not in SLOTS:
                raise DataError(f"{path}:{lineno}: unknown slot {slot!r}")
            key = (verb, prep or None, slot)
            try:
                table._joint.setdefault(key, {})[cat] = float(joint)
                table._assoc.setdefault(key, {})[cat] = float(assoc)
                table._strength[key] = float(strength)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
        return table


def resnik_associations(triples: Iterable[Triple],
                        category_map: dict[str, tuple[str, ...]]) -> AssociationTable:
    """Estimate selectional associations from a triple corpus.

    Each triple's count is distributed uniformly across its NP's listed
    categories, accumulated per (verb unit, slot, category); slot priors are
    taken over all fillers of that slot. Triples whose NP is absent from the
    category map are skipped for that slot.
    """
    table = AssociationTable()
    matched = False
    for triple in triples:
        for slot in SLOTS:
            np_ = _slot_np(triple, slot)
            if np_ is None:
                continue
            cats = category_map.get(np_)
            if not cats:
                continue
            matched = True
            key = (triple.verb, triple.preposition, slot)
            weight = triple.count / len(cats)
            bucket = table._joint.setdefault(key, {})
            for cat in cats:
                bucket[cat] = bucket.get(cat, 0.0) + weight
    if not matched:
        raise DataError("no triple argument appears in the category map; "
                        "cannot estimate selectional associations")
    table._finalize()
    return table


def build_typed_triples(triples: Iterable[Triple],
                        category_map: dict[str, tuple[str, ...]],
                        assoc: AssociationTable,
                        tau: float = 0.0,
                        min_sig_count: int = 2) -> list[TypedTriple]:
    """Assign argument categories and keep sufficiently attested signatures.

    Each filled slot gets the candidate category with maximal association
    for the triple's verb unit (ties to the lexicographically smaller name).
    A signature survives only if its chosen categories score at least
    ``tau`` on every filled slot and its aggregate count is at least
    ``min_sig_count``. Triples with an argument NP missing from the category
    map are dropped. Verb units losing all their signatures are logged.
    """
    rows: dict[tuple[str, TypedVerb, str | None], int] = {}
    sig_counts: Counter[TypedVerb] = Counter()
    seen_units: set[tuple[str, str | None]] = set()
    for triple in triples:
        seen_units.add((triple.verb, triple.preposition))
        subj_cats = category_map.get(triple.subject_np)
        if not subj_cats:
            continue
        subj_best = assoc.best_category(triple.verb, triple.preposition, SLOT_SUBJECT, subj_cats)
        if subj_best is None or subj_best[1] < tau:
            continue
        object_type = None
        if triple.object_np is not None:
            obj_cats = category_map.get(triple.object_np)
            if not obj_cats:
                continue
            obj_best = assoc.best_category(triple.verb, triple.preposition, SLOT_OBJECT, obj_cats)
            if obj_best is None or obj_best[1] < tau:
                continue
            object_type = obj_best[0]
        tv = TypedVerb(triple.verb, triple.preposition, subj_best[0], object_type)
        key = (triple.subject_np, tv, triple.object_np)
        rows[key] = rows.get(key, 0) + triple.count
        sig_counts[tv] += triple.count
    kept = {tv for tv, c in sig_counts.items() if c >= min_sig_count}
    surviving_units = {tv.unit for tv in kept}
    dropped = sorted((u for u in seen_units if u not in surviving_units),
                     key=lambda u: (u[0], u[1] or ""))
    if dropped:
        logger.warning("no surviving typed signatures for %d verb unit(s): %s",
                       len(dropped),
                       ", ".join(v if p is None else f"{v} {p}" for v, p in dropped))
    out = [TypedTriple(s, tv, o, c) for (s, tv, o), c in rows.items() if tv in kept]
    out.sort(key=lambda r: (r.typed_verb.sort_key(), r.subject_np, r.object_np or ""))
    return out


def signature_counts(typed_triples: Iterable[TypedTriple]) -> dict[TypedVerb, int]:
    counts: Counter[TypedVerb] = Counter()
    for row in typed_triples:
        counts[row.typed_verb] += row.count
    return dict(counts)


def derive_intransitive_triples(typed_triples: Iterable[TypedTriple]) -> list[IntransitiveTriple]:
    """Build translation training data for pure intransitive typed verbs.

    A verb appearing with no object at all contributes a pure intransitive
    signature ``v(t_s)``; it earns an embedding through kernels where the
    same verb takes a prepositional object, by treating the typed verb as
    the head and the preposition as the relation.
    """
    typed_triples = list(typed_triples)
    pure = {(r.typed_verb.verb, r.typed_verb.subject_type)
            for r in typed_triples if r.typed_verb.object_type is None}
    agg: dict[tuple[TypedVerb, str, str], int] = {}
    for row in typed_triples:
        tv = row.typed_verb
        if tv.preposition is None or row.object_np is None:
            continue
        if (tv.verb, tv.subject_type) not in pure:
            continue
        head = TypedVerb(tv.verb, None, tv.subject_type, None)
        key = (head, tv.preposition, row.object_np)
        agg[key] = agg.get(key, 0) + row.count
    out = [IntransitiveTriple(h, p, o, c) for (h, p, o), c in agg.items()]
    out.sort(key=lambda r: (r.typed_verb.sort_key(), r.preposition, r.object_np))
    return out


def split_for_training(typed_triples: Iterable[TypedTriple]
                       ) -> tuple[list[TypedTriple], list[IntransitiveTriple]]:
    """Separate typed triples into the transitive training set (rows with an
    object NP) and the derived intransitive set."""
    typed_triples = list(typed_triples)
    transitive = [r for r in typed_triples if r.object_np is not None]
    return transitive, derive_intransitive_triples(typed_triples)


def save_typed_triples(typed_triples: Iterable[TypedTriple], path) -> None:
    """Write the full typed-triple collection (columns: subject NP, verb,
    preposition, subject type, object type, object NP, count)."""
    lines = ["# subject_np\tverb\tpreposition\tsubject_type\tobject_type\tobject_np\tcount"]
    for row in typed_triples:
        tv = row.typed_verb
        lines.append("\t".join([
            row.subject_np, tv.verb, tv.preposition or "", tv.subject_type,
            tv.object_type or "", row.object_np or "", str(row.count),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_typed_triples(path) -> list[TypedTriple]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read typed triples {path}: {exc}") from exc
    rows: list[TypedTriple] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 7:
            raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(fields)}")
        subject, verb, prep, ts, to, obj, count_text = fields
        try:
            tv = TypedVerb(verb, prep or None, ts, to or None)
            rows.append(TypedTriple(subject, tv, obj or None, int(count_text)))
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return rows


def save_signature_counts(counts: dict[TypedVerb, int], path) -> None:
    """Write the typed-verb vocabulary (columns: verb, preposition, subject
    type, object type, count)."""
    lines = ["# verb\tpreposition\tsubject_type\tobject_type\tcount"]
    for tv in sorted(counts, key=lambda t: t.sort_key()):
        lines.append("\t".join([
            tv.verb, tv.preposition or "", tv.subject_type, tv.object_type or "",
            str(counts[tv]),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
