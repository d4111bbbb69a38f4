"""Temporal-KG data model: vocabularies, quadruple files, reciprocal
relations, per-timestamp snapshots, and entity-pair relation histories.

Quadruple files are UTF-8, LF-terminated, four tab-separated fields
(subject, relation, object, timestamp). Timestamps may be integers or ISO
dates; they are compressed to contiguous indices in chronological order
with the raw labels kept in a sidecar map.

All structures are immutable after construction and safe to share
read-only across workers.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace
from datetime import date, datetime

from .errors import DataError, ParseError

RECIPROCAL_PREFIX = "Inversed "


@dataclass(frozen=True, order=True)
class Quadruple:
    s: int
    r: int
    o: int
    t: int


class Vocab:
    """Dense label <-> id map, first-seen order."""

    def __init__(self, labels: list[str] | None = None):
        self.labels: list[str] = list(labels) if labels else []
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self._index) != len(self.labels):
            raise DataError("duplicate labels in vocabulary")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def id_of(self, label: str) -> int:
        return self._index[label]

    def label_of(self, idx: int) -> str:
        return self.labels[idx]

    def intern(self, label: str) -> int:
        if label in self._index:
            return self._index[label]
        self._index[label] = len(self.labels)
        self.labels.append(label)
        return len(self.labels) - 1


class RelationVocab:
    """Relation labels plus reciprocal pairing and seen/unseen flags.

    Reciprocal ids live at base_id + base_count; their text is the
    "Inversed " prefix on the base text. A reciprocal's reciprocal is
    undefined. Seen/unseen status is shared within each (r, r^-1) pair.
    """

    def __init__(self, labels: list[str], unseen: frozenset[int] = frozenset(),
                 has_reciprocals: bool = False):
        self.base = Vocab(labels)
        self.unseen = frozenset(unseen)
        self.has_reciprocals = has_reciprocals
        bad = [u for u in self.unseen if not 0 <= u < len(self.base)]
        if bad:
            raise DataError(f"unseen flags for unknown relation ids {sorted(bad)}")

    @property
    def base_count(self) -> int:
        return len(self.base)

    def __len__(self) -> int:
        return 2 * len(self.base) if self.has_reciprocals else len(self.base)

    def is_reciprocal_id(self, r: int) -> bool:
        return self.has_reciprocals and r >= self.base_count

    def base_of(self, r: int) -> int:
        return r - self.base_count if self.is_reciprocal_id(r) else r

    def reciprocal(self, r: int) -> int:
        if not self.has_reciprocals:
            raise DataError("reciprocal relations not added")
        if self.is_reciprocal_id(r):
            raise DataError(f"relation {r} is already a reciprocal")
        return r + self.base_count

    def text(self, r: int) -> str:
        if self.is_reciprocal_id(r):
            return RECIPROCAL_PREFIX + self.base.label_of(r - self.base_count)
        return self.base.label_of(r)

    def is_unseen(self, r: int) -> bool:
        return self.base_of(r) in self.unseen

    def seen_ids(self) -> list[int]:
        return [r for r in range(self.base_count) if r not in self.unseen]

    def all_ids(self) -> list[int]:
        return list(range(len(self)))

    def with_reciprocals(self) -> "RelationVocab":
        if self.has_reciprocals:
            raise DataError("reciprocal relations already present")
        return RelationVocab(self.base.labels, self.unseen, has_reciprocals=True)

    def with_unseen(self, unseen) -> "RelationVocab":
        return RelationVocab(self.base.labels, frozenset(unseen), self.has_reciprocals)


@dataclass(frozen=True)
class TkgDataset:
    entities: Vocab
    relations: RelationVocab
    timestamps: list[str]            # index -> raw label
    train: tuple[Quadruple, ...]
    valid: tuple[Quadruple, ...] = ()
    test: tuple[Quadruple, ...] = ()

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_timestamps(self) -> int:
        return len(self.timestamps)

    @property
    def t_train_max(self) -> int:
        return max(q.t for q in self.train)

    @property
    def t_eval_min(self) -> int:
        return min(q.t for q in self.valid + self.test)

    def validate(self) -> None:
        n_e, n_r, n_t = len(self.entities), len(self.relations), len(self.timestamps)
        for split in (self.train, self.valid, self.test):
            for q in split:
                if not (0 <= q.s < n_e and 0 <= q.o < n_e):
                    raise DataError(f"entity id out of range in {q}")
                if not 0 <= q.r < n_r:
                    raise DataError(f"relation id out of range in {q}")
                if not 0 <= q.t < n_t:
                    raise DataError(f"timestamp out of range in {q}")
        if self.valid or self.test:
            if self.t_train_max >= self.t_eval_min:
                raise DataError("training timeline overlaps evaluation timeline")
            train_entities = {q.s for q in self.train} | {q.o for q in self.train}
            for q in self.valid + self.test:
                if q.s not in train_entities or q.o not in train_entities:
                    raise DataError(f"evaluation fact {q} uses entity unseen in training")
        for q in self.train:
            if self.relations.is_unseen(q.r):
                raise DataError(f"training fact {q} carries an unseen relation")


def add_reciprocals(dataset: TkgDataset) -> TkgDataset:
    """Double the relation vocabulary with query-time reciprocals.

    Facts are not duplicated; reciprocal quadruples are materialized at
    query/batch conversion time.
    """
    return replace(dataset, relations=dataset.relations.with_reciprocals())


def reciprocal_view(q: Quadruple, relations: RelationVocab) -> Quadruple:
    return Quadruple(q.o, relations.reciprocal(q.r), q.s, q.t)


# ---------------------------------------------------------------------------
# parsing / serialization


def _timestamp_key(label: str):
    try:
        return (0, int(label), "")
    except ValueError:
        pass
    try:
        d = datetime.fromisoformat(label)
        return (1, d.toordinal() * 86400 + d.hour * 3600 + d.minute * 60 + d.second, "")
    except ValueError:
        pass
    try:
        return (1, date.fromisoformat(label).toordinal() * 86400, "")
    except ValueError:
        return None


@dataclass
class RawFacts:
    """Parsed facts before timestamp compression."""
    rows: list[tuple[int, int, int, str]]
    entities: Vocab
    relations_labels: list[str]


def parse_quadruple_lines(lines, entities: Vocab | None = None,
                          relations: Vocab | None = None,
                          allow_new: bool = True) -> RawFacts:
    """Parse tab-separated quadruple lines into id-indexed rows.

    Exact duplicate quadruples collapse to the first occurrence. With
    allow_new=False, labels outside the provided vocabularies are errors.
    """
    entities = entities if entities is not None else Vocab()
    relations = relations if relations is not None else Vocab()
    rows: list[tuple[int, int, int, str]] = []
    seen: set[tuple[str, str, str, str]] = set()
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n").rstrip("\r")
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(fields)}", line_no)
        subj, rel, obj, stamp = fields
        if not all(fields):
            raise ParseError("empty field", line_no)
        if _timestamp_key(stamp) is None:
            raise ParseError(f"unmappable timestamp {stamp!r}", line_no)
        key = (subj, rel, obj, stamp)
        if key in seen:
            continue
        seen.add(key)
        if allow_new:
            s, r, o = entities.intern(subj), relations.intern(rel), entities.intern(obj)
        else:
            try:
                s, r, o = entities.id_of(subj), relations.id_of(rel), entities.id_of(obj)
            except KeyError as exc:
                raise ParseError(f"label {exc.args[0]!r} not in vocabulary", line_no) from None
        rows.append((s, r, o, stamp))
    return RawFacts(rows, entities, relations.labels)


def compress_timestamps(rows, timeline: list[str] | None = None):
    """Map raw timestamp labels to dense chronological indices.

    Returns (facts, timeline). A provided timeline fixes the mapping;
    otherwise it is derived from the labels present.
    """
    if timeline is None:
        uniq = {stamp for _, _, _, stamp in rows}
        keys = {s: _timestamp_key(s) for s in uniq}
        if len({k[0] for k in keys.values()}) > 1:
            raise DataError("mixed integer and date timestamps are not orderable")
        timeline = sorted(uniq, key=lambda s: keys[s])
    index = {lab: i for i, lab in enumerate(timeline)}
    facts = []
    for s, r, o, stamp in rows:
        if stamp not in index:
            raise DataError(f"timestamp {stamp!r} not in declared timeline")
        facts.append(Quadruple(s, r, o, index[stamp]))
    return facts, timeline


def parse_quadruples(lines) -> tuple[list[Quadruple], Vocab, Vocab, list[str]]:
    """One-shot parse: returns (facts, entity vocab, relation vocab, timeline)."""
    raw = parse_quadruple_lines(lines)
    facts, timeline = compress_timestamps(raw.rows)
    return facts, raw.entities, Vocab(raw.relations_labels), timeline


def quadruple_lines(facts, entities: Vocab, relations: RelationVocab | Vocab,
                    timeline: list[str]):
    text = relations.text if isinstance(relations, RelationVocab) else relations.label_of
    for q in facts:
        yield f"{entities.label_of(q.s)}\t{text(q.r)}\t{entities.label_of(q.o)}\t{timeline[q.t]}\n"


def write_quadruples(path, facts, entities, relations, timeline) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(quadruple_lines(facts, entities, relations, timeline))


def write_id_tsv(path, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, lab in enumerate(labels):
            fh.write(f"{i}\t{lab}\n")


def read_id_tsv(path) -> list[str]:
    labels = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise ParseError("expected `id\\tlabel`", line_no)
            if int(fields[0]) != line_no - 1:
                raise ParseError(f"non-contiguous id {fields[0]}", line_no)
            labels.append(fields[1])
    return labels


def save_dataset(dataset: TkgDataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_id_tsv(os.path.join(out_dir, "entities.tsv"), dataset.entities.labels)
    write_id_tsv(os.path.join(out_dir, "relations.tsv"), dataset.relations.base.labels)
    write_id_tsv(os.path.join(out_dir, "timestamps.tsv"), dataset.timestamps)
    for name, split in (("train", dataset.train), ("valid", dataset.valid),
                        ("test", dataset.test)):
        write_quadruples(os.path.join(out_dir, f"{name}.tsv"), split,
                         dataset.entities, dataset.relations.base, dataset.timestamps)
    zero = sorted(dataset.relations.unseen)
    with open(os.path.join(out_dir, "relations_zero.tsv"), "w", encoding="utf-8",
              newline="\n") as fh:
        for r in zero:
            fh.write(f"{r}\t{dataset.relations.base.label_of(r)}\n")


def load_dataset(data_dir: str) -> TkgDataset:
    entities = Vocab(read_id_tsv(os.path.join(data_dir, "entities.tsv")))
    rel_labels = read_id_tsv(os.path.join(data_dir, "relations.tsv"))
    timeline = read_id_tsv(os.path.join(data_dir, "timestamps.tsv"))
    unseen = set()
    zero_path = os.path.join(data_dir, "relations_zero.tsv")
    if os.path.exists(zero_path):
        with open(zero_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    unseen.add(int(line.split("\t")[0]))
    relations = RelationVocab(rel_labels, frozenset(unseen))
    splits = {}
    for name in ("train", "valid", "test"):
        path = os.path.join(data_dir, f"{name}.tsv")
        if not os.path.exists(path):
            splits[name] = ()
            continue
        with open(path, encoding="utf-8") as fh:
            raw = parse_quadruple_lines(fh, entities=entities,
                                        relations=Vocab(rel_labels), allow_new=False)
        facts, _ = compress_timestamps(raw.rows, timeline=timeline)
        splits[name] = tuple(facts)
    ds = TkgDataset(entities, relations, timeline, splits["train"],
                    splits["valid"], splits["test"])
    ds.validate()
    return ds


def dataset_checksum(dataset: TkgDataset) -> str:
    h = hashlib.sha256()
    for chunk in (dataset.entities.labels, dataset.relations.base.labels,
                  dataset.timestamps, sorted(dataset.relations.unseen)):
        h.update(repr(chunk).encode("utf-8"))
    for split in (dataset.train, dataset.valid, dataset.test):
        for q in split:
            h.update(f"{q.s},{q.r},{q.o},{q.t};".encode("ascii"))
    return h.hexdigest()


# ---------------------------------------------------------------------------
# snapshots and pair histories


@dataclass(frozen=True)
class SnapshotIndex:
    """Facts grouped by timestamp, plus incoming-edge adjacency and an
    ordered-pair event index for history lookups."""

    by_time: tuple[tuple[Quadruple, ...], ...]
    incoming: tuple[dict, ...]                 # t -> {entity: [(src, rel), ...]}
    pair_events: dict                          # (s, o) -> [(t, rel), ...] as stored

    @property
    def n_timestamps(self) -> int:
        return len(self.by_time)

    def at(self, t: int) -> tuple[Quadruple, ...]:
        return self.by_time[t]


def build_snapshots(facts, n_timestamps: int | None = None) -> SnapshotIndex:
    facts = list(facts)
    if n_timestamps is None:
        n_timestamps = max((q.t for q in facts), default=-1) + 1
    by_time: list[list[Quadruple]] = [[] for _ in range(n_timestamps)]
    incoming: list[dict] = [{} for _ in range(n_timestamps)]
    pair_events: dict = {}
    for q in facts:
        if not 0 <= q.t < n_timestamps:
            raise DataError(f"timestamp {q.t} outside declared timeline")
        by_time[q.t].append(q)
        incoming[q.t].setdefault(q.o, []).append((q.s, q.r))
        pair_events.setdefault((q.s, q.o), []).append((q.t, q.r))
    return SnapshotIndex(tuple(tuple(s) for s in by_time), tuple(incoming), pair_events)


@dataclass(frozen=True)
class PairHistory:
    """Relation sets between one ordered entity pair per timestamp.

    Covers [start, start + len), ending at the query horizon t - 1. Facts
    stored in the reverse orientation contribute their reciprocal
    relation, so the history is direction-complete for the ordered pair.
    """

    start: int
    rel_sets: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.rel_sets)

    @property
    def is_empty(self) -> bool:
        return all(not s for s in self.rel_sets)


def pair_history(index: SnapshotIndex, relations: RelationVocab,
                 s: int, o: int, t: int, max_len: int) -> PairHistory:
    """Relation sets linking (s, o) at each timestamp in [0, t-1],
    truncated to the most recent max_len steps."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    start = max(0, t - max_len)
    length = t - start
    sets: list[set[int]] = [set() for _ in range(length)]
    for ti, r in index.pair_events.get((s, o), ()):
        if start <= ti < t:
            sets[ti - start].add(r)
    for ti, r in index.pair_events.get((o, s), ()):
        if start <= ti < t and s != o:
            sets[ti - start].add(relations.reciprocal(r))
    return PairHistory(start, tuple(frozenset(x) for x in sets))
