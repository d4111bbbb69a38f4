"""Ranking evaluation with time-aware filtering.

Every evaluation fact yields two link-prediction queries: the object
query and the subject query converted through the reciprocal relation.
Candidates that are other true objects of the same (subject, relation,
timestamp) anywhere in the dataset are filtered out before ranking; ties
with the answer count against the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .kgdata import TkgDataset

BUCKETS = ("zero_shot", "seen", "overall")
BUCKET_TITLES = {"zero_shot": "Zero-Shot Relations", "seen": "Seen Relations",
                 "overall": "Overall"}


@dataclass(frozen=True)
class LpQuery:
    s: int
    r: int
    t: int
    answer: int
    origin: str            # "valid" | "test"
    direction: str         # "object" | "subject"


def rank_query(scores: np.ndarray, answer: int, filter_ids=()) -> int:
    """Rank of the answer among unfiltered candidates, pessimistic on ties.

    rank = 1 + |{better unfiltered}| + |{equal unfiltered, != answer}|.
    """
    filter_ids = np.asarray(list(filter_ids), dtype=np.int64)
    if filter_ids.size and (filter_ids == answer).any():
        raise ValueError("answer present in its own filter set")
    answer_score = scores[answer]
    mask = np.ones(scores.shape[0], dtype=bool)
    if filter_ids.size:
        mask[filter_ids] = False
    mask[answer] = False
    others = scores[mask]
    return int(1 + (others > answer_score).sum() + (others == answer_score).sum())


def build_queries(dataset: TkgDataset, selector: str) -> list[LpQuery]:
    if selector not in ("valid", "test", "both"):
        raise DataError(f"unknown split selector {selector!r}")
    parts = []
    if selector in ("valid", "both"):
        parts.append(("valid", dataset.valid))
    if selector in ("test", "both"):
        parts.append(("test", dataset.test))
    rels = dataset.relations
    queries = []
    for origin, split in parts:
        if not split:
            raise DataError(f"cannot evaluate empty {origin} split")
        for q in split:
            queries.append(LpQuery(q.s, q.r, q.t, q.o, origin, "object"))
            queries.append(LpQuery(q.o, rels.reciprocal(q.r), q.t, q.s, origin,
                                   "subject"))
    return queries


def time_aware_filters(dataset: TkgDataset) -> dict:
    """(s, r, t) -> all true objects across train/valid/test, both
    directions."""
    true_objects: dict[tuple[int, int, int], set[int]] = {}
    rels = dataset.relations
    for split in (dataset.train, dataset.valid, dataset.test):
        for q in split:
            true_objects.setdefault((q.s, q.r, q.t), set()).add(q.o)
            true_objects.setdefault((q.o, rels.reciprocal(q.r), q.t), set()).add(q.s)
    return true_objects


@dataclass
class RankReport:
    ranks: dict[str, list[int]] = field(default_factory=lambda: {b: [] for b in BUCKETS})

    def add(self, bucket: str, rank: int) -> None:
        self.ranks[bucket].append(rank)
        self.ranks["overall"].append(rank)

    def _metrics(self, ranks: list[int]) -> dict:
        if not ranks:
            return {"mrr": 0.0, "hits1": 0.0, "hits3": 0.0, "hits10": 0.0, "count": 0}
        arr = np.asarray(ranks, dtype=np.float64)
        return {
            "mrr": float((1.0 / arr).mean()),
            "hits1": float((arr <= 1).mean()),
            "hits3": float((arr <= 3).mean()),
            "hits10": float((arr <= 10).mean()),
            "count": len(ranks),
        }

    @property
    def zero_shot(self) -> dict:
        return self._metrics(self.ranks["zero_shot"])

    @property
    def seen(self) -> dict:
        return self._metrics(self.ranks["seen"])

    @property
    def overall(self) -> dict:
        return self._metrics(self.ranks["overall"])

    def bucket(self, name: str) -> dict:
        return self._metrics(self.ranks[name])

    def to_json(self) -> str:
        doc = {name: self.bucket(name) for name in BUCKETS}
        doc["ranks"] = {name: self.ranks[name] for name in BUCKETS}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RankReport":
        doc = json.loads(text)
        report = cls()
        report.ranks = {name: [int(r) for r in doc["ranks"][name]] for name in BUCKETS}
        return report

    def table(self) -> str:
        cols = [BUCKET_TITLES[b] for b in BUCKETS]
        stats = {b: self.bucket(b) for b in BUCKETS}
        width = max(len(c) for c in cols) + 2
        lines = ["Metric".ljust(9) + "".join(c.rjust(width) for c in cols)]
        for key, label in (("mrr", "MRR"), ("hits1", "Hits@1"),
                           ("hits3", "Hits@3"), ("hits10", "Hits@10")):
            row = label.ljust(9)
            row += "".join(f"{stats[b][key]:.3f}".rjust(width) for b in BUCKETS)
            lines.append(row)
        lines.append("Queries".ljust(9)
                     + "".join(str(stats[b]["count"]).rjust(width) for b in BUCKETS))
        return "\n".join(lines) + "\n"


def evaluate_queries(model, dataset: TkgDataset, queries: list[LpQuery],
                     chunk: int = 1024) -> RankReport:
    filters = time_aware_filters(dataset)
    rels = dataset.relations
    report = RankReport()
    for lo in range(0, len(queries), chunk):
        part = queries[lo:lo + chunk]
        scores = model.score_batch([q.s for q in part], [q.r for q in part])
        for row, q in zip(scores, part):
            filter_ids = filters.get((q.s, q.r, q.t), set()) - {q.answer}
            rank = rank_query(row, q.answer, sorted(filter_ids))
            report.add("zero_shot" if rels.is_unseen(q.r) else "seen", rank)
    return report


def evaluate_split(model, dataset: TkgDataset, selector: str) -> RankReport:
    """Rank every query of the selected split(s); "overall" pools all
    queries count-weighted."""
    return evaluate_queries(model, dataset, build_queries(dataset, selector))


def emit_report(report: RankReport, fmt: str = "json") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "table":
        return report.table()
    raise DataError(f"unknown report format {fmt!r}")
