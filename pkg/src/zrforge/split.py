"""Zero-shot dataset construction: temporal split, unseen-entity pruning,
relation-frequency thresholding, and the final train/valid/test partition.

All functions are pure over immutable inputs and deterministic.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

from .errors import DataError
from .kgdata import RelationVocab, TkgDataset, Vocab


@dataclass(frozen=True)
class SplitConfig:
    split_timestamp: int         # first evaluation timestamp
    freq_threshold: int

    def validate(self, n_timestamps: int) -> None:
        if not 0 < self.split_timestamp < n_timestamps:
            raise DataError(f"split timestamp {self.split_timestamp} not strictly "
                            f"inside timeline [0, {n_timestamps})")
        if self.freq_threshold < 1:
            raise DataError("frequency threshold must be >= 1")


def temporal_split(facts, split_timestamp: int):
    """Split facts into (train side, eval side) at a timestamp boundary."""
    train = [q for q in facts if q.t < split_timestamp]
    evals = [q for q in facts if q.t >= split_timestamp]
    if not train or not evals:
        side = "training" if not train else "evaluation"
        raise DataError(f"temporal split at {split_timestamp} leaves the {side} side empty")
    return train, evals


def split_timestamp_for_fraction(facts, train_fraction: float) -> int:
    """Smallest timestamp whose cut puts at least the requested fraction of
    facts on the training side."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train fraction must be in (0, 1)")
    counts = Counter(q.t for q in facts)
    total = sum(counts.values())
    running = 0
    for t in sorted(counts):
        running += counts[t]
        if running / total >= train_fraction:
            return t + 1
    return max(counts) + 1


def prune_unseen_entities(train_side, eval_side):
    """Drop evaluation facts whose entities never occur on the train side."""
    known = {q.s for q in train_side} | {q.o for q in train_side}
    return [q for q in eval_side if q.s in known and q.o in known]


def relation_frequencies(eval_side, n_relations: int) -> list[int]:
    freqs = [0] * n_relations
    for q in eval_side:
        freqs[q.r] += 1
    return freqs


def zero_shot_partition(train_side, eval_side, freq_threshold: int,
                        n_relations: int) -> tuple[set[int], set[int]]:
    """Partition relations into (seen, unseen) by eval-split frequency.

    A relation is zero-shot when its eval frequency is positive and below
    the threshold. Relations at or above the threshold that never occur
    on the train side cannot be "seen in training" and are reclassified
    as zero-shot.
    """
    freqs = relation_frequencies(eval_side, n_relations)
    in_train = {q.r for q in train_side}
    unseen = set()
    for r in range(n_relations):
        if 0 < freqs[r] < freq_threshold:
            unseen.add(r)
        elif freqs[r] >= freq_threshold and r not in in_train:
            unseen.add(r)
    seen = set(range(n_relations)) - unseen
    return seen, unseen


def finalize(train_side, eval_side, unseen: set[int], entities: Vocab,
             relation_labels: list[str], timeline: list[str]) -> TkgDataset:
    """Assemble the dataset: drop zero-shot facts from train, route
    zero-shot eval facts to test and the rest to valid.

    Dropping zero-shot facts can remove entities from the training side,
    so the eval side is pruned once more against the final training
    entity set."""
    g_train = tuple(q for q in train_side if q.r not in unseen)
    eval_side = prune_unseen_entities(g_train, eval_side)
    g_test = tuple(q for q in eval_side if q.r in unseen)
    g_valid = tuple(q for q in eval_side if q.r not in unseen)
    for name, split in (("train", g_train), ("valid", g_valid), ("test", g_test)):
        if not split:
            raise DataError(f"finalize produced an empty {name} split")
    relations = RelationVocab(relation_labels, frozenset(unseen))
    ds = TkgDataset(entities, relations, timeline, g_train, g_valid, g_test)
    ds.validate()
    return ds


def build_zero_shot_dataset(facts, entities: Vocab, relation_labels: list[str],
                            timeline: list[str], config: SplitConfig) -> TkgDataset:
    """Run the full four-step construction over parsed facts."""
    config.validate(len(timeline))
    train_side, eval_side = temporal_split(facts, config.split_timestamp)
    eval_side = prune_unseen_entities(train_side, eval_side)
    if not eval_side:
        raise DataError("no evaluation facts survive unseen-entity pruning")
    _, unseen = zero_shot_partition(train_side, eval_side, config.freq_threshold,
                                    len(relation_labels))
    return finalize(train_side, eval_side, unseen, entities, relation_labels, timeline)


def dataset_stats(ds: TkgDataset) -> dict:
    """Size summary in the shape of the benchmark-table columns."""
    train_ts = {q.t for q in ds.train}
    eval_ts = {q.t for q in ds.valid + ds.test}
    return {
        "n_entities": len(ds.entities),
        "n_relations": ds.relations.base_count,
        "n_train_timestamps": len(train_ts),
        "n_eval_timestamps": len(eval_ts),
        "n_seen_relations": ds.relations.base_count - len(ds.relations.unseen),
        "n_unseen_relations": len(ds.relations.unseen),
        "n_train": len(ds.train),
        "n_valid": len(ds.valid),
        "n_test": len(ds.test),
    }


def stats_json(ds: TkgDataset) -> str:
    return json.dumps(dataset_stats(ds), indent=2, sort_keys=True) + "\n"
