"""Deterministic synthetic TKGs with planted relation clusters and
temporal cluster-cycle scripts.

Relations are grouped into semantic clusters; each entity pair follows a
cyclic script over clusters, emitting (with probability p per step) one
relation drawn from the script's current cluster. The last
`holdout_per_cluster` relations of every cluster are reserved: they are
never emitted during training steps, only (at reduced rate) during
evaluation steps, so a frequency threshold between the holdout and
regular evaluation counts recovers exactly the planted zero-shot set.

Relation texts share a cluster token ("cluster3 relation1"), giving a
text encoder a handle on the planted semantics. Generation is
single-threaded and byte-reproducible from the seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from .errors import DataError
from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_entities: int = 200
    n_clusters: int = 6
    relations_per_cluster: int = 4
    holdout_per_cluster: int = 1
    scripts: tuple[tuple[int, ...], ...] | None = None   # default: period-3 cycles
    n_pairs: int = 240
    pairs_per_subject: int = 3
    train_steps: int = 60
    eval_steps: int = 20
    emit_prob: float = 0.55
    holdout_emit_prob: float = 0.12  # share of eval emissions routed to holdouts

    def resolved_scripts(self) -> tuple[tuple[int, ...], ...]:
        if self.scripts is not None:
            return self.scripts
        c = self.n_clusters
        return tuple(tuple((k + i) % c for i in range(min(2, c))) for k in range(c))

    def validate(self) -> None:
        if self.n_clusters * self.relations_per_cluster < 2:
            raise DataError("need at least two relations")
        if not 0 <= self.holdout_per_cluster < self.relations_per_cluster:
            raise DataError("holdout_per_cluster must be < relations_per_cluster")
        if not 0.0 < self.emit_prob <= 1.0:
            raise DataError("emission probability must be in (0, 1]")
        if self.n_entities < 2 or self.n_pairs < 1 or self.train_steps < 1:
            raise DataError("degenerate size configuration")
        if self.pairs_per_subject < 1 or self.pairs_per_subject > len(self.resolved_scripts()):
            raise DataError("pairs_per_subject must be in [1, n_scripts]")
        for sc in self.resolved_scripts():
            if not sc or any(not 0 <= c < self.n_clusters for c in sc):
                raise DataError(f"script {sc} references unknown cluster")
        if self.holdout_per_cluster > 0:
            if self.eval_steps < 1 or self.holdout_emit_prob <= 0.0:
                raise DataError("held-out relations can never appear in evaluation "
                                "data under this configuration")


@dataclass
class PlantedTruth:
    relation_clusters: dict[str, int]
    holdout_relations: list[str]
    scripts: list[list[int]]
    pairs: list[dict]                     # {s, o, script_id, expected_clusters}
    eval_frequencies: dict[str, int]
    suggested_threshold: int
    max_holdout_eval_freq: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def relation_label(cluster: int, j: int) -> str:
    return f"cluster{cluster} relation{j}"


def generate(config: SynthConfig):
    """Build the synthetic TKG.

    Returns (rows, relation_labels, truth) where rows are
    (subject_label, relation_label, object_label, timestamp_label) tuples
    in emission order.
    """
    config.validate()
    m, h = config.relations_per_cluster, config.holdout_per_cluster
    clusters = list(range(config.n_clusters))
    relation_labels = [relation_label(c, j) for c in clusters for j in range(m)]
    seen_of = {c: [relation_label(c, j) for j in range(m - h)] for c in clusters}
    held_of = {c: [relation_label(c, j) for j in range(m - h, m)] for c in clusters}
    scripts = config.resolved_scripts()

    pair_rng = SplitMix64(derive_seed(config.seed, "synth", "pairs"))
    entity_labels = [f"e{i}" for i in range(config.n_entities)]
    shuffled = list(entity_labels)
    pair_rng.shuffle(shuffled)
    n_subjects = math.ceil(config.n_pairs / config.pairs_per_subject)
    if n_subjects > config.n_entities:
        raise DataError("not enough entities for the requested pair layout")
    subjects = shuffled[:n_subjects]

    # same-subject pairs take stride-spaced scripts so their cluster sets
    # are disjoint (with the default period-2 cycles): the query relation's
    # cluster then identifies which partner answers, which is the planted
    # zero-shot signal
    stride = max(1, len(scripts) // config.pairs_per_subject)
    pairs = []
    used_objects: dict[str, set[str]] = {s: set() for s in subjects}
    for i in range(config.n_pairs):
        k, j = divmod(i, config.pairs_per_subject)
        s = subjects[k]
        script_id = (k + j * stride) % len(scripts)
        while True:
            o = pair_rng.choice(entity_labels)
            if o != s and o not in used_objects[s]:
                break
        used_objects[s].add(o)
        pairs.append((s, o, script_id))

    total_steps = config.train_steps + config.eval_steps
    emit_rng = SplitMix64(derive_seed(config.seed, "synth", "emit"))
    rows: list[tuple[str, str, str, str]] = []
    eval_freq = {lab: 0 for lab in relation_labels}
    for t in range(total_steps):
        stamp = str(t)
        in_eval = t >= config.train_steps
        for s, o, script_id in pairs:
            if emit_rng.uniform() >= config.emit_prob:
                continue
            script = scripts[script_id]
            c = script[t % len(script)]
            if in_eval and h > 0 and emit_rng.uniform() < config.holdout_emit_prob:
                rel = emit_rng.choice(held_of[c])
            else:
                rel = emit_rng.choice(seen_of[c])
            rows.append((s, rel, o, stamp))
            if in_eval:
                eval_freq[rel] += 1

    holdouts = [lab for c in clusters for lab in held_of[c]]
    if h > 0:
        silent = [lab for lab in holdouts if eval_freq[lab] == 0]
        if silent:
            raise DataError(f"held-out relations never emitted in evaluation "
                            f"steps: {silent}; increase eval_steps or n_pairs")

    seen_eval = [eval_freq[lab] for c in clusters for lab in seen_of[c]]
    truth = PlantedTruth(
        relation_clusters={relation_label(c, j): c for c in clusters for j in range(m)},
        holdout_relations=holdouts,
        scripts=[list(sc) for sc in scripts],
        pairs=[{
            "s": s, "o": o, "script_id": sid,
            "expected_clusters": [scripts[sid][t % len(scripts[sid])]
                                  for t in range(total_steps)],
        } for s, o, sid in pairs],
        eval_frequencies=eval_freq,
        suggested_threshold=min((f for f in seen_eval if f > 0), default=1),
        max_holdout_eval_freq=max((eval_freq[lab] for lab in holdouts), default=0),
    )
    return rows, relation_labels, truth


def write_outputs(out_dir: str, rows, relation_labels, truth: PlantedTruth) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "quadruples.tsv"), "w", encoding="utf-8",
              newline="\n") as fh:
        for s, r, o, t in rows:
            fh.write(f"{s}\t{r}\t{o}\t{t}\n")
    with open(os.path.join(out_dir, "relations.tsv"), "w", encoding="utf-8",
              newline="\n") as fh:
        for i, lab in enumerate(relation_labels):
            fh.write(f"{i}\t{lab}\n")
    with open(os.path.join(out_dir, "planted.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(truth.to_json())
