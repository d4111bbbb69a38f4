import io

import pytest

from zrforge.errors import DataError
from zrforge.kgdata import parse_quadruples
from zrforge.split import SplitConfig, build_zero_shot_dataset
from zrforge.synth import SynthConfig, generate, write_outputs


SMALL = SynthConfig(seed=5, n_entities=30, n_clusters=3, relations_per_cluster=3,
                    holdout_per_cluster=1, n_pairs=24, pairs_per_subject=2,
                    train_steps=16, eval_steps=12, emit_prob=0.7,
                    holdout_emit_prob=0.12)


def test_same_seed_byte_identical(tmp_path):
    for sub in ("a", "b"):
        rows, labels, truth = generate(SMALL)
        write_outputs(tmp_path / sub, rows, labels, truth)
    for name in ("quadruples.tsv", "relations.tsv", "planted.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs():
    rows_a, *_ = generate(SMALL)
    rows_b, *_ = generate(SynthConfig(**{**SMALL.__dict__, "seed": 6}))
    assert rows_a != rows_b


def test_p1_single_pair_alternates_clusters():
    config = SynthConfig(seed=1, n_entities=4, n_clusters=2,
                         relations_per_cluster=1, holdout_per_cluster=0,
                         scripts=((0, 1),), n_pairs=1, pairs_per_subject=1,
                         train_steps=4, eval_steps=0, emit_prob=1.0)
    rows, labels, truth = generate(config)
    assert len(rows) == 4
    assert [r for _, r, _, _ in rows] == ["cluster0 relation0", "cluster1 relation0",
                                          "cluster0 relation0", "cluster1 relation0"]
    assert [t for _, _, _, t in rows] == ["0", "1", "2", "3"]


def test_holdouts_never_in_train_steps():
    rows, labels, truth = generate(SMALL)
    holdouts = set(truth.holdout_relations)
    for _, rel, _, stamp in rows:
        if int(stamp) < SMALL.train_steps:
            assert rel not in holdouts


def test_relation_text_encodes_cluster():
    rows, labels, truth = generate(SMALL)
    for label, cluster in truth.relation_clusters.items():
        assert label.split()[0] == f"cluster{cluster}"


def test_split_recovers_planted_holdouts():
    rows, labels, truth = generate(SMALL)
    assert truth.max_holdout_eval_freq < truth.suggested_threshold
    lines = io.StringIO("".join(f"{s}\t{r}\t{o}\t{t}\n" for s, r, o, t in rows))
    facts, entities, relations, timeline = parse_quadruples(lines)
    ds = build_zero_shot_dataset(
        facts, entities, relations.labels, timeline,
        SplitConfig(SMALL.train_steps, truth.suggested_threshold))
    recovered = {ds.relations.base.label_of(r) for r in ds.relations.unseen}
    assert recovered == set(truth.holdout_relations)


def test_pair_scripts_unique_per_subject():
    rows, labels, truth = generate(SMALL)
    seen = set()
    for pair in truth.pairs:
        key = (pair["s"], pair["script_id"])
        assert key not in seen
        seen.add(key)


def test_expected_clusters_follow_script():
    rows, labels, truth = generate(SMALL)
    for pair in truth.pairs:
        script = truth.scripts[pair["script_id"]]
        for t, c in enumerate(pair["expected_clusters"]):
            assert c == script[t % len(script)]


def test_emitted_relation_matches_expected_cluster():
    rows, labels, truth = generate(SMALL)
    by_pair = {(p["s"], p["o"]): p for p in truth.pairs}
    for s, rel, o, stamp in rows:
        expected = by_pair[(s, o)]["expected_clusters"][int(stamp)]
        assert truth.relation_clusters[rel] == expected


def test_zero_eval_holdout_config_rejected():
    with pytest.raises(DataError, match="never appear"):
        generate(SynthConfig(**{**SMALL.__dict__, "eval_steps": 0}))
    with pytest.raises(DataError, match="never appear"):
        generate(SynthConfig(**{**SMALL.__dict__, "holdout_emit_prob": 0.0}))


def test_invalid_configs_rejected():
    with pytest.raises(DataError):
        generate(SynthConfig(**{**SMALL.__dict__, "holdout_per_cluster": 3}))
    with pytest.raises(DataError):
        generate(SynthConfig(**{**SMALL.__dict__, "emit_prob": 0.0}))


def test_truth_json_round_trip():
    import json
    _, _, truth = generate(SMALL)
    doc = json.loads(truth.to_json())
    assert doc["suggested_threshold"] == truth.suggested_threshold
    assert set(doc["holdout_relations"]) == set(truth.holdout_relations)
