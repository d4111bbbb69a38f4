import json
import os

from zrforge.cli import main
from zrforge.relsem import load_text_matrices


SYNTH_ARGS = ["synth", "--entities", "20", "--clusters", "2",
              "--relations-per-cluster", "2", "--holdout-per-cluster", "1",
              "--pairs", "12", "--pairs-per-subject", "2", "--train-steps", "10",
              "--eval-steps", "8", "--emit-prob", "0.8",
              "--holdout-emit-prob", "0.15", "--seed", "5"]

TRAIN_ARGS = ["--d", "8", "--d-w", "8", "--epochs", "2", "--seed", "3",
              "--k", "2", "--max-history-len", "6"]


def run_pipeline(root, seed="5"):
    """synth | split | embed-mock | train | eval; returns the report path."""
    synth_dir = os.path.join(root, "synth")
    data_dir = os.path.join(root, "data")
    emb = os.path.join(root, "emb.zrle")
    ckpt = os.path.join(root, "model.npz")
    report = os.path.join(root, "report.json")
    args = list(SYNTH_ARGS)
    args[args.index("--seed") + 1] = seed
    assert main(args + ["--out-dir", synth_dir]) == 0
    threshold = json.load(open(os.path.join(synth_dir, "planted.json")))[
        "suggested_threshold"]
    assert main(["split", "--input", os.path.join(synth_dir, "quadruples.tsv"),
                 "--split-ts", "10", "--threshold", str(threshold),
                 "--out-dir", data_dir]) == 0
    assert main(["embed-mock", "--relations", os.path.join(data_dir, "relations.tsv"),
                 "--out", emb, "--d-w", "8", "--seed", "5"]) == 0
    assert main(["train", "--data-dir", data_dir, "--emb-file", emb,
                 "--out", ckpt] + TRAIN_ARGS) == 0
    assert main(["eval", "--checkpoint", ckpt, "--data-dir", data_dir,
                 "--split", "both", "--out", report]) == 0
    return report


def test_synth_writes_expected_files(tmp_path):
    out = tmp_path / "s"
    assert main(SYNTH_ARGS + ["--out-dir", str(out)]) == 0
    for name in ("quadruples.tsv", "relations.tsv", "planted.json"):
        assert (out / name).exists()


def test_synth_deterministic(tmp_path):
    main(SYNTH_ARGS + ["--out-dir", str(tmp_path / "a")])
    main(SYNTH_ARGS + ["--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "quadruples.tsv").read_bytes() == \
        (tmp_path / "b" / "quadruples.tsv").read_bytes()


def test_split_outputs(tmp_path, capsys):
    synth_dir = tmp_path / "s"
    main(SYNTH_ARGS + ["--out-dir", str(synth_dir)])
    threshold = json.load(open(synth_dir / "planted.json"))["suggested_threshold"]
    data_dir = tmp_path / "d"
    assert main(["split", "--input", str(synth_dir / "quadruples.tsv"),
                 "--split-ts", "10", "--threshold", str(threshold),
                 "--out-dir", str(data_dir)]) == 0
    for name in ("train.tsv", "valid.tsv", "test.tsv", "relations_zero.tsv",
                 "entities.tsv", "relations.tsv", "timestamps.tsv", "stats.json"):
        assert (data_dir / name).exists(), name
    stats = json.load(open(data_dir / "stats.json"))
    assert stats["n_train"] > 0 and stats["n_test"] > 0
    assert "n_train" in capsys.readouterr().out


def test_unknown_flag_exits_one(capsys):
    assert main(["synth", "--bogus-flag", "1"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_missing_input_exits_two(tmp_path, capsys):
    code = main(["split", "--input", str(tmp_path / "nope.tsv"), "--split-ts", "1",
                 "--threshold", "2", "--out-dir", str(tmp_path / "x")])
    assert code == 2 or code == 1
    # a data problem inside an existing file is a clean data error
    bad = tmp_path / "bad.tsv"
    bad.write_text("only\tthree\tfields\n")
    assert main(["split", "--input", str(bad), "--split-ts", "1",
                 "--threshold", "2", "--out-dir", str(tmp_path / "y")]) == 2


def test_embed_mock_round_trips(tmp_path):
    rel_tsv = tmp_path / "relations.tsv"
    rel_tsv.write_text("0\talpha beta\n1\tgamma\n")
    out = tmp_path / "emb.zrle"
    assert main(["embed-mock", "--relations", str(rel_tsv), "--out", str(out),
                 "--d-w", "8", "--seed", "1"]) == 0
    store = load_text_matrices(str(out), required_ids=range(4))
    assert len(store) == 4           # base + reciprocals
    sidecar = json.load(open(str(out) + ".json"))
    assert sidecar["2"]["text"] == "Inversed alpha beta"


def test_full_pipeline_and_report(tmp_path, capsys):
    report_path = run_pipeline(str(tmp_path))
    report = json.load(open(report_path))
    for bucket in ("zero_shot", "seen", "overall"):
        assert bucket in report
    out = capsys.readouterr().out
    assert "Zero-Shot Relations" in out and "Overall" in out


def test_pipeline_deterministic_report(tmp_path):
    a = run_pipeline(str(tmp_path / "runA"))
    b = run_pipeline(str(tmp_path / "runB"))
    assert open(a).read() == open(b).read()


def test_eval_rejects_missing_emb(tmp_path):
    # checkpoint without a resolvable embedding file is a data error
    report = run_pipeline(str(tmp_path))
    ckpt = os.path.join(str(tmp_path), "model.npz")
    data_dir = os.path.join(str(tmp_path), "data")
    os.rename(os.path.join(str(tmp_path), "emb.zrle"),
              os.path.join(str(tmp_path), "gone.zrle"))
    code = main(["eval", "--checkpoint", ckpt, "--data-dir", data_dir])
    assert code == 2


def test_ablate_rows(tmp_path, capsys):
    root = str(tmp_path)
    run_pipeline(root)
    out_dir = os.path.join(root, "ablate")
    assert main(["ablate", "--data-dir", os.path.join(root, "data"),
                 "--emb-file", os.path.join(root, "emb.zrle"),
                 "--out-dir", out_dir] + TRAIN_ARGS) == 0
    doc = json.load(open(os.path.join(out_dir, "ablate.json")))
    assert set(doc) == {"full", "-ERD-analog", "-RHL"}
    table = open(os.path.join(out_dir, "ablate.txt")).read()
    lines = [l for l in table.splitlines() if l.strip()]
    assert len(lines) == 4  # header + exactly three variant rows


def test_config_file_with_flag_override(tmp_path):
    root = str(tmp_path)
    run_pipeline(root)
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs=1\nd=8\nd_w=8\nk=1\nmax_history_len=6\nseed=3\n")
    ckpt2 = os.path.join(root, "model2.npz")
    assert main(["train", "--data-dir", os.path.join(root, "data"),
                 "--emb-file", os.path.join(root, "emb.zrle"),
                 "--out", ckpt2, "--config", str(cfg), "--epochs", "2"]) == 0
    import numpy as np
    with np.load(ckpt2) as z:
        stored = json.loads(str(z["__config__"]))
    assert stored["epochs"] == 2 and stored["k"] == 1
