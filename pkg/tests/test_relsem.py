import numpy as np
import pytest

from zrforge.errors import CoverageError, FormatError
from zrforge.kgdata import RelationVocab
from zrforge.numerics import ParamStore, Tape, Tensor, gru_cell, sum_all
from zrforge.relsem import (
    AlignmentNet,
    TextMatrixStore,
    load_text_matrices,
    mock_encode,
    mock_store_for_vocab,
    random_frozen_store,
    write_text_matrices,
)
from zrforge.rng import SplitMix64


def small_store(d_w=6, n=4, seed=3):
    rng = SplitMix64(seed)
    mats = {i: rng.normal_array((i % 3 + 1) * d_w).reshape(i % 3 + 1, d_w)
            for i in range(n)}
    return TextMatrixStore(mats, d_w)


# -- ZRLE container ------------------------------------------------------------


def test_round_trip_bit_identical(tmp_path):
    store = small_store()
    path = tmp_path / "emb.zrle"
    write_text_matrices(str(path), store)
    loaded = load_text_matrices(str(path))
    assert loaded.checksum() == store.checksum()
    write_text_matrices(str(tmp_path / "again.zrle"), loaded)
    assert path.read_bytes() == (tmp_path / "again.zrle").read_bytes()


def test_missing_relation_coverage_error(tmp_path):
    store = small_store(n=8)
    mats = {i: store.matrix(i) for i in range(8) if i != 7}
    path = tmp_path / "emb.zrle"
    write_text_matrices(str(path), TextMatrixStore(mats, store.d_w))
    with pytest.raises(CoverageError) as err:
        load_text_matrices(str(path), required_ids=range(8))
    assert err.value.missing_ids == [7]


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.zrle"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        load_text_matrices(str(path))


def test_truncated_payload(tmp_path):
    store = small_store()
    path = tmp_path / "emb.zrle"
    write_text_matrices(str(path), store)
    blob = path.read_bytes()
    for cut in (len(blob) - 5, 10, 17):
        (tmp_path / "cut.zrle").write_bytes(blob[:cut])
        with pytest.raises(FormatError):
            load_text_matrices(str(tmp_path / "cut.zrle"))


def test_trailing_garbage(tmp_path):
    store = small_store()
    path = tmp_path / "emb.zrle"
    write_text_matrices(str(path), store)
    (tmp_path / "pad.zrle").write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(FormatError, match="trailing"):
        load_text_matrices(str(tmp_path / "pad.zrle"))


def test_sidecar_written(tmp_path):
    import json
    store = small_store(n=2)
    path = tmp_path / "emb.zrle"
    write_text_matrices(str(path), store, {"0": {"text": "a", "erd": "a: x"}})
    doc = json.loads((tmp_path / "emb.zrle.json").read_text())
    assert doc["0"]["erd"].startswith("a")


# -- mock encoder ---------------------------------------------------------------


def test_mock_encode_deterministic():
    a = mock_encode("alpha beta", 8, seed=1)
    b = mock_encode("alpha beta", 8, seed=1)
    assert np.array_equal(a, b)
    assert a.shape == (2, 8)


def test_mock_encode_shared_token_row():
    a = mock_encode("cluster1 relation0", 8, seed=2)
    b = mock_encode("cluster1 relation3", 8, seed=2)
    assert np.array_equal(a[0], b[0])
    assert not np.array_equal(a[1], b[1])


def test_mock_encode_seed_changes_rows():
    assert not np.array_equal(mock_encode("x", 8, 1), mock_encode("x", 8, 2))


def test_mock_encode_collision_scan():
    seen = {}
    for i in range(10000):
        row = mock_encode(f"token{i}", 6, seed=9)[0]
        key = row.tobytes()
        assert key not in seen, f"row collision between token{i} and {seen[key]}"
        seen[key] = f"token{i}"


def test_mock_store_covers_reciprocals():
    vocab = RelationVocab(["go north", "go south"]).with_reciprocals()
    store = mock_store_for_vocab(vocab, 8, seed=4)
    assert len(store) == 4
    # "Inversed go north" shares the token rows of "go north" shifted by one
    base = store.matrix(0)
    recip = store.matrix(2)
    assert recip.shape[0] == base.shape[0] + 1
    assert np.array_equal(recip[1:], base)


def test_random_frozen_store_no_shared_structure():
    vocab = RelationVocab(["cluster0 relation0", "cluster0 relation1"]).with_reciprocals()
    store = random_frozen_store(vocab, 8, seed=4)
    assert not np.array_equal(store.matrix(0)[0], store.matrix(1)[0])


# -- alignment -------------------------------------------------------------------


def test_align_single_token_is_mlp_output():
    params = ParamStore(1)
    net = AlignmentNet(params, d_w=5, d=3)
    matrix = SplitMix64(8).normal_array(5).reshape(1, 5)
    out = net.align(matrix.astype(np.float32))
    expected = net.mlp(Tensor(matrix[0]))
    assert np.allclose(out.data, expected.data)


def test_align_two_tokens_matches_hand_gru():
    params = ParamStore(2)
    net = AlignmentNet(params, d_w=4, d=3)
    matrix = SplitMix64(9).normal_array(8).reshape(2, 4).astype(np.float32)
    out = net.align(matrix)
    w0 = net.mlp(Tensor(matrix[0]))
    w1 = net.mlp(Tensor(matrix[1]))
    expected = gru_cell(w1, w0, net.gru)
    assert np.allclose(out.data, expected.data, atol=1e-6)


def test_align_rejects_wrong_width():
    params = ParamStore(3)
    net = AlignmentNet(params, d_w=4, d=3)
    with pytest.raises(ValueError, match="d_w"):
        net.align(np.zeros((2, 5), dtype=np.float32))


def test_embed_all_matches_per_relation_align():
    params = ParamStore(4)
    net = AlignmentNet(params, d_w=6, d=4)
    store = small_store(d_w=6, n=5)
    all_embs = net.embed_all(store, range(5))
    for rid in range(5):
        single = net.align(store.matrix(rid))
        assert np.allclose(all_embs.data[rid], single.data, atol=1e-6)


def test_alignment_trains_but_text_matrix_frozen():
    params = ParamStore(5)
    net = AlignmentNet(params, d_w=4, d=3)
    store = small_store(d_w=4, n=2)
    before = store.checksum()
    with Tape() as tape:
        emb = net.embed_all(store, range(2))
        tape.backward(sum_all(emb), params)
    grads = {name: t.grad for name, t in params.items()}
    assert any(np.abs(g).sum() > 0 for g in grads.values())
    assert store.checksum() == before
    assert not store.matrix(0).flags.writeable


def test_align_defined_for_any_relation_text():
    # zero-shot coverage: embedding exists without any observed fact
    params = ParamStore(6)
    net = AlignmentNet(params, d_w=8, d=4)
    matrix = mock_encode("never seen relation text", 8, seed=1)
    out = net.align(matrix)
    assert np.all(np.isfinite(out.data)) and out.data.shape == (4,)
