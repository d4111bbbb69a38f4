"""Frozen relation text matrices and the trainable alignment network.

Text matrices hold per-token encoder states for each relation's (possibly
enriched) description. They are stored in the ZRLE container:

    magic "ZRLE" | u32 version=1 | u32 d_w | u32 n_relations
    then per relation: u32 relation_id | u32 L | L*d_w float32

little-endian throughout, one variable-length matrix per relation. A
sidecar JSON (same path + ".json") maps relation_id -> {text, erd}.

The matrices are frozen: they enter the graph as constants and never
receive gradients. The alignment network (token MLP + GRU over the token
sequence) is the trainable bridge into the forecaster's embedding space.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import CoverageError, FormatError
from .kgdata import RelationVocab
from .numerics import Mlp, ParamStore, Tensor, gru_cell, make_gru, rows_scatter
from .numerics import add as t_add
from .rng import SplitMix64, derive_seed

ZRLE_MAGIC = b"ZRLE"
ZRLE_VERSION = 1


class TextMatrixStore:
    """Immutable relation_id -> token-state matrix [L, d_w] map."""

    def __init__(self, matrices: dict[int, np.ndarray], d_w: int):
        self.d_w = d_w
        self._matrices: dict[int, np.ndarray] = {}
        for rid, mat in matrices.items():
            arr = np.ascontiguousarray(mat, dtype=np.float32)
            if arr.ndim != 2 or arr.shape[1] != d_w:
                raise FormatError(f"relation {rid}: matrix shape {arr.shape} "
                                  f"inconsistent with d_w={d_w}")
            if arr.shape[0] < 1:
                raise FormatError(f"relation {rid}: empty token matrix")
            arr.setflags(write=False)
            self._matrices[rid] = arr

    def __len__(self) -> int:
        return len(self._matrices)

    def __contains__(self, rid: int) -> bool:
        return rid in self._matrices

    def matrix(self, rid: int) -> np.ndarray:
        return self._matrices[rid]

    def ids(self) -> list[int]:
        return sorted(self._matrices)

    def require(self, relation_ids) -> None:
        missing = [r for r in relation_ids if r not in self._matrices]
        if missing:
            raise CoverageError(missing)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for rid in sorted(self._matrices):
            h.update(struct.pack("<II", rid, self._matrices[rid].shape[0]))
            h.update(self._matrices[rid].tobytes())
        return h.hexdigest()


def write_text_matrices(path: str, store: TextMatrixStore,
                        sidecar: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(ZRLE_MAGIC)
        fh.write(struct.pack("<III", ZRLE_VERSION, store.d_w, len(store)))
        for rid in store.ids():
            mat = store.matrix(rid)
            fh.write(struct.pack("<II", rid, mat.shape[0]))
            fh.write(mat.tobytes())
    if sidecar is not None:
        with open(path + ".json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_text_matrices(path: str, required_ids=None) -> TextMatrixStore:
    """Read a ZRLE file; validates framing and (optionally) vocabulary
    coverage."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != ZRLE_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}")
    if len(blob) < 16:
        raise FormatError("truncated header")
    version, d_w, n_rel = struct.unpack_from("<III", blob, 4)
    if version != ZRLE_VERSION:
        raise FormatError(f"unsupported version {version}")
    if d_w < 1:
        raise FormatError(f"invalid d_w {d_w}")
    offset = 16
    matrices: dict[int, np.ndarray] = {}
    for _ in range(n_rel):
        if offset + 8 > len(blob):
            raise FormatError("truncated relation header")
        rid, length = struct.unpack_from("<II", blob, offset)
        offset += 8
        nbytes = length * d_w * 4
        if length < 1:
            raise FormatError(f"relation {rid}: non-positive token count")
        if offset + nbytes > len(blob):
            raise FormatError(f"relation {rid}: truncated payload")
        if rid in matrices:
            raise FormatError(f"relation {rid}: duplicate entry")
        mat = np.frombuffer(blob, dtype="<f4", count=length * d_w,
                            offset=offset).reshape(length, d_w)
        matrices[rid] = mat
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes")
    store = TextMatrixStore(matrices, d_w)
    if required_ids is not None:
        store.require(required_ids)
    return store


# ---------------------------------------------------------------------------
# deterministic stand-in encoder


def mock_encode(text: str, d_w: int, seed: int) -> np.ndarray:
    """One standard-normal row per whitespace token.

    Each row is drawn from a stream seeded by (global seed, token), so a
    token always maps to the same row regardless of which relation text
    it appears in.
    """
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot encode empty text")
    rows = []
    for tok in tokens:
        stream = SplitMix64(derive_seed(seed, "mock-token", tok))
        rows.append(stream.normal_array(d_w))
    return np.stack(rows).astype(np.float32)


def mock_store_for_vocab(relations: RelationVocab, d_w: int, seed: int) -> TextMatrixStore:
    mats = {rid: mock_encode(relations.text(rid), d_w, seed)
            for rid in relations.all_ids()}
    return TextMatrixStore(mats, d_w)


def random_frozen_store(relations: RelationVocab, d_w: int, seed: int,
                        tokens_per_relation: int = 3) -> TextMatrixStore:
    """Control embeddings: per-relation random matrices with no shared
    token structure (the text-ablation baseline)."""
    mats = {}
    for rid in relations.all_ids():
        stream = SplitMix64(derive_seed(seed, "random-frozen", str(rid)))
        mats[rid] = stream.normal_array(tokens_per_relation * d_w) \
            .reshape(tokens_per_relation, d_w).astype(np.float32)
    return TextMatrixStore(mats, d_w)


# ---------------------------------------------------------------------------
# alignment network


class AlignmentNet:
    """Maps a frozen token matrix to one d-dimensional relation embedding.

    Tokens pass through a word MLP, then a GRU consumes the mapped
    sequence; the initial state is the first mapped token and the output
    is the final state (a single-token text yields the mapped token).
    """

    def __init__(self, params: ParamStore, d_w: int, d: int,
                 hidden: int | None = None, name: str = "align"):
        self.d_w, self.d = d_w, d
        self.mlp = Mlp(params, f"{name}.word", [d_w, hidden or d, d])
        self.gru = make_gru(params, f"{name}.gru", d, d)

    def align(self, matrix: np.ndarray) -> Tensor:
        if matrix.shape[1] != self.d_w:
            raise ValueError(f"token width {matrix.shape[1]} != d_w {self.d_w}")
        h = self.mlp(Tensor(matrix[0]))
        for l in range(1, matrix.shape[0]):
            h = gru_cell(self.mlp(Tensor(matrix[l])), h, self.gru)
        return h

    def align_group(self, matrices: list[np.ndarray]) -> Tensor:
        """Align relations sharing one token count; returns [B, d]."""
        length = matrices[0].shape[0]
        stacked = np.stack(matrices)              # [B, L, d_w]
        h = self.mlp(Tensor(stacked[:, 0, :]))
        for l in range(1, length):
            h = gru_cell(self.mlp(Tensor(stacked[:, l, :])), h, self.gru)
        return h

    def embed_all(self, store: TextMatrixStore, relation_ids) -> Tensor:
        """Embedding matrix [n_relations, d] for a dense id range.

        Relations are grouped by token count so each group runs as one
        batched GRU; recompute once per training step (the alignment
        parameters move between steps).
        """
        relation_ids = list(relation_ids)
        n = max(relation_ids) + 1
        groups: dict[int, list[int]] = {}
        for rid in relation_ids:
            groups.setdefault(store.matrix(rid).shape[0], []).append(rid)
        out = None
        for length in sorted(groups):
            rids = groups[length]
            block = self.align_group([store.matrix(r) for r in rids])
            placed = rows_scatter(block, np.array(rids, dtype=np.int64), n)
            out = placed if out is None else t_add(out, placed)
        return out
