"""Relation History Learner.

Given the relation sets linking an entity pair per past timestep, RHL
aggregates each timestep with query-conditioned attention, encodes the
sequence with a GRU, and trains a history prediction network (HPN) so the
same encoding can be inferred from the query relation alone at evaluation
time. One further GRU step over the query relation yields a pattern
vector; a trilinear core scores how well (subject, pattern, object)
match.

Everything here is defined for any relation with an aligned embedding,
including relations with zero observed facts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kgdata import PairHistory
from .numerics import (
    Mlp,
    ParamStore,
    Tensor,
    add,
    broadcast_rows,
    gather_rows,
    gru_cell,
    make_gru,
    matmul,
    mse,
    mul,
    row_sum,
    rows_scatter,
    scale,
    scale_rows,
    segment_softmax,
    segment_sum,
    softmax,
    transpose,
    tucker3,
    tucker_rows,
)


class Rhl:
    """Trainable RHL state: aggregator MLP, history GRU, dummy embedding,
    HPN, and the cubic core tensor."""

    PARAM_PREFIX = "rhl."

    def __init__(self, params: ParamStore, d: int, alpha: float = 0.1,
                 core_init_lim: float = 0.1):
        self.d = d
        self.alpha = float(alpha)
        self.mlp_agg = Mlp(params, "rhl.agg", [d, d, d])
        self.gru = make_gru(params, "rhl.gru", d, d)
        self.h_dum = params.new("rhl.h_dum", (d,), init="xavier", fan=(d, d))
        self.mlp_hist = Mlp(params, "rhl.hist", [d, d, d])
        self.core = params.new("rhl.core", (d, d, d), init="uniform", lim=core_init_lim)

    # -- single-query path (mirrors the batched path exactly) --------------

    def aggregate_timestep(self, member_embs: Tensor | None, query_emb: Tensor) -> Tensor:
        """Attention-weighted sum of co-occurring relation embeddings; an
        empty timestep falls back to the dummy embedding."""
        if member_embs is None or member_embs.data.shape[0] == 0:
            return self.h_dum
        u = self.mlp_agg(query_emb)
        weights = softmax(matmul(member_embs, u))
        return matmul(weights, member_embs)

    def encode_history(self, history: PairHistory, query_emb: Tensor,
                       rel_matrix: Tensor) -> Tensor:
        """GRU-encode the pair's relation sets; state starts at the first
        timestep's aggregate."""
        if len(history) == 0:
            raise DataError("cannot encode a zero-length history")
        slots = []
        for rels in history.rel_sets:
            if rels:
                members = gather_rows(rel_matrix, np.array(sorted(rels), dtype=np.int64))
                slots.append(self.aggregate_timestep(members, query_emb))
            else:
                slots.append(self.h_dum)
        h = slots[0]
        for slot in slots[1:]:
            h = gru_cell(slot, h, self.gru)
        return h

    def predict_history(self, query_emb: Tensor) -> Tensor:
        """HPN: infer the encoded history from the query relation alone."""
        return add(scale(self.mlp_hist(query_emb), self.alpha), query_emb)

    def history_loss(self, predicted: Tensor, encoded: Tensor) -> Tensor:
        return mse(predicted, encoded)

    def pattern_step(self, query_emb: Tensor, predicted_hist: Tensor) -> Tensor:
        """One more step of the history GRU turns the predicted history
        plus the query relation into a pattern vector."""
        return gru_cell(query_emb, predicted_hist, self.gru)

    def score(self, h_s: Tensor, h_pat: Tensor, h_o: Tensor) -> Tensor:
        """Raw trilinear match score; the trainer squashes it when a
        probability is needed."""
        return tucker3(self.core, h_s, h_pat, h_o)

    # -- batched path -------------------------------------------------------

    def encode_history_batch(self, batch: "HistoryBatch", query_embs: Tensor,
                             rel_matrix: Tensor) -> Tensor:
        """Encode many histories at once; returns [n_facts, d].

        Histories are right-aligned over `max_len` GRU steps; masks start
        each fact's recurrence at its first covered timestep and freeze
        the state before that (identical arithmetic to encode_history).
        """
        b, ml, d = batch.n_facts, batch.max_len, self.d
        n_slots = b * ml
        dum = scale_rows(broadcast_rows(self.h_dum, n_slots), batch.empty_mask)
        if len(batch.member_rel) > 0:
            u = self.mlp_agg(query_embs)                       # [b, d]
            member_q = gather_rows(u, batch.member_fact)
            member_e = gather_rows(rel_matrix, batch.member_rel)
            logits = row_sum(mul(member_e, member_q))
            weights = segment_softmax(logits, batch.member_seg, batch.n_nonempty)
            agg = segment_sum(scale_rows(member_e, weights), batch.member_seg,
                              batch.n_nonempty)
            slots = add(rows_scatter(agg, batch.nonempty_pos, n_slots), dum)
        else:
            slots = dum
        h = Tensor(np.zeros((b, d)))
        for j in range(ml):
            x = gather_rows(slots, batch.step_index[j])
            stepped = gru_cell(x, h, self.gru)
            h = add(add(scale_rows(x, batch.start_mask[j]),
                        scale_rows(stepped, batch.active_mask[j])),
                    scale_rows(h, batch.future_mask[j]))
        return h

    def predict_history_rows(self, query_embs: Tensor) -> Tensor:
        return add(scale(self.mlp_hist(query_embs), self.alpha), query_embs)

    def pattern_rows(self, query_embs: Tensor, predicted: Tensor) -> Tensor:
        return gru_cell(query_embs, predicted, self.gru)

    def score_rows(self, h_s_rows: Tensor, h_pat_rows: Tensor,
                   entity_states: Tensor) -> Tensor:
        """Scores of every candidate object: [n_facts, n_entities]."""
        contracted = tucker_rows(self.core, h_s_rows, h_pat_rows)
        return matmul(contracted, transpose(entity_states))


@dataclass
class HistoryBatch:
    """Flattened, reusable index structure for a batch of pair histories.

    Built once per batch of facts (the relation-set structure is static);
    only the embeddings flowing through it change between steps.
    """

    n_facts: int
    max_len: int
    member_rel: np.ndarray        # [n_members] relation ids
    member_fact: np.ndarray       # [n_members] fact row of each member
    member_seg: np.ndarray        # [n_members] dense non-empty-slot id
    nonempty_pos: np.ndarray      # [n_nonempty] linear slot position fact*max_len + j
    n_nonempty: int
    empty_mask: np.ndarray        # [n_facts*max_len] 1.0 where covered slot has no rels
    step_index: list[np.ndarray]  # per j: linear slot positions of column j
    start_mask: list[np.ndarray]  # per j: 1.0 where recurrence starts at j
    active_mask: list[np.ndarray]
    future_mask: list[np.ndarray]

    @classmethod
    def build(cls, histories: list[PairHistory], dtype=np.float32) -> "HistoryBatch":
        if any(len(h) == 0 for h in histories):
            raise DataError("zero-length history in batch")
        b = len(histories)
        ml = max(len(h) for h in histories)
        member_rel, member_fact, member_seg, nonempty_pos = [], [], [], []
        empty = np.zeros(b * ml, dtype=dtype)
        starts = np.array([ml - len(h) for h in histories], dtype=np.int64)
        seg = 0
        for f, hist in enumerate(histories):
            offset = starts[f]
            for j_local, rels in enumerate(hist.rel_sets):
                pos = f * ml + offset + j_local
                if rels:
                    for r in sorted(rels):
                        member_rel.append(r)
                        member_fact.append(f)
                        member_seg.append(seg)
                    nonempty_pos.append(pos)
                    seg += 1
                else:
                    empty[pos] = 1.0
        rows = np.arange(b, dtype=np.int64) * ml
        step_index = [rows + j for j in range(ml)]
        start_mask = [(starts == j).astype(dtype) for j in range(ml)]
        active_mask = [(starts < j).astype(dtype) for j in range(ml)]
        future_mask = [(starts > j).astype(dtype) for j in range(ml)]
        return cls(
            n_facts=b, max_len=ml,
            member_rel=np.array(member_rel, dtype=np.int64),
            member_fact=np.array(member_fact, dtype=np.int64),
            member_seg=np.array(member_seg, dtype=np.int64),
            nonempty_pos=np.array(nonempty_pos, dtype=np.int64),
            n_nonempty=seg,
            empty_mask=empty,
            step_index=step_index,
            start_mask=start_mask,
            active_mask=active_mask,
            future_mask=future_mask,
        )
