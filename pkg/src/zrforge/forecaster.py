"""Base forecasting model and the joint training loop.

The base model keeps a trainable entity table and evolves time-aware
entity states across recent snapshots with mean-pooled incoming messages
and a GRU. Relations have no trained table of their own: every relation
representation is the aligned text embedding, which is what makes scoring
total over relations that never appear in training.

Scores combine a diagonal trilinear base score with the gated RHL pattern
score; training follows the joint objective (forecasting cross-entropy +
history MSE + weighted RHL binary cross-entropy).
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DataError, NumericError
from .kgdata import (
    Quadruple,
    SnapshotIndex,
    TkgDataset,
    add_reciprocals,
    build_snapshots,
    dataset_checksum,
    pair_history,
    reciprocal_view,
)
from .numerics import (
    Adam,
    Mlp,
    ParamStore,
    Tape,
    Tensor,
    add,
    affine,
    bce,
    concat_cols,
    cross_entropy,
    default_dtype,
    gather_rows,
    gru_cell,
    make_gru,
    matmul,
    mul,
    rows_replace,
    scale,
    scale_rows,
    segment_sum,
    sigmoid,
    sum_all,
    take_per_row,
    transpose,
)
from .relsem import AlignmentNet, TextMatrixStore, random_frozen_store
from .rhl import HistoryBatch, Rhl
from .rng import SplitMix64, derive_seed

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    gamma: float = 0.1
    gamma_learnable: bool = False
    eta: float = 1.0
    alpha: float = 0.1
    lr: float = 1e-3
    epochs: int = 15
    batch_size: int = 256
    seed: int = 0
    k: int = 2
    max_history_len: int = 32
    no_rhl: bool = False
    random_frozen_rel_emb: bool = False
    d: int = 32
    d_w: int = 32                  # used only when synthesizing control embeddings
    align_hidden: int = 0          # 0 = same as d
    negatives: int = 0             # 0 = softmax over all entities

    def validate(self) -> None:
        if self.eta < 0:
            raise DataError("eta must be >= 0")
        if not np.isfinite(self.gamma):
            raise DataError("gamma must be finite")
        for name in ("epochs", "batch_size", "d", "d_w", "max_history_len"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.k < 0 or self.negatives < 0:
            raise DataError("k and negatives must be >= 0")

    @property
    def rhl_enabled(self) -> bool:
        # gamma fixed at 0 with eta 0 leaves no path through RHL, so the
        # module is dropped entirely; this keeps the explicit ablation
        # flag and the zeroed-hyperparameter run bit-identical.
        if self.no_rhl:
            return False
        return not (self.gamma == 0.0 and not self.gamma_learnable and self.eta == 0.0)

    @classmethod
    def from_kv_file(cls, path: str) -> "TrainConfig":
        """Flat `key=value` config file with keys matching the field names."""
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{line_no}: expected key=value")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in types:
                    raise DataError(f"{path}:{line_no}: unknown config key {key!r}")
                if types[key] == "bool":
                    kwargs[key] = value.lower() in ("1", "true", "yes")
                elif types[key] == "int":
                    kwargs[key] = int(value)
                else:
                    kwargs[key] = float(value)
        return cls(**kwargs)


class BaseModel:
    """Entity table plus snapshot-recurrent state evolution and the
    diagonal trilinear score."""

    def __init__(self, params: ParamStore, n_entities: int, d: int, k: int):
        self.n_entities, self.d, self.k = n_entities, d, k
        self.emb = params.new("base.entity_emb", (n_entities, d),
                              init="xavier", fan=(d, d))
        self.w_msg = params.new("base.w_msg", (2 * d, d), init="xavier")
        self.gru = make_gru(params, "base.gru", d, d)

    def evolve(self, snapshots: SnapshotIndex, window, rel_matrix: Tensor) -> Tensor:
        """Entity states after consuming the snapshots in `window` in
        order. Entities with no incoming facts keep their prior state;
        the state before the window is the static table."""
        state: Tensor = self.emb
        for tau in window:
            facts = snapshots.at(tau)
            if not facts:
                continue
            src = np.array([q.s for q in facts], dtype=np.int64)
            rel = np.array([q.r for q in facts], dtype=np.int64)
            tgt = np.array([q.o for q in facts], dtype=np.int64)
            uniq, seg = np.unique(tgt, return_inverse=True)
            counts = np.bincount(seg, minlength=len(uniq))
            x = concat_cols(gather_rows(rel_matrix, rel), gather_rows(state, src))
            messages = affine(x, self.w_msg)
            pooled = scale_rows(segment_sum(messages, seg, len(uniq)),
                                (1.0 / counts).astype(default_dtype()))
            updated = gru_cell(pooled, gather_rows(state, uniq), self.gru)
            state = rows_replace(state, uniq, updated)
        return state

    def score_rows(self, h_s_rows: Tensor, rel_rows: Tensor,
                   entity_states: Tensor) -> Tensor:
        """Diagonal trilinear scores of all candidate objects: [B, n_e]."""
        return matmul(mul(h_s_rows, rel_rows), transpose(entity_states))


# -- scoring / loss primitives ------------------------------------------------


def base_score(h_s, rel_emb, h_o) -> Tensor:
    """sum_i h_s[i] * rel[i] * h_o[i] (symmetric in the entity arguments;
    direction is carried by reciprocal relations)."""
    return sum_all(mul(mul(h_s, rel_emb), h_o))


def total_score(phi_prime: Tensor, phi: Tensor, gamma) -> Tensor:
    """phi' + gamma * phi; gamma is a float or a learnable scalar tensor."""
    if isinstance(gamma, Tensor):
        return add(phi_prime, mul(phi, gamma))
    return add(phi_prime, scale(phi, gamma))


def tkgf_loss(total_scores: Tensor, object_ids) -> Tensor:
    """Cross-entropy over all candidate objects, averaged over the batch."""
    return cross_entropy(total_scores, object_ids)


def rhl_bce_loss(rhl_scores: Tensor, labels) -> Tensor:
    """Binary cross-entropy of the squashed pattern score against
    membership of the perturbed fact in the training set, averaged over
    batch x entities."""
    return bce(sigmoid(rhl_scores), labels)


def total_loss(l_tkgf: Tensor, l_hist: Tensor | None, l_rhl: Tensor | None,
               eta: float) -> Tensor:
    out = l_tkgf
    if l_hist is not None:
        out = add(out, l_hist)
    if l_rhl is not None and eta != 0.0:
        out = add(out, scale(l_rhl, eta))
    return out


# -- assembled model ----------------------------------------------------------


class ZrModel:
    """All trainable components plus the frozen text store."""

    def __init__(self, dataset: TkgDataset, store: TextMatrixStore,
                 config: TrainConfig):
        if not dataset.relations.has_reciprocals:
            raise DataError("model requires a reciprocal-augmented dataset")
        config.validate()
        store.require(dataset.relations.all_ids())
        self.dataset = dataset
        self.store = store
        self.config = config
        self.params = ParamStore(config.seed)
        d = config.d
        self.align = AlignmentNet(self.params, store.d_w, d,
                                  hidden=config.align_hidden or None)
        self.base = BaseModel(self.params, dataset.n_entities, d, config.k)
        self.rhl = Rhl(self.params, d, alpha=config.alpha) if config.rhl_enabled else None
        if config.gamma_learnable and config.rhl_enabled:
            self.gamma_param = self.params.new("total.gamma", (), init="zeros")
            self.gamma_param.data = np.asarray(config.gamma, dtype=default_dtype())
        else:
            self.gamma_param = None
        self.train_snapshots = self._training_snapshots()
        self._eval_cache = None

    def _training_snapshots(self) -> SnapshotIndex:
        # message passing sees both directions: stored facts plus their
        # reciprocal views
        both = list(self.dataset.train)
        both += [reciprocal_view(q, self.dataset.relations) for q in self.dataset.train]
        return build_snapshots(both, self.dataset.n_timestamps)

    @property
    def gamma(self):
        if self.gamma_param is not None:
            return self.gamma_param
        return self.config.gamma if self.rhl is not None else 0.0

    def relation_matrix(self) -> Tensor:
        return self.align.embed_all(self.store, self.dataset.relations.all_ids())

    def combined_scores(self, base_scores: Tensor, rhl_scores: Tensor | None) -> Tensor:
        if rhl_scores is None:
            return base_scores
        g = self.gamma
        if isinstance(g, Tensor):
            return add(base_scores, mul(rhl_scores, g))
        return add(base_scores, scale(rhl_scores, g)) if g != 0.0 else base_scores

    def train_window(self, t: int):
        return range(max(0, t - self.config.k), t)

    def eval_window(self):
        t_max = self.dataset.t_train_max
        return range(max(0, t_max - self.config.k + 1), t_max + 1)

    # -- evaluation-time scoring (forward only, no tape) -------------------

    def invalidate_eval_cache(self) -> None:
        self._eval_cache = None

    def _eval_tensors(self):
        if self._eval_cache is None:
            rel_matrix = self.relation_matrix()
            states = self.base.evolve(self.train_snapshots, self.eval_window(),
                                      rel_matrix)
            patterns = None
            if self.rhl is not None:
                predicted = self.rhl.predict_history_rows(rel_matrix)
                patterns = self.rhl.pattern_rows(rel_matrix, predicted)
            self._eval_cache = (rel_matrix, states, patterns)
        return self._eval_cache

    def score_batch(self, s_ids, r_ids) -> np.ndarray:
        """Total scores of every candidate object for (s, r) queries at
        evaluation time: [n_queries, n_entities]."""
        rel_matrix, states, patterns = self._eval_tensors()
        s_ids = np.asarray(s_ids, dtype=np.int64)
        r_ids = np.asarray(r_ids, dtype=np.int64)
        h_s = gather_rows(states, s_ids)
        r_emb = gather_rows(rel_matrix, r_ids)
        scores = self.base.score_rows(h_s, r_emb, states)
        if self.rhl is not None:
            pat = gather_rows(patterns, r_ids)
            scores = self.combined_scores(scores, self.rhl.score_rows(h_s, pat, states))
        return scores.data


# -- training -----------------------------------------------------------------


@dataclass
class _Batch:
    t: int
    s_ids: np.ndarray
    r_ids: np.ndarray
    o_ids: np.ndarray
    hist_rows: np.ndarray          # rows with a nonempty-length history
    history: HistoryBatch | None
    label_rows: list[np.ndarray]   # per row: true-object ids at (s, r, t)


def _true_object_map(dataset: TkgDataset) -> dict:
    true_objects: dict[tuple[int, int, int], set[int]] = {}
    rels = dataset.relations
    for q in dataset.train:
        true_objects.setdefault((q.s, q.r, q.t), set()).add(q.o)
        true_objects.setdefault((q.o, rels.reciprocal(q.r), q.t), set()).add(q.s)
    return true_objects


def _build_batches(model: ZrModel) -> list[_Batch]:
    ds = model.dataset
    cfg = model.config
    history_index = build_snapshots(ds.train, ds.n_timestamps)
    true_objects = _true_object_map(ds)
    by_time: dict[int, list[Quadruple]] = {}
    for q in ds.train:
        by_time.setdefault(q.t, []).append(q)
    batches = []
    for t in sorted(by_time):
        examples = list(by_time[t])
        examples += [reciprocal_view(q, ds.relations) for q in by_time[t]]
        n_chunks = max(1, -(-len(examples) // cfg.batch_size))
        for chunk in np.array_split(np.arange(len(examples)), n_chunks):
            rows = [examples[i] for i in chunk]
            s_ids = np.array([q.s for q in rows], dtype=np.int64)
            r_ids = np.array([q.r for q in rows], dtype=np.int64)
            o_ids = np.array([q.o for q in rows], dtype=np.int64)
            histories, hist_rows = [], []
            for i, q in enumerate(rows):
                h = pair_history(history_index, ds.relations, q.s, q.o, q.t,
                                 cfg.max_history_len)
                if len(h) > 0:
                    histories.append(h)
                    hist_rows.append(i)
            labels = [np.array(sorted(true_objects[(q.s, q.r, q.t)]), dtype=np.int64)
                      for q in rows]
            batches.append(_Batch(
                t=t, s_ids=s_ids, r_ids=r_ids, o_ids=o_ids,
                hist_rows=np.array(hist_rows, dtype=np.int64),
                history=HistoryBatch.build(histories) if histories else None,
                label_rows=labels,
            ))
    return batches


def _label_matrix(batch: _Batch, n_entities: int) -> np.ndarray:
    y = np.zeros((len(batch.s_ids), n_entities), dtype=default_dtype())
    for i, objs in enumerate(batch.label_rows):
        y[i, objs] = 1.0
    return y


def _negative_columns(batch: _Batch, n_entities: int, n_neg: int,
                      stream: SplitMix64) -> np.ndarray:
    """Candidate columns per row: the true object first, then sampled
    negatives (collisions with true objects are tolerated, as usual for
    sampled softmax)."""
    cols = np.empty((len(batch.o_ids), n_neg + 1), dtype=np.int64)
    cols[:, 0] = batch.o_ids
    for i in range(len(batch.o_ids)):
        for j in range(n_neg):
            cols[i, j + 1] = stream.below(n_entities)
    return cols


def _train_step(model: ZrModel, batch: _Batch, optimizer: Adam,
                neg_stream: SplitMix64 | None = None) -> dict:
    cfg = model.config
    with Tape() as tape:
        rel_matrix = model.relation_matrix()
        states = model.base.evolve(model.train_snapshots,
                                   model.train_window(batch.t), rel_matrix)
        h_s = gather_rows(states, batch.s_ids)
        r_emb = gather_rows(rel_matrix, batch.r_ids)
        base_scores = model.base.score_rows(h_s, r_emb, states)
        l_hist = l_rhl = None
        rhl_scores = None
        if model.rhl is not None:
            predicted = model.rhl.predict_history_rows(r_emb)
            patterns = model.rhl.pattern_rows(r_emb, predicted)
            rhl_scores = model.rhl.score_rows(h_s, patterns, states)
            if batch.history is not None:
                encoded = model.rhl.encode_history_batch(
                    batch.history, gather_rows(r_emb, batch.hist_rows), rel_matrix)
                l_hist = model.rhl.history_loss(
                    gather_rows(predicted, batch.hist_rows), encoded)
            if cfg.eta != 0.0:
                l_rhl = rhl_bce_loss(rhl_scores, _label_matrix(batch, model.base.n_entities))
        scores = model.combined_scores(base_scores, rhl_scores)
        if cfg.negatives > 0:
            cols = _negative_columns(batch, model.base.n_entities,
                                     cfg.negatives, neg_stream)
            l_tkgf = tkgf_loss(take_per_row(scores, cols),
                               np.zeros(len(batch.o_ids), dtype=np.int64))
        else:
            l_tkgf = tkgf_loss(scores, batch.o_ids)
        loss = total_loss(l_tkgf, l_hist, l_rhl, cfg.eta)
        parts = {
            "loss": float(loss.data),
            "loss_tkgf": float(l_tkgf.data),
            "loss_hist": float(l_hist.data) if l_hist is not None else 0.0,
            "loss_rhl": float(l_rhl.data) if l_rhl is not None else 0.0,
        }
        if not np.isfinite(parts["loss"]):
            raise NumericError(f"non-finite loss at t={batch.t}: {parts}")
        model.params.zero_grad()
        tape.backward(loss, model.params)
    optimizer.step()
    model.invalidate_eval_cache()
    return parts


def fit(dataset: TkgDataset, config: TrainConfig,
        store: TextMatrixStore | None = None,
        progress=None) -> tuple[ZrModel, list[dict]]:
    """Train on G_train with per-epoch validation; restores the
    checkpoint with the best validation MRR before returning.

    `store` may be omitted only with the random-frozen-embedding control
    enabled, in which case seeded random matrices stand in for the text.
    """
    from .evalharness import evaluate_split

    config.validate()
    if not dataset.train:
        raise DataError("empty training split")
    if not dataset.relations.has_reciprocals:
        dataset = add_reciprocals(dataset)
    if config.random_frozen_rel_emb:
        store = random_frozen_store(dataset.relations, config.d_w,
                                    derive_seed(config.seed, "control-emb"))
    if store is None:
        raise DataError("no text matrices: pass a store or set random_frozen_rel_emb")

    checksum_before = store.checksum()
    model = ZrModel(dataset, store, config)
    optimizer = Adam(model.params, lr=config.lr)
    batches = _build_batches(model)
    order_rng = SplitMix64(derive_seed(config.seed, "batch-order"))
    neg_stream = SplitMix64(derive_seed(config.seed, "negatives"))
    log: list[dict] = []
    best_mrr, best_state = -1.0, model.params.state_dict()
    for epoch in range(config.epochs):
        order = list(range(len(batches)))
        order_rng.shuffle(order)
        sums = {"loss": 0.0, "loss_tkgf": 0.0, "loss_hist": 0.0, "loss_rhl": 0.0}
        for idx in order:
            parts = _train_step(model, batches[idx], optimizer, neg_stream)
            for key, value in parts.items():
                sums[key] += value
        entry = {k: v / len(batches) for k, v in sums.items()}
        entry["epoch"] = epoch
        if dataset.valid:
            report = evaluate_split(model, dataset, "valid")
            entry["valid_mrr"] = report.overall["mrr"]
            if entry["valid_mrr"] > best_mrr:
                best_mrr = entry["valid_mrr"]
                best_state = model.params.state_dict()
        log.append(entry)
        if progress is not None:
            progress(entry)
    if dataset.valid:
        model.params.load_state_dict(best_state)
        model.invalidate_eval_cache()
    if store.checksum() != checksum_before:
        raise NumericError("frozen text matrices changed during training")
    return model, log


# -- checkpointing ------------------------------------------------------------


def save_checkpoint(path: str, model: ZrModel, log: list[dict],
                    emb_file: str | None = None) -> None:
    payload = {
        "__version__": np.asarray(CHECKPOINT_VERSION),
        "__config__": np.asarray(json.dumps(asdict(model.config), sort_keys=True)),
        "__dataset_checksum__": np.asarray(dataset_checksum(model.dataset)),
        "__store_checksum__": np.asarray(model.store.checksum()),
        "__emb_file__": np.asarray(emb_file or ""),
        "__log__": np.asarray(json.dumps(log, sort_keys=True)),
    }
    for name, arr in model.params.state_dict().items():
        payload["param/" + name] = arr
    buf = io.BytesIO()
    np.savez(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str, dataset: TkgDataset,
                    store: TextMatrixStore | None = None) -> tuple[ZrModel, list[dict]]:
    with np.load(path, allow_pickle=False) as z:
        if int(z["__version__"]) != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {int(z['__version__'])}")
        config = TrainConfig(**json.loads(str(z["__config__"])))
        if not dataset.relations.has_reciprocals:
            dataset = add_reciprocals(dataset)
        if dataset_checksum(dataset) != str(z["__dataset_checksum__"]):
            raise DataError("checkpoint was trained on different data")
        if config.random_frozen_rel_emb:
            store = random_frozen_store(dataset.relations, config.d_w,
                                        derive_seed(config.seed, "control-emb"))
        if store is None:
            raise DataError("checkpoint needs the text-matrix file it was trained with")
        if store.checksum() != str(z["__store_checksum__"]):
            raise DataError("text matrices differ from the training run")
        model = ZrModel(dataset, store, config)
        state = {name[len("param/"):]: z[name] for name in z.files
                 if name.startswith("param/")}
        model.params.load_state_dict(state)
        log = json.loads(str(z["__log__"]))
    return model, log


def checkpoint_emb_file(path: str) -> str:
    with np.load(path, allow_pickle=False) as z:
        return str(z["__emb_file__"])
