from .autodiff import (
    BCE_EPS,
    GruParams,
    Tape,
    Tensor,
    add,
    affine,
    as_tensor,
    bce,
    broadcast_rows,
    concat_cols,
    cross_entropy,
    default_dtype,
    dot,
    gather_rows,
    gru_cell,
    matmul,
    mean_all,
    mse,
    mul,
    relu,
    row_sum,
    rows_replace,
    rows_scatter,
    scale,
    scale_rows,
    segment_softmax,
    segment_sum,
    set_default_dtype,
    sigmoid,
    softmax,
    sub,
    sum_all,
    take_per_row,
    tanh,
    transpose,
    tucker3,
    tucker_rows,
    using_dtype,
)
from .nn import Mlp, ParamStore, make_gru, uniform_init, xavier_uniform
from .optim import Adam

__all__ = [
    "Adam", "BCE_EPS", "GruParams", "Mlp", "ParamStore", "Tape", "Tensor",
    "add", "affine", "as_tensor", "bce", "broadcast_rows", "concat_cols",
    "cross_entropy", "default_dtype", "dot", "gather_rows", "gru_cell",
    "make_gru", "matmul", "mean_all", "mse", "mul", "relu", "row_sum",
    "rows_replace", "rows_scatter", "scale", "scale_rows", "segment_softmax",
    "segment_sum", "set_default_dtype", "sigmoid", "softmax", "sub",
    "sum_all", "take_per_row", "tanh", "transpose", "tucker3", "tucker_rows", "uniform_init",
    "using_dtype", "xavier_uniform",
]
