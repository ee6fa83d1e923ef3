"""Recurrent generator of per-step causal graph pairs.

For every window of T_in ticks the model emits, per step, a lag-0 graph
(contemporaneous edges, diagonal forced to zero) and a lag-1 graph (edges
from the previous tick), both with entries in (0, 1):

1. node features per tick: the reading, the time of day, and optionally a
   prior-graph convolution of the reading;
2. pairwise correlation features: multi-head scaled dot products (no
   softmax; raw correlation strengths, not attention weights) between the
   current tick and itself (lag 0) or the previous tick (lag 1), flattened
   to one row per ordered node pair;
3. two disjoint GRUs carry the pairwise features across steps, one per lag;
4. a three-layer 1x1 convolution head turns each pair's hidden state into
   an edge logit, pushed through a sigmoid at low temperature; training
   adds a two-sample Gumbel perturbation so near-binary graphs keep
   gradients, evaluation is deterministic;
5. the emitted graph pair reconstructs each tick's features from its
   parents (lag-0 neighbors of the same tick, lag-1 neighbors of the
   previous one) through a small MLP; the reconstruction error is the
   structure-learning fit term.

Steps are indexed 2..T_in: each needs a predecessor tick. Graphs at step t
depend only on ticks 1..t (the recurrence never looks ahead).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, ShapeError
from .graphops import GconvParams, gconv_spatial, gconv_spectral, normalize_symmetric
from .numerics import Tensor, concat, glorot_uniform, stack

__all__ = [
    "GrcslDims",
    "AttnParams",
    "GruCell",
    "GraphHead",
    "SemParams",
    "GrcslParams",
    "CausalGraphSeq",
    "extract_features",
    "msdot",
    "correlation_features",
    "gru_step",
    "graph_head",
    "sem_reconstruct",
    "grcsl_forward",
    "grcsl_forward_batch",
    "export_graph_edges",
]


# --------------------------------------------------------------------- #
# parameter containers
# --------------------------------------------------------------------- #


@dataclass
class GrcslDims:
    """Width configuration of the structure learner."""

    heads: int = 4
    d_att: int = 16
    h_r: int = 32
    d_s: int = 8
    h_m: int = 32
    sem_width: int = 16
    gconv_layers: int = 2
    tau: float = 0.2
    use_prior: bool = True

    @property
    def d_feat(self) -> int:
        return 2 + (self.d_s if self.use_prior else 0)

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")
        for name in ("heads", "d_att", "h_r", "h_m", "sem_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.use_prior and self.d_s < 1:
            raise ConfigError("d_s must be >= 1 when the prior branch is on")


@dataclass
class AttnParams:
    """Per-head query/key projections, shared by both lags."""

    w_q: list[Tensor]
    w_k: list[Tensor]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_att: int, heads: int) -> "AttnParams":
        return cls(
            w_q=[Tensor(glorot_uniform(rng, d_in, d_att), requires_grad=True) for _ in range(heads)],
            w_k=[Tensor(glorot_uniform(rng, d_in, d_att), requires_grad=True) for _ in range(heads)],
        )

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for i, t in enumerate(self.w_q):
            yield f"{prefix}w_q{i}", t
        for i, t in enumerate(self.w_k):
            yield f"{prefix}w_k{i}", t


@dataclass
class GruCell:
    """One lag's recurrent cell over pairwise features."""

    w_cr: Tensor
    w_hr: Tensor
    b_r: Tensor
    w_cz: Tensor
    w_hz: Tensor
    b_z: Tensor
    w_ch: Tensor
    w_hh: Tensor
    b_h: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int) -> "GruCell":
        def inp():
            return Tensor(glorot_uniform(rng, d_in, hidden), requires_grad=True)

        def rec():
            return Tensor(glorot_uniform(rng, hidden, hidden), requires_grad=True)

        def bias():
            return Tensor(np.zeros(hidden), requires_grad=True)

        return cls(
            w_cr=inp(), w_hr=rec(), b_r=bias(),
            w_cz=inp(), w_hz=rec(), b_z=bias(),
            w_ch=inp(), w_hh=rec(), b_h=bias(),
        )

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name in ("w_cr", "w_hr", "b_r", "w_cz", "w_hz", "b_z", "w_ch", "w_hh", "b_h"):
            yield f"{prefix}{name}", getattr(self, name)


@dataclass
class GraphHead:
    """Three stacked 1x1 convolutions mapping hidden state to an edge logit.

    Acting per node pair, a 1x1 convolution over the unflattened hidden map
    is exactly a shared affine map over the channel axis, which is how it is
    implemented here. The final bias starts at -1 so initial graphs lean
    sparse: sigmoid(-1 / tau) is small at low temperature.
    """

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor
    tau: float

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, tau: float) -> "GraphHead":
        if tau <= 0:
            raise ConfigError(f"temperature must be positive, got {tau}")
        return cls(
            w1=Tensor(glorot_uniform(rng, hidden, hidden), requires_grad=True),
            b1=Tensor(np.zeros(hidden), requires_grad=True),
            w2=Tensor(glorot_uniform(rng, hidden, hidden), requires_grad=True),
            b2=Tensor(np.zeros(hidden), requires_grad=True),
            w3=Tensor(glorot_uniform(rng, hidden, 1), requires_grad=True),
            b3=Tensor(np.full(1, -1.0), requires_grad=True),
            tau=tau,
        )

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            yield f"{prefix}{name}", getattr(self, name)


@dataclass
class SemParams:
    """Reconstruction head: parent aggregation per lag, then a two-layer MLP."""

    gconv_intra: GconvParams
    gconv_inter: GconvParams
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(
        cls, rng: np.random.Generator, d_feat: int, width: int, h_m: int, layers: int
    ) -> "SemParams":
        return cls(
            gconv_intra=GconvParams.init(rng, d_feat, width, layers),
            gconv_inter=GconvParams.init(rng, d_feat, width, layers),
            w1=Tensor(glorot_uniform(rng, width, h_m), requires_grad=True),
            b1=Tensor(np.zeros(h_m), requires_grad=True),
            w2=Tensor(glorot_uniform(rng, h_m, d_feat), requires_grad=True),
            b2=Tensor(np.zeros(d_feat), requires_grad=True),
        )

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        yield from self.gconv_intra.named_parameters(prefix + "gconv_intra.")
        yield from self.gconv_inter.named_parameters(prefix + "gconv_inter.")
        for name in ("w1", "b1", "w2", "b2"):
            yield f"{prefix}{name}", getattr(self, name)


@dataclass
class GrcslParams:
    """All trainable weights of the structure learner."""

    dims: GrcslDims
    attn: AttnParams
    gru_intra: GruCell
    gru_inter: GruCell
    head_intra: GraphHead
    head_inter: GraphHead
    sem: SemParams
    feature_gconv: GconvParams | None = None  # prior branch, absent when use_prior is off

    @classmethod
    def init(cls, rng: np.random.Generator, dims: GrcslDims) -> "GrcslParams":
        dims.validate()
        feature = GconvParams.init(rng, 1, dims.d_s, dims.gconv_layers) if dims.use_prior else None
        return cls(
            dims=dims,
            attn=AttnParams.init(rng, dims.d_feat, dims.d_att, dims.heads),
            gru_intra=GruCell.init(rng, dims.heads, dims.h_r),
            gru_inter=GruCell.init(rng, dims.heads, dims.h_r),
            head_intra=GraphHead.init(rng, dims.h_r, dims.tau),
            head_inter=GraphHead.init(rng, dims.h_r, dims.tau),
            sem=SemParams.init(rng, dims.d_feat, dims.sem_width, dims.h_m, dims.gconv_layers),
            feature_gconv=feature,
        )

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        if self.feature_gconv is not None:
            yield from self.feature_gconv.named_parameters("feature.")
        yield from self.attn.named_parameters("attn.")
        yield from self.gru_intra.named_parameters("gru_intra.")
        yield from self.gru_inter.named_parameters("gru_inter.")
        yield from self.head_intra.named_parameters("head_intra.")
        yield from self.head_inter.named_parameters("head_inter.")
        yield from self.sem.named_parameters("sem.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


# --------------------------------------------------------------------- #
# emitted graphs
# --------------------------------------------------------------------- #


@dataclass
class CausalGraphSeq:
    """Per-step graph pairs for one window.

    intra[j] / inter[j] are the lag-0 / lag-1 graphs of window step j + 2
    (the first step with a predecessor), each (N, N) with entries in [0, 1]
    and a zero lag-0 diagonal. Entry (i, j) weights the edge j -> i.
    """

    intra: np.ndarray  # (S, N, N)
    inter: np.ndarray  # (S, N, N)
    start_index: int = 0
    start_ts: int = 0

    def __post_init__(self):
        self.intra = np.asarray(self.intra, dtype=np.float64)
        self.inter = np.asarray(self.inter, dtype=np.float64)
        if self.intra.shape != self.inter.shape or self.intra.ndim != 3:
            raise ShapeError("graph sequence arrays must share shape (S, N, N)")
        if self.intra.shape[-1] != self.intra.shape[-2]:
            raise ShapeError("graphs must be square")
        for name, arr in (("intra", self.intra), ("inter", self.inter)):
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if self.intra.size and np.abs(np.diagonal(self.intra, axis1=-2, axis2=-1)).max() > 0:
            raise ValueError("lag-0 graphs must have zero diagonals")

    @property
    def steps(self) -> int:
        return self.intra.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.intra.shape[-1]


# --------------------------------------------------------------------- #
# forward pieces
# --------------------------------------------------------------------- #


def extract_features(
    values: Tensor,
    tod: Tensor,
    prior: np.ndarray | None,
    params: GrcslParams,
) -> Tensor:
    """Per-tick node features: reading, time of day, optional prior smoothing.

    `values` and `tod` are (..., N, 1); the result is (..., N, d_feat).
    """
    parts = [values, tod]
    if params.dims.use_prior:
        if prior is None or params.feature_gconv is None:
            raise ConfigError("prior branch enabled but no prior graph given")
        parts.append(gconv_spectral(values, prior, params.feature_gconv))
    return concat(parts, axis=-1)


def msdot(q: Tensor, k: Tensor, attn: AttnParams) -> Tensor:
    """Multi-head scaled dot products between node feature sets.

    Returns (..., N, N, heads); entry (i, j, m) is the head-m correlation of
    node i's query with node j's key, scaled by sqrt(d). No softmax: these
    are correlation strengths, not attention weights.
    """
    d = attn.w_q[0].shape[1]
    scale = 1.0 / float(np.sqrt(d))
    per_head = []
    for w_q, w_k in zip(attn.w_q, attn.w_k):
        qp = q @ w_q
        kp = k @ w_k
        per_head.append((qp @ kp.swap_last()) * scale)
    return stack(per_head, axis=-1)


def correlation_features(
    x_cur: Tensor, x_prev: Tensor, attn: AttnParams
) -> tuple[Tensor, Tensor]:
    """Flattened pairwise features for both lags at one step.

    Row r = i * N + j of the output describes the ordered pair (i, j),
    matching a row-major flattening of the N x N score maps. Lag 0 pairs the
    tick with itself, lag 1 pairs it with its predecessor.
    """
    c0 = msdot(x_cur, x_cur, attn)
    c1 = msdot(x_cur, x_prev, attn)
    batch = c0.shape[:-3]
    n = c0.shape[-2]
    heads = c0.shape[-1]
    flat = batch + (n * n, heads)
    return c0.reshape(flat), c1.reshape(flat)


def gru_step(c: Tensor, h_prev: Tensor, cell: GruCell) -> Tensor:
    """One recurrent update; the update gate blends the previous state in."""
    r = (c @ cell.w_cr + h_prev @ cell.w_hr + cell.b_r).sigmoid()
    z = (c @ cell.w_cz + h_prev @ cell.w_hz + cell.b_z).sigmoid()
    h_tilde = (c @ cell.w_ch + (r * h_prev) @ cell.w_hh + cell.b_h).tanh()
    return z * h_prev + (1.0 - z) * h_tilde


def _gumbel(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def graph_head(
    h: Tensor,
    head: GraphHead,
    n: int,
    train: bool = False,
    rng: np.random.Generator | None = None,
    mask_diag: bool = False,
) -> Tensor:
    """Map pairwise hidden state (..., N*N, H) to a graph (..., N, N).

    Training draws two independent standard Gumbel samples per edge and
    pushes (logit + g1 - g2) / tau through a sigmoid, a reparameterized
    near-binary sample; evaluation uses sigmoid(logit / tau) directly.
    """
    if head.tau <= 0:
        raise ConfigError(f"temperature must be positive, got {head.tau}")
    y = (h @ head.w1 + head.b1).relu()
    y = (y @ head.w2 + head.b2).relu()
    logits = y @ head.w3 + head.b3  # (..., N*N, 1)
    batch = logits.shape[:-2]
    logits = logits.reshape(batch + (n, n))
    if train:
        if rng is None:
            raise ConfigError("train-mode graph sampling needs a random generator")
        noise = _gumbel(rng, logits.shape) - _gumbel(rng, logits.shape)
        graph = ((logits + Tensor(noise)) * (1.0 / head.tau)).sigmoid()
    else:
        graph = (logits * (1.0 / head.tau)).sigmoid()
    if mask_diag:
        graph = graph * Tensor(1.0 - np.eye(n))
    return graph


def sem_reconstruct(
    x_prev: Tensor,
    x_cur: Tensor,
    intra: Tensor,
    inter: Tensor,
    sem: SemParams,
) -> Tensor:
    """Reconstruct a tick's features from its parents under the graph pair."""
    agg = gconv_spatial(x_cur, intra, sem.gconv_intra) + gconv_spatial(
        x_prev, inter, sem.gconv_inter
    )
    hidden = (agg @ sem.w1 + sem.b1).relu()
    return hidden @ sem.w2 + sem.b2


# --------------------------------------------------------------------- #
# full forward
# --------------------------------------------------------------------- #


@dataclass
class GrcslForward:
    """Differentiable outputs of one batched forward pass.

    Lists are indexed by step j (window step j + 2). Graph tensors are
    (B, N, N); features and reconstructions are (B, N, d_feat).
    """

    features: list[Tensor]
    intra: list[Tensor]
    inter: list[Tensor]
    reconstructions: list[Tensor]


def grcsl_forward_batch(
    values: np.ndarray,
    tod: np.ndarray,
    prior: np.ndarray | None,
    params: GrcslParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> GrcslForward:
    """Run the structure learner over a batch of windows.

    `values` and `tod` are (B, T_in, N, 1). Both GRUs start from zero hidden
    state at the window head; the same tick features feed both lags.
    """
    if values.ndim != 4 or values.shape != tod.shape:
        raise ShapeError(f"expected (B, T, N, 1) inputs, got {values.shape} and {tod.shape}")
    b, t_in, n, _ = values.shape
    if t_in < 2:
        raise ShapeError("windows need at least two ticks to form a step")
    dims = params.dims
    xs = [
        extract_features(Tensor(values[:, t]), Tensor(tod[:, t]), prior, params)
        for t in range(t_in)
    ]
    h_intra = Tensor(np.zeros((b, n * n, dims.h_r)))
    h_inter = Tensor(np.zeros((b, n * n, dims.h_r)))
    out = GrcslForward(features=xs, intra=[], inter=[], reconstructions=[])
    for t in range(1, t_in):
        c0, c1 = correlation_features(xs[t], xs[t - 1], params.attn)
        h_intra = gru_step(c0, h_intra, params.gru_intra)
        h_inter = gru_step(c1, h_inter, params.gru_inter)
        g_intra = graph_head(h_intra, params.head_intra, n, train, rng, mask_diag=True)
        g_inter = graph_head(h_inter, params.head_inter, n, train, rng, mask_diag=False)
        out.intra.append(g_intra)
        out.inter.append(g_inter)
        out.reconstructions.append(sem_reconstruct(xs[t - 1], xs[t], g_intra, g_inter, params.sem))
    return out


def grcsl_forward(
    values: np.ndarray,
    tod: np.ndarray,
    prior: np.ndarray | None,
    params: GrcslParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
    start_index: int = 0,
    start_ts: int = 0,
) -> tuple[CausalGraphSeq, GrcslForward]:
    """Single-window forward; returns the emitted graph sequence as arrays."""
    fwd = grcsl_forward_batch(values[None], tod[None], prior, params, train, rng)
    intra = np.stack([g.data[0] for g in fwd.intra])
    inter = np.stack([g.data[0] for g in fwd.inter])
    seq = CausalGraphSeq(intra=intra, inter=inter, start_index=start_index, start_ts=start_ts)
    return seq, fwd


# --------------------------------------------------------------------- #
# export
# --------------------------------------------------------------------- #


def export_graph_edges(
    path: str,
    seqs: list[CausalGraphSeq],
    sensor_ids: list[str],
    threshold: float = 0.5,
) -> int:
    """Write thresholded edges as CSV rows, one per surviving edge.

    Columns: window_start_ts, step, lag, src_id, dst_id, weight. `step` is
    the 1-based window position of the receiving tick (first emitted pair is
    step 2). Entry (i, j) of a graph is the edge src=j -> dst=i. Returns the
    number of edge rows written.
    """
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start_ts", "step", "lag", "src_id", "dst_id", "weight"])
        for seq in seqs:
            for j in range(seq.steps):
                for lag, graph in ((0, seq.intra[j]), (1, seq.inter[j])):
                    dst, src = np.nonzero(graph > threshold)
                    for i, k in zip(dst, src):
                        writer.writerow(
                            [
                                seq.start_ts,
                                j + 2,
                                lag,
                                sensor_ids[k],
                                sensor_ids[i],
                                f"{graph[i, k]:.10g}",
                            ]
                        )
                        count += 1
    return count
