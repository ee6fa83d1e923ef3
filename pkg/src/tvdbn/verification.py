"""Gradient-check suite covering every trainable operation.

Each entry builds a small random instance (node counts <= 8), runs the
reverse-mode gradients against central finite differences, and returns a
GradReport. The suite backs both the `gradcheck` CLI command and the
acceptance tests, so the two can never drift apart.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

from .constraint import auglag_objective, constraint_sum, grcsl_loss, notears_h
from .dgcpm import DgcpmDims, DgcpmParams, dgcpm_forward_batch, masked_mae_loss
from .graphops import GconvParams, dygconv, gconv_spatial, gconv_spectral
from .grcsl import (
    AttnParams,
    GraphHead,
    GrcslDims,
    GrcslParams,
    GruCell,
    SemParams,
    graph_head,
    grcsl_forward_batch,
    gru_step,
    msdot,
    sem_reconstruct,
)
from .numerics import GradReport, Tensor, grad_check

__all__ = ["gradient_suite"]

_INDEXED = re.compile(r"^(theta|w_q|w_k)(\d+)$")


def _assign(root, dotted: str, tensor: Tensor) -> None:
    """Replace the parameter at a named_parameters()-style path with `tensor`."""
    obj = root
    parts = dotted.split(".")
    # Walk containers; the generator prefixes map onto attribute names.
    alias = {"feature": "feature_gconv", "prior": "prior_gconv"}
    for part in parts[:-1]:
        obj = getattr(obj, alias.get(part, part))
    leaf = parts[-1]
    m = _INDEXED.match(leaf)
    if m:
        field, idx = m.group(1), int(m.group(2))
        getattr(obj, field)[idx] = tensor
    else:
        setattr(obj, leaf, tensor)


def _symmetric_prior(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.random((n, n))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return a


def _positive_graph(rng: np.random.Generator, shape, zero_diag: bool = False) -> np.ndarray:
    g = rng.uniform(0.05, 0.95, size=shape)
    if zero_diag:
        eye = np.eye(shape[-1], dtype=bool)
        g[..., eye] = 0.0
    return g


def _check_msdot(rng: np.random.Generator) -> GradReport:
    q = rng.standard_normal((2, 4, 3))
    k = rng.standard_normal((2, 4, 3))
    ws = [rng.standard_normal((3, 2)) for _ in range(4)]

    def op(q_t, k_t, wq0, wq1, wk0, wk1):
        return msdot(q_t, k_t, AttnParams(w_q=[wq0, wq1], w_k=[wk0, wk1]))

    return grad_check(op, [q, k, *ws], name="msdot")


def _check_gru_step(rng: np.random.Generator) -> GradReport:
    c = rng.standard_normal((2, 5, 3))
    h = rng.standard_normal((2, 5, 4))
    shapes = [(3, 4), (4, 4), (4,)] * 3
    arrays = [rng.standard_normal(s) * 0.5 for s in shapes]

    def op(c_t, h_t, *cell_arrays):
        cell = GruCell(*cell_arrays)
        return gru_step(c_t, h_t, cell)

    return grad_check(op, [c, h, *arrays], name="gru_step")


def _check_graph_head(rng: np.random.Generator) -> GradReport:
    n, hid = 3, 4
    h = rng.standard_normal((1, n * n, hid))
    arrays = [
        rng.standard_normal((hid, hid)) * 0.5,
        rng.standard_normal(hid) * 0.2,
        rng.standard_normal((hid, hid)) * 0.5,
        rng.standard_normal(hid) * 0.2,
        rng.standard_normal((hid, 1)) * 0.5,
        rng.standard_normal(1) * 0.2,
    ]

    def op(h_t, w1, b1, w2, b2, w3, b3):
        head = GraphHead(w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3, tau=0.5)
        return graph_head(h_t, head, n, train=False, mask_diag=True)

    return grad_check(op, [h, *arrays], name="graph_head_logits")


def _check_gconv_spectral(rng: np.random.Generator) -> GradReport:
    prior = _symmetric_prior(rng, 4)
    x = rng.standard_normal((2, 4, 3))
    thetas = [rng.standard_normal((3, 5)) * 0.5] + [
        rng.standard_normal((5, 5)) * 0.4 for _ in range(2)
    ]

    def op(x_t, t0, t1, t2):
        return gconv_spectral(x_t, prior, GconvParams(theta=[t0, t1, t2]))

    return grad_check(op, [x, *thetas], name="gconv_spectral")


def _check_gconv_spatial(rng: np.random.Generator) -> GradReport:
    x = rng.standard_normal((2, 4, 3))
    a = _positive_graph(rng, (2, 4, 4))
    thetas = [rng.standard_normal((3, 4)) * 0.5, rng.standard_normal((4, 4)) * 0.4]

    def op(x_t, a_t, t0, t1):
        return gconv_spatial(x_t, a_t, GconvParams(theta=[t0, t1]))

    return grad_check(op, [x, a, *thetas], name="gconv_spatial")


def _check_dygconv(rng: np.random.Generator) -> GradReport:
    x = rng.standard_normal((1, 4, 2))
    intra = _positive_graph(rng, (1, 4, 4), zero_diag=True)
    inter = _positive_graph(rng, (1, 4, 4))
    t_inter = [rng.standard_normal((2, 3)) * 0.5, rng.standard_normal((3, 3)) * 0.4]
    t_intra = [rng.standard_normal((3, 3)) * 0.5, rng.standard_normal((3, 3)) * 0.4]

    mask = Tensor(1.0 - np.eye(4))

    def op(x_t, a0, a1, ti0, ti1, tj0, tj1):
        # Mask before the call: the generator zeroes the diagonal the same way,
        # and finite differencing must be free to perturb every entry.
        return dygconv(
            x_t, a0 * mask, a1, GconvParams(theta=[ti0, ti1]), GconvParams(theta=[tj0, tj1])
        )

    return grad_check(op, [x, intra, inter, *t_inter, *t_intra], name="dygconv")


def _check_sem_reconstruct(rng: np.random.Generator) -> GradReport:
    n, d, width, h_m = 4, 3, 4, 5
    x_prev = rng.standard_normal((1, n, d))
    x_cur = rng.standard_normal((1, n, d))
    intra = _positive_graph(rng, (1, n, n), zero_diag=True)
    inter = _positive_graph(rng, (1, n, n))
    arrays = [
        rng.standard_normal((d, width)) * 0.5,
        rng.standard_normal((width, width)) * 0.4,
        rng.standard_normal((d, width)) * 0.5,
        rng.standard_normal((width, width)) * 0.4,
        rng.standard_normal((width, h_m)) * 0.5,
        rng.standard_normal(h_m) * 0.2,
        rng.standard_normal((h_m, d)) * 0.5,
        rng.standard_normal(d) * 0.2,
    ]

    mask = Tensor(1.0 - np.eye(n))

    def op(xp, xc, a0, a1, gi0, gi1, gj0, gj1, w1, b1, w2, b2):
        sem = SemParams(
            gconv_intra=GconvParams(theta=[gi0, gi1]),
            gconv_inter=GconvParams(theta=[gj0, gj1]),
            w1=w1, b1=b1, w2=w2, b2=b2,
        )
        return sem_reconstruct(xp, xc, a0 * mask, a1, sem)

    return grad_check(op, [x_prev, x_cur, intra, inter, *arrays], name="sem_reconstruct")


def _check_notears_h(rng: np.random.Generator) -> GradReport:
    b = rng.uniform(0.05, 0.8, size=(5, 5))

    def op(b_t):
        return notears_h(b_t)

    return grad_check(op, [b], name="notears_h")


def _check_grcsl_loss(rng: np.random.Generator) -> GradReport:
    dims = GrcslDims(
        heads=2, d_att=2, h_r=3, d_s=2, h_m=3, sem_width=3, gconv_layers=1, tau=0.3
    )
    params = GrcslParams.init(rng, dims)
    names = [n for n, _ in params.named_parameters()]
    arrays = [t.data.copy() for _, t in params.named_parameters()]
    for arr in arrays:
        # Zero-initialized biases park ReLU pre-activations exactly on the
        # kink, where finite differences are meaningless; check at a generic
        # point instead.
        if not arr.any():
            arr += rng.uniform(-0.3, 0.3, size=arr.shape)
    n, t_in = 3, 3
    values = rng.standard_normal((1, t_in, n, 1))
    tod = rng.random((1, t_in, n, 1))
    prior = _symmetric_prior(rng, n)

    def op(*tensors):
        for name, tensor in zip(names, tensors):
            _assign(params, name, tensor)
        fwd = grcsl_forward_batch(values, tod, prior, params, train=False)
        f = grcsl_loss(fwd, None, lam=1e-3)
        s = constraint_sum(fwd)
        return auglag_objective(f, s, alpha=0.7, rho=1.3)

    return grad_check(op, arrays, name="grcsl_loss_full")


def _check_dgcpm_forward(rng: np.random.Generator) -> GradReport:
    dims = DgcpmDims(t_in=3, t_out=2, dy_width=2, prior_width=2, gconv_layers=1)
    params = DgcpmParams.init(rng, dims)
    names = [n for n, _ in params.named_parameters()]
    arrays = [t.data.copy() for _, t in params.named_parameters()]
    n = 3
    values = rng.standard_normal((2, dims.t_in, n, 1))
    tod = rng.random((2, dims.t_in, n, 1))
    intra = _positive_graph(rng, (2, dims.t_in - 1, n, n), zero_diag=True)
    inter = _positive_graph(rng, (2, dims.t_in - 1, n, n))
    prior = _symmetric_prior(rng, n)

    def op(*tensors):
        for name, tensor in zip(names, tensors):
            _assign(params, name, tensor)
        return dgcpm_forward_batch(values, tod, intra, inter, prior, params)

    return grad_check(op, arrays, name="dgcpm_forward")


def _check_masked_mae(rng: np.random.Generator) -> GradReport:
    pred = rng.standard_normal((2, 3, 4, 1))
    target = rng.standard_normal((2, 3, 4, 1))
    mask = rng.random((2, 3, 4, 1)) < 0.8

    def op(p):
        return masked_mae_loss(p, target, mask, horizon_limit=2)

    return grad_check(op, [pred], name="masked_mae_loss")


_CHECKS: list[tuple[str, Callable[[np.random.Generator], GradReport]]] = [
    ("msdot", _check_msdot),
    ("gru_step", _check_gru_step),
    ("graph_head_logits", _check_graph_head),
    ("gconv_spectral", _check_gconv_spectral),
    ("gconv_spatial", _check_gconv_spatial),
    ("dygconv", _check_dygconv),
    ("sem_reconstruct", _check_sem_reconstruct),
    ("notears_h", _check_notears_h),
    ("grcsl_loss_full", _check_grcsl_loss),
    ("dgcpm_forward", _check_dgcpm_forward),
    ("masked_mae_loss", _check_masked_mae),
]


def gradient_suite(seed: int = 7) -> list[GradReport]:
    """Run every gradient check on small seeded instances."""
    reports = []
    for i, (name, fn) in enumerate(_CHECKS):
        reports.append(fn(np.random.default_rng(seed + i)))
    return reports
