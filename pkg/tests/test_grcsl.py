"""Graph-generator tests: closed-form fixtures, sampling statistics, causality."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvdbn.errors import ConfigError, ShapeError
from tvdbn.grcsl import (
    AttnParams,
    CausalGraphSeq,
    GraphHead,
    GrcslDims,
    GrcslParams,
    GruCell,
    correlation_features,
    export_graph_edges,
    extract_features,
    graph_head,
    grcsl_forward,
    grcsl_forward_batch,
    gru_step,
    msdot,
)
from tvdbn.numerics import Tensor


def small_dims(**overrides):
    base = dict(heads=2, d_att=4, h_r=6, d_s=3, h_m=5, sem_width=4, use_prior=False)
    base.update(overrides)
    return GrcslDims(**base)


def zero_logit_head(hidden, tau=0.2):
    """Head whose output logit is identically zero."""
    z = lambda *shape: Tensor(np.zeros(shape), requires_grad=True)
    return GraphHead(
        w1=z(hidden, hidden), b1=z(hidden),
        w2=z(hidden, hidden), b2=z(hidden),
        w3=z(hidden, 1), b3=z(1), tau=tau,
    )


# ------------------------------------------------------------------ #
# pairwise correlation scores
# ------------------------------------------------------------------ #


def test_msdot_identity_projection_is_gram_matrix():
    # w_q = w_k = I, d_att = 1: score(i, j) = x_i * x_j / sqrt(1).
    attn = AttnParams(w_q=[Tensor(np.eye(1))], w_k=[Tensor(np.eye(1))])
    x = Tensor(np.array([[1.0], [2.0]]))
    scores = msdot(x, x, attn)
    assert scores.shape == (2, 2, 1)
    np.testing.assert_allclose(scores.data[..., 0], [[1.0, 2.0], [2.0, 4.0]])


def test_msdot_scales_by_sqrt_of_projection_width():
    # Ones-projections of width 4 give q.k = 4 * x_i * x_j, then / sqrt(4).
    attn = AttnParams(w_q=[Tensor(np.ones((1, 4)))], w_k=[Tensor(np.ones((1, 4)))])
    x = Tensor(np.array([[1.0], [2.0]]))
    scores = msdot(x, x, attn)
    np.testing.assert_allclose(scores.data[..., 0], [[2.0, 4.0], [4.0, 8.0]])


def test_msdot_stacks_heads_on_last_axis():
    attn = AttnParams(
        w_q=[Tensor(np.eye(1)), Tensor(2.0 * np.eye(1))],
        w_k=[Tensor(np.eye(1)), Tensor(np.eye(1))],
    )
    x = Tensor(np.array([[1.0], [3.0]]))
    scores = msdot(x, x, attn)
    assert scores.shape == (2, 2, 2)
    np.testing.assert_allclose(scores.data[..., 1], 2.0 * scores.data[..., 0])


def test_msdot_is_asymmetric_between_query_and_key():
    rng = np.random.default_rng(3)
    attn = AttnParams.init(rng, d_in=3, d_att=4, heads=1)
    q = Tensor(rng.normal(size=(5, 3)))
    k = Tensor(rng.normal(size=(5, 3)))
    ab = msdot(q, k, attn).data
    ba = msdot(k, q, attn).data
    assert not np.allclose(ab, ba)


def test_correlation_features_flatten_row_major():
    # d_att = 1, identity projections, x = [1, 2, 3]: lag-0 row i*N+j must
    # equal x_i * x_j, and lag-1 must pair against the previous tick.
    attn = AttnParams(w_q=[Tensor(np.eye(1))], w_k=[Tensor(np.eye(1))])
    x_cur = Tensor(np.array([[1.0], [2.0], [3.0]]))
    x_prev = Tensor(np.array([[10.0], [20.0], [30.0]]))
    c0, c1 = correlation_features(x_cur, x_prev, attn)
    assert c0.shape == (9, 1) and c1.shape == (9, 1)
    cur = np.array([1.0, 2.0, 3.0])
    prev = np.array([10.0, 20.0, 30.0])
    for i in range(3):
        for j in range(3):
            assert c0.data[i * 3 + j, 0] == pytest.approx(cur[i] * cur[j])
            assert c1.data[i * 3 + j, 0] == pytest.approx(cur[i] * prev[j])


# ------------------------------------------------------------------ #
# recurrence
# ------------------------------------------------------------------ #


def naive_gru(c, h, cell):
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    r = sig(c @ cell.w_cr.data + h @ cell.w_hr.data + cell.b_r.data)
    z = sig(c @ cell.w_cz.data + h @ cell.w_hz.data + cell.b_z.data)
    h_tilde = np.tanh(c @ cell.w_ch.data + (r * h) @ cell.w_hh.data + cell.b_h.data)
    return z * h + (1.0 - z) * h_tilde


def test_gru_step_matches_naive_numpy(rng):
    cell = GruCell.init(rng, d_in=3, hidden=5)
    c = rng.normal(size=(4, 7, 3))
    h = rng.normal(size=(4, 7, 5))
    out = gru_step(Tensor(c), Tensor(h), cell)
    np.testing.assert_allclose(out.data, naive_gru(c, h, cell), atol=1e-12)


def test_gru_zero_state_zero_input_is_fixed_point(rng):
    # Fresh cells have zero biases, so gates sit at 1/2 and the candidate at 0.
    cell = GruCell.init(rng, d_in=3, hidden=4)
    out = gru_step(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), cell)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-15)


def test_gru_saturated_update_gate_copies_previous_state(rng):
    cell = GruCell.init(rng, d_in=3, hidden=4)
    cell.b_z = Tensor(np.full(4, 50.0), requires_grad=True)  # z -> 1
    c = rng.normal(size=(2, 3))
    h = rng.normal(size=(2, 4))
    out = gru_step(Tensor(c), Tensor(h), cell)
    np.testing.assert_allclose(out.data, h, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_gru_state_stays_in_unit_box(seed):
    # |h'| <= z|h| + (1-z)|tanh| <= max(|h|, 1): the unit box is invariant.
    rng = np.random.default_rng(seed)
    cell = GruCell.init(rng, d_in=2, hidden=3)
    c = rng.normal(0.0, 3.0, size=(5, 2))
    h = rng.uniform(-1.0, 1.0, size=(5, 3))
    out = gru_step(Tensor(c), Tensor(h), cell)
    assert np.all(np.abs(out.data) <= 1.0 + 1e-12)


# ------------------------------------------------------------------ #
# edge sampling
# ------------------------------------------------------------------ #


def test_graph_head_eval_mode_is_deterministic_sigmoid(rng):
    head = GraphHead.init(rng, hidden=6, tau=0.2)
    h = Tensor(rng.normal(size=(9, 6)))
    g1 = graph_head(h, head, n=3)
    g2 = graph_head(h, head, n=3)
    assert g1.shape == (3, 3)
    np.testing.assert_array_equal(g1.data, g2.data)
    assert np.all((g1.data > 0.0) & (g1.data < 1.0))


def test_graph_head_fresh_init_leans_sparse(rng):
    # Final bias -1 at tau = 0.2 puts near-zero-hidden edges at sigmoid(-5).
    head = GraphHead.init(rng, hidden=6, tau=0.2)
    h = Tensor(np.zeros((4, 6)))
    g = graph_head(h, head, n=2)
    np.testing.assert_allclose(g.data, 1.0 / (1.0 + np.exp(5.0)), rtol=1e-12)


def test_graph_head_train_mode_is_symmetric_around_half_at_zero_logit():
    # logit 0: the Gumbel difference is logistic and symmetric, so the
    # sampled edge mean converges to 1/2 (SE ~ 0.0016 at 1e5 draws).
    head = zero_logit_head(hidden=1)
    h = Tensor(np.zeros((25000, 4, 1)))
    g = graph_head(h, head, n=2, train=True, rng=np.random.default_rng(42))
    assert g.data.shape == (25000, 2, 2)
    assert abs(g.data.mean() - 0.5) < 0.01
    # near-binary at low temperature: mass piles up near the ends
    assert ((g.data < 0.1) | (g.data > 0.9)).mean() > 0.7


def test_graph_head_train_mode_requires_rng(rng):
    head = GraphHead.init(rng, hidden=3, tau=0.2)
    with pytest.raises(ConfigError):
        graph_head(Tensor(np.zeros((4, 3))), head, n=2, train=True)


def test_graph_head_masks_diagonal_when_asked(rng):
    head = GraphHead.init(rng, hidden=3, tau=0.2)
    h = Tensor(rng.normal(size=(2, 9, 3)))
    g = graph_head(h, head, n=3, mask_diag=True)
    np.testing.assert_array_equal(np.diagonal(g.data, axis1=-2, axis2=-1), 0.0)


def test_graph_head_rejects_non_positive_temperature(rng):
    with pytest.raises(ConfigError):
        GraphHead.init(rng, hidden=3, tau=0.0)
    head = GraphHead.init(rng, hidden=3, tau=0.2)
    head.tau = -1.0
    with pytest.raises(ConfigError):
        graph_head(Tensor(np.zeros((4, 3))), head, n=2)


# ------------------------------------------------------------------ #
# features
# ------------------------------------------------------------------ #


def test_extract_features_without_prior_concatenates_reading_and_tod(rng):
    params = GrcslParams.init(rng, small_dims())
    values = np.array([[[1.0], [2.0]]])
    tod = np.array([[[0.25], [0.25]]])
    feats = extract_features(Tensor(values), Tensor(tod), None, params)
    assert feats.shape == (1, 2, 2)
    np.testing.assert_allclose(feats.data, [[[1.0, 0.25], [2.0, 0.25]]])


def test_extract_features_with_prior_adds_smoothed_channels(rng):
    params = GrcslParams.init(rng, small_dims(use_prior=True))
    prior = np.eye(2)
    feats = extract_features(
        Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 1))), prior, params
    )
    assert feats.shape == (2, 2 + 3)


def test_extract_features_missing_prior_is_a_config_error(rng):
    params = GrcslParams.init(rng, small_dims(use_prior=True))
    with pytest.raises(ConfigError):
        extract_features(Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 1))), None, params)


# ------------------------------------------------------------------ #
# full forward
# ------------------------------------------------------------------ #


def window_inputs(rng, b=2, t_in=5, n=3):
    values = rng.normal(size=(b, t_in, n, 1))
    tod = np.tile(np.linspace(0.1, 0.2, t_in)[None, :, None, None], (b, 1, n, 1))
    return values, tod


def test_forward_emits_one_graph_pair_per_step(rng):
    params = GrcslParams.init(rng, small_dims())
    values, tod = window_inputs(rng)
    fwd = grcsl_forward_batch(values, tod, None, params)
    assert len(fwd.intra) == len(fwd.inter) == len(fwd.reconstructions) == 4
    for g in fwd.intra:
        assert g.shape == (2, 3, 3)
        assert np.all((g.data >= 0.0) & (g.data < 1.0))
        np.testing.assert_array_equal(np.diagonal(g.data, axis1=-2, axis2=-1), 0.0)
    for g in fwd.inter:
        assert np.all((g.data > 0.0) & (g.data < 1.0))
    for r in fwd.reconstructions:
        assert r.shape == (2, 3, 2)


def test_forward_rejects_bad_rank_and_short_windows(rng):
    params = GrcslParams.init(rng, small_dims())
    with pytest.raises(ShapeError):
        grcsl_forward_batch(np.zeros((2, 3, 1)), np.zeros((2, 3, 1)), None, params)
    with pytest.raises(ShapeError):
        grcsl_forward_batch(np.zeros((1, 1, 3, 1)), np.zeros((1, 1, 3, 1)), None, params)


def test_forward_is_causal_in_the_tick_index(rng):
    # Graphs at step t see ticks 1..t only; changing tick p must leave
    # every pair emitted before p untouched and every later pair perturbed.
    params = GrcslParams.init(rng, small_dims())
    values, tod = window_inputs(rng, b=1, t_in=6)
    base = grcsl_forward_batch(values, tod, None, params)
    bumped = values.copy()
    bumped[0, 3] += 1.0
    alt = grcsl_forward_batch(bumped, tod, None, params)
    for j in range(5):
        same = np.array_equal(base.intra[j].data, alt.intra[j].data) and np.array_equal(
            base.inter[j].data, alt.inter[j].data
        )
        assert same == (j + 1 < 3), f"step index {j}"


def test_forward_same_seed_same_graphs(rng):
    dims = small_dims()
    p1 = GrcslParams.init(np.random.default_rng(7), dims)
    p2 = GrcslParams.init(np.random.default_rng(7), dims)
    for (n1, t1), (n2, t2) in zip(p1.named_parameters(), p2.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(t1.data, t2.data)
    values, tod = window_inputs(rng)
    seq1, _ = grcsl_forward(values[0], tod[0], None, p1)
    seq2, _ = grcsl_forward(values[0], tod[0], None, p2)
    np.testing.assert_array_equal(seq1.intra, seq2.intra)
    np.testing.assert_array_equal(seq1.inter, seq2.inter)


def test_forward_train_mode_draws_fresh_noise(rng):
    params = GrcslParams.init(rng, small_dims())
    values, tod = window_inputs(rng, b=1)
    gen = np.random.default_rng(0)
    a = grcsl_forward_batch(values, tod, None, params, train=True, rng=gen)
    b = grcsl_forward_batch(values, tod, None, params, train=True, rng=gen)
    assert not np.array_equal(a.inter[0].data, b.inter[0].data)


def test_parameter_names_are_unique(rng):
    params = GrcslParams.init(rng, small_dims(use_prior=True))
    names = [name for name, _ in params.named_parameters()]
    assert len(names) == len(set(names))
    assert all(t.requires_grad for t in params.parameters())


# ------------------------------------------------------------------ #
# emitted sequences and export
# ------------------------------------------------------------------ #


def test_graph_seq_validates_ranges_and_diagonal():
    ok = np.zeros((2, 3, 3))
    with pytest.raises(ValueError):
        CausalGraphSeq(intra=ok, inter=ok + 1.5)
    bad_diag = ok.copy()
    bad_diag[0, 1, 1] = 0.4
    with pytest.raises(ValueError):
        CausalGraphSeq(intra=bad_diag, inter=ok)
    with pytest.raises(ShapeError):
        CausalGraphSeq(intra=np.zeros((2, 3, 3)), inter=np.zeros((2, 2, 2)))
    with pytest.raises(ShapeError):
        CausalGraphSeq(intra=np.zeros((2, 3, 2)), inter=np.zeros((2, 3, 2)))
    seq = CausalGraphSeq(intra=ok, inter=ok, start_index=5, start_ts=100)
    assert seq.steps == 2 and seq.num_nodes == 3


def test_export_graph_edges_writes_thresholded_rows(tmp_path):
    intra = np.zeros((2, 2, 2))
    inter = np.zeros((2, 2, 2))
    intra[0, 0, 1] = 0.9  # step 2, lag 0, edge b -> a
    inter[1, 1, 0] = 0.7  # step 3, lag 1, edge a -> b
    inter[1, 0, 1] = 0.4  # below threshold, must not appear
    seq = CausalGraphSeq(intra=intra, inter=inter, start_ts=1000)
    path = tmp_path / "edges.csv"
    count = export_graph_edges(str(path), [seq], ["a", "b"], threshold=0.5)
    assert count == 2
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["window_start_ts", "step", "lag", "src_id", "dst_id", "weight"]
    assert rows[1] == ["1000", "2", "0", "b", "a", "0.9"]
    assert rows[2] == ["1000", "3", "1", "a", "b", "0.7"]


def test_export_graph_edges_empty_sequence_writes_header_only(tmp_path):
    seq = CausalGraphSeq(intra=np.zeros((1, 2, 2)), inter=np.zeros((1, 2, 2)))
    path = tmp_path / "edges.csv"
    assert export_graph_edges(str(path), [seq], ["a", "b"]) == 0
    assert path.read_text().strip().count("\n") == 0


# ------------------------------------------------------------------ #
# dimension validation
# ------------------------------------------------------------------ #


def test_dims_feature_width_depends_on_prior_branch():
    assert small_dims(use_prior=False).d_feat == 2
    assert small_dims(use_prior=True).d_feat == 5


def test_dims_validation_rejects_bad_widths():
    with pytest.raises(ConfigError):
        small_dims(tau=0.0).validate()
    with pytest.raises(ConfigError):
        small_dims(heads=0).validate()
    with pytest.raises(ConfigError):
        small_dims(use_prior=True, d_s=0).validate()
