import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from iurewrite.heads import (PROB_FLOOR, EditGridHead, HeadError, IntentionHead, MatchHead, MergeMode,
                             PredictedEditGrid, SelectionHead, intention_distributions,
                             merge_relevance, pair_features, pool_selected)

D = 8


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


def test_selection_head_shapes_and_range():
    head = SelectionHead(D, 16)
    r = head(torch.randn(3, 5, D), torch.randn(3, D))
    assert r.shape == (3, 5)
    assert ((r > 0) & (r < 1)).all()


def test_match_head_checks_widths():
    head = MatchHead(D, 16)
    m = head(torch.randn(4, D), torch.randn(4, D), torch.randn(4, D))
    assert m.shape == (4,)
    with pytest.raises(HeadError):
        head(torch.randn(4, D), torch.randn(4, D + 1), torch.randn(4, D))


def test_pair_features():
    wc, wu = torch.randn(1, 3, D), torch.randn(1, 2, D)
    f = pair_features(wc, wu)
    assert f.shape == (1, 3, 2, 2 * D + 1)
    torch.testing.assert_close(f[0, 1, 0, :D], wc[0, 1] * wu[0, 0])
    torch.testing.assert_close(f[0, 1, 0, -1], torch.cosine_similarity(wc[0, 1], wu[0, 0], dim=0))


def test_edit_grid_is_distribution_and_padding_invariant():
    head = EditGridHead(D, 8).double()
    wc, wu = torch.randn(1, 5, D, dtype=torch.float64), torch.randn(1, 3, D, dtype=torch.float64)
    P = head(wc, wu)
    assert P.shape == (1, 5, 3, 3)
    torch.testing.assert_close(P.sum(-1), torch.ones(1, 5, 3, dtype=torch.float64))
    # same example padded inside a larger batch grid
    wc2 = torch.cat([wc, torch.randn(1, 6, D, dtype=torch.float64)], 1)
    wu2 = torch.cat([wu, torch.randn(1, 4, D, dtype=torch.float64)], 1)
    cv = torch.tensor([[True] * 5 + [False] * 6])
    uv = torch.tensor([[True] * 3 + [False] * 4])
    P2 = head(wc2, wu2, cv, uv)
    torch.testing.assert_close(P2[:, :5, :3], P, rtol=0, atol=1e-12)


def test_edit_grid_rejects_empty():
    with pytest.raises(HeadError):
        EditGridHead(D, 8)(torch.randn(1, 0, D), torch.randn(1, 2, D))


def test_intention_distributions_floor_and_empty_selection():
    head = IntentionHead(D, 4, 16)
    c = torch.randn(3, D)
    assert intention_distributions(head, c, torch.randn(D), torch.randn(D), ()) is None
    pair = intention_distributions(head, list(c), torch.randn(D), torch.randn(D), (0, 2))
    for p in (pair.p_ctx.detach(), pair.p_rw.detach()):
        assert p.shape == (4,)
        assert float(p.min()) >= PROB_FLOOR / 2
        assert abs(float(p.sum()) - 1) < 1e-6


def test_pool_selected():
    c = torch.arange(12.0).view(1, 3, 4)
    out = pool_selected(c, torch.tensor([[True, False, True]]))
    torch.testing.assert_close(out, (c[0, 0] + c[0, 2])[None] / 2)
    assert (pool_selected(c, torch.zeros(1, 3, dtype=torch.bool)) == 0).all()


# -- relevance merging ---------------------------------------------------------

def test_worked_cell_example():
    out = merge_relevance(np.array([[[0.2, 0.5, 0.3]]]), [0.4], 0.5)
    np.testing.assert_allclose(out[0, 0], [1 / 7, 1 / 2, 5 / 14], atol=1e-12)


def test_merge_identities():
    P = np.random.default_rng(1).dirichlet(np.ones(3), size=(4, 2))
    np.testing.assert_allclose(merge_relevance(P, np.zeros(4)), P, atol=1e-15)
    assert np.array_equal(merge_relevance(P, np.ones(4) * 0.3, mode="HARD", tau=0.0), P)
    assert np.array_equal(merge_relevance(P, np.ones(4) * 0.3, mode=MergeMode.OFF), P)


def test_hard_merge_zeroes_irrelevant_rows():
    P = np.full((2, 1, 3), 1 / 3)
    out = merge_relevance(P, [0.2, 0.9], mode="HARD", tau=0.5)
    assert out[0, 0].tolist() == [1.0, 0.0, 0.0]
    assert np.array_equal(out[1], P[1])


def test_merge_keeps_input_type_and_rejects_bad_alpha():
    P = torch.full((1, 1, 3), 1 / 3)
    assert torch.is_tensor(merge_relevance(P, torch.tensor([0.5])))
    with pytest.raises(HeadError):
        merge_relevance(P, torch.tensor([0.5]), alpha=1.5)


def test_predicted_grid_merge_uses_row_owner():
    P = np.full((3, 1, 3), 1 / 3)
    g = PredictedEditGrid(P, [0, 0, 1]).merge([0.0, 1.0])
    assert g.merged
    np.testing.assert_allclose(g.P[0], P[0])
    assert g.P[2, 0, 0] < 1 / 3


cells = st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3).map(lambda v: np.array(v) / sum(v))
unit = st.floats(0.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(cells, unit, unit, unit)
def test_soft_merge_normalised_and_monotone(p, r1, r2, alpha):
    lo, hi = sorted((r1, r2))
    a = merge_relevance(p[None, None], [lo], alpha)[0, 0]
    b = merge_relevance(p[None, None], [hi], alpha)[0, 0]
    assert abs(a.sum() - 1) < 1e-12 and abs(b.sum() - 1) < 1e-12
    assert b[0] <= a[0] + 1e-12
    assert b[1] + b[2] >= a[1] + a[2] - 1e-12


@settings(max_examples=300, deadline=None)
@given(cells, unit, unit, st.floats(0.01, 1.0))
def test_soft_merge_raises_insert_when_below_alpha(p, r1, r2, alpha):
    lo, hi = sorted((r1, r2))
    if hi - lo < 1e-6 or p[1] >= alpha:
        return
    a = merge_relevance(p[None, None], [lo], alpha)[0, 0]
    b = merge_relevance(p[None, None], [hi], alpha)[0, 0]
    assert b[1] > a[1]


def test_insert_share_can_fall_when_already_above_alpha():
    # d/dr of (p_ins + alpha r) / (1 + r) has the sign of alpha - p_ins
    p = np.array([[[0.05, 0.9, 0.05]]])
    assert merge_relevance(p, [1.0], 0.5)[0, 0, 1] < 0.9


@settings(max_examples=300, deadline=None)
@given(cells, unit, unit)
def test_soft_merge_never_flips_an_edit_argmax_to_none(p, r, alpha):
    if p[0] >= max(p[1], p[2]):
        return
    assert merge_relevance(p[None, None], [r], alpha)[0, 0].argmax() != 0
