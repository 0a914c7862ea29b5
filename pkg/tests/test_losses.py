"""Penalty kernels, distillation loss, and their analytic gradients.

Closed-form oracles are asserted to 1e-12; gradients are checked against
central finite differences away from the kink at zero error.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarecast.dataset import RarityLevel
from rarecast.losses import (
    PenaltyContext,
    combined_loss,
    kd_loss,
    loss_landscape_rows,
    rare_loss,
    rare_penalty,
)

RARE = (RarityLevel.MODERATE, RarityLevel.VERY_RARE, RarityLevel.EXTREME_RARE)


def match_ctx(level: RarityLevel, horizon: int = 24) -> PenaltyContext:
    return PenaltyContext(expert_level=level, point_level=level, horizon=horizon)


# ------------------------------------------------------------ closed forms


def test_penalty_closed_forms():
    assert rare_penalty(0.5, match_ctx(RarityLevel.NORMAL)).value == pytest.approx(0.25, abs=1e-12)
    assert rare_penalty(-1.0, match_ctx(RarityLevel.MODERATE)).value == pytest.approx(
        math.e - 1.0, abs=1e-12
    )
    assert rare_penalty(1.0, match_ctx(RarityLevel.VERY_RARE)).value == pytest.approx(
        math.log(math.cosh(1.0)), abs=1e-12
    )
    assert rare_penalty(1.0, match_ctx(RarityLevel.EXTREME_RARE, horizon=24)).value == pytest.approx(
        math.exp(1.0 / 25.0) - 1.0, abs=1e-12
    )


def test_penalty_continuity_at_zero():
    eps = 1e-9
    for level in RarityLevel:
        ctx = match_ctx(level)
        assert abs(rare_penalty(+eps, ctx).value) <= 1e-8
        assert abs(rare_penalty(-eps, ctx).value) <= 1e-8
        zero = rare_penalty(0.0, ctx)
        assert zero.value == 0.0 and zero.d_dpred == 0.0


def test_penalty_over_branch_shapes():
    # moderate keeps the quadratic over-branch, the rarer levels soften it
    d = 2.0
    assert rare_penalty(d, match_ctx(RarityLevel.MODERATE)).value == pytest.approx(d * d)
    assert rare_penalty(d, match_ctx(RarityLevel.VERY_RARE)).value < d * d
    assert rare_penalty(d, match_ctx(RarityLevel.EXTREME_RARE)).value < rare_penalty(
        d, match_ctx(RarityLevel.VERY_RARE)
    ).value


def test_penalty_only_on_matching_points():
    # a rare expert scores non-matching points with the plain quadratic
    ctx = PenaltyContext(
        expert_level=RarityLevel.EXTREME_RARE, point_level=RarityLevel.NORMAL, horizon=16
    )
    assert rare_penalty(-2.0, ctx).value == pytest.approx(4.0, abs=1e-12)
    assert rare_penalty(-2.0, ctx).d_dpred == pytest.approx(-4.0, abs=1e-12)


def test_penalty_horizon_validation():
    with pytest.raises(ValueError):
        PenaltyContext(RarityLevel.NORMAL, RarityLevel.NORMAL, horizon=0)


def test_log_cosh_large_argument_stable():
    v = rare_penalty(50.0, match_ctx(RarityLevel.VERY_RARE)).value
    assert math.isfinite(v)
    assert v == pytest.approx(50.0 - math.log(2.0), abs=1e-12)


# -------------------------------------------------------- asymmetry shape


@settings(max_examples=200)
@given(
    delta=st.floats(1e-3, 10.0, exclude_min=True, allow_nan=False),
    level=st.sampled_from(RARE),
)
def test_under_prediction_costs_more(delta, level):
    ctx = match_ctx(level, horizon=16)
    over = rare_penalty(+delta, ctx).value
    under = rare_penalty(-delta, ctx).value
    assert over < under
    assert math.expm1(delta) > delta * delta  # exponential dominates quadratic


# ---------------------------------------------------------------- rare_loss


def test_rare_loss_is_mean_of_pointwise():
    pred = np.array([1.0, 2.0, 0.5])
    truth = np.array([0.0, 3.0, 0.5])
    levels = np.array([int(RarityLevel.VERY_RARE), int(RarityLevel.NORMAL), int(RarityLevel.VERY_RARE)])
    out = rare_loss(pred, truth, levels, RarityLevel.VERY_RARE, horizon=3)
    per_point = [
        rare_penalty(1.0, match_ctx(RarityLevel.VERY_RARE, 3)).value,
        1.0,  # non-matching point, quadratic on delta -1
        0.0,
    ]
    assert out.value == pytest.approx(np.mean(per_point), abs=1e-12)
    assert np.asarray(out.d_dpred).shape == pred.shape


def test_rare_loss_shape_mismatch():
    with pytest.raises(ValueError):
        rare_loss(np.zeros(3), np.zeros(4), np.zeros(3), RarityLevel.NORMAL)


def _fd(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


@pytest.mark.parametrize("level", list(RarityLevel))
@pytest.mark.parametrize("delta", [-3.0, -0.4, 0.4, 3.0])
def test_penalty_gradient_finite_difference(level, delta):
    ctx = match_ctx(level, horizon=12)
    ana = rare_penalty(delta, ctx).d_dpred
    fd = _fd(lambda d: rare_penalty(d, ctx).value, delta)
    assert ana == pytest.approx(fd, abs=1e-5)


def test_rare_loss_gradient_finite_difference():
    rng = np.random.default_rng(11)
    pred = rng.normal(size=8)
    truth = rng.normal(size=8)
    pred = np.where(np.abs(pred - truth) < 1e-3, truth + 0.01, pred)  # stay off the kink
    levels = rng.integers(0, 4, size=8)
    out = rare_loss(pred, truth, levels, RarityLevel.EXTREME_RARE, horizon=8)
    g = np.asarray(out.d_dpred)
    for i in range(8):
        def f(v, i=i):
            p = pred.copy()
            p[i] = v
            return rare_loss(p, truth, levels, RarityLevel.EXTREME_RARE, horizon=8).value

        assert g[i] == pytest.approx(_fd(f, pred[i]), abs=1e-6)


# ----------------------------------------------------------------- kd_loss


def test_kd_loss_oracles():
    assert kd_loss(np.array([1.0]), np.array([0.0])).value == pytest.approx(0.25, abs=1e-12)
    assert kd_loss(np.array([0.0]), np.array([3.0])).value == pytest.approx(0.5625, abs=1e-12)
    assert kd_loss(np.zeros(4), np.zeros(4)).value == 0.0


def test_kd_loss_bounded_and_even():
    rng = np.random.default_rng(3)
    s, t = rng.normal(size=50) * 100, rng.normal(size=50) * 100
    assert kd_loss(s, t).value < 1.0
    assert kd_loss(s, t).value == pytest.approx(kd_loss(t, s).value, abs=1e-15)


def test_kd_loss_gradient_finite_difference():
    rng = np.random.default_rng(5)
    s, t = rng.normal(size=6), rng.normal(size=6)
    g = np.asarray(kd_loss(s, t).d_dpred)
    for i in range(6):
        def f(v, i=i):
            p = s.copy()
            p[i] = v
            return kd_loss(p, t).value

        assert g[i] == pytest.approx(_fd(f, s[i]), abs=1e-7)


def test_kd_loss_shape_mismatch():
    with pytest.raises(ValueError):
        kd_loss(np.zeros(3), np.zeros(2))


@settings(max_examples=100)
@given(st.floats(-100, 100, allow_nan=False), st.floats(-100, 100, allow_nan=False))
def test_kd_loss_contribution_in_unit_interval(s, t):
    v = kd_loss(np.array([s]), np.array([t])).value
    assert 0.0 <= v < 1.0


# ------------------------------------------------------------ combined_loss


def test_combined_loss_composition():
    rng = np.random.default_rng(9)
    pred, truth, teacher = rng.normal(size=5), rng.normal(size=5), rng.normal(size=5)
    levels = np.full(5, int(RarityLevel.MODERATE))
    rare = rare_loss(pred, truth, levels, RarityLevel.MODERATE, 5)
    kd = kd_loss(pred, teacher)
    both = combined_loss(pred, truth, teacher, levels, RarityLevel.MODERATE, beta=0.7, horizon=5)
    assert both.value == pytest.approx(rare.value + 0.7 * kd.value, abs=1e-12)
    np.testing.assert_allclose(
        np.asarray(both.d_dpred),
        np.asarray(rare.d_dpred) + 0.7 * np.asarray(kd.d_dpred),
        atol=1e-15,
    )


def test_combined_loss_normal_expert_skips_distillation():
    pred, truth = np.ones(3), np.zeros(3)
    levels = np.zeros(3, dtype=int)
    out = combined_loss(pred, truth, None, levels, RarityLevel.NORMAL, beta=2.0, horizon=3)
    assert out.value == pytest.approx(1.0)


def test_combined_loss_requires_teacher():
    pred, truth = np.ones(3), np.zeros(3)
    levels = np.ones(3, dtype=int)
    with pytest.raises(ValueError, match="teacher"):
        combined_loss(pred, truth, None, levels, RarityLevel.MODERATE, beta=0.5, horizon=3)
    with pytest.raises(ValueError, match="beta"):
        combined_loss(pred, truth, None, levels, RarityLevel.MODERATE, beta=-0.5, horizon=3)
    # beta 0 is the plain rarity loss, no teacher needed
    out = combined_loss(pred, truth, None, levels, RarityLevel.MODERATE, beta=0.0, horizon=3)
    assert out.value == pytest.approx(1.0)


# ---------------------------------------------------------------- landscape


def test_loss_landscape_rows_grid():
    rows = loss_landscape_rows(horizon=16, lo=-2.0, hi=2.0, steps=5)
    assert len(rows) == 4 * 5
    at_zero = [r for r in rows if r[0] == 0.0]
    assert len(at_zero) == 4 and all(v == 0.0 for _, _, v in at_zero)
    names = {name for _, name, _ in rows}
    assert names == {"normal", "moderate", "very_rare", "extreme_rare"}
