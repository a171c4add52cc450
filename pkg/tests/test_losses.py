import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fdcheck import fd_check_total_loss, random_instance
from oracles import brute_chamfer, brute_one_sided, brute_uhd
from sclab.losses import (CompletionLevels, LossWeights, chamfer, normal_cosine_loss, one_sided_chamfer,
                          total_loss, uhd)

cloud = arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)),
               elements=st.floats(-5, 5, allow_nan=False, width=32))


def test_fixture_values():
    assert chamfer([[0, 0, 0]], [[1, 0, 0]]) == 2.0
    assert one_sided_chamfer([[0, 0, 0]], [[3, 4, 0]]) == 25.0
    assert uhd([[0, 0, 0], [2, 0, 0]], [[0, 0, 0]]) == 2.0
    assert normal_cosine_loss([[1, 0, 0]], [[0, 1, 0]]) == 1.0
    assert LossWeights() == LossWeights(1.0, 1.0, 1.0, 1e-2)


def test_kernels_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        P = rng.normal(size=(rng.integers(1, 500), 3))
        Q = rng.normal(size=(rng.integers(1, 500), 3))
        assert chamfer(P, Q) == pytest.approx(brute_chamfer(P, Q), rel=1e-12)
        assert one_sided_chamfer(P, Q) == pytest.approx(brute_one_sided(P, Q), rel=1e-12)
        assert uhd(P, Q) == pytest.approx(brute_uhd(P, Q), rel=1e-12)


def test_empty_sets_raise():
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 3)), [[0, 0, 0]])


@settings(max_examples=80, deadline=None)
@given(cloud, cloud)
def test_symmetry_and_nonnegativity(P, Q):
    assert chamfer(P, Q) == chamfer(Q, P)
    assert chamfer(P, Q) >= 0 and one_sided_chamfer(P, Q) >= 0 and uhd(P, Q) >= 0
    assert chamfer(P, P) == 0.0
    # uhd bounds the largest term of the one-sided sum
    assert uhd(P, Q) ** 2 >= one_sided_chamfer(P, Q) * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(cloud, cloud, st.sampled_from([-3.0, -0.5, 0.25, 1.0, 2.0]),
       arrays(np.float64, 3, elements=st.sampled_from([-2.0, -0.5, 0.0, 0.75, 4.0])))
def test_translation_and_scale(P, Q, s, t):
    # dyadic scales and shifts keep the arithmetic exact
    assert chamfer(P + t, Q + t) == pytest.approx(chamfer(P, Q), rel=1e-9, abs=1e-9)
    assert one_sided_chamfer(P * s, Q * s) == pytest.approx(s * s * one_sided_chamfer(P, Q), rel=1e-12)
    assert chamfer(P * s, Q * s) == pytest.approx(s * s * chamfer(P, Q), rel=1e-12)
    assert uhd(P * s, Q * s) == pytest.approx(abs(s) * uhd(P, Q), rel=1e-12)


def test_subset_has_zero_one_sided():
    rng = np.random.default_rng(2)
    Q = rng.normal(size=(30, 3))
    assert one_sided_chamfer(Q[:10], Q) == 0.0
    assert uhd(Q[:10], Q) == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_total_loss_gradient_fd(seed):
    assert fd_check_total_loss(seed) <= 1e-4


def test_total_loss_terms_and_shapes():
    rng = np.random.default_rng(9)
    levels, gts, normals, ngt, partial, center, cgt = random_instance(rng)
    value, g = total_loss(CompletionLevels(levels, normals, center), gts, partial, cgt, ngt)
    t = g.terms
    assert value == pytest.approx(t["cd"] + t["ocd"] + t["center_mse"] + 1e-2 * t["normal_cs"], rel=1e-12)
    assert t["center_mse"] == pytest.approx(np.mean((center - cgt) ** 2))
    with pytest.raises(ValueError):
        CompletionLevels(levels[:3] + [levels[2]], normals, center)
