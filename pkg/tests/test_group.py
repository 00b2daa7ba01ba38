import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rectilab.group import (GroupModel, HorizontalRotation, LipschitzViolation, Region,
                            VerticalPlane, dist_to_vertical_plane, mcshane_extend)

MODELS = [GroupModel.parabolic(2, 1), GroupModel.parabolic(3, 1), GroupModel.parabolic(3, 2),
          GroupModel.parabolic(4, 2), GroupModel.heisenberg()]

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def pts(model):
    return arrays(np.float64, (model.width,), elements=coord)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.n}{m.k}")
@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_left_invariance_and_symmetry(model, data):
    a, b, g = (data.draw(pts(model)) for _ in range(3))
    d = model.dist(a, b)
    assert model.dist(model.compose(g, a), model.compose(g, b)) == pytest.approx(d, rel=1e-9,
                                                                                  abs=1e-9)
    assert model.dist(b, a) == pytest.approx(d, rel=1e-9, abs=1e-12)
    assert model.dist(a, a) == 0.0


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.n}{m.k}")
@settings(max_examples=60, deadline=None)
@given(data=st.data(), lam=st.floats(0.05, 20))
def test_dilation_is_homogeneous_and_an_automorphism(model, data, lam):
    a, b = data.draw(pts(model)), data.draw(pts(model))
    assert model.norm(model.dilate(a, lam)) == pytest.approx(lam * model.norm(a), rel=1e-9,
                                                             abs=1e-12)
    lhs = model.dilate(model.compose(a, b), lam)
    rhs = model.compose(model.dilate(a, lam), model.dilate(b, lam))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_heisenberg_product_is_not_commutative():
    H = GroupModel.heisenberg()
    a, b = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert H.compose(a, b)[-1] == 0.5
    assert H.compose(b, a)[-1] == -0.5
    np.testing.assert_array_equal(H.compose(a, H.inverse(a)), 0.0)


def test_heisenberg_rejects_reflections():
    H = GroupModel.heisenberg()
    with pytest.raises(ValueError):
        H.rotate(np.zeros(3), np.diag([1.0, -1.0]))


def test_model_validation():
    with pytest.raises(ValueError):
        GroupModel.parabolic(2, 2)
    with pytest.raises(ValueError):
        GroupModel("heisenberg", 3, 1)
    assert GroupModel.from_dict(GroupModel.parabolic(3, 1).to_dict()) == GroupModel.parabolic(3, 1)


def test_plane_distance_is_spatial():
    L = VerticalPlane.coordinate(3, [0, 1], shift=[0, 0, 2.0])
    a = np.array([[5.0, -1.0, 3.0, 100.0]])
    assert dist_to_vertical_plane(a, L)[0] == pytest.approx(1.0)
    N = L.normal_basis()
    np.testing.assert_allclose(np.abs(N), [[0, 0, 1]], atol=1e-12)


def test_plane_rejects_bad_basis():
    with pytest.raises(ValueError):
        VerticalPlane(np.array([[1.0, 1.0]]), np.zeros(2))


@pytest.mark.parametrize("kind", ["ball", "cube", "cylinder"])
def test_region_gauge_is_homogeneous(kind):
    model = GroupModel.parabolic(2, 1)
    rng = np.random.default_rng(0)
    P = rng.normal(size=(50, 3))
    reg = Region(kind, np.zeros(3), 1.0)
    np.testing.assert_allclose(reg.gauge(model.dilate(P, 3.0), model), 3 * reg.gauge(P, model))


def test_slab_membership_uses_interval():
    model = GroupModel.parabolic(2, 1)
    s = Region.slab([0, 0], 1.0, (0.0, 2.0))
    assert s.contains(np.array([[0.5, 0.5, 1.9]]), model)[0]
    assert not s.contains(np.array([[0.5, 0.5, 2.0]]), model)[0]
    back = Region.from_dict(s.to_dict())
    assert back.kind == "slab" and back.interval == s.interval
    np.testing.assert_array_equal(back.center, s.center)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_mcshane_extension_is_lipschitz_and_odd(seed):
    model = GroupModel.parabolic(2, 1)
    rng = np.random.default_rng(seed)
    S = rng.uniform(-0.4, 0.4, size=(12, 3))
    # values of a 1-Lipschitz function
    f = np.sin(S[:, 0]) + 0.5 * np.abs(S[:, 1])
    reg = Region.ball(np.zeros(3), 1.0)
    phi = mcshane_extend(S, f, 2.0, reg, model, parity="odd")
    Q = rng.uniform(-1.2, 1.2, size=(200, 3))
    Qr = Q.copy()
    Qr[:, :-1] *= -1
    np.testing.assert_allclose(phi(Qr), -phi(Q), atol=1e-12)
    assert np.all(phi(Q[reg.gauge(Q, model) >= 1.0]) == 0)
    raw = mcshane_extend(S, f, 2.0, reg, model)
    inner = reg.gauge(S, model) <= 0.5
    np.testing.assert_allclose(raw(S[inner]), f[inner], atol=1e-12)


def test_mcshane_rejects_violations():
    model = GroupModel.parabolic(2, 1)
    S = np.array([[0, 0, 0], [0.1, 0, 0]], dtype=float)
    with pytest.raises(LipschitzViolation):
        mcshane_extend(S, [0.0, 1.0], 1.0, Region.ball(np.zeros(3), 1.0), model)


def test_random_rotation_is_proper():
    R = HorizontalRotation.random(3, np.random.default_rng(1))
    assert R.det == pytest.approx(1.0)
