"""Rotation math: round trips, interpolation geometry, canonical forms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locomanip import lie

RNG = np.random.default_rng


def random_quat(rng):
    q = rng.standard_normal(4)
    return lie.quat_normalize(q)


def rotvecs(max_norm=math.pi - 1e-3):
    return st.builds(
        lambda seed, scale: _scaled_vec(seed, scale, max_norm),
        st.integers(0, 2**32 - 1), st.floats(0.0, 1.0),
    )


def _scaled_vec(seed, scale, max_norm):
    v = RNG(seed).standard_normal(3)
    n = np.linalg.norm(v)
    if n < 1e-12:
        return np.zeros(3)
    return v / n * scale * max_norm


def quats():
    return st.builds(lambda seed: random_quat(RNG(seed)), st.integers(0, 2**32 - 1))


def test_boxplus_identity_zero():
    np.testing.assert_allclose(
        lie.boxplus(lie.quat_identity(), np.zeros(3)), lie.quat_identity())


def test_boxplus_quarter_turn_x():
    # closed form: exp([pi/2, 0, 0]) = (cos pi/4, sin pi/4, 0, 0)
    q = lie.boxplus(lie.quat_identity(), np.array([math.pi / 2, 0.0, 0.0]))
    np.testing.assert_allclose(
        q, [math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0, 0.0], atol=1e-15)


def test_boxminus_self_is_zero():
    q = random_quat(RNG(1))
    np.testing.assert_allclose(lie.boxminus(q, q), np.zeros(3), atol=1e-12)


def test_boxminus_quarter_turn_z():
    # hand-evaluated log map of a 90 degree yaw
    qz = lie.quat_from_rpy(0.0, 0.0, math.pi / 2)
    np.testing.assert_allclose(
        lie.boxminus(qz, lie.quat_identity()), [0.0, 0.0, math.pi / 2], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(quats(), rotvecs())
def test_boxplus_boxminus_roundtrip(q, v):
    back = lie.boxminus(lie.boxplus(q, v), q)
    np.testing.assert_allclose(back, v, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(quats(), quats())
def test_boxminus_boxplus_recovers_target(p, q):
    rebuilt = lie.boxplus(q, lie.boxminus(p, q))
    assert lie.rotation_angle(rebuilt, p) < 1e-9


@settings(max_examples=100, deadline=None)
@given(quats(), quats())
def test_boxminus_magnitude_principal(p, q):
    assert np.linalg.norm(lie.boxminus(p, q)) <= math.pi + 1e-12


def test_boxminus_antipodal_deterministic():
    # half turn about a diagonal axis: both log signs are valid, the
    # canonical form picks the one whose dominant component is positive
    axis = np.array([1.0, -2.0, 0.5])
    axis /= np.linalg.norm(axis)
    q = lie.quat_exp(axis * math.pi)
    v = lie.boxminus(q, lie.quat_identity())
    assert abs(np.linalg.norm(v) - math.pi) < 1e-12
    assert v[np.argmax(np.abs(v))] > 0
    v2 = lie.boxminus(-q, lie.quat_identity())
    np.testing.assert_allclose(v, v2, atol=1e-15)


def test_slerp_endpoints_exact():
    qa = random_quat(RNG(2))
    qb = random_quat(RNG(3))
    np.testing.assert_array_equal(lie.slerp(qa, qb, 0.0), qa)
    np.testing.assert_array_equal(lie.slerp(qa, qb, 1.0), qb)


def test_slerp_midpoint_symmetry():
    qa = random_quat(RNG(4))
    qb = random_quat(RNG(5))
    mid = lie.slerp(qa, qb, 0.5)
    assert abs(lie.rotation_angle(qa, mid) - lie.rotation_angle(mid, qb)) < 1e-9


def test_slerp_domain_error():
    qa, qb = random_quat(RNG(6)), random_quat(RNG(7))
    with pytest.raises(ValueError):
        lie.slerp(qa, qb, 1.5)
    with pytest.raises(ValueError):
        lie.slerp(qa, qb, -0.1)


@settings(max_examples=100, deadline=None)
@given(quats(), quats(), st.floats(0.0, 1.0))
def test_slerp_stays_unit(qa, qb, alpha):
    assert abs(np.linalg.norm(lie.slerp(qa, qb, alpha)) - 1.0) < 1e-12


def test_slerp_constant_angular_rate():
    qa, qb = random_quat(RNG(8)), random_quat(RNG(9))
    alphas = np.linspace(0.0, 0.9, 10)
    delta = 0.1
    steps = [lie.rotation_angle(lie.slerp(qa, qb, a + delta), lie.slerp(qa, qb, a))
             for a in alphas]
    assert max(steps) - min(steps) < 1e-9


def test_lerp_cases():
    a = np.array([0.0, 0.0, 0.0])
    b = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(lie.lerp(a, b, 0.0), a)
    np.testing.assert_array_equal(lie.lerp(a, b, 1.0), b)
    np.testing.assert_allclose(lie.lerp(a, b, 0.5), [0.5, 1.0, 1.5])


def test_canonical_sign_w_nonnegative():
    for seed in range(20):
        q = random_quat(RNG(seed))
        assert q[0] >= 0.0
        np.testing.assert_allclose(lie.quat_canonicalize(-q), q)


def test_quat_rotate_matches_matrix():
    rng = RNG(21)
    for _ in range(20):
        q = random_quat(rng)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(
            lie.quat_rotate(q, v), lie.quat_to_matrix(q) @ v, atol=1e-12)


def test_matrix_quat_roundtrip():
    rng = RNG(22)
    for _ in range(20):
        q = random_quat(rng)
        back = lie.matrix_to_quat(lie.quat_to_matrix(q))
        assert lie.rotation_angle(back, q) < 1e-9


def test_pose_compose_inverse():
    rng = RNG(23)
    pose = lie.Pose(rng.standard_normal(3), random_quat(rng))
    other = lie.Pose(rng.standard_normal(3), random_quat(rng))
    both = pose.compose(other)
    p = pose.transform_point(other.transform_point(np.array([0.1, 0.2, 0.3])))
    np.testing.assert_allclose(both.transform_point([0.1, 0.2, 0.3]), p, atol=1e-12)
    ident = pose.compose(pose.inverse())
    np.testing.assert_allclose(ident.position, np.zeros(3), atol=1e-12)
    assert lie.rotation_angle(ident.orientation, lie.quat_identity()) < 1e-12


def test_batch_helpers_match_scalar():
    rng = RNG(24)
    qa = np.stack([random_quat(rng) for _ in range(16)])
    qb = np.stack([random_quat(rng) for _ in range(16)])
    vs = rng.standard_normal((16, 3))
    prod = lie.quat_mul_batch(qa, qb)
    rot = lie.quat_rotate_batch(qa, vs)
    ang = lie.quat_angle_batch(qa, qb)
    for i in range(16):
        np.testing.assert_allclose(prod[i], lie.quat_mul(qa[i], qb[i]), atol=1e-12)
        np.testing.assert_allclose(rot[i], lie.quat_rotate(qa[i], vs[i]), atol=1e-12)
        assert abs(ang[i] - lie.rotation_angle(qa[i], qb[i])) < 1e-9
