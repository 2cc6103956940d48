import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracball.errors import DomainError
from fracball.geometry import (BallDomain, ProblemParams, ball_volume, boundary_distance,
                               build_graded_mesh, centered_ball, fnv1a64, in_cone, mesh_for,
                               mesh_hash, unit_ball)


def test_fnv1a_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_ball_domain_defaults():
    b = unit_ball(3)
    assert b.center == (0.0, 0.0, 1.0)
    assert np.allclose(b.lowest_point(), 0.0)
    assert b.contains([0.0, 0.0, 1.0])
    assert not b.contains([0.0, 0.0, 0.0])
    assert b.contains([0.0, 0.0, 0.0], strict=False)
    assert np.allclose(b.to_centered([0.0, 0.0, 2.0]), [0, 0, 1])


@pytest.mark.parametrize("kw", [dict(dim=1), dict(dim=2, radius=0.0), dict(dim=2, center=(0, 0, 1))])
def test_ball_domain_rejects(kw):
    with pytest.raises(DomainError):
        BallDomain(**kw)


@pytest.mark.parametrize("N,M", [(2, 8), (2, 16), (3, 8), (3, 12)])
def test_weights_sum_to_volume(N, M):
    mesh = build_graded_mesh(unit_ball(N), M)
    assert mesh.n == M * M
    assert mesh.weights.sum() == pytest.approx(ball_volume(N), rel=1e-12)
    assert np.all(mesh.weights > 0)


@pytest.mark.parametrize("cl", [0.0, 1.0, 1.5])
def test_nodes_inside_ball(cl):
    for N in (2, 3):
        mesh = build_graded_mesh(unit_ball(N), 10, angular_clustering=cl)
        assert np.all(boundary_distance(mesh.domain, mesh.nodes) > 0)


def test_grading_concentrates_nodes_near_origin():
    mesh = build_graded_mesh(unit_ball(2), 16)
    r = np.linalg.norm(mesh.nodes, axis=-1)
    assert np.min(r) < 0.01
    assert np.count_nonzero(r < 0.25) > mesh.n // 4


@settings(max_examples=50, deadline=None)
@given(tau=st.floats(0.01, 0.99), phi=st.floats(-1.5, 1.5))
def test_param_map_round_trip(tau, phi):
    mesh = build_graded_mesh(unit_ball(2), 8)
    a, b = mesh.param_to_meridian(tau, phi)
    t2, p2 = mesh.meridian_to_param(a, b)
    assert t2 == pytest.approx(tau, rel=1e-10)
    assert p2 == pytest.approx(phi, abs=1e-10)


def test_outside_points_map_to_tau_at_least_one():
    mesh = build_graded_mesh(unit_ball(2), 8)
    t, _ = mesh.meridian_to_param(np.array([0.0, 1.5]), np.array([2.5, 1.0]))
    assert np.all(t >= 1.0)


def test_reflection_pairs_mirror_nodes():
    mesh = build_graded_mesh(unit_ball(2), 8)
    i, j = mesh.reflection_pairs()
    assert np.allclose(mesh.nodes[i, 0], -mesh.nodes[j, 0])
    assert np.allclose(mesh.nodes[i, 1], mesh.nodes[j, 1])
    assert build_graded_mesh(unit_ball(3), 8).reflection_pairs() is None


def test_mesh_hash_is_deterministic_and_sensitive():
    b = unit_ball(2)
    h = mesh_hash(b, 16, 2.0)
    assert h == mesh_hash(b, 16, 2.0)
    assert len(h) == 16
    assert len({h, mesh_hash(b, 17, 2.0), mesh_hash(b, 16, 3.0), mesh_hash(unit_ball(3), 16, 2.0),
                mesh_hash(b, 16, 2.0, 1.0)}) == 5
    # zero clustering keeps the hash of the uniform mesh
    assert mesh_hash(b, 16, 2.0, 0.0) == h


def test_mesh_for_uses_params():
    pr = ProblemParams(3, 0.5, 5.0, resolution=6, angular_clustering=1.5)
    m = mesh_for(pr)
    assert m.shape == (6, 6)
    assert m.mesh_hash == mesh_hash(unit_ball(3), 6, 2.0, 1.5)


@pytest.mark.parametrize("kw", [dict(resolution=3), dict(grading_exponent=0.5),
                                dict(angular_clustering=2.0)])
def test_build_mesh_rejects(kw):
    args = dict(resolution=8)
    args.update(kw)
    with pytest.raises(DomainError):
        build_graded_mesh(unit_ball(2), **args)


def test_mesh_rejects_high_dimension_and_off_axis_center():
    with pytest.raises(DomainError):
        build_graded_mesh(unit_ball(4), 8)
    with pytest.raises(DomainError):
        build_graded_mesh(BallDomain(3, center=(0.5, 0.0, 1.0)), 8)


@pytest.mark.parametrize("kw", [dict(dim=1), dict(alpha=1.0), dict(alpha=0.0), dict(p=-1.0),
                                dict(s=-0.1), dict(p=float("inf")), dict(resolution=2),
                                dict(angular_clustering=-0.1)])
def test_problem_params_rejects(kw):
    args = dict(dim=2, alpha=0.5, p=3.0)
    args.update(kw)
    with pytest.raises(DomainError):
        ProblemParams(**args)


def test_problem_params_derived():
    pr = ProblemParams(2, 0.5, 3.0)
    assert pr.critical_p == pytest.approx(1.5)
    assert pr.sigma0 == pytest.approx(1.0)


def test_in_cone():
    assert in_cone([0.0, 0.3])
    assert in_cone([0.03, 0.3])
    assert not in_cone([0.1, 0.3])
    assert not in_cone([0.0, 0.0])
    assert not in_cone([0.0, -0.2])


@settings(max_examples=50, deadline=None)
@given(t=st.floats(0.01, 0.99), frac=st.floats(0.0, 0.99))
def test_in_cone_contains_defining_balls(t, frac):
    ang = 1.0
    x = np.array([frac * t / 8 * math.sin(ang), t + frac * t / 8 * math.cos(ang)])
    assert in_cone(x)


def test_centered_ball_and_volume():
    assert centered_ball(2).center == (0.0, 0.0)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)
