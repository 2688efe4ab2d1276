"""Embedded targets: projectors, extrinsic forms, magnetic three-form data."""

import numpy as np
import pytest

from magdirac import (MagdiracError, OffManifoldError, check_magnetic_skew,
                      flat_target, h_surface_magnetic, magnetic_Z, magnetic_none,
                      second_fundamental_form, shape_operator, sphere_target,
                      volume_form_magnetic)
from magdirac.target import custom_magnetic


def random_on_sphere(n, count, seed=0):
    rng = np.random.default_rng(seed)
    t = sphere_target(n)
    return t, t.project(rng.standard_normal((count, n + 1)))


def test_sphere_projection_examples():
    s2 = sphere_target(2)
    assert np.allclose(s2.project(np.array([2.0, 0.0, 0.0])), [1.0, 0.0, 0.0])
    with pytest.raises(OffManifoldError):
        s2.project(np.zeros(3))
    # projector at the pole kills e3 and fixes e1, e2
    P = s2.tangent_projector(np.array([0.0, 0.0, 1.0]))
    assert np.allclose(P @ np.array([0.0, 0.0, 1.0]), 0.0)
    assert np.allclose(P @ np.array([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    # normal frame is the point itself
    assert np.allclose(s2.normal_frame(np.array([0.0, 1.0, 0.0])), [[0.0, 1.0, 0.0]])


def test_projection_idempotent_and_projector_algebra():
    for n in (2, 3):
        t, pts = random_on_sphere(n, 200, seed=n)
        assert np.max(np.abs(t.project(pts) - pts)) < 1e-12
        P = t.tangent_projector(pts)
        assert np.max(np.abs(np.einsum("...ij,...jk->...ik", P, P) - P)) < 1e-10
        assert np.max(np.abs(P - np.swapaxes(P, -1, -2))) < 1e-14
        assert np.max(np.abs(np.trace(P, axis1=-2, axis2=-1) - t.n)) < 1e-10
        nu = t.normal_frame(pts)
        assert np.max(np.abs(np.einsum("...ij,...lj->...li", P, nu))) < 1e-12


def test_flat_target_trivial():
    f = flat_target(3)
    y = np.array([0.3, -0.7, 2.0])
    assert np.array_equal(f.project(y), y)
    assert np.allclose(f.tangent_projector(y), np.eye(3))
    X = np.array([1.0, 2.0, 3.0])
    assert np.allclose(second_fundamental_form(f, y, X, X), 0.0)
    assert np.allclose(shape_operator(f, y, np.zeros(3), X), 0.0)


def test_second_fundamental_form_sphere():
    s2 = sphere_target(2)
    e1, e3 = np.eye(3)[0], np.eye(3)[2]
    # II(e1, e1) at the north pole is the outward normal
    assert np.allclose(second_fundamental_form(s2, e3, e1, e1), e3)
    t, pts = random_on_sphere(2, 100, seed=5)
    rng = np.random.default_rng(6)
    X = rng.standard_normal(pts.shape)
    Y = rng.standard_normal(pts.shape)
    P = t.tangent_projector(pts)
    Xt = np.einsum("...ij,...j->...i", P, X)
    Yt = np.einsum("...ij,...j->...i", P, Y)
    II = second_fundamental_form(t, pts, X, Y)
    # closed form <X,Y> y, symmetry, normal-valuedness
    ref = np.einsum("...i,...i->...", Xt, Yt)[..., None] * pts
    assert np.max(np.abs(II - ref)) < 1e-12
    assert np.max(np.abs(II - second_fundamental_form(t, pts, Y, X))) < 1e-10
    assert np.max(np.abs(np.einsum("...ij,...j->...i", P, II))) < 1e-10
    with pytest.raises(OffManifoldError):
        second_fundamental_form(t, 1.5 * pts[0], X[0], Y[0])


def test_second_fundamental_form_vs_finite_difference_frame():
    # central finite differences of the extended normal frame as the oracle
    s3, pts = random_on_sphere(3, 40, seed=7)
    rng = np.random.default_rng(8)
    P = s3.tangent_projector(pts)
    X = np.einsum("...ij,...j->...i", P, rng.standard_normal(pts.shape))
    Y = np.einsum("...ij,...j->...i", P, rng.standard_normal(pts.shape))
    h = 1e-6
    dnu = (s3.normal_frame(pts + h * Y) - s3.normal_frame(pts - h * Y)) / (2 * h)
    # the linear frame extension differs from the unit-normalized one off the
    # sphere; on-sphere their tangential derivatives agree
    coef = np.einsum("...i,...li->...l", X, dnu)
    fd = np.einsum("...l,...li->...i", coef, s3.normal_frame(pts))
    closed = second_fundamental_form(s3, pts, X, Y)
    assert np.max(np.abs(fd - closed)) < 1e-6


def test_shape_operator_duality_and_sphere_identity():
    s2, pts = random_on_sphere(2, 100, seed=9)
    rng = np.random.default_rng(10)
    P = s2.tangent_projector(pts)
    X = np.einsum("...ij,...j->...i", P, rng.standard_normal(pts.shape))
    Y = np.einsum("...ij,...j->...i", P, rng.standard_normal(pts.shape))
    xi = pts * rng.standard_normal(pts.shape[:-1] + (1,))
    lhs = np.einsum("...i,...i->...", shape_operator(s2, pts, xi, X), Y)
    rhs = np.einsum("...i,...i->...", second_fundamental_form(s2, pts, X, Y), xi)
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    # P(y, X) = X on the tangent space of the unit sphere
    assert np.max(np.abs(shape_operator(s2, pts, pts, X) - X)) < 1e-12


def test_magnetic_volume_form_r3():
    mag = volume_form_magnetic(flat_target(3), 1.0)
    y = np.zeros(3)
    e = np.eye(3)
    assert np.allclose(magnetic_Z(mag, y, e[0], e[1]), e[2])
    assert np.allclose(magnetic_Z(mag, y, e[1], e[2]), e[0])
    assert np.allclose(magnetic_Z(mag, y, e[0], e[2]), -e[1])
    v = np.array([0.3, -1.2, 0.8])
    assert np.allclose(magnetic_Z(mag, y, v, v), 0.0)


def test_magnetic_total_antisymmetry():
    for mag, q, pts in [
        (h_surface_magnetic(0.7), 3, np.random.default_rng(1).standard_normal((50, 3))),
        (volume_form_magnetic(sphere_target(3), 0.5), 4,
         sphere_target(3).project(np.random.default_rng(2).standard_normal((50, 4)))),
    ]:
        rng = np.random.default_rng(3)
        u = rng.standard_normal((50, q))
        v = rng.standard_normal((50, q))
        w = rng.standard_normal((50, q))
        uzvw = np.einsum("...i,...i->...", u, magnetic_Z(mag, pts, v, w))
        vzuw = np.einsum("...i,...i->...", v, magnetic_Z(mag, pts, u, w))
        uzwv = np.einsum("...i,...i->...", u, magnetic_Z(mag, pts, w, v))
        assert np.max(np.abs(uzvw + vzuw)) < 1e-12 * max(1.0, np.max(np.abs(uzvw)))
        assert np.max(np.abs(uzvw + uzwv)) < 1e-12 * max(1.0, np.max(np.abs(uzvw)))
        # orthogonality to both wedge slots
        assert np.max(np.abs(np.einsum("...i,...i->...", v, magnetic_Z(mag, pts, v, w)))) < 1e-12
        assert np.max(np.abs(np.einsum("...i,...i->...", w, magnetic_Z(mag, pts, v, w)))) < 1e-12


def test_check_magnetic_skew():
    flat = flat_target(3)
    assert check_magnetic_skew(h_surface_magnetic(1.0), np.zeros((4, 3))) == 0.0
    s3 = sphere_target(3)
    pts = s3.project(np.random.default_rng(11).standard_normal((100, 4)))
    assert check_magnetic_skew(volume_form_magnetic(s3, 0.7), pts) < 1e-12

    base = h_surface_magnetic(1.0)

    def corrupted(y):
        Z = np.array(base.z_tensor(y))
        Z[..., 2, 0, 1] += 0.1
        return Z

    bad = custom_magnetic("corrupted", 3, corrupted)
    assert check_magnetic_skew(bad, np.zeros((4, 3))) == pytest.approx(0.1)
    with pytest.raises(MagdiracError):
        check_magnetic_skew(base, np.zeros((0, 3)))


def test_volume_form_vanishes_on_surface_targets():
    # a three-form on a two-dimensional target is identically zero
    for tgt in (sphere_target(2), flat_target(2)):
        mag = volume_form_magnetic(tgt, 1.3)
        pts = np.random.default_rng(4).standard_normal((20, tgt.q))
        if tgt.name.startswith("sphere"):
            pts = tgt.project(pts)
        assert np.max(np.abs(mag.z_tensor(pts))) == 0.0


def test_b_primitive_matches_volume_form():
    # the exterior derivative of the symmetric-gauge primitive reproduces Z
    mag = h_surface_magnetic(0.9)
    assert mag.has_primitive
    y = np.random.default_rng(12).standard_normal(3)
    h = 1e-6
    dB = np.zeros((3, 3, 3))  # dB[k, i, j] = d_k B_ij
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        dB[k] = (mag.b_matrix(y + e) - mag.b_matrix(y - e)) / (2 * h)
    ext = dB + np.transpose(dB, (1, 2, 0)) + np.transpose(dB, (2, 0, 1))
    assert np.max(np.abs(ext - mag.z_tensor(y))) < 1e-8
    assert np.max(np.abs(dB - mag.b_jacobian(y))) < 1e-8
    assert not volume_form_magnetic(sphere_target(3), 1.0).has_primitive
