"""Eigensolver, gradient flow, and the coupled alternation."""

import numpy as np
import pytest

from conftest import refinement_slope, stereographic_sphere_patch

from magdirac import (FlowStepError, MapField, SpinStructure, el_residual_map,
                      flat_target, flow_map, h_surface_magnetic, magnetic_none,
                      make_lattice, solve_coupled, solve_spinor, sphere_target,
                      volume_form_magnetic, zero_spinor)
from magdirac.fields import init_map, init_spinor, project_map, tangency_residual
from magdirac.solver import (ReducedDirac, SolveConfig, spinor_l4_norm, stable_dt,
                             tangent_frames)
from magdirac.surface import default_clifford, partial_derivative

TWO_PI = 2.0 * np.pi


def lat12():
    return make_lattice("torus", 12, 12, L1=TWO_PI, L2=TWO_PI)


def test_tangent_frames_orthonormal():
    s3 = sphere_target(3)
    pts = s3.project(np.random.default_rng(0).standard_normal((7, 5, 4)))
    fr = tangent_frames(s3, pts)
    gram = np.einsum("...aq,...bq->...ab", fr, fr)
    assert np.max(np.abs(gram - np.eye(3))) < 1e-12
    nu = s3.normal_frame(pts)
    assert np.max(np.abs(np.einsum("...aq,...lq->...al", fr, nu))) < 1e-12


@pytest.mark.parametrize("phases,expected_kernel,expected_gap", [
    (("periodic", "periodic"), 4, 1.0),
    (("antiperiodic", "periodic"), 0, 0.5),
    (("periodic", "antiperiodic"), 0, 0.5),
    (("antiperiodic", "antiperiodic"), 0, np.hypot(0.5, 0.5)),
])
def test_kernel_dimension_by_spin_structure(phases, expected_kernel, expected_gap, clifford):
    # constant map: the operator decouples into n copies of the free Dirac
    # operator; kernel dimension 2n for the fully periodic structure only
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure(*phases)
    phi = init_map(lat, s2, {"kind": "constant"})
    vals, vecs = solve_spinor(lat, s2, spin, clifford, phi, 6, SolveConfig(seed=0))
    n_kernel = int(np.sum(np.abs(vals) < 1e-10))
    assert n_kernel == expected_kernel
    if expected_kernel == 0:
        assert np.abs(vals[0]) == pytest.approx(expected_gap, abs=1e-10)
    # returned spinors never leave the tangency subspace
    for sp in vecs:
        assert tangency_residual(sp, phi, s2) < 1e-10
    assert np.all(np.diff(np.abs(vals)) >= -1e-12)


def test_eigensolver_rayleigh_residuals(clifford):
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure()
    phi = init_map(lat, s2, {"kind": "constant", "noise_amplitude": 0.2,
                             "noise_cutoff": 2}, seed=3)
    vals, vecs = solve_spinor(lat, s2, spin, clifford, phi, 4, SolveConfig(seed=0))
    op = ReducedDirac(lat, s2, spin, clifford, phi)
    for lam, sp in zip(vals, vecs):
        x = op.restrict(sp.values).ravel()
        x /= np.linalg.norm(x)
        assert np.linalg.norm(op.apply_flat(x) - lam * x) < 1e-8


def test_iterative_path_matches_dense(clifford):
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure("antiperiodic", "periodic")
    phi = init_map(lat, s2, {"kind": "constant", "noise_amplitude": 0.15,
                             "noise_cutoff": 2}, seed=4)
    dense = SolveConfig(seed=0, dense_threshold=10**6)
    iterative = SolveConfig(seed=0, dense_threshold=0)
    vd, _ = solve_spinor(lat, s2, spin, clifford, phi, 4, dense)
    vi, _ = solve_spinor(lat, s2, spin, clifford, phi, 4, iterative)
    assert np.max(np.abs(np.abs(vd) - np.abs(vi))) < 1e-8


def test_flow_fixed_point_constant_map(clifford):
    lat = lat12()
    s2 = sphere_target(2)
    phi = init_map(lat, s2, {"kind": "constant"})
    cfg = SolveConfig(mode="map-only", tol_map=1e-12)
    out, log = flow_map(lat, s2, magnetic_none(3), phi, None, cfg, max_steps=5)
    assert np.max(np.abs(out.values - phi.values)) < 1e-12
    assert log["residuals"][0] < 1e-13


def test_flow_matches_heat_kernel_mode_decay(clifford):
    # flat target, no forces: each Fourier mode decays by 1 - dt|k|^2 per
    # explicit Euler step (the discrete heat factor), spectrally exact
    lat = make_lattice("torus", 16, 16, L1=TWO_PI, L2=TWO_PI)
    flat = flat_target(3)
    x, y = lat.coordinates()
    vals = np.zeros(lat.shape + (3,))
    vals[..., 0] = 0.5 * np.cos(x) + 0.25 * np.sin(2 * y)
    vals[..., 1] = 0.3 * np.sin(x + y)
    phi = MapField(vals)
    dt = 1e-3
    cfg = SolveConfig(mode="map-only", flow_dt=dt, tol_map=1e-14)
    out, _ = flow_map(lat, flat, magnetic_none(3), phi, None, cfg, max_steps=1)
    spec_in = np.fft.fft2(vals, axes=(0, 1))
    spec_out = np.fft.fft2(out.values, axes=(0, 1))
    k1 = 2 * np.pi * np.fft.fftfreq(16, d=lat.spacings[0])
    k2 = 2 * np.pi * np.fft.fftfreq(16, d=lat.spacings[1])
    factor = 1.0 - dt * (k1[:, None] ** 2 + k2[None, :] ** 2)
    mask = np.abs(spec_in) > 1e-8
    ratio = np.where(mask, spec_out / np.where(mask, spec_in, 1.0), 0.0)
    assert np.max(np.abs(ratio - factor[..., None])[mask]) < 1e-10


def test_flow_energy_monotone_map_only(clifford):
    lat = lat12()
    flat = flat_target(3)
    mag = h_surface_magnetic(1.0)
    phi = init_map(lat, flat, {"kind": "constant", "point": [0, 0, 0],
                               "noise_amplitude": 0.3, "noise_cutoff": 2}, seed=5)
    cfg = SolveConfig(mode="map-only", tol_map=1e-10)
    _, log = flow_map(lat, flat, mag, phi, None, cfg, max_steps=200)
    e = np.array(log["energies"])
    assert np.all(np.diff(e) <= 1e-12 * np.maximum(1.0, np.abs(e[:-1])))


def test_h_surface_flow_residual_decreases():
    lat = make_lattice("disc-annulus", 24, 48, r_inner=0.35, r_outer=1.3)
    flat = flat_target(3)
    mag = h_surface_magnetic(1.0)
    phi = stereographic_sphere_patch(lat)
    rng = np.random.default_rng(6)
    pert = phi.values.copy()
    pert[1:-1] += 2e-3 * rng.standard_normal(pert[1:-1].shape)
    cfg = SolveConfig(mode="map-only", tol_map=1e-6)
    out, log = flow_map(lat, flat, mag, MapField(pert), None, cfg, max_steps=400)
    res = np.array(log["residuals"])
    assert res[-1] < res[0]
    # geometric decay while far from the discrete solution
    assert res[min(100, len(res) - 1)] < 0.5 * res[0]


def test_flow_dt_underflow_raises():
    # magnetic data whose closed-form force opposes its own primitive makes
    # the flow direction an ascent direction of the recorded energy; the
    # backtracking loop then halves dt to the floor and must fail loudly
    from magdirac.target import custom_magnetic, h_surface_magnetic as hsm

    lat = lat12()
    flat = flat_target(3)
    good = hsm(1.0)
    lying = custom_magnetic("lying", 3, lambda y: -np.asarray(good.z_tensor(y)),
                            good.b_matrix, good.b_jacobian)
    slope = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    phi = init_map(lat, flat, {"kind": "winding", "slope": slope})
    cfg = SolveConfig(mode="map-only", tol_map=1e-16)
    with pytest.raises(FlowStepError):
        flow_map(lat, flat, lying, phi, None, cfg, max_steps=10)


def test_solve_coupled_uncoupled_start_terminates_immediately(clifford):
    # constant map plus constant tangent spinor is already a solution
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure()
    phi = init_map(lat, s2, {"kind": "constant"})
    psi = init_spinor(lat, s2, phi, {"kind": "constant"}, seed=0)
    cfg = SolveConfig(mode="coupled", tol_map=1e-8, tol_spinor=1e-8, max_outer=10)
    _, _, rep = solve_coupled(lat, s2, magnetic_none(3), spin, cfg, phi, psi, clifford)
    assert rep.status == "converged"
    assert rep.iterations == 1


def test_solve_coupled_map_only_reduction(clifford):
    lat = lat12()
    flat = flat_target(3)
    mag = h_surface_magnetic(1.0)
    phi0 = init_map(lat, flat, {"kind": "constant", "point": [0, 0, 0],
                                "noise_amplitude": 0.2, "noise_cutoff": 2}, seed=8)
    cfg = SolveConfig(mode="map-only", tol_map=1e-8, max_outer=40, refresh_interval=50)
    phi_a, _, rep = solve_coupled(lat, flat, mag, SpinStructure(), cfg, phi0.copy(),
                                  clifford=clifford)
    phi_b = phi0.copy()
    for _ in range(rep.iterations):
        phi_b, log = flow_map(lat, flat, mag, phi_b, None, cfg, max_steps=50)
    assert np.array_equal(phi_a.values, phi_b.values)


def test_solve_coupled_no_kernel_status(clifford):
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure("antiperiodic", "antiperiodic")
    phi = init_map(lat, s2, {"kind": "constant"})
    cfg = SolveConfig(mode="coupled", tol_spinor=1e-6, max_outer=5)
    _, psi, rep = solve_coupled(lat, s2, magnetic_none(3), spin, cfg, phi, clifford=clifford)
    assert rep.status == "no-kernel"
    assert psi.is_zero()


def test_solve_coupled_budget_exhaustion_status(clifford):
    lat = lat12()
    flat = flat_target(3)
    phi0 = init_map(lat, flat, {"kind": "constant", "point": [0, 0, 0],
                                "noise_amplitude": 0.4, "noise_cutoff": 2}, seed=9)
    cfg = SolveConfig(mode="map-only", tol_map=1e-14, max_outer=2, refresh_interval=5)
    _, _, rep = solve_coupled(lat, flat, magnetic_none(3), SpinStructure(), cfg, phi0)
    assert rep.status == "max_outer"
    assert not rep.converged


def test_solve_coupled_deterministic(clifford):
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure()
    cfg = SolveConfig(mode="coupled", tol_map=1e-6, tol_spinor=1e-6, max_outer=6,
                      refresh_interval=20, k_eigs=2, seed=11)
    out = []
    for _ in range(2):
        phi0 = init_map(lat, s2, {"kind": "constant", "noise_amplitude": 0.05,
                                  "noise_cutoff": 2}, seed=11)
        phi, psi, rep = solve_coupled(lat, s2, magnetic_none(3), spin, cfg, phi0,
                                      clifford=clifford)
        out.append((phi.values.copy(), psi.values.copy(),
                    rep.to_dict(include_timing=False)))
    assert np.array_equal(out[0][0], out[1][0])
    assert np.array_equal(out[0][1], out[1][1])
    assert out[0][2] == out[1][2]


def test_spinor_l4_normalization(clifford):
    lat = lat12()
    s2 = sphere_target(2)
    spin = SpinStructure()
    phi = init_map(lat, s2, {"kind": "constant"})
    cfg = SolveConfig(mode="coupled", tol_map=1e-7, tol_spinor=1e-7, max_outer=4,
                      spinor_norm=1.0)
    _, psi, rep = solve_coupled(lat, s2, magnetic_none(3), spin, cfg, phi, clifford=clifford)
    assert rep.converged
    assert spinor_l4_norm(lat, psi) == pytest.approx(1.0, rel=1e-12)
    assert tangency_residual(psi, phi, s2) < 1e-10
