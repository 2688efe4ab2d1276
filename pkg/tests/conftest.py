"""Shared fixtures and closed-form field builders for the test suite."""

import numpy as np
import pytest

from magdirac import (MapField, SpinorField, SpinStructure, default_clifford,
                      enforce_tangency, flat_target, make_lattice, sphere_target)

TWO_PI = 2.0 * np.pi


@pytest.fixture
def torus16():
    return make_lattice("torus", 16, 16, L1=TWO_PI, L2=TWO_PI)


@pytest.fixture
def torus32():
    return make_lattice("torus", 32, 32, L1=TWO_PI, L2=TWO_PI)


@pytest.fixture
def clifford():
    return default_clifford()


@pytest.fixture
def spin_pp():
    return SpinStructure()


def smooth_sphere_map(lattice, target):
    """Fixed trigonometric map onto a sphere, identical formulas at every n."""
    x, y = lattice.coordinates()
    raw = np.zeros(lattice.shape + (target.q,))
    raw[..., 0] = 0.3 * np.sin(x) + 0.1 * np.cos(y)
    raw[..., 1] = 0.2 * np.sin(y) - 0.15 * np.cos(x + y)
    raw[..., -1] = 1.0 + 0.1 * np.cos(x)
    return MapField(target.project(raw))


def smooth_tangent_spinor(lattice, target, phi):
    """Fixed band-limited spinor, tangency enforced against phi."""
    x, y = lattice.coordinates()
    q = target.q
    comps = np.zeros(lattice.shape + (q, 2), dtype=complex)
    comps[..., 0, 0] = 0.5 * np.exp(1j * x) + 0.2 * np.sin(y)
    comps[..., 1, 1] = 0.4 * np.cos(x + y) + 0.3j * np.sin(x)
    comps[..., min(2, q - 1), 0] = 0.3 * np.exp(-1j * y)
    if q > 3:
        comps[..., 3, 1] = 0.25 * np.exp(1j * (x - y))
    return enforce_tangency(SpinorField(comps), phi, target)


def stereographic_sphere_patch(lattice):
    """Conformal parametrization of the unit sphere over an annulus; solves
    the constant-curvature system with H = 1 for this orientation."""
    r, th = lattice.coordinates()
    x = r * np.cos(th)
    y = r * np.sin(th)
    den = 1.0 + x**2 + y**2
    vals = np.stack([2 * x / den, 2 * y / den, (x**2 + y**2 - 1.0) / den], axis=-1)
    return MapField(vals)


def harmonic_annulus_map(lattice, kappa=0.6, c=0.35, beta=0.4):
    """Componentwise-harmonic, non-conformal map into flat R^3 with a
    z-dependent quadratic differential (multi-mode in both log-polar axes)."""
    r, th = lattice.coordinates()
    z = r * np.exp(1j * th)
    f = z + c / z
    vals = np.stack([np.real(f), kappa * np.imag(f), beta * np.log(r)], axis=-1)
    return MapField(vals)


def equal_energy_random_map(lattice, target, reference_dirichlet, seed=0):
    """Rough random field scaled to the reference Dirichlet energy."""
    from magdirac import energy, magnetic_none
    from magdirac.fields import project_map

    rng = np.random.default_rng(seed)
    raw = np.cumsum(np.cumsum(rng.standard_normal(lattice.shape + (target.q,)), axis=0), axis=1)
    raw -= raw.mean(axis=(0, 1))
    if not target.is_flat:
        raw = raw + 2.0 * np.eye(target.q)[-1]
        phi = project_map(raw, target)
    else:
        phi = MapField(raw)
    eb = energy(lattice, target, magnetic_none(target.q), phi)
    if target.is_flat and eb.dirichlet > 0:
        phi = MapField(phi.values * np.sqrt(reference_dirichlet / eb.dirichlet))
    return phi


def refinement_slope(hs, values):
    """Least-squares slope of log(value) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])
