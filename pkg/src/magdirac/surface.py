"""Flat 2D lattice domains, spin structures, Clifford algebra and discrete derivatives.

Two domain kinds are supported: a periodic rectangle (torus) and a polar
product grid on an annulus (``disc-annulus``).  On the torus, derivatives are
exact Fourier (spectral) by default with second-order central differences as
the alternative; the annulus is central-difference only.  Spinor derivatives
carry the spin-structure boundary phases as a half-integer wavenumber shift,
so antiperiodic spinors are stored through their periodic representatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LatticeError, UnsupportedOperationError

TORUS = "torus"
ANNULUS = "disc-annulus"

PERIODIC = "periodic"
ANTIPERIODIC = "antiperiodic"

MIN_POINTS = 8


@dataclass(frozen=True)
class Lattice:
    """Uniform product grid on a flat torus or annulus.

    Axis 0 is x (torus) or r (annulus); axis 1 is y or theta.  Site
    coordinates live at the cell corners, coordinate spacing is uniform
    per axis.
    """

    kind: str
    n1: int
    n2: int
    L1: float = 0.0
    L2: float = 0.0
    r_inner: float = 0.0
    r_outer: float = 0.0

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def spacings(self):
        if self.kind == TORUS:
            return (self.L1 / self.n1, self.L2 / self.n2)
        dr = (self.r_outer - self.r_inner) / (self.n1 - 1)
        return (dr, 2.0 * np.pi / self.n2)

    @property
    def radii(self):
        if self.kind != ANNULUS:
            raise UnsupportedOperationError("radii only defined on disc-annulus")
        dr, _ = self.spacings
        return self.r_inner + dr * np.arange(self.n1)

    def coordinates(self):
        """Meshgrid (x1, x2) of site coordinates, indexing='ij'."""
        h1, h2 = self.spacings
        if self.kind == TORUS:
            c1 = h1 * np.arange(self.n1)
        else:
            c1 = self.radii
        c2 = h2 * np.arange(self.n2)
        return np.meshgrid(c1, c2, indexing="ij")

    def cell_weights(self):
        """Quadrature weight per site for area integrals."""
        h1, h2 = self.spacings
        if self.kind == TORUS:
            return np.full(self.shape, h1 * h2)
        # polar area element r dr dtheta, trapezoid in r
        w = np.repeat(self.radii[:, None] * h1 * h2, self.n2, axis=1)
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
        return w

    def interior_mask(self):
        m = np.ones(self.shape, dtype=bool)
        if self.kind == ANNULUS:
            m[0, :] = False
            m[-1, :] = False
        return m


def make_lattice(kind, n1, n2, *, L1=None, L2=None, r_inner=None, r_outer=None) -> Lattice:
    """Build a validated lattice of the requested kind."""
    if kind not in (TORUS, ANNULUS):
        raise LatticeError(f"unknown lattice kind {kind!r}")
    if n1 < MIN_POINTS or n2 < MIN_POINTS:
        raise LatticeError(f"grid too coarse: need at least {MIN_POINTS} points per axis, got {n1}x{n2}")
    if kind == TORUS:
        if L1 is None or L2 is None or L1 <= 0 or L2 <= 0:
            raise LatticeError("torus needs positive side lengths L1, L2")
        return Lattice(TORUS, int(n1), int(n2), L1=float(L1), L2=float(L2))
    if r_inner is None or r_outer is None or not (0.0 < r_inner < r_outer):
        raise LatticeError("disc-annulus needs radii 0 < r_inner < r_outer")
    return Lattice(ANNULUS, int(n1), int(n2), r_inner=float(r_inner), r_outer=float(r_outer))


@dataclass(frozen=True)
class ConformalFactor:
    """Conformal exponent u on lattice sites; the metric is exp(2u) * delta."""

    u: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.u)):
            raise LatticeError("conformal factor must be finite at every site")

    @property
    def area_weights(self):
        return np.exp(2.0 * self.u)


@dataclass(frozen=True)
class SpinStructure:
    """Periodic/antiperiodic spinor boundary phase per torus direction."""

    phase1: str = PERIODIC
    phase2: str = PERIODIC

    def __post_init__(self):
        for p in (self.phase1, self.phase2):
            if p not in (PERIODIC, ANTIPERIODIC):
                raise LatticeError(f"unknown boundary phase {p!r}")

    def shifts(self, lattice: Lattice):
        """Wavenumber shift per axis (pi/L for antiperiodic, else 0)."""
        if lattice.kind != TORUS:
            return (0.0, 0.0)
        s1 = np.pi / lattice.L1 if self.phase1 == ANTIPERIODIC else 0.0
        s2 = np.pi / lattice.L2 if self.phase2 == ANTIPERIODIC else 0.0
        return (s1, s2)

    def min_wavenumber(self, lattice: Lattice) -> float:
        """Smallest twisted |k| over all modes (0 iff fully periodic)."""
        s1, s2 = self.shifts(lattice)
        return float(np.hypot(s1, s2))


def min_nonzero_wavenumber(lattice: Lattice) -> float:
    """Spectral gap scale of the lattice: smallest nonzero untwisted |k|."""
    return 2.0 * np.pi / max(lattice.L1, lattice.L2)


@dataclass(frozen=True)
class CliffordRep:
    """2x2 complex matrices representing Clifford multiplication by e1, e2."""

    gamma1: np.ndarray
    gamma2: np.ndarray

    def gammas(self):
        return (self.gamma1, self.gamma2)


def default_clifford() -> CliffordRep:
    """i * (sigma_1, sigma_2): skew-Hermitian, anticommutator -2*delta."""
    g1 = 1j * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    g2 = 1j * np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)
    return CliffordRep(g1, g2)


def wavenumbers(lattice: Lattice, axis: int, shift: float = 0.0) -> np.ndarray:
    n = lattice.shape[axis]
    L = (lattice.L1, lattice.L2)[axis]
    return 2.0 * np.pi * np.fft.fftfreq(n, d=L / n) + shift


def _reshape_k(k, ndim, axis):
    shape = [1] * ndim
    shape[axis] = -1
    return k.reshape(shape)


def partial_derivative(lattice: Lattice, f: np.ndarray, axis: int, scheme: str = "spectral") -> np.ndarray:
    """Discrete coordinate derivative of a real field along a grid axis.

    Torus: spectral (exact on band-limited data) or central.  Annulus:
    central only, one-sided second-order stencils at the radial rings.
    """
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    if lattice.kind == TORUS:
        if scheme == "spectral":
            k = wavenumbers(lattice, axis)
            F = np.fft.fft(f, axis=axis)
            F *= 1j * _reshape_k(k, f.ndim, axis)
            # real part symmetrizes the unpaired Nyquist mode, keeping the
            # operator a real antisymmetric matrix
            return np.fft.ifft(F, axis=axis).real
        if scheme == "central":
            h = lattice.spacings[axis]
            return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "spectral":
        raise UnsupportedOperationError("spectral derivatives require a torus")
    h = lattice.spacings[axis]
    if axis == 1:
        return (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * h)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return out


def laplacian(lattice: Lattice, f: np.ndarray, scheme: str = "spectral") -> np.ndarray:
    """Flat Laplacian as the composition of the first-derivative operators.

    Composing keeps the energy-gradient identity exact: the gradient of
    0.5*sum|Df|^2 is literally -D(Df).  On the annulus the polar form
    f_rr + f_r/r + f_tt/r^2 is used; ring rows are not meaningful there.
    """
    if lattice.kind == TORUS:
        return (partial_derivative(lattice, partial_derivative(lattice, f, 0, scheme), 0, scheme)
                + partial_derivative(lattice, partial_derivative(lattice, f, 1, scheme), 1, scheme))
    # narrow polar stencil, uniformly second order at interior rows; the ring
    # rows are not meaningful and are zeroed by consumers
    dr, dth = lattice.spacings
    r = lattice.radii.reshape((-1,) + (1,) * (f.ndim - 1))
    fr = partial_derivative(lattice, f, 0, "central")
    frr = np.zeros_like(f)
    frr[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dr**2
    ftt = (np.roll(f, -1, axis=1) - 2.0 * f + np.roll(f, 1, axis=1)) / dth**2
    return frr + fr / r + ftt / r**2


def spinor_partial(lattice: Lattice, spin: SpinStructure, psi: np.ndarray, axis: int,
                   scheme: str = "spectral") -> np.ndarray:
    """Twisted derivative of a spinor's periodic representative.

    The boundary phase enters as the shift k -> k + pi/L (spectral) or as
    the equivalent phase-twisted shifts (central).  Complex output; the
    Nyquist mode is kept, so the operator is exactly anti-Hermitian.
    """
    if lattice.kind != TORUS:
        raise UnsupportedOperationError("spinor derivatives are torus-only (spinor ops disabled on disc-annulus)")
    shift = spin.shifts(lattice)[axis]
    if scheme == "spectral":
        k = wavenumbers(lattice, axis, shift)
        F = np.fft.fft(psi, axis=axis)
        F *= 1j * _reshape_k(k, psi.ndim, axis)
        return np.fft.ifft(F, axis=axis)
    if scheme == "central":
        h = lattice.spacings[axis]
        ph = np.exp(1j * shift * h)
        return (ph * np.roll(psi, -1, axis=axis) - np.conj(ph) * np.roll(psi, 1, axis=axis)) / (2.0 * h)
    raise ValueError(f"unknown scheme {scheme!r}")


def apply_gamma(clifford: CliffordRep, axis: int, psi: np.ndarray) -> np.ndarray:
    """Clifford multiplication along the 2-spinor (last) index."""
    g = clifford.gammas()[axis]
    return np.einsum("cd,...d->...c", g, psi)


def dirac_untwisted(lattice: Lattice, spin: SpinStructure, clifford: CliffordRep,
                    psi: np.ndarray, scheme: str = "spectral") -> np.ndarray:
    """Componentwise flat Dirac operator gamma_a d_a acting on ambient spinors."""
    if psi.shape[:2] != lattice.shape:
        raise ValueError(f"spinor grid {psi.shape[:2]} does not match lattice {lattice.shape}")
    out = apply_gamma(clifford, 0, spinor_partial(lattice, spin, psi, 0, scheme))
    out += apply_gamma(clifford, 1, spinor_partial(lattice, spin, psi, 1, scheme))
    return out


def spinor_laplacian(lattice: Lattice, spin: SpinStructure, psi: np.ndarray,
                     scheme: str = "spectral") -> np.ndarray:
    """Twisted flat Laplacian on spinors (same phases as the Dirac operator)."""
    return (spinor_partial(lattice, spin, spinor_partial(lattice, spin, psi, 0, scheme), 0, scheme)
            + spinor_partial(lattice, spin, spinor_partial(lattice, spin, psi, 1, scheme), 1, scheme))


def conformal_rescale(lattice: Lattice, u: ConformalFactor, psi: np.ndarray | None):
    """Volume weights and compensating spinor rescale for the metric exp(2u)*delta.

    In 2D the map and two-form energies need no rescale at all (the metric
    factors cancel); the spinor transforms as psi -> exp(-u/2) psi.
    """
    weights = u.area_weights
    if psi is None:
        return weights, None
    scale = np.exp(-0.5 * u.u)
    return weights, psi * scale[..., None, None]


def l2_norm(lattice: Lattice, f: np.ndarray, interior_only: bool = False) -> float:
    """Discrete L2 norm with cell-area weights, extra axes summed pointwise."""
    w = lattice.cell_weights()
    dens = np.abs(f) ** 2
    while dens.ndim > 2:
        dens = dens.sum(axis=-1)
    if interior_only:
        m = lattice.interior_mask()
        return float(np.sqrt(np.sum(dens[m] * w[m])))
    return float(np.sqrt(np.sum(dens * w)))
