"""Energy, Euler-Lagrange residuals, twisted Dirac operator, connection form.

Discretization contract: the map-side residual returned by
``el_residual_map`` is assembled so that its Dirichlet and spinor-coupling
parts are the *exact* gradients of the discrete energy (summation by parts
with the same derivative operators the energy uses).  The magnetic force is
the closed-form contraction Z(d1 phi ^ d2 phi), which is pointwise orthogonal
to the image of dphi by total antisymmetry; on band-limited fields it agrees
with the gradient of the two-form energy term, so the finite-difference
gradient oracle is tight in both modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MagneticPrimitiveError, UnsupportedOperationError
from .fields import MapField, SpinorField
from .surface import (ANNULUS, TORUS, CliffordRep, ConformalFactor, Lattice,
                      SpinStructure, apply_gamma, default_clifford, l2_norm,
                      laplacian, partial_derivative, spinor_partial)
from .target import MagneticData, TargetManifold, magnetic_Z


@dataclass
class EnergyBreakdown:
    """Additive components of the action; ``magnetic`` is None in Omega-mode."""

    dirichlet: float
    spinor: float
    magnetic: float | None

    @property
    def total(self) -> float:
        return self.dirichlet + self.spinor + (self.magnetic or 0.0)

    def to_dict(self) -> dict:
        return {"dirichlet": self.dirichlet, "spinor": self.spinor,
                "magnetic": self.magnetic, "total": self.total}


@dataclass
class RiviereForm:
    """Per-site antisymmetric coefficient matrices (f, g), one per direction."""

    f: np.ndarray  # (n1, n2, q, q), first index m, second i
    g: np.ndarray

    def max_skew_violation(self) -> float:
        vf = np.max(np.abs(self.f + np.swapaxes(self.f, -1, -2)))
        vg = np.max(np.abs(self.g + np.swapaxes(self.g, -1, -2)))
        return float(max(vf, vg))

    def contract(self, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
        """A . grad(phi) with the same projected derivatives used in assembly."""
        return (np.einsum("...mi,...i->...m", self.f, d1)
                + np.einsum("...mi,...i->...m", self.g, d2))


def map_derivative(lattice: Lattice, phi: MapField, axis: int, scheme: str) -> np.ndarray:
    """Coordinate derivative of the map, winding slope included."""
    d = partial_derivative(lattice, phi.values, axis, scheme)
    if phi.winding is not None and np.any(phi.winding):
        d = d + phi.winding[:, axis]
    return d


def frame_derivatives(lattice: Lattice, phi: MapField, scheme: str):
    """Orthonormal-frame derivatives dphi(e1), dphi(e2).

    On the torus the coordinate frame is orthonormal; on the annulus the
    frame is (d_r, d_theta / r).
    """
    d1 = map_derivative(lattice, phi, 0, scheme)
    d2 = map_derivative(lattice, phi, 1, scheme)
    if lattice.kind == ANNULUS:
        r = lattice.radii[:, None, None]
        d2 = d2 / r
    return d1, d2


def default_scheme(lattice: Lattice) -> str:
    return "spectral" if lattice.kind == TORUS else "central"


def coordinate_weights(lattice: Lattice) -> np.ndarray:
    """Coordinate-area weights (no metric factor), for two-form pullbacks."""
    h1, h2 = lattice.spacings
    w = np.full(lattice.shape, h1 * h2)
    if lattice.kind == ANNULUS:
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
    return w


# ---------------------------------------------------------------------------
# twisted Dirac operator
# ---------------------------------------------------------------------------

def twisted_dirac(lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                  clifford: CliffordRep, phi: MapField, psi: SpinorField,
                  scheme: str = "spectral") -> np.ndarray:
    """Dirac operator of the pullback connection in the ambient picture.

    D psi = gamma_a d_a psi + C(psi), where the coupling C restores the
    projection connection: C^m = A^{mi}_j (gamma_a psi)^i (d_a phi)^j with
    A the normal-frame kernel of the target.  On tangency-constrained fields
    this equals gamma_a (P d_a psi) up to the discrete chain-rule defect,
    which sits in the normal directions only.
    """
    if psi.values.shape[:2] != lattice.shape:
        raise UnsupportedOperationError("spinor grid does not match lattice")
    out = apply_gamma(clifford, 0, spinor_partial(lattice, spin, psi.values, 0, scheme))
    out += apply_gamma(clifford, 1, spinor_partial(lattice, spin, psi.values, 1, scheme))
    if not target.is_flat:
        A = target.coupling_tensor(phi.values)
        for axis in range(2):
            dphi = map_derivative(lattice, phi, axis, scheme)
            gpsi = apply_gamma(clifford, axis, psi.values)
            out += np.einsum("...mij,...j,...ic->...mc", A, dphi, gpsi)
    return out


def spinor_action(lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                  clifford: CliffordRep, phi: MapField, psi: SpinorField,
                  u: ConformalFactor | None = None, scheme: str = "spectral") -> float:
    """0.5 * integral of Re<psi, D psi>, optionally in the metric exp(2u)*delta.

    With a conformal factor the spinor is assumed already rescaled by
    exp(-u/2); the operator picks up the 2D spin-connection term
    0.5 * (du . ) gamma-contracted, whose real pairing vanishes identically.
    """
    w = lattice.cell_weights()
    dpsi = twisted_dirac(lattice, target, spin, clifford, phi, psi, scheme)
    if u is not None:
        for axis in range(2):
            du = partial_derivative(lattice, u.u, axis, scheme)
            dpsi += 0.5 * du[..., None, None] * apply_gamma(clifford, axis, psi.values)
        w = w * np.exp(u.u)
    dens = np.einsum("...ic,...ic->...", np.conj(psi.values), dpsi).real
    return float(0.5 * np.sum(dens * w))


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def energy(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
           phi: MapField, psi: SpinorField | None = None,
           spin: SpinStructure | None = None, clifford: CliffordRep | None = None,
           scheme: str | None = None, require_primitive: bool = False) -> EnergyBreakdown:
    """Discrete action: Dirichlet + spinor pairing + two-form pullback.

    The Dirichlet and two-form terms are metric independent in 2D (the
    conformal factors cancel), so no conformal data enters here.  The
    two-form term exists only when the magnetic data carries a primitive;
    otherwise the component is None and the breakdown is flagged Omega-mode.
    """
    scheme = scheme or default_scheme(lattice)
    w = lattice.cell_weights()
    e1, e2 = frame_derivatives(lattice, phi, scheme)
    dens = np.einsum("...i,...i->...", e1, e1) + np.einsum("...i,...i->...", e2, e2)
    dirichlet = float(0.5 * np.sum(dens * w))

    spinor = 0.0
    if psi is not None and not psi.is_zero():
        if lattice.kind != TORUS:
            raise UnsupportedOperationError("spinor energy is torus-only")
        spin = spin or SpinStructure()
        clifford = clifford or default_clifford()
        spinor = spinor_action(lattice, target, spin, clifford, phi, psi, scheme=scheme)

    mag: float | None = None
    if require_primitive and not magnetic.has_primitive and not magnetic.is_zero:
        raise MagneticPrimitiveError("Omega-mode has no energy primitive")
    if magnetic.has_primitive and not magnetic.is_zero:
        d1 = map_derivative(lattice, phi, 0, scheme)
        d2 = map_derivative(lattice, phi, 1, scheme)
        B = magnetic.b_matrix(phi.values)
        mag = float(np.sum(np.einsum("...ij,...i,...j->...", B, d1, d2) * coordinate_weights(lattice)))
    elif magnetic.is_zero and magnetic.has_primitive:
        mag = 0.0
    return EnergyBreakdown(dirichlet, spinor, mag)


# ---------------------------------------------------------------------------
# map-side operators
# ---------------------------------------------------------------------------

def tension(lattice: Lattice, target: TargetManifold, phi: MapField,
            scheme: str | None = None, check: bool = True) -> np.ndarray:
    """Tangential part of the flat Laplacian (the harmonic-map residual)."""
    scheme = scheme or default_scheme(lattice)
    if check:
        target.check_on_manifold(phi.values)
    lap = laplacian(lattice, phi.values, scheme)
    if lattice.kind == ANNULUS:
        lap[0] = 0.0
        lap[-1] = 0.0
    if target.is_flat:
        return lap
    P = target.tangent_projector(phi.values)
    return np.einsum("...ij,...j->...i", P, lap)


def magnetic_force(lattice: Lattice, magnetic: MagneticData, phi: MapField,
                   scheme: str | None = None) -> np.ndarray:
    """Closed-form force Z(dphi(e1) ^ dphi(e2)).

    Metric independent: the frame wedge carries exactly the inverse of the
    conformal volume factor.  Exactly orthogonal to dphi(e_a) pointwise.
    """
    scheme = scheme or default_scheme(lattice)
    if magnetic.is_zero:
        return np.zeros(phi.values.shape)
    e1, e2 = frame_derivatives(lattice, phi, scheme)
    return magnetic_Z(magnetic, phi.values, e1, e2)


def curvature_term(lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                   clifford: CliffordRep, phi: MapField, psi: SpinorField,
                   scheme: str = "spectral", derivatives=None,
                   assume_tangent: bool = False) -> np.ndarray:
    """Spinor-curvature force: the exact map-gradient of the spinor action.

    Tangentially projected.  Vanishes for flat targets and for psi = 0.
    With ``assume_tangent`` the divergence part is dropped: its flux density
    <nu_l, psi>-weighted is identically zero on tangency-constrained fields,
    so the two paths agree to roundoff there.
    """
    if target.is_flat or psi.is_zero():
        return np.zeros(phi.values.shape)
    if lattice.kind != TORUS:
        raise UnsupportedOperationError("spinor-coupled operators are torus-only")
    dA = target.coupling_gradient(phi.values)  # (..., k, m, i, j)
    out = np.zeros(phi.values.shape)
    A = None if assume_tangent else target.coupling_tensor(phi.values)
    for axis in range(2):
        gpsi = apply_gamma(clifford, axis, psi.values)
        S = np.einsum("...mc,...ic->...mi", np.conj(psi.values), gpsi).real
        dphi = derivatives[axis] if derivatives else map_derivative(lattice, phi, axis, scheme)
        out += 0.5 * _contract_coupling_gradient(dA, S, dphi)
        if not assume_tangent:
            flux = np.einsum("...mi,...mik->...k", S, A, optimize=True)
            out -= 0.5 * partial_derivative(lattice, flux, axis, scheme)
    P = target.tangent_projector(phi.values)
    return np.einsum("...ij,...j->...i", P, out)


def _contract_coupling_gradient(dA: np.ndarray, S: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    # built-in targets broadcast a constant core over the site axes; contract
    # the core directly instead of iterating the broadcast
    if dA.ndim >= 6 and dA.strides[0] == 0 and dA.strides[1] == 0:
        core = dA[0, 0]
        return np.einsum("kmij,...mi,...j->...k", core, S, dphi, optimize=True)
    return np.einsum("...kmij,...mi,...j->...k", dA, S, dphi, optimize=True)


def el_residual_map(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
                    phi: MapField, psi: SpinorField | None = None,
                    spin: SpinStructure | None = None, clifford: CliffordRep | None = None,
                    scheme: str | None = None):
    """Map equation residual tau(phi) - curvature force - magnetic force.

    Returns (field, discrete L2 norm); the norm is interior-only on the
    annulus.  Zero norm certifies a discrete critical point in phi.
    """
    scheme = scheme or default_scheme(lattice)
    res = tension(lattice, target, phi, scheme)
    derivs = None
    if (psi is not None and not psi.is_zero()) or not magnetic.is_zero:
        derivs = (map_derivative(lattice, phi, 0, scheme),
                  map_derivative(lattice, phi, 1, scheme))
    if psi is not None and not psi.is_zero():
        spin = spin or SpinStructure()
        clifford = clifford or default_clifford()
        res = res - curvature_term(lattice, target, spin, clifford, phi, psi, scheme,
                                   derivatives=derivs, assume_tangent=True)
    if not magnetic.is_zero:
        e1, e2 = derivs
        if lattice.kind == ANNULUS:
            e2 = e2 / lattice.radii[:, None, None]
        res = res - magnetic_Z(magnetic, phi.values, e1, e2)
    if lattice.kind == ANNULUS:
        res[0] = 0.0
        res[-1] = 0.0
    return res, l2_norm(lattice, res, interior_only=lattice.kind == ANNULUS)


def el_residual_spinor(lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                       clifford: CliffordRep, phi: MapField, psi: SpinorField,
                       scheme: str = "spectral"):
    """Spinor equation residual: the twisted Dirac image, tangentially projected.

    The projection restricts the residual to the constraint subspace where
    the equation lives; the unprojected image carries an O(h^2) normal
    chain-rule defect even at exact solutions.
    """
    dpsi = twisted_dirac(lattice, target, spin, clifford, phi, psi, scheme)
    if not target.is_flat:
        P = target.tangent_projector(phi.values)
        dpsi = np.einsum("...ij,...jc->...ic", P, dpsi)
    return dpsi, l2_norm(lattice, dpsi)


def magnetic_energy_gradient(lattice: Lattice, magnetic: MagneticData, phi: MapField,
                             scheme: str) -> np.ndarray:
    """Exact gradient of the two-form energy term (B-mode only).

    Differs from the closed-form force by aliasing terms that vanish on
    band-limited fields.
    """
    if not magnetic.has_primitive:
        raise MagneticPrimitiveError("Omega-mode has no energy primitive")
    d1 = map_derivative(lattice, phi, 0, scheme)
    d2 = map_derivative(lattice, phi, 1, scheme)
    B = magnetic.b_matrix(phi.values)
    dB = magnetic.b_jacobian(phi.values)  # (..., k, i, j)
    out = np.einsum("...kij,...i,...j->...k", dB, d1, d2)
    out -= partial_derivative(lattice, np.einsum("...kj,...j->...k", B, d2), 0, scheme)
    out -= partial_derivative(lattice, np.einsum("...ik,...i->...k", B, d1), 1, scheme)
    return out


def energy_gradient_map(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
                        phi: MapField, psi: SpinorField | None = None,
                        spin: SpinStructure | None = None, clifford: CliffordRep | None = None,
                        scheme: str | None = None) -> np.ndarray:
    """Tangentially projected exact gradient of the recorded energy w.r.t. phi.

    This is what central finite differences of ``energy`` converge to; in
    Omega-mode it deliberately omits the magnetic force because the recorded
    energy has no two-form term there.
    """
    scheme = scheme or default_scheme(lattice)
    grad = -tension(lattice, target, phi, scheme)
    if psi is not None and not psi.is_zero():
        spin = spin or SpinStructure()
        clifford = clifford or default_clifford()
        grad = grad + curvature_term(lattice, target, spin, clifford, phi, psi, scheme)
    if magnetic.has_primitive and not magnetic.is_zero:
        g = magnetic_energy_gradient(lattice, magnetic, phi, scheme)
        if not target.is_flat:
            P = target.tangent_projector(phi.values)
            g = np.einsum("...ij,...j->...i", P, g)
        grad = grad + g
    return grad


def spinor_energy_gradient(lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                           clifford: CliffordRep, phi: MapField, psi: SpinorField,
                           scheme: str = "spectral") -> np.ndarray:
    """Gradient of the spinor action w.r.t. the real coordinates of psi.

    For tangent psi and tangent variations this is exactly the projected
    Dirac image (the operator is symmetric under the real pairing there).
    """
    dpsi, _ = el_residual_spinor(lattice, target, spin, clifford, phi, psi, scheme)
    return dpsi


# ---------------------------------------------------------------------------
# connection-form assembly (the skew-symmetric rewriting of the map equation)
# ---------------------------------------------------------------------------

def riviere_connection(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
                       phi: MapField, psi: SpinorField | None = None,
                       clifford: CliffordRep | None = None,
                       scheme: str | None = None) -> RiviereForm:
    """Assemble the sitewise antisymmetric matrices (f, g) with
    -Lap(phi) = f . d1(phi) + g . d2(phi) for solutions.

    The derivative slots are tangentially projected, which makes the three
    skew rewritings (normal-frame part, shape-operator part, three-form
    part) exact sitewise identities.  Requires closed-form frame data.
    """
    if lattice.kind != TORUS:
        raise UnsupportedOperationError("connection-form assembly is torus-only")
    scheme = scheme or default_scheme(lattice)
    if target.frame_jacobian is None:
        raise UnsupportedOperationError("target lacks closed-form frame derivatives")
    y = phi.values
    q = target.q
    P = target.tangent_projector(y)
    d1 = np.einsum("...ij,...j->...i", P, map_derivative(lattice, phi, 0, scheme))
    d2 = np.einsum("...ij,...j->...i", P, map_derivative(lattice, phi, 1, scheme))

    A = target.coupling_tensor(y)          # A^{mi}_j
    K = A - np.swapaxes(A, -3, -2)         # skew normal-frame kernel
    f = np.einsum("...mij,...j->...mi", K, d1)
    g = np.einsum("...mij,...j->...mi", K, d2)

    if not magnetic.is_zero:
        Z = magnetic.z_tensor(y)           # Z^m_{ij}
        f -= 0.5 * np.einsum("...mij,...j->...mi", Z, d2)
        g += 0.5 * np.einsum("...mij,...j->...mi", Z, d1)

    if psi is not None and not psi.is_zero():
        clifford = clifford or default_clifford()
        jac = target.frame_jacobian(y)     # (..., l, p, k)
        Q = np.einsum("...mp,...lpk->...lmk", P, jac)
        W = np.einsum("...lij,...lmk->...mijk", Q, Q) - np.einsum("...lik,...lmj->...mijk", Q, Q)
        # the 1/4 ties the skew bracket to the variational normalization of the
        # curvature force (the gradient of the half-action); checked exactly
        # against the pointwise curvature contraction on sphere targets
        for axis, mat in ((0, f), (1, g)):
            gpsi = apply_gamma(clifford, axis, psi.values)
            s = np.einsum("...kc,...jc->...kj", np.conj(psi.values), gpsi).real
            mat -= 0.25 * np.einsum("...mijk,...kj->...mi", W, s)
    return RiviereForm(f, g)


def ambient_pde_residual(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
                         phi: MapField, psi: SpinorField | None = None,
                         clifford: CliffordRep | None = None,
                         scheme: str | None = None) -> np.ndarray:
    """Second, independent assembly of -Lap(phi) - A.grad(phi).

    Composes the target's second fundamental form, shape operator and the
    three-form contraction directly on tangentially projected slots; equals
    -Lap(phi) - (connection form contraction) to roundoff.
    """
    scheme = scheme or default_scheme(lattice)
    y = phi.values
    P = target.tangent_projector(y)
    d1 = np.einsum("...ij,...j->...i", P, map_derivative(lattice, phi, 0, scheme))
    d2 = np.einsum("...ij,...j->...i", P, map_derivative(lattice, phi, 1, scheme))
    lap = laplacian(lattice, phi.values, scheme)
    res = -lap

    jac = target.frame_jacobian(y)  # (..., l, i, j)
    nu = target.normal_frame(y)
    for d in (d1, d2):
        coef = np.einsum("...i,...lij,...j->...l", d, jac, d)
        res -= np.einsum("...l,...li->...i", coef, nu)

    if not magnetic.is_zero:
        res += magnetic_Z(magnetic, y, d1, d2)

    if psi is not None and not psi.is_zero():
        clifford = clifford or default_clifford()
        dA = target.coupling_gradient(y)  # (..., k, m, i, j)
        for axis, d in ((0, d1), (1, d2)):
            gpsi = apply_gamma(clifford, axis, psi.values)
            S = np.einsum("...mc,...ic->...mi", np.conj(psi.values), gpsi).real
            res += 0.5 * _contract_coupling_gradient(dA, S, d)
    return res
