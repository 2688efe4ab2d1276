"""Embedded target manifolds and magnetic three-form data.

Built-in targets are flat R^q and unit spheres S^n in R^(n+1), both with
closed-form extrinsic data (normal frame, its Jacobian, second fundamental
form, shape operator).  All callables are vectorized over leading site axes.

Magnetic data is the Hom(Lambda^2 T, T) realization Z of a three-form:
<eta, Z(v ^ w)> = Omega(eta, v, w).  Built-in forms: the constant-coefficient
volume form on R^3 (with a symmetric-gauge primitive, "B-mode") and the
volume form of S^3 extended off the sphere by the 4D triple product
("Omega-mode", no global primitive).  On two-dimensional targets every
three-form vanishes, so the data degrades to the exact zero map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import MagdiracError, OffManifoldError, UnsupportedOperationError

ON_MANIFOLD_TOL = 1e-8


@dataclass(frozen=True)
class TargetManifold:
    """Closed-form surface data of an embedded target N in R^q.

    ``frame_jacobian`` is the derivative of the chosen smooth ambient
    extension of the normal frame; for spheres the degree-1 extension
    nu(y) = y is used, so the Jacobian is the identity.
    """

    name: str
    q: int
    n: int
    project: Callable[[np.ndarray], np.ndarray]
    tangent_projector: Callable[[np.ndarray], np.ndarray]
    normal_frame: Callable[[np.ndarray], np.ndarray]       # (..., q-n, q)
    frame_jacobian: Callable[[np.ndarray], np.ndarray]     # (..., q-n, q, q): d nu_l^i / d y^j
    coupling_gradient: Callable[[np.ndarray], np.ndarray]  # (..., q, q, q, q): d_k A^{mi}_j

    @property
    def codim(self) -> int:
        return self.q - self.n

    @property
    def is_flat(self) -> bool:
        return self.codim == 0

    def coupling_tensor(self, y: np.ndarray) -> np.ndarray:
        """A^{mi}_j = sum_l nu_l^m  d nu_l^i / d y^j, the pullback-connection kernel."""
        nu = self.normal_frame(y)
        jac = self.frame_jacobian(y)
        return np.einsum("...lm,...lij->...mij", nu, jac)

    def check_on_manifold(self, y: np.ndarray, tol: float = ON_MANIFOLD_TOL):
        d = np.linalg.norm(y - self.project(y), axis=-1)
        worst = float(np.max(d)) if d.size else 0.0
        if worst > tol:
            idx = np.unravel_index(int(np.argmax(d)), d.shape) if d.ndim else ()
            raise OffManifoldError(f"point off manifold by {worst:.3e} at site {idx}")


def flat_target(q: int) -> TargetManifold:
    """R^q with identity projection and no extrinsic curvature."""
    if q < 2:
        raise MagdiracError("flat target needs ambient dimension >= 2")

    def project(y):
        return np.asarray(y, dtype=float)

    def projector(y):
        y = np.asarray(y)
        eye = np.eye(q)
        return np.broadcast_to(eye, y.shape[:-1] + (q, q)).copy()

    def frame(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + (0, q))

    def frame_jac(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + (0, q, q))

    def coup_grad(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + (q, q, q, q))

    return TargetManifold("flat", q, q, project, projector, frame, frame_jac, coup_grad)


def sphere_target(n: int) -> TargetManifold:
    """Unit sphere S^n in R^(n+1): radial projection, outward normal."""
    if n < 1:
        raise MagdiracError("sphere target needs dimension >= 1")
    q = n + 1

    def project(y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        if np.any(r == 0.0):
            raise OffManifoldError("sphere projection undefined at the origin")
        return y / r

    def projector(y):
        yh = project(y)
        eye = np.eye(q)
        return eye - np.einsum("...i,...j->...ij", yh, yh)

    def frame(y):
        return project(y)[..., None, :]

    def frame_jac(y):
        y = np.asarray(y)
        eye = np.eye(q)
        return np.broadcast_to(eye, y.shape[:-1] + (1, q, q)).copy()

    def coup_grad(y):
        # A^{mi}_j = y^m delta^i_j for the linear extension, so the gradient
        # is delta^m_k delta^i_j, constant in y
        y = np.asarray(y)
        g = np.einsum("mk,ij->kmij", np.eye(q), np.eye(q))
        return np.broadcast_to(g, y.shape[:-1] + (q, q, q, q))

    return TargetManifold(f"sphere{n}", q, n, project, projector, frame, frame_jac, coup_grad)


def second_fundamental_form(target: TargetManifold, y: np.ndarray, X: np.ndarray,
                            Y: np.ndarray, check: bool = True) -> np.ndarray:
    """II(X, Y) = <X, grad_Y nu_l> nu_l with the slots pre-projected to T_yN.

    For the unit sphere this is <X, Y> y.  Works pointwise or vectorized.
    """
    if check:
        target.check_on_manifold(y)
    P = target.tangent_projector(y)
    Xt = np.einsum("...ij,...j->...i", P, X)
    Yt = np.einsum("...ij,...j->...i", P, Y)
    jac = target.frame_jacobian(y)
    nu = target.normal_frame(y)
    coef = np.einsum("...i,...lij,...j->...l", Xt, jac, Yt)
    return np.einsum("...l,...li->...i", coef, nu)


def shape_operator(target: TargetManifold, y: np.ndarray, xi: np.ndarray,
                   X: np.ndarray, check: bool = True) -> np.ndarray:
    """The dual P(xi, X) of II: <P(xi,X), Y> = <II(X,Y), xi> for tangent Y."""
    if check:
        target.check_on_manifold(y)
    nu = target.normal_frame(y)
    jac = target.frame_jacobian(y)
    P = target.tangent_projector(y)
    xi_l = np.einsum("...li,...i->...l", nu, xi)
    raw = np.einsum("...l,...i,...lij->...j", xi_l, X, jac)
    return np.einsum("...ij,...j->...i", P, raw)


def _levi_civita(dim: int) -> np.ndarray:
    eps = np.zeros((dim,) * dim)
    for idx in np.ndindex(*eps.shape):
        if len(set(idx)) == dim:
            perm = np.zeros((dim, dim))
            for row, col in enumerate(idx):
                perm[row, col] = 1.0
            eps[idx] = round(np.linalg.det(perm))
    return eps


_EPS4 = _levi_civita(4)


@dataclass(frozen=True)
class MagneticData:
    """Skew map Z of a three-form plus optional primitive matrix B.

    ``z_tensor(y)`` returns Z^k(d_i ^ d_j) with k first, shape (..., q, q, q).
    ``b_matrix``/``b_jacobian`` exist only in B-mode (Omega = dB globally).
    """

    name: str
    q: int
    strength: float
    z_tensor: Callable[[np.ndarray], np.ndarray]
    b_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None
    b_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def has_primitive(self) -> bool:
        return self.b_matrix is not None

    @property
    def is_zero(self) -> bool:
        return self.strength == 0.0


def magnetic_none(q: int) -> MagneticData:
    def z(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + (q, q, q))

    def b(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + (q, q))

    def db(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + (q, q, q))

    return MagneticData("none", q, 0.0, z, b, db)


_EPS3 = _levi_civita(3)


def volume_form_magnetic(target: TargetManifold, strength: float) -> MagneticData:
    """Omega = strength * (volume form of the target), extended ambiently.

    Flat R^3: constant coefficients with the symmetric-gauge primitive
    B_ij = (strength/3) eps_ijk y^k (B-mode).  S^3: Z(v^w)(y) is the 4D
    triple product strength * T(y, v, w); the form is not exact, so no
    primitive is attached (Omega-mode).  Two-dimensional targets carry no
    three-form: the data is the exact zero map.
    """
    lam = float(strength)
    if target.n == 2:
        z = magnetic_none(target.q)
        return MagneticData("volume-form", target.q, lam, z.z_tensor, z.b_matrix, z.b_jacobian)
    if target.name == "flat" and target.q == 3:
        def z(y):
            y = np.asarray(y)
            return np.broadcast_to(lam * _EPS3.transpose(2, 0, 1), y.shape[:-1] + (3, 3, 3))

        def b(y):
            y = np.asarray(y)
            return (lam / 3.0) * np.einsum("ijk,...k->...ij", _EPS3, y)

        def db(y):
            y = np.asarray(y)
            # d_k B_ij, constant
            g = (lam / 3.0) * _EPS3.transpose(2, 0, 1)
            return np.broadcast_to(g, y.shape[:-1] + (3, 3, 3))

        return MagneticData("volume-form", 3, lam, z, b, db)
    if target.name == "sphere3":
        def z(y):
            y = np.asarray(y)
            # Z^k_{ij}(y) = lam * det[y, e_i, e_j, e_k] = lam * eps_{mijk} y^m
            return lam * np.einsum("mijk,...m->...kij", _EPS4, y)

        return MagneticData("volume-form", 4, lam, z)
    raise UnsupportedOperationError(f"no built-in volume form for target {target.name!r}")


def h_surface_magnetic(H: float) -> MagneticData:
    """Constant-H prescribed-curvature data on R^3: Omega = 2H * volume form."""
    return volume_form_magnetic(flat_target(3), 2.0 * H)


def custom_magnetic(name: str, q: int, z_tensor, b_matrix=None, b_jacobian=None,
                    strength: float = 1.0) -> MagneticData:
    """Escape hatch for tests: wrap a raw Z tensor (e.g. a corrupted one)."""
    return MagneticData(name, q, strength, z_tensor, b_matrix, b_jacobian)


def magnetic_Z(magnetic: MagneticData, y: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Evaluate Z(v ^ w) at y: contraction Z^k_{ij} v^i w^j."""
    return np.einsum("...kij,...i,...j->...k", magnetic.z_tensor(y), v, w)


def check_magnetic_skew(magnetic: MagneticData, points: np.ndarray) -> float:
    """Max violation of the cyclic skew identity Z^k(d_i^d_j) = -Z^i(d_k^d_j)."""
    points = np.atleast_2d(points)
    if points.shape[0] < 1:
        raise MagdiracError("need at least one sample point")
    Z = magnetic.z_tensor(points)  # (..., k, i, j)
    viol = Z + np.swapaxes(Z, -3, -2)
    return float(np.max(np.abs(viol)))


def magnetic_from_spec(target: TargetManifold, kind: str, **params) -> MagneticData:
    """Resolve a magnetic spec name used by run configs."""
    if kind == "none":
        return magnetic_none(target.q)
    if kind == "volume-form":
        return volume_form_magnetic(target, params.get("strength", 1.0))
    if kind == "h-surface":
        if not (target.is_flat and target.q == 3):
            raise UnsupportedOperationError("h-surface magnetic data requires the flat R^3 target")
        return h_surface_magnetic(params.get("H", 1.0))
    raise MagdiracError(f"unknown magnetic kind {kind!r}")


def target_from_spec(kind: str, dim: int) -> TargetManifold:
    if kind == "sphere":
        return sphere_target(dim)
    if kind == "flat":
        return flat_target(dim)
    raise MagdiracError(f"unknown target kind {kind!r}")
