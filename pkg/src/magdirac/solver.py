"""Critical-point search: spinor kernel solves, projected gradient flow, coupling.

The spinor equation is linear and indefinite, so the spinor is always found
by an eigensolve of the twisted Dirac operator restricted to the tangency
subspace (never by descent).  The subspace is spanned by per-site orthonormal
tangent frames; restricted there the operator is exactly Hermitian and the
pullback coupling term drops out of the reduction, leaving frame-conjugated
flat Dirac applications.

The map is evolved by explicit projected gradient flow with a scheme-aware
parabolic step bound and energy-backtracking in the modes where the recorded
energy is a Lyapunov function.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import EigenSolveError, FlowStepError, MagdiracError
from .fields import MapField, SpinorField, enforce_tangency, project_map, zero_spinor
from .operators import el_residual_map, el_residual_spinor, energy
from .surface import (ANNULUS, TORUS, CliffordRep, Lattice, SpinStructure,
                      default_clifford, dirac_untwisted, min_nonzero_wavenumber,
                      wavenumbers)
from .target import MagneticData, TargetManifold, magnetic_none

MODES = ("coupled", "map-only", "spinor-only")


@dataclass
class SolveConfig:
    mode: str = "coupled"
    max_outer: int = 200
    flow_dt: float | None = None
    tol_map: float = 1e-6
    tol_spinor: float = 1e-6
    k_eigs: int = 4
    spinor_norm: float = 1.0
    refresh_interval: int = 25
    eig_tol: float = 2e-9      # Rayleigh-residual target, kept under the 1e-8 gate
    eig_maxiter: int = 40
    dense_threshold: int = 3200
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise MagdiracError(f"unknown solve mode {self.mode!r}")
        if self.flow_dt is not None and self.flow_dt <= 0:
            raise MagdiracError("flow_dt must be positive")
        if self.tol_map <= 0 or self.tol_spinor <= 0:
            raise MagdiracError("tolerances must be positive")
        if self.k_eigs < 1:
            raise MagdiracError("k_eigs must be >= 1")


@dataclass
class SolveReport:
    mode: str
    status: str
    iterations: int
    energy: dict
    map_residuals: list
    spinor_residuals: list
    energies: list
    eigenvalues: list
    flags: list
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "mode": self.mode,
            "status": self.status,
            "iterations": self.iterations,
            "energy": self.energy,
            "map_residuals": self.map_residuals,
            "spinor_residuals": self.spinor_residuals,
            "energies": self.energies,
            "eigenvalues": self.eigenvalues,
            "flags": self.flags,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


# ---------------------------------------------------------------------------
# tangency-subspace machinery
# ---------------------------------------------------------------------------

def tangent_frames(target: TargetManifold, y: np.ndarray) -> np.ndarray:
    """Per-site orthonormal tangent frames, shape (..., n, q).

    Built from the spectral decomposition of the tangent projector with a
    deterministic sign fix, so degenerate choices are reproducible.
    """
    q, n = target.q, target.n
    if target.is_flat:
        eye = np.eye(q)
        return np.broadcast_to(eye, y.shape[:-1] + (q, q)).copy()
    P = target.tangent_projector(y)
    _, V = np.linalg.eigh(P)           # ascending; tangent block is the top n
    frames = np.moveaxis(V[..., q - n:], -1, -2)
    idx = np.argmax(np.abs(frames), axis=-1, keepdims=True)
    lead = np.take_along_axis(frames, idx, axis=-1)
    sign = np.where(lead >= 0.0, 1.0, -1.0)
    return frames * sign


class ReducedDirac:
    """Twisted Dirac operator in per-site tangent-frame coordinates.

    The pullback coupling maps into the normal bundle, so conjugating the
    flat Dirac operator by the frames realizes the full twisted operator on
    the constraint subspace; the result is exactly Hermitian.
    """

    def __init__(self, lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                 clifford: CliffordRep, phi: MapField):
        if lattice.kind != TORUS:
            raise MagdiracError("spinor eigensolves are torus-only")
        self.lattice = lattice
        self.target = target
        self.spin = spin
        self.clifford = clifford
        self.frames = tangent_frames(target, phi.values)
        self.shape_red = lattice.shape + (target.n, 2)
        self.size = int(np.prod(self.shape_red))

    def lift(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("xyaq,xyac->xyqc", self.frames, x)

    def restrict(self, amb: np.ndarray) -> np.ndarray:
        return np.einsum("xyaq,xyqc->xyac", self.frames, amb)

    def apply(self, x: np.ndarray) -> np.ndarray:
        amb = dirac_untwisted(self.lattice, self.spin, self.clifford, self.lift(x))
        return self.restrict(amb)

    def apply_flat(self, xf: np.ndarray) -> np.ndarray:
        if xf.ndim == 1:
            return self.apply(xf.reshape(self.shape_red)).ravel()
        cols = [self.apply(xf[:, j].reshape(self.shape_red)).ravel() for j in range(xf.shape[1])]
        return np.stack(cols, axis=1)

    def preconditioner(self, mu: float) -> LinearOperator:
        """Approximate inverse of (L^2 + mu): free-operator FFT inverse applied
        in the ambient representation, so per-site frame choices cancel."""
        s1, s2 = self.spin.shifts(self.lattice)
        k1 = wavenumbers(self.lattice, 0, s1)
        k2 = wavenumbers(self.lattice, 1, s2)
        denom = (k1[:, None] ** 2 + k2[None, :] ** 2 + mu)[..., None, None]

        def mv(v):
            amb = self.lift(v.reshape(self.shape_red))
            A = np.fft.fft2(amb, axes=(0, 1))
            A /= denom
            return self.restrict(np.fft.ifft2(A, axes=(0, 1))).ravel()

        return LinearOperator((self.size, self.size), matvec=mv, dtype=complex)


def _orthonormalize(X: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(X)
    s = np.sign(np.real(np.diag(R)))
    s[s == 0.0] = 1.0
    return Q * s


def _rayleigh_ritz(op: ReducedDirac, X: np.ndarray, k: int):
    """Extract k smallest-|lambda| signed eigenpairs from span[X, L X]."""
    B = _orthonormalize(np.hstack([X, op.apply_flat(X)]))
    H = B.conj().T @ op.apply_flat(B)
    H = 0.5 * (H + H.conj().T)
    w, U = np.linalg.eigh(H)
    order = np.argsort(np.abs(w), kind="stable")[:k]
    return w[order], B @ U[:, order]


def _iterative_eigs(op: ReducedDirac, k: int, config: SolveConfig,
                    warm_start: SpinorField | None, warm_block: np.ndarray | None = None):
    """Shift-inverted subspace iteration on the squared operator.

    Inner solves of (L^2 + mu) y = x by CG with the exact free-operator FFT
    inverse as preconditioner; Rayleigh-Ritz on L itself splits the signed
    pairs and keeps degenerate clusters deterministic.
    """
    rng = np.random.default_rng(config.seed)
    block = min(max(2 * k, 8), op.size)
    X = rng.standard_normal((op.size, block)) + 1j * rng.standard_normal((op.size, block))
    if warm_block is not None and warm_block.shape == (op.size, block):
        X = warm_block.copy()
    elif warm_start is not None:
        x0 = op.restrict(warm_start.values).ravel()
        if np.linalg.norm(x0) > 0:
            X[:, 0] = x0
    X = _orthonormalize(X)

    mu = max((0.5 * min_nonzero_wavenumber(op.lattice)) ** 2, 1e-8)
    M = op.preconditioner(mu)
    sys_op = LinearOperator(
        (op.size, op.size),
        matvec=lambda v: op.apply_flat(op.apply_flat(v)) + mu * v, dtype=complex)

    vals = np.zeros(block)
    gap = min_nonzero_wavenumber(op.lattice)
    rtol = 1e-2
    for outer in range(config.eig_maxiter):
        Y = np.empty_like(X)
        for j in range(X.shape[1]):
            y, _ = cg(sys_op, X[:, j], x0=X[:, j], rtol=rtol, atol=0.0, maxiter=100, M=M)
            Y[:, j] = y
        vals, X = _rayleigh_ritz(op, _orthonormalize(Y), block)
        scale = max(np.max(np.abs(vals[:k])), gap, 1e-12)
        res = [np.linalg.norm(op.apply_flat(X[:, j]) - vals[j] * X[:, j]) for j in range(k)]
        if max(res) <= max(config.eig_tol * max(scale, 1.0), 2e-13):
            break
        rtol = max(0.3 * rtol, 1e-12)
    return vals[:k], X[:, :k], X


def solve_spinor(lattice: Lattice, target: TargetManifold, spin: SpinStructure,
                 clifford: CliffordRep, phi: MapField, k_eigs: int,
                 config: SolveConfig | None = None, warm_start: SpinorField | None = None,
                 warm_block: np.ndarray | None = None, return_block: bool = False):
    """k smallest-|lambda| eigenpairs of the constrained twisted Dirac operator.

    Returns (eigenvalues, spinors): eigenvalues sorted by magnitude, spinors
    tangency-constrained and L2-normalized.  Dense diagonalization below the
    size threshold; above it, preconditioned shift-inverted subspace
    iteration on the squared operator with a signed Rayleigh-Ritz split.
    """
    config = config or SolveConfig()
    op = ReducedDirac(lattice, target, spin, clifford, phi)
    k = min(k_eigs, op.size)
    block = None

    if op.size <= config.dense_threshold:
        eye = np.eye(op.size, dtype=complex)
        M = op.apply_flat(eye)
        M = 0.5 * (M + M.conj().T)
        w, V = np.linalg.eigh(M)
        order = np.argsort(np.abs(w), kind="stable")[:k]
        vals, vecs = w[order], V[:, order]
    else:
        vals, vecs, block = _iterative_eigs(op, k, config, warm_start, warm_block)

    vals = np.real(vals)
    spinors = []
    resid = []
    w_cell = float(lattice.cell_weights().flat[0])
    for j in range(k):
        x = vecs[:, j] / np.linalg.norm(vecs[:, j])
        r = np.linalg.norm(op.apply_flat(x) - vals[j] * x)
        resid.append(r)
        amb = op.lift(x.reshape(op.shape_red)) / np.sqrt(w_cell)
        spinors.append(SpinorField(amb))
    scale = max(np.max(np.abs(vals)), min_nonzero_wavenumber(lattice))
    worst = max(resid)
    if worst > 1e-8 * max(scale, 1.0):
        raise EigenSolveError(f"eigensolve residuals up to {worst:.3e} exceed tolerance "
                              f"(eigenvalues {np.array2string(vals, precision=3)})")
    if return_block:
        return vals, spinors, block
    return vals, spinors


def spinor_l4_norm(lattice: Lattice, psi: SpinorField) -> float:
    dens = np.sum(np.abs(psi.values) ** 2, axis=(-2, -1)) ** 2
    return float(np.sum(dens * lattice.cell_weights()) ** 0.25)


def normalize_spinor(lattice: Lattice, psi: SpinorField, l4_target: float) -> SpinorField:
    n = spinor_l4_norm(lattice, psi)
    if n == 0.0:
        return psi
    return SpinorField(psi.values * (l4_target / n))


# ---------------------------------------------------------------------------
# projected gradient flow
# ---------------------------------------------------------------------------

def stable_dt(lattice: Lattice, scheme: str, safety: float = 0.5) -> float:
    """Parabolic step bound: safety * 2 / lambda_max of the discrete Laplacian."""
    h1, h2 = lattice.spacings
    if lattice.kind == TORUS:
        if scheme == "spectral":
            lam = (np.pi / h1) ** 2 + (np.pi / h2) ** 2
        else:
            lam = 4.0 / h1**2 + 4.0 / h2**2
    else:
        r_min = lattice.r_inner
        lam = 4.0 / h1**2 + 4.0 / (r_min * h2) ** 2 + 2.0 / (r_min * h1)
    return safety * 2.0 / lam


def flow_map(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
             phi: MapField, psi: SpinorField | None, config: SolveConfig,
             spin: SpinStructure | None = None, clifford: CliffordRep | None = None,
             max_steps: int = 1000, scheme: str | None = None):
    """Explicit projected gradient flow on the map with fixed spinor.

    Returns (phi', log) with per-step residual norms and energies.  In
    map-only runs whose recorded energy is complete (B-mode or no magnetic
    term) an energy increase beyond roundoff rejects the step and halves dt;
    dt underflow raises FlowStepError.
    """
    from .operators import default_scheme

    scheme = scheme or default_scheme(lattice)
    spin = spin or SpinStructure()
    clifford = clifford or default_clifford()
    dt0 = config.flow_dt if config.flow_dt is not None else stable_dt(lattice, scheme)
    dt = min(dt0, stable_dt(lattice, scheme))
    monotone = (psi is None or psi.is_zero()) and (magnetic.is_zero or magnetic.has_primitive)

    def total_energy(p):
        return energy(lattice, target, magnetic, p, psi, spin, clifford, scheme).total

    e_old = total_energy(phi)
    residuals, energies = [], [e_old]
    for _ in range(max_steps):
        res, norm = el_residual_map(lattice, target, magnetic, phi, psi, spin, clifford, scheme)
        residuals.append(norm)
        if norm <= config.tol_map:
            break
        while True:
            cand = project_map(MapField(phi.values + dt * res, phi.winding), target)
            if not monotone:
                break
            e_new = total_energy(cand)
            if e_new <= e_old + 1e-12 * max(1.0, abs(e_old)):
                break
            dt *= 0.5
            if dt < 1e-10 * dt0:
                raise FlowStepError(f"flow step size underflowed at residual {norm:.3e}")
        phi = cand
        if monotone:
            # the per-step energy is the Lyapunov guard; keep its full history
            e_old = e_new
            energies.append(e_old)
    else:
        res, norm = el_residual_map(lattice, target, magnetic, phi, psi, spin, clifford, scheme)
        residuals.append(norm)
    if not monotone:
        energies.append(total_energy(phi))
    return phi, {"residuals": residuals, "energies": energies, "dt": dt}


# ---------------------------------------------------------------------------
# coupled alternation
# ---------------------------------------------------------------------------

def solve_coupled(lattice: Lattice, target: TargetManifold, magnetic: MagneticData,
                  spin: SpinStructure, config: SolveConfig, phi0: MapField,
                  psi0: SpinorField | None = None, clifford: CliffordRep | None = None,
                  quiet: bool = True):
    """Alternating scheme: map flow with fixed spinor, periodic kernel re-solves.

    Returns (phi, psi, SolveReport).  Termination: both residual norms below
    tolerance ('converged'), budget exhausted ('max_outer'), or the twisted
    kernel is gone ('no-kernel', coupled mode only, not an exception).
    """
    import sys

    clifford = clifford or default_clifford()
    t0 = time.perf_counter()
    scheme = "spectral" if lattice.kind == TORUS else "central"
    flags = []
    if target.is_flat:
        flags.append("model-limit")
    if not magnetic.is_zero and not magnetic.has_primitive:
        flags.append("omega-mode")

    phi = project_map(phi0, target)
    psi = psi0
    accept = config.tol_spinor * max(min_nonzero_wavenumber(lattice), 1e-30)
    map_hist, spin_hist, energy_hist, eig_hist = [], [], [], []
    status = "max_outer"
    iterations = 0

    eig_block = None
    if config.mode == "map-only" or (config.mode == "coupled" and lattice.kind == ANNULUS):
        psi = zero_spinor(lattice, target.q) if psi is None else psi
    elif psi is None or psi.is_zero():
        vals, vecs, eig_block = solve_spinor(lattice, target, spin, clifford, phi,
                                             config.k_eigs, config, return_block=True)
        eig_hist.append([float(v) for v in vals])
        if config.mode != "map-only" and abs(vals[0]) > accept:
            status = "no-kernel"
            psi = zero_spinor(lattice, target.q)
            report = _report(config.mode, status, 0, lattice, target, magnetic, phi, psi,
                             spin, clifford, map_hist, spin_hist, energy_hist, eig_hist,
                             flags, t0, scheme)
            return phi, psi, report
        psi = normalize_spinor(lattice, vecs[0], config.spinor_norm)
    else:
        psi = enforce_tangency(psi, phi, target)

    if config.mode == "spinor-only":
        _, sres = el_residual_spinor(lattice, target, spin, clifford, phi, psi, scheme)
        spin_hist.append(sres)
        status = "converged" if sres <= config.tol_spinor else "max_outer"
        report = _report(config.mode, status, 1, lattice, target, magnetic, phi, psi, spin,
                         clifford, map_hist, spin_hist, energy_hist, eig_hist, flags, t0, scheme)
        return phi, psi, report

    for outer in range(1, config.max_outer + 1):
        iterations = outer
        _, mres = el_residual_map(lattice, target, magnetic, phi, psi, spin, clifford, scheme)
        if psi.is_zero() or lattice.kind == ANNULUS:
            sres = 0.0
        else:
            _, sres = el_residual_spinor(lattice, target, spin, clifford, phi, psi, scheme)
        map_hist.append(mres)
        spin_hist.append(sres)
        if not quiet:
            print(f"[magdirac] outer {outer}: map residual {mres:.3e}, spinor residual {sres:.3e}",
                  file=sys.stderr)
        if mres <= config.tol_map and sres <= config.tol_spinor:
            status = "converged"
            break
        phi, log = flow_map(lattice, target, magnetic, phi, psi, config, spin, clifford,
                            max_steps=config.refresh_interval, scheme=scheme)
        energy_hist.extend(log["energies"][1:])
        if config.mode == "coupled" and lattice.kind == TORUS and not psi.is_zero():
            vals, vecs, eig_block = solve_spinor(lattice, target, spin, clifford, phi,
                                                 config.k_eigs, config, warm_start=psi,
                                                 warm_block=eig_block, return_block=True)
            eig_hist.append([float(v) for v in vals])
            if abs(vals[0]) > accept:
                status = "no-kernel"
                break
            new = vecs[0]
            overlap = np.vdot(psi.values.ravel(), new.values.ravel())
            if abs(overlap) > 0 and np.real(overlap) < 0:
                new = SpinorField(-new.values)
            psi = normalize_spinor(lattice, new, config.spinor_norm)

    report = _report(config.mode, status, iterations, lattice, target, magnetic, phi, psi,
                     spin, clifford, map_hist, spin_hist, energy_hist, eig_hist, flags, t0, scheme)
    return phi, psi, report


def _report(mode, status, iterations, lattice, target, magnetic, phi, psi, spin, clifford,
            map_hist, spin_hist, energy_hist, eig_hist, flags, t0, scheme) -> SolveReport:
    eb = energy(lattice, target, magnetic, phi, psi, spin, clifford, scheme)
    return SolveReport(
        mode=mode, status=status, iterations=iterations, energy=eb.to_dict(),
        map_residuals=[float(v) for v in map_hist],
        spinor_residuals=[float(v) for v in spin_hist],
        energies=[float(v) for v in energy_hist],
        eigenvalues=eig_hist, flags=flags,
        wall_time=time.perf_counter() - t0,
    )
