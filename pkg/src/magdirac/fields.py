"""Map and spinor fields: containers, constraint enforcement, init, snapshots.

The map phi is stored as a grid of ambient q-vectors plus an optional winding
matrix W (q x 2): the physical field is W.x + periodic part, so linear winding
maps into flat targets keep exact derivatives.  The spinor is a grid of q
ambient 2-component complex spinors holding the periodic representative (spin
phases live in the derivative operators).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import MagdiracError, OffManifoldError, UnsupportedOperationError
from .surface import ANNULUS, TORUS, Lattice, SpinStructure, wavenumbers
from .target import TargetManifold

TANGENCY_TOL = 1e-8


@dataclass
class MapField:
    values: np.ndarray                 # (n1, n2, q) real
    winding: np.ndarray | None = None  # (q, 2) slope of the non-periodic part

    @property
    def q(self) -> int:
        return self.values.shape[-1]

    def winding_matrix(self) -> np.ndarray:
        if self.winding is None:
            return np.zeros((self.q, 2))
        return self.winding

    def copy(self) -> "MapField":
        w = None if self.winding is None else self.winding.copy()
        return MapField(self.values.copy(), w)


@dataclass
class SpinorField:
    values: np.ndarray  # (n1, n2, q, 2) complex

    @property
    def q(self) -> int:
        return self.values.shape[-2]

    def copy(self) -> "SpinorField":
        return SpinorField(self.values.copy())

    def is_zero(self) -> bool:
        return not np.any(self.values)


def zero_spinor(lattice: Lattice, q: int) -> SpinorField:
    return SpinorField(np.zeros(lattice.shape + (q, 2), dtype=complex))


def project_map(phi_raw, target: TargetManifold) -> MapField:
    """Sitewise nearest-point retraction onto the target."""
    if isinstance(phi_raw, MapField):
        vals, winding = phi_raw.values, phi_raw.winding
    else:
        vals, winding = np.asarray(phi_raw, dtype=float), None
    if winding is not None and np.any(winding) and not target.is_flat:
        raise UnsupportedOperationError("winding maps require a flat target")
    return MapField(target.project(vals), winding)


def enforce_tangency(psi: SpinorField, phi: MapField, target: TargetManifold) -> SpinorField:
    """Kill the normal part of psi pointwise: psi^i <- P^i_j(phi) psi^j."""
    target.check_on_manifold(phi.values)
    P = target.tangent_projector(phi.values)
    return SpinorField(np.einsum("...ij,...jc->...ic", P, psi.values))


def tangency_residual(psi: SpinorField, phi: MapField, target: TargetManifold) -> float:
    nu = target.normal_frame(phi.values)
    if nu.shape[-2] == 0:
        return 0.0
    r = np.einsum("...li,...ic->...lc", nu, psi.values)
    return float(np.max(np.abs(r)))


def band_limited_noise(lattice: Lattice, n_fields: int, seed: int, amplitude: float,
                       cutoff: int) -> np.ndarray:
    """Real random fields with spectral support |k1|,|k2| <= cutoff (integer modes)."""
    if lattice.kind != TORUS:
        raise UnsupportedOperationError("band-limited noise requires a torus")
    rng = np.random.default_rng(seed)
    n1, n2 = lattice.shape
    out = np.zeros((n1, n2, n_fields))
    m1 = np.rint(np.fft.fftfreq(n1) * n1).astype(int)
    m2 = np.rint(np.fft.fftfreq(n2) * n2).astype(int)
    keep = (np.abs(m1)[:, None] <= cutoff) & (np.abs(m2)[None, :] <= cutoff)
    for c in range(n_fields):
        spec = rng.normal(size=(n1, n2)) + 1j * rng.normal(size=(n1, n2))
        spec[~keep] = 0.0
        f = np.fft.ifft2(spec).real
        scale = np.max(np.abs(f))
        out[..., c] = amplitude * f / scale if scale > 0 else 0.0
    return out


def init_map(lattice: Lattice, target: TargetManifold, spec: dict, seed: int = 0) -> MapField:
    """Build an initial map field.

    Kinds: ``constant`` (base point, optional noise amplitude/cutoff),
    ``winding`` (angle winding integers for spheres, slope matrix rows for
    flat targets), ``random-smooth``.
    """
    kind = spec.get("kind", "constant")
    q = target.q
    if kind == "constant":
        y0 = np.asarray(spec.get("point", _default_base_point(q)), dtype=float)
        if y0.shape != (q,):
            raise MagdiracError(f"base point must have {q} components")
        vals = np.broadcast_to(y0, lattice.shape + (q,)).copy()
        amp = spec.get("noise_amplitude", 0.0)
        if amp:
            vals = vals + band_limited_noise(lattice, q, seed, amp, spec.get("noise_cutoff", 4))
        return project_map(vals, target)
    if kind == "winding":
        return _winding_map(lattice, target, spec)
    if kind == "random-smooth":
        amp = spec.get("amplitude", 0.1)
        cutoff = spec.get("cutoff", 4)
        y0 = np.asarray(spec.get("point", _default_base_point(q)), dtype=float)
        vals = np.broadcast_to(y0, lattice.shape + (q,)) + band_limited_noise(lattice, q, seed, amp, cutoff)
        return project_map(vals, target)
    raise MagdiracError(f"unknown map init kind {kind!r}")


def _default_base_point(q: int) -> np.ndarray:
    y0 = np.zeros(q)
    y0[-1] = 1.0
    return y0


def _winding_map(lattice: Lattice, target: TargetManifold, spec: dict) -> MapField:
    if lattice.kind != TORUS:
        raise UnsupportedOperationError("winding init requires a torus")
    q = target.q
    if target.is_flat:
        slope = np.asarray(spec.get("slope"), dtype=float)
        if slope.shape != (q, 2):
            raise MagdiracError(f"flat winding init needs a slope matrix of shape ({q}, 2)")
        return MapField(np.zeros(lattice.shape + (q,)), slope)
    m = int(spec.get("m", 1))
    n = int(spec.get("n", 0))
    x1, x2 = lattice.coordinates()
    ang = 2.0 * np.pi * (m * x1 / lattice.L1 + n * x2 / lattice.L2)
    vals = np.zeros(lattice.shape + (q,))
    vals[..., 0] = np.cos(ang)
    vals[..., 1] = np.sin(ang)
    return project_map(vals, target)


def init_spinor(lattice: Lattice, target: TargetManifold, phi: MapField, spec: dict,
                seed: int = 0) -> SpinorField:
    """Raw spinor initializers (eigen-initialization lives in the solver)."""
    kind = spec.get("kind", "zero")
    q = target.q
    if kind == "zero":
        return zero_spinor(lattice, q)
    if kind == "constant":
        comp = np.asarray(spec.get("components", np.ones((q, 2))), dtype=complex)
        vals = np.broadcast_to(comp, lattice.shape + (q, 2)).copy()
        return enforce_tangency(SpinorField(vals), phi, target)
    if kind == "random-smooth":
        amp = spec.get("amplitude", 1.0)
        cutoff = spec.get("cutoff", 4)
        re = band_limited_noise(lattice, 2 * q, seed, amp, cutoff)
        im = band_limited_noise(lattice, 2 * q, seed + 1, amp, cutoff)
        vals = (re + 1j * im).reshape(lattice.shape + (q, 2))
        return enforce_tangency(SpinorField(vals), phi, target)
    raise MagdiracError(f"unknown spinor init kind {kind!r}")


# ---------------------------------------------------------------------------
# snapshot serialization: flat CSV per field plus a JSON header
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _lattice_meta(lattice: Lattice) -> dict:
    meta = {"kind": lattice.kind, "n1": lattice.n1, "n2": lattice.n2}
    if lattice.kind == TORUS:
        meta.update(L1=lattice.L1, L2=lattice.L2)
    else:
        meta.update(r_inner=lattice.r_inner, r_outer=lattice.r_outer)
    return meta


def lattice_from_meta(meta: dict) -> Lattice:
    from .surface import make_lattice

    kw = {k: meta[k] for k in ("L1", "L2", "r_inner", "r_outer") if k in meta}
    return make_lattice(meta["kind"], meta["n1"], meta["n2"], **kw)


def save_snapshot(prefix: str, lattice: Lattice, target: TargetManifold,
                  spin: SpinStructure, phi: MapField, psi: SpinorField | None = None,
                  seed: int | None = None, extra: dict | None = None):
    """Write <prefix>.json plus <prefix>.map.csv (and .spinor.csv if psi given).

    Floats are emitted with 17 significant digits so reloads are bit-exact.
    """
    header = {
        "format": "magdirac-snapshot",
        "version": 1,
        "lattice": _lattice_meta(lattice),
        "target": {"name": target.name, "q": target.q, "n": target.n},
        "spin_structure": {"phase1": spin.phase1, "phase2": spin.phase2},
        "seed": seed,
        "fields": {"map": True, "spinor": psi is not None},
        "winding": None if phi.winding is None else phi.winding.tolist(),
    }
    if extra:
        header.update(extra)
    _atomic_write(prefix + ".json", json.dumps(header, indent=2, sort_keys=True) + "\n")

    x1, x2 = lattice.coordinates()
    n1, n2 = lattice.shape
    q = phi.q
    idx = np.arange(n1 * n2)
    cols = [idx, np.repeat(np.arange(n1), n2), np.tile(np.arange(n2), n1),
            x1.ravel(), x2.ravel()]
    names = ["site", "i1", "i2", "x1", "x2"]
    for c in range(q):
        cols.append(phi.values[..., c].ravel())
        names.append(f"phi{c}")
    _atomic_write(prefix + ".map.csv", _csv_text(names, cols))

    if psi is not None:
        cols = [idx, np.repeat(np.arange(n1), n2), np.tile(np.arange(n2), n1),
                x1.ravel(), x2.ravel()]
        names = ["site", "i1", "i2", "x1", "x2"]
        for c in range(q):
            for s in range(2):
                cols.append(psi.values[..., c, s].real.ravel())
                names.append(f"re_psi{c}_{s}")
                cols.append(psi.values[..., c, s].imag.ravel())
                names.append(f"im_psi{c}_{s}")
        _atomic_write(prefix + ".spinor.csv", _csv_text(names, cols))


def _csv_text(names, cols) -> str:
    lines = [",".join(names)]
    mat = np.column_stack(cols)
    for row in mat:
        parts = []
        for name, v in zip(names, row):
            if name in ("site", "i1", "i2"):
                parts.append(str(int(v)))
            else:
                parts.append(_FMT % v)
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def load_snapshot(prefix: str):
    """Reload a snapshot; returns (header, lattice, MapField, SpinorField|None)."""
    with open(prefix + ".json") as fh:
        header = json.load(fh)
    if header.get("format") != "magdirac-snapshot":
        raise MagdiracError(f"{prefix}.json is not a snapshot header")
    lattice = lattice_from_meta(header["lattice"])
    n1, n2 = lattice.shape
    q = header["target"]["q"]

    data = np.genfromtxt(prefix + ".map.csv", delimiter=",", names=True)
    vals = np.empty((n1, n2, q))
    for c in range(q):
        vals[..., c] = data[f"phi{c}"].reshape(n1, n2)
    winding = header.get("winding")
    phi = MapField(vals, None if winding is None else np.asarray(winding, dtype=float))

    psi = None
    if header["fields"].get("spinor"):
        data = np.genfromtxt(prefix + ".spinor.csv", delimiter=",", names=True)
        sv = np.empty((n1, n2, q, 2), dtype=complex)
        for c in range(q):
            for s in range(2):
                sv[..., c, s] = (data[f"re_psi{c}_{s}"] + 1j * data[f"im_psi{c}_{s}"]).reshape(n1, n2)
        psi = SpinorField(sv)
    return header, lattice, phi, psi
