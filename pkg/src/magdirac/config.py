"""Strict JSON run configuration: version-checked, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .fields import init_map, init_spinor, zero_spinor
from .solver import SolveConfig
from .surface import SpinStructure, make_lattice
from .target import magnetic_from_spec, target_from_spec

_LATTICE_KEYS = {"kind", "n1", "n2", "L1", "L2", "r_inner", "r_outer"}
_TARGET_KEYS = {"kind", "dim"}
_MAGNETIC_KEYS = {"kind", "strength", "H"}
_SPIN_KEYS = {"phase1", "phase2"}
_MAP_INIT_KEYS = {"kind", "point", "noise_amplitude", "noise_cutoff", "amplitude",
                  "cutoff", "m", "n", "slope"}
_SPINOR_INIT_KEYS = {"kind", "components", "amplitude", "cutoff"}
_SOLVE_KEYS = {"mode", "max_outer", "flow_dt", "tol_map", "tol_spinor", "k_eigs",
               "spinor_norm", "refresh_interval", "eig_tol", "eig_maxiter",
               "dense_threshold"}
_DIAG_KEYS = {"enabled", "tolerances"}
_TOP_KEYS = {"version", "seed", "output_dir", "lattice", "target", "magnetic",
             "spin_structure", "init", "solve", "diagnostics", "snapshot"}


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where!r} must be a JSON object")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} in {where!r}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing required key {key!r} in {where!r}")
    return d[key]


@dataclass
class RunConfig:
    raw: dict
    seed: int
    output_dir: str
    lattice: object
    target: object
    magnetic: object
    spin: SpinStructure
    solve: SolveConfig
    map_init: dict
    spinor_init: dict
    diag_enabled: list | None
    diag_tolerances: dict
    snapshot: str | None

    def build_fields(self):
        phi = init_map(self.lattice, self.target, self.map_init, seed=self.seed)
        kind = self.spinor_init.get("kind", "eigen")
        if kind == "eigen":
            psi = None
        elif kind == "zero":
            psi = zero_spinor(self.lattice, self.target.q)
        else:
            psi = init_spinor(self.lattice, self.target, phi, self.spinor_init, seed=self.seed)
        return phi, psi


def parse_config(doc: dict, seed_override: int | None = None,
                 out_override: str | None = None) -> RunConfig:
    _check_keys(doc, _TOP_KEYS, "top level")
    version = _require(doc, "version", "top level")
    if version != 1:
        raise ConfigError(f"unsupported config version {version!r}")

    lat_spec = dict(_require(doc, "lattice", "top level"))
    _check_keys(lat_spec, _LATTICE_KEYS, "lattice")
    kind = _require(lat_spec, "kind", "lattice")
    n1 = _require(lat_spec, "n1", "lattice")
    n2 = _require(lat_spec, "n2", "lattice")
    geo = {k: lat_spec[k] for k in ("L1", "L2", "r_inner", "r_outer") if k in lat_spec}
    lattice = make_lattice(kind, n1, n2, **geo)

    tgt_spec = dict(_require(doc, "target", "top level"))
    _check_keys(tgt_spec, _TARGET_KEYS, "target")
    target = target_from_spec(_require(tgt_spec, "kind", "target"),
                              _require(tgt_spec, "dim", "target"))

    mag_spec = dict(doc.get("magnetic", {"kind": "none"}))
    _check_keys(mag_spec, _MAGNETIC_KEYS, "magnetic")
    mkind = mag_spec.pop("kind", "none")
    magnetic = magnetic_from_spec(target, mkind, **mag_spec)

    spin_spec = dict(doc.get("spin_structure", {}))
    _check_keys(spin_spec, _SPIN_KEYS, "spin_structure")
    spin = SpinStructure(spin_spec.get("phase1", "periodic"), spin_spec.get("phase2", "periodic"))

    init_spec = dict(doc.get("init", {}))
    _check_keys(init_spec, {"map", "spinor"}, "init")
    map_init = dict(init_spec.get("map", {"kind": "constant"}))
    _check_keys(map_init, _MAP_INIT_KEYS, "init.map")
    spinor_init = dict(init_spec.get("spinor", {"kind": "eigen"}))
    _check_keys(spinor_init, _SPINOR_INIT_KEYS, "init.spinor")

    solve_spec = dict(doc.get("solve", {}))
    _check_keys(solve_spec, _SOLVE_KEYS, "solve")
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    solve = SolveConfig(seed=seed, **solve_spec)

    diag_spec = dict(doc.get("diagnostics", {}))
    _check_keys(diag_spec, _DIAG_KEYS, "diagnostics")
    enabled = diag_spec.get("enabled")
    tolerances = dict(diag_spec.get("tolerances", {}))

    outdir = out_override or doc.get("output_dir", "magdirac-out")
    snapshot = doc.get("snapshot")
    return RunConfig(doc, seed, outdir, lattice, target, magnetic, spin, solve,
                     map_init, spinor_init, enabled, tolerances, snapshot)


def load_config(path: str, seed_override=None, out_override=None) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    return parse_config(doc, seed_override, out_override)
