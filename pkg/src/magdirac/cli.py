"""Batch front end: solve / spectrum / diagnose / selftest subcommands.

Exit codes: 0 success (or convergence), 1 configuration or IO error,
2 non-convergence (budget exhausted, missing kernel, eigensolve failure),
3 enabled checks failed.  Progress goes to stderr unless --quiet.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import report as rpt
from .config import RunConfig, load_config
from .diagnostics import decay_profile, run_diagnostics
from .errors import ConfigError, EigenSolveError, FlowStepError, MagdiracError
from .fields import load_snapshot, save_snapshot
from .solver import SolveConfig, solve_coupled, solve_spinor
from .surface import default_clifford

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOCONV = 2
EXIT_CHECKS = 3


def _say(args, msg: str):
    if not args.quiet:
        print(f"[magdirac] {msg}", file=sys.stderr)


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def cmd_solve(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    outdir = _outdir(cfg)
    phi, psi = cfg.build_fields()
    clifford = default_clifford()
    try:
        phi, psi, solve_report = solve_coupled(cfg.lattice, cfg.target, cfg.magnetic,
                                               cfg.spin, cfg.solve, phi, psi,
                                               clifford, quiet=args.quiet)
    except (FlowStepError, EigenSolveError) as exc:
        print(f"magdirac solve: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    rep = solve_report.to_dict()
    rpt.write_json(os.path.join(outdir, "report.json"), rep)
    save_snapshot(os.path.join(outdir, "fields"), cfg.lattice, cfg.target, cfg.spin,
                  phi, None if psi is None or psi.is_zero() else psi, seed=cfg.seed)
    diag = run_diagnostics(cfg.lattice, cfg.target, cfg.magnetic, cfg.spin, clifford,
                           phi, psi, cfg.diag_enabled, cfg.diag_tolerances, seed=cfg.seed)
    ddict = diag.to_dict()
    if cfg.lattice.kind == "disc-annulus":
        ddict["decay_table"] = decay_profile(cfg.lattice, cfg.target, phi, psi)
    rpt.write_json(os.path.join(outdir, "diagnostics.json"), ddict)
    _write_diag_csv(outdir, diag)
    rpt.render_solve_figures(outdir, rep)
    rpt.render_diagnostics_figure(outdir, ddict)
    _say(args, f"status={solve_report.status} iterations={solve_report.iterations} "
               f"energy={solve_report.energy['total']:.6g}")
    return EXIT_OK if solve_report.converged else EXIT_NOCONV


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    outdir = _outdir(cfg)
    clifford = default_clifford()
    if cfg.snapshot:
        header, lattice, phi, _ = load_snapshot(cfg.snapshot)
        _check_snapshot_shape(cfg, header)
    else:
        lattice = cfg.lattice
        phi, _ = cfg.build_fields()
    try:
        vals, _ = solve_spinor(lattice, cfg.target, cfg.spin, clifford, phi,
                               cfg.solve.k_eigs, cfg.solve)
    except EigenSolveError as exc:
        print(f"magdirac spectrum: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    rpt.write_table(os.path.join(outdir, "spectrum.csv"),
                    ["mode", "eigenvalue", "abs_eigenvalue"],
                    [np.arange(len(vals)), vals, np.abs(vals)])
    rpt.render_spectrum_figure(outdir, vals)
    _say(args, f"lowest |lambda|: {np.abs(vals[0]):.3e}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    outdir = _outdir(cfg)
    clifford = default_clifford()
    snap = args.snapshot or cfg.snapshot
    if snap:
        header, lattice, phi, psi = load_snapshot(snap)
        _check_snapshot_shape(cfg, header)
        lattice = cfg.lattice
    else:
        lattice = cfg.lattice
        phi, psi = cfg.build_fields()
        if psi is None:
            from .fields import zero_spinor
            psi = zero_spinor(lattice, cfg.target.q)
    diag = run_diagnostics(lattice, cfg.target, cfg.magnetic, cfg.spin, clifford,
                           phi, psi, cfg.diag_enabled, cfg.diag_tolerances, seed=cfg.seed)
    ddict = diag.to_dict()
    if lattice.kind == "disc-annulus":
        ddict["decay_table"] = decay_profile(lattice, cfg.target, phi, psi)
    rpt.write_json(os.path.join(outdir, "diagnostics.json"), ddict)
    _write_diag_csv(outdir, diag)
    rpt.render_diagnostics_figure(outdir, ddict)
    if diag.empty:
        _say(args, "warning: no checks enabled; empty report")
        return EXIT_OK
    for name, status in sorted(diag.statuses.items()):
        _say(args, f"{name}: {status}")
    return EXIT_OK if diag.all_pass else EXIT_CHECKS


def _check_snapshot_shape(cfg: RunConfig, header: dict):
    want = {"kind": cfg.lattice.kind, "n1": cfg.lattice.n1, "n2": cfg.lattice.n2}
    got = {k: header["lattice"].get(k) for k in want}
    if got != want:
        raise ConfigError(f"snapshot lattice {got} does not match config lattice {want}")
    if header["target"]["q"] != cfg.target.q:
        raise ConfigError("snapshot ambient dimension does not match config target")


def _write_diag_csv(outdir: str, diag) -> None:
    names = ["check", "value", "tolerance", "status"]
    rows = []
    for check, status in sorted(diag.statuses.items()):
        val = next((diag.values[k] for k in diag.values
                    if k.startswith(check) or check in k), float("nan"))
        rows.append((check, val, diag.tolerances.get(check, float("nan")), status))
    text = "check,value,tolerance,status\n" + "\n".join(
        f"{c},{v:.17g},{t:.17g},{s}" for c, v, t, s in rows) + "\n"
    from .fields import _atomic_write
    _atomic_write(os.path.join(outdir, "diagnostics.csv"), text)


# ---------------------------------------------------------------------------
# selftest: the built-in invariant battery on fixed cases
# ---------------------------------------------------------------------------

def cmd_selftest(args) -> int:
    seed = 0 if args.seed is None else int(args.seed)
    outdir = args.out or "magdirac-selftest"
    os.makedirs(outdir, exist_ok=True)
    results = _selftest_battery(seed)
    ok = all(r["pass"] for r in results)
    payload = {"seed": seed, "results": results, "all_pass": ok,
               "digest": hashlib.sha256(
                   json.dumps(results, sort_keys=True).encode()).hexdigest()}
    rpt.write_json(os.path.join(outdir, "selftest_report.json"), payload)
    for r in results:
        line = "PASS" if r["pass"] else "FAIL"
        _say(args, f"{line} {r['name']}: {r['value']:.3e} (tol {r['tol']:.1e})")
    return EXIT_OK if ok else EXIT_CHECKS


def _selftest_battery(seed: int) -> list:
    from .diagnostics import gradient_oracle
    from .fields import MapField, SpinorField, enforce_tangency, init_map, init_spinor
    from .operators import el_residual_map, magnetic_force
    from .surface import SpinStructure, make_lattice
    from .target import (check_magnetic_skew, h_surface_magnetic, magnetic_none,
                         sphere_target, volume_form_magnetic, flat_target)

    rng = np.random.default_rng(seed)
    results = []

    def add(name, value, tol):
        results.append({"name": name, "value": float(value), "tol": float(tol),
                        "pass": bool(value <= tol)})

    cl = default_clifford()
    anti = np.zeros((2, 2), dtype=complex)
    worst = 0.0
    for a, ga in enumerate(cl.gammas()):
        for b, gb in enumerate(cl.gammas()):
            acom = ga @ gb + gb @ ga + 2.0 * (a == b) * np.eye(2)
            worst = max(worst, float(np.max(np.abs(acom))))
        worst = max(worst, float(np.max(np.abs(ga + ga.conj().T))))
    add("clifford_relations", worst, 1e-14)

    s3 = sphere_target(3)
    mag3 = volume_form_magnetic(s3, 0.7)
    pts = s3.project(rng.standard_normal((64, 4)))
    add("three_form_skew", check_magnetic_skew(mag3, pts), 1e-12)

    lat = make_lattice("torus", 12, 12, L1=2 * np.pi, L2=2 * np.pi)
    spin = SpinStructure()
    phi = init_map(lat, s3, {"kind": "constant", "noise_amplitude": 0.2, "noise_cutoff": 2}, seed=seed)
    force = magnetic_force(lat, mag3, phi)
    from .operators import frame_derivatives
    e1, e2 = frame_derivatives(lat, phi, "spectral")
    ortho = max(float(np.max(np.abs(np.einsum("...i,...i->...", force, e1)))),
                float(np.max(np.abs(np.einsum("...i,...i->...", force, e2)))))
    add("magnetic_force_orthogonality", ortho, 1e-10)

    psi = init_spinor(lat, s3, phi, {"kind": "random-smooth", "amplitude": 0.5, "cutoff": 2}, seed=seed)
    again = enforce_tangency(psi, phi, s3)
    add("tangency_idempotence", float(np.max(np.abs(again.values - psi.values))), 1e-13)

    flat3 = flat_target(3)
    hmag = h_surface_magnetic(1.0)
    wphi = init_map(lat, flat3, {"kind": "constant", "point": [0.0, 0.0, 0.0],
                                 "noise_amplitude": 0.3, "noise_cutoff": 2}, seed=seed + 1)
    add("gradient_oracle_hsurface",
        gradient_oracle(lat, flat3, hmag, spin, cl, wphi, n_probes=40, seed=seed), 1e-6)

    s2 = sphere_target(2)
    phi2 = init_map(lat, s2, {"kind": "constant"}, seed=seed)
    vals, _ = solve_spinor(lat, s2, spin, cl, phi2, 6, SolveConfig(seed=seed))
    kscale = 1.0
    n_kernel = int(np.sum(np.abs(vals) <= 1e-6 * kscale))
    add("dirac_kernel_dimension_error", abs(n_kernel - 4), 0.5)

    res, nrm = el_residual_map(lat, s2, magnetic_none(3), phi2)
    add("constant_map_residual", nrm, 1e-12)
    return results


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magdirac",
                                description="lattice solver and verification suite for "
                                            "spinor-coupled prescribed-curvature maps")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in (("solve", cmd_solve, True),
                                   ("spectrum", cmd_spectrum, True),
                                   ("diagnose", cmd_diagnose, True),
                                   ("selftest", cmd_selftest, False)):
        sp = sub.add_parser(name)
        if needs_config:
            sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("--seed", default=None, type=int, help="seed override")
        sp.add_argument("--quiet", action="store_true")
        if name == "diagnose":
            sp.add_argument("--snapshot", default=None, help="snapshot prefix to diagnose")
        sp.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"magdirac: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"magdirac: io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MagdiracError as exc:
        print(f"magdirac: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
