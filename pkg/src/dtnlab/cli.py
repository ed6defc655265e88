"""Command line interface: ``python -m dtnlab <command> [--config FILE] [--out-dir DIR] ...``.

Every command reads an optional TOML or JSON config, writes its results to
``--out-dir`` and exits with 0 only if all of its invariant gates pass.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks
from .dtn_map import FamilyGammaBuilder, assemble_dtn, gamma_boundary, gamma_volume, relative_difference, save_matrix
from .entropy_nets import build_net_spec, check_net_property, pigeonhole_search
from .forward_solver import ResolutionError, ResonanceError, SolverConfig, solve_galerkin
from .harmonics import HarmonicIndex, eval_harmonic
from .instability_lab import (
    EmitError,
    ScanConfig,
    apply_fit,
    default_threads,
    emit_outputs,
    fit_envelope,
    read_csv,
    run_scan,
    scan_gates,
    suppression_ratios,
    write_csv,
)
from .potentials import Potential, build_discrete_family

log = logging.getLogger("dtnlab")

DEFAULT_POTENTIAL = {
    "kind": "bumps",
    "r0": 0.5,
    "bumps": [{"center": [0.2, 0.0], "radius": 0.1, "height": 1.0}],
}


def load_config(path: str | Path | None) -> dict:
    """Parse a ``.toml`` or ``.json`` file; ``None`` gives an empty mapping."""
    if path is None:
        return {}
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    return tomllib.loads(text.decode())


def _solver(conf: dict, **defaults) -> SolverConfig:
    return SolverConfig(**{**defaults, **conf.get("solver", {})})


def _potential(conf: dict) -> Potential:
    return Potential.from_dict(conf.get("potential", DEFAULT_POTENTIAL))


def _report(gates: dict[str, bool]) -> int:
    for name, ok in gates.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return 0 if all(gates.values()) else 1


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=repr) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args, conf: dict) -> int:
    q = _potential(conf)
    prob = conf.get("problem", {})
    kappa2 = float(prob.get("kappa2", 1.0))
    shift = float(prob.get("q_ref_shift", q.imaginary_shift))
    m, j = prob.get("datum", [1, 1])
    n_r, n_phi = int(prob.get("n_r", 33)), int(prob.get("n_phi", 64))
    cfg = _solver(conf, M_trunc=max(16, m))
    try:
        sol = solve_galerkin(q, shift, kappa2, HarmonicIndex(int(m), int(j)), cfg, M_out=m)
    except (ResonanceError, ResolutionError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    r = np.linspace(0.0, 1.0, n_r)
    phi = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    R, P = np.meshgrid(r, phi, indexing="ij")
    u = sol.evaluate(R, P)[0]
    out = args.out_dir / "solution.csv"
    with open(out, "w") as fh:
        fh.write("r,phi,re_u,im_u\n")
        for a, b, v in zip(R.ravel(), P.ravel(), u.ravel()):
            fh.write(f"{float(a)!r},{float(b)!r},{float(v.real)!r},{float(v.imag)!r}\n")
    trace = np.array([sol.evaluate(1.0, p)[0] for p in phi])
    trace_err = float(np.max(np.abs(trace - eval_harmonic(HarmonicIndex(int(m), int(j)), phi))))
    _write_json(
        args.out_dir / "solution.json",
        {
            "potential": q.to_dict(),
            "kappa2": kappa2,
            "q_ref_shift": shift,
            "datum": [m, j],
            "residual": sol.residual,
            "trace_error": trace_err,
            "solver": cfg.to_dict(),
        },
    )
    return _report({"residual": sol.residual <= cfg.residual_tol, "boundary_trace": trace_err <= 1e-8})


def cmd_dtn(args, conf: dict) -> int:
    q = _potential(conf)
    prob = conf.get("problem", {})
    kappa2 = float(prob.get("kappa2", 1.0))
    M = int(prob.get("M", 16))
    cfg = _solver(conf, M_trunc=M + 8)
    gates = {}
    try:
        D = assemble_dtn(q, kappa2, cfg, M=M)
        save_matrix(D, args.out_dir / "dtn")
        gates["dtn_finite"] = bool(np.all(np.isfinite(D.array)))
        if "q_ref_shift" in prob:
            shift = float(prob["q_ref_shift"])
            g = gamma_boundary(q, shift, kappa2, cfg, M=M)
            save_matrix(g, args.out_dir / "gamma")
            gates["gamma_finite"] = bool(np.all(np.isfinite(g.array)))
            if prob.get("check_volume", False) and q.kind != "constant":
                gv = gamma_volume(q, shift, kappa2, cfg, M=M)
                err = max(relative_difference(gv.i_form.entries, g.array), relative_difference(gv.l_form.entries, g.array))
                print(f"volume forms vs boundary difference: {err:.3e}")
                gates["volume_identity"] = err <= 1e-4
    except (ResonanceError, ResolutionError) as exc:
        print(f"dtn failed: {exc}", file=sys.stderr)
        return 1
    return _report(gates)


def cmd_verify(args, conf: dict) -> int:
    vc = conf.get("verify", {})
    suites = vc.get("suites", "full" if args.full else "quick")
    table = checks.FULL_SUITES
    if suites == "quick":
        names = list(checks.QUICK_SUITES)
    elif suites == "full":
        names = list(checks.FULL_SUITES)
    else:
        names = list(suites)
    seeded = {"dissipative", "sandwich", "volume_identity", "net"}
    results = []
    for name in names:
        fn = table[name]
        res = fn(seed=args.seed) if name in seeded else fn()
        print(res.line())
        results.append(res)
    _write_json(
        args.out_dir / "verify.json",
        {r.name: {"value": r.value, "tol": r.tol, "passed": r.passed, "details": r.details} for r in results},
    )
    return 0 if all(r.passed for r in results) else 1


def cmd_net(args, conf: dict) -> int:
    nc = conf.get("net", {})
    theta = float(nc.get("theta", 0.01))
    n_bumps = int(nc.get("n_bumps", 6))
    M = int(nc.get("M", 32))
    regimes = nc.get("regimes", ["high", "low"])
    fam = build_discrete_family(theta, float(nc.get("alpha", 1.0)), float(nc.get("r0", 0.5)), n_bumps, regime="both")
    rng = np.random.default_rng(args.seed)
    n_members = min(int(nc.get("n_members", len(fam))), len(fam))
    members = sorted(rng.choice(len(fam), size=n_members, replace=False).tolist())
    cfg = _solver(conf, M_trunc=M + 8, N_rad=16)
    builder = FamilyGammaBuilder(fam, M, cfg)
    doc, gates = {"theta": theta, "members": members}, {}
    for regime in regimes:
        rc = nc.get(regime, {})
        kappa2 = float(rc.get("kappa2", 0.1 if regime == "high" else 0.05))
        shift = 1.0 if regime == "high" else 0.0
        phi = 2.0 * (4.0 + kappa2) if regime == "high" else 1.0
        delta = float(rc.get("delta", float(rc.get("delta_fraction", 0.9)) * phi))
        spec = build_net_spec(delta, regime, kappa2=kappa2)
        if spec.ell_star > M:
            print(f"{regime}: l* = {spec.ell_star} exceeds M = {M}; raise M or delta", file=sys.stderr)
            gates[f"{regime}_truncation"] = False
            continue
        gammas = builder.gammas(kappa2, shift, [theta], members=members)[theta]
        nets = [check_net_property(g, spec) for g in gammas]
        rep = pigeonhole_search(fam, spec, gammas)
        doc[regime] = {"spec": spec.to_dict(), "pigeonhole": rep.to_dict(), "max_xs_over_delta": max(c.x_s_distance / delta for c in nets)}
        gates[f"{regime}_within_delta"] = all(c.within for c in nets)
        gates[f"{regime}_collision_bound"] = rep.collision_bound_holds
    _write_json(args.out_dir / "net.json", doc)
    return _report(gates)


def _scan_config(args, conf: dict) -> ScanConfig:
    cfg = ScanConfig.from_mapping(conf) if conf else ScanConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_scan(args, conf: dict) -> int:
    cfg = _scan_config(args, conf)
    out = args.out_dir
    records = run_scan(cfg, threads=args.threads, progress=out / "records.partial.jsonl")
    try:
        fit = fit_envelope(records)
    except ValueError as exc:
        print(f"envelope fit skipped: {exc}", file=sys.stderr)
        fit = None
    if fit is not None:
        records = apply_fit(records, fit)
    gates = scan_gates(records, fit)
    try:
        files = emit_outputs(records, out, cfg=cfg, fit=fit, gates=gates, csv_name=cfg.csv_name, json_name=cfg.json_name, plot_prefix=cfg.plot_prefix)
    except EmitError as exc:
        print(f"{exc}; written so far: {[str(p) for p in exc.manifest]}", file=sys.stderr)
        return 1
    (out / "records.partial.jsonl").unlink(missing_ok=True)
    if fit is not None:
        print(f"fitted C_R = {fit.C_R:.4e}, c0 = {fit.c0:.4e} (high-frequency C_R = {fit.C_R_high:.4e})")
        for th, ratio in suppression_ratios(records).items():
            print(f"theta = {th:g}: distance ratio largest/smallest kappa^2 = {ratio:.3g}")
    print("wrote " + ", ".join(p.name for p in files))
    return _report(gates)


def cmd_fit(args, conf: dict) -> int:
    path = args.csv or conf.get("fit", {}).get("csv")
    if path is None:
        print("fit needs a CSV path", file=sys.stderr)
        return 2
    records = read_csv(path)
    try:
        fit = fit_envelope(records)
    except ValueError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return 1
    _write_json(args.out_dir / "fit.json", fit.to_dict())
    write_csv(apply_fit(records, fit), args.out_dir / "fitted.csv")
    print(f"C_R = {fit.C_R!r}\nc0 = {fit.c0!r}\nC_R_high = {fit.C_R_high!r}")
    if fit.violations:
        print(f"records above the envelope: {list(fit.violations)}")
    return _report(
        {
            "fit_nondegenerate": not fit.degenerate,
            "fit_constants_positive": bool(fit.C_R > 0 and fit.c0 > 0),
            "envelope_dominance": fit.one_sided,
        }
    )


COMMANDS = {
    "solve": (cmd_solve, "solve one forward problem and write the solution as CSV"),
    "dtn": (cmd_dtn, "assemble the DtN (and optionally Gamma) matrix of one potential"),
    "verify": (cmd_verify, "run the invariant suites"),
    "net": (cmd_net, "build net specifications and quantize a bump family"),
    "scan": (cmd_scan, "run the frequency-perturbation scan"),
    "fit": (cmd_fit, "fit the merged envelope to a scan CSV"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML or JSON configuration file")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="output directory (created if missing)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for scans (0: up to 8, one per core)")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized suites and member sampling")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="dtnlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "verify":
            p.add_argument("--full", action="store_true", help="include the slower Galerkin suites")
        if name == "fit":
            p.add_argument("csv", nargs="?", help="scan CSV to fit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    conf = load_config(args.config)
    if args.threads == 0:
        args.threads = default_threads()
    if args.seed is None and args.command != "scan":
        args.seed = int(conf.get("seed", 0))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    fn = COMMANDS[args.command][0]
    return fn(args, conf)


if __name__ == "__main__":
    raise SystemExit(main())
