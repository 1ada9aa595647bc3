"""Command-line front end: gallery, verify, periods, close-periods, mesh, curvature.

Reports are JSON with a versioned schema ("schema": 1).  Configuration comes
from an optional key=value file plus flag overrides (flags win).  Exit code 0
means every check passed; 1 means a check failed; 2 means the run errored.
The environment variable MW_THREADS caps per-curve integration parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from .analytic import (
    NullMap,
    form_invariance_residual,
    gauss_symmetry_residual,
    map_invariance_residual,
    null_residual,
    parse_expr,
    verification_grid,
)
from .domain import circle, involution_apply
from .gallery import GALLERY_NAMES, UnknownScenarioError, gallery
from .immersion import (
    geometric_residuals,
    properness_certificate,
    total_curvature_report,
)
from .mesh import export_obj, export_ply, fundamental_domain, triangulate_and_weld
from .periods import flux, period_map, symmetry_defect
from .sprays import (
    Spray,
    SprayFactor,
    close_periods,
    default_spray,
    nonflat_check,
    pushed_map,
    rational_peak,
    winding_number,
)

DEFAULTS = {
    "tol": 1e-10,
    "period_tol": 1e-9,
    "residual_tol": 1e-6,
    "grid": 64,
    "rmax": 8.0,
    "resolution": 256,
    "seed": 0,
}


def _load_config(path: str | None) -> dict:
    cfg = dict(DEFAULTS)
    if not path:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (expected key=value): {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in ("grid", "resolution", "seed"):
                cfg[key] = int(val)
            elif key in ("tol", "period_tol", "residual_tol", "rmax"):
                cfg[key] = float(val)
            else:
                cfg[key] = val
    return cfg


def _merge_flags(cfg: dict, args) -> dict:
    for key in DEFAULTS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    return cfg


def _digest(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _emit(report: dict, output: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


class _Checks:
    def __init__(self):
        self.records = []

    def add(self, name, value, tolerance, passed, kind="max<=tol"):
        self.records.append(
            {
                "name": name,
                "value": value,
                "tolerance": tolerance,
                "kind": kind,
                "pass": bool(passed),
            }
        )

    def le(self, name, value, tolerance):
        value = float(value)
        self.add(name, value, tolerance, value <= tolerance)

    def true(self, name, flag):
        self.add(name, bool(flag), True, bool(flag), kind="bool")

    @property
    def ok(self) -> bool:
        return all(r["pass"] for r in self.records)


def _scenario_nullmap(scn, inject_sign_error: bool):
    return scn.with_sign_error() if inject_sign_error else scn.f


def run_verify(scn, cfg: dict, inject_sign_error: bool = False) -> dict:
    t0 = time.perf_counter()
    checks = _Checks()
    f = _scenario_nullmap(scn, inject_sign_error)
    tol = cfg["tol"]
    ptol = cfg["period_tol"]
    rtol = cfg["residual_tol"]
    ngrid = cfg["grid"]
    grid = verification_grid(ngrid, ngrid, avoid=scn.domain.special_points())

    checks.le("null_residual", null_residual(f, grid), tol)
    checks.le("map_invariance", map_invariance_residual(f, grid), tol)
    checks.le("form_invariance_theta", form_invariance_residual(scn.theta, grid), tol)
    if scn.n == 3 and scn.g is not None:
        checks.le("gauss_symmetry", gauss_symmetry_residual(scn.g, grid), tol)

    P = period_map(f, scn.theta, scn.basis, tol=min(tol, 1e-11))
    checks.le("period_max", P.max_abs(), ptol)
    checks.le("flux_max", float(np.max(np.abs(P.entries.imag))), ptol)
    checks.le("im_P1", float(np.max(np.abs(P.entries[0].imag))), ptol)
    for label, gamma in (("alpha0", circle(0.0, 1.0, "alpha_0")), ("r2", circle(0.0, 2.0, "r2"))):
        checks.le(f"symmetry_defect_{label}", symmetry_defect(f, gamma, tol=1e-11, theta=scn.theta), ptol)

    if checks.ok:
        X = scn.immersion(tol=min(tol * 0.01, 1e-12))
        res_grid = verification_grid(32, 32, r_min=0.5, r_max=2.0, avoid=scn.domain.special_points())
        res = geometric_residuals(X, res_grid, f=f, theta=scn.theta)
        xs = X.eval_points(res_grid)
        scale = max(1.0, float(np.max(np.linalg.norm(xs, axis=1))))
        checks.le("immersion_invariance", res["invariance"] / scale, tol)
        checks.le("conformal_residual", res["conformal"], rtol)
        checks.le("harmonic_residual", res["harmonic"], rtol)
        checks.le("derivative_residual", res["derivative"], rtol)
        cert = properness_certificate(X, rho_max=cfg["rmax"])
        if cert.registered:
            checks.add("properness_margin", cert.margin, -1e-9, cert.holds, kind="min>=-tol")
    else:
        checks.add("immersion_suite", "skipped (core invariants failed)", None, False, kind="skipped")

    samples = grid[:: max(1, len(grid) // 64)]
    checks.true("nonflat", nonflat_check(f, samples)["nonflat"])

    rng = np.random.default_rng(cfg["seed"])
    windings = []
    alpha0 = circle(0.0, 1.0, "alpha_0")
    for _ in range(8):
        h = _random_invariant_nonvanishing(rng)
        windings.append(winding_number(h, alpha0))
    checks.add("winding_zero", windings, 0, all(w == 0 for w in windings), kind="all==0")

    report = {
        "schema": 1,
        "tool": "mws",
        "version": __version__,
        "scenario": scn.name,
        "input_digest": _digest({"scenario": scn.describe(), "config": {k: cfg[k] for k in sorted(DEFAULTS)}}),
        "negative_control": bool(inject_sign_error),
        "checks": checks.records,
        "pass": checks.ok,
        "timing": {"seconds": round(time.perf_counter() - t0, 3)},
    }
    return report


def _random_invariant_nonvanishing(rng) -> object:
    """h = p * (bar-pullback p) for a random polynomial p with roots off the
    unit circle: I-invariant and nonvanishing on alpha_0."""
    from .analytic import ZETA, Const, bar_pullback

    deg = int(rng.integers(1, 4))
    p = Const(complex(rng.normal(), rng.normal()))
    for _ in range(deg):
        r = rng.uniform(0.2, 0.8) if rng.random() < 0.5 else rng.uniform(1.3, 3.0)
        root = r * np.exp(1j * rng.uniform(0, 2 * np.pi))
        p = p * (ZETA - Const(root))
    return p * bar_pullback(p)


def cmd_gallery(args) -> int:
    scn = gallery(args.name)
    _emit({"schema": 1, "tool": "mws", "version": __version__, **scn.describe()}, args.output)
    return 0


def cmd_verify(args) -> int:
    cfg = _merge_flags(_load_config(args.config), args)
    scn = gallery(args.name)
    report = run_verify(scn, cfg, inject_sign_error=args.inject_sign_error)
    _emit(report, args.output)
    return 0 if report["pass"] else 1


def cmd_periods(args) -> int:
    cfg = _merge_flags(_load_config(args.config), args)
    scn = gallery(args.name)
    P = period_map(scn.f, scn.theta, scn.basis, tol=cfg["tol"])
    fx = flux(scn.f, scn.theta, scn.basis, tol=cfg["tol"])
    report = {
        "schema": 1,
        "tool": "mws",
        "version": __version__,
        "scenario": scn.name,
        "curves": [c.label for c in scn.basis.plus],
        "periods": [[[v.real, v.imag] for v in row] for row in P.entries],
        "flux": fx.tolist(),
        "quadrature_errors": P.errors.tolist(),
    }
    _emit(report, args.output)
    return 0


def cmd_close(args) -> int:
    cfg = _merge_flags(_load_config(args.config), args)
    scn = gallery(args.name)
    j, k = (int(s) for s in args.flow_axes.split(","))
    coef = parse_expr(args.flow_coef) if args.flow_coef else None
    perturbed = pushed_map(scn.f, j, k, args.flow_t, h=coef)
    spray = default_spray(perturbed, m=args.factors, seed=cfg["seed"])
    P_before = period_map(perturbed, scn.theta, scn.basis, tol=1e-11)
    result = close_periods(spray, scn.theta, scn.basis, tol=args.close_tol, max_iter=args.max_iter)
    closed = result.closed_map
    grid = verification_grid(cfg["grid"], cfg["grid"], avoid=scn.domain.special_points())
    report = {
        "schema": 1,
        "tool": "mws",
        "version": __version__,
        "scenario": scn.name,
        "perturbation": {"axes": [j, k], "t": args.flow_t, "coef": args.flow_coef},
        "re_period_before": float(P_before.max_abs_real()),
        "re_period_after": result.residual_norm,
        "iterations": result.iterations,
        "zeta": result.zeta.tolist(),
        "closed_map_null_residual": null_residual(closed, grid),
        "closed_map_invariance": map_invariance_residual(closed, grid),
        "log": result.history,
    }
    _emit(report, args.output)
    if args.log_lines:
        for rec in result.history:
            print(json.dumps(rec, sort_keys=True))
    return 0


def cmd_mesh(args) -> int:
    cfg = _merge_flags(_load_config(args.config), args)
    scn = gallery(args.name)
    X = scn.immersion(tol=cfg["tol"])
    region = fundamental_domain(scn.domain, cfg["rmax"])
    mesh = triangulate_and_weld(region, X, args.nrho, args.ntheta)
    out = args.output or f"{scn.name}-{args.nrho}x{args.ntheta}.{args.format}"
    if args.format == "obj":
        export_obj(mesh, out)
    else:
        export_ply(mesh, out)
    summary = {
        "schema": 1,
        "tool": "mws",
        "version": __version__,
        "scenario": scn.name,
        "file": out,
        "vertices": len(mesh.vertices_domain),
        "triangles": len(mesh.triangles),
        "euler_characteristic": mesh.euler_characteristic(),
        "edge_manifold": mesh.is_edge_manifold(),
        "orientable": mesh.is_orientable(),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_curvature(args) -> int:
    cfg = _merge_flags(_load_config(args.config), args)
    scn = gallery(args.name)
    if scn.g is None:
        print(json.dumps({"error": f"{scn.name} has no scalar Gauss map (n != 3)"}))
        return 2
    t0 = time.perf_counter()
    rep = total_curvature_report(scn.g, "quotient")
    report = {
        "schema": 1,
        "tool": "mws",
        "version": __version__,
        "scenario": scn.name,
        "total_curvature": rep.value,
        "error_bar": rep.error,
        "by_split_radius": {str(k): v for k, v in rep.by_split_radius.items()},
        "in_units_of_pi": rep.value / np.pi,
        "timing": {"seconds": round(time.perf_counter() - t0, 3)},
    }
    _emit(report, args.output)
    return 0


def _add_common(p) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--tol", type=float, default=None, help="residual tolerance")
    p.add_argument("--grid", type=int, default=None, help="verification grid size per axis")
    p.add_argument("--rmax", type=float, default=None, help="outer radius of the fundamental domain")
    p.add_argument("--resolution", type=int, default=None, help="scan resolution per axis")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    p.add_argument("--output", default=None, help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mws", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gallery", help="load and describe a built-in scenario")
    p.add_argument("name")
    _add_common(p)
    p.set_defaults(fn=cmd_gallery)

    p = sub.add_parser("verify", help="run the full invariant suite")
    p.add_argument("name")
    p.add_argument(
        "--inject-sign-error",
        action="store_true",
        help="negative control: flip the sign of the second component",
    )
    _add_common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("periods", help="period and flux table over the I-basis")
    p.add_argument("name")
    _add_common(p)
    p.set_defaults(fn=cmd_periods)

    p = sub.add_parser("close-periods", help="perturb and re-close the periods")
    p.add_argument("name")
    p.add_argument("--flow-axes", default="0,1", help="axis pair j,k of the perturbing flow")
    p.add_argument("--flow-t", type=float, default=0.1, help="flow time of the perturbation")
    p.add_argument(
        "--flow-coef",
        default="(z - 1/z)/2",
        help="I-invariant coefficient expression; empty string = constant 1 "
        "(a constant flow is linear and leaves the periods closed)",
    )
    p.add_argument("--factors", type=int, default=6, help="number of spray factors")
    p.add_argument("--close-tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--log-lines", action="store_true", help="also print JSON-lines iteration log")
    _add_common(p)
    p.set_defaults(fn=cmd_close)

    p = sub.add_parser("mesh", help="triangulate, weld, and export the quotient surface")
    p.add_argument("name")
    p.add_argument("--nrho", type=int, default=64)
    p.add_argument("--ntheta", type=int, default=128)
    p.add_argument("--format", choices=("obj", "ply"), default="obj")
    _add_common(p)
    p.set_defaults(fn=cmd_mesh)

    p = sub.add_parser("curvature", help="total curvature of the quotient surface")
    p.add_argument("name")
    _add_common(p)
    p.set_defaults(fn=cmd_curvature)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "flow_coef", None) == "":
        args.flow_coef = None
    try:
        return args.fn(args)
    except UnknownScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except Exception as exc:  # surface errors as exit code 2 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
