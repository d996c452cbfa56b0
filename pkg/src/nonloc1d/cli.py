"""Command-line experiment driver.

    nonloc1d <kind> --config <path> --out <dir>
    nonloc1d --list

Exit status: 0 if every verdict passes, 1 on a failed verdict (or solver
failure), 2 if hypotheses are not met, 3 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .forms import caccioppoli_check, manufactured_potential, sample_caccioppoli
from .kernels import K2Record, K3Record, Kernel, KernelError, kernel_from_json, verify_kernel_bounds
from .operator import Grid1D, GridError, GridFunction, OperatorScheme, derivative
from .potential import PotentialSpec, infer_negativity
from .setgeom import PowerTerm, canonical_region, cross_region_integral, fit_scaling_exponent, theory_slope, \
    verify_set_identities
from .solvers import NonlinearityError, SolverConfig, make_nonlinearity, solve_ground_state, solve_layer
from .spectral import CertificateConfig, eigenvector_function, max_principle_check, nondegeneracy_certificate, \
    quotient_certificate

log = logging.getLogger("nonloc1d")

EXIT = {"PASS": 0, "FAIL": 1, "HYPOTHESES-NOT-MET": 2}
CONFIG_ERROR = 3

KINDS = {
    "kernel-check": "verify claimed ellipticity bounds of a kernel on log-spaced samples",
    "layer": "solve L u = f(u) for an increasing layer (arctan oracle when s = 1/2 normalized, f = sin)",
    "ground": "solve L u = f(u) for an even positive ground state (2/(1+x^2) oracle when s = 1/2, f = bo)",
    "nondegeneracy": "bottom spectrum of L - f'(u) at a solved layer (or odd-restricted at a ground state)",
    "quotient": "boundedness / constancy of w~/w for w = u' and w~ from the spectrum or a perturbation",
    "maxprinciple": "maximum-principle hypotheses and conclusion for phi = u' (or phi = -1)",
    "caccioppoli": "quotient form identity for manufactured pairs plus rejection-sampled inequality",
    "scaling": "cross-region integrals over a range of R and their log-log slope",
    "set-identities": "Monte-Carlo check of the set identities and inclusions",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schemas

_NUM = {"type": "number"}
_KERNEL_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"type": "string"}, "s": _NUM, "normalized": {"type": "boolean"},
                   "atoms": {"type": "array", "items": {"type": "object", "required": ["s", "w"],
                                                          "properties": {"s": _NUM, "w": _NUM}}}},
}
CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"type": "string"},
        "kernel": _KERNEL_SCHEMA,
        "nonlinearity": {"type": "string"},
        "grid": {"type": "object", "properties": {"X": _NUM, "h": _NUM, "delta": {"type": ["number", "null"]}},
                 "additionalProperties": False},
        "solver": {"type": "object"},
        "tolerances": {"type": "object"},
        "seed": {"type": "integer"},
    },
}
RESULT_SCHEMA = {
    "type": "object",
    "required": ["kind", "verdict", "results", "version"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "verdict": {"enum": list(EXIT)},
        "results": {"type": "object"},
        "version": {"type": "string"},
        "grid": {"type": "object"},
        "certificate": {
            "type": "object",
            "required": ["theorem", "verdict", "eigs", "cosine", "gap", "C_bound", "oscillation",
                         "assumptions", "grid"],
        },
    },
}


# ---------------------------------------------------------------------------
# config helpers


def _kernel(cfg: dict) -> Kernel:
    d = cfg.get("kernel", {"kind": "fractional", "s": 0.5, "normalized": True})
    if "s" in d and not (0 < float(d["s"]) < 1):
        raise ConfigError("s out of (0,1)")
    for a in d.get("atoms", []):
        if not (0 < float(a.get("s", 0)) < 1):
            raise ConfigError("s out of (0,1)")
    if d.get("kind") not in ("fractional", "mixture", "tabulated"):
        raise ConfigError(f"unknown kernel kind {d.get('kind')!r} (field 'kernel.kind')")
    try:
        return kernel_from_json(d)
    except (KernelError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid kernel: {exc}") from exc


def _grid(cfg: dict, X=40.0, h=0.01) -> tuple[Grid1D, OperatorScheme]:
    g = cfg.get("grid", {})
    try:
        grid = Grid1D(float(g.get("X", X)), float(g.get("h", h)))
        scheme = OperatorScheme(g.get("delta"))
        scheme.resolve_delta(grid.h)
    except GridError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc
    return grid, scheme


def _solver(cfg: dict, scheme) -> SolverConfig:
    d = dict(cfg.get("solver", {}))
    try:
        return SolverConfig(scheme=scheme, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver record: {exc}") from exc


def _tolerances(cfg: dict) -> CertificateConfig:
    try:
        tc = CertificateConfig(**cfg.get("tolerances", {}))
    except TypeError as exc:
        raise ConfigError(f"invalid tolerance record: {exc}") from exc
    for k, v in tc.__dict__.items():
        if isinstance(v, float) and not v > 0:
            raise ConfigError(f"tolerance {k} must be positive")
    return tc


def _nonlinearity(cfg: dict, default: str, kind: str):
    try:
        return make_nonlinearity(cfg.get("nonlinearity", default), kind=kind)
    except NonlinearityError as exc:
        raise ConfigError(str(exc)) from exc


def _is_half_laplacian(k: Kernel) -> bool:
    return k.kind == "fractional" and k.normalized and abs(k.s_lo - 0.5) < 1e-14


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) for v in r])


def _solve(cfg, kind, out: Path, files: list):
    kernel = _kernel(cfg)
    grid, scheme = _grid(cfg)
    scfg = _solver(cfg, scheme)
    if not (0.5 <= kernel.s_lo and kernel.s_hi < 1):
        raise ConfigError("solvers need the kernel order window inside [1/2, 1) (field 'kernel.s')")
    if kind == "layer":
        f = _nonlinearity(cfg, "sin", "layer")
        sol = solve_layer(kernel, f, grid, scfg)
    else:
        f = _nonlinearity(cfg, "bo", "ground")
        sol = solve_ground_state(kernel, f, grid, scfg)
    sol.u.to_csv(out / "solution.csv")
    files += ["solution.csv", "solution.json"]
    return kernel, grid, scheme, f, sol


# ---------------------------------------------------------------------------
# pipelines (each returns verdict, results dict, extra top-level fields)


def run_kernel_check(cfg, out, files):
    kernel = _kernel(cfg)
    claim = cfg.get("claim")
    try:
        if claim is None:
            rec = kernel.k2 if kernel.k2 is not None else kernel.k3
        elif "lam" in claim:
            rec = K2Record(float(claim["lam"]), float(claim["Lam"]), float(claim["s"]))
        else:
            rec = K3Record(float(claim["Lam1"]), float(claim["Lam2"]), float(claim["s_lo"]), float(claim["s_hi"]))
    except (KeyError, KernelError, TypeError) as exc:
        raise ConfigError(f"invalid claim (field 'claim'): {exc}") from exc
    rep = verify_kernel_bounds(kernel, rec, int(cfg.get("samples", 2401)))
    res = {"kernel": kernel.to_json(), "pass": rep.passed, "worst_ratio": rep.worst_ratio,
           "witness": rep.witness, "violated": rep.violated, "lower_ratio": rep.lower_ratio,
           "upper_ratio": rep.upper_ratio}
    return ("PASS" if rep.passed else "FAIL"), res, {}


def run_layer(cfg, out, files, kind="layer"):
    kernel, grid, scheme, f, sol = _solve(cfg, kind, out, files)
    rep = sol.report
    res = {"report": rep.to_json(), "kernel": kernel.to_json(), "nonlinearity": f.to_json(),
           "solver": _solver(cfg, scheme).to_json()}
    ok = rep.converged
    x = grid.x
    inner = np.abs(x) <= 20.0
    if kind == "layer" and _is_half_laplacian(kernel) and f.name == "sin":
        err = float(np.max(np.abs(sol.u.values - 2 / np.pi * np.arctan(x))[inner]))
        res["oracle"] = {"name": "(2/pi) arctan x", "sup_error": err, "tolerance": 1e-3, "pass": err < 1e-3}
        ok = ok and err < 1e-3
    if kind == "ground" and _is_half_laplacian(kernel) and f.name == "bo":
        err = float(np.max(np.abs(sol.u.values - 2 / (1 + x * x))[inner]))
        res["oracle"] = {"name": "2/(1+x^2)", "sup_error": err, "tolerance": 1e-3, "pass": err < 1e-3}
        ok = ok and err < 1e-3
    return ("PASS" if ok else "FAIL"), res, {"grid": {"X": grid.X, "h": grid.h, "delta": scheme.resolve_delta(grid.h)}}


def run_ground(cfg, out, files):
    return run_layer(cfg, out, files, kind="ground")


def _certificate_out(rep, extra=None):
    top = {"certificate": rep.to_json(), "grid": rep.grid}
    if extra:
        top.update(extra)
    return rep.verdict, {"certificate_verdict": rep.verdict}, top


def run_nondegeneracy(cfg, out, files):
    odd = bool(cfg.get("odd", False))
    kernel, grid, scheme, f, sol = _solve(cfg, "ground" if odd else "layer", out, files)
    if not sol.report.converged:
        return "FAIL", {"report": sol.report.to_json()}, {}
    rep = nondegeneracy_certificate(sol, kernel, f, odd, config=_tolerances(cfg), scheme=scheme)
    _write_csv(out / "spectrum.csv", ["index", "eigenvalue"], [(i + 1, v) for i, v in enumerate(rep.eigs)])
    files.append("spectrum.csv")
    v, res, top = _certificate_out(rep)
    res["solver"] = sol.report.to_json()
    return v, res, top


def _layer_potential(cfg, kernel, grid, f, sol):
    c_vals = f.fp(sol.u.values)
    c0 = float(cfg.get("c0", 0.5))
    R0 = cfg.get("R0")
    if R0 is None:
        R0 = infer_negativity(grid, c_vals, c0)
    if R0 is None:
        return PotentialSpec(grid, c_vals, even=sol.u.symmetry == "odd")
    sym = sol.u.symmetry == "odd"
    return PotentialSpec(grid, c_vals, even=sym, c0=c0, R0=float(R0), r0=cfg.get("r0"),
                         declared={"gamma": f.hoelder})


def run_quotient(cfg, out, files):
    kernel, grid, scheme, f, sol = _solve(cfg, "layer", out, files)
    if not sol.report.converged:
        return "FAIL", {"report": sol.report.to_json()}, {}
    tol = _tolerances(cfg)
    w = derivative(sol.u)
    c = _layer_potential(cfg, kernel, grid, f, sol)
    mode = cfg.get("partner", "eigenvector")
    if mode == "eigenvector":
        nd = nondegeneracy_certificate(sol, kernel, f, config=tol, scheme=scheme)
        wt = eigenvector_function(grid, nd.eigenvector, sign_like=w.values)  # type: ignore[attr-defined]
    elif mode == "multiple":
        wt = w * float(cfg.get("factor", 3.0))
    elif mode == "bump":
        x = grid.x
        bump = np.where(np.abs(x) < 1, (1 - x * x) ** 3, 0.0)
        wt = w.with_values(w.values + float(cfg.get("amplitude", 0.1)) * bump)
    else:
        raise ConfigError(f"unknown partner {mode!r} (field 'partner')")
    rep = quotient_certificate(w, wt, kernel, c, config=tol, scheme=scheme)
    x = grid.x
    with np.errstate(divide="ignore", invalid="ignore"):
        sig = np.where(w.values > 0, wt.values / w.values, np.nan)
    _write_csv(out / "sigma.csv", ["x", "value"], [(a, b) for a, b in zip(x, sig) if np.isfinite(b)])
    files.append("sigma.csv")
    return _certificate_out(rep)


def run_maxprinciple(cfg, out, files):
    kernel, grid, scheme, f, sol = _solve(cfg, "layer", out, files)
    if not sol.report.converged:
        return "FAIL", {"report": sol.report.to_json()}, {}
    c = _layer_potential(cfg, kernel, grid, f, sol)
    phi_kind = cfg.get("phi", "derivative")
    if phi_kind == "derivative":
        phi = derivative(sol.u)
    elif phi_kind == "minus-one":
        from .operator import TailModel
        phi = GridFunction(grid, -np.ones(grid.N), TailModel.constant(-1.0, -1.0), "even")
    else:
        raise ConfigError(f"unknown phi {phi_kind!r} (field 'phi')")
    rep = max_principle_check(kernel, c, phi, config=_tolerances(cfg), scheme=scheme)
    return _certificate_out(rep)


def run_caccioppoli(cfg, out, files):
    kernel = _kernel(cfg)
    grid, scheme = _grid(cfg, X=10.0, h=0.05)
    R = float(cfg.get("R", 1.5))
    w = GridFunction(grid, 1.0 / (1.0 + grid.x ** 2))
    c = manufactured_potential(kernel, w, scheme)
    eq = caccioppoli_check(w, w * float(cfg.get("factor", 3.0)), kernel, c, R, scheme=scheme)
    smp = sample_caccioppoli(kernel, w, R, int(cfg.get("accept", 200)), int(cfg.get("seed", 0)),
                             int(cfg.get("max_draws", 5000)), scheme)
    eq_ok = eq.verdict == "EQUALITY" and abs(eq.J1 - eq.RHS) <= 1e-10 * eq.scale
    res = {"manufactured": eq.to_json(), "sampling": smp.to_json(), "equality_pass": eq_ok}
    ok = eq_ok and smp.all_hold and smp.accepted == int(cfg.get("accept", 200))
    return ("PASS" if ok else "FAIL"), res, {"grid": {"X": grid.X, "h": grid.h, "delta": scheme.resolve_delta(grid.h)}}


def run_scaling(cfg, out, files):
    s = float(cfg.get("s", 0.75))
    if not 0 < s < 1:
        raise ConfigError("s out of (0,1)")
    gamma = float(cfg.get("gamma", 0.25))
    try:
        region = canonical_region(cfg.get("region", "S\\D"))
    except ValueError as exc:
        raise ConfigError(f"{exc} (field 'region')") from exc
    cutoff = bool(cfg.get("cutoff", False))
    Rs = [float(r) for r in cfg.get("Rs", [4, 8, 16, 32, 64])]
    tol = float(cfg.get("tolerance", 0.1))
    if "kernel" in cfg:
        term = _kernel(cfg)
    else:
        # pure power |x - y|^(-1-2s) or |x - y|^(1-2s) on S&D
        term = PowerTerm(2 * s - 1 if region == "S&D" else 1 + 2 * s)
    try:
        vals = [cross_region_integral(term, R, gamma, region, cutoff=cutoff) for R in Rs]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fit = fit_scaling_exponent(list(zip(Rs, vals)))
    if cutoff or region in ("S", "S++"):
        theory = 0.0
        ok = fit.slope <= float(cfg.get("uniform_tolerance", 0.02))
    else:
        theory = theory_slope(region, s, gamma)
        ok = abs(fit.slope - theory) <= tol
    _write_csv(out / "scaling.csv", ["R", "value"], list(zip(Rs, vals)))
    files.append("scaling.csv")
    summary = {"slope": fit.slope, "theory_slope": theory, "tolerance": tol, "pass": bool(ok)}
    (out / "scaling.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append("scaling.json")
    res = dict(summary, intercept=fit.intercept, residual=fit.residual, region=region, s=s, gamma=gamma,
               cutoff=cutoff, values=vals, Rs=Rs)
    return ("PASS" if ok else "FAIL"), res, {}


def run_set_identities(cfg, out, files):
    R = float(cfg.get("R", 1.0))
    n = int(cfg.get("n", 1))
    if not R > 0 or n < 1:
        raise ConfigError("set identities need R > 0 and n >= 1")
    rep = verify_set_identities(R, n, int(cfg.get("samples", 100000)), int(cfg.get("seed", 0)))
    return ("PASS" if rep.passed else "FAIL"), rep.to_json(), {}


RUNNERS = {
    "kernel-check": run_kernel_check,
    "layer": run_layer,
    "ground": run_ground,
    "nondegeneracy": run_nondegeneracy,
    "quotient": run_quotient,
    "maxprinciple": run_maxprinciple,
    "caccioppoli": run_caccioppoli,
    "scaling": run_scaling,
    "set-identities": run_set_identities,
}


# ---------------------------------------------------------------------------
# output checks


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _finite(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


CSV_HEADERS = {"solution.csv": ["x", "value"], "sigma.csv": ["x", "value"], "scaling.csv": ["R", "value"],
               "spectrum.csv": ["index", "eigenvalue"]}
SIDE_SCHEMA = {"type": "object", "required": ["grid", "tail", "symmetry"]}
SCALING_SCHEMA = {"type": "object", "required": ["slope", "theory_slope", "tolerance", "pass"]}


def check_outputs(out: Path, files) -> None:
    """Schema-check every emitted file; raises on the first malformed one."""
    for name in files:
        p = out / name
        if name in CSV_HEADERS:
            with open(p, newline="") as fh:
                rows = list(csv.reader(fh))
            if rows[0] != CSV_HEADERS[name]:
                raise ValueError(f"{name}: bad header {rows[0]}")
            for r in rows[1:]:
                if len(r) != 2 or not all(math.isfinite(float(v)) for v in r):
                    raise ValueError(f"{name}: malformed row {r}")
        elif name == "result.json":
            jsonschema.validate(json.loads(p.read_text()), RESULT_SCHEMA)
        elif name == "solution.json":
            jsonschema.validate(json.loads(p.read_text()), SIDE_SCHEMA)
        elif name == "scaling.json":
            jsonschema.validate(json.loads(p.read_text()), SCALING_SCHEMA)


def run_experiment(kind: str, config: dict, out: Path) -> int:
    """Run one experiment; write result.json, run.log and data files to ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("nonloc1d")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        log.info("nonloc1d %s, experiment %s", __version__, kind)
        log.info("config %s", json.dumps(config, sort_keys=True))
        try:
            if kind not in RUNNERS:
                raise ConfigError(f"unknown experiment kind {kind!r}")
            if config.get("kind", kind) != kind:
                raise ConfigError("field 'kind' disagrees with the command line")
            try:
                jsonschema.validate(config, CONFIG_SCHEMA)
            except jsonschema.ValidationError as exc:
                field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
                raise ConfigError(f"invalid config at field '{field}': {exc.message}") from exc
            files: list = []
            verdict, results, top = RUNNERS[kind](config, out, files)
        except ConfigError as exc:
            log.error("configuration error: %s", exc)
            print(f"configuration error: {exc}", file=sys.stderr)
            return CONFIG_ERROR
        doc = {"kind": kind, "verdict": verdict, "results": results, "version": __version__}
        doc.update(top)
        doc = _finite(doc)
        (out / "result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        files.append("result.json")
        check_outputs(out, files)
        log.info("verdict %s", verdict)
        return EXIT[verdict]
    finally:
        root.removeHandler(handler)
        handler.close()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonloc1d", description="One-dimensional nonlocal operator experiments.")
    p.add_argument("kind", nargs="?", help="experiment kind (see --list)")
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--list", action="store_true", help="print the experiment catalog and exit")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        for k, d in KINDS.items():
            print(f"{k:16s} {d}")
        return 0
    if not args.kind or args.out is None:
        print("usage: nonloc1d <kind> --config <path> --out <dir>", file=sys.stderr)
        return CONFIG_ERROR
    config: dict = {}
    if args.config is not None:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"configuration error: cannot read {args.config}: {exc}", file=sys.stderr)
            return CONFIG_ERROR
        if not isinstance(config, dict):
            print("configuration error: config must be a JSON object", file=sys.stderr)
            return CONFIG_ERROR
    return run_experiment(args.kind, config, args.out)


if __name__ == "__main__":
    sys.exit(main())
