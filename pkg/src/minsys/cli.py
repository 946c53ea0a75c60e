"""Command-line front end: ``minsys {solve,check,convergence,svd-report}``.

A run is described by a flat JSON config (``--config``); every key can also
be given as a flag of the same name, which takes precedence.  The output
directory is resolved as flag, then the ``MINSYS_OUTPUT_DIR`` environment
variable, then the config, then ``minsys-out``.

Exit codes: 0 success; 1 bad config or input; 2 solver did not converge;
3 a pass/fail audit failed.
"""
import argparse
from dataclasses import dataclass
import json
import logging
import math
import os
import sys

import numpy as np

from . import diagnostics as diag
from .calculus import divergence_residual, geometry_field, star_omega_nodes
from .errors import MinsysError
from .grid import (
    BoundaryData,
    GridDomain,
    VectorField,
    atomic_write_text,
    preset_is_solution,
    read_field_csv,
    sample_preset,
    write_field_csv,
)
from .pointwise import (
    adapted_frames,
    as_jacobian,
    grassmann_forms,
    grassmann_forms_batch,
    metric,
    op_norm,
    svd,
    wedge2_norm,
)
from .solvers import SolveConfig, SolveReport, harmonic_extension, solve

logger = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "MINSYS_OUTPUT_DIR"
AUDIT_NAMES = diag.AUDIT_NAMES

DEFAULTS = {
    "n": 2,
    "lower": -1.0,
    "upper": 1.0,
    "resolution": 33,
    "preset": "holomorphic_quadratic",
    "params": {},
    "seed": None,
    "boundary_scale": 1.0,
    "initial": "harmonic",
    "method": "newton",
    "dt_factor": None,
    "tol": 1e-8,
    "max_iter": 20000,
    "continuation_steps": 4,
    "damping": 0.5,
    "audits": list(AUDIT_NAMES),
    "c_check": 1.0,
    "output_dir": "minsys-out",
    "levels": [17, 33, 65],
    "fields": None,
}

CONVERGENCE_COLUMNS = (
    "resolution", "h", "residual_sup", "identity_gap_sup",
    "superharmonicity_slack", "solution_error_sup",
)

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_AUDIT = 0, 1, 2, 3


class CliError(Exception):
    """Bad configuration or input; maps to exit code 1."""


@dataclass(frozen=True)
class RunArtifacts:
    fields: str = None
    report: str = None
    audit: str = None
    convergence: str = None


# ----------------------------------------------------------------------------
# configuration


def _parse_flag(text):
    """Flag values are JSON when they parse as JSON, plain strings otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=None, environ=None):
    """Merge defaults, the JSON file, the environment and flag overrides.

    Raises
    ------
    CliError
        On unknown keys or unreadable files.
    """
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise CliError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    if environ.get(ENV_OUTPUT_DIR):
        cfg["output_dir"] = environ[ENV_OUTPUT_DIR]
    for key, val in (overrides or {}).items():
        if key not in DEFAULTS:
            raise CliError(f"unknown config key: {key}")
        cfg[key] = val
    return cfg


def _domain(cfg):
    try:
        return GridDomain.box(int(cfg["n"]), cfg["lower"], cfg["upper"], cfg["resolution"])
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def _solve_config(cfg):
    try:
        return SolveConfig(
            method=cfg["method"],
            dt_factor=cfg["dt_factor"],
            tol=float(cfg["tol"]),
            max_iter=int(cfg["max_iter"]),
            continuation_steps=int(cfg["continuation_steps"]),
            damping=float(cfg["damping"]),
        )
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def _preset_params(cfg):
    params = dict(cfg["params"] or {})
    if cfg["seed"] is not None:
        params["seed"] = int(cfg["seed"])
    return params


def validate(cfg, command):
    """Check everything that can be checked before any computation."""
    if not isinstance(cfg["params"], dict):
        raise CliError("params must be a JSON object")
    if cfg["initial"] not in ("harmonic", "preset"):
        raise CliError("initial must be 'harmonic' or 'preset'")
    bad = sorted(set(cfg["audits"]) - set(AUDIT_NAMES))
    if bad:
        raise CliError(f"unknown audits: {', '.join(bad)}")
    if not float(cfg["c_check"]) > 0:
        raise CliError("c_check must be positive")
    if not math.isfinite(float(cfg["boundary_scale"])):
        raise CliError("boundary_scale must be finite")
    _solve_config(cfg)
    if command == "convergence":
        levels = cfg["levels"]
        if not isinstance(levels, list) or len(levels) < 3:
            raise CliError("convergence needs at least 3 refinement levels")
        for r in levels:
            _domain(dict(cfg, resolution=r))
    if command == "check" and cfg["fields"] is not None:
        return
    # builds the domain and samples the preset once on a tiny grid to
    # surface bad names and parameters early
    _domain(cfg)
    sample_preset(cfg["preset"], _preset_params(cfg), GridDomain.box(int(cfg["n"]), cfg["lower"], cfg["upper"], 5))


# ----------------------------------------------------------------------------
# building blocks


def build_problem(cfg, resolution=None):
    """Domain, target map, boundary data and initial guess for a config."""
    domain = _domain(cfg if resolution is None else dict(cfg, resolution=resolution))
    phi = sample_preset(cfg["preset"], _preset_params(cfg), domain)
    s = float(cfg["boundary_scale"])
    boundary = BoundaryData.from_field(phi).scaled(s) if s != 1.0 else BoundaryData.from_field(phi)
    if cfg["initial"] == "preset":
        initial = VectorField(domain, boundary.apply(np.asarray(phi.values) * s))
    else:
        initial = harmonic_extension(boundary)
    return domain, phi, boundary, initial


def run_solve(cfg, resolution=None):
    """Solve one instance; solver failures come back as a non-converged report."""
    domain, phi, boundary, initial = build_problem(cfg, resolution)
    scfg = _solve_config(cfg)
    try:
        field, report = solve(initial, boundary, scfg)
    except MinsysError as exc:
        report = getattr(exc, "report", None) or SolveReport(method=scfg.method, message=str(exc))
        report.converged = False
        field = getattr(exc, "field", None) or initial
    return phi, field, report


def diagnostic_columns(field, audit=None):
    """Per-node diagnostic columns for the CSV dump (NaN where undefined)."""
    domain = field.domain
    a = audit if audit is not None else diag.GeometryAudit.of(field)
    cols = {}

    def full(inner):
        out = np.full(domain.shape, np.nan)
        out[domain.interior] = inner
        return out

    cols["wedge2"] = full(a.wedge2)
    cols["star_omega"] = star_omega_nodes(field)
    cols["lhs31"] = full(a.lhs)
    cols["rhs31"] = full(a.rhs)
    if field.n == 2 and field.m == 2:
        w1, w2 = grassmann_forms_batch(geometry_field(field).jacobian)
        cols["omega1"], cols["omega2"] = full(w1), full(w2)
    else:
        cols["omega1"] = cols["omega2"] = np.full(domain.shape, np.nan)
    return cols


def audit_report(field, cfg, audit=None):
    return diag.run_audits(field, float(cfg["tol"]), float(cfg["c_check"]), cfg["audits"], audit)


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _echo(cfg):
    return {k: cfg[k] for k in sorted(cfg) if k not in ("output_dir",)}


def _outdir(cfg):
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# commands


def cmd_solve(cfg):
    phi, field, report = run_solve(cfg)
    out = _outdir(cfg)
    fields_path = os.path.join(out, "fields.csv")
    report_path = os.path.join(out, "report.json")
    write_field_csv(fields_path, field, diagnostic_columns(field))
    doc = report.to_dict()
    doc["config"] = _echo(cfg)
    _write_json(report_path, doc)
    status = "converged" if report.converged else "did not converge"
    print(f"{report.method}: {status} after {report.iterations} iterations, "
          f"residual {report.residual_sup:.3e}")
    code = EXIT_OK if report.converged else EXIT_NOT_CONVERGED
    return code, RunArtifacts(fields=fields_path, report=report_path)


def _identity_order(cfg, field, gap):
    """Identity gap at the next coarser level of the same problem, and the order."""
    r = field.domain.resolution
    coarse = tuple((k + 1) // 2 for k in r)
    if min(coarse) < 5 or any((k - 1) % 2 for k in r):
        return None
    _, cf, crep = run_solve(cfg, resolution=list(coarse))
    if not crep.converged:
        return None
    cgap = diag.identity_check(cf, float(cfg["tol"]), float(cfg["c_check"]))[3].details["gap_sup"]
    order = diag.refinement_order([cf.domain.h, field.domain.h], [cgap, gap])
    return {"coarse_resolution": list(coarse), "coarse_gap_sup": cgap, "order": order}


def cmd_check(cfg):
    loaded = cfg["fields"] is not None
    if loaded:
        field = read_field_csv(cfg["fields"])
    else:
        _, field, report = run_solve(cfg)
    a = diag.GeometryAudit.of(field)
    rep = audit_report(field, cfg, a)
    if not loaded and "identity" in cfg["audits"] and rep.converged:
        entry = rep.entry("identity")
        entry.details["refinement"] = _identity_order(cfg, field, entry.details["gap_sup"])
    out = _outdir(cfg)
    audit_path = os.path.join(out, "audit.json")
    doc = rep.to_dict()
    doc["source"] = os.path.basename(cfg["fields"]) if loaded else "solve"
    _write_json(audit_path, doc)
    fields_path = None
    if not loaded:
        fields_path = os.path.join(out, "fields.csv")
        write_field_csv(fields_path, field, diagnostic_columns(field, a))
    for e in rep.entries:
        verdict = "info" if e.passed is None else ("pass" if e.passed else "FAIL")
        print(f"{e.name:18s} {verdict:5s} worst={e.worst_value:.3e} tau={e.tolerance:.3e}")
    code = EXIT_OK if rep.all_passed else EXIT_AUDIT
    return code, RunArtifacts(fields=fields_path, audit=audit_path)


def _format_row(row):
    return ",".join("%.17g" % v if isinstance(v, float) else str(v) for v in row) + "\n"


def convergence_rows(cfg):
    """Solve and audit at every level; yields one row dict per level.

    Stops after the first level that fails to converge (that row is yielded
    with ``converged = False``).
    """
    exact = preset_is_solution(cfg["preset"], _preset_params(cfg)) and float(cfg["boundary_scale"]) == 1.0
    for r in cfg["levels"]:
        phi, field, report = run_solve(cfg, resolution=r)
        a = diag.GeometryAudit.of(field)
        ident = diag.identity_check(field, float(cfg["tol"]), float(cfg["c_check"]), a)[3]
        sup = diag.superharmonicity_check(field, float(cfg["tol"]), float(cfg["c_check"]), a)
        if exact:
            res = float(np.max(np.abs(divergence_residual(phi))))
            err = float(np.max(np.abs(np.asarray(field.values) - np.asarray(phi.values))))
        else:
            res = report.residual_sup
            err = float("nan")
        yield {
            "resolution": int(field.domain.resolution[0]),
            "h": field.domain.h,
            "residual_sup": res,
            "identity_gap_sup": ident.details["gap_sup"],
            "superharmonicity_slack": sup.details["slack"],
            "solution_error_sup": err,
            "converged": report.converged,
        }


def cmd_convergence(cfg):
    out = _outdir(cfg)
    path = os.path.join(out, "convergence.csv")
    rows = []
    ok = True
    for row in convergence_rows(cfg):
        rows.append(row)
        if not row["converged"]:
            ok = False
            break
    text = ",".join(CONVERGENCE_COLUMNS) + "\n"
    text += "".join(_format_row([row[c] for c in CONVERGENCE_COLUMNS]) for row in rows)
    atomic_write_text(path, text)
    h = [r["h"] for r in rows]
    orders = {
        c: diag.refinement_order(h, [r[c] for r in rows])
        for c in CONVERGENCE_COLUMNS[2:]
    }
    report_path = os.path.join(out, "report.json")
    _write_json(report_path, diag.json_ready({
        "schema": "1",
        "converged": ok,
        "levels": [r["resolution"] for r in rows],
        "orders": orders,
        "config": _echo(cfg),
    }))
    for c, o in orders.items():
        print(f"{c:24s} order {'skipped' if o is None else f'{o:.3f}'}")
    return (EXIT_OK if ok else EXIT_NOT_CONVERGED), RunArtifacts(report=report_path, convergence=path)


def svd_report(matrix):
    """Pointwise geometry of one Jacobian as a JSON-ready dict."""
    J = as_jacobian(matrix)
    dec = svd(J)
    met = metric(J)
    frames = adapted_frames(J)
    out = {
        "schema": "1",
        "shape": list(J.shape),
        "lambdas": dec.lambdas.tolist(),
        "right_basis": dec.right_basis.tolist(),
        "left_basis": dec.left_basis.tolist(),
        "op_norm": op_norm(J),
        "wedge2_norm": wedge2_norm(J),
        "area_decreasing": wedge2_norm(J) < 1.0,
        "g": met.g.tolist(),
        "sqrt_g": met.sqrt_g,
        "star_omega": met.star_omega,
        "tangent_frame": frames.tangent.tolist(),
        "normal_frame": frames.normal.tolist(),
    }
    if J.shape == (2, 2):
        gp = grassmann_forms(J)
        out["omega1"], out["omega2"] = gp.omega1, gp.omega2
    return out


def cmd_svd_report(matrix_text):
    try:
        matrix = json.loads(matrix_text)
    except json.JSONDecodeError as exc:
        raise CliError(f"matrix must be a JSON nested list: {exc}") from exc
    sys.stdout.write(json.dumps(svd_report(matrix), indent=2, sort_keys=True) + "\n")
    return EXIT_OK, RunArtifacts()


# ----------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit code 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser():
    p = _Parser(prog="minsys", description="Minimal surface system solver and geometric audits.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("solve", "check", "convergence"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat JSON run configuration")
        for key in DEFAULTS:
            sp.add_argument(f"--{key}", type=_parse_flag, default=argparse.SUPPRESS, metavar="VALUE")
    sp = sub.add_parser("svd-report")
    sp.add_argument("matrix", help='JSON nested list, e.g. "[[1, 2], [3, 4]]"')
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "svd-report":
            return cmd_svd_report(args.matrix)[0]
        overrides = {k: v for k, v in vars(args).items() if k in DEFAULTS}
        cfg = load_config(args.config, overrides)
        try:
            validate(cfg, args.command)
        except (TypeError, ValueError, KeyError) as exc:
            raise CliError(str(exc)) from exc
        handler = {"solve": cmd_solve, "check": cmd_check, "convergence": cmd_convergence}[args.command]
        return handler(cfg)[0]
    except (CliError, MinsysError) as exc:
        print(f"minsys: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
