"""Command-line entry point: ``geofluid {surface,fluid,verify,renorm,multid}``.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 configuration
error (nothing written), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .chart import Grid, builtin_chart
from .errors import ConfigError, NumericalFailure
from .report import ResidualReport, sup, to_csv, to_json, write_text

COMMANDS = ("surface", "fluid", "verify", "renorm", "multid")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "chart": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "ranges": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
            },
        },
        "jets": {"enum": ["analytic", "fd"]},
        "h": _POS,
        "dt": _POS,
        "t_max": _POS,
        "rho0": _NUM,
        "orientation": {"enum": [1, -1]},
        "system": {"enum": ["literal", "covariant"]},
        "seeds": {"type": "array", "items": {"type": "array", "items": _NUM}},
        "tolerances": {"type": "object", "additionalProperties": _POS},
        "format": {"enum": ["csv", "json"]},
        "out_dir": {"type": "string"},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "normal_index": {"type": "integer", "minimum": 0},
        "codim": {"type": "integer", "minimum": 1},
        "renorm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "Q": {"type": "integer", "minimum": 1, "maximum": 12},
                "amplitudes": {"type": "array", "items": _NUM},
                "frequencies": {"type": "array", "items": _NUM},
                "a": _POS,
                "c": _POS,
                "phi_scales": {"type": "array", "items": _POS, "minItems": 1},
                "csv": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "ratio": _POS,
                "check_points": {"type": "integer", "minimum": 1},
            },
        },
    },
}

OUTPUT_SCHEMAS = {
    "report": {
        "type": "object",
        "required": ["version", "config", "command", "report", "verdict"],
        "properties": {
            "version": {"type": "string"},
            "config": {"type": "object"},
            "command": {"enum": list(COMMANDS)},
            "verdict": {"enum": ["PASS", "FAIL"]},
            "report": {
                "type": "object",
                "required": ["residuals", "tolerances", "verdicts"],
                "properties": {
                    "residuals": {"type": "object", "additionalProperties": {"type": "number"}},
                    "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
                    "verdicts": {"type": "object", "additionalProperties": {"type": "string"}},
                },
            },
        },
    },
    "fields": {
        "type": "object",
        "required": ["version", "fields"],
        "additionalProperties": False,
        "properties": {
            "version": {"type": "string"},
            "fields": {
                "type": "object",
                "additionalProperties": {"type": "array", "items": {"type": ["number", "string", "null"]}},
            },
        },
    },
}

FLUID_COLUMNS = ("x1", "x2", "rho", "v1", "v2", "p", "f11", "f12", "f22", "case_label")


@dataclass
class RunConfig:
    command: str
    chart: dict = field(default_factory=lambda: {"name": "sphere", "params": {}})
    grid: dict = field(default_factory=lambda: {"counts": [32, 32]})
    jets: str = "analytic"
    h: Optional[float] = None
    dt: float = 0.01
    t_max: float = 5.0
    rho0: float = 1.0
    orientation: int = 1
    system: str = "literal"
    seeds: Optional[list] = None
    tolerances: dict = field(default_factory=dict)
    format: str = "csv"
    out_dir: str = "."
    out: Optional[str] = None
    threads: int = 1
    normal_index: int = 0
    codim: Optional[int] = None
    renorm: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config: {exc.message}") from None
        if "command" not in d:
            raise ConfigError("config: no command given")
        return cls(**d)

    def echo(self):
        return asdict(self)


DEFAULT_TOLERANCES = {
    "verify": {"gauss": 1e-8, "codazzi": 1e-8, "stress_det": 1e-9, "pressure_quadratic": 1e-10, "det_f": 1e-10, "ricci": 1e-8},
    "verify_fd": {"gauss": 1e-4, "codazzi": 1e-4, "stress_det": 1e-4, "pressure_quadratic": 1e-4, "det_f": 1e-4, "ricci": 1e-4},
    "fluid": {"momentum_exact": 1e-8, "assembly": 1e-8, "continuity": 5e-3},
    "multid": {"gauss": 1e-8, "codazzi": 1e-8, "ricci": 1e-8, "balance": 1e-8},
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser():
    ap = argparse.ArgumentParser(prog="geofluid", description="Geometry of embeddings and the steady Euler flows they carry.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", dest="out_dir", help="output directory")
    ap.add_argument("--format", choices=["csv", "json"])
    ap.add_argument("--jets", choices=["analytic", "fd"])
    ap.add_argument("--threads", type=int)
    sub = ap.add_subparsers(dest="command")

    def common(p, chart=True):
        if chart:
            p.add_argument("--chart")
            p.add_argument("--params", help="chart parameters as a JSON object")
        p.add_argument("--grid", help="counts, e.g. 64x64")
        p.add_argument("--out", dest="out", help="primary output file")

    common(sub.add_parser("surface", help="geometric fields on a grid"))
    common(sub.add_parser("verify", help="Gauss-Codazzi(-Ricci) and stress identities"))
    p = sub.add_parser("fluid", help="steady Euler flow of a surface")
    common(p)
    p.add_argument("--seeds", help="JSON list of seed points")
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--dt", type=float)
    p = sub.add_parser("renorm", help="renormalized fields along a corrugation sequence")
    common(p, chart=False)
    p.add_argument("--schedule", help="JSON file with amplitudes/frequencies (and optional a, c)")
    p.add_argument("--Q", type=int)
    p.add_argument("--phi-dict", dest="phi_dict", help="JSON list of bump scales (fractions of eta_0)")
    p.add_argument("--csv", nargs="+", help="per-q sample files (x1,x2,y1,y2,y3)")
    p = sub.add_parser("multid", help="higher-dimensional consistency and balance")
    common(p)
    p.add_argument("--codim", type=int)
    p.add_argument("--normal-index", dest="normal_index", type=int)
    return ap


def _parse_json(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: malformed JSON ({exc.msg})") from None


def _load_json_file(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return _parse_json(fh.read(), what)
    except OSError as exc:
        raise ConfigError(f"{what}: cannot read {path} ({exc.strerror})") from None


def _parse_counts(text):
    try:
        return [int(t) for t in text.lower().split("x")]
    except ValueError:
        raise ConfigError(f"--grid: cannot parse '{text}'") from None


def config_from_args(args) -> RunConfig:
    d = _load_json_file(args.config, "--config") if args.config else {}
    if not isinstance(d, dict):
        raise ConfigError("--config: top level must be an object")
    if args.command:
        if d.get("command", args.command) != args.command:
            raise ConfigError(f"config command '{d['command']}' conflicts with subcommand '{args.command}'")
        d["command"] = args.command
    for key in ("out_dir", "format", "jets", "threads", "out", "t_max", "dt", "normal_index", "codim"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "chart", None):
        d["chart"] = {"name": args.chart, "params": d.get("chart", {}).get("params", {})}
    if getattr(args, "params", None):
        d.setdefault("chart", {"name": "sphere"})
        d["chart"]["params"] = _parse_json(args.params, "--params")
    if getattr(args, "grid", None):
        d.setdefault("grid", {})["counts"] = _parse_counts(args.grid)
    if getattr(args, "seeds", None):
        d["seeds"] = _parse_json(args.seeds, "--seeds")
    if d.get("command") == "renorm":
        r = d.setdefault("renorm", {})
        if getattr(args, "schedule", None):
            r.update(_load_json_file(args.schedule, "--schedule"))
        if getattr(args, "Q", None) is not None:
            r["Q"] = args.Q
        if getattr(args, "phi_dict", None):
            r["phi_scales"] = _parse_json(args.phi_dict, "--phi-dict")
        if getattr(args, "csv", None):
            r["csv"] = args.csv
    return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# commands


def _chart(cfg):
    return builtin_chart(cfg.chart["name"], cfg.chart.get("params", {}))


def _grid(cfg, chart):
    counts = cfg.grid.get("counts", [32] * chart.dim_domain)
    if len(counts) == 1:
        counts = counts * chart.dim_domain
    if len(counts) != chart.dim_domain:
        raise ConfigError(f"grid: {len(counts)} counts for a {chart.dim_domain}-dimensional chart")
    ranges = cfg.grid.get("ranges") or chart.ranges
    if len(ranges) != chart.dim_domain:
        raise ConfigError("grid: ranges do not match the chart dimension")
    periodic = tuple(
        per is not None and abs((hi - lo) - per) <= 1e-6 * per for per, (lo, hi) in zip(chart.periods, ranges)
    )
    return Grid(tuple(int(c) for c in counts), tuple(tuple(map(float, r)) for r in ranges), periodic)


def _tolerances(cfg, key):
    tol = dict(DEFAULT_TOLERANCES.get(key, {}))
    tol.update(cfg.tolerances)
    return tol


def _coords(grid):
    pts = grid.points().reshape(-1, grid.ndim)
    return {f"x{i + 1}": pts[:, i] for i in range(grid.ndim)}


def _geometry(cfg, chart, grid):
    from .geometry import compute_geometry

    return compute_geometry(chart, grid.points(), jets=cfg.jets, h=cfg.h)


def cmd_surface(cfg):
    from .geometry import gauss_codazzi_residual

    chart = _chart(cfg)
    grid = _grid(cfg, chart)
    st = _geometry(cfg, chart, grid)
    n = chart.dim_domain
    cols = _coords(grid)
    for i in range(n):
        for j in range(i, n):
            cols[f"g{i + 1}{j + 1}"] = st.g[..., i, j].ravel()
    for m in range(st.k):
        cols[f"mean{m + 1}" if st.k > 1 else "mean"] = st.mean[..., m].ravel()
    if st.kappa is not None:
        cols["kappa"] = st.kappa.ravel()
    if st.principal is not None:
        for i in range(n):
            cols[f"k{i + 1}"] = st.principal[..., i].ravel()
    rep = gauss_codazzi_residual(st)
    return cols, rep, {}


def cmd_verify(cfg):
    from .fluid2d import pressure_select, residual_tensor, stress_from_shape, verify_gauss_via_stress
    from .geometry import gauss_codazzi_residual, nested_fd_residual
    from .multid import higher_geometry, gcr_residual

    chart = _chart(cfg)
    grid = _grid(cfg, chart)
    st = _geometry(cfg, chart, grid)
    tol = _tolerances(cfg, "verify" if cfg.jets == "analytic" else "verify_fd")
    rep = ResidualReport()
    if st.k == 1 and cfg.jets == "fd":
        base = nested_fd_residual(chart, grid.points(), cfg.h or 1e-3)
    elif st.k == 1:
        base = gauss_codazzi_residual(st)
    else:
        base = gcr_residual(higher_geometry(st, cfg.normal_index))
    for k, v in base.residuals.items():
        rep.add(k, v, tol.get(k))
    if chart.dim_domain == 2 and st.k == 1:
        H = st.H[..., 0, :, :]
        P = stress_from_shape(st.g, H)
        rep.add("stress_det", sup(verify_gauss_via_stress(P, st.g, st.kappa)), tol["stress_det"])
        k1, k2 = st.principal[..., 0], st.principal[..., 1]
        p, _ = pressure_select(k1, k2)
        m = k1 + k2
        rep.add("pressure_quadratic", sup(p * p - m * p + st.kappa), tol["pressure_quadratic"])
        f = residual_tensor(st.g, P, p)
        rep.add("det_f", sup(np.linalg.det(np.linalg.inv(st.g) @ f)), tol["det_f"])
    return None, rep, {}


def cmd_fluid(cfg):
    from .fluid2d import construct_fluid, euler_residual

    chart = _chart(cfg)
    if chart.dim_domain != 2 or chart.codim != 1:
        raise ConfigError("fluid: needs a surface in R^3")
    grid = _grid(cfg, chart)
    seeds = np.asarray(cfg.seeds, dtype=float) if cfg.seeds else None
    if seeds is not None:
        if seeds.ndim != 2 or seeds.shape[1] != 2:
            raise ConfigError("fluid: seeds must be a list of [x1, x2] points")
        for i, (lo, hi) in enumerate(grid.ranges):
            if np.any((seeds[:, i] < lo) | (seeds[:, i] > hi)):
                raise ConfigError(f"fluid: seed coordinate x{i + 1} outside the grid range")
    sol = construct_fluid(chart, grid, seeds=seeds, rho0=cfg.rho0, t_max=cfg.t_max, dt=cfg.dt, orientation=cfg.orientation, system=cfg.system, strict=True)
    res = euler_residual(sol)
    tol = _tolerances(cfg, "fluid")
    rep = ResidualReport(grid=res.grid)
    for k, v in res.residuals.items():
        rep.add(k, v, tol.get(k))
    fl = sol.fluid
    cols = _coords(grid)
    cols.update(
        rho=fl.rho.ravel(),
        v1=fl.v_upper[..., 0].ravel(),
        v2=fl.v_upper[..., 1].ravel(),
        p=fl.p.ravel(),
        f11=fl.f[..., 0, 0].ravel(),
        f12=fl.f[..., 0, 1].ravel(),
        f22=fl.f[..., 1, 1].ravel(),
        case_label=[str(s) for s in np.asarray(sol.case_label).ravel()],
    )
    extra = {"paths": {"count": len(sol.paths), "status": sorted({p.status for p in sol.paths})}, "defined_fraction": float(sol.defined.mean())}
    return cols, rep, extra


def cmd_renorm(cfg):
    from . import renorm as R

    r = cfg.renorm
    if r.get("csv"):
        seq = R.load_sequence_csv(r["csv"])
    else:
        seq = R.synthetic_sequence(Q=r.get("Q", 8), amplitudes=r.get("amplitudes"), frequencies=r.get("frequencies"), a=r.get("a", 0.2), c=r.get("c", 0.4))
    scales = tuple(r.get("phi_scales", (1 / 16, 1 / 8, 1 / 4)))
    phis = R.phi_dictionary(float(seq.eta[0]), scales)
    est = R.weak_star_pairings(seq, phis)
    claims = R.verify_vanishing_claims(est, ratio=r.get("ratio", 0.25))
    pts = R.fibonacci_lattice(r.get("check_points", 89))
    rep = ResidualReport()
    per_q = []
    for q, (surf, eta) in enumerate(zip(seq.surfaces, seq.eta)):
        s = R.renorm_state(surf, eta, pts)
        per_q.append(s.report.residuals)
        rep.add(f"gauss_q{q}", s.report.residuals["gauss"], cfg.tolerances.get("gauss", 1e-9))
    eta_ok, delta_ok = seq.monotonicity()
    limits = []
    for i, b in enumerate(phis):
        hb = est["h"].extrapolated_limit[i]
        hb = 0.5 * (hb + hb.T)
        try:
            lf = R.limit_fluid_assembly(hb, tol=1e-3)
            limits.append({"phi": i, "branch": lf.branch, "p": float(lf.fluid.p), "v": lf.fluid.v_upper.tolist()})
        except NumericalFailure as exc:
            limits.append({"phi": i, "error": type(exc).__name__})
    extra = {
        "eta": seq.eta,
        "delta": seq.delta,
        "monotone": {"eta_nondecreasing": eta_ok, "delta_nonincreasing": delta_ok},
        "schedule": seq.schedule,
        "phi": [b.describe() for b in phis],
        "pairings": {k: e.to_dict() for k, e in est.items()},
        "claims": claims,
        "per_q": per_q,
        "limit_fluid": limits,
    }
    verdicts_ok = eta_ok and delta_ok and all(v != "FAIL" for v in claims["verdicts"].values())
    return None, rep, dict(extra, _ok=verdicts_ok)


def cmd_multid(cfg):
    from .multid import consistency_check, gcr_residual, higher_geometry, stress_nd

    chart = _chart(cfg)
    if cfg.codim is not None and cfg.codim != chart.codim:
        raise ConfigError(f"multid: chart '{chart.name}' has codimension {chart.codim}, not {cfg.codim}")
    if cfg.normal_index >= chart.codim:
        raise ConfigError("multid: normal index out of range")
    grid = _grid(cfg, chart)
    st = _geometry(cfg, chart, grid)
    hg = higher_geometry(st, cfg.normal_index)
    tol = _tolerances(cfg, "multid")
    rep = ResidualReport()
    for k, v in gcr_residual(hg).residuals.items():
        rep.add(k, v, tol.get(k))
    rep.add("balance", sup(stress_nd(hg).balance), tol["balance"])
    cons = consistency_check(hg, tol=cfg.tolerances.get("consistency", 1e-8))
    cols = _coords(grid)
    cols.update(
        passed=[("PASS" if b else "FAIL") for b in cons.passed.ravel()],
        matched_root=[str(s) for s in cons.matched_root.ravel()],
        p=cons.p.ravel(),
        spread=cons.spread.ravel(),
        discriminant=cons.discriminant.ravel(),
    )
    summary = cons.summary()
    return cols, rep, {"consistency": summary, "_ok": summary["verdict"] == "PASS"}


HANDLERS = {"surface": cmd_surface, "verify": cmd_verify, "fluid": cmd_fluid, "renorm": cmd_renorm, "multid": cmd_multid}


# ---------------------------------------------------------------------------
# driver


def validate_report(text):
    jsonschema.validate(json.loads(text), OUTPUT_SCHEMAS["report"])


def validate_fields_json(text):
    doc = json.loads(text)
    jsonschema.validate(doc, OUTPUT_SCHEMAS["fields"])
    if len({len(v) for v in doc["fields"].values()}) > 1:
        raise ValueError("field columns differ in length")
    return doc


def validate_fields_csv(text, columns=None):
    """Header check plus one value per column on every row."""
    lines = text.split("\n")
    if lines[-1] != "":
        raise ValueError("CSV must end with a newline")
    header = lines[0].split(",")
    if columns is not None and tuple(header) != tuple(columns):
        raise ValueError(f"unexpected CSV header {header}")
    for row in lines[1:-1]:
        if len(row.split(",")) != len(header):
            raise ValueError("ragged CSV row")
    return header


def _fields_text(cols, fmt):
    if fmt == "csv":
        return to_csv(cols)
    return to_json({"fields": {k: (list(v) if isinstance(v, list) else np.asarray(v)) for k, v in cols.items()}})


def execute(cfg: RunConfig):
    """Run a validated configuration; returns ``(exit_code, {path: text})``."""
    cols, rep, extra = HANDLERS[cfg.command](cfg)
    ok = extra.pop("_ok", True) and rep.passed
    payload = {"command": cfg.command, "report": rep.to_dict(), "verdict": "PASS" if ok else "FAIL"}
    if cfg.command != "renorm":
        payload["provenance"] = {"chart": cfg.chart, "jets": cfg.jets}
    payload.update(extra)
    report_text = to_json(payload, cfg.echo())
    validate_report(report_text)
    outputs = {}
    if cols is not None:
        text = _fields_text(cols, cfg.format)
        validate_fields_csv(text) if cfg.format == "csv" else validate_fields_json(text)
        outputs[cfg.out or os.path.join(cfg.out_dir, f"{cfg.command}.{cfg.format}")] = text
        outputs[os.path.join(cfg.out_dir, f"{cfg.command}_report.json")] = report_text
    else:
        outputs[cfg.out or os.path.join(cfg.out_dir, f"{cfg.command}_report.json")] = report_text
    return (0 if ok else 1), outputs, rep


def run(argv=None, stdout=sys.stdout, stderr=sys.stderr):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command and not args.config:
        parser.print_usage(stderr)
        return 2
    try:
        cfg = config_from_args(args)
        code, outputs, rep = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure [{type(exc).__name__}]: {exc}", file=stderr)
        return 3
    for path, text in outputs.items():
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        write_text(path, text)
    print(rep.table(), file=stdout)
    print(f"verdict: {'PASS' if code == 0 else 'FAIL'}", file=stdout)
    return code


def main():
    sys.exit(run())
