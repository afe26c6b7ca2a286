"""Command-line front end: experiment orchestration and stable outputs.

Subcommands: whitney, measure, norm, probe, hardy, converge, solve.
A plain-text key=value config file supplies defaults; explicit flags win.
All artifacts embed the resolved-config hash and library version so a run
is reproducible from its echoed configuration and seed.

Exit codes: 0 success, 1 usage error, 2 failing probe verdict.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fields import battery, field_from_spec
from .geometry import Domain, make_domain
from .measures import (BallRegion, CollarRegion, MeasureDensity, integrate,
                       weak_convergence_report)
from .norms import (NormParams, boundary_seminorm, lp_mu_norm, tsp_form,
                    tsp_seminorm, vsp_seminorm, vsp_norm)
from .whitney import decompose, reflect_cubes

PROBE_CHOICES = ("trace", "extension", "approx-trace", "hardy-domain",
                 "poincare", "counterexample")


class UsageError(SystemExit):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _read_config(path: str) -> dict[str, str]:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"config line without '=': {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def config_hash(ns: argparse.Namespace) -> str:
    payload = "\n".join(f"{k}={ns.__dict__[k]!r}"
                        for k in sorted(ns.__dict__) if k != "func")
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _domain_from(ns) -> Domain:
    params = [float(t) for t in str(ns.params).split(",") if t != ""]
    return make_domain(ns.shape, params, ns.dim)


def _s_grid(spec: str) -> list[float]:
    return [float(t) for t in str(spec).split(",") if t != ""]


def _open_out(ns, name: str):
    if ns.out:
        Path(ns.out).mkdir(parents=True, exist_ok=True)
        return open(Path(ns.out) / name, "w", newline="")
    return sys.stdout


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def _stamp(ns) -> str:
    return f"version={__version__} config_hash={config_hash(ns)}"


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_whitney(ns) -> int:
    domain = _domain_from(ns)
    targets = ["interior", "exterior"] if ns.target == "both" else [ns.target]
    decomps = {t: decompose(domain, t, ns.max_level) for t in targets}
    reflected = {}
    if len(decomps) == 2:
        rmap = reflect_cubes(decomps["exterior"], decomps["interior"], domain)
        for i, j in rmap.pairs.items():
            reflected[i] = decomps["interior"].cubes[j].center.tolist()
    fh = _open_out(ns, "whitney.jsonl")
    fh.write(json.dumps({"meta": _stamp(ns), "shape": ns.shape,
                         "deficit": {t: d.coverage_deficit
                                     for t, d in decomps.items()}},
                        sort_keys=True) + "\n")
    for t, d in decomps.items():
        for i, c in enumerate(d.cubes):
            rec = {"target": t, "level": c.level,
                   "center": c.center.tolist(), "side": c.side,
                   "dist_to_boundary": c.dist_to_boundary}
            if t == "exterior" and i in reflected:
                rec["reflected_center"] = reflected[i]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _close(fh)
    return 0


def _region_from(spec: str | None):
    if spec in (None, "", "all"):
        return None
    kind, _, rest = str(spec).partition(":")
    vals = [float(t) for t in rest.split(",") if t != ""]
    if kind == "collar":
        return CollarRegion(vals[0])
    if kind == "ball":
        return BallRegion(tuple(vals[:-1]), vals[-1])
    raise SystemExit(f"unknown region spec {spec!r}")


def cmd_measure(ns) -> int:
    domain = _domain_from(ns)
    region = _region_from(ns.region)
    fh = _open_out(ns, "measure.csv")
    w = csv.writer(fh)
    w.writerow([f"# {_stamp(ns)}"])
    w.writerow(["s", "value", "error"])
    for s in _s_grid(ns.s):
        kind = {"mu": "mu", "tau": "tau", "mutilde": "mutilde",
                "mubar": "mubar"}[ns.kind]
        m = MeasureDensity(kind, s, domain, p=ns.p,
                           collar=ns.collar if kind == "mubar" else None)
        res = integrate(m, region, budget=ns.budget)
        w.writerow([f"{s:.6g}", f"{res.value:.12g}", f"{res.error:.6g}"])
    _close(fh)
    return 0


def cmd_norm(ns) -> int:
    domain = _domain_from(ns)
    fh = _open_out(ns, "norm.csv")
    w = csv.writer(fh)
    w.writerow([f"# {_stamp(ns)}"])
    w.writerow(["s", "norm", "field", "value", "error"])
    for s in _s_grid(ns.s):
        fld = field_from_spec(ns.field, domain, s)
        params = NormParams(s=s, p=ns.p)
        if ns.norm == "vsp":
            res = vsp_norm(fld, domain, params)
        elif ns.norm == "tsp":
            res = tsp_seminorm(fld, domain, params)
        elif ns.norm == "lpmu":
            res = lp_mu_norm(fld, domain, params)
        elif ns.norm == "wsp-boundary":
            res = boundary_seminorm(fld, domain, ns.p, "sobolev")
        elif ns.norm == "besov":
            res = boundary_seminorm(fld, domain, ns.p, "besov")
        else:
            raise SystemExit(f"unknown norm {ns.norm!r}")
        w.writerow([f"{s:.6g}", ns.norm, ns.field, f"{res.value:.12g}",
                    f"{res.error:.6g}"])
    _close(fh)
    return 0


def cmd_probe(ns) -> int:
    from . import traceext as te
    domain = _domain_from(ns)
    s_grid = _s_grid(ns.s)
    fields = battery(domain, s_grid[0])
    if ns.which == "trace":
        rep = te.probe_trace_continuity(fields, domain, s_grid, ns.p,
                                        ns.threshold, robust=not ns.drop_factor)
    elif ns.which == "extension":
        rep = te.probe_extension_continuity(fields, domain, s_grid, ns.p,
                                            ns.threshold,
                                            robust=not ns.drop_factor)
    elif ns.which == "approx-trace":
        rep = te.probe_approximate_trace(fields, domain, s_grid, ns.p,
                                         ns.threshold)
    elif ns.which == "hardy-domain":
        rep = te.probe_hardy_domain(fields, domain, s_grid, ns.threshold)
    elif ns.which == "poincare":
        vanishing = [f for f in fields if f.vanishes_outside]
        rep = te.probe_poincare(vanishing, domain, s_grid, ns.p, ns.threshold)
    elif ns.which == "counterexample":
        n_grid = [int(t) for t in ns.n_grid.split(",")]
        rep = te.counterexample_report(domain, s_grid[0], n_grid)
    else:
        raise SystemExit(f"unknown probe {ns.which!r}")
    fh = _open_out(ns, f"probe_{ns.which}.json")
    payload = json.loads(rep.to_json())
    payload["meta"] = _stamp(ns)
    fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _close(fh)
    return 0 if rep.verdict else 2


def cmd_hardy(ns) -> int:
    from .hardy import HardyParams, bracket_d1, hardy_constant, hardy_bracket_check
    fh = _open_out(ns, "hardy.csv")
    w = csv.writer(fh)
    w.writerow([f"# {_stamp(ns)}"])
    w.writerow(["s", "D", "sD", "bracket_lo", "bracket_hi", "in_bracket"])
    if ns.sweep:
        svals = list(np.linspace(0.05, 0.95, 20))
    else:
        svals = _s_grid(ns.s)
    for s in svals:
        c, _ = hardy_constant(HardyParams(ns.d, s, ns.p))
        lo, hi = bracket_d1(s)
        inb = (lo <= s * c <= hi) if (ns.d == 1 and ns.p == 1.0) else ""
        w.writerow([f"{s:.6g}", f"{c:.12g}", f"{s * c:.12g}",
                    f"{lo:.12g}", f"{hi:.12g}", str(inb)])
    _close(fh)
    return 0


def cmd_converge(ns) -> int:
    from .traceext import classical_limit_report
    domain = _domain_from(ns)
    fld = field_from_spec(ns.field, domain, _s_grid(ns.s)[0])
    rows = classical_limit_report(fld, domain, _s_grid(ns.s), ns.p)
    fh = _open_out(ns, "converge.csv")
    w = csv.writer(fh)
    w.writerow([f"# {_stamp(ns)}"])
    w.writerow(["s", "lp_mu", "tsp_semi", "target_lp", "target_semi",
                "err_lp", "err_semi"])
    for r in rows:
        w.writerow([f"{r.s:.6g}", f"{r.lp_mu:.12g}", f"{r.tsp_semi:.12g}",
                    f"{r.target_lp:.12g}", f"{r.target_semi:.12g}",
                    f"{r.err_lp:.6g}", f"{r.err_semi:.6g}"])
    _close(fh)
    return 0


def cmd_solve(ns) -> int:
    from .solver import DirichletProblem, solve_dirichlet
    domain = _domain_from(ns)
    f = field_from_spec(ns.f, domain, ns.s) if ns.f else None
    g = field_from_spec(ns.g, domain, ns.s) if ns.g else None
    prob = DirichletProblem(domain, ns.s, ns.p, f, g, grid_n=ns.grid,
                            r_ext=ns.rext, seed=ns.seed or 0)
    u, log = solve_dirichlet(prob)
    fh = _open_out(ns, "solution.csv")
    w = csv.writer(fh)
    w.writerow([f"# {_stamp(ns)}"])
    w.writerow(["node", "value"])
    nodes = u.nodes if u.nodes.ndim == 1 else [tuple(x) for x in u.nodes]
    for x, v in zip(nodes, u.values):
        w.writerow([f"{x}", f"{v:.12g}"])
    _close(fh)
    fh = _open_out(ns, "convergence.json")
    fh.write(json.dumps({
        "meta": _stamp(ns), "method": log.method,
        "iterations": log.iterations, "converged": bool(log.converged),
        "final_grad_norm": log.final_grad_norm,
        "exterior_tail_bound": log.tail_bound,
        "runtime_s": log.runtime_s,
    }, indent=2, sort_keys=True) + "\n")
    _close(fh)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    parser = Parser(prog="fractrace",
                    description="boundary-concentrated measures, fractional "
                                "trace/extension operators and the fractional "
                                "p-Laplacian at desk scale")
    parser.add_argument("--config", help="key=value config file; flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--shape", default="interval")
        p.add_argument("--params", default="0,1")
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="mandatory for Monte-Carlo paths")

    p = sub.add_parser("whitney", help="dump a cube decomposition as JSONL")
    common(p)
    p.add_argument("--target", choices=("interior", "exterior", "both"),
                   default="both")
    p.add_argument("--max-level", type=int, default=7)
    p.set_defaults(func=cmd_whitney)

    p = sub.add_parser("measure", help="integrate a weighted measure")
    common(p)
    p.add_argument("--kind", choices=("mu", "tau", "mutilde", "mubar"),
                   required=True)
    p.add_argument("--s", required=True, help="value or comma grid")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--region", default=None,
                   help="all | collar:<w> | ball:<coords...,r>")
    p.add_argument("--collar", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("norm", help="evaluate a fractional norm")
    common(p)
    p.add_argument("--norm", choices=("vsp", "tsp", "lpmu", "wsp-boundary",
                                      "besov"), required=True)
    p.add_argument("--s", required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--field", required=True)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("probe", help="run an inequality probe battery")
    common(p)
    p.add_argument("--which", choices=PROBE_CHOICES, required=True)
    p.add_argument("--s", default="0.5,0.7,0.9,0.95")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--drop-factor", action="store_true",
                   help="drop the robustness prefactor from the measures")
    p.add_argument("--n-grid", default="64,128,256,512,1024")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("hardy", help="half-space constant sweep")
    common(p)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--s", default="0.5")
    p.add_argument("--sweep", action="store_true")
    p.set_defaults(func=cmd_hardy)

    p = sub.add_parser("converge", help="trace norms against boundary limits")
    common(p)
    p.add_argument("--field", default="bump-boundary")
    p.add_argument("--s", default="0.9,0.95,0.99")
    p.add_argument("--p", type=float, default=2.0)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("solve", help="fractional p-Laplacian Dirichlet solve")
    common(p)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--f", default="const-1")
    p.add_argument("--g", default="const-0")
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--rext", type=float, default=None)
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # pre-scan for --config so file values become defaults that flags override
    pre = Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = _read_config(known.config)
        if "command" in cfg and not any(not a.startswith("-") for a in argv):
            argv = [cfg.pop("command")] + argv
        ns = parser.parse_args(argv)
        for k, v in cfg.items():
            if hasattr(ns, k):
                cur = getattr(ns, k)
                explicit = any(a.replace("-", "_").lstrip("_") == k
                               or a.startswith(f"--{k.replace('_', '-')}=")
                               for a in argv)
                if not explicit:
                    cast = type(cur) if cur is not None else str
                    setattr(ns, k, cast(v) if cast is not bool
                            else v.lower() in ("1", "true", "yes"))
    else:
        ns = parser.parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
