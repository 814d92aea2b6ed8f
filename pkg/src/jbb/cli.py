"""Command line front end.

Exit codes: 0 ok, 2 invalid scenario or arguments, 3 every ratio
infeasible, 4 a Monte Carlo check failed. Nothing is written unless the
whole command succeeds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, closedform as cf, solver
from .checks import resolve_operating_point, run_checks
from .estimation import gamma_k
from .model import ConfigError, InfeasibleFrameError, Scheme, linear_to_db
from .montecarlo import default_threads
from .scenario import Scenario, load

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 2, 3, 4

CURVE_COLUMNS = ["ratio_db", "rho_d_db", "rho_b_db", "rho_o_db", "rate", "curve_id"]


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _num(x):
    """JSON-safe float: nan -> None, +-inf -> string."""
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _db(x):
    return _num(linear_to_db(x))


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


def _csv_text(meta: dict, columns, rows) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _gamma(scn: Scenario, prof):
    return np.atleast_1d(gamma_k(prof.as_array(), scn.system.rho_u, scn.system.tau_pu))


def _need_targets(scn: Scenario):
    if scn.target_net_b is None:
        raise ConfigError("targets.net_b_sum", "required by this command")
    if scn.target_net_o is None:
        raise ConfigError("targets.net_o", "required by this command")


# ---------------------------------------------------------------------------
# commands; each returns (tables, summary, figures)


def cmd_rates(scn: Scenario, args):
    cfg, prof = scn.system, scn.profile()
    gamma = _gamma(scn, prof)
    op = resolve_operating_point(scn)
    rows, summary = [], {"rho_b_db": _db(op.rho_b), "rho_o_db": _db(op.rho_o), "rho_d_db": _db(op.rho_d)}
    K = prof.K

    jp = cf.b_rate_report(cfg, prof, gamma, op.rho_b, op.rho_o, Scheme.JBB_PRIME, scn.precoder)
    ob = cf.o_rate_breakdown(cfg, prof.beta_o, op.rho_o, jp.rho_b_eff)
    summary["JBB_PRIME"] = {
        "b_maxmin_rate": jp.maxmin_rate, "b_net_sum": jp.net_sum_b, "eta": list(jp.eta),
        "per_terminal_rate": list(jp.per_terminal_rate),
        "o_rate_exact": ob.rate_exact, "o_rate_bound": _num(ob.rate_bound),
        "o_net": ob.net_rate, "o_net_bound": _num(ob.net_rate_bound),
        "o_signal_db": _db(ob.signal), "o_est_error_db": _db(ob.est_error),
        "o_b_interference_db": _db(ob.b_interference),
    }
    jb = cf.b_rate_report(cfg, prof, gamma, op.rho_b, op.rho_o, Scheme.JBB, scn.precoder)
    summary["JBB"] = {"b_maxmin_rate": jb.maxmin_rate, "b_net_sum": jb.net_sum_b, "o_net": None}

    m = solver.optimize_epsilon(op, cfg, prof, gamma, scn.precoder)
    if m.feasible:
        oa_b = cf.prelog_b(cfg, Scheme.OA) * K * float(
            cf.oa_maxmin_rate(cfg, prof, gamma, m.rho_b_oa, m.epsilon, scn.precoder))
    else:
        oa_b = float("nan")
    summary["OA"] = {"epsilon": _num(m.epsilon), "feasible": m.feasible, "rho_b_oa_db": _db(m.rho_b_oa),
                     "rho_o_oa_db": _db(m.rho_o_oa), "b_net_sum": _num(oa_b), "o_net": m.o_rate}
    for scheme in ("JBB_PRIME", "JBB", "OA"):
        for key, val in summary[scheme].items():
            if isinstance(val, list):
                for k, v in enumerate(val):
                    rows.append([scheme, f"{key}[{k}]", v])
            elif key != "feasible":
                rows.append([scheme, key, val])
    return {"rates": (["scheme", "quantity", "value"], rows)}, summary, {}


def _curve_rows(points):
    return [
        [linear_to_db(p.ratio), linear_to_db(p.rho_d), linear_to_db(p.rho_b), linear_to_db(p.rho_o), p.rate, p.curve]
        for p in points if p.feasible
    ]


def _intersection_dict(x):
    return {"ratio_db": _db(x.ratio), "rho_d_db": _db(x.rho_d), "rho_b_db": _db(x.rho_b), "rho_o_db": _db(x.rho_o)}


def cmd_curves(scn: Scenario, args):
    _need_targets(scn)
    cfg, prof = scn.system, scn.profile()
    gamma = _gamma(scn, prof)
    grid = scn.ratio_grid()
    b = solver.trace_b_curve(cfg, prof, gamma, scn.precoder, scn.target_net_b, grid)
    o = solver.trace_o_curves(cfg, prof, gamma, scn.precoder, scn.target_net_o, grid)
    curves = {"b_jbb_prime": b, **{name: pts for name, pts in o.items() if pts}}
    if not any(p.feasible for p in b) or not any(p.feasible for p in o.jbb_prime + o.oa):
        raise CommandError(EXIT_INFEASIBLE, "every ratio on the grid is infeasible for the B or both O targets")

    summary = {"feasible_points": {k: sum(p.feasible for p in v) for k, v in curves.items()}, "grid_intersections": {}}
    marks = {}
    for name in ("o_jbb_prime", "o_oa", "o_jbb_prime_bound", "o_oa_bound"):
        if name not in curves:
            continue
        try:
            x = solver.find_intersection(b, curves[name])
        except solver.NoIntersectionError:
            summary["grid_intersections"][name] = None
            continue
        summary["grid_intersections"][name] = _intersection_dict(x)
        marks[name.replace("o_", "", 1)] = x
    try:
        c = solver.compare_schemes(cfg, prof, scn.precoder, scn.target_net_b, scn.target_net_o, gamma)
        summary["jbb_prime"] = _intersection_dict(c.jbb_prime)
        summary["oa"] = {**_intersection_dict(c.oa), "epsilon": c.oa_match.epsilon,
                         "rho_b_oa_db": _db(c.oa_match.rho_b_oa), "rho_o_oa_db": _db(c.oa_match.rho_o_oa)}
        summary["saving_db"] = c.saving_db
    except solver.NoIntersectionError as exc:
        summary["saving_db"] = None
        summary["note"] = str(exc)
    tables = {name: (CURVE_COLUMNS, _curve_rows(pts)) for name, pts in curves.items()}

    def render(path):
        from .plotting import plot_curves

        plot_curves(curves, marks, path, title=scn.name)

    return tables, summary, {"curves": render}


def cmd_verify(scn: Scenario, args):
    checks = run_checks(scn, seed=args.seed, threads=args.threads)
    rows = [[c.name, c.predicted, c.measured, c.std_error, c.tolerance, c.passed] for c in checks]
    summary = {"checks": [{k: _num(v) if isinstance(v, float) else v for k, v in c.as_dict().items()} for c in checks],
               "all_passed": all(c.passed for c in checks)}
    return {"verify": (["check", "predicted", "measured", "std_error", "tolerance", "passed"], rows)}, summary, {}


def cmd_sweep(scn: Scenario, args):
    if scn.sweep is None:
        raise ConfigError("sweep", "required by this command")
    if scn.target_net_b is None:
        raise ConfigError("targets.net_b_sum", "required by this command")
    prof = scn.profile()
    rows, all_rows = [], []
    for rho_o in scn.sweep.rho_o:
        sweep = solver.sweep_uplink_snr(scn.system, prof, scn.precoder, scn.target_net_b, rho_o,
                                        scn.sweep.rho_u, scn.sweep.scheme)
        all_rows.extend(sweep)
        rows.extend([linear_to_db(r.rho_o), linear_to_db(r.rho_u), linear_to_db(r.rho_b), r.feasible] for r in sweep)
    summary = {"scheme": scn.sweep.scheme.value, "infeasible_rows": sum(not r.feasible for r in all_rows)}

    def render(path):
        from .plotting import plot_sweep

        plot_sweep(all_rows, path, title=scn.name)

    return {"sweep": (["rho_o_db", "rho_u_db", "rho_b_db", "feasible"], rows)}, summary, {"sweep": render}


def cmd_table1(scn: Scenario, args):
    _need_targets(scn)
    cfg, prof = scn.system, scn.profile()
    gamma = _gamma(scn, prof)
    c = solver.compare_schemes(cfg, prof, scn.precoder, scn.target_net_b, scn.target_net_o, gamma)
    rows = []
    for label, x, eps in (("JBB_PRIME", c.jbb_prime, float("nan")), ("OA", c.oa, c.oa_match.epsilon)):
        rb_eff = cf.effective_rho_b(cfg, x.rho_b, Scheme.JBB_PRIME) if label == "JBB_PRIME" else 0.0
        # OA terms are evaluated at the JBB-coordinate broadcast power, with no B interference
        br = cf.o_rate_breakdown(cfg, prof.beta_o, x.rho_o, rb_eff)
        rows.append([label, linear_to_db(x.ratio), linear_to_db(x.rho_d), linear_to_db(x.rho_b),
                     linear_to_db(x.rho_o), eps, linear_to_db(br.signal), linear_to_db(br.est_error),
                     linear_to_db(br.b_interference)])
    columns = ["row", "ratio_db", "rho_d_db", "rho_b_db", "rho_o_db", "epsilon", "signal_db", "est_error_db",
               "b_interference_db"]
    summary = {"rows": [{k: (_num(v) if not isinstance(v, str) else v) for k, v in zip(columns, r)} for r in rows],
               "saving_db": c.saving_db}
    return {"table1": (columns, rows)}, summary, {}


HELP = {
    "rates": "closed-form rates of every scheme at the operating point",
    "curves": "target curves, intersections and the OA power saving",
    "verify": "Monte Carlo check of the closed forms",
    "sweep": "required B power against uplink SNR",
    "table1": "operating points and O-terminal signal/noise terms",
}

COMMANDS = {"rates": cmd_rates, "curves": cmd_curves, "verify": cmd_verify, "sweep": cmd_sweep, "table1": cmd_table1}


# ---------------------------------------------------------------------------
# output


def _render(cmd, meta, tables, summary, fmt):
    """Return {filename: text} for every output file of a command."""
    files = {}
    doc = {"meta": meta, "summary": summary}
    if fmt == "json":
        doc["tables"] = {
            name: [dict(zip(cols, [_num(v) if isinstance(v, (float, np.floating)) else v for v in r])) for r in rows]
            for name, (cols, rows) in tables.items()
        }
    else:
        for name, (cols, rows) in tables.items():
            fname = f"{name}.csv" if name == cmd else f"{cmd}_{name}.csv"
            files[fname] = _csv_text(meta, cols, rows)
    files[f"{cmd}.json"] = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    return files


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jbb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--scenario", required=True, help="scenario JSON file or bundled name (fig_a, ...)")
        sp.add_argument("--seed", type=int, default=None, help="Monte Carlo seed (default: scenario mc.seed)")
        sp.add_argument("--threads", type=int, default=default_threads(), help="worker processes")
        sp.add_argument("--out", type=Path, default=None, help="directory for output files")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_INVALID
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        scn = load(args.scenario)
        seed = scn.mc.seed if args.seed is None else args.seed
        args.seed = seed
        tables, summary, figures = COMMANDS[args.command](scn, args)
    except (ConfigError, InfeasibleFrameError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code

    meta = {"tool": "jbb", "version": __version__, "command": args.command, "scenario": scn.name,
            "scenario_sha256": scn.sha256(), "seed": seed}
    files = _render(args.command, meta, tables, summary, args.format)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (args.out / name).write_text(text, encoding="utf-8", newline="\n")
        for name, render in figures.items():
            render(args.out / f"{name}.png")
        for name in sorted(files) + [f"{n}.png" for n in figures]:
            print(args.out / name)
    else:
        if args.format == "json":
            sys.stdout.write(files[f"{args.command}.json"])
        else:
            sys.stdout.write("\n".join(text for name, text in files.items() if name.endswith(".csv")))
    if args.command == "verify" and not summary["all_passed"]:
        failed = [c["name"] for c in summary["checks"] if not c["passed"]]
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
