"""Command line front end: ``adareg run | verify | report``.

Exit codes: 0 all hard checks pass, 1 a hard check failed, 2 config or
input error, 3 integration failure.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import config as config_mod
from .diagnostics import report, verify_assumptions
from .dynamics import Variant
from .errors import AdaregError, MaxStepsExceeded, NonFiniteState
from .integrate import integrate
from .output import (MalformedCSV, read_csv, verdict_document, write_csv, write_json,
                     write_plots)
from .scenarios import from_config

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INTEGRATION = 0, 1, 2, 3
# when several scenarios run, the most serious outcome decides the exit code
_SEVERITY = (EXIT_CONFIG, EXIT_INTEGRATION, EXIT_CHECK, EXIT_OK)

log = logging.getLogger("adareg")


def _load(path, strict=True, mode=None, h=None, t_end=None):
    cfg = config_mod.load(path)
    if h is not None:
        cfg.setdefault("integration", {})["h"] = h
    if t_end is not None:
        cfg.setdefault("integration", {})["t_end"] = t_end
    if mode is not None:
        cfg["mode"] = mode
    return cfg, from_config(cfg, strict=strict)


def _config_error(exc):
    log.error("config error: %s", exc)
    return EXIT_CONFIG


def _out_dir(cfg, flag, default_name):
    d = flag or cfg.get("output", {}).get("dir") or os.path.join("out", default_name)
    os.makedirs(d, exist_ok=True)
    return d


def run_one(path, h=None, t_end=None, mode=None, out=None, plot=False):
    try:
        cfg, sc = _load(path, mode=mode, h=h, t_end=t_end)
        out_dir = _out_dir(cfg, out, sc.name)
    except (AdaregError, ValueError, OSError) as exc:
        return _config_error(exc)
    log.info("%s: integrating to t=%g with h=%g", sc.name, sc.integration.t_end, sc.integration.h)
    try:
        traj = integrate(sc.models, sc.mode, sc.s0, sc.integration)
    except NonFiniteState as exc:
        traj = exc.partial
        log.error("%s: integration failed at t=%r: %s", sc.name, exc.t, exc)
    except MaxStepsExceeded as exc:
        log.error("%s: %s", sc.name, exc)
        return EXIT_INTEGRATION
    assumptions = verify_assumptions(sc.models, sc.diagnostics, sc.mode, sc.asserted_assumptions)
    verdict = report(traj, sc.models, sc.mode, sc.diagnostics)
    code = _verdict_code(verdict, assumptions)
    write_csv(os.path.join(out_dir, "trajectory.csv"), traj)
    write_json(os.path.join(out_dir, "verdict.json"),
               verdict_document(sc.name, sc.mode, verdict, assumptions, code))
    if plot and traj.failure is None:
        write_plots(os.path.join(out_dir, "summary.svg"), traj, sc.models)
    _print_checks(sc.name, list(assumptions.checks) + list(verdict.checks))
    return code


def _verdict_code(verdict, assumptions):
    if verdict.failure is not None:
        return EXIT_INTEGRATION
    return EXIT_OK if verdict.ok and assumptions.ok else EXIT_CHECK


def _print_checks(name, checks):
    for c in checks:
        flag = c.status if c.hard else f"{c.status} (informational)"
        print(f"{name}  {c.name:<26} {flag:<28} measured={c.to_dict()['measured']!r} "
              f"threshold={c.to_dict()['threshold']!r}")


def cmd_run(args):
    kw = dict(h=args.h, t_end=args.t_end, mode=args.mode, plot=args.plot)
    paths = args.config
    if len(paths) == 1:
        return run_one(paths[0], out=args.out, **kw)
    # several configs: one sub-directory per config file under --out
    outs = [os.path.join(args.out, os.path.splitext(os.path.basename(p))[0]) if args.out else None
            for p in paths]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_star, [(p, o, kw) for p, o in zip(paths, outs)]))
    else:
        codes = [run_one(p, out=o, **kw) for p, o in zip(paths, outs)]
    return next(c for c in _SEVERITY if c in codes)


def _run_star(args):
    path, out, kw = args
    return run_one(path, out=out, **kw)


def cmd_verify(args):
    try:
        cfg, sc = _load(args.config, strict=False)
        out_dir = _out_dir(cfg, args.out, sc.name)
    except (AdaregError, ValueError, OSError) as exc:
        return _config_error(exc)
    v = verify_assumptions(sc.models, sc.diagnostics, sc.mode, sc.asserted_assumptions)
    code = EXIT_OK if v.ok else EXIT_CHECK
    doc = verdict_document(sc.name, sc.mode, v, None, code)
    write_json(os.path.join(out_dir, "verify.json"), doc)
    _print_checks(sc.name, v.checks)
    for c in v.hard_failures:
        log.error("%s failed: measured %r, threshold %r, worst at %r (%s)", c.name, c.measured,
                  c.threshold, c.to_dict()["location"], c.note)
    return code


def cmd_report(args):
    try:
        cfg, sc = _load(args.config, mode=args.mode)
    except (AdaregError, ValueError, OSError) as exc:
        return _config_error(exc)
    try:
        traj = read_csv(args.csv, sc.models, sc.mode)
    except MalformedCSV as exc:
        log.error("malformed CSV %s: %s", args.csv, exc)
        return EXIT_CONFIG
    except OSError as exc:
        return _config_error(exc)
    assumptions = verify_assumptions(sc.models, sc.diagnostics, sc.mode, sc.asserted_assumptions)
    verdict = report(traj, sc.models, sc.mode, sc.diagnostics, slack_scale=args.slack_scale)
    code = _verdict_code(verdict, assumptions)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.csv)), "verdict.report.json")
    write_json(out, verdict_document(sc.name, sc.mode, verdict, assumptions, code))
    _print_checks(sc.name, list(assumptions.checks) + list(verdict.checks))
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="adareg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate scenarios and write trajectory CSV + verdict JSON")
    r.add_argument("config", nargs="+")
    r.add_argument("--h", type=float)
    r.add_argument("--t-end", type=float)
    r.add_argument("--mode", choices=[v.value for v in Variant])
    r.add_argument("--out")
    r.add_argument("--plot", action="store_true")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check the model assumptions on the sample region only")
    v.add_argument("config")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="re-run diagnostics on a stored trajectory CSV")
    rep.add_argument("csv")
    rep.add_argument("config")
    rep.add_argument("--mode", choices=[v.value for v in Variant])
    rep.add_argument("--slack-scale", type=float, default=1.0,
                     help="multiply the monotonicity slack, e.g. by the subsampling stride")
    rep.add_argument("--out", help="verdict JSON path (default: next to the CSV)")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
