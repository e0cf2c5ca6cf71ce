"""Command line: ``geolgp run|validate|report``.

Exit codes: 0 all checks passed, 1 some check failed, 2 invalid input,
3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import config
from .errors import GeoLGPError, InvalidInput


def _run(args):
    cfg, base = config.load(args.config)
    if args.out:
        cfg["out_dir"] = args.out
    elif not os.path.isabs(cfg["out_dir"]):
        cfg["out_dir"] = os.path.join(os.getcwd(), cfg["out_dir"])
    from .pipeline import run_config

    code, rep = run_config(cfg, base, cfg["out_dir"])
    print(_summary(rep.to_dict()))
    print(f"artifacts: {cfg['out_dir']}")
    return code


def _validate(args):
    with open(args.config) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            print(f"<root>: not valid JSON ({exc})", file=sys.stderr)
            return 2
    errs = config.validate(cfg)
    for e in errs:
        print(e, file=sys.stderr)
    if errs:
        return 2
    print("ok")
    return 0


def _summary(rep):
    lines = []
    status = rep.get("status", "ok")
    if status != "ok":
        lines.append(f"status: {status}  {rep.get('error', '')}".rstrip())
    for c in rep.get("checks", []):
        flag = "PASS" if c["pass"] else "FAIL"
        m = c["metrics"]
        keys = [k for k, v in m.items() if isinstance(v, (int, float)) and not isinstance(v, bool)][:4]
        extra = "  ".join(f"{k}={m[k]:.4g}" for k in keys)
        lines.append(f"{flag}  {c['name']:<18} {extra}")
    if "plan_cost" in rep:
        lines.append(f"transport cost {rep['plan_cost']:.10g}")
    return "\n".join(lines)


def _report(args):
    path = os.path.join(args.out_dir, "report.json")
    if not os.path.exists(path):
        raise InvalidInput(f"no report.json in {args.out_dir}")
    with open(path) as fh:
        rep = json.load(fh)
    if args.json:
        print(json.dumps(rep, indent=2, sort_keys=True))
    else:
        print(_summary(rep))
    if rep.get("status", "ok") != "ok":
        return 3
    return 0 if all(c["pass"] for c in rep.get("checks", [])) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="geolgp", description="Least gradient problems with conformal weights.")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="solve an instance and write artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides out_dir)")
    r.set_defaults(func=_run)
    v = sub.add_parser("validate", help="check a config against the schema")
    v.add_argument("config")
    v.set_defaults(func=_validate)
    s = sub.add_parser("report", help="summarize report.json of a finished run")
    s.add_argument("out_dir")
    s.add_argument("--json", action="store_true", help="print the full report")
    s.set_defaults(func=_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except GeoLGPError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
