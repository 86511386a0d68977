"""Command line interface: ``slowvoter run | compare | list | show``.

Exit codes: 0 when every check passes, 1 on a tolerance failure and 2 on a
configuration error.  Any configuration path can be overridden with a flag
named after it, for example ``--rates.alpha 2`` or ``--options.points 11``;
values are parsed as JSON when possible and kept as strings otherwise.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigurationError
from .harness import PRESETS, RUNS_ENV, compare, list_runs, load_record, run
from .io import read_json

__all__ = ["main", "build_parser", "apply_overrides"]


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, pairs: list[tuple[str, str]]) -> dict:
    """Set dotted ``path`` entries of ``config`` from ``(path, text)`` pairs."""
    for path, text in pairs:
        keys = path.split(".")
        node = config
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigurationError("override path crosses a scalar", {path: "invalid"})
        node[keys[-1]] = _parse_value(text)
    return config


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigurationError("unexpected argument", {tok: "expected --path value"})
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigurationError("override without value", {key: "missing value"})
            val = extra[i + 1]
            i += 2
        pairs.append((key, val))
    return pairs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slowvoter", description=__doc__.splitlines()[0],
                                epilog=f"Output root: ${RUNS_ENV} (default ./runs).")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="execute a preset and write its artifacts")
    r.add_argument("--preset", choices=sorted(PRESETS), help="preset name (or give it in --config)")
    r.add_argument("--config", help="JSON configuration file")
    r.add_argument("--root", help="output root overriding the environment")

    c = sub.add_parser("compare", help="diff the CSV artifacts of two runs")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--abs", type=float, default=0.0, help="absolute tolerance")
    c.add_argument("--rel", type=float, default=0.0, help="relative tolerance")
    c.add_argument("--stderr-k", type=float, default=None,
                   help="judge columns with a *_stderr companion against k combined standard errors")
    c.add_argument("--root")

    ls = sub.add_parser("list", help="list stored runs")
    ls.add_argument("--root")
    ls.add_argument("--presets", action="store_true", help="list available presets instead")

    s = sub.add_parser("show", help="print the record and report of a run")
    s.add_argument("run")
    s.add_argument("--root")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.verb != "run" and extra:
            raise ConfigurationError("unexpected arguments", {"args": " ".join(extra)})
        if args.verb == "run":
            config = read_json(args.config) if args.config else {}
            if args.preset:
                config["preset"] = args.preset
            apply_overrides(config, _split_overrides(extra))
            record = run(config, root=args.root)
            for chk in record.summary["checks"]:
                flag = "PASS" if chk["passed"] else "FAIL"
                print(f"{flag} {chk['name']}: value={chk['value']:.6g} bound={chk['bound']:.6g}")
            print(f"run_id={record.run_id}")
            return 0 if record.passed else 1
        if args.verb == "compare":
            tol = {"abs": args.abs, "rel": args.rel, "stderr_k": args.stderr_k}
            rep = compare(args.run_a, args.run_b, tol, root=args.root)
            for table, cols in rep["tables"].items():
                for name, info in cols.items():
                    flag = "PASS" if info["passed"] else "FAIL"
                    if info.get("kind") == "label":
                        print(f"{flag} {table}:{name} labels {'equal' if info['equal'] else 'differ'}")
                    else:
                        print(f"{flag} {table}:{name} max_abs={info['max_abs']:.3g} max_rel={info['max_rel']:.3g}")
            return 0 if rep["passed"] else 1
        if args.verb == "list":
            if args.presets:
                for name, preset in sorted(PRESETS.items()):
                    print(f"{name:18s} {preset.description}")
                return 0
            for rec in list_runs(args.root):
                print(f"{rec['run_id']}  {'pass' if rec['passed'] else 'FAIL'}  {rec['finished']}")
            return 0
        rec = load_record(args.run, root=args.root)
        print(json.dumps(rec, indent=2, sort_keys=True))
        return 0 if rec["summary"]["passed"] else 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
