"""Command line: ``run <config>``, ``verify <suite> --seed N``, ``report <dir>``.

Exit codes: 0 success, 1 a check failed, 2 bad input (usage, schema,
malformed JSON, missing report).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _cap_threads():
    # must run before numpy is first imported
    cap = os.environ.get("CT_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ[var] = cap


_cap_threads()

SCHEMA_VERSION = 1
SUITE_NAMES = ["existence", "mass", "spacetime", "uniqueness", "continuity", "algebra", "flow", "currents"]
VERIFY_NAMES = ["algebra", "flow", "currents", "transport", "continuity"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_point = {"type": "array", "items": _num, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "seed": _int,
    "field": _obj({"kind": {"enum": ["constant", "rotation", "shear", "abs_shear", "gradient_bump", "grid",
                                     "mollified"]},
                   "n": {"type": "integer", "minimum": 1, "maximum": 16},
                   "params": {"type": "object"},
                   "lip_bound": _num, "sup_bound": _num}, ["kind"]),
    "initial": {"oneOf": [
        _obj({"type": {"const": "segment"}, "a": _point, "b": _point, "weight": _num}, ["type", "a", "b"]),
        _obj({"type": {"const": "polyline"}, "points": {"type": "array", "items": _point, "minItems": 2},
              "closed": {"type": "boolean"}, "weight": _num}, ["type", "points"]),
        _obj({"type": {"const": "circle"}, "segments": {"type": "integer", "minimum": 3}, "radius": _pos,
              "center": _point}, ["type"]),
        _obj({"type": {"const": "simplices"}, "n": _int, "k": _int, "simplices": {"type": "array"},
              "integral": {"type": "boolean"}}, ["type", "n", "k", "simplices"]),
        _obj({"type": {"const": "file"}, "path": {"type": "string"}}, ["type", "path"]),
    ]},
    "resolution": _obj({"dt": _pos, "L": {"type": "integer", "minimum": 0}, "q": {"enum": [1, 2, 3, 5]},
                        "tol": _pos}),
    "panels": _obj({"seed": _int, "size": {"type": "integer", "minimum": 1}, "degree": {"type": "integer",
                                                                                        "minimum": 0},
                    "center_box": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                    "r_in": {"type": "number", "minimum": 0}, "r_out": _pos}, ["seed"]),
    "mass_reference": {"enum": ["none", "isometry", "shear_sqrt"]},
    "richardson": {"type": "boolean"},
    "tolerances": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    "spacetime": _obj({"dt": _pos, "L": {"type": "integer", "minimum": 0}, "slabs": {"type": "integer",
                                                                                     "minimum": 1},
                       "z_L": {"type": "integer", "minimum": 0}, "z_q": {"enum": [1, 2, 3, 5]},
                       "panel_size": {"type": "integer", "minimum": 1},
                       "counterexample": {"type": "array", "items": _point, "minItems": 2, "maxItems": 2}}),
    "uniqueness": _obj({"eps": {"type": "array", "items": _pos}, "kernel_nodes": {"type": "integer", "minimum": 1},
                        "panel_size": {"type": "integer", "minimum": 1}}),
    "continuity": _obj({"center": _point, "radius": _pos, "t": _num, "h": {"type": "array", "items": _pos,
                                                                             "minItems": 2},
                        "particle_h": _pos, "particle_sub": {"type": "integer", "minimum": 1},
                        "box": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "panel_size": {"type": "integer", "minimum": 1}, "family_h": _pos,
                        "family_sub": {"type": "integer", "minimum": 1}, "family_dt": _pos,
                        "tests": {"type": "integer", "minimum": 1}}),
    "suites": {"type": "array", "items": {"enum": SUITE_NAMES}, "minItems": 1, "uniqueItems": True},
    "output": _obj({"dir": {"type": "string"}}),
}, ["schema_version", "seed", "field", "panels", "suites"])


class UsageError(Exception):
    """Bad input: exit code 2."""


def bundled_scenarios() -> dict:
    root = Path(__file__).with_name("scenarios")
    return {p.stem: p for p in sorted(root.glob("*.json"))}


def load_config(path) -> tuple[dict, Path]:
    """Parse and validate a config; bundled scenario names are accepted too."""
    import jsonschema

    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        name = p.stem if p.suffix == ".json" else p.name
        if name not in bundled:
            raise UsageError(f"config not found: {path}")
        p = bundled[name]
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON in {p}: {e}") from None
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(x) for x in e.absolute_path) or "<root>"
        raise UsageError(f"schema violation at {where}: {e.message}") from None
    if "initial" not in config and any(s in config["suites"] for s in ("existence", "mass", "spacetime",
                                                                        "uniqueness")):
        raise UsageError("the requested suites need an 'initial' current")
    from .suites import DEFAULT_TOLERANCES

    unknown = sorted(set(config.get("tolerances", {})) - set(DEFAULT_TOLERANCES))
    if unknown:
        raise UsageError(f"unknown tolerance keys: {', '.join(unknown)}")
    return config, p


def _result_block(res) -> dict:
    return {"pass": res.passed, "checks": {c.name: c.to_dict() for c in res.checks}}


def run_config(config: dict, out_dir, base_dir=None, log=print) -> int:
    """Run every requested suite and write ``report.json`` plus CSV tables."""
    from . import __version__
    from .io import dump_json, write_csv
    from .suites import Scenario, run_suite

    try:
        sc = Scenario(config, base_dir)
    except (ValueError, KeyError, TypeError) as e:
        raise UsageError(f"invalid scenario: {e}") from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"name": sc.name, "schema_version": SCHEMA_VERSION, "version": __version__, "config": config,
              "suites": {}, "studies": {}, "tables": []}
    for name in config["suites"]:
        log(f"[{name}]")
        res = run_suite(name, sc)
        for c in res.checks:
            log("  " + c.line())
        report["suites"][name] = _result_block(res)
        report["studies"].update(res.studies)
        for tname, (header, rows) in res.tables.items():
            write_csv(out / f"{tname}.csv", header, rows)
            report["tables"].append(f"{tname}.csv")
    report["pass"] = all(s["pass"] for s in report["suites"].values())
    dump_json(report, out / "report.json")
    log(f"report written to {out / 'report.json'}: {'PASS' if report['pass'] else 'FAIL'}")
    return 0 if report["pass"] else 1


def cmd_run(args) -> int:
    config, path = load_config(args.config)
    out = args.out or config.get("output", {}).get("dir") or f"runs/{config.get('name', path.stem)}"
    return run_config(config, out, path.parent)


def cmd_verify(args) -> int:
    from .suites import verify

    res = verify(args.suite, args.seed)
    for c in res.checks:
        print(c.line() + (f"   ({c.detail})" if c.detail else ""))
    npass = sum(c.passed for c in res.checks)
    print(f"{args.suite} seed={args.seed}: {npass}/{len(res.checks)} checks passed")
    return 0 if res.passed else 1


def _slopes(x, y):
    import math

    out = [None]
    for i in range(1, len(x)):
        ok = x[i] > 0 and x[i - 1] > 0 and y[i] > 0 and y[i - 1] > 0
        out.append(math.log(y[i] / y[i - 1]) / math.log(x[i] / x[i - 1]) if ok else None)
    return out


def cmd_report(args) -> int:
    from .io import write_csv

    d = Path(args.dir)
    path = d / "report.json"
    if not path.is_file():
        raise UsageError(f"no report.json in {d}")
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed report: {e}") from None
    rows = []
    print(f"{'suite':<12} {'check':<34} {'value':>12} {'rel':>4} {'threshold':>12}  result")
    flat = []
    for sname, block in report.get("suites", {}).items():
        for cname, c in block["checks"].items():
            flat.append((f"{sname}.{cname}", c))
            thr = c["tolerance"] if c["relation"] != "band" else c.get("target")
            v = "n/a" if c["value"] is None else f"{c['value']:.4g}"
            t = "n/a" if thr is None else f"{thr:.4g}"
            print(f"{sname:<12} {cname:<34} {v:>12} {c['relation']:>4} {t:>12}  {'pass' if c['pass'] else 'FAIL'}")
    for name, st in report.get("studies", {}).items():
        x, y = st["refinement"], st["residual"]
        for xi, yi, s in zip(x, y, _slopes(x, y)):
            rows.append([name, float(xi), float(yi), "" if s is None else float(s)])
        lo, hi = st["band"]
        fit = st.get("slope")
        inside = fit is not None and (lo is None or fit >= lo) and (hi is None or fit <= hi)
        band = f"[{'-inf' if lo is None else lo}, {'inf' if hi is None else hi}]"
        fit_txt = "n/a" if fit is None else f"{fit:.3f}"
        print(f"study {name}: fitted slope {fit_txt}, band {band}: {'inside' if inside else 'OUTSIDE'}")
    write_csv(d / "summary.csv", ["study", "refinement", "residual", "slope"], rows)
    from . import plotting

    figs = [plotting.plot_study(name, st, d / f"{name}.png") for name, st in report.get("studies", {}).items()]
    if (d / "mass_vs_t.csv").is_file():
        figs.append(plotting.plot_mass(d / "mass_vs_t.csv", d / "mass_vs_t.png"))
    if flat:
        figs.append(plotting.plot_checks(flat, d / "checks.png"))
    print(f"summary.csv and {len(figs)} figure(s) written to {d}")
    print(f"overall: {'PASS' if report.get('pass') else 'FAIL'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="currentflow", description="Transport of currents: scenario runner.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config (path or bundled name)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: the config's output.dir)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="module property sweep at a seed")
    v.add_argument("suite", choices=VERIFY_NAMES)
    v.add_argument("--seed", type=int, required=True)
    v.set_defaults(func=cmd_verify)
    rep = sub.add_parser("report", help="summarize a run directory")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    sub.add_parser("scenarios", help="list bundled scenarios").set_defaults(
        func=lambda a: print("\n".join(bundled_scenarios())) or 0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
