"""Command-line entry point.

Exit codes: 0 success, 1 usage/parse/evaluation error, 2 resource guard
(dense size limit or entry cap) rejected the request.

CSV column orders are fixed:

* query records: ``query,value,diagnostics,oracle_value,oracle_abs_diff``
* run records: ``experiment,method,quantity,value,wall_time_s,memory_doubles,config``
* histogram: ``bin_left,bin_right,mass``
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

from . import arith, core, dsl, experiments
from .errors import ResourceGuardError
from .mixture import from_discrete

QUERY_COLUMNS = ["query", "value", "diagnostics", "oracle_value", "oracle_abs_diff"]
RUN_COLUMNS = ["experiment", "method", "quantity", "value", "wall_time_s", "memory_doubles", "config"]
HISTOGRAM_COLUMNS = ["bin_left", "bin_right", "mass"]
DEFAULT_ORACLE_LIMIT = 10 ** 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def schema_path() -> Path:
    return Path(str(resources.files("ttdist") / "schemas" / "results-v1.schema.json"))


def load_schema() -> dict:
    return json.loads(schema_path().read_text())


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--format", choices=["json", "csv"], default=default("json"))
    parser.add_argument("--seed", type=int, default=default(0))
    parser.add_argument("--oracle", action="store_true", default=default(False),
                        help="also evaluate by dense enumeration and compare")
    parser.add_argument("--oracle-limit", type=int, default=default(DEFAULT_ORACLE_LIMIT),
                        help="largest joint outcome count the oracle may enumerate")
    parser.add_argument("--entry-cap", type=int, default=default(None),
                        help="largest number of core entries one operation may create")
    parser.add_argument("--out", type=Path, default=default(None), help="write results here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    parser = _Parser(prog="ttdist", description="Exact arithmetic on discretized random variables with sparse tensor trains.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="evaluate a script")
    p.add_argument("script", type=Path)

    p = sub.add_parser("experiment", help="reproduce a benchmark problem")
    exp = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    e = exp.add_parser("dice", parents=[common])
    e.add_argument("--count", type=int, default=1000)
    e.add_argument("--faces", type=int, default=6)
    e = exp.add_parser("integrate-product", parents=[common])
    e.add_argument("--d", type=int, default=5)
    e.add_argument("--n", type=int, default=16)
    e.add_argument("--lower", type=float, default=1.0)
    e.add_argument("--upper", type=float, default=2.0)
    e.add_argument("--mc-samples", type=int, default=100_000)
    e = exp.add_parser("integrate-orthogonal", parents=[common])
    e.add_argument("--d", type=int, default=40)
    e.add_argument("--n", type=int, default=8)
    e.add_argument("--mc-samples", type=int, default=10_000)
    e = exp.add_parser("ibm", parents=[common])
    e.add_argument("--steps", type=int, default=126)
    e.add_argument("--n", type=int, default=128)
    e.add_argument("--T", type=float, default=None, help="time horizon (default: steps)")
    e.add_argument("--mc-samples", type=int, default=100_000)
    e.add_argument("--second-moments", action="store_true")
    e = exp.add_parser("hutchinson", parents=[common])
    e.add_argument("--d", type=int, default=20)
    e.add_argument("--matrix", type=Path, default=None, help="CSV file with a square matrix")
    e.add_argument("--mc-samples", type=int, default=10_000)

    p = sub.add_parser("bench-basic", parents=[common], help="sum/product scaling against dense enumeration")
    p.add_argument("--max-d", type=int, default=5)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--dense-limit", type=int, default=2 ** 26)

    p = sub.add_parser("histogram", parents=[common], help="binned mass of a script variable")
    p.add_argument("script", type=Path)
    p.add_argument("variable")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--limit", type=int, default=core.DEFAULT_ENUMERATE_LIMIT)
    return parser


# ------------------------------------------------------------------ commands


def _load_script(path: Path) -> dsl.Program:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read script {path}: {exc.strerror or exc}") from exc
    return dsl.parse(text)


def cmd_run(args) -> list[dict]:
    program = _load_script(args.script)
    base = args.script.parent
    records = dsl.evaluate(program, base_dir=base)
    if args.oracle:
        dense = dsl.Evaluator(dsl.DenseBackend(args.oracle_limit), base).run(program)
        for rec, ref in zip(records, dense):
            cmp = {"value": ref["value"]}
            if isinstance(rec["value"], float) and isinstance(ref["value"], float):
                diff = abs(rec["value"] - ref["value"])
                cmp["abs_diff"] = diff
                cmp["rel_diff"] = diff / abs(ref["value"]) if ref["value"] != 0 else diff
            rec["oracle"] = cmp
    return records


def cmd_experiment(args) -> list[experiments.RunRecord]:
    limit = args.oracle_limit if args.oracle else None
    name = args.experiment
    if name == "dice":
        return experiments.experiment_dice(args.count, args.faces, oracle_limit=limit)
    if name == "integrate-product":
        return experiments.integrate_product(args.d, args.n, args.lower, args.upper, args.mc_samples, args.seed,
                                             oracle_limit=limit)
    if name == "integrate-orthogonal":
        return experiments.integrate_orthogonal(args.d, args.n, args.seed, args.mc_samples, oracle_limit=limit)
    if name == "ibm":
        return experiments.ibm(args.steps, args.n, args.T, args.seed, args.mc_samples, args.second_moments,
                               oracle_limit=limit)
    matrix = None
    if args.matrix is not None:
        try:
            matrix = experiments.read_matrix(args.matrix)
        except OSError as exc:
            raise UsageError(f"cannot read matrix {args.matrix}: {exc.strerror or exc}") from exc
    return experiments.hutchinson(args.d, args.seed, matrix, args.mc_samples, oracle_limit=limit)


def cmd_bench_basic(args) -> list[experiments.RunRecord]:
    return experiments.bench_basic(args.max_d, args.n, args.dense_limit, args.repeats)


def cmd_histogram(args) -> list[dict]:
    program = _load_script(args.script)
    ev = dsl.Evaluator(dsl.TTBackend(), args.script.parent)
    ev.run(program)
    if args.variable not in ev.env:
        raise UsageError(f"variable {args.variable!r} is not bound by the script")
    x = ev.env[args.variable]
    if isinstance(x, list):
        raise UsageError(f"{args.variable!r} is an iid array; bind one expression with let")
    if isinstance(x, float):
        x = arith.constant_like(core.leaf(ev.backend.registry, from_discrete([0.0], [1.0])), x)
    rows = experiments.histogram_of(x, args.bins, args.limit)
    return [dict(zip(HISTOGRAM_COLUMNS, map(float, r))) for r in rows]


# ------------------------------------------------------------------- output


def to_json(items) -> list:
    return [it.to_dict() if isinstance(it, experiments.RunRecord) else it for it in items]


def to_csv(items) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    items = to_json(items)
    if items and "bin_left" in items[0]:
        w.writerow(HISTOGRAM_COLUMNS)
        for r in items:
            w.writerow([repr(r[c]) for c in HISTOGRAM_COLUMNS])
    elif items and "experiment" in items[0]:
        w.writerow(RUN_COLUMNS)
        for r in items:
            cfg = json.dumps(r["config"], sort_keys=True)
            mem = "" if r["memory_doubles"] is None else r["memory_doubles"]
            for q, v in r["values"].items():
                w.writerow([r["experiment"], r["method"], q, repr(float(v)), repr(r["wall_time_s"]), mem, cfg])
    else:
        w.writerow(QUERY_COLUMNS)
        for r in items:
            o = r.get("oracle", {})
            w.writerow([r["query"], _cell(r["value"]), json.dumps(r["diagnostics"], sort_keys=True),
                        _cell(o.get("value", "")), _cell(o.get("abs_diff", ""))])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return str(v)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ttdist: error: {exc}", file=sys.stderr)
        return 1
    previous_cap = arith.get_entry_cap()
    try:
        if args.entry_cap is not None:
            arith.set_entry_cap(args.entry_cap)
        handler = {"run": cmd_run, "experiment": cmd_experiment, "bench-basic": cmd_bench_basic,
                   "histogram": cmd_histogram}[args.command]
        items = handler(args)
    except ResourceGuardError as exc:
        print(f"ttdist: resource limit: {exc}", file=sys.stderr)
        return 2
    except dsl.DSLError as exc:
        print(f"ttdist: {args_path(args)}:{exc.line}:{exc.col}: {exc.message} (at {exc.text!r})", file=sys.stderr)
        return 1
    except (UsageError, dsl.EvalError, ValueError, KeyError) as exc:
        print(f"ttdist: error: {exc}", file=sys.stderr)
        return 1
    finally:
        arith.set_entry_cap(previous_cap)
    text = to_csv(items) if args.format == "csv" else json.dumps(to_json(items), indent=2) + "\n"
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def args_path(args) -> str:
    return str(getattr(args, "script", "<input>"))


if __name__ == "__main__":
    sys.exit(main())
