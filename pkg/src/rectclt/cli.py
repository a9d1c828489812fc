"""Command line entry point.

    rectclt run CONFIG [--seed S] [--workers W] [--output json|csv] [--budget B] [--out PATH]
    rectclt bound-eval {theorem1,lopes,nazarov} [--n ..] [--p ..] ...
    rectclt oracle OP JSON_FILE|-
    rectclt report-diff A B

Exit codes: 0 pass, 2 failed assertion or differing reports, 1 usage or
config error.
"""
import argparse
import json
import sys

from . import distributions as dist
from . import harness
from . import oracle as orc
from .errors import RectCLTError
from .matrix_core import CovarianceSpec


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def build_parser():
    ap = _Parser(prog="rectclt", description="Rectangle-metric Berry-Esseen laboratory.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="run an experiment config (TOML or JSON)")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--output", choices=("json", "csv"), default="json")
    run.add_argument("--budget", type=float)
    run.add_argument("--out", help="write the report here instead of output_path/stdout")

    be = sub.add_parser("bound-eval", help="evaluate a closed-form bound")
    be.add_argument("formula", choices=("theorem1", "lopes", "nazarov"))
    for name, typ in (("n", int), ("p", int), ("nu1", float), ("nu3", float),
                      ("sigma-min", float), ("sigma-under", float), ("c", float), ("nu", float),
                      ("rho", float), ("delta", float)):
        be.add_argument(f"--{name}", type=typ)

    orp = sub.add_parser("oracle", help="exact computation on atomic laws given as JSON")
    orp.add_argument("op", choices=sorted(ORACLE_OPS))
    orp.add_argument("json_in", help="input JSON file, or - for stdin")

    rd = sub.add_parser("report-diff", help="compare the numeric fields of two reports")
    rd.add_argument("a")
    rd.add_argument("b")
    return ap


def _law(d, key):
    if key not in d:
        raise RectCLTError(f"oracle input needs key {key!r}")
    return orc.AtomicLaw.from_json(d[key])


def _op_mu(d):
    return {"value": orc.exact_mu_atomic(_law(d, "a"), _law(d, "b"))}


def _op_mu_gauss(d):
    res = orc.exact_mu_atomic_vs_gaussian(_law(d, "a"), CovarianceSpec(d["cov"]))
    return {"value": res.value, "gap_bound": res.gap_bound}


def _op_convolve(d):
    return {"law": orc.convolve(_law(d, "a"), _law(d, "b")).to_json()}


def _op_sum(d):
    return {"law": orc.sum_law(_law(d, "a"), int(d["n"]), normalize=bool(d.get("normalize", True))).to_json()}


def _op_pseudo(d):
    order = int(d.get("order", 3))
    return {"value": orc.exact_pseudo_moment(_law(d, "a"), _law(d, "b"), order)}


def _op_pseudo_gauss(d):
    return {"value": orc.pseudo_moment_vs_gaussian(_law(d, "a"), int(d.get("order", 3)))}


def _op_zero(d):
    return {"value": dist.spike_zero_probability(int(d["n"]), float(d["gamma"]))}


ORACLE_OPS = {
    "mu": _op_mu,
    "mu-gaussian": _op_mu_gauss,
    "convolve": _op_convolve,
    "sum": _op_sum,
    "pseudo-moment": _op_pseudo,
    "pseudo-moment-gaussian": _op_pseudo_gauss,
    "spike-zero-probability": _op_zero,
}


def _read_json(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise RectCLTError(f"cannot read {path!r}: {exc.strerror}") from None
    except ValueError as exc:
        raise RectCLTError(f"invalid JSON in {path!r}: {exc}") from None


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    rep = harness.run_experiment(cfg, budget=args.budget)
    text = rep.to_json() if args.output == "json" else rep.to_csv()
    dest = args.out or cfg.output_path
    if dest:
        with open(dest, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for claim, ok in sorted(rep.passed.items()):
        sys.stderr.write(f"{'PASS' if ok else 'FAIL'} {claim}\n")
    for claim, why in sorted(rep.inconclusive.items()):
        sys.stderr.write(f"INCONCLUSIVE {claim}: {why}\n")
    return 0 if rep.ok else 2


def _cmd_bound(args):
    prm = {k.replace("-", "_"): v for k, v in vars(args).items()
           if k not in ("command", "formula") and v is not None}
    value = harness.evaluate_formula(args.formula, prm)
    print(f"{value:.6g}")
    return 0


def _cmd_oracle(args):
    data = _read_json(args.json_in)
    if not isinstance(data, dict):
        raise RectCLTError("oracle input must be a JSON object")
    try:
        out = ORACLE_OPS[args.op](data)
    except KeyError as exc:
        raise RectCLTError(f"oracle input needs key {exc}") from None
    print(json.dumps(out, sort_keys=True))
    return 0


def _cmd_diff(args):
    a, b = _read_json(args.a), _read_json(args.b)
    keys = harness.diff_reports(a, b)
    for k in keys:
        print(k)
    return 2 if keys else 0


COMMANDS = {"run": _cmd_run, "bound-eval": _cmd_bound, "oracle": _cmd_oracle, "report-diff": _cmd_diff}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return COMMANDS[args.command](args)
    except (RectCLTError, ValueError) as exc:
        sys.stderr.write(f"rectclt: error: {exc}\n")
        return 1
