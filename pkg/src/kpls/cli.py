"""Command-line interface.

Exit codes: 0 success, 2 configuration/validation error, 3 I/O error,
4 numerical failure. Errors are reported as one line on stderr:
``kpls: error[<kind>]: <message>``.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cg import default_m_max, fit_cg, make_context
from .complexity import complexity_path, stopping_rule_2
from .data import ClipPolicy, Dataset, preprocess, read_csv, read_features
from .errors import KplsError
from .kernels import KernelSpec, median_heuristic
from .model import KplsModel, load_model, save_model
from .monitor import epsilon_n, monitor_trace, stopping_rule_1
from .population import Rule, consistency_experiment, default_model, load_population

log = logging.getLogger("kpls")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("config", message, EXIT_CONFIG)


# ---------------------------------------------------------------------------
# helpers


def _load_training(args) -> Dataset:
    try:
        X, y = read_csv(args.data)
    except (OSError, ValueError) as exc:
        raise CliError("io", f"cannot read {args.data}: {exc}", EXIT_IO) from exc
    return preprocess(X, y, ClipPolicy(args.clip))


def _kernel(args, X) -> KernelSpec:
    if args.kernel == "gaussian":
        sigma = args.sigma if args.sigma is not None else median_heuristic(X)
        return KernelSpec.gaussian(sigma)
    if args.kernel == "linear":
        return KernelSpec.linear()
    return KernelSpec.polynomial(args.degree)


def _check_rule_params(args) -> None:
    for name in ("gamma", "nu"):
        value = getattr(args, name, None)
        if value is not None and not 0 < value < 0.5:
            raise CliError("config", f"--{name} must lie in (0, 1/2), got {value}", EXIT_CONFIG)
    m_max = getattr(args, "m_max", None)
    if m_max is not None and m_max < 1:
        raise CliError("config", f"--m-max must be >= 1, got {m_max}", EXIT_CONFIG)


def _write(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise CliError("io", f"cannot write {out}: {exc}", EXIT_IO) from exc


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(float(x))


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    _check_rule_params(args)
    if args.rule == "fixed" and (args.m is None or args.m < 1):
        raise CliError("config", "--rule fixed requires --m >= 1", EXIT_CONFIG)
    ds = _load_training(args)
    spec = _kernel(args, ds.X)
    ctx = make_context(ds, spec)
    m_max = args.m_max or default_m_max(ds.n)

    if args.rule == "rule1":
        res = stopping_rule_1(ds, spec, args.gamma, m_max, ctx=ctx)
        chosen, g, trace = res.chosen_m, res.g, res.trace
        rule = {"name": "rule1", "gamma": args.gamma, "threshold": res.threshold, "eps_n": res.eps}
    elif args.rule == "rule2":
        res = stopping_rule_2(ds, spec, args.nu, m_max, ctx=ctx)
        chosen, g = res.chosen_m, res.g
        trace = fit_cg(ds, spec, m_max=max(chosen, 1), ctx=ctx)
        rule = {"name": "rule2", "nu": args.nu, "threshold": res.report.threshold}
    else:
        trace = fit_cg(ds, spec, m_max=args.m, ctx=ctx)
        chosen, g = trace.steps, trace.g
        if chosen < args.m:
            log.warning("CG exited (%s) after %d of %d requested steps",
                        trace.exit_reason.value, chosen, args.m)
        rule = {"name": "fixed", "m": args.m}

    if not np.all(np.isfinite(g.coeffs)):
        raise CliError("numerical", "non-finite coefficients", EXIT_NUMERIC)
    summary = trace.to_dict(coefficients=False)
    model = KplsModel(
        spec=spec,
        X_train=np.array(ds.X),
        coeffs=np.array(g.coeffs),
        y_mean=ds.y_mean,
        y_scale=ds.y_scale,
        chosen_m=chosen,
        rule=rule,
        trace_summary={
            "exit_reason": summary["exit_reason"],
            "steps": trace.steps,
            "ls_error": [r["ls_error"] for r in summary["iterations"]],
            "alpha": [r["alpha"] for r in summary["iterations"]],
            "beta": [r["beta"] for r in summary["iterations"]],
        },
    )
    try:
        save_model(model, args.out)
    except OSError as exc:
        raise CliError("io", f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(f"chosen_m={chosen} n={ds.n} kernel={spec.family.value} params={list(spec.params)}",
          file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
        X = read_features(args.data, model.X_train.shape[1])
    except OSError as exc:
        raise CliError("io", str(exc), EXIT_IO) from exc
    except ValueError as exc:
        if isinstance(exc, KplsError):
            raise
        raise CliError("io", f"cannot read {args.data}: {exc}", EXIT_IO) from exc
    pred = model.predict(X)
    if args.format == "json":
        text = json.dumps({"predictions": pred.tolist()}) + "\n"
    else:
        text = "prediction\n" + "".join(f"{v!r}\n" for v in pred.tolist())
    _write(text, args.out)
    return EXIT_OK


def cmd_monitor(args) -> int:
    _check_rule_params(args)
    ds = _load_training(args)
    spec = _kernel(args, ds.X)
    ctx = make_context(ds, spec)
    m_max = args.m_max or default_m_max(ds.n)
    res = stopping_rule_1(ds, spec, args.gamma, m_max, ctx=ctx)
    full = fit_cg(ds, spec, m_max=m_max, ctx=ctx)
    states = monitor_trace(full, res.eps)
    doc = {
        "n": ds.n,
        "kernel": spec.to_dict(),
        "gamma": args.gamma,
        "eps_n": res.eps,
        "threshold": res.threshold,
        "chosen_m": res.chosen_m,
        "cg_trace": full.to_dict(coefficients=True),
        "monitor_trace": [s.to_dict() for s in states],
    }
    _write(json.dumps(doc, indent=1) + "\n", args.out)
    return EXIT_OK


def rules_table(ds: Dataset, spec: KernelSpec, gamma: float, nu: float, m_max: int) -> list[dict]:
    """Per-step delta_g and complexity paths with both rules' stopping points."""
    ctx = make_context(ds, spec)
    r1 = stopping_rule_1(ds, spec, gamma, m_max, ctx=ctx)
    r2 = stopping_rule_2(ds, spec, nu, m_max, ctx=ctx)
    full = fit_cg(ds, spec, m_max=m_max, ctx=ctx)
    states = monitor_trace(full, r1.eps)
    comp = {rec.m: rec.complexity_value for rec in complexity_path(ctx, ds.y, min(m_max, full.steps + 1))}
    last = max(full.steps, len(states) - 1, max(comp, default=0), r1.chosen_m, r2.chosen_m)
    thr1, thr2 = ds.n ** (-gamma), ds.n**nu
    rows = []
    for m in range(last + 1):
        dg = states[m].delta_g if m < len(states) and states[m].defined else None
        rows.append({
            "m": m,
            "delta_g": dg,
            "complexity": comp.get(m),
            "rule1_threshold": thr1,
            "rule2_threshold": thr2,
            "rule1_stop": int(m == r1.chosen_m),
            "rule2_stop": int(m == r2.chosen_m),
        })
    return rows


def cmd_rules_compare(args) -> int:
    _check_rule_params(args)
    ds = _load_training(args)
    spec = _kernel(args, ds.X)
    rows = rules_table(ds, spec, args.gamma, args.nu, args.m_max or default_m_max(ds.n))
    if args.format == "json":
        def clean(v):
            return None if isinstance(v, float) and math.isinf(v) else v
        text = json.dumps([{k: clean(v) for k, v in r.items()} for r in rows], indent=1) + "\n"
    else:
        buf = io.StringIO()
        cols = list(rows[0])
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join(
                str(r[c]) if c in ("m", "rule1_stop", "rule2_stop") else _num(r[c]) for c in cols
            ) + "\n")
        text = buf.getvalue()
    _write(text, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    _check_rule_params(args)
    if args.config:
        try:
            pop = load_population(args.config)
        except OSError as exc:
            raise CliError("io", f"cannot read {args.config}: {exc}", EXIT_IO) from exc
    else:
        pop = default_model()
    try:
        n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError("config", f"bad --n-list {args.n_list!r}", EXIT_CONFIG) from exc
    if not n_list or min(n_list) < 2 or args.reps < 1:
        raise CliError("config", "need --n-list values >= 2 and --reps >= 1", EXIT_CONFIG)
    rule = Rule(args.rule, args.gamma if args.rule == "rule1" else args.nu)
    result = consistency_experiment(pop, rule, n_list, args.reps, args.seed, args.m_max, args.workers)
    if args.format == "json":
        doc = {
            "rule": args.rule,
            "param": rule.param,
            "runs": [r.__dict__ for r in result.rows],
            "summary": [{"n": n, "median_chosen_m": mm, "median_l2_error": me}
                        for n, mm, me in result.summary],
        }
        _write(json.dumps(doc, indent=1) + "\n", args.out)
    else:
        _write(result.to_csv(), args.out)
        if args.summary:
            _write(result.summary_csv(), args.summary)
        elif args.out not in (None, "-"):
            sys.stdout.write(result.summary_csv())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kpls", description="Kernel PLS with consistent early stopping")
    p.add_argument("--version", action="version", version=f"kpls {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_opts(sp):
        sp.add_argument("--data", required=True, help="CSV: header row, features then target")
        sp.add_argument("--kernel", choices=["gaussian", "linear", "poly"], default="gaussian")
        sp.add_argument("--sigma", type=float, help="gaussian bandwidth (default: median heuristic)")
        sp.add_argument("--degree", type=int, default=2, help="polynomial degree")
        sp.add_argument("--clip", choices=[c.value for c in ClipPolicy], default="rescale",
                        help="response bounding policy")
        sp.add_argument("--m-max", dest="m_max", type=int)
        sp.add_argument("--gamma", type=float, default=0.25)
        sp.add_argument("--nu", type=float, default=0.25)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("fit", help="fit a model and write it as JSON")
    data_opts(sp)
    sp.add_argument("--rule", choices=["rule1", "rule2", "fixed", "fixed_m"], default="rule1")
    sp.add_argument("--m", type=int, help="number of steps for --rule fixed")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="predict with a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True, help="CSV of inputs (a trailing target column is ignored)")
    sp.add_argument("--out")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("monitor", help="export the CG trace with its error-monitor trace")
    data_opts(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("rules-compare", help="delta_g and complexity paths for both rules")
    data_opts(sp)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.set_defaults(func=cmd_rules_compare)

    sp = sub.add_parser("experiment", help="learning curves on a discrete population model")
    sp.add_argument("--config", help="population JSON (default: built-in oracle model)")
    sp.add_argument("--rule", choices=["rule1", "rule2"], default="rule1")
    sp.add_argument("--gamma", type=float, default=0.25)
    sp.add_argument("--nu", type=float, default=0.25)
    sp.add_argument("--n-list", dest="n_list", default="100,400,1600")
    sp.add_argument("--reps", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--m-max", dest="m_max", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.add_argument("--summary", help="where to write the median summary CSV")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("KPLS_LOG", "WARNING").upper(),
                        format="kpls: %(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "rule", None) == "fixed_m":
            args.rule = "fixed"
        return args.func(args)
    except CliError as exc:
        _report(exc.kind, str(exc))
        return exc.code
    except KplsError as exc:
        if isinstance(exc, ArithmeticError):
            _report("numerical", str(exc))
            return EXIT_NUMERIC
        _report("config", str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _report("io", str(exc))
        return EXIT_IO


def _report(kind: str, message: str) -> None:
    line = " ".join(message.split())
    print(f"kpls: error[{kind}]: {line}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
