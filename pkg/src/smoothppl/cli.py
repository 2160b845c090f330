"""Command-line interface: ``smoothppl <command> ...``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import List, Optional

import numpy as np

from . import syntax as S
from .autodiff import finite_diff_grad, grad_measurable, grad_smoothed
from .checker import TypeCheckError, check_program
from .compiler import CompileError, smooth_compile
from .dual import DomainError
from .estimators import Estimator, EstimatorError
from .experiments import bench, fmt
from .models import BUILTIN_NAMES, Model, builtin
from .optim import AdamConfig, DivergenceError, StepSchedule, run_adam, run_sgd
from .quadrature import QuadratureError, quadrature_expectation
from .semantics import (EvaluationError, SmoothingConfig, eval_measurable, eval_operational,
                        eval_smoothed, is_function)
from .types import show_trace, show_type


class CliError(Exception):
    pass


def _floats(text: Optional[str]) -> List[float]:
    if text is None or text.strip() == "":
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"expected comma-separated numbers, got {text!r}")


def _read(path: str, internal: bool = False) -> S.Program:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}")
    return S.parse_program(text, internal=internal)


def _cfg(eta: Optional[float]) -> Optional[SmoothingConfig]:
    return SmoothingConfig(eta) if eta is not None else None


def _vec(v) -> str:
    return "[" + ", ".join(fmt(x) for x in np.asarray(v).reshape(-1)) + "]"


def cmd_typecheck(args) -> int:
    p = _read(args.file)
    try:
        trace, ty = check_program(p, args.system)
    except TypeCheckError as e:
        print(f"rejected by {args.system}: rule {e.rule} at {'/'.join(e.path) or '<root>'}"
              + (f": {e.detail}" if e.detail else ""))
        return 1
    print(f"trace: {show_trace(trace)}")
    print(f"type: {show_type(ty)}")
    return 0


def cmd_eval(args) -> int:
    p = _read(args.file, args.internal)
    theta, trace = _floats(args.theta), _floats(args.trace)
    cfg = _cfg(args.eta)
    if args.eta is not None and not args.internal:
        v = eval_smoothed(p, theta, trace, cfg)
    else:
        v = eval_measurable(p, theta, trace, cfg)
    if is_function(v):
        op, _, _ = eval_operational(p, theta, trace, cfg)
        print(f"value: {S.pretty(op, p.param_names) if isinstance(op, S.Term) else '<function>'}")
    else:
        print(f"value: {fmt(v)}")
    if args.weights:
        _, w, lw = eval_operational(p, theta, trace, cfg)
        print(f"weight: {fmt(w)}")
        print(f"log_weight: {fmt(lw)}")
    return 0


def cmd_grad(args) -> int:
    p = _read(args.file, args.internal)
    theta, trace = _floats(args.theta), _floats(args.trace)
    cfg = _cfg(args.eta)
    smooth = args.eta is not None and not args.internal
    if smooth:
        v, g = grad_smoothed(p, theta, trace, cfg)
    else:
        v, g = grad_measurable(p, theta, trace, cfg)
    print(f"value: {fmt(v)}")
    print(f"gradient: {_vec(g)}")
    if args.check is not None:
        ref = finite_diff_grad(p, theta, trace, cfg if smooth or args.internal else None, h=args.check)
        dev = np.abs(np.asarray(g) - ref) / np.maximum(np.abs(ref), 1.0)
        print(f"max_rel_deviation: {fmt(dev.max() if dev.size else 0.0)}")
    return 0


def cmd_smooth(args) -> int:
    p = _read(args.file)
    out = str(smooth_compile(p)) + "\n"
    if args.output == "-":
        sys.stdout.write(out)
    else:
        with open(args.output, "w") as fh:
            fh.write(out)
    return 0


def cmd_optimize(args) -> int:
    p = _read(args.file)
    model = Model.from_program(p)
    est = Estimator(args.estimator, args.eta if args.estimator == "smooth" else None)
    if args.theta0 is not None:
        theta0 = _floats(args.theta0)
    else:
        theta0 = [1.0 if b == "preal" else 0.0 for _, b in p.params]
    if args.optimizer == "adam":
        cfg = AdamConfig(lr=args.lr, iters=args.iters, mc_samples=args.mc_samples,
                         eta=args.eta, seed=args.seed)
        traj = run_adam(model, theta0, cfg, est)
    else:
        schedule = StepSchedule.parse(args.schedule) if args.schedule else StepSchedule("constant", args.lr)
        traj = run_sgd(model, theta0, schedule, est, args.iters, n=args.mc_samples, seed=args.seed)
    m = model.nparams
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter"] + [f"theta_{i}" for i in range(1, m + 1)] + ["grad_norm", "elapsed_ns"])
        w.writerow([0] + [fmt(x) for x in traj.thetas[0]] + [fmt(float("nan")), 0])
        for k in range(1, len(traj.thetas)):
            g = np.linalg.norm(traj.grads[k - 1])
            w.writerow([k] + [fmt(x) for x in traj.thetas[k]] + [fmt(g), int(traj.elapsed_ns[k - 1])])
    print(f"final: {_vec(traj.final)}")
    return 0


def cmd_bench(args) -> int:
    b = builtin(args.model)
    ests = [e for e in args.estimators.split(",") if e]
    cfg = AdamConfig(lr=args.lr, iters=args.iters, mc_samples=args.mc_samples, seed=args.seed)
    report = bench(b, ests, cfg, k=args.k, variance_k=args.variance_k,
                   time_budget=args.budget or None, out_dir=args.out)
    for label in report.elbo_series:
        print(f"{label}: final objective {fmt(report.final_objective(label))}")
    return 0


def cmd_oracle(args) -> int:
    p = _read(args.file)
    res = quadrature_expectation(p, _floats(args.theta), _cfg(args.eta))
    print(f"expectation: {fmt(res.value)}")
    print(f"widening_delta: {fmt(res.widening_delta)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smoothppl", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("typecheck", help="infer the trace type and type of a program")
    t.add_argument("--system", choices=("basic", "poly", "sgd", "unif"), default="basic")
    t.add_argument("file")
    t.set_defaults(func=cmd_typecheck)

    for name, fn, helptext in (("eval", cmd_eval, "evaluate on one trace"),
                               ("grad", cmd_grad, "parameter gradient on one trace")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("file")
        e.add_argument("--theta", default="")
        e.add_argument("--trace", default="")
        e.add_argument("--eta", type=float, help="use the smoothed semantics with this eta")
        e.add_argument("--internal", action="store_true", help="accept compiler output with sigma nodes")
        if name == "eval":
            e.add_argument("--weights", action="store_true", help="also print the trace density")
        else:
            e.add_argument("--check", type=float, metavar="H", help="compare with central differences of step H")
        e.set_defaults(func=fn)

    s = sub.add_parser("smooth", help="compile conditionals into sigmoid form")
    s.add_argument("file")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_smooth)

    o = sub.add_parser("optimize", help="minimise the expected value of a program")
    o.add_argument("file")
    o.add_argument("--estimator", choices=("reparam", "smooth", "score"), default="smooth")
    o.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    o.add_argument("--lr", type=float, default=0.001)
    o.add_argument("--iters", type=int, default=1000)
    o.add_argument("--mc-samples", type=int, default=16)
    o.add_argument("--eta", type=float, default=0.15)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--schedule", help="rm:C or const:G (sgd only)")
    o.add_argument("--theta0")
    o.add_argument("--out", default="traj.csv")
    o.set_defaults(func=cmd_optimize)

    b = sub.add_parser("bench", help="run the estimator comparison on a built-in model")
    b.add_argument("--model", choices=BUILTIN_NAMES, required=True)
    b.add_argument("--estimators", default="smooth:0.1,smooth:0.15,smooth:0.2,reparam,score")
    b.add_argument("--iters", type=int, default=5000)
    b.add_argument("--lr", type=float, default=0.001)
    b.add_argument("--mc-samples", type=int, default=16)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--k", type=int, default=200, help="objective samples per checkpoint")
    b.add_argument("--variance-k", type=int, default=1000, help="gradient samples per checkpoint")
    b.add_argument("--budget", type=float, default=1.0, help="seconds per estimator for timing, 0 skips")
    b.add_argument("--out", default="bench-out")
    b.set_defaults(func=cmd_bench)

    q = sub.add_parser("oracle", help="quadrature expectation for traces of length at most 2")
    q.add_argument("file")
    q.add_argument("--theta", default="")
    q.add_argument("--eta", type=float)
    q.set_defaults(func=cmd_oracle)
    return ap


_HANDLED = (CliError, S.ParseError, TypeCheckError, EvaluationError, DomainError, CompileError,
            EstimatorError, DivergenceError, QuadratureError, ValueError)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _HANDLED as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
