import math

import numpy as np
import pytest
from scipy.special import expit

from smoothppl import syntax as S
from smoothppl.checker import TypeCheckError, check_unif
from smoothppl.models import builtin
from smoothppl.semantics import (Closure, EvaluationError, Evaluator, SmoothingConfig, combine_safe,
                                 eval_measurable, eval_operational, eval_smoothed, evaluate,
                                 is_function, sigma_eta, trace_type)

from conftest import CORPUS, random_traces

M_PRIME = "(if x (sample normal) (add (sample exponential) (sample exponential)))"


def prog(params, body):
    return S.parse_program(f"(program (params {params}) (body {body}))")


class TestSigma:
    def test_half_at_zero(self):
        for eta in (0.01, 0.3, 5.0):
            assert sigma_eta(0.0, SmoothingConfig(eta)) == 0.5

    def test_values(self):
        assert sigma_eta(1.0, SmoothingConfig(0.1)) == pytest.approx(expit(10.0), abs=1e-15)
        assert sigma_eta(1.0, SmoothingConfig(0.1)) == pytest.approx(0.9999546, abs=1e-7)
        assert sigma_eta(-0.2, SmoothingConfig(0.2)) == pytest.approx(0.2689414, abs=1e-7)

    def test_symmetry_and_monotonicity(self):
        x = np.linspace(-5, 5, 1000)
        for eta in (0.05, 0.2, 1.0):
            cfg = SmoothingConfig(eta)
            s = sigma_eta(x, cfg)
            assert np.max(np.abs(s + sigma_eta(-x, cfg) - 1.0)) <= 1e-15
            assert np.all(np.diff(s) >= 0)
            assert np.all((s >= 0) & (s <= 1))

    def test_extreme_arguments(self):
        cfg = SmoothingConfig(0.01)
        assert sigma_eta(1e4, cfg) == 1.0
        assert sigma_eta(-1e4, cfg) == 0.0

    def test_eta_positive(self):
        with pytest.raises(ValueError):
            SmoothingConfig(0.0)


class TestMeasurable:
    def test_ex0g(self):
        assert eval_measurable(builtin("ex0g").program, [0.5], []) == pytest.approx(0.25, abs=1e-12)

    def test_nconv_then_branch(self):
        assert eval_measurable(builtin("nconv").program, [1.0], [-2.0]) == 0.0
        assert eval_measurable(builtin("nconv").program, [1.0], [-1.0]) == 1.0  # guard 0 takes else

    def test_m_prime(self):
        p = prog("(x real)", M_PRIME)
        assert eval_measurable(p, [-1.0], [5.0, 1.0, 2.0]) == 5.0
        assert eval_measurable(p, [1.0], [5.0, 1.0, 2.0]) == 3.0

    def test_trace_mismatch(self):
        with pytest.raises(EvaluationError, match="trace length mismatch"):
            eval_measurable(builtin("nconv").program, [0.0], [])
        with pytest.raises(EvaluationError, match="trace length mismatch"):
            eval_measurable(builtin("nconv").program, [0.0], [0.1, 0.2])

    def test_domain_violation(self):
        p = prog("(p preal)", "(log p)")
        with pytest.raises(EvaluationError, match="domain violation"):
            eval_measurable(p, [-1.0], [])

    def test_batched_matches_scalar(self):
        p = builtin("example1").program
        tr = random_traces(p, 20, 0)
        batch = evaluate(p, [0.3], tr)
        for i in range(20):
            assert batch[i] == eval_measurable(p, [0.3], tr[i])


class TestSmoothed:
    def test_ex0g(self):
        for eta in (0.01, 0.1, 1.0):
            assert eval_smoothed(builtin("ex0g").program, [0.5], [], SmoothingConfig(eta)) == \
                pytest.approx(0.75, abs=1e-12)

    def test_nconv(self):
        p = builtin("nconv").program
        for theta, s in ((0.3, 0.1), (-1.0, 0.4), (0.0, 0.0)):
            cfg = SmoothingConfig(0.1)
            assert eval_smoothed(p, [theta], [s], cfg) == pytest.approx(expit((s + theta) / 0.1), abs=1e-15)

    def test_example_one_at_zero(self):
        assert eval_smoothed(builtin("example1").program, [0.0], [0.0], SmoothingConfig(0.2)) == 0.5

    def test_same_trace_consumption(self, entry):
        n = len(trace_type(entry.program))
        with pytest.raises(EvaluationError, match="trace length mismatch"):
            eval_smoothed(entry.program, entry.theta, np.zeros(n + 1), SmoothingConfig(0.1))

    def test_function_branches_combined(self):
        p = prog("", "(app (if 0 (lam x x) (lam x (mul 2 x))) 4)")
        assert eval_smoothed(p, [], [], SmoothingConfig(0.2)) == 6.0
        assert eval_measurable(p, [], []) == 8.0


class TestCombine:
    def apply(self, f, a):
        return Evaluator([], np.zeros(0)).apply(f, a)

    def test_base(self):
        assert combine_safe(0.5, 0.0, 0.5, 1.0) == 0.5

    def test_functions(self):
        ident = Closure("x", S.Var("x"), {})
        double = Closure("x", S.Mul(S.Const(2.0), S.Var("x")), {})
        c = combine_safe(0.25, ident, 0.75, double)
        assert is_function(c)
        assert self.apply(c, 4.0) == 7.0

    def test_degenerate_weight(self):
        v = Closure("x", S.Add(S.Var("x"), S.Const(1.0)), {})
        w = Closure("x", S.Neg(S.Var("x")), {})
        c = combine_safe(1.0, v, 0.0, w)
        for a in (-2.0, -0.5, 0.0, 1.0, 7.0):
            assert self.apply(c, a) == self.apply(v, a)

    def test_mismatch(self):
        with pytest.raises(EvaluationError, match="type mismatch in combination"):
            combine_safe(0.5, 1.0, 0.5, Closure("x", S.Var("x"), {}))

    def test_bad_weights(self):
        with pytest.raises(EvaluationError):
            combine_safe(0.7, 1.0, 0.7, 2.0)


class TestOperational:
    def test_single_sample(self):
        v, w, lw = eval_operational(prog("", "(sample normal)"), [], [0.0])
        assert v == 0.0
        assert w == pytest.approx(0.3989422804, abs=1e-10)

    def test_product_rule(self):
        v, w, _ = eval_operational(prog("", "(add (sample normal) (sample exponential))"), [], [0.0, 1.0])
        assert v == 1.0
        assert w == pytest.approx(0.3989422804 * math.exp(-1.0), rel=1e-10)

    def test_deterministic(self):
        v, w, lw = eval_operational(builtin("ex0g").program, [0.5], [])
        assert (v, w, lw) == (0.25, 1.0, 0.0)

    def test_zero_weight_outside_support(self):
        _, w, lw = eval_operational(prog("", "(sample exponential)"), [], [-1.0])
        assert w == 0.0 and lw == -math.inf

    def test_function_value(self):
        v, _, _ = eval_operational(prog("", "(lam x (add x 1))"), [], [])
        assert isinstance(v, S.Lam)

    @pytest.mark.parametrize("entry", CORPUS, ids=lambda e: e.name)
    def test_agreement(self, entry):
        p = entry.program
        dists = [s.dist for s in trace_type(p)]
        for t in random_traces(p, 200, 17):
            v, _, lw = eval_operational(p, entry.theta, t)
            assert v == eval_measurable(p, entry.theta, t)
            ref = sum(float(S.log_pdf(d, x)) for d, x in zip(dists, t))
            assert abs(lw - ref) <= 1e-12


class TestSubstitutionLemma:
    @pytest.mark.parametrize("arg", ["1.5", "(mul theta theta)", "(lam u (add u theta))"])
    def test_beta(self, arg):
        body = ("(if (sample normal) (app y 2) (app y (sample logistic)))" if arg.startswith("(lam")
                else "(add (mul y (sample normal)) (if (add y (sample logistic)) y 3))")
        hint = "(y (fun real (trace) real))" if arg.startswith("(lam") else "y"
        redex = prog("(theta real)", f"(app (lam {hint} {body}) {arg})")
        lam = redex.body.fn
        reduced = S.Program(redex.params, S.substitute(lam.body, lam.binder, redex.body.arg))
        assert [s.dist for s in trace_type(reduced)] == [s.dist for s in trace_type(redex)]
        tr = random_traces(redex, 100, 4)
        for theta in (-0.7, 0.4):
            assert np.array_equal(evaluate(redex, [theta], tr), evaluate(reduced, [theta], tr))
            cfg = SmoothingConfig(0.15)
            assert np.array_equal(evaluate(redex, [theta], tr, cfg, True),
                                  evaluate(reduced, [theta], tr, cfg, True))


def _unif_with_guards():
    out = []
    for e in CORPUS:
        try:
            check_unif(e.program)
        except TypeCheckError:
            continue
        if any(isinstance(n, S.If) for n in S.iter_nodes(e.program.body)):
            out.append(e)
    return out


class TestPointwiseConvergence:
    @pytest.mark.parametrize("entry", _unif_with_guards(), ids=lambda e: e.name)
    def test_decreasing_gap(self, entry):
        p = entry.program
        tr = random_traces(p, 2000, 23)
        guards = []
        hard = evaluate(p, entry.theta, tr, guards=guards)
        keep = np.ones(len(tr), dtype=bool)
        for g in guards:
            keep &= np.abs(np.broadcast_to(g, keep.shape)) >= 0.05
        assert keep.sum() > 100
        gaps = [np.abs(evaluate(p, entry.theta, tr[keep], SmoothingConfig(eta), True) - hard[keep])
                for eta in (0.05, 0.01, 0.002)]
        for a, b in zip(gaps, gaps[1:]):
            # strict wherever the larger gap has not underflowed to zero
            assert np.all(b <= a)
            assert np.all(b[a > 0] < a[a > 0])
        assert gaps[-1].max() < 0.01
