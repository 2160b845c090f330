import numpy as np
import pytest

from smoothppl import syntax as S
from smoothppl.checker import TypeCheckError, check_sgd
from smoothppl.estimators import (Estimator, EstimatorError, draw_traces, estimate_reparam,
                                  estimate_score, estimate_smooth, reparam_samples, score_samples,
                                  smooth_samples)
from smoothppl.models import Model, builtin
from smoothppl.quadrature import quadrature_gradient
from smoothppl.semantics import SmoothingConfig, trace_type

from conftest import CORPUS


def model_of(text, params="(theta real)"):
    return Model.from_program(S.parse_program(f"(program (params {params}) (body {text}))"))


def rng(seed):
    return np.random.default_rng(seed)


EX1 = Model.from_program(builtin("example1").program)


class TestSmooth:
    def test_example_one(self):
        cfg = SmoothingConfig(0.05)
        tr = draw_traces(EX1.program, 200_000, rng(1))
        s = smooth_samples(EX1, [0.0], tr, cfg)
        truth = quadrature_gradient(EX1.program, [0.0], cfg).value[0]
        assert abs(s.mean[0] - truth) <= 3 * s.stderr[0]
        assert abs(truth - 0.3989) < 0.002

    def test_constant(self):
        m = model_of("(add 4 (mul 0 (sample normal)))")
        assert list(estimate_smooth(m, [0.2], 100, SmoothingConfig(0.1), rng(0))) == [0.0]

    def test_ex0g(self):
        m = Model.from_program(builtin("ex0g").program)
        for eta in (0.05, 0.3):
            g = estimate_smooth(m, [0.5], 10, SmoothingConfig(eta), rng(0))
            assert g[0] == pytest.approx(0.0, abs=1e-12)
            g = estimate_smooth(m, [2.0], 10, SmoothingConfig(eta), rng(0))
            assert g[0] == pytest.approx(3.0, abs=1e-12)


class TestReparam:
    def test_example_one_biased(self):
        s = reparam_samples(EX1, [1.0], draw_traces(EX1.program, 100_000, rng(2)))
        assert abs(s.mean[0] + 1.0) <= 3 * s.stderr[0] + 1e-12

    def test_agrees_without_conditionals(self):
        m = model_of("(mul (add (sample normal) theta) (exp (mul 0.3 (sample logistic))))")
        a = reparam_samples(m, [0.4], draw_traces(m.program, 100_000, rng(3)))
        b = smooth_samples(m, [0.4], draw_traces(m.program, 100_000, rng(4)), SmoothingConfig(0.1))
        assert abs(a.mean[0] - b.mean[0]) <= 3 * np.hypot(a.stderr[0], b.stderr[0])

    def test_ex0g_else_branch(self):
        m = Model.from_program(builtin("ex0g").program)
        assert list(estimate_reparam(m, [1.0], 5, rng(0))) == [0.0]
        assert list(estimate_reparam(m, [3.0], 5, rng(0))) == [4.0]

    def test_bias_detection(self):
        truth = quadrature_gradient(EX1.program, [0.0]).value[0]
        s = reparam_samples(EX1, [0.0], draw_traces(EX1.program, 100_000, rng(5)))
        gap = abs(s.mean[0] - truth)
        assert gap >= 0.35
        assert gap >= 30 * max(s.stderr[0], 1e-300)


class TestScore:
    def test_constant(self):
        m = model_of("(add 3 (mul 0 (transform normal (lam s (add s theta)))))")
        s = score_samples(m, [0.7], draw_traces(m.program, 50_000, rng(6)))
        assert abs(s.mean[0]) <= 3 * s.stderr[0]

    def test_example_one_unbiased(self):
        s = score_samples(EX1, [0.0], draw_traces(EX1.program, 1_000_000, rng(7)))
        truth = quadrature_gradient(EX1.program, [0.0]).value[0]
        assert abs(truth - 0.3989) < 1e-4
        assert abs(s.mean[0] - truth) <= 3 * s.stderr[0]

    def test_example_one_variance_ratio(self):
        tr = draw_traces(EX1.program, 100_000, rng(8))
        score = score_samples(EX1, [0.0], tr).gradients.var(ddof=1)
        smooth = smooth_samples(EX1, [0.0], tr, SmoothingConfig(0.15)).gradients.var(ddof=1)
        assert score >= 5 * smooth

    def test_location_scale(self):
        m = model_of("(app (lam z (mul z z)) (transform normal (lam s (add (mul sig s) mu))))",
                     "(mu real) (sig preal)")
        s = score_samples(m, [0.5, 1.5], draw_traces(m.program, 400_000, rng(9)))
        # E[z^2] = mu^2 + sig^2
        assert np.all(np.abs(s.mean - np.array([1.0, 3.0])) <= 4 * s.stderr)

    def test_non_affine_rejected(self):
        m = model_of("(transform normal (lam s (add (pow s 3) theta)))")
        with pytest.raises(EstimatorError, match="score estimator unavailable: non-affine transform"):
            estimate_score(m, [0.0], 4, rng(0))

    def test_nonfinite(self):
        m = model_of("(mul theta (exp (mul 1000 (sample normal))))")
        with pytest.raises(EstimatorError, match="non-finite gradient sample"):
            with np.errstate(all="ignore"):
                estimate_reparam(m, [0.0], 64, rng(0))


class TestEstimatorObject:
    def test_parse(self):
        assert Estimator.parse("smooth:0.1") == Estimator("smooth", 0.1)
        assert Estimator.parse("smooth").eta == 0.15
        assert Estimator.parse("score").label == "score"
        with pytest.raises(ValueError):
            Estimator.parse("reparam:0.1")
        with pytest.raises(ValueError):
            Estimator.parse("magic")

    def test_call(self):
        g = Estimator("smooth", 0.1)(EX1, [0.0], 32, rng(1))
        assert g.shape == (1,)


def _no_conditional_models():
    return [
        model_of("(mul (transform normal (lam s (add s theta))) (transform normal (lam s (add s theta))))"),
        model_of("(app (lam z (add (mul z z) (mul theta z))) (transform logistic (lam s (add (mul 2 s) theta))))"),
    ]


class TestPairwiseAgreement:
    @pytest.mark.parametrize("idx", [0, 1])
    def test_no_conditionals(self, idx):
        m = _no_conditional_models()[idx]
        tr = draw_traces(m.program, 200_000, rng(idx + 40))
        a = reparam_samples(m, [0.3], tr)
        b = smooth_samples(m, [0.3], tr, SmoothingConfig(0.2))
        c = score_samples(m, [0.3], tr)
        for x, y in ((a, b), (a, c), (b, c)):
            assert np.all(np.abs(x.mean - y.mean) <= 4 * np.hypot(x.stderr, y.stderr) + 1e-12)


def _sgd_quadrature_entries():
    out = []
    for e in CORPUS:
        try:
            check_sgd(e.program)
        except TypeCheckError:
            continue
        dists = [s.dist.tag for s in trace_type(e.program)]
        if e.program.params and 0 < len(dists) <= 2:
            out.append(e)
    return out


class TestUnbiasedness:
    @pytest.mark.parametrize("entry", _sgd_quadrature_entries(), ids=lambda e: e.name)
    def test_against_quadrature(self, entry):
        m = Model.from_program(entry.program)
        tr = draw_traces(m.program, 100_000, rng(53))
        for shift in (-0.3, 0.0, 0.3):
            theta = entry.theta + shift
            for eta in (0.2, 0.1):
                cfg = SmoothingConfig(eta)
                s = smooth_samples(m, theta, tr, cfg)
                truth = quadrature_gradient(m.program, theta, cfg).value
                assert np.all(np.abs(s.mean - truth) <= 4 * s.stderr + 1e-12), (theta, eta)
