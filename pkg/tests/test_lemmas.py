import itertools

import numpy as np
import pytest

from localsgd import (
    DelayModel,
    ProblemConstants,
    RecordFlags,
    RunConfig,
    TheoremDecayStep,
    check_async_deviation,
    check_deviation_bound,
    check_perturbed_inequality,
    check_recursion_lemma,
    check_variance_reduction,
    make_quadratic,
    regular_sync_schedule,
)
from localsgd.harness import reference_for
from localsgd.lemmas import make_equality_builder


def theorem_config(obj, const, K, T, H, window=None, seed=0, b=1):
    a = max(16.0 * const.kappa, float(window if window is not None else H)) + 1.0
    return RunConfig(
        K=K, T=T, b=b, sync=regular_sync_schedule(T, H),
        steps=TheoremDecayStep(mu=const.mu, a=a), seed=seed, x0=np.zeros(obj.d),
        record=RecordFlags(virtual=False, f_values=False),
    )


# --- variance reduction -------------------------------------------------


def test_variance_reduction_noise_free():
    obj, _, _ = make_quadratic(d=4, mu=1.0, L=2.0, n=8, noise=0.0, seed=1)
    states = [np.ones(4) * k for k in range(3)]
    report = check_variance_reduction(obj, states, trials=200, seed=0)
    assert report.statistic <= 1e-12
    assert report.passed


def test_variance_reduction_single_worker(quad10):
    obj, _, _ = quad10
    report = check_variance_reduction(obj, [np.zeros(obj.d)], trials=2000, seed=1)
    # K=1: the statistic estimates the per-point variance itself
    assert abs(report.statistic - obj.variance_at(np.zeros(obj.d))) <= 3 * report.stderr
    assert report.passed


def test_variance_reduction_independent_sum_identity(logistic50):
    rng = np.random.default_rng(7)
    K = 8
    states = [rng.standard_normal(logistic50.d) * 0.5 for _ in range(K)]
    report = check_variance_reduction(logistic50, states, trials=3000, seed=2)
    assert report.passed
    # proof-step identity: the exact aggregate noise is (1/K^2) sum_k Var_k
    expected = sum(logistic50.variance_at(x) for x in states) / K**2
    assert abs(report.detail["exact_statistic"] - expected) <= 1e-10

    # brute-force oracle on a tiny problem: enumerate all n^K index tuples
    tiny, _, _ = make_quadratic(d=2, mu=1.0, L=2.0, n=3, noise=0.8, seed=3)
    pts = [np.zeros(2), np.ones(2)]
    gbar = np.mean([tiny.gradient(x) for x in pts], axis=0)
    total = 0.0
    for combo in itertools.product(range(3), repeat=2):
        g = np.mean([tiny.component_gradient(x, i) for x, i in zip(pts, combo)], axis=0)
        total += float((g - gbar) @ (g - gbar))
    brute = total / 3**2
    identity = sum(tiny.variance_at(x) for x in pts) / 4
    assert abs(brute - identity) <= 1e-10


def test_variance_reduction_rejects_few_trials(quad10):
    obj, _, _ = quad10
    with pytest.raises(ValueError, match="100"):
        check_variance_reduction(obj, [np.zeros(obj.d)], trials=50)


# --- synchronous deviation ----------------------------------------------


def test_deviation_bound_quadratic(quad10):
    obj, _, const = quad10
    config = theorem_config(obj, const, K=2, T=48, H=4)
    report = check_deviation_bound(config, obj, const, runs=1000, seed=0)
    assert report.passed
    assert report.margin > 0


def test_deviation_zero_at_sync_and_for_every_step_schedule(quad10):
    obj, _, const = quad10
    config = theorem_config(obj, const, K=4, T=24, H=1)
    from localsgd.sync import run_local_sgd_ensemble

    result = run_local_sgd_ensemble(config, obj, [1, 2, 3], record_deviations=True)
    assert np.max(result.deviations) <= 1e-24  # H=1: synchronized every step
    report = check_deviation_bound(config, obj, const, runs=200, seed=1)
    assert report.statistic == 0.0
    assert report.passed


def test_deviation_bound_requires_decaying_steps(quad10):
    obj, _, const = quad10
    config = theorem_config(obj, const, K=2, T=16, H=4)
    from localsgd import ConstantStep

    config.steps = ConstantStep(c=0.001)
    with pytest.raises(ValueError, match="decaying"):
        check_deviation_bound(config, obj, const, runs=100)


# --- perturbed step inequality ------------------------------------------


def test_perturbed_inequality_deterministic_contraction():
    # one worker, one component: the inequality reduces to the closed-form
    # contraction ||x_{t+1}-x*||^2 <= (1-mu eta)||x_t-x*||^2 - eta/2 (f-f*)
    obj, ref, const = make_quadratic(d=3, mu=1.0, L=2.0, n=1, noise=0.0, seed=5)
    config = theorem_config(obj, const, K=1, T=32, H=1)
    report = check_perturbed_inequality(config, obj, ref, const, runs=100, seed=0)
    assert report.passed

    # direct closed-form verification of the same reduction
    eta = config.steps.eta(0)
    x = np.array([1.0, -2.0, 0.5]) + ref.x_star
    x_next = x - eta * obj.gradient(x)
    lhs = float((x_next - ref.x_star) @ (x_next - ref.x_star))
    rhs = (1 - const.mu * eta) * float((x - ref.x_star) @ (x - ref.x_star)) \
        - 0.5 * eta * (obj.value(x) - ref.f_star)
    assert lhs <= rhs + 1e-12


def test_perturbed_inequality_noise_free_with_drift(quad10):
    obj, ref, const = make_quadratic(d=10, mu=1.0, L=4.0, n=16, noise=0.0, seed=9)
    config = theorem_config(obj, const, K=4, T=40, H=5)
    report = check_perturbed_inequality(config, obj, ref, const, runs=100, seed=3)
    assert report.passed


def test_perturbed_inequality_logistic_fixture(logistic50):
    mu, L = logistic50.curvature()
    const = ProblemConstants(L=L, mu=mu, sigma_sq=0.0, G_sq=0.0)
    ref = reference_for(logistic50, tolerance=1e-10)
    config = RunConfig(
        K=4, T=48, b=1, sync=regular_sync_schedule(48, 4),
        steps=TheoremDecayStep(mu=mu, a=max(16.0 * L / mu, 4.0) + 1.0),
        seed=0, x0=np.zeros(logistic50.d),
        record=RecordFlags(virtual=False, f_values=False),
    )
    report = check_perturbed_inequality(config, logistic50, ref, const,
                                        runs=1000, seed=0)
    assert report.passed


def test_perturbed_inequality_rejects_large_steps(quad10):
    obj, ref, const = quad10
    config = theorem_config(obj, const, K=2, T=16, H=2)
    config.steps = TheoremDecayStep(mu=const.mu, a=max(16 * const.kappa, 2) + 1)
    big = RunConfig(**{**config.__dict__, "steps": None})
    from localsgd import ConstantStep

    big.steps = ConstantStep(c=1.0)  # eta = 32 >> 1/(4L)
    with pytest.raises(ValueError, match="stepsize too large"):
        check_perturbed_inequality(big, obj, ref, const, runs=100)


# --- weighted recursion --------------------------------------------------


def test_recursion_zero_error_terms():
    report = check_recursion_lemma(
        a=17.0, mu=1.0, A=1.0, B=0.0, C=0.0, T=50,
        sequence_builder=lambda T, eta: (np.zeros(T + 1), np.zeros(T)),
    )
    assert report.statistic == 0.0
    assert report.passed


def test_recursion_equality_builder():
    builder = make_equality_builder(mu=1.0, A=1.0, B=0.0, C=0.0, a0=1.0)
    report = check_recursion_lemma(a=17.0, mu=1.0, A=1.0, B=0.0, C=0.0, T=200,
                                   sequence_builder=builder)
    assert report.passed
    assert report.statistic > 0.0


def test_recursion_with_inflow_and_slack():
    for slack in (0.0, 0.3):
        builder = make_equality_builder(mu=0.5, A=0.5, B=2.0, C=5.0, a0=2.0,
                                        drain=0.9, slack=slack, slack_seed=4)
        report = check_recursion_lemma(a=40.0, mu=0.5, A=0.5, B=2.0, C=5.0,
                                       T=300, sequence_builder=builder)
        assert report.passed


def test_recursion_detects_violations():
    def cheating(T, eta):
        a_seq = np.ones(T + 1)  # never contracts: violates immediately
        e_seq = np.full(T, 10.0)
        return a_seq, e_seq

    with pytest.raises(ValueError, match="t=0"):
        check_recursion_lemma(a=17.0, mu=1.0, A=1.0, B=0.0, C=0.0, T=10,
                              sequence_builder=cheating)


# --- asynchronous deviation ----------------------------------------------


def test_async_deviation_zero_delay_matches_loose_sync_bound(quad10):
    obj, _, const = quad10
    config = theorem_config(obj, const, K=2, T=32, H=4, window=4)
    report = check_async_deviation(config, DelayModel("zero"), obj, const,
                                   runs=300, seed=0)
    assert report.passed
    assert report.detail["worst_staleness"] == 0


def test_async_deviation_single_worker(quad10):
    obj, _, const = quad10
    config = theorem_config(obj, const, K=1, T=24, H=4, window=6)
    report = check_async_deviation(config, DelayModel("fixed", tau=2), obj, const,
                                   runs=150, seed=1)
    assert report.statistic == 0.0
    assert report.passed


def test_async_deviation_fixed_delay(quad10):
    obj, _, const = quad10
    config = theorem_config(obj, const, K=2, T=48, H=4, window=6)
    report = check_async_deviation(config, DelayModel("fixed", tau=2), obj, const,
                                   runs=1000, seed=2)
    assert report.passed
    assert report.margin > 0


# --- reproducibility -------------------------------------------------------


def test_reports_reproduce_bit_for_bit(quad10):
    obj, ref, const = quad10
    config = theorem_config(obj, const, K=2, T=24, H=4)
    first = check_deviation_bound(config, obj, const, runs=150, seed=9)
    second = check_deviation_bound(config, obj, const, runs=150, seed=9)
    assert (first.statistic, first.bound, first.stderr, first.worst_step) == \
        (second.statistic, second.bound, second.stderr, second.worst_step)

    states = [np.full(obj.d, 0.3), np.full(obj.d, -0.2)]
    va = check_variance_reduction(obj, states, trials=500, seed=4)
    vb = check_variance_reduction(obj, states, trials=500, seed=4)
    assert (va.statistic, va.stderr) == (vb.statistic, vb.stderr)
