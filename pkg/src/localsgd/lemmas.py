"""Executable checks of the inequalities behind the convergence bounds.

Each check runs a Monte-Carlo (or deterministic) experiment and compares
the measured statistic against the corresponding closed-form bound.  The
inequalities hold in expectation, so the statistical checks are one-sided
tests at three standard errors.  Noise constants entering a bound are
estimated from held-out runs of the same configuration so the tested runs
never calibrate their own bound.

Checks:
  variance-reduction   averaging K independent sampled gradients divides
                       the gradient variance by K
  deviation-bound      workers stray from their average by at most
                       4 eta_t^2 G^2 H^2 in mean square
  perturbed-step       the per-step descent inequality of the averaged
                       sequence
  weighted-recursion   the weighted-sum consequence of the per-step
                       recursion (deterministic)
  async-deviation      the delayed variant of the deviation bound with
                       (H + tau)^2 and constant 12
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .asynchronous import measured_delay, run_async_local_sgd
from .averaging import sum_of_weights
from .schedules import TheoremDecayStep
from .sync import run_local_sgd_ensemble


@dataclass
class CheckReport:
    """Outcome of one inequality check.

    `passed` is derived from the stored numbers: statistic <= bound +
    3 * stderr.  `margin` is bound - statistic.  worst_step marks where
    the margin was tightest for per-step checks.
    """

    check: str
    trials: int
    statistic: float
    bound: float
    stderr: float
    worst_step: int | None = None
    detail: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.bound - self.statistic

    @property
    def passed(self) -> bool:
        return self.statistic <= self.bound + 3.0 * self.stderr

    def row(self) -> dict:
        return {
            "check": self.check,
            "trials": self.trials,
            "statistic": self.statistic,
            "bound": self.bound,
            "margin": self.margin,
            "stderr": self.stderr,
            "passed": int(self.passed),
        }

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        where = f" at t={self.worst_step}" if self.worst_step is not None else ""
        return (
            f"[{verdict}] {self.check}: statistic {self.statistic:.6g} "
            f"vs bound {self.bound:.6g} (margin {self.margin:.3g}, "
            f"stderr {self.stderr:.2g}){where}"
        )


def _run_seeds(seed, count):
    """Deterministic per-run integer seeds derived from a master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def check_variance_reduction(objective, states, trials, seed=0) -> CheckReport:
    """Sampled aggregate gradient concentrates at rate sigma^2 / K.

    With the K worker iterates frozen, resamples the component indices
    `trials` times and compares the mean squared aggregate noise to
    max_k Var_k / K, where Var_k is the exact enumeration variance at
    worker k.  The exactly computable value (1/K^2) sum_k Var_k is also
    reported, since the aggregate noise of independent draws is the sum of
    the per-worker variances.
    """
    if trials < 100:
        raise ValueError("need at least 100 resampling trials")
    states = [np.asarray(x, dtype=np.float64) for x in states]
    K = len(states)
    rng = np.random.default_rng(seed)

    variances = [objective.variance_at(x) for x in states]
    bound = max(variances) / K
    exact_statistic = sum(variances) / K**2

    gbar = np.mean([objective.gradient(x) for x in states], axis=0)
    idx = rng.integers(0, objective.n, size=(trials, K))
    agg = np.zeros((trials, objective.d))
    for k, x in enumerate(states):
        agg += objective.component_gradients_at(x, idx[:, k])
    agg /= K
    noise_sq = np.sum((agg - gbar) ** 2, axis=1)

    statistic = float(noise_sq.mean())
    stderr = float(noise_sq.std(ddof=1) / np.sqrt(trials))
    return CheckReport(
        check="variance-reduction",
        trials=trials,
        statistic=statistic,
        bound=bound,
        stderr=stderr,
        detail={"exact_statistic": exact_statistic, "per_worker_variances": variances},
    )


def _require_decaying(config, min_shift):
    if not isinstance(config.steps, TheoremDecayStep):
        raise ValueError("this check requires the decaying stepsize schedule")
    if config.steps.a < min_shift:
        raise ValueError(
            f"stepsize shift a={config.steps.a} is below the required {min_shift}"
        )


def _heldout_G_sq(config, objective, seed, runs):
    heldout = run_local_sgd_ensemble(
        config,
        objective,
        _run_seeds(seed + 0x5EED, max(32, runs // 8)),
        track_second_moment=True,
    )
    return heldout.max_second_moment


def check_deviation_bound(config, objective, constants, runs, seed=0) -> CheckReport:
    """Mean squared worker deviation stays below 4 eta_t^2 G^2 H^2.

    Runs `runs` seeded simulations, averages (1/K) sum_k ||xbar_t - x_t^k||^2
    per step, and compares against the bound at every step; the reported
    numbers belong to the step with the smallest margin.  G^2 comes from
    held-out runs of the same configuration.
    """
    H = config.sync.H
    _require_decaying(config, H)
    G_sq = _heldout_G_sq(config, objective, seed, runs)

    result = run_local_sgd_ensemble(
        config, objective, _run_seeds(seed, runs), record_deviations=True
    )
    dev = result.deviations  # (runs, T+1)
    stats = dev.mean(axis=0)
    stderrs = dev.std(axis=0, ddof=1) / np.sqrt(runs)

    worst = None
    for t in range(config.T + 1):
        eta = config.steps.eta(t)
        bound_t = 4.0 * eta**2 * G_sq * H**2
        entry = (bound_t - stats[t] + 3.0 * stderrs[t], t, bound_t)
        if worst is None or entry < worst:
            worst = entry
    _, t_worst, bound_worst = worst
    return CheckReport(
        check="deviation-bound",
        trials=runs,
        statistic=float(stats[t_worst]),
        bound=float(bound_worst),
        stderr=float(stderrs[t_worst]),
        worst_step=t_worst,
        detail={"G_sq": G_sq, "H": H},
    )


def check_perturbed_inequality(
    config, objective, reference, constants, runs, seed=0, max_points=64
) -> CheckReport:
    """Per-step descent inequality of the averaged sequence.

    For each checked step t the Monte-Carlo means of both sides are
    compared:

        E ||xbar_{t+1} - x*||^2  <=  (1 - mu eta_t) E ||xbar_t - x*||^2
                                     + eta_t^2 E ||g_t - gbar_t||^2
                                     - eta_t / 2 E (f(xbar_t) - f*)
                                     + 2 eta_t L dev_t

    using a paired one-sided test at 3 standard errors of the difference.
    Requires eta_0 <= 1/(4L).
    """
    if config.steps.eta(0) > 1.0 / (4.0 * constants.L):
        raise ValueError("stepsize too large: eta_0 must be <= 1/(4L)")

    result = run_local_sgd_ensemble(
        config,
        objective,
        _run_seeds(seed, runs),
        ref_point=reference.x_star,
        record_deviations=True,
        record_noise=True,
        record_f_xbar=True,
    )
    mu, L = constants.mu, constants.L
    f_star = reference.f_star

    T = config.T
    points = np.unique(np.linspace(0, T - 1, min(T, max_points), dtype=np.int64))
    worst = None
    for t in points:
        eta = config.steps.eta(int(t))
        lhs = result.dist_sq[:, t + 1]
        rhs = (
            (1.0 - mu * eta) * result.dist_sq[:, t]
            + eta**2 * result.noise_sq[:, t]
            - 0.5 * eta * (result.f_xbar[:, t] - f_star)
            + 2.0 * eta * L * result.deviations[:, t]
        )
        diff = lhs - rhs
        mean_diff = float(diff.mean())
        stderr = float(diff.std(ddof=1) / np.sqrt(runs))
        entry = (3.0 * stderr - mean_diff, int(t), float(lhs.mean()), float(rhs.mean()), stderr)
        if worst is None or entry[0] < worst[0]:
            worst = entry
    _, t_worst, lhs_mean, rhs_mean, stderr = worst
    return CheckReport(
        check="perturbed-step",
        trials=runs,
        statistic=lhs_mean,
        bound=rhs_mean,
        stderr=stderr,
        worst_step=t_worst,
        detail={"checked_points": len(points)},
    )


def check_recursion_lemma(a, mu, A, B, C, T, sequence_builder) -> CheckReport:
    """Weighted-sum consequence of the per-step recursion, deterministically.

    The builder returns nonnegative sequences (a_t) of length T+1 and
    (e_t) of length T satisfying

        a_{t+1} <= (1 - mu eta_t) a_t - eta_t A e_t + eta_t^2 B + eta_t^3 C

    for eta_t = 4/(mu (a + t)); any violation is reported with its first
    step.  The check then verifies

        (A / S_T) sum_t w_t e_t <= mu a^3 a_0 / (4 S_T)
                                   + 2 T (T + 2a) B / (mu S_T)
                                   + 16 T C / (mu^2 S_T)

    for the quadratic weights w_t = (a + t)^2.
    """
    if A <= 0 or B < 0 or C < 0 or mu <= 0 or a <= 1:
        raise ValueError("require A > 0, B, C >= 0, mu > 0, a > 1")
    eta = 4.0 / (mu * (a + np.arange(T, dtype=np.float64)))
    a_seq, e_seq = sequence_builder(T, eta)
    a_seq = np.asarray(a_seq, dtype=np.float64)
    e_seq = np.asarray(e_seq, dtype=np.float64)
    if a_seq.shape != (T + 1,) or e_seq.shape != (T,):
        raise ValueError("builder must return sequences of lengths T+1 and T")
    if (a_seq < 0).any() or (e_seq < 0).any():
        raise ValueError("sequences must be nonnegative")

    for t in range(T):
        allowed = (1.0 - mu * eta[t]) * a_seq[t] - eta[t] * A * e_seq[t] \
            + eta[t] ** 2 * B + eta[t] ** 3 * C
        if a_seq[t + 1] > allowed + 1e-12 * max(1.0, abs(allowed)):
            raise ValueError(
                f"builder violates the recursion at t={t}: "
                f"a_(t+1)={a_seq[t + 1]} > {allowed}"
            )

    w = (a + np.arange(T, dtype=np.float64)) ** 2
    S_T = sum_of_weights(a, T)
    lhs = A * float(w @ e_seq) / S_T
    rhs = mu * a**3 * float(a_seq[0]) / (4.0 * S_T) \
        + 2.0 * T * (T + 2.0 * a) * B / (mu * S_T) \
        + 16.0 * T * C / (mu**2 * S_T)
    return CheckReport(
        check="weighted-recursion",
        trials=1,
        statistic=float(lhs),
        bound=float(rhs),
        stderr=0.0,
    )


def make_equality_builder(mu, A, B, C, a0=1.0, drain=1.0, slack=0.0, slack_seed=0):
    """Builder driving the per-step recursion at (or just below) equality.

    At every step the error term e_t drains a share `drain` in (0, 1] of
    the contracted a_t, and the next value is

        a_{t+1} = [(1 - mu eta_t) a_t - eta_t A e_t + eta_t^2 B
                   + eta_t^3 C] * (1 - s_t)

    with s_t = 0 at equality or s_t drawn uniformly from [0, slack] to
    exercise the recursion with nonnegative slack.  All sequence values
    stay nonnegative.
    """
    if not 0.0 < drain <= 1.0:
        raise ValueError("drain must be in (0, 1]")
    if not 0.0 <= slack < 1.0:
        raise ValueError("slack must be in [0, 1)")

    def build(T, eta):
        rng = np.random.default_rng(slack_seed)
        a_seq = np.empty(T + 1)
        e_seq = np.empty(T)
        a_seq[0] = a0
        for t in range(T):
            contracted = (1.0 - mu * eta[t]) * a_seq[t]
            inflow = eta[t] ** 2 * B + eta[t] ** 3 * C
            e_seq[t] = drain * contracted / (eta[t] * A)
            allowed = contracted - eta[t] * A * e_seq[t] + inflow
            s = slack * rng.random() if slack else 0.0
            a_seq[t + 1] = allowed * (1.0 - s)
        return a_seq, e_seq

    return build


def check_async_deviation(config, delay, objective, constants, runs, seed=0) -> CheckReport:
    """Deviation bound under delayed writes: 12 eta_t^2 G^2 (H + tau)^2.

    Runs asynchronous simulations with every sequence synchronizing on the
    run's schedule, verifies the realized staleness never exceeds the
    declared tau, and compares the per-step mean deviation of sequences
    from the virtual average against the bound.  G^2 comes from held-out
    runs of the same configuration.
    """
    H = config.sync.H
    _require_decaying(config, H + delay.tau)
    schedules = [config.sync] * config.K
    seeds = _run_seeds(seed, runs)

    n_heldout = max(32, runs // 8)
    G_sq = 0.0
    for s in _run_seeds(seed + 0x5EED, n_heldout):
        trace, _ = run_async_local_sgd(
            replace(config, seed=s), schedules, delay, objective,
            track_second_moment=True,
        )
        G_sq = max(G_sq, trace.max_second_moment)

    T = config.T
    dev = np.empty((runs, T + 1))
    worst_staleness = 0
    for r, s in enumerate(seeds):
        trace, log = run_async_local_sgd(replace(config, seed=s), schedules, delay, objective)
        dev[r] = trace.deviations
        worst_staleness = max(worst_staleness, measured_delay(log))
    if worst_staleness > delay.tau:
        raise RuntimeError(
            f"realized staleness {worst_staleness} exceeds declared tau={delay.tau}"
        )

    stats = dev.mean(axis=0)
    stderrs = dev.std(axis=0, ddof=1) / np.sqrt(runs)
    worst = None
    for t in range(T + 1):
        eta = config.steps.eta(t)
        bound_t = 12.0 * eta**2 * G_sq * (H + delay.tau) ** 2
        entry = (bound_t - stats[t] + 3.0 * stderrs[t], t, bound_t)
        if worst is None or entry < worst:
            worst = entry
    _, t_worst, bound_worst = worst
    return CheckReport(
        check="async-deviation",
        trials=runs,
        statistic=float(stats[t_worst]),
        bound=float(bound_worst),
        stderr=float(stderrs[t_worst]),
        worst_step=t_worst,
        detail={"G_sq": G_sq, "H": H, "tau": delay.tau,
                "worst_staleness": worst_staleness},
    )
