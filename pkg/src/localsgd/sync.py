"""Synchronous local SGD with periodic parameter averaging.

K workers evolve iterates in parallel; at every step each worker takes a
mini-batch gradient step on components drawn uniformly with replacement,
and at every synchronization index all workers are reset to the average of
their post-step iterates.  Averaging every step recovers mini-batch SGD
with batch size K*b; averaging only at the horizon is one-shot averaging.

Each worker draws from its own random substream spawned from the master
seed, so runs are reproducible and the every-step schedule is coupled
sample-for-sample with the mini-batch baseline.  The trace records the
virtual averaged sequence (the mean of the worker iterates, which evolves
exactly like SGD driven by the aggregate gradient), the four running
averages of that sequence, and the mean squared deviation of workers from
it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import SCHEMES, RunningAverage, ShiftedQuadraticAverage
from .schedules import SyncSchedule, TheoremDecayStep, validate_shift


@dataclass
class RecordFlags:
    """What a run should trace; heavier recordings are off by default."""

    virtual: bool = True         # virtual average per step
    deviations: bool = True      # (1/K) sum_k ||xbar - x_k||^2 per step
    f_values: bool = True        # objective value of the four running averages
    iterates: bool = False       # full (K, T+1, d) worker trajectories
    noise_norms: bool = False    # ||g_t - gbar_t||^2 per step (costs K full gradients)
    f_virtual: bool = False      # f(xbar_t) per step
    f_every: int | None = None   # extra evaluation stride; default ceil(T/1000)


@dataclass
class RunConfig:
    K: int
    T: int
    b: int
    sync: SyncSchedule
    steps: object
    seed: int
    x0: np.ndarray
    record: RecordFlags = field(default_factory=RecordFlags)

    def __post_init__(self):
        if self.K < 1 or self.T < 1 or self.b < 1:
            raise ValueError("require K >= 1, T >= 1, b >= 1")
        if self.sync.T != self.T:
            raise ValueError("sync schedule horizon does not match T")
        self.x0 = np.asarray(self.x0, dtype=np.float64)


@dataclass
class WorkerState:
    k: int
    x: np.ndarray
    rng: np.random.Generator


class RunTrace:
    """Recorded quantities of one run; arrays are indexed by step."""

    def __init__(self, config):
        self.K = config.K
        self.T = config.T
        self.eval_steps = []          # steps at which f values were recorded
        self.f_by_scheme = {kind: [] for kind in SCHEMES}
        self.xbar = []                # virtual average per step (if recorded)
        self.deviations = []
        self.noise_sq = []            # ||g_t - gbar_t||^2, one entry per step t
        self.f_xbar = []
        self.iterates = []            # (T+1) entries of (K, d) (if recorded)
        self.comm_rounds = 0
        self.output_average = None    # shift-a weighted average over t < T
        self.final_averages = {}
        self.final_iterates = None
        self.t_star = None            # set when an accuracy target stopped the run
        self.diverged = False         # iterates left the representable range

    def as_arrays(self):
        """Convert list buffers to arrays (idempotent)."""
        for name in ("xbar", "deviations", "noise_sq", "f_xbar"):
            setattr(self, name, np.asarray(getattr(self, name)))
        self.eval_steps = np.asarray(self.eval_steps, dtype=np.int64)
        self.f_by_scheme = {k: np.asarray(v) for k, v in self.f_by_scheme.items()}
        if isinstance(self.iterates, list) and self.iterates:
            self.iterates = np.asarray(self.iterates).transpose(1, 0, 2)
        return self


def _spawn_worker_rngs(seed, K):
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(K)]


def init_worker_states(config, objective):
    """All workers start at x0 with independent substreams of the seed."""
    if config.x0.shape[-1] != objective.d:
        raise ValueError("x0 dimension does not match the objective")
    rngs = _spawn_worker_rngs(config.seed, config.K)
    return [WorkerState(k=k, x=config.x0.copy(), rng=rngs[k])
            for k in range(config.K)]


def virtual_average(states) -> np.ndarray:
    """Mean of worker iterates, summed in ascending worker order."""
    if isinstance(states, np.ndarray):
        if states.size == 0:
            raise ValueError("no worker states")
        return states.mean(axis=0)
    if not states:
        raise ValueError("no worker states")
    return np.mean([s.x for s in states], axis=0)


def step_once(states, t, config, objective):
    """Advance every worker one local step; no averaging.

    Returns (g_t, gbar_t): the aggregate sampled gradient that actually
    drives the virtual sequence, and its exact conditional mean, the
    aggregate full gradient at the current worker iterates.
    """
    eta = config.steps.eta(t)
    sampled = []
    exact = []
    for state in states:
        idx = state.rng.integers(0, objective.n, size=config.b)
        gk = objective.minibatch_gradient(state.x, idx)
        exact.append(objective.gradient(state.x))
        sampled.append(gk)
        state.x = state.x - eta * gk
    g = np.mean(sampled, axis=0)
    gbar = np.mean(exact, axis=0)
    return g, gbar


def _eval_stride(record, T):
    if record.f_every is not None:
        return max(1, int(record.f_every))
    return max(1, -(-T // 1000))


def run_local_sgd(config, objective, stop_when=None) -> RunTrace:
    """Run synchronous local SGD and record the configured trace.

    Deterministic given config.seed.  Sampling is uniform over the n
    components with replacement, one independent substream per worker.
    `stop_when`, an (eps, f_star) pair, ends the run early at the first
    function-value evaluation where some tracked average is eps-accurate;
    the reached step is stored as trace.t_star.
    """
    if config.x0.shape[-1] != objective.d:
        raise ValueError("x0 dimension does not match the objective")
    if isinstance(config.steps, TheoremDecayStep):
        mu, L = objective.curvature()
        validate_shift(config.steps, L / mu, config.sync.H)

    K, T, b = config.K, config.T, config.b
    record = config.record
    rngs = _spawn_worker_rngs(config.seed, K)
    X = np.tile(config.x0, (K, 1))
    trace = RunTrace(config)
    stride = _eval_stride(record, T)

    shift = config.steps.a if isinstance(config.steps, TheoremDecayStep) else 1.0
    output_avg = ShiftedQuadraticAverage(shift)
    averages = {kind: RunningAverage(kind) for kind in SCHEMES}

    def observe(t, xbar):
        for kind in SCHEMES:
            averages[kind].update(xbar, t)
        if record.virtual:
            trace.xbar.append(xbar)
        if record.deviations:
            trace.deviations.append(float(np.mean(np.sum((X - xbar) ** 2, axis=1))))
        if record.iterates:
            trace.iterates.append(X.copy())
        if record.f_virtual:
            trace.f_xbar.append(objective.value(xbar))
        due = t % stride == 0 or t == T or (t >= 1 and config.sync.is_sync(t))
        if record.f_values and due:
            trace.eval_steps.append(t)
            best = np.inf
            for kind in SCHEMES:
                fval = objective.value(averages[kind].value)
                trace.f_by_scheme[kind].append(fval)
                best = min(best, fval)
            if stop_when is not None and best - stop_when[1] <= stop_when[0]:
                trace.t_star = t
                return True
        return False

    xbar = virtual_average(X)
    hit = observe(0, xbar)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            if hit:
                break
            output_avg.update(xbar, t)
            eta = config.steps.eta(t)
            G = np.empty_like(X)
            for k in range(K):
                idx = rngs[k].integers(0, objective.n, size=b)
                G[k] = objective.minibatch_gradient(X[k], idx)
            if record.noise_norms:
                gbar = np.mean([objective.gradient(X[k]) for k in range(K)], axis=0)
                diff = G.mean(axis=0) - gbar
                trace.noise_sq.append(float(diff @ diff))
            X -= eta * G
            # a run whose iterates blow up cannot recover; stop before the
            # objective evaluation overflows
            if not np.all(np.abs(X) < 1e100):
                trace.diverged = True
                break
            if config.sync.is_sync(t + 1):
                X[:] = X.mean(axis=0)
                trace.comm_rounds += 1
            xbar = virtual_average(X)
            hit = observe(t + 1, xbar)

    trace.output_average = output_avg.value
    trace.final_averages = {kind: averages[kind].value for kind in SCHEMES}
    trace.final_iterates = X
    return trace.as_arrays()


def run_minibatch_sgd(config, objective) -> np.ndarray:
    """Serial mini-batch SGD with batch K*b, coupled to the local runs.

    Consumes the K worker substreams in worker order each step, so its
    sample sequence matches a local SGD run that synchronizes every step.
    Returns the iterate sequence (T+1, d).
    """
    if config.x0.shape[-1] != objective.d:
        raise ValueError("x0 dimension does not match the objective")
    rngs = _spawn_worker_rngs(config.seed, config.K)
    x = config.x0.copy()
    path = [x.copy()]
    for t in range(config.T):
        idx = np.concatenate(
            [rngs[k].integers(0, objective.n, size=config.b) for k in range(config.K)]
        )
        x = x - config.steps.eta(t) * objective.minibatch_gradient(x, idx)
        path.append(x.copy())
    return np.asarray(path)


def iterations_to_accuracy(trace, eps, f_star):
    """Earliest recorded step at which any tracked average is eps-accurate.

    Scans the recorded evaluation steps in order and returns the first t
    where min over the four schemes of f(y_t) - f_star <= eps, or None.
    """
    if eps <= 0.0:
        raise ValueError("target accuracy must be positive")
    steps = trace.eval_steps
    if len(steps) == 0:
        raise ValueError("trace has no recorded function values")
    stacked = np.stack([trace.f_by_scheme[kind] for kind in SCHEMES])
    best = stacked.min(axis=0)
    hits = np.nonzero(best - f_star <= eps)[0]
    if hits.size == 0:
        return None
    return int(steps[hits[0]])


class EnsembleResult:
    """Aggregate statistics over many seeded runs of the same configuration."""

    def __init__(self):
        self.output_average = None   # (S, d)
        self.f_output = None         # (S,)
        self.max_second_moment = 0.0
        self.deviations = None       # (S, T+1)
        self.dist_sq = None          # (S, T+1) squared distance of xbar to ref
        self.noise_sq = None         # (S, T)
        self.f_xbar = None           # (S, T+1)
        self.crossing_step = None    # (S,) first eps-accurate eval step, -1 if never
        self.eval_steps = None


def run_local_sgd_ensemble(
    config,
    objective,
    seeds,
    *,
    ref_point=None,
    track_second_moment=False,
    record_deviations=False,
    record_noise=False,
    record_f_xbar=False,
    accuracy_target=None,
):
    """Run one configuration under many seeds, vectorized across runs.

    Each run r uses the same substream layout as `run_local_sgd` with
    seed=seeds[r] (per-run, per-worker spawned generators with all T draws
    taken in one batch), so single runs agree exactly with the scalar
    engine.  `accuracy_target` is an (eps, f_star) pair enabling the
    crossing-time recording used by speedup measurements.
    """
    if config.x0.shape[-1] != objective.d:
        raise ValueError("x0 dimension does not match the objective")
    if isinstance(config.steps, TheoremDecayStep):
        mu, L = objective.curvature()
        validate_shift(config.steps, L / mu, config.sync.H)

    K, T, b = config.K, config.T, config.b
    S = len(seeds)
    n = objective.n

    # Pre-draw all component indices: (S, K, T, b).  Chunked draws from a
    # PCG64 stream equal one batched draw, which keeps runs coupled to the
    # scalar engine.
    idx = np.empty((S, K, T, b), dtype=np.int64)
    for r, seed in enumerate(seeds):
        for k, ss in enumerate(np.random.SeedSequence(seed).spawn(K)):
            idx[r, k] = np.random.Generator(np.random.PCG64(ss)).integers(
                0, n, size=(T, b)
            )

    X = np.tile(config.x0, (S, K, 1))
    shift = config.steps.a if isinstance(config.steps, TheoremDecayStep) else 1.0
    output_avg = ShiftedQuadraticAverage(shift)

    result = EnsembleResult()
    sync_lookup = config.sync
    stride = _eval_stride(config.record, T)

    averages = None
    crossed = None
    eval_steps = []
    if accuracy_target is not None:
        eps, f_star = accuracy_target
        averages = {kind: RunningAverage(kind) for kind in SCHEMES}
        crossed = np.full(S, -1, dtype=np.int64)

    buffers = {name: [] for name in ("deviations", "dist_sq", "noise_sq", "f_xbar")}

    def observe(t, xbar):
        if record_deviations:
            buffers["deviations"].append(np.mean(np.sum((X - xbar[:, None, :]) ** 2, axis=2), axis=1))
        if ref_point is not None:
            buffers["dist_sq"].append(np.sum((xbar - ref_point) ** 2, axis=1))
        if record_f_xbar:
            buffers["f_xbar"].append(objective.value_many(xbar))
        if averages is not None:
            for kind in SCHEMES:
                averages[kind].update(xbar, t)
            if t % stride == 0 or t == T or (t >= 1 and sync_lookup.is_sync(t)):
                eval_steps.append(t)
                best = np.minimum.reduce(
                    [objective.value_many(averages[kind].value) for kind in SCHEMES]
                )
                hit = (crossed < 0) & (best - f_star <= eps)
                crossed[hit] = t

    xbar = X.mean(axis=1)
    observe(0, xbar)
    for t in range(T):
        output_avg.update(xbar, t)
        if track_second_moment:
            sm = objective.second_moment_many(X)
            result.max_second_moment = max(result.max_second_moment, float(sm.max()))
        eta = config.steps.eta(t)
        G = objective.minibatch_gradient_many(X, idx[:, :, t, :])
        if record_noise:
            gbar = objective.gradient_many(X)
            diff = G.mean(axis=1) - gbar.mean(axis=1)
            buffers["noise_sq"].append(np.sum(diff**2, axis=1))
        X -= eta * G
        if sync_lookup.is_sync(t + 1):
            X[:] = X.mean(axis=1, keepdims=True)
        xbar = X.mean(axis=1)
        observe(t + 1, xbar)

    result.output_average = output_avg.value
    result.f_output = objective.value_many(result.output_average)
    for name, buf in buffers.items():
        if buf:
            setattr(result, name, np.asarray(buf).T)
    if crossed is not None:
        result.crossing_step = crossed
        result.eval_steps = np.asarray(eval_steps)
    return result


