"""Synchronization index sets and stepsize schedules.

A sync schedule is a sorted set of steps at which worker iterates are
averaged; its quality is measured by the gap, the largest distance between
consecutive indices (with 0 prepended, since all workers start aligned).
Stepsize schedules cover the decaying schedule required by the convergence
bounds and the two families used in the experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def gap(indices) -> int:
    """Largest difference between consecutive members of a sorted set."""
    seq = list(indices)
    if len(seq) < 2:
        raise ValueError("gap requires at least two indices")
    widest = 0
    for prev, cur in zip(seq, seq[1:]):
        if cur < prev:
            raise ValueError("indices must be sorted ascending")
        widest = max(widest, cur - prev)
    return widest


@dataclass(frozen=True)
class SyncSchedule:
    """Synchronization steps for a run of T steps.

    The horizon T must itself be a synchronization index, every index lies
    in [1, T], and the gap of {0} union indices is at most H.
    """

    T: int
    indices: tuple
    H: int

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "_lookup", frozenset(idx))
        if self.T < 1:
            raise ValueError("horizon must be >= 1")
        if not idx or idx[0] < 1 or idx[-1] > self.T:
            raise ValueError("synchronization indices must lie in [1, T]")
        if self.T not in self._lookup:
            raise ValueError("the horizon T must be a synchronization index")
        if gap((0,) + idx) > self.H:
            raise ValueError(f"schedule gap exceeds declared bound H={self.H}")

    def is_sync(self, t) -> bool:
        return t in self._lookup

    def __len__(self):
        return len(self.indices)


def regular_sync_schedule(T, H) -> SyncSchedule:
    """Every H steps plus the horizon: {H, 2H, ...} union {T}."""
    if H < 1 or H > T:
        raise ValueError("require 1 <= H <= T")
    idx = list(range(H, T + 1, H))
    if idx[-1] != T:
        idx.append(T)
    return SyncSchedule(T=T, indices=tuple(idx), H=H)


@dataclass(frozen=True)
class TheoremDecayStep:
    """eta_t = 4 / (mu (a + t)); the schedule the convergence bounds assume.

    Validity of the shift (a > max{16 kappa, H} for synchronous runs, with
    H replaced by H + tau for delayed runs) is checked at run construction
    where the curvature is known; see `validate_shift`.
    """

    mu: float
    a: float

    def __post_init__(self):
        if self.mu <= 0.0 or self.a <= 0.0:
            raise ValueError("mu and a must be positive")

    def eta(self, t) -> float:
        if t < 0:
            raise ValueError("step index must be >= 0")
        return 4.0 / (self.mu * (self.a + t))


@dataclass(frozen=True)
class ConstantStep:
    """eta_t = 32 c, the constant family of the experiment grid."""

    c: float

    def __post_init__(self):
        if self.c <= 0.0:
            raise ValueError("c must be positive")

    def eta(self, t) -> float:
        if t < 0:
            raise ValueError("step index must be >= 0")
        return 32.0 * self.c


@dataclass(frozen=True)
class ExperimentDecayStep:
    """eta_t = min(cap, c n / (t + 1)), the decaying experiment family."""

    c: float
    n: int
    cap: float = field(default=32.0)

    def __post_init__(self):
        if self.c <= 0.0 or self.n < 1 or self.cap <= 0.0:
            raise ValueError("c, n and cap must be positive")

    def eta(self, t) -> float:
        if t < 0:
            raise ValueError("step index must be >= 0")
        return min(self.cap, self.c * self.n / (t + 1))


StepSchedule = TheoremDecayStep | ConstantStep | ExperimentDecayStep


def stepsize(t, schedule) -> float:
    """Stepsize eta_t of any schedule kind."""
    return schedule.eta(t)


def validate_shift(schedule, kappa, window) -> None:
    """Check a > max{16 kappa, window} for a decaying schedule.

    `window` is H for synchronous runs and H + tau when reads may be
    delayed by up to tau steps.  Schedules without a shift pass trivially.
    """
    if isinstance(schedule, TheoremDecayStep):
        threshold = max(16.0 * kappa, float(window))
        if not schedule.a > threshold:
            raise ValueError(
                f"shift a={schedule.a} must exceed max(16*kappa, window)="
                f"{threshold} (kappa={kappa}, window={window})"
            )
