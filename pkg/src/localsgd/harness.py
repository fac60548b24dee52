"""Config-driven experiment runner.

Reads a flat INI config describing a dataset (a LIBSVM file or a synthetic
quadratic), a sweep over (eps, K, H, b) cells, and a communication cost
model, then for every cell grid-searches the stepsize families

    decaying   eta_t = min(32, c n / (t+1))
    constant   eta_t = 32 c

over c = 2^i, measures iterations-to-accuracy (reached when any of the
four tracked averages is eps-accurate), and emits

    results.csv          one row per cell with the winning stepsize,
                         iterations, gradient evaluations, communication
                         rounds, modeled wall-clock, and measured speedup
                         against the (K=1, H=1) baseline
    speedup_theory.csv   the closed-form speedup model over the same grid
    speedup.svg          optional hand-rolled line charts (one panel per
                         eps, speedup vs K, one polyline per H)

Runs are seeded and single-threaded per cell; cells are independent jobs
executed by a worker pool bounded by the LOCALSGD_THREADS environment
variable.  Output bytes depend only on the config.
"""

from __future__ import annotations

import configparser
import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import ceil, log2, sqrt
from pathlib import Path

import numpy as np

from .data import parse_libsvm
from .objectives import (
    LogisticObjective,
    ProblemConstants,
    QuadraticObjective,
    ReferenceSolution,
    make_quadratic,
)
from .schedules import ConstantStep, ExperimentDecayStep, regular_sync_schedule
from .sync import RecordFlags, RunConfig, run_local_sgd
from .theory import speedup

RESULTS_HEADER = [
    "K", "H", "b", "eps", "family", "c",
    "iterations", "grad_evals", "comm_rounds", "wallclock", "speedup",
]
THEORY_HEADER = ["K", "H", "eps", "rho", "speedup_model"]

FAMILIES = ("decaying", "constant")


class ConfigError(ValueError):
    """Invalid or missing experiment configuration; names the field."""


@dataclass
class DatasetSpec:
    kind: str                      # "libsvm" | "quadratic"
    path: str | None = None
    lam: float | None = None       # None means 1/n
    dimension: int | None = None
    d: int = 10
    mu: float = 1.0
    L: float = 4.0
    n: int = 64
    noise: float = 1.0
    seed: int = 7
    f_star: float | None = None
    fstar_tolerance: float = 1e-8


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    eps_list: list
    K_list: list
    H_list: list
    b_list: list
    rho: float = 25.0
    seed: int = 1
    epoch_cap: int = 200
    i_min: int = -20
    i_max: int = 20
    out_dir: str = "results"
    svg: bool = True
    lemmas: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, values in (("eps", self.eps_list), ("K", self.K_list),
                             ("H", self.H_list), ("b", self.b_list)):
            if not values:
                raise ConfigError(f"sweep list {name!r} must be nonempty")
        if any(e <= 0 for e in self.eps_list):
            raise ConfigError("eps values must be positive")
        if any(v < 1 for v in self.K_list + self.H_list + self.b_list):
            raise ConfigError("K, H and b values must be >= 1")
        if self.rho < 1:
            raise ConfigError("cost ratio rho must be >= 1")
        if self.epoch_cap < 1:
            raise ConfigError("epoch_cap must be >= 1")
        if self.i_min > self.i_max:
            raise ConfigError("grid window is empty (i_min > i_max)")


def _parse_list(raw, cast, field_name):
    try:
        return [cast(tok.strip()) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {field_name!r}: {raw!r}")


def load_experiment_config(path) -> ExperimentConfig:
    """Parse the INI experiment config; raises ConfigError with the field."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    if "dataset" not in parser:
        raise ConfigError("missing [dataset] section")
    ds = parser["dataset"]
    kind = ds.get("kind", "").strip()
    if kind not in ("libsvm", "quadratic"):
        raise ConfigError(f"dataset.kind must be libsvm or quadratic, got {kind!r}")
    spec = DatasetSpec(kind=kind)
    try:
        if kind == "libsvm":
            spec.path = ds.get("path")
            if not spec.path:
                raise ConfigError("dataset.path is required for libsvm datasets")
            lam_raw = ds.get("lambda", "auto").strip()
            spec.lam = None if lam_raw == "auto" else float(lam_raw)
            if ds.get("dimension"):
                spec.dimension = ds.getint("dimension")
        else:
            spec.d = ds.getint("d", spec.d)
            spec.mu = ds.getfloat("mu", spec.mu)
            spec.L = ds.getfloat("L", spec.L)
            spec.n = ds.getint("n", spec.n)
            spec.noise = ds.getfloat("noise", spec.noise)
            spec.seed = ds.getint("seed", spec.seed)
        if ds.get("fstar"):
            spec.f_star = ds.getfloat("fstar")
        spec.fstar_tolerance = ds.getfloat("fstar_tolerance", spec.fstar_tolerance)
    except ValueError as exc:
        raise ConfigError(f"bad value in [dataset]: {exc}")

    if "sweep" not in parser:
        raise ConfigError("missing [sweep] section")
    sweep = parser["sweep"]
    for key in ("eps", "K", "H", "b"):
        if key not in sweep:
            raise ConfigError(f"missing sweep.{key}")

    try:
        config = ExperimentConfig(
            dataset=spec,
            eps_list=_parse_list(sweep["eps"], float, "sweep.eps"),
            K_list=_parse_list(sweep["K"], int, "sweep.K"),
            H_list=_parse_list(sweep["H"], int, "sweep.H"),
            b_list=_parse_list(sweep["b"], int, "sweep.b"),
            rho=parser.getfloat("cost", "rho", fallback=25.0),
            seed=parser.getint("run", "seed", fallback=1),
            epoch_cap=parser.getint("run", "epoch_cap", fallback=200),
            i_min=parser.getint("grid", "i_min", fallback=-20),
            i_max=parser.getint("grid", "i_max", fallback=20),
            out_dir=parser.get("output", "dir", fallback="results"),
            svg=parser.getboolean("output", "svg", fallback=True),
        )
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}")

    if "lemmas" in parser:
        lem = parser["lemmas"]
        try:
            config.lemmas = {
                "runs": lem.getint("runs", 1000),
                "trials": lem.getint("trials", 4000),
                "K": lem.getint("K", 4),
                "H": lem.getint("H", 4),
                "T": lem.getint("T", 64),
                "b": lem.getint("b", 1),
                "tau": lem.getint("tau", 2),
                "seed": lem.getint("seed", 0),
            }
        except ValueError as exc:
            raise ConfigError(f"bad value in [lemmas]: {exc}")
    return config


def build_problem(spec: DatasetSpec):
    """Materialize (objective, reference) for a dataset spec.

    The reference solution is analytic for quadratics and computed by
    accelerated full-batch descent for logistic datasets unless the config
    pins f_star directly.
    """
    if spec.kind == "quadratic":
        objective, reference, _ = make_quadratic(
            spec.d, spec.mu, spec.L, spec.n, spec.noise, spec.seed
        )
    else:
        with open(spec.path, "r", encoding="utf-8") as fh:
            dataset = parse_libsvm(fh, declared_dimension=spec.dimension)
        objective = LogisticObjective(dataset, lam=spec.lam)
        reference = None
    if spec.f_star is not None:
        x_ref = reference.x_star if reference is not None else np.zeros(objective.d)
        reference = ReferenceSolution(x_star=x_ref, f_star=spec.f_star,
                                      provenance="numeric")
    elif reference is None:
        reference = reference_for(objective, tolerance=spec.fstar_tolerance)
    return objective, reference


def reference_for(objective, tolerance=1e-8, max_iters=200_000) -> ReferenceSolution:
    """Reference solution of any supported objective."""
    if isinstance(objective, QuadraticObjective):
        return objective.reference_solution()
    return _accelerated_descent(objective, tolerance, max_iters)


def compute_reference_fstar(dataset, lam=None, tolerance=1e-8,
                            max_iters=200_000) -> ReferenceSolution:
    """Numerically determine (x*, f*) of the logistic objective.

    Deterministic accelerated full-batch gradient descent from zero with
    the strongly convex momentum coefficient, run until the full gradient
    norm is below `tolerance`.  With mu = lam the optimality gap at return
    is at most tolerance^2 / (2 lam).
    """
    return _accelerated_descent(LogisticObjective(dataset, lam=lam),
                                tolerance, max_iters)


def _accelerated_descent(objective, tolerance, max_iters) -> ReferenceSolution:
    mu, L = objective.curvature()
    if mu <= 0.0:
        raise ValueError("reference computation requires strong convexity (lam > 0)")
    beta = (sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu))
    x = np.zeros(objective.d)
    y = x.copy()
    check_every = 25
    for it in range(1, max_iters + 1):
        g = objective.gradient(y)
        x_new = y - g / L
        y = x_new + beta * (x_new - x)
        x = x_new
        if it % check_every == 0:
            gnorm = float(np.linalg.norm(objective.gradient(x)))
            if gnorm <= tolerance:
                return ReferenceSolution(
                    x_star=x, f_star=objective.value(x), provenance="numeric"
                )
    raise RuntimeError(
        f"reference solve did not reach gradient norm {tolerance} "
        f"within {max_iters} iterations"
    )


def _family_steps(family, c, n):
    if family == "decaying":
        return ExperimentDecayStep(c=c, n=n)
    return ConstantStep(c=c)


def measure_iterations(objective, f_star, K, H, b, eps, seed, step_cap,
                       family, c):
    """Iterations until some tracked average is eps-accurate; None if never.

    One seeded run, stopped at the first qualifying evaluation point
    (function values are checked at every synchronization index plus a
    fixed subsampling stride).
    """
    sched = regular_sync_schedule(step_cap, H)
    config = RunConfig(
        K=K, T=step_cap, b=b, sync=sched, steps=_family_steps(family, c, objective.n),
        seed=seed, x0=np.zeros(objective.d),
        record=RecordFlags(virtual=False, deviations=False),
    )
    try:
        trace = run_local_sgd(config, objective, stop_when=(eps, f_star))
    except FloatingPointError:
        return None  # the objective overflowed before the divergence guard
    return trace.t_star


def grid_search_stepsize(objective, f_star, K, H, b, eps, seed, step_cap,
                         i_min=-20, i_max=20):
    """Best stepsize family and c = 2^i for one sweep cell.

    For each family, expands the grid around the incumbent until the four
    neighbors {c/4, c/2, 2c, 4c} are all evaluated and none improves on
    it (failing to reach the accuracy counts as worse; equal iteration
    counts resolve toward smaller c).  Families tie-break toward smaller c
    and then toward the decaying family.  Returns (family, c, iterations),
    with (None, None, None) when no stepsize in the window reaches eps.
    """

    def search_family(family):
        results = {}

        def measure(i):
            if i not in results:
                results[i] = measure_iterations(
                    objective, f_star, K, H, b, eps, seed, step_cap, family, 2.0**i
                )
            return results[i]

        for i in (0, -1, 1):
            if i_min <= i <= i_max:
                measure(i)
        while True:
            finite = {i: t for i, t in results.items() if t is not None}
            if not finite:
                untried = [i for i in range(i_min, i_max + 1) if i not in results]
                if not untried:
                    return None, None
                measure(min(untried, key=lambda i: (abs(i), i)))
                continue
            best_i = min(finite, key=lambda i: (finite[i], i))
            neighbors = [j for j in (best_i - 2, best_i - 1, best_i + 1, best_i + 2)
                         if i_min <= j <= i_max]
            pending = [j for j in neighbors if j not in results]
            if pending:
                for j in pending:
                    measure(j)
                continue
            if all(results[j] is None or results[j] >= finite[best_i]
                   for j in neighbors):
                return 2.0**best_i, finite[best_i]
            # some neighbor strictly improves; loop continues from it

    candidates = []
    for family in FAMILIES:
        c, t_star = search_family(family)
        if c is not None:
            candidates.append((t_star, c, family != "decaying", family))
    if not candidates:
        return None, None, None
    t_star, c, _, family = min(candidates)

    # guard against state leakage: the winner must reproduce from scratch
    confirm = measure_iterations(objective, f_star, K, H, b, eps, seed,
                                 step_cap, family, c)
    if confirm != t_star:
        raise RuntimeError(
            f"grid-search winner did not reproduce: {t_star} vs {confirm}"
        )
    return family, c, t_star


@dataclass
class ResultRow:
    K: int
    H: int
    b: int
    eps: float
    family: str | None
    c: float | None
    iterations: int | None
    rho: float

    @property
    def grad_evals(self):
        return None if self.iterations is None else self.iterations * self.K * self.b

    @property
    def comm_rounds(self):
        if self.iterations is None:
            return None
        return len([i for i in range(self.H, self.iterations + 1) if i % self.H == 0])

    @property
    def wallclock(self):
        if self.iterations is None:
            return None
        return self.iterations * (1.0 + 2.0 * self.rho * (self.K - 1) / self.H)

    def csv_fields(self, baseline_wallclock):
        measured = ""
        if self.wallclock is not None and baseline_wallclock is not None:
            measured = repr(baseline_wallclock / self.wallclock) \
                if self.wallclock > 0 else "inf"
        return [
            str(self.K), str(self.H), str(self.b), repr(self.eps),
            self.family or "unreachable",
            "" if self.c is None else repr(self.c),
            "" if self.iterations is None else str(self.iterations),
            "" if self.grad_evals is None else str(self.grad_evals),
            "" if self.comm_rounds is None else str(self.comm_rounds),
            "" if self.wallclock is None else repr(self.wallclock),
            measured,
        ]


def _cell_seed(master_seed, index):
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


_problem_cache = {}


def _cached_problem(spec):
    """Per-process problem cache so pool workers parse a dataset once."""
    key = (spec.kind, spec.path, spec.lam, spec.dimension, spec.d, spec.mu,
           spec.L, spec.n, spec.noise, spec.seed, spec.f_star)
    if key not in _problem_cache:
        _problem_cache.clear()  # sweeps use one dataset; keep a single entry
        _problem_cache[key] = build_problem(spec)
    return _problem_cache[key]


def _sweep_cell(payload):
    """One sweep cell; top-level so worker pools can pickle it."""
    objective, _ = _cached_problem(payload["spec"])
    family, c, t_star = grid_search_stepsize(
        objective, payload["f_star"], payload["K"], payload["H"], payload["b"],
        payload["eps"], payload["seed"], payload["step_cap"],
        payload["i_min"], payload["i_max"],
    )
    return ResultRow(
        K=payload["K"], H=payload["H"], b=payload["b"], eps=payload["eps"],
        family=family, c=c, iterations=t_star, rho=payload["rho"],
    )


def _pool_size():
    raw = os.environ.get("LOCALSGD_THREADS", "")
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"LOCALSGD_THREADS must be an integer, got {raw!r}")
    return min(os.cpu_count() or 1, 4)


def run_experiment(config: ExperimentConfig, out_dir=None):
    """Execute the full sweep; returns (rows, exit_code) and writes outputs.

    Exit code 0 on success, 2 when some cells never reached their target
    accuracy within the step cap (those rows are marked unreachable).
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    objective, reference = build_problem(config.dataset)
    spec = config.dataset
    if spec.f_star is None:
        # pin the reference value so pool workers do not recompute it
        spec = DatasetSpec(**{**spec.__dict__, "f_star": reference.f_star})

    payloads = []
    cells = [
        (eps, K, H, b)
        for eps in config.eps_list
        for K in config.K_list
        for H in config.H_list
        for b in config.b_list
    ]
    for index, (eps, K, H, b) in enumerate(cells):
        step_cap = max(H, ceil(config.epoch_cap * objective.n / (K * b)))
        payloads.append({
            "spec": spec, "f_star": reference.f_star,
            "eps": eps, "K": K, "H": H, "b": b,
            "seed": _cell_seed(config.seed, index),
            "step_cap": step_cap, "rho": config.rho,
            "i_min": config.i_min, "i_max": config.i_max,
        })

    workers = _pool_size()
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]

    baselines = {
        (row.b, row.eps): row.wallclock
        for row in rows
        if row.K == 1 and row.H == 1 and row.wallclock is not None
    }
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for row in rows:
            writer.writerow(row.csv_fields(baselines.get((row.b, row.eps))))

    with open(out / "speedup_theory.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(THEORY_HEADER)
        for eps in config.eps_list:
            for K in config.K_list:
                for H in config.H_list:
                    writer.writerow([
                        str(K), str(H), repr(eps), repr(config.rho),
                        repr(speedup(K, H, eps, config.rho)),
                    ])

    if config.svg:
        write_speedup_svg(out / "speedup.svg", rows, baselines, config)

    exit_code = 2 if any(row.iterations is None for row in rows) else 0
    return rows, exit_code


# -- hand-rolled SVG ---------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


def write_speedup_svg(path, rows, baselines, config):
    """Line charts of measured speedup vs K (log-2 axis), one panel per eps."""
    panel_w, panel_h = 360, 280
    margin = 56
    n_panels = len(config.eps_list)
    width = n_panels * (panel_w + margin) + margin
    height = panel_h + 2 * margin + 24

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for p, eps in enumerate(config.eps_list):
        x0 = margin + p * (panel_w + margin)
        y0 = margin
        series = {}
        for row in rows:
            if row.eps != eps or row.wallclock is None:
                continue
            base = baselines.get((row.b, row.eps))
            if base is None or row.wallclock == 0:
                continue
            series.setdefault(row.H, []).append((row.K, base / row.wallclock))
        ks = sorted({k for pts in series.values() for k, _ in pts}) or [1]
        top = max((s for pts in series.values() for _, s in pts), default=1.0)
        top = max(top, 1.0) * 1.1

        def sx(k):
            lo, hi = log2(ks[0]), log2(max(ks[-1], ks[0] * 2))
            return x0 + (log2(k) - lo) / (hi - lo or 1.0) * panel_w

        def sy(s):
            return y0 + panel_h - (s / top) * panel_h

        parts.append(
            f'<rect x="{x0}" y="{y0}" width="{panel_w}" height="{panel_h}" '
            f'fill="none" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x0 + panel_w / 2:.1f}" y="{y0 - 12}" text-anchor="middle">'
            f'speedup vs K (eps={eps!r}, rho={config.rho!r})</text>'
        )
        for k in ks:
            parts.append(
                f'<text x="{sx(k):.1f}" y="{y0 + panel_h + 16}" '
                f'text-anchor="middle">{k}</text>'
            )
        for frac in (0.0, 0.5, 1.0):
            val = frac * top
            parts.append(
                f'<text x="{x0 - 6}" y="{sy(val) + 4:.1f}" '
                f'text-anchor="end">{val:.2f}</text>'
            )
        for j, (H, pts) in enumerate(sorted(series.items())):
            pts = sorted(pts)
            color = _PALETTE[j % len(_PALETTE)]
            coords = " ".join(f"{sx(k):.2f},{sy(s):.2f}" for k, s in pts)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
            parts.append(
                f'<text x="{x0 + panel_w - 6}" y="{y0 + 16 + 14 * j}" '
                f'text-anchor="end" fill="{color}">H={H}</text>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


# -- lemma verification entry point ------------------------------------------

LEMMA_HEADER = ["check", "trials", "statistic", "bound", "margin", "stderr", "passed"]


def verify_lemmas(config: ExperimentConfig, out_dir=None):
    """Run the five inequality checks on the configured fixture.

    Returns the list of CheckReports and writes lemma_checks.csv; check
    parameters come from the [lemmas] section (with defaults matching the
    standard fixtures).
    """
    from .asynchronous import DelayModel
    from .lemmas import (
        check_async_deviation,
        check_deviation_bound,
        check_perturbed_inequality,
        check_recursion_lemma,
        check_variance_reduction,
        make_equality_builder,
    )
    from .schedules import TheoremDecayStep

    params = {
        "runs": 1000, "trials": 4000, "K": 4, "H": 4, "T": 64, "b": 1,
        "tau": 2, "seed": 0,
    }
    params.update(config.lemmas)

    objective, reference = build_problem(config.dataset)
    mu, L = objective.curvature()
    x0 = np.zeros(objective.d)
    constants = ProblemConstants(
        L=L, mu=mu,
        sigma_sq=objective.variance_at(x0),
        G_sq=objective.second_moment_at(x0),
    )
    kappa = L / mu
    K, H, T, b = params["K"], params["H"], params["T"], params["b"]
    tau, seed, runs = params["tau"], params["seed"], params["runs"]

    def run_config(shift_window):
        return RunConfig(
            K=K, T=T, b=b, sync=regular_sync_schedule(T, H),
            steps=TheoremDecayStep(mu=mu, a=max(16.0 * kappa, float(shift_window)) + 1.0),
            seed=seed, x0=x0,
            record=RecordFlags(virtual=False, f_values=False),
        )

    warm_T = max(2 * H, 8)
    warm = run_local_sgd(
        RunConfig(K=K, T=warm_T, b=b,
                  sync=regular_sync_schedule(warm_T, H),
                  steps=TheoremDecayStep(mu=mu, a=max(16.0 * kappa, H) + 1.0),
                  seed=seed, x0=x0,
                  record=RecordFlags(iterates=True, f_values=False)),
        objective,
    )
    # worker iterates one step before the final synchronization, so the
    # states are genuinely distinct when H > 1
    states = warm.iterates[:, warm_T - 1, :]
    reports = [
        check_variance_reduction(objective, states,
                                 trials=params["trials"], seed=seed),
        check_deviation_bound(run_config(H), objective, constants, runs, seed=seed),
        check_perturbed_inequality(run_config(H), objective, reference,
                                   constants, runs, seed=seed),
        check_recursion_lemma(
            a=max(16.0 * kappa, H) + 1.0, mu=mu, A=0.5,
            B=constants.sigma_sq / K,
            C=8.0 * constants.G_sq * H**2 * L,
            T=T,
            sequence_builder=make_equality_builder(
                mu, 0.5, constants.sigma_sq / K, 8.0 * constants.G_sq * H**2 * L
            ),
        ),
        check_async_deviation(run_config(H + tau),
                              DelayModel("fixed", tau=tau, seed=seed),
                              objective, constants, runs, seed=seed),
    ]

    if out_dir is not None or config.out_dir:
        out = Path(out_dir if out_dir is not None else config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "lemma_checks.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LEMMA_HEADER)
            for report in reports:
                row = report.row()
                writer.writerow([
                    row["check"], str(row["trials"]), repr(row["statistic"]),
                    repr(row["bound"]), repr(row["margin"]), repr(row["stderr"]),
                    str(row["passed"]),
                ])
    return reports
