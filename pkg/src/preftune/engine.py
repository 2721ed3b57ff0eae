"""Active preference-learning loop (GLISp) and its value-based twin (GLIS).

A session alternates between asking the calibrator to compare the newest
sample against the incumbent and proposing the next sample by minimizing
the acquisition over the scaled box. All randomness is derived from the
config seed and the current sample count, so a session rebuilt from its
recorded samples and preferences continues exactly where it stopped.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionConfig, PsoConfig, acquisition, pso_minimize
from .core import (
    ParamSpace,
    PreferenceDataset,
    best_so_far,
    latin_hypercube,
    preference_from_values,
)
from .surrogate import (
    FitConfig,
    SurrogateModel,
    cross_validate_shape,
    cross_validate_shape_values,
    default_shape_grid,
    fit_preference_surrogate,
    fit_value_surrogate,
)

PHASE_INITIALIZING = "initializing"
PHASE_ACTIVE = "active"
PHASE_FINISHED = "finished"

# salts for per-purpose derived seeds
_SALT_LHS = 0
_SALT_CV = 1
_SALT_PSO = 2
_SALT_NUDGE = 3

# proposals closer than this (scaled space) to an existing sample would
# degenerate the surrogate Gram matrix and are nudged away
_MIN_SCALED_DIST = 1e-9


class SessionError(RuntimeError):
    """Raised when an operation does not apply to the session's phase."""


def derived_seed(seed: int, iteration: int, salt: int) -> int:
    """Stateless per-iteration seed: no RNG object ever needs persisting."""
    return int(np.random.SeedSequence([int(seed), int(iteration), int(salt)])
               .generate_state(1)[0])


@dataclass
class GlispConfig:
    n_init: int = 10
    n_max: int = 50
    delta: float = 0.3
    sigma: float = 1e-6
    shape_init: float = 1.0
    cv_schedule: tuple = (10, 20, 30, 40)
    cv_folds: int = 3
    rbf: str = "inverse_quadratic"
    fit: FitConfig | None = None
    pso: PsoConfig = field(default_factory=PsoConfig)
    seed: int = 0

    def validate(self) -> "GlispConfig":
        if self.n_init < 2:
            raise ValueError("n_init must be at least 2")
        if self.n_max < self.n_init:
            raise ValueError("n_max must be at least n_init")
        if self.delta < 0.0:
            raise ValueError("delta must be non-negative")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.shape_init <= 0.0:
            raise ValueError("shape_init must be positive")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if any(int(n) != n or n < 2 for n in self.cv_schedule):
            raise ValueError("cv_schedule entries must be integers >= 2")
        self.pso.validate()
        return self

    def fit_config(self) -> FitConfig:
        return self.fit if self.fit is not None else FitConfig(sigma=self.sigma)


@dataclass
class SessionState:
    """One calibration session; mutated in place by the operations below.

    outcomes is filled by whoever runs the experiments (the service or the
    automated driver); the engine itself only does the bookkeeping and the
    proposing.
    """

    space: ParamSpace
    config: GlispConfig
    dataset: PreferenceDataset
    outcomes: dict = field(default_factory=dict)
    model: SurrogateModel | None = None
    shape: float = 1.0
    incumbent: int = 0
    phase: str = PHASE_INITIALIZING
    pending_query: tuple[int, int] | None = None
    init_queue: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.dataset.n_samples


def init_session(space: ParamSpace, config: GlispConfig) -> SessionState:
    """Draw the initial design and queue the first comparison.

    The full Latin-hypercube design is drawn up front (and kept on the
    state) but samples enter the dataset one comparison at a time, so the
    sample/preference counts stay in lockstep.
    """
    config.validate()
    lhs = latin_hypercube(config.n_init, space,
                          derived_seed(config.seed, 0, _SALT_LHS))
    queue = np.array([space.materialize(t) for t in lhs])
    state = SessionState(space=space, config=config,
                         dataset=PreferenceDataset(), shape=config.shape_init,
                         init_queue=queue)
    state.dataset.add_sample(queue[0])
    state.dataset.add_sample(queue[1])
    state.pending_query = (0, 1)
    return state


def submit_preference(state: SessionState, b: int) -> SessionState:
    """Record the answer to the pending query and advance the session.

    During initialization the next queued sample is enrolled; afterwards
    the surrogate is refit (shape re-validated on the configured schedule)
    and the acquisition minimizer proposes the next sample. The new pending
    query is always (new sample, incumbent).
    """
    if state.pending_query is None:
        raise SessionError(f"no pending query (phase {state.phase})")
    i, j = state.pending_query
    state.dataset.add_preference(i, j, b)
    state.incumbent = best_so_far(state.dataset)
    state.pending_query = None

    n = state.n_samples
    if n < state.config.n_init:
        theta = state.init_queue[n]
    elif n >= state.config.n_max:
        state.phase = PHASE_FINISHED
        return state
    else:
        state.phase = PHASE_ACTIVE
        theta = _propose(state)
    idx = state.dataset.add_sample(theta)
    state.pending_query = (idx, state.incumbent)
    return state


def _propose(state: SessionState) -> np.ndarray:
    cfg = state.config
    ds = state.dataset
    n = ds.n_samples
    scaled = state.space.scale_many(ds.sample_matrix())
    fit_cfg = cfg.fit_config()

    if n in cfg.cv_schedule and ds.n_prefs >= cfg.cv_folds:
        state.shape = cross_validate_shape(
            scaled, ds.prefs, cfg.rbf, default_shape_grid(state.shape),
            cfg.cv_folds, fit_cfg, seed=derived_seed(cfg.seed, n, _SALT_CV))
    model, _ = fit_preference_surrogate(scaled, ds.prefs, cfg.rbf,
                                        state.shape, fit_cfg)
    state.model = model
    return _minimize_acquisition(state, model, n)


def _minimize_acquisition(state: SessionState, model: SurrogateModel,
                          iteration: int) -> np.ndarray:
    cfg = state.config
    d = state.space.n_dims
    acq_cfg = AcquisitionConfig(delta=cfg.delta)
    pso_cfg = replace(cfg.pso, seed=derived_seed(cfg.seed, iteration, _SALT_PSO))
    z_best, _ = pso_minimize(lambda pts: acquisition(pts, model, acq_cfg),
                             -np.ones(d), np.ones(d), pso_cfg)
    theta = state.space.materialize(state.space.unscale(z_best))
    return _nudge_off_duplicates(state, theta, iteration)


def _nudge_off_duplicates(state: SessionState, theta: np.ndarray,
                          iteration: int) -> np.ndarray:
    space = state.space
    existing = space.scale_many(state.dataset.sample_matrix())

    def distinct(candidate):
        z = space.scale(candidate)
        return float(np.min(np.linalg.norm(existing - z, axis=1))) >= _MIN_SCALED_DIST

    if distinct(theta):
        return theta
    rng = np.random.default_rng(derived_seed(state.config.seed, iteration,
                                             _SALT_NUDGE))
    z0 = space.scale(theta)
    width = 1e-6
    for _ in range(60):
        z = np.clip(z0 + rng.normal(0.0, width, size=z0.shape), -1.0, 1.0)
        candidate = space.materialize(space.unscale(z))
        if distinct(candidate):
            return candidate
        width = min(width * 4.0, 1.0)
    for _ in range(1000):
        candidate = space.materialize(space.unscale(rng.uniform(-1.0, 1.0, z0.shape)))
        if distinct(candidate):
            return candidate
    raise SessionError("could not find a distinct proposal")


@dataclass
class IterationRecord:
    index: int
    theta: np.ndarray
    value: float
    incumbent: int
    incumbent_value: float


@dataclass
class RunResult:
    best_theta: np.ndarray
    best_index: int
    best_value: float
    best_outcome: object
    history: list[IterationRecord]
    outcomes: dict = field(default_factory=dict)
    state: SessionState | None = None


def run_automated(space: ParamSpace, config: GlispConfig,
                  experiment_runner: Callable, value_oracle: Callable,
                  pref_tol: float = 0.0) -> RunResult:
    """Drive a full session with a synthetic calibrator.

    experiment_runner maps theta to an opaque outcome; value_oracle maps
    that outcome to the latent objective the oracle compares with. Exactly
    n_max experiments and n_max - 1 preferences are produced.
    """
    state = init_session(space, config)
    outcomes: dict[int, object] = {}
    values: dict[int, float] = {}

    def ensure(idx: int):
        if idx in values:
            return
        outcome = experiment_runner(state.dataset.samples[idx])
        outcomes[idx] = outcome
        state.outcomes[idx] = outcome
        values[idx] = float(value_oracle(outcome))

    ensure(0)
    history = [IterationRecord(0, state.dataset.samples[0].copy(),
                               values[0], 0, values[0])]
    while state.pending_query is not None:
        i, j = state.pending_query
        ensure(i)
        ensure(j)
        b = preference_from_values(values[i], values[j], pref_tol)
        submit_preference(state, b)
        newest = max(i, j)
        history.append(IterationRecord(newest,
                                       state.dataset.samples[newest].copy(),
                                       values[newest], state.incumbent,
                                       values[state.incumbent]))
    best = state.incumbent
    return RunResult(best_theta=state.dataset.samples[best].copy(),
                     best_index=best, best_value=values[best],
                     best_outcome=outcomes[best], history=history,
                     outcomes=outcomes, state=state)


def run_glis_automated(space: ParamSpace, config: GlispConfig,
                       experiment_runner: Callable,
                       value_oracle: Callable) -> RunResult:
    """Value-based baseline: same loop, surrogate fit to observed values.

    No preferences are recorded; the incumbent is the argmin of the
    observed values (smallest index on ties). Seeding mirrors the
    preference loop so both methods see the same initial design.
    """
    config.validate()
    lhs = latin_hypercube(config.n_init, space,
                          derived_seed(config.seed, 0, _SALT_LHS))
    samples: list[np.ndarray] = []
    outcomes: list[object] = []
    values: list[float] = []
    history: list[IterationRecord] = []

    def run_one(theta):
        theta = np.asarray(theta, dtype=float)
        outcome = experiment_runner(theta)
        samples.append(theta)
        outcomes.append(outcome)
        values.append(float(value_oracle(outcome)))
        best = int(np.argmin(values))
        history.append(IterationRecord(len(samples) - 1, theta.copy(),
                                       values[-1], best, values[best]))

    for theta in lhs:
        run_one(space.materialize(theta))

    shape = config.shape_init
    fit_cfg = config.fit_config()
    while len(samples) < config.n_max:
        n = len(samples)
        scaled = space.scale_many(np.array(samples))
        vals = np.asarray(values)
        if n in config.cv_schedule and n >= config.cv_folds:
            shape = cross_validate_shape_values(
                scaled, vals, config.rbf, default_shape_grid(shape),
                config.cv_folds, lam=fit_cfg.lam,
                seed=derived_seed(config.seed, n, _SALT_CV))
        model = fit_value_surrogate(scaled, vals, config.rbf, shape,
                                    lam=fit_cfg.lam, sigma=config.sigma)
        shadow = SessionState(space=space, config=config,
                              dataset=_as_dataset(samples), shape=shape)
        run_one(_minimize_acquisition(shadow, model, n))

    best = int(np.argmin(values))
    return RunResult(best_theta=samples[best].copy(), best_index=best,
                     best_value=values[best], best_outcome=outcomes[best],
                     history=history,
                     outcomes={k: o for k, o in enumerate(outcomes)},
                     state=None)


def _as_dataset(samples: Sequence[np.ndarray]) -> PreferenceDataset:
    ds = PreferenceDataset()
    for theta in samples:
        ds.add_sample(theta)
    return ds
