"""Closed-loop experiment runners mapping tuning vectors to outcomes.

Two scenarios are built in: a CSTR steady-state switch (drive the
reactant concentration from 8.56 to 2.0 kgmol/m3) and a lane-keep /
obstacle-avoidance driving task on the kinematic bicycle. Each runner is
deterministic given theta; wall-clock solve times are the only
non-reproducible numbers and live alongside, never inside, the dynamics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ParamSpace, ParamSpec
from .mpc import (
    LinearizationError,
    MpcConfig,
    MpcController,
    MpcError,
    linearize_discretize,
    mpc_step,
)
from .plants import (
    BicycleInputs,
    BicycleParams,
    CstrInputs,
    CstrParams,
    bicycle_derivatives,
    cstr_derivatives,
    cstr_equilibrium,
    cstr_step,
    rk4_step,
)

KMH = 1.0 / 3.6  # km/h in m/s

STATUS_COMPLETED = "completed"
STATUS_TIME_CAPPED = "time_capped"
STATUS_UNSAFE = "interrupted_unsafe"
STATUS_MPC_FAILURE = "mpc_failure"


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    solve_times: np.ndarray
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.solve_times = np.asarray(self.solve_times, dtype=float)
        for name in ("states", "inputs", "outputs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 1)
            setattr(self, name, arr)
        n = self.times.shape[0]
        for name in ("states", "inputs", "outputs"):
            if getattr(self, name).shape[0] != n:
                raise ValueError("trajectory columns have unequal lengths")
        if self.solve_times.shape[0] != n:
            raise ValueError("trajectory columns have unequal lengths")
        if n > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return self.times.shape[0]


@dataclass
class ExperimentOutcome:
    theta: np.ndarray
    trajectory: Trajectory
    status: str
    metrics: dict


def trajectory_to_csv(traj: Trajectory, state_names: Sequence[str],
                      input_names: Sequence[str],
                      output_names: Sequence[str]) -> str:
    """One row per MPC step; %.17g keeps round-trips byte-stable."""
    header = ["time", *state_names, *input_names, *output_names, "solve_time"]
    lines = [",".join(header)]
    for k in range(traj.n_steps):
        vals = [traj.times[k], *traj.states[k], *traj.inputs[k],
                *traj.outputs[k], traj.solve_times[k]]
        lines.append(",".join(format(v, ".17g") for v in vals))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CstrScenario:
    kind: str = "cstr"
    CA_start: float = 8.56
    CA_ref: float = 2.0
    t_max: float = 48.0            # hr
    tc_low: float = 284.0          # K
    tc_high: float = 310.0         # K
    dtc_max: float = 10.0          # K per step
    Tf: float = 298.15             # K
    CAf: float = 10.0              # kgmol/m3
    T_safe_low: float = 150.0      # K
    T_safe_high: float = 700.0     # K
    steady_tol: float = 1e-3       # kgmol/(m3 hr)
    steady_band: float = 0.05      # kgmol/m3 around CA_ref
    steady_steps: int = 5
    accept_rel: float = 0.03       # AR%, terminal-error normalization

    state_names = ("T", "CA")
    input_names = ("Tc",)
    output_names = ("T", "CA")

    def space(self) -> ParamSpace:
        return ParamSpace((
            ParamSpec("Ts", 0.25, 1.5),
            ParamSpec("Np", 4, 40, integer=True),
            ParamSpec("logQdu", -5.0, 3.0, log_scale_label="Qdu"),
        ))

    def run(self, theta) -> ExperimentOutcome:
        return run_cstr_experiment(theta, self)

    def score(self, outcome: ExperimentOutcome) -> float:
        return cstr_perf_index(outcome, self)


@dataclass(frozen=True)
class DrivingScenario:
    kind: str = "driving"
    duration: float = 15.0         # s
    obs_x0: float = 30.0           # m
    obs_speed: float = 40.0 * KMH  # m/s
    length: float = 4.5            # m
    width: float = 1.8             # m
    trigger_gap: float = 10.0      # m, bumper-to-bumper
    clearance_ref: float = 3.0     # m
    v_lk: tuple = (40.0 * KMH, 70.0 * KMH, 50.0 * KMH)   # min, max, ref
    v_oa: tuple = (50.0 * KMH, 70.0 * KMH, 60.0 * KMH)
    yaw_bound: float = math.pi / 4
    steer_bound: float = math.pi / 4
    steer_rate: float = 0.0873     # rad/s
    min_pass_speed: float = 0.5    # m/s floor for the overtake window
    ramp_fraction: float = 0.4

    state_names = ("x_f", "y_f", "yaw")
    input_names = ("v", "delta_s")
    output_names = ("x_f", "y_f", "yaw")

    def space(self) -> ParamSpace:
        return ParamSpace((
            ParamSpec("Ts", 0.085, 0.5),
            ParamSpec("eps_c", 0.1, 1.0),
            ParamSpec("Np", 10, 30, integer=True),
            ParamSpec("log_qu11", -5.0, 3.0, log_scale_label="Qdu_v"),
            ParamSpec("log_qu22", -5.0, 3.0, log_scale_label="Qdu_steer"),
        ))

    def run(self, theta) -> ExperimentOutcome:
        return run_driving_experiment(theta, self)

    def score(self, outcome: ExperimentOutcome) -> float:
        return driving_oracle_score(outcome, self)


def scenario_by_kind(kind: str):
    if kind == "cstr":
        return CstrScenario()
    if kind == "driving":
        return DrivingScenario()
    raise KeyError(f"unknown scenario kind: {kind!r}")


def run_cstr_experiment(theta, sc: CstrScenario | None = None) -> ExperimentOutcome:
    """Simulate the steady-state switch for one tuning vector.

    Stops on steady-state detection, on the 48 hr cap, or on a reactor
    temperature outside the safety band. Solver failures keep the partial
    trajectory so interrupted runs stay comparable.
    """
    sc = sc or CstrScenario()
    theta = sc.space().materialize(theta)
    Ts = float(theta[0])
    Np = int(round(theta[1]))
    Nu = max(1, round(Np / 3))
    cfg = MpcConfig(
        Ts=Ts, Np=Np, Nu=Nu,
        Qy=np.array([[0.0, 0.0], [0.0, 1.0]]),
        Qu=np.array([[0.0]]),
        Qdu=np.array([[10.0 ** float(theta[2])]]),
        u_min=[sc.tc_low], u_max=[sc.tc_high],
        du_min=[-sc.dtc_max], du_max=[sc.dtc_max],
    )
    params = CstrParams()
    T0, Tc0 = cstr_equilibrium(sc.CA_start, CstrInputs(Tc=params.Tc0, Tf=sc.Tf, CAf=sc.CAf), params)

    def f(xv, uv):
        return cstr_derivatives(xv, CstrInputs(Tc=float(uv[0]), Tf=sc.Tf, CAf=sc.CAf), params)

    def g(xv, uv):
        return np.asarray(xv, dtype=float)

    ctrl = MpcController(config=cfg, u_prev=np.array([Tc0]))
    x = np.array([T0, sc.CA_start])
    y_ref = np.array([0.0, sc.CA_ref])
    u_ref = np.array([0.0])

    max_steps = int(math.floor(sc.t_max / Ts + 1e-9))
    times, states, inputs, solves = [], [], [], []
    status = STATUS_TIME_CAPPED
    t_f = max_steps * Ts
    steady_run = 0
    for k in range(max_steps):
        t = k * Ts
        try:
            model = linearize_discretize(f, g, x, ctrl.u_prev, Ts)
            u, stats = mpc_step(ctrl, model, x, y_ref, u_ref)
        except (MpcError, LinearizationError):
            status = STATUS_MPC_FAILURE
            t_f = t
            break
        times.append(t)
        states.append(x.copy())
        inputs.append(u.copy())
        solves.append(stats.solve_time)

        x, _ = cstr_step(x, CstrInputs(Tc=float(u[0]), Tf=sc.Tf, CAf=sc.CAf),
                         params, Ts)
        t_f = (k + 1) * Ts
        if not sc.T_safe_low <= x[0] <= sc.T_safe_high:
            status = STATUS_UNSAFE
            break
        dCA = f(x, u)[1]
        if abs(dCA) < sc.steady_tol and abs(x[1] - sc.CA_ref) <= sc.steady_band:
            steady_run += 1
            if steady_run >= sc.steady_steps:
                status = STATUS_COMPLETED
                break
        else:
            steady_run = 0

    n = len(times)
    traj = Trajectory(
        times=np.asarray(times),
        states=np.asarray(states).reshape(n, 2),
        inputs=np.asarray(inputs).reshape(n, 1),
        outputs=np.asarray(states).reshape(n, 2),
        solve_times=np.asarray(solves),
        extras={"Tc_init": np.full(n, Tc0)},
    )
    metrics = {
        "t_f": t_f,
        "CA_end": float(x[1]),
        "worst_solve_time": float(max(solves)) if solves else 0.0,
        "Tc_init": Tc0,
    }
    return ExperimentOutcome(theta=theta, trajectory=traj, status=status,
                             metrics=metrics)


def cstr_perf_index(outcome: ExperimentOutcome, sc: CstrScenario | None = None) -> float:
    """Duration, input roughness, and terminal error, each normalized.

    Interrupted runs (safety or solver failure) are charged the full
    duration so they rank behind any run that finished on its own.
    """
    sc = sc or CstrScenario()
    m = outcome.metrics
    if "t_f" not in m or "CA_end" not in m:
        raise ValueError("CSTR metrics missing from outcome")
    t_f = m["t_f"]
    if outcome.status in (STATUS_UNSAFE, STATUS_MPC_FAILURE):
        t_f = sc.t_max
    tc = outcome.trajectory.inputs[:, 0] if outcome.trajectory.n_steps else np.array([])
    if tc.size:
        diffs = np.diff(tc, prepend=m.get("Tc_init", tc[0]))
        rough = float(np.sum(diffs ** 2)) / (sc.dtc_max * tc.size)
    else:
        rough = 0.0
    terminal = abs(m["CA_end"] - sc.CA_ref) / (sc.accept_rel * sc.CA_ref)
    return t_f / sc.t_max + rough + terminal


def _rect_axes(yaw: float):
    c, s = math.cos(yaw), math.sin(yaw)
    return (c, s), (-s, c)


def _rect_overlap(ca, yaw_a, cb, yaw_b, half_len, half_wid) -> bool:
    # separating-axis test for two oriented rectangles
    ax_a = _rect_axes(yaw_a)
    ax_b = _rect_axes(yaw_b)
    dx, dy = cb[0] - ca[0], cb[1] - ca[1]
    for ax in (*ax_a, *ax_b):
        ra = half_len * abs(ax[0] * ax_a[0][0] + ax[1] * ax_a[0][1]) \
            + half_wid * abs(ax[0] * ax_a[1][0] + ax[1] * ax_a[1][1])
        rb = half_len * abs(ax[0] * ax_b[0][0] + ax[1] * ax_b[0][1]) \
            + half_wid * abs(ax[0] * ax_b[1][0] + ax[1] * ax_b[1][1])
        if abs(dx * ax[0] + dy * ax[1]) > ra + rb:
            return False
    return True


def obstacle_gap(ego_state, obs_position, obs_yaw: float = 0.0,
                 length: float = 4.5, width: float = 1.8):
    """Edge-to-edge gaps between the ego and obstacle footprints.

    Returns (longitudinal gap, lateral clearance, overlap). Gaps are
    measured along the road axes between the rectangles' axis-aligned
    extents (negative when the extents overlap); the overlap flag comes
    from a separating-axis test on the oriented rectangles.
    """
    ex, ey, yaw = float(ego_state[0]), float(ego_state[1]), float(ego_state[2])
    ox, oy = float(obs_position[0]), float(obs_position[1])
    hl, hw = 0.5 * length, 0.5 * width

    def extents(angle):
        c, s = abs(math.cos(angle)), abs(math.sin(angle))
        return hl * c + hw * s, hl * s + hw * c

    ex_half, ey_half = extents(yaw)
    ox_half, oy_half = extents(obs_yaw)
    long_gap = abs(ox - ex) - (ex_half + ox_half)
    lat_clear = abs(oy - ey) - (ey_half + oy_half)
    overlap = _rect_overlap((ex, ey), yaw, (ox, oy), obs_yaw, hl, hw)
    return long_gap, lat_clear, overlap


class _LateralProfile:
    """Overtake reference: ramp out, hold, ramp back after clearing."""

    def __init__(self, target: float, ramp_fraction: float):
        self.target = target
        self.ramp_fraction = ramp_fraction
        self.t_enter: float | None = None
        self.t_exit: float | None = None
        self.ramp_time = 1.0

    def enter(self, t: float, window: float):
        self.t_enter = t
        self.t_exit = None
        self.ramp_time = max(self.ramp_fraction * window, 1e-6)

    def leave(self, t: float):
        self.t_exit = t

    def value(self, t: float) -> float:
        if self.t_enter is None:
            return 0.0
        if self.t_exit is None:
            frac = min(1.0, max(0.0, (t - self.t_enter) / self.ramp_time))
            return self.target * frac
        frac = min(1.0, max(0.0, (t - self.t_exit) / self.ramp_time))
        return self.target * (1.0 - frac)


def run_driving_experiment(theta, sc: DrivingScenario | None = None) -> ExperimentOutcome:
    """Simulate 15 s of lane keeping with one constant-speed obstacle.

    Phase switches to overtake when the bumper-to-bumper longitudinal gap
    drops to the trigger distance and back once the ego leads by the same
    margin. Collisions and clearance are checked at integration substep
    resolution, not just at sample times.
    """
    sc = sc or DrivingScenario()
    theta = sc.space().materialize(theta)
    Ts = float(theta[0])
    eps_c = float(theta[1])
    Np = int(round(theta[2]))
    Nu = min(Np, max(1, round(eps_c * Np)))
    rate = sc.steer_rate * Ts
    cfg = MpcConfig(
        Ts=Ts, Np=Np, Nu=Nu,
        Qy=np.diag([1.0, 1.0, 0.0]),
        Qu=np.zeros((2, 2)),
        Qdu=np.diag([10.0 ** float(theta[3]), 10.0 ** float(theta[4])]),
        y_min=[-np.inf, -np.inf, -sc.yaw_bound],
        y_max=[np.inf, np.inf, sc.yaw_bound],
        u_min=[sc.v_lk[0], -sc.steer_bound],
        u_max=[sc.v_lk[1], sc.steer_bound],
        du_min=[-np.inf, -rate], du_max=[np.inf, rate],
    )
    bp = BicycleParams(L=sc.length)

    def f(xv, uv):
        return bicycle_derivatives(xv, BicycleInputs(v=float(uv[0]), delta_s=float(uv[1])), bp)

    def g(xv, uv):
        return np.asarray(xv, dtype=float)

    ctrl = MpcController(config=cfg, u_prev=np.array([sc.v_lk[2], 0.0]))
    x = np.zeros(3)
    profile = _LateralProfile(sc.clearance_ref, sc.ramp_fraction)
    phase = "LK"

    n_steps = int(math.floor(sc.duration / Ts + 1e-9))
    n_sub = max(1, int(math.ceil(Ts / 0.005 - 1e-12)))
    h = Ts / n_sub

    times, states, inputs, solves = [], [], [], []
    phases, y_refs, v_refs, gaps = [], [], [], []
    collision = False
    min_clear = math.inf
    status = STATUS_COMPLETED
    t_f = n_steps * Ts

    for k in range(n_steps):
        t = k * Ts
        obs = (sc.obs_x0 + sc.obs_speed * t, 0.0)
        gap, lat, overlap = obstacle_gap(x, obs, 0.0, sc.length, sc.width)
        behind = x[0] <= obs[0]
        if phase == "LK":
            if behind and gap <= sc.trigger_gap:
                phase = "OA"
                rel = max(sc.v_oa[2] - sc.obs_speed, sc.min_pass_speed)
                window = (gap + 2.0 * sc.length + sc.trigger_gap) / rel
                profile.enter(t, window)
        else:
            if not behind and gap >= sc.trigger_gap:
                phase = "LK"
                profile.leave(t)

        v_lo, v_hi, v_ref = sc.v_oa if phase == "OA" else sc.v_lk
        cfg.u_min = [v_lo, -sc.steer_bound]
        cfg.u_max = [v_hi, sc.steer_bound]
        adjacent = gap <= 0.0
        cfg.y_min = [-np.inf, sc.clearance_ref if adjacent else -np.inf, -sc.yaw_bound]

        y_ref = np.empty((Np, 3))
        for j in range(Np):
            tau = t + j * Ts
            y_ref[j, 0] = x[0] + v_ref * j * Ts
            y_ref[j, 1] = profile.value(tau)
            y_ref[j, 2] = 0.0
        u_ref = np.array([v_ref, 0.0])

        try:
            model = linearize_discretize(f, g, x, ctrl.u_prev, Ts)
            u, stats = mpc_step(ctrl, model, x, y_ref, u_ref)
        except (MpcError, LinearizationError):
            status = STATUS_MPC_FAILURE
            t_f = t
            break

        times.append(t)
        states.append(x.copy())
        inputs.append(u.copy())
        solves.append(stats.solve_time)
        phases.append(1.0 if phase == "OA" else 0.0)
        y_refs.append(profile.value(t))
        v_refs.append(v_ref)
        gaps.append(gap)

        bike_u = BicycleInputs(v=float(u[0]), delta_s=float(u[1]))
        for i in range(1, n_sub + 1):
            x = rk4_step(lambda s, uu: bicycle_derivatives(s, uu, bp), x, bike_u, h)
            tau = t + i * h
            obs_i = (sc.obs_x0 + sc.obs_speed * tau, 0.0)
            g_i, lat_i, overlap_i = obstacle_gap(x, obs_i, 0.0, sc.length, sc.width)
            if overlap_i:
                collision = True
            if g_i <= 0.0:
                min_clear = min(min_clear, lat_i)

    n = len(times)
    traj = Trajectory(
        times=np.asarray(times),
        states=np.asarray(states).reshape(n, 3),
        inputs=np.asarray(inputs).reshape(n, 2),
        outputs=np.asarray(states).reshape(n, 3),
        solve_times=np.asarray(solves),
        extras={
            "phase": np.asarray(phases),
            "y_ref": np.asarray(y_refs),
            "v_ref": np.asarray(v_refs),
            "long_gap": np.asarray(gaps),
        },
    )
    metrics = {
        "t_f": t_f,
        "worst_solve_time": float(max(solves)) if solves else 0.0,
        "collision_flag": collision,
        "min_lateral_clearance": min_clear,
    }
    return ExperimentOutcome(theta=theta, trajectory=traj, status=status,
                             metrics=metrics)


def driving_oracle_score(outcome: ExperimentOutcome, sc: DrivingScenario | None = None) -> float:
    """Synthetic rating for automated runs; not a published metric.

    Collisions, solver failures, and per-step solve times at or above Ts
    are hard failures. Otherwise: lateral tracking error, speed tracking
    error, steering roughness, and any clearance shortfall.
    """
    sc = sc or DrivingScenario()
    m = outcome.metrics
    for key in ("worst_solve_time", "collision_flag", "min_lateral_clearance"):
        if key not in m:
            raise ValueError("driving metrics missing from outcome")
    Ts = float(outcome.theta[0])
    traj = outcome.trajectory
    if (m["collision_flag"] or m["worst_solve_time"] >= Ts
            or outcome.status == STATUS_MPC_FAILURE or traj.n_steps == 0):
        return 1e6
    n = traj.n_steps
    y_err = float(np.mean(np.abs(traj.states[:, 1] - traj.extras["y_ref"])))
    v_err = float(np.mean(np.abs(traj.inputs[:, 0] - traj.extras["v_ref"])))
    dds = np.diff(traj.inputs[:, 1], prepend=0.0)
    rough = float(np.sum(dds ** 2)) / (n * (sc.steer_rate * Ts) ** 2)
    shortfall = max(0.0, sc.clearance_ref - m["min_lateral_clearance"])
    return (y_err / sc.clearance_ref + v_err / (10.0 * KMH) + rough + shortfall)
