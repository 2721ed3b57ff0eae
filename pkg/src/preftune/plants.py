"""Nonlinear plant models: an exothermic CSTR and a kinematic bicycle.

State conventions used throughout (and by the scenario runners):
  CSTR     state = (T, CA)        inputs = CstrInputs(Tc, Tf, CAf)
  bicycle  state = (x_f, y_f, yaw) inputs = BicycleInputs(v, delta_s)

All integration is classical RK4 with inputs held constant over the step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class IntegrationError(RuntimeError):
    """A step produced a non-finite state."""


class EquilibriumError(RuntimeError):
    """No steady state exists under the requested conditions."""


@dataclass(frozen=True)
class CstrParams:
    F_over_V: float = 1.0      # 1/hr
    k0: float = 3.49e7         # 1/hr
    H: float = 5960.0          # kcal/kgmol, heat of reaction
    E: float = 11843.0         # kcal/kgmol
    rho_cp: float = 500.0      # kcal/(m^3 K)
    US_over_V: float = 150.0   # kcal/(m^3 K hr)
    Tc0: float = 298.0         # K
    R: float = 1.987           # kcal/(kgmol K)

    def __post_init__(self):
        for name in ("F_over_V", "k0", "H", "E", "rho_cp", "US_over_V", "Tc0", "R"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CstrInputs:
    Tc: float                  # K, manipulated
    Tf: float = 298.15         # K
    CAf: float = 10.0          # kgmol/m^3

    def __post_init__(self):
        if self.Tc <= 0.0 or self.Tf <= 0.0 or self.CAf < 0.0:
            raise ValueError("CSTR inputs must be physical")


@dataclass(frozen=True)
class BicycleParams:
    L: float = 4.5             # m, vehicle length (wheelbase)

    def __post_init__(self):
        if self.L <= 0.0:
            raise ValueError("L must be positive")


@dataclass(frozen=True)
class BicycleInputs:
    v: float                   # m/s
    delta_s: float             # rad

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError("v must be non-negative")
        if not abs(self.delta_s) < math.pi / 2:
            raise ValueError("steering angle must satisfy |delta_s| < pi/2")


def arrhenius_rate(T, CA, p: CstrParams):
    """Reaction rate k0 * exp(-E / (R T)) * CA, in kgmol/(m^3 hr)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0.0):
        raise ValueError("temperature must be positive")
    return p.k0 * np.exp(-p.E / (p.R * T)) * np.asarray(CA, dtype=float)


def cstr_derivatives(state, inputs: CstrInputs, p: CstrParams) -> np.ndarray:
    """Time derivatives (dT/dt, dCA/dt) of the reactor.

    The reaction is exothermic: with H > 0 the rate term must heat the
    reactor, otherwise the coolant temperature needed to hold any useful
    conversion sits far outside its [284, 310] K actuation range.
    """
    T, CA = float(state[0]), float(state[1])
    r = arrhenius_rate(T, CA, p)
    dT = (p.F_over_V * (inputs.Tf - T)
          + (p.H / p.rho_cp) * r
          - (p.US_over_V / p.rho_cp) * (T - inputs.Tc))
    dCA = p.F_over_V * (inputs.CAf - CA) - r
    return np.array([dT, dCA])


def bicycle_derivatives(state, inputs: BicycleInputs, p: BicycleParams) -> np.ndarray:
    """Front-wheel kinematics (dx_f, dy_f, dyaw)."""
    yaw = float(state[2])
    heading = yaw + inputs.delta_s
    return np.array([
        inputs.v * math.cos(heading),
        inputs.v * math.sin(heading),
        inputs.v * math.sin(inputs.delta_s) / p.L,
    ])


def rk4_step(derivative_fn, state, inputs, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size h with frozen inputs."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    y = np.asarray(state, dtype=float)
    k1 = derivative_fn(y, inputs)
    k2 = derivative_fn(y + 0.5 * h * k1, inputs)
    k3 = derivative_fn(y + 0.5 * h * k2, inputs)
    k4 = derivative_fn(y + h * k3, inputs)
    nxt = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(nxt)):
        raise IntegrationError("non-finite state after RK4 step")
    return nxt


def _substeps(dt: float, h_max: float):
    n = max(1, int(math.ceil(dt / h_max - 1e-12)))
    return n, dt / n


def cstr_step(state, inputs: CstrInputs, p: CstrParams, dt: float,
              h_max: float = 0.01):
    """Integrate the CSTR over one sample interval.

    Subdivides dt so every substep is at most h_max (0.01 hr by default).
    Concentration is clamped at zero; returns (state, undershoot) where
    undershoot reports a substep that would have crossed below -1e-9.
    """
    def deriv(y, u):
        return cstr_derivatives(y, u, p)

    y = np.asarray(state, dtype=float)
    n, h = _substeps(dt, h_max)
    undershoot = False
    for _ in range(n):
        y = rk4_step(deriv, y, inputs, h)
        if y[1] < 0.0:
            if y[1] < -1e-9:
                undershoot = True
            y[1] = 0.0
    return y, undershoot


def bicycle_step(state, inputs: BicycleInputs, p: BicycleParams, dt: float,
                 h_max: float = 0.005) -> np.ndarray:
    """Integrate the bicycle over one sample interval (substeps <= h_max s)."""
    def deriv(y, u):
        return bicycle_derivatives(y, u, p)

    y = np.asarray(state, dtype=float)
    n, h = _substeps(dt, h_max)
    for _ in range(n):
        y = rk4_step(deriv, y, inputs, h)
    return y


def cstr_equilibrium(CA_target: float, inputs: CstrInputs, p: CstrParams):
    """Steady state (T_eq, Tc_eq) holding concentration CA_target.

    The material balance is solved for T by bisection on [150, 700] K
    (the rate is increasing in T, so the balance residual is monotone),
    then the energy balance gives Tc linearly. The Tc field of `inputs`
    is ignored. Residuals are asserted below 1e-9 before returning.
    """
    if not 0.0 < CA_target < inputs.CAf:
        raise EquilibriumError("CA_target must lie strictly between 0 and CAf")
    r_needed = p.F_over_V * (inputs.CAf - CA_target)

    def balance(T):
        return r_needed - arrhenius_rate(T, CA_target, p)

    lo, hi = 150.0, 700.0
    f_lo, f_hi = balance(lo), balance(hi)
    if f_lo == 0.0:
        T_eq = lo
    elif f_hi == 0.0:
        T_eq = hi
    elif f_lo * f_hi > 0.0:
        raise EquilibriumError("no steady-state temperature in [150, 700] K")
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if f_lo * balance(mid) <= 0.0:
                hi = mid
            else:
                lo = mid
        T_eq = 0.5 * (lo + hi)

    r = arrhenius_rate(T_eq, CA_target, p)
    Tc_eq = T_eq - (p.rho_cp / p.US_over_V) * (
        p.F_over_V * (inputs.Tf - T_eq) + (p.H / p.rho_cp) * r)

    eq_inputs = CstrInputs(Tc=Tc_eq, Tf=inputs.Tf, CAf=inputs.CAf)
    resid = cstr_derivatives((T_eq, CA_target), eq_inputs, p)
    if np.max(np.abs(resid)) > 1e-9:
        raise EquilibriumError(f"equilibrium residual {np.max(np.abs(resid)):.3e}")
    return float(T_eq), float(Tc_eq)
