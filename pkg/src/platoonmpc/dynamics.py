"""Nonlinear longitudinal vehicle model, its linearization, and exact discretization.

The same model serves the plant simulator (4th-order fixed-step integration of
the nonlinear dynamics with a static-friction clamp at rest) and the MPC
prediction models (velocity-parameterized linear models discretized in closed
form under a zero-order hold).

Leader state:   [p, v]          position, velocity
Follower state: [p, s, h, v]    position, distance to leader, distance to
                                predecessor, velocity
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .params import VehicleParams


@dataclass
class LeaderState:
    p: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v])


@dataclass
class FollowerState:
    p: float
    s: float  # distance to the platoon leader (positive when behind)
    h: float  # distance to the immediate predecessor
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.s, self.h, self.v])


@dataclass(frozen=True)
class DiscreteModel:
    """Zero-order-hold discretization of the velocity-parameterized linear model.

    x(k+1) = A x(k) + B u(k) + E w(k) + c

    ``E`` is None for the leader (no disturbance inputs).  ``c`` is the
    discretized constant offset of the friction expansion; carrying it makes
    the prediction exact at the linearization velocity ``v0``.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray | None
    c: np.ndarray
    v0: float
    dt: float

    def __post_init__(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.c.shape[0] != n:
            raise ValueError("DiscreteModel matrix dimensions are inconsistent")
        mats = [self.A, self.B, self.c] + ([self.E] if self.E is not None else [])
        if not all(np.all(np.isfinite(m)) for m in mats):
            raise ValueError("DiscreteModel matrices must be finite")

    def step(self, x: np.ndarray, u: float, w: np.ndarray | None = None) -> np.ndarray:
        nxt = self.A @ x + self.B[:, 0] * u + self.c
        if self.E is not None:
            nxt = nxt + self.E @ np.asarray(w, dtype=float)
        return nxt


def friction_force(params: VehicleParams, v: float) -> float:
    """Total resistive force (N): grade + rolling resistance + aerodynamic drag.

    Valid for v >= 0; strictly increasing in v.
    """
    if v < 0.0:
        raise ValueError("friction_force requires v >= 0")
    return params.static_resistance + params.drag_gain * v * v


def _accel(params: VehicleParams, v: float, u: float) -> float:
    # Static-friction clamp: at rest the wheel torque must beat the rolling
    # resistance before the vehicle moves.
    v = max(v, 0.0)
    drive = u / params.wheel_radius
    if v <= 0.0 and drive <= params.static_resistance:
        return 0.0
    return (drive - friction_force(params, v)) / params.mass


def _rk4_pv(params: VehicleParams, p: float, v: float, u: float, dt: float) -> tuple[float, float]:
    """One classical RK4 step of (p, v) under constant wheel torque."""

    def f(pv):
        return np.array([max(pv[1], 0.0), _accel(params, pv[1], u)])

    y = np.array([p, v])
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return float(y[0]), max(float(y[1]), 0.0)


def plant_step(state: LeaderState | FollowerState, u: float,
               w: tuple[float, float] | None,
               params: VehicleParams, dt: float):
    """Advance the nonlinear plant one sampling interval under constant torque.

    For a follower, ``w = (leader velocity, predecessor velocity)`` is held
    constant over the interval; passing per-interval average velocities keeps
    the relative distances exactly consistent with position differences.
    """
    if dt <= 0.0:
        raise ValueError("plant_step requires dt > 0")
    if isinstance(state, LeaderState):
        p, v = _rk4_pv(params, state.p, state.v, u, dt)
        return LeaderState(p=p, v=v)
    if w is None:
        raise ValueError("follower plant_step requires w=(v_leader, v_predecessor)")
    p, v = _rk4_pv(params, state.p, state.v, u, dt)
    dp = p - state.p
    return FollowerState(
        p=p,
        s=state.s + w[0] * dt - dp,
        h=state.h + w[1] * dt - dp,
        v=v,
    )


def _friction_offset(params: VehicleParams, v0: float) -> float:
    """Constant acceleration offset left over by the first-order friction expansion.

    At v0 = 0 the plant's static-friction clamp cancels the rolling-resistance
    term at rest, so the offset is dropped there; otherwise the first QP from
    standstill could not keep v >= 0 under the slew-rate bound.
    """
    if v0 <= 0.0:
        return 0.0
    return (params.drag_gain * v0 * v0 - params.static_resistance) / params.mass


def linearize_leader(params: VehicleParams, v0: float):
    """Continuous matrices (Abar, Bbar, cbar) of the leader model about v0."""
    if v0 < 0.0:
        raise ValueError("linearize requires v0 >= 0")
    a = -2.0 * params.drag_gain * v0 / params.mass
    Abar = np.array([[0.0, 1.0], [0.0, a]])
    Bbar = np.array([[0.0], [1.0 / (params.mass * params.wheel_radius)]])
    cbar = np.array([0.0, _friction_offset(params, v0)])
    return Abar, Bbar, cbar


def linearize_follower(params: VehicleParams, v0: float):
    """Continuous matrices (Abar, Bbar, Ebar, cbar) of the follower model about v0.

    Disturbance ordering: w = [leader velocity, predecessor velocity]; the
    first feeds the s-row, the second the h-row.
    """
    if v0 < 0.0:
        raise ValueError("linearize requires v0 >= 0")
    a = -2.0 * params.drag_gain * v0 / params.mass
    Abar = np.array([
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0, a],
    ])
    Bbar = np.array([[0.0], [0.0], [0.0], [1.0 / (params.mass * params.wheel_radius)]])
    Ebar = np.array([
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [0.0, 0.0],
    ])
    cbar = np.array([0.0, 0.0, 0.0, _friction_offset(params, v0)])
    return Abar, Bbar, Ebar, cbar


def _phi(x: float) -> tuple[float, float, float]:
    """(e^x, (e^x-1)/x, (e^x-1-x)/x^2) with series evaluation near x = 0."""
    if abs(x) < 1e-2:
        # Truncated Taylor series; the x^12 tail is below 1e-30 here.
        p1 = 0.0
        p2 = 0.0
        for n in range(12, -1, -1):
            p1 = p1 * x + 1.0 / math.factorial(n + 1)
            p2 = p2 * x + 1.0 / math.factorial(n + 2)
        return math.exp(x), p1, p2
    e = math.exp(x)
    return e, (e - 1.0) / x, (e - 1.0 - x) / (x * x)


def discretize(Abar: np.ndarray, Bbar: np.ndarray, dt: float,
               Ebar: np.ndarray | None = None, cbar: np.ndarray | None = None,
               v0: float = math.nan, method: str = "auto") -> DiscreteModel:
    """Exact zero-order-hold discretization of xdot = Abar x + Bbar u + Ebar w + cbar.

    Uses the closed form for the platoon structure (only the velocity state
    couples to itself) and an augmented matrix exponential for general
    matrices; ``method`` may pin one of ``"closed"`` / ``"expm"``.
    """
    if dt <= 0.0:
        raise ValueError("discretize requires dt > 0")
    if method not in ("auto", "closed", "expm"):
        raise ValueError(f"unknown discretization method {method!r}")
    Abar = np.asarray(Abar, dtype=float)
    Bbar = np.asarray(Bbar, dtype=float)
    n = Abar.shape[0]
    if cbar is None:
        cbar = np.zeros(n)
    structured = _is_velocity_column_structure(Abar)
    if method == "closed" and not structured:
        raise ValueError("closed-form discretization needs the velocity-column structure")
    if structured and method != "expm":
        A, psi = _structured_exp(Abar, dt)
        B = psi @ Bbar
        E = psi @ Ebar if Ebar is not None else None
        c = psi @ cbar
        return DiscreteModel(A=A, B=B, E=E, c=c, v0=v0, dt=dt)
    # General fallback: exp of the augmented [[Abar, F],[0, 0]] block matrix.
    forcing = [Bbar]
    if Ebar is not None:
        forcing.append(Ebar)
    forcing.append(cbar.reshape(-1, 1))
    F = np.hstack(forcing)
    m = F.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Abar
    aug[:n, n:] = F
    big = expm(aug * dt)
    A = big[:n, :n]
    blocks = big[:n, n:]
    nb = Bbar.shape[1]
    B = blocks[:, :nb]
    E = blocks[:, nb:-1] if Ebar is not None else None
    c = blocks[:, -1]
    return DiscreteModel(A=A, B=B, E=E, c=c, v0=v0, dt=dt)


def _is_velocity_column_structure(Abar: np.ndarray) -> bool:
    """True when only the last column of Abar is nonzero (our platoon models)."""
    if Abar.shape[0] != Abar.shape[1]:
        return False
    return not np.any(Abar[:, :-1])


def _structured_exp(Abar: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(e^{A dt}, int_0^dt e^{A tau} dtau) for the velocity-column structure."""
    n = Abar.shape[0]
    a = Abar[-1, -1]
    e0, e1, e2 = _phi(a * dt)
    col = Abar[:-1, -1]  # how each non-velocity state integrates velocity
    A = np.eye(n)
    A[-1, -1] = e0
    A[:-1, -1] = col * (e1 * dt)
    psi = np.eye(n) * dt
    psi[-1, -1] = e1 * dt
    psi[:-1, -1] = col * (e2 * dt * dt)
    return A, psi


def leader_model(params: VehicleParams, v0: float, dt: float) -> DiscreteModel:
    Abar, Bbar, cbar = linearize_leader(params, v0)
    return discretize(Abar, Bbar, dt, cbar=cbar, v0=v0)


def follower_model(params: VehicleParams, v0: float, dt: float) -> DiscreteModel:
    Abar, Bbar, Ebar, cbar = linearize_follower(params, v0)
    return discretize(Abar, Bbar, dt, Ebar=Ebar, cbar=cbar, v0=v0)
