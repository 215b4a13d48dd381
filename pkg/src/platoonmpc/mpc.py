"""Leader and follower model predictive controllers.

Each controller rebuilds its prediction model at the current velocity every
step, condenses the states out of the horizon, and solves a dense QP.  The
follower softens the minimum-distance and terminal-set constraints with a
single heavily weighted slack variable; torque, slew-rate and velocity limits
stay hard.  Torque variables are solved in kNm and the slack in mm so the
QP is well scaled regardless of the physical magnitudes.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .dynamics import LeaderState, follower_model, leader_model
from .params import MPCConfig, VehicleParams
from .qp import INFEASIBLE, OPTIMAL, QProblem, condense, dump_problem, solve
from .safeset import BrakingSpec, SafeSet, SafeSetFamily, braking_velocity_profile
from .v2v import (
    LEADER_ID,
    V2VMessage,
    compute_delay,
    estimate_leader_position,
    estimate_plan,
    estimate_velocity,
)

LOG = logging.getLogger(__name__)

_U_SCALE = 1000.0        # torque decision variables in kNm
_KKT_USABLE = 1e-3       # residual below which a non-optimal iterate is still applied


@dataclass
class ControlPlan:
    """One controller solve: applied input, full planned trajectory, and diagnostics."""

    inputs: np.ndarray                 # wheel torques (Nm), the first is applied
    velocities: np.ndarray             # planned velocities, horizon+1 samples
    positions: np.ndarray | None       # planned positions (leader only)
    feasible: bool
    slack: float                       # constraint softening used (m)
    status: str
    kkt_residual: float
    objective: float
    solve_time: float
    observed_delays: tuple[int | None, int | None] = (None, None)

    @property
    def applied_input(self) -> float:
        return float(self.inputs[0])


def _difference_matrix(n: int) -> np.ndarray:
    """(n-1) x n first differences u(k+1) - u(k) inside the plan."""
    D = np.zeros((n - 1, n))
    for j in range(n - 1):
        D[j, j] = -1.0
        D[j, j + 1] = 1.0
    return D


def _input_constraint_rows(n_z: int, cfg: MPCConfig, dt: float):
    """Hard torque bounds and the within-plan slew-rate limit.

    The slew bound shapes every planned torque trajectory; the first planned
    input is free so that full braking authority is always available, which
    the terminal safe sets presuppose.
    """
    N = cfg.horizon
    eye = np.zeros((N, n_z))
    eye[:, :N] = np.eye(N) * _U_SCALE
    diff = np.zeros((N - 1, n_z))
    diff[:, :N] = _difference_matrix(N) * _U_SCALE
    du = cfg.du_max * dt
    G = np.vstack([eye, -eye, diff, -diff])
    g = np.concatenate([
        np.full(N, cfg.u_max),
        np.full(N, -cfg.u_min),
        np.full(N - 1, du),
        np.full(N - 1, du),
    ])
    return G, g


class LeaderController:
    """Drives the platoon head toward its desired cruise velocity."""

    def __init__(self, params: VehicleParams, cfg: MPCConfig, dt: float,
                 debug_dump_dir=None):
        self.params = params
        self.cfg = cfg
        self.dt = dt
        self.u_prev = 0.0
        self.debug_dump_dir = debug_dump_dir
        self._jerk = _difference_matrix(cfg.horizon)

    def solve(self, state: LeaderState) -> ControlPlan:
        t0 = time.perf_counter()
        cfg = self.cfg
        N = cfg.horizon
        model = leader_model(self.params, state.v, self.dt)
        Su, d = condense(model, N, state.as_array())
        Mp, dp = Su[0::2], d[0::2]
        Mv, dv = Su[1::2], d[1::2]

        cN = Mv[-1] * _U_SCALE
        H = 2.0 * (np.outer(cN, cN) + cfg.jerk_weight * _U_SCALE ** 2
                   * (self._jerk.T @ self._jerk))
        f = 2.0 * cN * (dv[-1] - cfg.v_des)

        Gu, gu = _input_constraint_rows(N, cfg, self.dt)
        Gv = np.vstack([Mv, -Mv]) * _U_SCALE
        gv = np.concatenate([cfg.v_max - dv, dv - cfg.v_min])
        qp = QProblem(H=H, f=f, G=np.vstack([Gu, Gv]), g=np.concatenate([gu, gv]))
        sol = solve(qp)
        elapsed = time.perf_counter() - t0

        if sol.status == INFEASIBLE or (sol.status != OPTIMAL
                                        and sol.kkt_residual > _KKT_USABLE):
            LOG.warning("leader solve returned %s; holding previous torque", sol.status)
            if self.debug_dump_dir is not None:
                dump_problem(qp, f"{self.debug_dump_dir}/leader_failed.qp")
            return self._fallback(state, sol.status, elapsed)

        u = sol.z * _U_SCALE
        plan = ControlPlan(
            inputs=u,
            velocities=np.concatenate(([state.v], Mv @ u + dv)),
            positions=np.concatenate(([state.p], Mp @ u + dp)),
            feasible=True,
            slack=0.0,
            status=sol.status,
            kkt_residual=sol.kkt_residual,
            objective=sol.objective,
            solve_time=elapsed,
        )
        self.u_prev = plan.applied_input
        return plan

    def _fallback(self, state: LeaderState, status: str, elapsed: float) -> ControlPlan:
        u = float(np.clip(self.u_prev, self.cfg.u_min, self.cfg.u_max))
        vel = np.full(self.cfg.horizon + 1, np.clip(state.v, self.cfg.v_min, self.cfg.v_max))
        pos = state.p + np.arange(self.cfg.horizon + 1) * self.dt * vel[0]
        plan = ControlPlan(inputs=np.full(self.cfg.horizon, u), velocities=vel,
                           positions=pos, feasible=False, slack=0.0, status=status,
                           kkt_residual=np.inf, objective=np.inf, solve_time=elapsed)
        self.u_prev = u
        return plan

    def message(self, t_now: float, state: LeaderState, plan: ControlPlan) -> V2VMessage:
        return V2VMessage(sender=LEADER_ID, t_sent=t_now,
                          plan=tuple(plan.velocities), position=state.p)


def select_terminal_set(pred_msg: V2VMessage | None, t: int, trust_horizon: int,
                        radar_v: float, family: SafeSetFamily, dt: float,
                        interpolate: bool = True) -> SafeSet:
    """Pick the safe set keyed by the predecessor speed at the end of the trust window.

    With no trust (or no message yet) the current radar speed decides; with
    trust the most recent plan's estimate at t + trust_horizon does.  The
    interpolated selection varies continuously with the key speed; pass
    ``interpolate=False`` for the plain quantized grid lookup.
    """
    if trust_horizon == 0 or pred_msg is None:
        v0 = radar_v
    else:
        d = compute_delay(t * dt, pred_msg.t_sent, dt)
        v0 = estimate_velocity(pred_msg, t, d, t + trust_horizon)
    return family.select_interpolated(v0) if interpolate else family.select(v0)


class FollowerController:
    """Tracks a desired distance to the leader while staying inside the safe set.

    The controller consumes only the previous step's message snapshots plus
    exact radar data; the cold-start distance to the leader falls back to the
    scenario's known initial spacing until a leader message arrives.
    """

    def __init__(self, index: int, params: VehicleParams, cfg: MPCConfig, dt: float,
                 family: SafeSetFamily, initial_leader_distance: float,
                 debug_dump_dir=None):
        if index < 1:
            raise ValueError("follower indices start at 1")
        self.index = index
        self.params = params
        self.cfg = cfg
        self.dt = dt
        self.family = family
        self.spec: BrakingSpec = family.spec
        self.s_des = cfg.h_des * index
        self.debug_dump_dir = debug_dump_dir
        self._jerk = _difference_matrix(cfg.horizon)
        self._s_est = initial_leader_distance

    def solve(self, t: int, own_p: float, own_v: float, radar_h: float,
              radar_v_pred: float, mailbox: dict[int, V2VMessage]) -> ControlPlan:
        t0 = time.perf_counter()
        cfg = self.cfg
        N = cfg.horizon
        now = t * self.dt

        pred_id = self.index - 1
        pred_msg = mailbox.get(pred_id)
        lead_msg = mailbox.get(LEADER_ID)
        d_pred = compute_delay(now, pred_msg.t_sent, self.dt) if pred_msg else None
        d_lead = compute_delay(now, lead_msg.t_sent, self.dt) if lead_msg else None

        raw_pred = estimate_plan(pred_msg, t, d_pred or 0, N, fallback_v=radar_v_pred)
        braked_pred = braking_velocity_profile(raw_pred, cfg.trust_horizon, self.spec)
        terminal_set = select_terminal_set(pred_msg, t, cfg.trust_horizon,
                                           radar_v_pred, self.family, self.dt)

        if pred_id == LEADER_ID:
            # the leader is the predecessor: its preview carries the same
            # hypothesized braking as the headway preview
            lead_est = braked_pred
        else:
            lead_est = estimate_plan(lead_msg, t, d_lead or 0, N,
                                     fallback_v=radar_v_pred)
        if lead_msg is not None:
            s_hat = estimate_leader_position(lead_msg, d_lead, own_p, self.dt)
        else:
            s_hat = self._s_est

        x0 = np.array([own_p, s_hat, radar_h, own_v])
        w = np.column_stack([lead_est[:N], braked_pred[:N]])
        plan = self._solve_qp(x0, w, terminal_set, own_v, t0)
        plan.observed_delays = (d_lead, d_pred)
        # dead-reckon the leader distance for topologies without a leader arc
        self._s_est = s_hat + self.dt * (lead_est[0] - own_v)
        return plan

    def _solve_qp(self, x0: np.ndarray, w: np.ndarray, terminal_set: SafeSet,
                  own_v: float, t0: float) -> ControlPlan:
        cfg = self.cfg
        N = cfg.horizon
        n_z = N + 1  # torques plus one slack variable
        model = follower_model(self.params, own_v, self.dt)
        Su, d = condense(model, N, x0, w)
        Ms, ds = Su[1::4], d[1::4]
        Mh, dh = Su[2::4], d[2::4]
        Mv, dv = Su[3::4], d[3::4]

        H = np.zeros((n_z, n_z))
        f = np.zeros(n_z)
        Ms_s = Ms * _U_SCALE
        H[:N, :N] = 2.0 * (Ms_s.T @ Ms_s + cfg.jerk_weight * _U_SCALE ** 2
                           * (self._jerk.T @ self._jerk))
        H[N, N] = 2.0 * cfg.slack_weight
        f[:N] = 2.0 * Ms_s.T @ (ds - self.s_des)
        f[N] = cfg.slack_linear_weight

        Gu, gu = _input_constraint_rows(n_z, cfg, self.dt)

        # the velocity floor is softened alongside the distance constraints:
        # the plant clamps at rest anyway, and a hard floor can deadlock with
        # the throttle-up rate limit after deep braking
        Gv = np.zeros((2 * N, n_z))
        Gv[:N, :N] = Mv * _U_SCALE
        Gv[N:, :N] = -Mv * _U_SCALE
        Gv[N:, N] = -1.0
        gv = np.concatenate([cfg.v_max - dv, dv - cfg.v_min])

        Gh = np.zeros((N, n_z))
        Gh[:, :N] = -Mh * _U_SCALE
        Gh[:, N] = -1.0
        gh = dh - cfg.h_min

        k_term = max(1, cfg.trust_horizon) - 1  # row index of step t+max(1, F)
        rows = terminal_set.gap_halfspaces
        Gt = np.zeros((len(rows), n_z))
        Gt[:, :N] = (np.outer(rows[:, 0], Mh[k_term]) +
                     np.outer(rows[:, 1], Mv[k_term])) * _U_SCALE
        Gt[:, N] = -1.0
        gt = rows[:, 2] - rows[:, 0] * dh[k_term] - rows[:, 1] * dv[k_term]

        Gs = np.zeros((1, n_z))
        Gs[0, N] = -1.0
        qp = QProblem(H=H, f=f, G=np.vstack([Gu, Gv, Gh, Gt, Gs]),
                      g=np.concatenate([gu, gv, gh, gt, [0.0]]))
        sol = solve(qp)
        elapsed = time.perf_counter() - t0

        unusable = sol.status == INFEASIBLE or (
            sol.status != OPTIMAL and sol.kkt_residual > _KKT_USABLE)
        if unusable:
            LOG.warning("follower %d solve returned %s; applying maximum braking",
                        self.index, sol.status)
            if self.debug_dump_dir is not None:
                dump_problem(qp, f"{self.debug_dump_dir}/follower{self.index}_failed.qp")
            return self._fallback(own_v, sol.status, time.perf_counter() - t0)

        u = sol.z[:N] * _U_SCALE
        return ControlPlan(
            inputs=u,
            velocities=np.concatenate(([own_v], Mv @ u + dv)),
            positions=None,
            feasible=True,
            slack=float(sol.z[N]),
            status=sol.status,
            kkt_residual=sol.kkt_residual,
            objective=sol.objective,
            solve_time=elapsed,
        )

    def _fallback(self, own_v: float, status: str, elapsed: float) -> ControlPlan:
        vel = braking_velocity_profile(np.full(self.cfg.horizon + 1, own_v), 0, self.spec)
        return ControlPlan(inputs=np.full(self.cfg.horizon, self.cfg.u_min),
                           velocities=vel, positions=None, feasible=False,
                           slack=0.0, status=status, kkt_residual=np.inf,
                           objective=np.inf, solve_time=elapsed)

    def message(self, t_now: float, plan: ControlPlan) -> V2VMessage:
        return V2VMessage(sender=self.index, t_sent=t_now, plan=tuple(plan.velocities))
