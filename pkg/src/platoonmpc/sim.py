"""Deterministic closed-loop scenario orchestration and throughput measurement.

Per-step ordering is fixed as deliver -> solve -> send -> advance: messages
due at the current time are delivered, every vehicle solves its MPC on the
resulting snapshots plus exact radar data, the new plans are broadcast into
the delayed bus, and only then do the plants advance one sampling interval.
With the default one-step communication latency this means a controller can
never see a message sent in the same step.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .dynamics import FollowerState, LeaderState, plant_step
from .mpc import FollowerController, LeaderController
from .params import MPCConfig, VehicleParams
from .safeset import BrakingSpec, SafeSetFamily
from .v2v import TOPOLOGIES, MessageBus

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    """Intersection launch scenario: a platoon accelerating from rest at the stop bar."""

    n_vehicles: int = 4
    initial_spacing: float = 6.5     # m between consecutive vehicles at the start
    duration: float = 30.0           # s
    measure_position: float = 30.0   # m past the stop bar where crossings are timed
    latency: float = 0.1             # s, per communication arc
    dt: float = 0.1                  # s, shared sampling time
    topology: str = "predecessor_following_leader"

    def __post_init__(self) -> None:
        if self.n_vehicles < 2:
            raise ValueError("ScenarioConfig.n_vehicles must be at least 2")
        if self.duration <= 0.0 or self.dt <= 0.0:
            raise ValueError("ScenarioConfig duration and dt must be positive")
        if self.measure_position <= 0.0:
            raise ValueError("ScenarioConfig.measure_position must be positive")
        if self.latency < 0.0:
            raise ValueError("ScenarioConfig.latency must be nonnegative")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; "
                             f"choose from {sorted(TOPOLOGIES)}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class SimLog:
    """Per-step arrays of every vehicle's state, input and solver diagnostics."""

    dt: float
    n_vehicles: int
    trust_horizon: int
    t: np.ndarray
    p: np.ndarray
    s: np.ndarray        # NaN for the leader column
    h: np.ndarray        # NaN for the leader column
    v: np.ndarray
    u: np.ndarray
    slack: np.ndarray
    status: list[list[str]]
    solve_time: np.ndarray
    kkt_residual: np.ndarray
    delays: list[list[tuple[int | None, int | None]]]
    bus: MessageBus | None = None

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def total_slack(self) -> float:
        return float(np.nansum(self.slack))

    def min_headway(self) -> float:
        return float(np.nanmin(self.h[:, 1:]))

    def collision_events(self, h_min: float) -> list[dict]:
        """Contiguous intervals with h < h_min, with magnitude and duration."""
        events = []
        for i in range(1, self.n_vehicles):
            below = self.h[:, i] < h_min
            k = 0
            while k < len(below):
                if below[k]:
                    start = k
                    while k < len(below) and below[k]:
                        k += 1
                    seg = self.h[start:k, i]
                    events.append({
                        "vehicle": i,
                        "t_start": float(self.t[start]),
                        "duration": (k - start) * self.dt,
                        "max_violation": float(h_min - seg.min()),
                    })
                else:
                    k += 1
        return events

    def to_csv(self, path) -> None:
        """Trajectory table: one row per (step, vehicle)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "vehicle_id", "p", "s", "h", "v", "u",
                             "slack", "status"])
            for k in range(self.n_steps):
                for i in range(self.n_vehicles):
                    writer.writerow([
                        repr(float(self.t[k])), i,
                        repr(float(self.p[k, i])), repr(float(self.s[k, i])),
                        repr(float(self.h[k, i])), repr(float(self.v[k, i])),
                        repr(float(self.u[k, i])), repr(float(self.slack[k, i])),
                        self.status[k][i],
                    ])

    def controllers_csv(self, path) -> None:
        """Per-solve diagnostics: timing, status, slack, applied torque, delays."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "vehicle_id", "status", "solve_time", "slack",
                             "u", "kkt_residual", "d_leader", "d_predecessor"])
            for k in range(self.n_steps):
                for i in range(self.n_vehicles):
                    d_lead, d_pred = self.delays[k][i]
                    writer.writerow([
                        repr(float(self.t[k])), i, self.status[k][i],
                        repr(float(self.solve_time[k, i])),
                        repr(float(self.slack[k, i])), repr(float(self.u[k, i])),
                        repr(float(self.kkt_residual[k, i])),
                        "" if d_lead is None else d_lead,
                        "" if d_pred is None else d_pred,
                    ])


@dataclass(frozen=True)
class ThroughputResult:
    t_leader: float
    t_last: float
    vehicles_per_hour: float


def init_scenario(scenario: ScenarioConfig, cfg: MPCConfig):
    """Initial platoon states: leader at the stop bar, followers stacked behind."""
    s = scenario.initial_spacing
    if s < cfg.h_min:
        raise ValueError(
            f"initial_spacing {s} violates the minimum distance h_min={cfg.h_min}")
    leader = LeaderState(p=0.0, v=0.0)
    followers = [FollowerState(p=-s * i, s=s * i, h=s, v=0.0)
                 for i in range(1, scenario.n_vehicles)]
    return leader, followers


def run(scenario: ScenarioConfig, params: VehicleParams, cfg: MPCConfig,
        family: SafeSetFamily | None = None, controllers=None) -> SimLog:
    """Simulate the full scenario; deterministic for identical configuration.

    ``controllers`` may inject replacement (leader, followers) controller
    objects implementing the same solve/message protocol, e.g. for tests.
    """
    if family is None:
        spec = BrakingSpec(a_min=cfg.max_decel, h_min=cfg.h_min,
                           dt=scenario.dt, v_max=cfg.v_max)
        family = SafeSetFamily(spec)
    n = scenario.n_vehicles
    dt = scenario.dt
    topology = TOPOLOGIES[scenario.topology](n)
    bus = MessageBus(topology, scenario.latency, dt)

    if controllers is None:
        leader_ctrl = LeaderController(params, cfg, dt)
        follower_ctrls = [
            FollowerController(i, params, cfg, dt, family,
                               initial_leader_distance=scenario.initial_spacing * i)
            for i in range(1, n)
        ]
    else:
        leader_ctrl, follower_ctrls = controllers

    leader, followers = init_scenario(scenario, cfg)
    steps = scenario.n_steps
    log = SimLog(
        dt=dt, n_vehicles=n, trust_horizon=cfg.trust_horizon,
        t=np.arange(steps) * dt,
        p=np.zeros((steps, n)), s=np.full((steps, n), np.nan),
        h=np.full((steps, n), np.nan), v=np.zeros((steps, n)),
        u=np.zeros((steps, n)), slack=np.zeros((steps, n)),
        status=[], solve_time=np.zeros((steps, n)),
        kkt_residual=np.zeros((steps, n)), delays=[], bus=bus,
    )

    for k in range(steps):
        now = k * dt
        bus.deliver_until(now)
        snapshots = {i: bus.mailbox(i) for i in range(1, n)}

        plans = [leader_ctrl.solve(leader)]
        for i in range(1, n):
            st = followers[i - 1]
            pred_v = leader.v if i == 1 else followers[i - 2].v
            plans.append(follower_ctrls[i - 1].solve(
                k, st.p, st.v, st.h, pred_v, snapshots[i]))

        bus.send(leader_ctrl.message(now, leader, plans[0]))
        for i in range(1, n):
            bus.send(follower_ctrls[i - 1].message(now, plans[i]))

        log.p[k, 0], log.v[k, 0] = leader.p, leader.v
        for i in range(1, n):
            st = followers[i - 1]
            log.p[k, i], log.s[k, i] = st.p, st.s
            log.h[k, i], log.v[k, i] = st.h, st.v
        log.u[k] = [pl.applied_input for pl in plans]
        log.slack[k] = [pl.slack for pl in plans]
        log.status.append([pl.status for pl in plans])
        log.solve_time[k] = [pl.solve_time for pl in plans]
        log.kkt_residual[k] = [pl.kkt_residual for pl in plans]
        log.delays.append([pl.observed_delays for pl in plans])
        if not all(pl.feasible for pl in plans):
            bad = [i for i, pl in enumerate(plans) if not pl.feasible]
            LOG.warning("step %d: hard-infeasible controllers %s", k, bad)

        # advance plants front to back; each follower receives the interval-
        # average velocities of the vehicles it measures, keeping the logged
        # relative distances exactly consistent with position differences
        new_leader = plant_step(leader, plans[0].applied_input, None, params, dt)
        avg_v = [(new_leader.p - leader.p) / dt]
        new_followers = []
        for i in range(1, n):
            st = followers[i - 1]
            nxt = plant_step(st, plans[i].applied_input,
                             (avg_v[0], avg_v[i - 1]), params, dt)
            avg_v.append((nxt.p - st.p) / dt)
            new_followers.append(nxt)
        leader, followers = new_leader, new_followers

    return log


def crossing_time(times: np.ndarray, positions: np.ndarray, ell: float,
                  label: str) -> float:
    """First time the position trace reaches ell, linearly interpolated."""
    idx = np.argmax(positions >= ell)
    if positions[idx] < ell:
        raise ValueError(f"{label} never reaches the measurement position "
                         f"{ell} m within the logged horizon")
    if idx == 0:
        return float(times[0])
    p0, p1 = positions[idx - 1], positions[idx]
    return float(times[idx - 1] + (times[idx] - times[idx - 1]) * (ell - p0) / (p1 - p0))


def measure_throughput(log: SimLog, ell: float, n_vehicles: int) -> ThroughputResult:
    """Vehicles per hour past ell, from leader and last-follower crossing times."""
    t_leader = crossing_time(log.t, log.p[:, 0], ell, "leader")
    t_last = crossing_time(log.t, log.p[:, n_vehicles - 1], ell,
                           f"follower {n_vehicles - 1}")
    vph = 3600.0 * (n_vehicles - 1) / (t_last - t_leader)
    return ThroughputResult(t_leader=t_leader, t_last=t_last, vehicles_per_hour=vph)


def sweep_trust(scenario: ScenarioConfig, params: VehicleParams, cfg: MPCConfig,
                trust_values, family: SafeSetFamily | None = None):
    """One independent run per trust horizon, identical configuration otherwise.

    Returns (results, logs): a list of (F, ThroughputResult) plus the SimLog
    of every run, both in sweep order.
    """
    trust_values = list(trust_values)
    if not trust_values:
        raise ValueError("sweep requires at least one trust horizon value")
    for f in trust_values:
        if not 0 <= int(f) <= cfg.horizon:
            raise ValueError(f"trust horizon {f} outside [0, {cfg.horizon}]")
    if family is None:
        spec = BrakingSpec(a_min=cfg.max_decel, h_min=cfg.h_min,
                           dt=scenario.dt, v_max=cfg.v_max)
        family = SafeSetFamily(spec)
    results = []
    logs = []
    for f in trust_values:
        log = run(scenario, params, cfg.with_trust_horizon(int(f)), family=family)
        logs.append(log)
        results.append((int(f), measure_throughput(log, scenario.measure_position,
                                                   scenario.n_vehicles)))
    return results, logs


def write_sweep_csv(results, path) -> None:
    """Sweep table: F, leader and last crossing times, vehicles per hour."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["F", "t_leader", "t_last", "vph"])
        for f, res in results:
            writer.writerow([f, repr(res.t_leader), repr(res.t_last),
                             repr(res.vehicles_per_hour)])
