"""V2V message schema, information-flow topologies, and per-arc delay queues.

Vehicles are indexed 0 (leader) through N-1; arcs are directed sender ->
receiver pairs and information only flows rearward.  Each receiver retains
the most recent message per sender; messages whose delay exceeds the plan
horizon are unusable and dropped at delivery.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

LEADER_ID = 0


@dataclass(frozen=True)
class V2VMessage:
    """Timestamped planned-velocity broadcast; the leader also sends its position."""

    sender: int
    t_sent: float
    plan: tuple[float, ...]   # planned velocities, horizon+1 samples from t_sent
    position: float | None = None  # current position, present iff sender is leader

    def __post_init__(self) -> None:
        if (self.position is not None) != (self.sender == LEADER_ID):
            raise ValueError("position must be present exactly for leader messages")
        if len(self.plan) < 1:
            raise ValueError("message plan must contain at least one sample")

    @property
    def horizon(self) -> int:
        return len(self.plan) - 1

    def sent_step(self, dt: float) -> int:
        return int(round(self.t_sent / dt))


def validate_plan_bounds(msg: V2VMessage, v_min: float, v_max: float,
                         tol: float = 1e-9) -> None:
    lo, hi = min(msg.plan), max(msg.plan)
    if lo < v_min - tol or hi > v_max + tol:
        raise ValueError(
            f"plan velocities [{lo:.6g}, {hi:.6g}] leave [{v_min}, {v_max}]")


@dataclass(frozen=True)
class Topology:
    """Directed communication arcs of the platoon."""

    n_vehicles: int
    arcs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for snd, rcv in self.arcs:
            if not (0 <= snd < self.n_vehicles and 0 <= rcv < self.n_vehicles):
                raise ValueError(f"arc ({snd}, {rcv}) references an unknown vehicle")
            if snd >= rcv:
                raise ValueError(
                    f"arc ({snd}, {rcv}) is not rearward; information only "
                    "flows away from the leader")
        if len(set(self.arcs)) != len(self.arcs):
            raise ValueError("duplicate arcs")

    def senders_to(self, receiver: int) -> tuple[int, ...]:
        return tuple(s for s, r in self.arcs if r == receiver)

    def receivers_of(self, sender: int) -> tuple[int, ...]:
        return tuple(r for s, r in self.arcs if s == sender)


def predecessor_following(n_vehicles: int) -> Topology:
    """Each follower hears only its immediate predecessor."""
    arcs = tuple((i - 1, i) for i in range(1, n_vehicles))
    return Topology(n_vehicles, arcs)


def predecessor_following_leader(n_vehicles: int) -> Topology:
    """Predecessor arcs plus direct leader arcs to followers 2..N-1."""
    arcs = [(i - 1, i) for i in range(1, n_vehicles)]
    arcs += [(LEADER_ID, i) for i in range(2, n_vehicles)]
    return Topology(n_vehicles, tuple(sorted(arcs)))


TOPOLOGIES = {
    "predecessor_following": predecessor_following,
    "predecessor_following_leader": predecessor_following_leader,
}


def compute_delay(t_received: float, t_sent: float, dt: float) -> int:
    """Delay in whole time steps, rounded up so it never under-counts.

    Timestamps are rational multiples of dt; the 1e-9 guard keeps exact
    multiples from being bumped up a step by float rounding.
    """
    gap = t_received - t_sent
    if gap < -1e-12:
        raise ValueError(f"message received {-gap:.3g}s before it was sent")
    return max(0, math.ceil(gap / dt - 1e-9))


def estimate_velocity(msg: V2VMessage, t: int, d: int, k: int) -> float:
    """Planned velocity of the sender at step k, from a message planned at t-d.

    Queries beyond the plan's end return the terminal sample (the sender is
    assumed to hold its last planned velocity).
    """
    if d < 0:
        raise ValueError("delay must be nonnegative")
    idx = k - (t - d)
    if idx < 0:
        raise ValueError(f"query step {k} precedes the plan origin {t - d}")
    return msg.plan[min(idx, msg.horizon)]


def estimate_plan(msg: V2VMessage | None, t: int, d: int, horizon: int,
                  fallback_v: float) -> np.ndarray:
    """Velocity estimates for steps t..t+horizon; constant fallback without a message."""
    if msg is None:
        return np.full(horizon + 1, fallback_v)
    return np.array([estimate_velocity(msg, t, d, t + j) for j in range(horizon + 1)])


def estimate_leader_position(msg: V2VMessage, d: int, own_p: float, dt: float) -> float:
    """Distance to the leader, dead-reckoned over the message delay.

    The leader's current position is approximated by advancing its reported
    position along the first d planned velocities; under the discrete model
    with constant velocity the sum telescopes exactly.
    """
    if msg.position is None:
        raise ValueError("leader position estimate needs a leader message")
    if d < 0:
        raise ValueError("delay must be nonnegative")
    advanced = msg.position + dt * sum(msg.plan[k] for k in range(min(d, len(msg.plan))))
    return advanced - own_p


@dataclass
class DeliveryRecord:
    t_sent: float
    t_received: float
    sender: int
    receiver: int
    delay_steps: int
    plan: tuple[float, ...]


@dataclass
class MessageBus:
    """Single-owner delayed message fabric advanced by the simulation loop.

    Every arc is a FIFO queue with its own constant latency; ``deliver_until``
    moves everything due at or before t into the receivers' mailboxes.
    """

    topology: Topology
    latency: float | dict[tuple[int, int], float]
    dt: float
    _queues: dict[tuple[int, int], deque] = field(default_factory=dict)
    _mailboxes: dict[int, dict[int, V2VMessage]] = field(default_factory=dict)
    log: list[DeliveryRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._queues = {arc: deque() for arc in self.topology.arcs}
        self._mailboxes = {i: {} for i in range(self.topology.n_vehicles)}

    def _arc_latency(self, arc: tuple[int, int]) -> float:
        if isinstance(self.latency, dict):
            return self.latency[arc]
        return self.latency

    def send(self, msg: V2VMessage) -> None:
        for rcv in self.topology.receivers_of(msg.sender):
            arc = (msg.sender, rcv)
            self._queues[arc].append((msg.t_sent + self._arc_latency(arc), msg))

    def deliver_until(self, t: float) -> dict[int, list[V2VMessage]]:
        """Deliver all queued messages due at or before t; returns them per receiver."""
        delivered: dict[int, list[V2VMessage]] = {}
        for (snd, rcv), queue in self._queues.items():
            while queue and queue[0][0] <= t + 1e-12:
                due, msg = queue.popleft()
                d = compute_delay(t, msg.t_sent, self.dt)
                self.log.append(DeliveryRecord(msg.t_sent, t, snd, rcv, d, msg.plan))
                if d > msg.horizon:
                    continue  # stale: indexing past the plan, keep the old message
                box = self._mailboxes[rcv]
                if snd not in box or msg.t_sent >= box[snd].t_sent:
                    box[snd] = msg
                delivered.setdefault(rcv, []).append(msg)
        return delivered

    def mailbox(self, receiver: int) -> dict[int, V2VMessage]:
        """Most recent retained message per sender (shallow copy, safe to hand out)."""
        return dict(self._mailboxes[receiver])

    def export_log(self, path) -> None:
        """One CSV row per delivery: timing, endpoints, computed delay, plan samples."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            width = max((len(rec.plan) for rec in self.log), default=0)
            writer.writerow(["t_sent", "t_received", "sender", "receiver", "d"]
                            + [f"plan_{k}" for k in range(width)])
            for rec in self.log:
                writer.writerow([rec.t_sent, rec.t_received, rec.sender,
                                 rec.receiver, rec.delay_steps, *rec.plan])
