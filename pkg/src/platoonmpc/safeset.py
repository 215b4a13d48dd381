"""Safe following sets under worst-case predecessor braking.

A state (h, v) - distance to the predecessor and own velocity - is safe for a
given predecessor speed v0 when the follower can keep h >= h_min even if the
predecessor brakes at the worst-case deceleration until it stops.  Because
maximal braking is the follower's extremal response and headway only improves
for any milder input profile, membership is decided exactly by rolling out
both vehicles under full braking with the discrete kinematic model

    p(k+1) = p(k) + v(k) dt + 1/2 a(k) dt^2,   v(k+1) = v(k) + a(k) dt,

where a stopping vehicle's final step lands exactly on v = 0.  The resulting
boundary h_b(v) is piecewise linear with breakpoints only at integer
multiples of |a_min| dt, so connecting those breakpoints gives an exact
halfspace description.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .params import VehicleParams

CACHE_FORMAT_VERSION = 1

# Relative slack when deciding whether a speed sits exactly on a braking-grid
# multiple; keeps floor() from under-counting by one ulp.
_GRID_EPS = 1e-9


def max_deceleration(params: VehicleParams, u_min: float, v_max: float) -> float:
    """Worst-case (most negative) acceleration: torque floor plus peak friction."""
    f_max = params.static_resistance + params.drag_gain * v_max * v_max
    return (u_min / params.wheel_radius - f_max) / params.mass


@dataclass(frozen=True)
class BrakingSpec:
    """Parameters of the worst-case braking hypothesis."""

    a_min: float      # m/s^2, strictly negative
    h_min: float      # m, minimum allowed distance
    dt: float         # s
    v_max: float      # m/s

    def __post_init__(self) -> None:
        if self.a_min >= 0.0:
            raise ValueError("BrakingSpec.a_min must be strictly negative")
        if self.h_min <= 0.0 or self.dt <= 0.0 or self.v_max <= 0.0:
            raise ValueError("BrakingSpec requires positive h_min, dt, v_max")

    @property
    def quantum(self) -> float:
        """Velocity lost per step under full braking: |a_min| dt."""
        return -self.a_min * self.dt

    def digest(self) -> str:
        key = "|".join(f"{x:.17g}" for x in (self.a_min, self.h_min, self.dt, self.v_max))
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def stopping_steps(v0: float, spec: BrakingSpec) -> tuple[int, float]:
    """(k_s, v0_tilde): braking steps under-approximated so the stop is exact.

    v0_tilde = |a_min| dt k_s <= v0 is the largest grid speed not above v0;
    a vehicle starting there reaches v = 0 in exactly k_s steps.
    """
    if v0 < 0.0:
        if v0 < -1e-9:
            raise ValueError("stopping_steps requires v0 >= 0")
        v0 = 0.0  # planned speeds carry solver-level rounding noise
    b = spec.quantum
    k = int(math.floor(v0 / b))
    if (k + 1) * b <= v0 + _GRID_EPS * b:  # v0 sits on the next multiple, up to fp noise
        k += 1
    return k, k * b


def _braking_travel(v_start: float, spec: BrakingSpec) -> np.ndarray:
    """Cumulative distance at steps 0..K for a vehicle braking from v_start to rest.

    Index K is the first step at which the vehicle is stopped; the final
    partial step uses the deceleration that lands exactly on v = 0.
    """
    b = spec.quantum
    m, _ = stopping_steps(v_start, spec)
    residual = v_start - m * b
    if residual < 1e-12 * max(1.0, v_start):
        residual = 0.0
    speeds = v_start - b * np.arange(m)
    travels = speeds * spec.dt - 0.5 * b * spec.dt
    if residual > 0.0:
        travels = np.append(travels, 0.5 * residual * spec.dt)
    return np.concatenate(([0.0], np.cumsum(travels)))


def _worst_gap_drop(vf: float, v0_tilde: float, spec: BrakingSpec) -> float:
    """min_k (predecessor travel - follower travel) when both fully brake."""
    pp = _braking_travel(v0_tilde, spec)
    pf = _braking_travel(vf, spec)
    n = max(len(pp), len(pf))
    pp = np.pad(pp, (0, n - len(pp)), mode="edge")
    pf = np.pad(pf, (0, n - len(pf)), mode="edge")
    return float(np.min(pp - pf))


def rollout_membership(h0: float, vf: float, v0: float, spec: BrakingSpec) -> bool:
    """Exact membership oracle: does h stay >= h_min when both vehicles brake?

    The predecessor starts from the under-approximated speed v0_tilde, the
    follower from vf; both apply the worst-case deceleration until they stop.
    """
    if h0 <= 0.0:
        return False
    _, v0t = stopping_steps(v0, spec)
    return h0 + _worst_gap_drop(vf, v0t, spec) >= spec.h_min


@dataclass(frozen=True)
class SafeSet:
    """Polytopic safe region in (h, v) for one predecessor speed.

    ``halfspaces`` rows are (a_h, a_v, b) with the region {a_h h + a_v v <= b};
    the last two rows are the velocity facets 0 <= v <= v_max, the rest bound
    the headway from below.  ``breakpoints`` holds the boundary polyline as
    (v, h_b(v)) pairs at the braking-grid velocities.
    """

    v0: float
    v0_tilde: float
    k_s: int
    breakpoints: np.ndarray
    halfspaces: np.ndarray
    spec: BrakingSpec

    @property
    def gap_halfspaces(self) -> np.ndarray:
        """Headway-bounding rows only (facets excluded), for terminal constraints."""
        return self.halfspaces[:-2]

    def contains(self, h: float, v: float, tol: float = 1e-9) -> bool:
        lhs = self.halfspaces[:, 0] * h + self.halfspaces[:, 1] * v
        return bool(np.all(lhs <= self.halfspaces[:, 2] + tol))

    def boundary_height(self, v: float) -> float:
        """h_b(v): minimum safe headway at follower velocity v."""
        return float(np.interp(v, self.breakpoints[:, 0], self.breakpoints[:, 1]))


def _halfspaces_from_breakpoints(breakpoints: np.ndarray, k_s: int,
                                 spec: BrakingSpec) -> np.ndarray:
    rows = [(-1.0, 0.0, -spec.h_min)]
    for j in range(k_s, len(breakpoints) - 1):
        v1, h1 = breakpoints[j]
        v2, h2 = breakpoints[j + 1]
        slope = (h2 - h1) / (v2 - v1)
        rows.append((-1.0, slope, slope * v1 - h1))
    rows.append((0.0, -1.0, 0.0))
    rows.append((0.0, 1.0, spec.v_max))
    return np.array(rows)


def build_safe_set(v0: float, spec: BrakingSpec) -> SafeSet:
    """Construct the exact halfspace description of the safe set for speed v0.

    Boundary heights are evaluated with the braking rollout at every grid
    breakpoint; the boundary is exactly piecewise linear between them because
    the velocity clamp in the braked trajectories switches pieces only there.
    """
    if v0 < 0.0:
        raise ValueError("build_safe_set requires v0 >= 0")
    b = spec.quantum
    k_s, v0t = stopping_steps(v0, spec)
    n_break = math.ceil(spec.v_max / b - _GRID_EPS)
    js = np.arange(n_break + 1)
    heights = np.empty(n_break + 1)
    for j in js:
        drop = _worst_gap_drop(j * b, v0t, spec)
        heights[j] = spec.h_min - min(0.0, drop)
    breakpoints = np.column_stack([js * b, heights])
    return SafeSet(v0=v0, v0_tilde=v0t, k_s=k_s, breakpoints=breakpoints,
                   halfspaces=_halfspaces_from_breakpoints(breakpoints, k_s, spec),
                   spec=spec)


def braking_velocity_profile(plan: np.ndarray, trust_horizon: int,
                             spec: BrakingSpec) -> np.ndarray:
    """Predecessor velocity preview with worst-case braking after the trust horizon.

    The first ``trust_horizon`` entries of the estimated plan are taken at
    face value; from there the predecessor is assumed to brake fully, starting
    at the under-approximated grid speed and losing |a_min| dt per step.
    """
    plan = np.maximum(np.asarray(plan, dtype=float), 0.0)
    n = len(plan) - 1
    if not 0 <= trust_horizon <= n:
        raise ValueError("trust horizon must lie within the plan horizon")
    out = plan.copy()
    _, v0t = stopping_steps(plan[trust_horizon], spec)
    out[trust_horizon] = v0t
    for k in range(trust_horizon + 1, n + 1):
        out[k] = max(0.0, out[k - 1] - spec.quantum)
    return out


class SafeSetFamily:
    """Offline grid of safe sets, one per attainable under-approximated speed.

    Selection quantizes the query speed to the braking grid, so lookups are
    exact: select(v0) returns the set built for v0_tilde(v0).
    """

    def __init__(self, spec: BrakingSpec, _sets: list[SafeSet] | None = None):
        self.spec = spec
        if _sets is None:
            top = int(math.floor(spec.v_max / spec.quantum + _GRID_EPS))
            _sets = [build_safe_set(j * spec.quantum, spec) for j in range(top + 1)]
        self._sets = _sets

    def __len__(self) -> int:
        return len(self._sets)

    def select(self, v0: float) -> SafeSet:
        v0 = min(max(v0, 0.0), self.spec.v_max)
        k, _ = stopping_steps(v0, self.spec)
        return self._sets[min(k, len(self._sets) - 1)]

    def select_interpolated(self, v0: float) -> SafeSet:
        """Seam-free selection: blend the two grid sets bracketing v0.

        The grid sets differ only through the predecessor's stopping
        distance, which is piecewise linear in the pre-braking speed with
        breakpoints exactly on the grid, so interpolating boundary heights
        reproduces the exact-speed certificate (conservatively, because the
        heights carry a convex max-with-h_min clamp).  Unlike the quantized
        lookup, the result varies continuously as the predecessor slows
        through a grid speed, which keeps the terminal constraint one-step
        recoverable for a boundary-riding follower.
        """
        v0 = min(max(v0, 0.0), self.spec.v_max)
        k, vt = stopping_steps(v0, self.spec)
        if k >= len(self._sets) - 1:
            return self._sets[-1]
        frac = (v0 - vt) / self.spec.quantum
        if frac <= 0.0:
            return self._sets[k]
        lo, hi = self._sets[k], self._sets[k + 1]
        breakpoints = lo.breakpoints.copy()
        breakpoints[:, 1] = ((1.0 - frac) * lo.breakpoints[:, 1]
                             + frac * hi.breakpoints[:, 1])
        return SafeSet(v0=v0, v0_tilde=vt, k_s=k, breakpoints=breakpoints,
                       halfspaces=_halfspaces_from_breakpoints(breakpoints, k,
                                                               self.spec),
                       spec=self.spec)

    def save(self, path) -> None:
        payload = {
            "version": CACHE_FORMAT_VERSION,
            "spec_digest": self.spec.digest(),
            "spec": {"a_min": self.spec.a_min, "h_min": self.spec.h_min,
                     "dt": self.spec.dt, "v_max": self.spec.v_max},
            "sets": [
                {"v0": s.v0, "v0_tilde": s.v0_tilde, "k_s": s.k_s,
                 "breakpoints": s.breakpoints.tolist()}
                for s in self._sets
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path, spec: BrakingSpec) -> "SafeSetFamily":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("version") != CACHE_FORMAT_VERSION:
            raise ValueError("safe-set cache has an unsupported format version")
        if payload.get("spec_digest") != spec.digest():
            raise ValueError("safe-set cache was built for a different braking spec")
        sets = []
        for entry in payload["sets"]:
            breakpoints = np.asarray(entry["breakpoints"], dtype=float)
            sets.append(SafeSet(
                v0=entry["v0"], v0_tilde=entry["v0_tilde"], k_s=entry["k_s"],
                breakpoints=breakpoints,
                halfspaces=_halfspaces_from_breakpoints(breakpoints, entry["k_s"], spec),
                spec=spec))
        return cls(spec, _sets=sets)

    @classmethod
    def load_or_build(cls, path, spec: BrakingSpec) -> "SafeSetFamily":
        try:
            return cls.load(path, spec)
        except (OSError, ValueError, KeyError):
            family = cls(spec)
            family.save(path)
            return family
