"""Physical and controller parameter sets with the homogeneous-fleet defaults."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class VehicleParams:
    """Longitudinal model constants shared by every vehicle in the platoon.

    The wheel radius is not independently measurable from the published data
    set; it is frozen to the value that makes the worst-case deceleration
    (see safeset.max_deceleration) come out at -3.218 m/s^2 with the default
    torque floor of -2000 Nm.
    """

    mass: float = 1722.0            # kg
    reference_area: float = 2.6292  # m^2
    air_density: float = 1.206      # kg/m^3
    drag_coefficient: float = 0.2047
    roll_coefficient: float = 0.0106
    wheel_radius: float = 0.39445   # m, frozen (see class docstring)
    gravity: float = 9.81           # m/s^2
    road_grade: float = 0.0         # rad, kept for generality, fixed 0 here

    def __post_init__(self) -> None:
        for name in ("mass", "reference_area", "air_density", "drag_coefficient",
                     "roll_coefficient", "wheel_radius", "gravity"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"VehicleParams.{name} must be strictly positive")

    @property
    def static_resistance(self) -> float:
        """Tractive force (N) needed to overcome grade plus rolling resistance at rest."""
        return self.mass * self.gravity * (
            math.sin(self.road_grade) + self.roll_coefficient * math.cos(self.road_grade)
        )

    @property
    def drag_gain(self) -> float:
        """Coefficient of v^2 in the aerodynamic drag force (N s^2/m^2)."""
        return 0.5 * self.air_density * self.reference_area * self.drag_coefficient


@dataclass(frozen=True)
class MPCConfig:
    """Horizon, weights and bounds for the leader and follower controllers.

    ``jerk_weight`` multiplies squared torque increments (Nm^2); a value
    around 1e-4 keeps it subordinate to the (m/s)^2 and m^2 tracking terms.
    ``max_decel`` is derived from the vehicle parameters and torque floor via
    :func:`platoonmpc.safeset.max_deceleration`; use :func:`default_mpc_config`.
    """

    horizon: int = 20               # prediction steps
    jerk_weight: float = 1e-4       # weight on (u(k+1)-u(k))^2
    slack_weight: float = 1e6       # quadratic weight on the softening slack
    slack_linear_weight: float = 1e4  # exact-penalty term: slack stays 0 while feasible
    h_des: float = 9.0              # desired inter-vehicle distance (m)
    h_min: float = 6.5              # minimum allowed distance (m)
    v_min: float = 0.0              # m/s
    v_max: float = 30.0             # m/s
    v_des: float = 15.64            # m/s
    u_min: float = -2000.0          # Nm
    u_max: float = 1500.0           # Nm
    du_max: float = 250.0           # Nm/s slew-rate bound
    trust_horizon: int = 0          # steps of the predecessor plan taken at face value
    max_decel: float = field(default=math.nan)  # m/s^2, negative; derived

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("MPCConfig.horizon must be >= 1")
        if not 0 <= self.trust_horizon <= self.horizon:
            raise ValueError("MPCConfig.trust_horizon must lie in [0, horizon]")
        if not self.u_min < 0.0 < self.u_max:
            raise ValueError("MPCConfig torque bounds must straddle zero")
        if not self.h_min < self.h_des:
            raise ValueError("MPCConfig.h_min must be below h_des")
        if self.du_max <= 0.0:
            raise ValueError("MPCConfig.du_max must be strictly positive")

    def with_trust_horizon(self, trust: int) -> "MPCConfig":
        return replace(self, trust_horizon=int(trust))


def default_mpc_config(params: VehicleParams | None = None, **overrides) -> MPCConfig:
    """MPCConfig with ``max_decel`` filled in from the vehicle parameters."""
    from .safeset import max_deceleration  # local import to avoid a cycle

    params = params or VehicleParams()
    cfg = MPCConfig(**overrides)
    if math.isnan(cfg.max_decel):
        cfg = replace(cfg, max_decel=max_deceleration(params, cfg.u_min, cfg.v_max))
    return cfg
