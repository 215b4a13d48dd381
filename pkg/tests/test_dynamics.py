import numpy as np
import pytest
from hypothesis import given, strategies as st

from platoonmpc.dynamics import (
    DiscreteModel,
    FollowerState,
    LeaderState,
    discretize,
    follower_model,
    friction_force,
    leader_model,
    linearize_follower,
    linearize_leader,
    plant_step,
)
from platoonmpc.params import VehicleParams

P = VehicleParams()
DT = 0.1


def nonlinear_accel(v, u):
    # independent restatement of the force balance for oracle integration
    drive = u / P.wheel_radius
    roll = P.mass * P.gravity * P.roll_coefficient
    drag = 0.5 * P.air_density * P.reference_area * P.drag_coefficient * v * v
    return (drive - roll - drag) / P.mass


def integrate_nonlinear(v0, u, dt, substeps=10000):
    """High-resolution RK4 of the unclamped nonlinear velocity ODE."""
    h = dt / substeps
    v = v0
    for _ in range(substeps):
        k1 = nonlinear_accel(v, u)
        k2 = nonlinear_accel(v + 0.5 * h * k1, u)
        k3 = nonlinear_accel(v + 0.5 * h * k2, u)
        k4 = nonlinear_accel(v + h * k3, u)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


def integrate_linear_zoh(Abar, F, dt, substeps=2000):
    """High-resolution RK4 of Xdot = Abar X + F (matrix-valued, ZOH forcing)."""
    n = Abar.shape[0]
    X = np.eye(n)
    G = np.zeros_like(F)
    h = dt / substeps
    for _ in range(substeps):
        def fX(M):
            return Abar @ M

        def fG(M):
            return Abar @ M + F

        k1x, k1g = fX(X), fG(G)
        k2x, k2g = fX(X + 0.5 * h * k1x), fG(G + 0.5 * h * k1g)
        k3x, k3g = fX(X + 0.5 * h * k2x), fG(G + 0.5 * h * k2g)
        k4x, k4g = fX(X + h * k3x), fG(G + h * k3g)
        X = X + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        G = G + (h / 6.0) * (k1g + 2 * k2g + 2 * k3g + k4g)
    return X, G


class TestFrictionForce:
    def test_at_rest_equals_rolling_resistance(self):
        expected = 1722.0 * 9.81 * 0.0106
        assert friction_force(P, 0.0) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(179.06, abs=5e-3)

    def test_at_cruise_speed(self):
        assert friction_force(P, 15.64) == pytest.approx(258.4, abs=0.1)

    def test_at_speed_cap(self):
        assert friction_force(P, 30.0) == pytest.approx(471.1, abs=0.1)

    def test_rejects_negative_speed(self):
        with pytest.raises(ValueError):
            friction_force(P, -1.0)

    @given(st.floats(min_value=0.0, max_value=60.0),
           st.floats(min_value=1e-6, max_value=10.0))
    def test_strictly_increasing(self, v, dv):
        assert friction_force(P, v + dv) > friction_force(P, v)


class TestPlantStep:
    def test_static_friction_holds_at_rest(self):
        out = plant_step(LeaderState(p=0.0, v=0.0), 0.0, None, P, DT)
        assert out.v == 0.0
        assert out.p == 0.0

    def test_torque_below_breakaway_holds_at_rest(self):
        breakaway = P.static_resistance * P.wheel_radius
        out = plant_step(LeaderState(p=0.0, v=0.0), 0.9 * breakaway, None, P, DT)
        assert out.v == 0.0 and out.p == 0.0

    def test_equilibrium_torque_keeps_speed(self):
        u = P.wheel_radius * friction_force(P, 10.0)
        out = plant_step(LeaderState(p=0.0, v=10.0), u, None, P, DT)
        assert out.v == pytest.approx(10.0, abs=1e-6)

    def test_acceleration_matches_fine_integration(self):
        out = plant_step(LeaderState(p=0.0, v=5.0), 1500.0, None, P, DT)
        expected = integrate_nonlinear(5.0, 1500.0, DT)
        assert out.v == pytest.approx(expected, abs=1e-6)

    def test_coasting_strictly_decelerates(self):
        v = 8.0
        for _ in range(20):
            nxt = plant_step(LeaderState(p=0.0, v=v), 0.0, None, P, DT)
            assert nxt.v < v
            v = nxt.v

    def test_follower_relative_states_track_positions(self):
        st0 = FollowerState(p=-6.5, s=6.5, h=6.5, v=3.0)
        out = plant_step(st0, 800.0, (4.0, 3.5), P, DT)
        dp = out.p - st0.p
        assert out.s == pytest.approx(6.5 + 4.0 * DT - dp, abs=1e-12)
        assert out.h == pytest.approx(6.5 + 3.5 * DT - dp, abs=1e-12)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            plant_step(LeaderState(0.0, 0.0), 0.0, None, P, 0.0)


class TestLinearize:
    def test_leader_at_rest_is_double_integrator(self):
        Abar, Bbar, cbar = linearize_leader(P, 0.0)
        assert np.allclose(Abar, [[0.0, 1.0], [0.0, 0.0]])
        assert Bbar[1, 0] == pytest.approx(1.0 / (P.mass * P.wheel_radius))
        assert np.all(cbar == 0.0)

    def test_velocity_damping_entry(self):
        Abar, _, _ = linearize_leader(P, 15.64)
        expected = -(P.air_density * P.reference_area * P.drag_coefficient * 15.64) / P.mass
        assert Abar[1, 1] == pytest.approx(expected, rel=1e-12)
        assert Abar[1, 1] == pytest.approx(-5.895e-3, abs=1e-6)

    def test_follower_disturbance_rows(self):
        _, _, Ebar, _ = linearize_follower(P, 12.0)
        assert np.allclose(Ebar[1], [1.0, 0.0])  # s-row integrates leader speed
        assert np.allclose(Ebar[2], [0.0, 1.0])  # h-row integrates predecessor speed

    def test_offset_makes_expansion_exact_at_v0(self):
        v0 = 11.3
        Abar, Bbar, cbar = linearize_leader(P, v0)
        u = 600.0
        vdot_lin = Abar[1, 1] * v0 + Bbar[1, 0] * u + cbar[1]
        vdot_true = nonlinear_accel(v0, u)
        assert vdot_lin == pytest.approx(vdot_true, abs=1e-12)


class TestDiscretize:
    def test_leader_at_rest_closed_form(self):
        m = leader_model(P, 0.0, DT)
        assert np.allclose(m.A, [[1.0, 0.1], [0.0, 1.0]])
        bu = 1.0 / (P.mass * P.wheel_radius)
        assert m.B[0, 0] == pytest.approx(DT * DT / 2.0 * bu, rel=1e-12)
        assert m.B[1, 0] == pytest.approx(DT * bu, rel=1e-12)
        assert m.B[0, 0] == pytest.approx(7.36e-6, abs=1e-8)
        assert m.B[1, 0] == pytest.approx(1.472e-4, abs=1e-7)

    def test_vanishing_dt_first_order(self):
        Abar, Bbar, cbar = linearize_leader(P, 22.0)
        m = discretize(Abar, Bbar, 1e-9, cbar=cbar)
        assert np.allclose(m.A, np.eye(2) + Abar * 1e-9, atol=1e-12)

    @pytest.mark.parametrize("v0", [0.0, 3.7, 15.64, 29.9])
    def test_matches_fine_integration_of_linear_ode(self, v0):
        Abar, Bbar, Ebar, cbar = linearize_follower(P, v0)
        m = follower_model(P, v0, DT)
        F = np.hstack([Bbar, Ebar, cbar.reshape(-1, 1)])
        Aref, Gref = integrate_linear_zoh(Abar, F, DT)
        assert np.allclose(m.A, Aref, atol=1e-8)
        assert np.allclose(m.B, Gref[:, :1], atol=1e-8)
        assert np.allclose(m.E, Gref[:, 1:3], atol=1e-8)
        assert np.allclose(m.c, Gref[:, 3], atol=1e-8)

    def test_structured_path_matches_generic_expm(self):
        for v0 in (0.0, 1.2, 18.0):
            Abar, Bbar, Ebar, cbar = linearize_follower(P, v0)
            fast = follower_model(P, v0, DT)
            dense = discretize(Abar, Bbar, DT, Ebar=Ebar, cbar=cbar, method="expm")
            assert np.allclose(fast.A, dense.A, atol=1e-13)
            assert np.allclose(fast.B, dense.B, atol=1e-13)
            assert np.allclose(fast.E, dense.E, atol=1e-13)
            assert np.allclose(fast.c, dense.c, atol=1e-13)

    def test_generic_route_on_unstructured_matrix(self):
        rng = np.random.default_rng(7)
        Abar = rng.normal(size=(3, 3))
        Bbar = rng.normal(size=(3, 1))
        m = discretize(Abar, Bbar, DT)
        Aref, Gref = integrate_linear_zoh(Abar, Bbar, DT)
        assert np.allclose(m.A, Aref, atol=1e-8)
        assert np.allclose(m.B, Gref, atol=1e-8)

    @pytest.mark.parametrize("v0", np.linspace(0.0, 30.0, 7))
    def test_state_matrix_invertible(self, v0):
        m = follower_model(P, v0, DT)
        assert abs(np.linalg.det(m.A)) > 1e-6

    def test_model_step_matches_plant_at_linearization_point(self):
        # constant torque at the linearization speed: one discrete step agrees
        # with the nonlinear plant to well under 1e-5 m/s
        for v0 in (0.0, 6.0, 15.64):
            u = P.wheel_radius * friction_force(P, v0) if v0 > 0.0 else 0.0
            m = leader_model(P, v0, DT)
            pred = m.step(np.array([0.0, v0]), u)
            plant = plant_step(LeaderState(0.0, v0), u, None, P, DT)
            assert pred[1] == pytest.approx(plant.v, abs=1e-5)

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            DiscreteModel(A=np.eye(2), B=np.zeros((3, 1)), E=None,
                          c=np.zeros(2), v0=0.0, dt=DT)
