"""Tests for the analytic cost model."""
import math

import pytest

from loccost.cost import (
    avg_cost,
    best_alpha,
    continuity_constant,
    cost_curve,
    e_theta,
    residual_angle,
    success_prob,
    theta_grid,
    theta_max_solve,
    tradeoff_report,
)
from loccost.errors import ParameterRangeError


class TestClosedForms:
    """p(alpha, theta), residual angle and expected cost."""

    def test_half_pi(self):
        """p(pi/2, pi/2) = 1/2 and the expected cost is 3/2."""
        assert success_prob(math.pi / 2, math.pi / 2) == pytest.approx(0.5)
        assert avg_cost(math.pi / 2, math.pi / 2) == pytest.approx(1.5)

    @pytest.mark.parametrize("theta", [1e-3, 0.2, 1.0, math.pi / 2])
    def test_alpha_equals_theta(self, theta):
        """p(theta, theta) = 1/2 everywhere in range."""
        assert success_prob(theta, theta) == pytest.approx(0.5, abs=1e-12)

    def test_no_resource_no_success(self):
        """alpha -> 0 gives p -> 0 and cost -> 1."""
        assert success_prob(1e-9, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert avg_cost(1e-9, 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_residual_angle_tangent_rule(self):
        """tan(theta'/2) = tan^2(alpha/2) / tan(theta/2)."""
        alpha, theta = 1.2, 0.5
        expected = math.tan(alpha / 2) ** 2 / math.tan(theta / 2)
        assert math.tan(residual_angle(alpha, theta) / 2) == pytest.approx(expected)

    def test_singular_point(self):
        """Both angles zero has no defined success probability."""
        with pytest.raises(ParameterRangeError):
            success_prob(0.0, 0.0)


class TestProfile:
    """E_theta at alpha = sqrt(theta)."""

    def test_identity(self):
        """E_theta = 1 - p_theta + h_theta."""
        profile = e_theta(0.7)
        assert profile.alpha_theta == pytest.approx(math.sqrt(0.7))
        assert profile.E_theta == pytest.approx(1 - profile.p_theta + profile.h_theta)
        assert 0 <= profile.p_theta <= 1

    def test_small_theta(self):
        """E at theta = 1e-3 is well below 0.01."""
        assert e_theta(1e-3).E_theta < 0.01

    def test_vanishes_towards_zero(self):
        """E_theta decreases monotonically on a log grid towards 0."""
        values = [p.E_theta for p in cost_curve(theta_grid(1e-4, 1e-1, 12))]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_failure_rate_is_order_theta(self):
        """(1 - p_theta) / theta stays bounded."""
        ratios = [(1 - e_theta(t).p_theta) / t for t in (1e-2, 1e-3, 1e-4)]
        assert max(ratios) < 10
        assert ratios[-1] == pytest.approx(ratios[-2], rel=0.1)

    def test_continuity(self):
        """Finite-difference slopes stay finite on a fine grid."""
        assert continuity_constant(theta_grid(0.01, math.pi / 2, 200, log=False)) < 50

    def test_range(self):
        """theta must lie in (0, pi/2]."""
        with pytest.raises(ParameterRangeError):
            e_theta(-0.1)


class TestThetaMax:
    """Bisection for the largest theta with E_theta < 1."""

    def test_root_properties(self):
        """E(theta*) = 1 within tolerance unless theta* = pi/2; E(theta*/2) < 1."""
        theta_star = theta_max_solve(1e-10)
        assert 0 < theta_star <= math.pi / 2
        if theta_star < math.pi / 2:
            assert e_theta(theta_star).E_theta == pytest.approx(1.0, abs=1e-9)
        assert e_theta(theta_star / 2).E_theta < 1

    def test_bad_tolerance(self):
        """Tolerance must be positive."""
        with pytest.raises(ParameterRangeError):
            theta_max_solve(0.0)


class TestTradeoff:
    """Two-round lower bound against four-round upper bound."""

    def test_small_angle_separates(self):
        """At theta = 0.1 the two-round cost 1 exceeds the four-round cost."""
        report = tradeoff_report(0.1)
        assert report.lower_bound_two_round == pytest.approx(1.0, abs=1e-9)
        assert report.upper_bound_four_round < 1
        assert report.separation

    def test_large_angle_reported_honestly(self):
        """Near pi/2 the separation flag follows the numbers."""
        report = tradeoff_report(math.pi / 2)
        assert report.separation == (report.lower_bound_two_round > report.upper_bound_four_round)

    def test_best_alpha_beats_default(self):
        """Optimizing alpha never does worse than alpha = sqrt(theta)."""
        search = best_alpha(0.5)
        assert search.E_opt <= e_theta(0.5).E_theta + 1e-9
        assert 0 < search.alpha_opt <= math.pi


def test_theta_grid_validation():
    """Grids need positive, ordered endpoints."""
    assert theta_grid(0.1, 1.0, 1) == [0.1]
    with pytest.raises(ParameterRangeError):
        theta_grid(0.0, 1.0, 5)
    with pytest.raises(ParameterRangeError):
        theta_grid(0.5, 0.5, 3)


def test_continuity_skips_repeated_points():
    """Duplicate grid points contribute no slope."""
    assert continuity_constant([0.5, 0.5]) == 0.0
    assert continuity_constant([0.5, 0.5, 0.6]) == pytest.approx(continuity_constant([0.5, 0.6]))
