"""Tests for the controlled-phase protocols.

Exhaustive branch enumeration is the oracle throughout: every leaf is
checked against the target, and branch weights against the closed forms.
"""
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from loccost.cost import avg_cost, e_theta, residual_angle, success_prob
from loccost.errors import ParameterRangeError, RegisterError
from loccost.protocols import (
    EXHAUSTIVE,
    PairLabels,
    Sampled,
    bell_budget,
    composite_single_shot,
    decay_fit,
    deterministic_one_ebit,
    full_mn,
    is_event_b,
    nshot_epsilon,
    nshot_estimate,
    nshot_exact,
    nshot_run,
    prepare_input,
    prob_first_half,
    random_pair_inputs,
    target_state,
)
from loccost.runtime import count_rounds
from loccost.tensor import PureState, random_pure_state, tensor, tensor_all


ALPHA_GRID = [1e-3, 0.01, 0.1, 0.5, 1.0, math.pi / 2, 2.0, 2.5, 3.1, math.pi]
THETA_GRID = [1e-3, 0.01, 0.05, 0.2, 0.4, 0.7, 1.0, 1.3, 1.55, math.pi / 2]
JOINT_REGISTERS = (("A_1", 2), ("B_1", 2), ("A_2", 2), ("B_2", 2))


def overlap2(a: PureState, b: PureState) -> float:
    return abs(a.overlap(b)) ** 2


class TestFirstHalf:
    """The probabilistic protocol on one partially entangled pair."""

    @pytest.mark.parametrize("alpha", ALPHA_GRID)
    @pytest.mark.parametrize("theta", THETA_GRID)
    def test_success_weight_matches_formula(self, alpha, theta, random_psi):
        """Success branches carry exactly p(alpha, theta)."""
        state = prepare_input(random_psi(), alpha)
        branches = prob_first_half(theta, alpha, state)
        p = math.fsum(w for w, out in branches if out.success)
        assert p == pytest.approx(success_prob(alpha, theta), abs=1e-12)
        assert math.fsum(w for w, _ in branches) == pytest.approx(1.0, abs=1e-12)

    def test_success_branches_apply_gate(self, random_psi):
        """Success leaves equal Utilde_theta psi for many random inputs."""
        theta, alpha = 0.8, 1.1
        for _ in range(50):
            psi = random_psi()
            target = target_state(theta, psi)
            for _, out in prob_first_half(theta, alpha, prepare_input(psi, alpha)):
                if out.success:
                    assert overlap2(target, out.post_state) >= 1 - 1e-12

    def test_failure_leaves_residual_rotation(self, random_psi):
        """Failure leaves equal Utilde_{-theta'} psi with the tangent-rule angle."""
        theta, alpha = 0.6, 1.3
        psi = random_psi()
        failures = [out for _, out in prob_first_half(theta, alpha, prepare_input(psi, alpha))
                    if not out.success]
        assert failures
        for out in failures:
            assert out.residual_angle == pytest.approx(-residual_angle(alpha, theta))
            assert overlap2(target_state(out.residual_angle, psi), out.post_state) >= 1 - 1e-12

    def test_alpha_equals_theta(self, random_psi):
        """alpha = theta gives p = 1/2 and theta' = theta."""
        theta = 0.9
        branches = prob_first_half(theta, theta, prepare_input(random_psi(), theta))
        assert math.fsum(w for w, o in branches if o.success) == pytest.approx(0.5, abs=1e-12)
        assert residual_angle(theta, theta) == pytest.approx(theta)

    def test_two_rounds_and_resource_consumed(self, random_psi):
        """Two messages in alternating directions; A0 and B0 are gone afterwards."""
        for _, out in prob_first_half(1.0, 1.0, prepare_input(random_psi(), 1.0)):
            assert count_rounds(out.transcript) == 2
            assert out.post_state.labels == ("A", "B")
            assert out.ledger.net_cost == pytest.approx(e_theta(1.0).h_theta)

    def test_sampled_mode_returns_one_outcome(self, random_psi):
        """A seeded run yields a single ShotOutcome."""
        state = prepare_input(random_psi(), 1.0)
        out = prob_first_half(1.0, 1.0, state, Sampled(5))
        again = prob_first_half(1.0, 1.0, state, Sampled(5))
        assert again.success == out.success
        assert again.transcript.branch_label == out.transcript.branch_label

    def test_missing_resource(self, random_psi):
        """Inputs without A0, B0 are refused."""
        with pytest.raises(RegisterError, match="first half"):
            prob_first_half(1.0, 1.0, random_psi())

    def test_theta_range(self, random_psi):
        """theta outside (0, pi/2] is a range error."""
        with pytest.raises(ParameterRangeError):
            prob_first_half(2.0, 1.0, prepare_input(random_psi(), 1.0))


class TestDeterministicOneEbit:
    """The two-round repair consuming one Bell pair."""

    def test_all_branches_apply_gate(self, random_psi):
        """Each of the four branches yields Utilde_phi psi."""
        phi = 1.7
        psi = random_psi()
        branches = deterministic_one_ebit(phi, prepare_input(psi, standby=True))
        assert len(branches) == 4
        assert [w for w, _ in branches] == pytest.approx([0.25] * 4)
        for _, out in branches:
            assert overlap2(target_state(phi, psi), out.post_state) >= 1 - 1e-12

    def test_zero_angle_is_identity(self, random_psi):
        """phi = 0 returns the input and still spends the pair."""
        psi = random_psi()
        for _, out in deterministic_one_ebit(0.0, prepare_input(psi, standby=True)):
            assert overlap2(psi, out.post_state) >= 1 - 1e-12
            assert out.ledger.net_cost == 1.0

    def test_rounds_and_bits(self, random_psi):
        """Two rounds and one bit per message."""
        out = deterministic_one_ebit(0.5, prepare_input(random_psi(), standby=True), Sampled(1))
        assert out.transcript.rounds_used == 2
        assert all(len(m.bits) == 1 for m in out.transcript.messages)

    def test_missing_bell_pair(self, random_psi):
        """A product state on A1, B1 is not a Bell pair."""
        state = tensor(random_psi(), PureState.basis([("A1", 2), ("B1", 2)], [0, 0]))
        with pytest.raises(RegisterError, match="Bell pair"):
            deterministic_one_ebit(0.5, state)

    def test_custom_labels(self, random_psi):
        """Register names come from PairLabels."""
        labels = PairLabels.for_pair(3)
        psi = random_psi()
        out = deterministic_one_ebit(0.4, prepare_input(psi, standby=True, labels=labels), Sampled(2), labels)
        assert out.post_state.labels == ("A_3", "B_3")
        assert overlap2(target_state(0.4, psi, labels), out.post_state) >= 1 - 1e-12


class TestCompositeSingleShot:
    """First half followed by the repair on failure."""

    @pytest.mark.parametrize("theta,alpha", [(math.pi / 2, math.pi / 2), (1.0, 1.0), (0.3, 0.9), (0.7, 2.8)])
    def test_every_leaf_reaches_target(self, theta, alpha, random_psi):
        """Output never depends on the intermediate branch."""
        psi = random_psi()
        leaves = composite_single_shot(theta, alpha, prepare_input(psi, alpha, standby=True))
        assert math.fsum(w for w, _ in leaves) == pytest.approx(1.0, abs=1e-12)
        for _, out in leaves:
            assert overlap2(target_state(theta, psi), out.post_state) >= 1 - 1e-10
            assert count_rounds(out.transcript) <= 4

    @pytest.mark.parametrize("theta,alpha", [(math.pi / 2, math.pi / 2), (0.5, math.sqrt(0.5)), (1.2, 0.4)])
    def test_expected_cost_matches_closed_form(self, theta, alpha, random_psi):
        """sum_leaf p * net_cost = 1 - p(alpha, theta) + h(cos^2(alpha/2))."""
        leaves = composite_single_shot(theta, alpha, prepare_input(random_psi(), alpha, standby=True))
        expected = math.fsum(w * out.ledger.net_cost for w, out in leaves)
        assert expected == pytest.approx(avg_cost(alpha, theta), abs=1e-12)

    def test_half_pi_costs_three_halves(self, random_psi):
        """At alpha = theta = pi/2 the expected cost is 3/2."""
        leaves = composite_single_shot(math.pi / 2, math.pi / 2,
                                       prepare_input(random_psi(), math.pi / 2, standby=True))
        assert math.fsum(w * o.ledger.net_cost for w, o in leaves) == pytest.approx(1.5, abs=1e-12)

    def test_success_returns_bell_pair(self, random_psi):
        """Success leaves spend the standby pair and get it back."""
        leaves = composite_single_shot(1.0, 1.0, prepare_input(random_psi(), 1.0, standby=True))
        for _, out in leaves:
            if out.success:
                assert out.ledger.ebits_returned == 1.0
                assert count_rounds(out.transcript) == 2
            else:
                assert out.ledger.ebits_returned == 0.0
                assert count_rounds(out.transcript) == 4

    def test_sampled_reaches_target(self, random_psi):
        """A sampled path also ends on the target."""
        psi = random_psi()
        for seed in range(5):
            out = composite_single_shot(1.0, 1.0, prepare_input(psi, 1.0, standby=True), Sampled(seed))
            assert overlap2(target_state(1.0, psi), out.post_state) >= 1 - 1e-10

    def test_needs_standby_pair(self, random_psi):
        """Without A1, B1 the composite protocol refuses to start."""
        with pytest.raises(RegisterError):
            composite_single_shot(1.0, 1.0, prepare_input(random_psi(), 1.0), EXHAUSTIVE)


class TestSampling:
    """Sampled paths against exhaustive enumeration."""

    def test_first_half_frequencies(self, random_psi):
        """run_sampled visits every first-half branch at its enumerated weight."""
        state = prepare_input(random_psi(), 0.7)
        branches = {out.transcript.branch_label: p for p, out in prob_first_half(0.9, 0.7, state)}
        rng = np.random.default_rng(20250101)
        trials = 3000
        hits = Counter(prob_first_half(0.9, 0.7, state, Sampled(rng)).transcript.branch_label
                       for _ in range(trials))
        assert set(hits) <= set(branches)
        for label, p in branches.items():
            assert abs(hits[label] / trials - p) <= 5 * math.sqrt(p * (1 - p) / trials) + 1e-12

    @pytest.mark.slow
    def test_composite_mean_cost(self, random_psi):
        """Mean sampled net cost of the composite protocol converges to 1 - p + h."""
        theta, alpha = 1.0, 1.0
        state = prepare_input(random_psi(), alpha, standby=True)
        rng = np.random.default_rng(7)
        trials = 2000
        costs = [composite_single_shot(theta, alpha, state, Sampled(rng)).ledger.net_cost
                 for _ in range(trials)]
        p = success_prob(alpha, theta)
        sigma = math.sqrt(p * (1 - p) / trials)
        assert abs(math.fsum(costs) / trials - avg_cost(alpha, theta)) <= 5 * sigma


class TestCounting:
    """Budgets and event classification."""

    def test_bell_budget_is_ceiling(self):
        """ceil(n(1 - p + delta)), robust to float noise at integers."""
        assert bell_budget(0.5, 20, 0.15) == 13
        assert bell_budget(0.5, 10, 0.5) == 10

    def test_event_b_boundary(self):
        """Exactly n(p - delta) successes is event (a)."""
        assert not is_event_b(7, 20 * (0.5 - 0.15))
        assert is_event_b(6, 20 * (0.5 - 0.15))

    def test_epsilon_is_binomial_tail(self):
        """epsilon_n = P[Bin(n, p) < n(p - delta)]."""
        p = e_theta(1.0).p_theta
        assert nshot_epsilon(1.0, 20, 0.15) == pytest.approx(stats.binom.cdf(6, 20, p))

    def test_epsilon_decreases(self):
        """The exact tail shrinks along n = 20, 50, 100."""
        values = [nshot_epsilon(1.0, n, 0.15) for n in (20, 50, 100)]
        assert values[0] > values[1] > values[2] > 0

    def test_decay_fit_recovers_rate(self):
        """Slope of ln epsilon against n."""
        ns = [10, 20, 30]
        assert decay_fit(ns, [math.exp(-0.1 * n) for n in ns]) == pytest.approx(-0.1)
        assert decay_fit([10], [0.5]) is None


class TestNShot:
    """The batch protocol on n pairs."""

    def test_event_a_is_exact(self):
        """With a generous delta every run is event (a) and ends on the target."""
        report = nshot_run(1.0, 4, 0.9, seed=3)
        assert report.event == "a"
        assert report.final_fidelity >= 1 - 1e-9
        assert report.bell_used == report.failures
        profile = e_theta(1.0)
        assert report.ledger.ebits_consumed == pytest.approx(4 * profile.h_theta + report.bell_budget)

    def test_inputs_reproducible(self):
        """Random pair inputs depend only on (seed, n)."""
        a = random_pair_inputs(7, 3)
        b = random_pair_inputs(7, 3)
        assert all(np.allclose(x.amplitudes, y.amplitudes) for x, y in zip(a, b))

    def test_wrong_input_count(self):
        """One input per pair."""
        with pytest.raises(ParameterRangeError):
            nshot_run(1.0, 3, 0.15, inputs=random_pair_inputs(0, 2))

    def test_joint_entangled_input(self, rng):
        """A single state on both pairs, entangled across them, runs as one batch."""
        joint = random_pure_state(JOINT_REGISTERS, rng)
        report = nshot_run(1.0, 2, 0.15, inputs=[joint], seed=5)
        assert report.n == 2
        assert report.successes + report.failures == 2
        assert report.bell_budget == 2
        if report.event == "a":
            assert report.final_fidelity >= 1 - 1e-9
        assert 0.0 <= report.final_fidelity <= 1.0 + 1e-12

    def test_joint_event_a_reaches_target(self, rng):
        """Every event (a) path repairs the entangled input exactly."""
        joint = random_pure_state(JOINT_REGISTERS, rng)
        for seed in range(4):
            report = nshot_run(1.0, 2, 0.9, inputs=joint, seed=seed)
            assert report.event == "a"
            assert report.final_fidelity >= 1 - 1e-9
            assert report.bell_used == report.failures

    def test_joint_exact_within_bound(self, rng):
        """Enumerated mixture of an entangled batch obeys the 2 epsilon_n bound."""
        exact = nshot_exact(1.0, 2, 0.15, inputs=random_pure_state(JOINT_REGISTERS, rng))
        assert exact.epsilon_enumerated == pytest.approx(0.25, abs=1e-12)
        assert exact.epsilon_enumerated == pytest.approx(exact.epsilon_binomial, abs=1e-12)
        assert exact.trace_distance <= exact.bound + 1e-10
        assert exact.fidelity >= 1 - exact.epsilon_enumerated - 1e-12

    def test_product_input_is_a_special_case(self):
        """A joint product state gives the same exact mixture as the per-pair tables."""
        pairs = random_pair_inputs(9, 2)
        joint = tensor_all(PureState(((f"A_{i}", 2), (f"B_{i}", 2)), psi.amplitudes)
                           for i, psi in enumerate(pairs, start=1))
        per_pair = nshot_exact(1.0, 2, 0.15, inputs=pairs)
        together = nshot_exact(1.0, 2, 0.15, inputs=joint)
        assert together.epsilon_enumerated == pytest.approx(per_pair.epsilon_enumerated, abs=1e-12)
        assert together.trace_distance == pytest.approx(per_pair.trace_distance, abs=1e-9)
        assert together.fidelity == pytest.approx(per_pair.fidelity, abs=1e-9)

    def test_joint_registers_by_position(self, rng):
        """Unnamed joint registers are read as A_1, B_1, A_2, B_2."""
        joint = random_pure_state(JOINT_REGISTERS, rng)
        renamed = PureState(tuple((name, 2) for name in "wxyz"), joint.amplitudes)
        named = nshot_exact(0.5, 2, 0.1, inputs=joint)
        positional = nshot_exact(0.5, 2, 0.1, inputs=renamed)
        assert positional.trace_distance == pytest.approx(named.trace_distance, abs=1e-12)

    def test_joint_size_limit(self, rng):
        """Joint inputs are simulated on the full state vector, so n is capped."""
        registers = tuple((f"{side}_{i}", 2) for i in range(1, 7) for side in "AB")
        with pytest.raises(ParameterRangeError, match="joint"):
            nshot_run(1.0, 6, 0.15, inputs=random_pure_state(registers, rng))

    def test_exact_mixture_within_bound(self):
        """||output - target||_1 <= 2 epsilon_n with enumerated epsilon = binomial tail."""
        exact = nshot_exact(1.0, 6, 0.15, seed=11)
        assert exact.epsilon_enumerated == pytest.approx(exact.epsilon_binomial, abs=1e-12)
        assert exact.trace_distance <= exact.bound + 1e-10
        assert exact.fidelity >= 1 - exact.epsilon_enumerated - 1e-12

    @pytest.mark.slow
    def test_estimate_tracks_exact_tail(self):
        """Monte Carlo epsilon stays within 5 sigma of the binomial tail."""
        est = nshot_estimate(1.0, 20, 0.15, trials=4000, seed=20250101)
        sigma = math.sqrt(est.epsilon_exact * (1 - est.epsilon_exact) / est.trials)
        assert abs(est.epsilon_hat - est.epsilon_exact) <= 5 * sigma
        assert est.mean_fidelity >= 1 - est.epsilon_hat - 1e-9


class TestFullProtocol:
    """Full protocol with reference systems and the diluted resource."""

    def test_chain_inequality_single_pair(self):
        """Exact distance to the target obeys the two-term bound and the triangle chain."""
        report = full_mn(1.0, 1, 0.45)
        assert report.epsilon_n == pytest.approx(report.epsilon_n_binomial, abs=1e-12)
        assert report.trace_distance <= report.bound + 1e-9
        assert report.trace_distance <= report.resource_distance + report.ideal_distance + 1e-9
        assert report.resource_distance <= report.eps_prime + 1e-9
        assert report.ideal_distance <= 2 * report.epsilon_n + 1e-9
        assert report.fidelity >= 1 - report.trace_distance - 1e-9

    @pytest.mark.slow
    def test_chain_inequality_two_pairs(self):
        """Same chain at n = 2."""
        report = full_mn(1.0, 2, 0.45)
        assert report.trace_distance <= report.bound + 1e-9
        assert report.log_rank_bits == math.ceil(2 * (e_theta(1.0).E_theta + 0.9)) == 5
        assert report.fidelity >= 1 - report.bound - 1e-9

    def test_ledger_uses_log_rank(self):
        """One maximally entangled state of ceil(n(E_theta + 2 delta)) bits covers dilution and Bell budget."""
        report = full_mn(1.0, 1, 0.45)
        assert report.log_rank_bits == math.ceil(e_theta(1.0).E_theta + 2 * 0.45) == 3
        assert report.log_rank_bits == report.dilution_bits + report.bell_budget
        assert report.bell_budget == 1
        assert report.ledger.ebits_consumed == report.log_rank_bits
        assert 0 <= report.ledger.ebits_returned <= report.bell_budget

    def test_sampled_path(self):
        """A sampled run reports a pure final state and no chain terms."""
        report = full_mn(1.0, 1, 0.45, seed=4)
        assert isinstance(report.final_state, PureState)
        assert math.isnan(report.resource_distance)
        assert 0.0 <= report.fidelity <= 1.0

    def test_empty_typical_set(self):
        """No weakly typical sequence at n = 1, delta = 0.2 for theta = 1."""
        with pytest.raises(ParameterRangeError, match="typical set is empty"):
            full_mn(1.0, 1, 0.2)

    def test_size_limit(self):
        """Exact simulation is capped at three pairs."""
        with pytest.raises(ParameterRangeError):
            full_mn(1.0, 4, 0.45)
