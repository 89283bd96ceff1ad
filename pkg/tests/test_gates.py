"""Tests for the gate factory and resource states."""
import math

import numpy as np
import pytest

from loccost.codec import dump_matrix
from loccost.errors import NotUnitaryError, ParameterRangeError, UserInputError
from loccost.gates import (
    ANGLE_SLACK,
    GateKind,
    bell_pair,
    check_theta,
    controlled_z,
    custom,
    local_equivalence,
    max_entangled,
    parse_gate_selector,
    phi_alpha,
    u_theta,
    u_tilde_theta,
)
from loccost.tensor import allclose_up_to_phase


class TestControlledPhase:
    """U_theta and Utilde_theta."""

    def test_u_theta_diagonal(self):
        """U_theta = diag(1, 1, e^{i theta}, e^{-i theta})."""
        theta = 0.7
        np.testing.assert_allclose(np.diag(u_theta(theta).matrix),
                                   [1, 1, np.exp(1j * theta), np.exp(-1j * theta)])

    def test_u_tilde_diagonal(self):
        """Utilde_theta is exp(i theta/2 Z x Z)."""
        theta = 0.4
        z = np.diag([1, -1])
        expected = np.diag(np.exp(0.5j * theta * np.diag(np.kron(z, z))))
        np.testing.assert_allclose(u_tilde_theta(theta).matrix, expected)

    def test_half_pi_is_cz_up_to_locals(self):
        """U_{pi/2} differs from CZ only by local Z-rotations and phase."""
        u = u_theta(math.pi / 2).matrix
        s_on_a = np.kron(np.diag([1, 1j]), np.eye(2))
        assert allclose_up_to_phase(s_on_a @ controlled_z().matrix, u)

    def test_dagger_negates_angle(self):
        """Utilde_theta^dagger is Utilde_{-theta}."""
        gate = u_tilde_theta(0.9)
        np.testing.assert_allclose(gate.dagger().matrix, gate.matrix.conj().T)
        assert gate.dagger().theta == pytest.approx(-0.9)

    def test_utilde_accepts_any_real_angle(self):
        """Repair rotations may use angles beyond pi/2."""
        assert u_tilde_theta(2.5).kind is GateKind.U_TILDE_THETA

    def test_theta_range(self):
        """theta lies in (0, pi/2], with rounding slack above."""
        with pytest.raises(ParameterRangeError):
            u_theta(0.0)
        with pytest.raises(ParameterRangeError):
            u_theta(math.pi / 2 + 10 * ANGLE_SLACK)
        assert check_theta(1.5708) == 1.5708

    def test_local_dim(self):
        """4x4 gates are 2x2 bipartite."""
        assert u_theta(0.3).local_dim == 2


class TestLocalEquivalence:
    """Utilde_theta and U_theta are interconvertible by local unitaries."""

    @pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, math.pi / 2])
    def test_composition(self, theta):
        """The stored locals reproduce U_theta up to phase."""
        eq = local_equivalence(theta)
        assert allclose_up_to_phase(eq.compose(), u_theta(theta).matrix)


class TestResourceStates:
    """phi_alpha, Bell pairs and maximally entangled states."""

    def test_phi_alpha_amplitudes(self):
        """phi_alpha = cos(alpha/2)|00> + i sin(alpha/2)|11>."""
        psi = phi_alpha(math.pi / 2)
        np.testing.assert_allclose(psi.amplitudes, [1 / math.sqrt(2), 0, 0, 1j / math.sqrt(2)])

    def test_phi_alpha_range(self):
        """alpha must lie in (0, pi]."""
        with pytest.raises(ParameterRangeError):
            phi_alpha(4.0)

    def test_bell_pair_labels(self):
        """Bell pairs default to registers A1, B1."""
        assert bell_pair().labels == ("A1", "B1")

    def test_max_entangled_qutrit(self):
        """d=3 gives three equal amplitudes."""
        psi = max_entangled(3)
        assert np.count_nonzero(psi.amplitudes) == 3
        with pytest.raises(ParameterRangeError):
            max_entangled(1)


class TestCustomGates:
    """Arbitrary matrices and selectors."""

    def test_rejects_non_unitary(self):
        """Custom gates are checked for unitarity."""
        with pytest.raises(NotUnitaryError):
            custom(np.ones((4, 4)))

    def test_selectors(self):
        """Named selectors resolve to the matching gate."""
        assert parse_gate_selector("utheta:0.5").kind is GateKind.U_THETA
        assert parse_gate_selector("czz").kind is GateKind.CONTROLLED_Z
        assert parse_gate_selector("identity:3").dim == 9
        dagger = parse_gate_selector("utilde-dagger:1.0")
        np.testing.assert_allclose(dagger.matrix, u_tilde_theta(-1.0).matrix)

    def test_bad_selectors(self):
        """Unknown names and missing angles are user errors."""
        with pytest.raises(UserInputError):
            parse_gate_selector("toffoli")
        with pytest.raises(UserInputError):
            parse_gate_selector("utheta:abc")

    def test_file_selector(self, tmp_path):
        """file:<path> loads a gate from a matrix file."""
        path = tmp_path / "cz.json"
        path.write_text(dump_matrix([2, 2], controlled_z().matrix))
        gate = parse_gate_selector(f"file:{path}")
        assert gate.kind is GateKind.CUSTOM
        np.testing.assert_allclose(gate.matrix, controlled_z().matrix)
