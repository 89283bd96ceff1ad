"""Gates and resource states for controlled-phase protocols."""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .codec import load_matrix
from .errors import DimensionMismatch, InvariantViolation, NotUnitaryError, ParameterRangeError, UserInputError
from .tensor import PureState, allclose_up_to_phase, is_unitary

logger = logging.getLogger(__name__)

# Accepts inputs rounded at the fourth decimal, e.g. 1.5708 for pi/2.
ANGLE_SLACK = 1e-4


class GateKind(str, Enum):
    U_THETA = "u_theta"
    U_TILDE_THETA = "u_tilde_theta"
    CONTROLLED_Z = "controlled_z"
    SIGMA_Z = "sigma_z"
    CUSTOM = "custom"


_TWO_QUBIT = {GateKind.U_THETA, GateKind.U_TILDE_THETA, GateKind.CONTROLLED_Z}


@dataclass(frozen=True, eq=False)
class GateSpec:
    kind: GateKind
    matrix: np.ndarray
    theta: float | None = None
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.kind in _TWO_QUBIT and m.shape != (4, 4):
            raise DimensionMismatch(f"{self.kind.value} must be 4x4, got {m.shape}")
        if self.kind is GateKind.SIGMA_Z and m.shape != (2, 2):
            raise DimensionMismatch(f"sigma_z must be 2x2, got {m.shape}")
        if not is_unitary(m):
            raise NotUnitaryError(f"gate {self.label or self.kind.value} is not unitary within 1e-12")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def local_dim(self) -> int:
        """d for a gate acting on a d x d bipartite system."""
        d = math.isqrt(self.dim)
        if d * d != self.dim:
            raise DimensionMismatch(f"gate of dimension {self.dim} is not bipartite d x d")
        return d

    def dagger(self) -> "GateSpec":
        if self.kind is GateKind.U_TILDE_THETA:
            return u_tilde_theta(-self.theta)
        return GateSpec(GateKind.CUSTOM, self.matrix.conj().T, self.theta, f"{self.label or self.kind.value}^dagger")


def _check_angle(name: str, value: float, upper: float) -> float:
    value = float(value)
    if not (0.0 < value <= upper + ANGLE_SLACK) or not math.isfinite(value):
        raise ParameterRangeError(f"{name}={value} outside (0, {upper:.6f}]")
    return value


def check_theta(theta: float) -> float:
    return _check_angle("theta", theta, math.pi / 2)


def check_alpha(alpha: float) -> float:
    return _check_angle("alpha", alpha, math.pi)


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

def u_theta(theta: float) -> GateSpec:
    """|0><0| x I + |1><1| x exp(i theta sigma_z)."""
    theta = check_theta(theta)
    phases = [1.0, 1.0, np.exp(1j * theta), np.exp(-1j * theta)]
    return GateSpec(GateKind.U_THETA, np.diag(phases), theta, f"U_theta({theta:g})")


def u_tilde_theta(theta: float) -> GateSpec:
    """exp(i theta/2 sigma_z x sigma_z). Any real theta is accepted."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ParameterRangeError("theta must be finite")
    plus, minus = np.exp(0.5j * theta), np.exp(-0.5j * theta)
    return GateSpec(GateKind.U_TILDE_THETA, np.diag([plus, minus, minus, plus]), theta, f"Utilde({theta:g})")


def controlled_z() -> GateSpec:
    return GateSpec(GateKind.CONTROLLED_Z, np.diag([1, 1, 1, -1]), label="CZ")


def sigma_z() -> GateSpec:
    return GateSpec(GateKind.SIGMA_Z, np.diag([1, -1]), label="Z")


def sigma_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def hadamard() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def cnot() -> np.ndarray:
    """Control first, target second."""
    return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def identity(d: int = 2) -> GateSpec:
    return GateSpec(GateKind.CUSTOM, np.eye(d * d), label=f"I({d}x{d})")


def custom(matrix, label: str = "custom") -> GateSpec:
    return GateSpec(GateKind.CUSTOM, matrix, label=label)


def plus_minus_basis() -> tuple[np.ndarray, np.ndarray]:
    return np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)


def computational_basis(d: int = 2) -> tuple[np.ndarray, ...]:
    return tuple(np.eye(d)[k] for k in range(d))


# ---------------------------------------------------------------------------
# Resource states
# ---------------------------------------------------------------------------

def phi_alpha(alpha: float, labels: tuple[str, str] = ("A0", "B0")) -> PureState:
    """cos(alpha/2)|00> + i sin(alpha/2)|11>."""
    alpha = check_alpha(alpha)
    amps = np.zeros(4, dtype=complex)
    amps[0] = math.cos(alpha / 2)
    amps[3] = 1j * math.sin(alpha / 2)
    return PureState(((labels[0], 2), (labels[1], 2)), amps)


def max_entangled(d: int, labels: tuple[str, str] = ("A0", "B0")) -> PureState:
    """(1/sqrt d) sum_i |ii>."""
    if int(d) != d or d < 2:
        raise ParameterRangeError(f"maximally entangled state needs d >= 2, got {d}")
    d = int(d)
    amps = np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d)
    return PureState(((labels[0], d), (labels[1], d)), amps)


def bell_pair(labels: tuple[str, str] = ("A1", "B1")) -> PureState:
    return max_entangled(2, labels)


# ---------------------------------------------------------------------------
# Local equivalence of U_theta and Utilde_theta
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LocalEquivalence:
    """(a1 x b1) Utilde_theta (a2 x b2) = U_theta up to global phase."""

    theta: float
    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray

    def compose(self) -> np.ndarray:
        return np.kron(self.a1, self.b1) @ u_tilde_theta(self.theta).matrix @ np.kron(self.a2, self.b2)


def local_equivalence(theta: float) -> LocalEquivalence:
    theta = check_theta(theta)
    rotation = np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])
    eq = LocalEquivalence(theta, a1=sigma_x(), b1=rotation, a2=sigma_x(), b2=np.eye(2, dtype=complex))
    if not allclose_up_to_phase(eq.compose(), u_theta(theta).matrix, atol=1e-12):
        raise InvariantViolation(f"local equivalence check failed at theta={theta}")
    return eq


# ---------------------------------------------------------------------------
# Selectors
# ---------------------------------------------------------------------------

def parse_gate_selector(selector: str) -> GateSpec:
    """Resolve utheta:<t>, utilde:<t>, utilde-dagger:<t>, czz, identity or file:<path>."""
    name, _, arg = selector.strip().partition(":")
    name = name.lower()
    if name == "czz":
        return controlled_z()
    if name == "identity":
        return identity(int(arg) if arg else 2)
    if name == "file":
        if not arg:
            raise UserInputError("file selector needs a path, e.g. file:gate.json")
        _, matrix = load_matrix(Path(arg))
        if matrix.ndim != 2:
            raise UserInputError(f"{arg} holds a state vector, not a gate matrix")
        return custom(matrix, label=Path(arg).name)
    builders = {"utheta": u_theta, "utilde": u_tilde_theta,
                "utilde-dagger": lambda t: u_tilde_theta(t).dagger()}
    if name not in builders:
        raise UserInputError(f"unknown gate selector {selector!r}")
    try:
        theta = float(arg)
    except ValueError:
        raise UserInputError(f"gate selector {selector!r} needs a numeric angle") from None
    return builders[name](theta)
