"""Dense quantum states over labeled registers.

States carry an ordered list of (label, dimension) registers and every
operation addresses registers by label. All logarithms are base 2.

Trace distances use the unnormalized convention ||rho - sigma||_1 with
range [0, 2]. Many references report half of this value.
"""
import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    InvariantViolation,
    NotUnitaryError,
    ParameterRangeError,
    RegisterError,
    UserInputError,
)

logger = logging.getLogger(__name__)

Register = tuple[str, int]

NORM_ATOL = 1e-12
HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-10
UNITARY_ATOL = 1e-12
BASIS_ATOL = 1e-12
PROBABILITY_ATOL = 1e-10
EIGEN_FLOOR = 1e-14
SCHMIDT_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Register bookkeeping
# ---------------------------------------------------------------------------

def _check_registers(registers: Iterable[Register]) -> tuple[Register, ...]:
    regs = tuple((str(label), int(dim)) for label, dim in registers)
    labels = [label for label, _ in regs]
    if len(set(labels)) != len(labels):
        raise RegisterError(f"duplicate register label in {labels}")
    for label, dim in regs:
        if dim < 1:
            raise RegisterError(f"register {label!r} has dimension {dim}")
    return regs


def _frozen(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


class _Registered:
    """Label lookups shared by states and operators."""

    registers: tuple[Register, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.registers)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise RegisterError(f"unknown register {label!r}; have {list(self.labels)}") from None

    def indices(self, labels: Iterable[str]) -> list[int]:
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise RegisterError(f"register listed twice in {labels}")
        return [self.index(label) for label in labels]


def _require_same_registers(a: _Registered, b: _Registered) -> None:
    if a.registers != b.registers:
        raise DimensionMismatch(f"register mismatch: {a.registers} vs {b.registers}")


# ---------------------------------------------------------------------------
# State types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PureState(_Registered):
    """State vector over ordered registers.

    `subnormalized` marks post-selection intermediates whose norm is below 1.
    """

    registers: tuple[Register, ...]
    amplitudes: np.ndarray
    subnormalized: bool = False

    def __post_init__(self):
        regs = _check_registers(self.registers)
        amps = _frozen(self.amplitudes).reshape(-1)
        object.__setattr__(self, "registers", regs)
        object.__setattr__(self, "amplitudes", amps)
        if amps.size != self.dim:
            raise DimensionMismatch(
                f"{amps.size} amplitudes for registers of total dimension {self.dim}"
            )
        if not np.all(np.isfinite(amps)):
            raise UserInputError("amplitudes must be finite")
        if not self.subnormalized and abs(self.norm() - 1.0) > NORM_ATOL:
            raise InvariantViolation(f"state norm {self.norm():.15g} is not 1")

    @classmethod
    def basis(cls, registers: Iterable[Register], digits: Sequence[int]) -> "PureState":
        """Computational basis state with one digit per register."""
        regs = _check_registers(registers)
        if len(digits) != len(regs):
            raise DimensionMismatch(f"{len(digits)} digits for {len(regs)} registers")
        for (label, dim), digit in zip(regs, digits):
            if not 0 <= digit < dim:
                raise RegisterError(f"digit {digit} out of range for {label!r}")
        amps = np.zeros(math.prod(d for _, d in regs), dtype=complex)
        amps[np.ravel_multi_index(tuple(digits), tuple(d for _, d in regs))] = 1.0
        return cls(regs, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        norm = self.norm()
        if norm == 0:
            raise InvariantViolation("cannot normalize a zero vector")
        return PureState(self.registers, self.amplitudes / norm)

    def with_amplitudes(self, amplitudes, registers=None) -> "PureState":
        return PureState(
            self.registers if registers is None else registers,
            amplitudes,
            subnormalized=self.subnormalized,
        )

    def as_tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def permuted(self, order: Sequence[str]) -> "PureState":
        """Same state with registers reordered to `order`."""
        if sorted(order) != sorted(self.labels):
            raise RegisterError(f"{list(order)} is not a permutation of {list(self.labels)}")
        idx = self.indices(order)
        amps = np.transpose(self.as_tensor(), idx).reshape(-1)
        return PureState(tuple(self.registers[i] for i in idx), amps, self.subnormalized)

    def overlap(self, other: "PureState") -> complex:
        """Inner product <self|other>."""
        _require_same_registers(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_density(self) -> "DensityOperator":
        a = self.amplitudes
        return DensityOperator(self.registers, np.outer(a, a.conj()))

    def reduced(self, keep: Iterable[str]) -> "DensityOperator":
        """Reduced density operator on `keep`, in this state's register order."""
        keep_idx = sorted(self.indices(keep))
        traced = [i for i in range(len(self.dims)) if i not in keep_idx]
        dk = math.prod(self.dims[i] for i in keep_idx)
        mat = np.transpose(self.as_tensor(), keep_idx + traced).reshape(dk, -1)
        rho = mat @ mat.conj().T
        return DensityOperator(tuple(self.registers[i] for i in keep_idx), (rho + rho.conj().T) / 2)


@dataclass(frozen=True, eq=False)
class DensityOperator(_Registered):
    registers: tuple[Register, ...]
    matrix: np.ndarray

    def __post_init__(self):
        regs = _check_registers(self.registers)
        object.__setattr__(self, "registers", regs)
        d = math.prod(dim for _, dim in regs)
        mat = _frozen(self.matrix)
        if mat.shape != (d, d):
            raise DimensionMismatch(f"matrix shape {mat.shape} for total dimension {d}")
        object.__setattr__(self, "matrix", mat)
        if not np.all(np.isfinite(mat)):
            raise UserInputError("matrix entries must be finite")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > HERMITIAN_ATOL:
            raise InvariantViolation("density operator is not Hermitian")
        if abs(np.trace(mat) - 1.0) > TRACE_ATOL:
            raise InvariantViolation(f"density operator trace {np.trace(mat).real:.15g} is not 1")
        lowest = linalg.eigvalsh(mat).min() if d else 0.0
        if lowest < -PSD_ATOL:
            raise InvariantViolation(f"density operator has eigenvalue {lowest:.3e}")

    @classmethod
    def maximally_mixed(cls, registers: Iterable[Register]) -> "DensityOperator":
        regs = _check_registers(registers)
        d = math.prod(dim for _, dim in regs)
        return cls(regs, np.eye(d) / d)

    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh(self.matrix)


def _as_density(state: "PureState | DensityOperator") -> DensityOperator:
    return state.to_density() if isinstance(state, PureState) else state


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def tensor(a, b):
    """Kronecker product of two states, operators or plain matrices."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(
            a.registers + b.registers,
            np.kron(a.amplitudes, b.amplitudes),
            subnormalized=a.subnormalized or b.subnormalized,
        )
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(a.registers + b.registers, np.kron(a.matrix, b.matrix))
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return np.kron(a, b)
    raise UserInputError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def tensor_all(items: Iterable):
    return reduce(tensor, items)


def partial_trace(rho: "DensityOperator | PureState", keep: Iterable[str]) -> DensityOperator:
    """Trace out every register not in `keep`; kept registers stay in rho's order."""
    if isinstance(rho, PureState):
        return rho.reduced(keep)
    keep_idx = sorted(rho.indices(keep))
    n = len(rho.dims)
    traced = [i for i in range(n) if i not in keep_idx]
    dk = math.prod(rho.dims[i] for i in keep_idx)
    dt = math.prod(rho.dims[i] for i in traced)
    perm = keep_idx + traced + [n + i for i in keep_idx] + [n + i for i in traced]
    arr = rho.matrix.reshape(rho.dims * 2).transpose(perm).reshape(dk, dt, dk, dt)
    reduced = np.einsum("ajbj->ab", arr)
    return DensityOperator(tuple(rho.registers[i] for i in keep_idx), (reduced + reduced.conj().T) / 2)


def is_unitary(matrix, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(matrix, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0) <= atol)


def _contract(op: np.ndarray, arr: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    out = np.tensordot(op, arr, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_on(unitary, targets: Sequence[str], state, atol: float = UNITARY_ATOL):
    """Apply `unitary` to the ordered `targets`, identity elsewhere."""
    u = np.asarray(unitary, dtype=complex)
    idx = state.indices(targets)
    tdims = [state.dims[i] for i in idx]
    d = math.prod(tdims)
    if u.shape != (d, d):
        raise DimensionMismatch(f"operator of shape {u.shape} on targets {list(targets)} of dimension {d}")
    if not is_unitary(u, atol):
        raise NotUnitaryError(f"operator on {list(targets)} is not unitary within {atol:g}")
    op = u.reshape(tdims * 2)
    if isinstance(state, PureState):
        out = _contract(op, state.as_tensor(), idx)
        return state.with_amplitudes(out.reshape(-1))
    n = len(state.dims)
    rho = _contract(op, state.matrix.reshape(state.dims * 2), idx)
    rho = _contract(op.conj(), rho, [n + i for i in idx])
    return DensityOperator(state.registers, rho.reshape(state.dim, state.dim))


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """psi = sum_k coefficients[k] |left[:, k]> |right[k, :]>."""

    coefficients: np.ndarray
    left: np.ndarray
    right: np.ndarray
    left_registers: tuple[Register, ...]
    right_registers: tuple[Register, ...]

    @property
    def rank(self) -> int:
        return int(self.coefficients.size)

    def entropy(self) -> float:
        return shannon_entropy(self.coefficients ** 2)


def schmidt(state: PureState, cut: Iterable[str]) -> SchmidtDecomposition:
    """Schmidt decomposition across `cut` versus the remaining registers."""
    left_idx = sorted(state.indices(cut))
    right_idx = [i for i in range(len(state.dims)) if i not in left_idx]
    if not left_idx or not right_idx:
        raise RegisterError("both sides of a Schmidt cut must be non-empty")
    if state.subnormalized:
        state = state.normalized()
    dl = math.prod(state.dims[i] for i in left_idx)
    mat = np.transpose(state.as_tensor(), left_idx + right_idx).reshape(dl, -1)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = s > SCHMIDT_FLOOR
    return SchmidtDecomposition(
        coefficients=s[keep],
        left=u[:, keep],
        right=vh[keep, :],
        left_registers=tuple(state.registers[i] for i in left_idx),
        right_registers=tuple(state.registers[i] for i in right_idx),
    )


def entanglement_entropy(state: PureState, cut: Iterable[str]) -> float:
    return schmidt(state, cut).entropy()


def _clamped_spectrum(eigenvalues) -> np.ndarray:
    eigs = np.real_if_close(np.asarray(eigenvalues)).astype(float)
    if eigs.size and eigs.min() < -PSD_ATOL:
        raise InvariantViolation(f"negative eigenvalue {eigs.min():.3e} beyond clamp")
    return np.clip(eigs, 0.0, None)


def shannon_entropy(probabilities) -> float:
    p = _clamped_spectrum(probabilities)
    p = p[p > EIGEN_FLOOR]
    return max(float(-np.sum(p * np.log2(p))), 0.0)


def entropy(rho: "DensityOperator | PureState") -> float:
    """Von Neumann entropy in bits."""
    if isinstance(rho, PureState):
        return 0.0
    return shannon_entropy(rho.eigenvalues())


def fidelity(rho, sigma) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, the squared convention."""
    a, b = _as_density(rho), _as_density(sigma)
    _require_same_registers(a, b)
    w, v = linalg.eigh(a.matrix)
    root = (v * np.sqrt(_clamped_spectrum(w))) @ v.conj().T
    inner = root @ b.matrix @ root
    lam = _clamped_spectrum(linalg.eigvalsh((inner + inner.conj().T) / 2))
    return float(min(max(np.sum(np.sqrt(lam)) ** 2, 0.0), 1.0))


def trace_distance(rho, sigma) -> float:
    """Unnormalized trace norm ||rho - sigma||_1, range [0, 2]."""
    a, b = _as_density(rho), _as_density(sigma)
    _require_same_registers(a, b)
    return float(np.sum(np.abs(linalg.eigvalsh(a.matrix - b.matrix))))


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ParameterRangeError(f"binary entropy argument {x} outside [0, 1]")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def majorizes(p, q) -> bool:
    """True iff p is majorized by q (sorted partial sums of q dominate)."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if (p < 0).any() or (q < 0).any():
        raise ParameterRangeError("probability vectors must be nonnegative")
    for name, vec in (("p", p), ("q", q)):
        if abs(vec.sum() - 1.0) > PROBABILITY_ATOL:
            raise ParameterRangeError(f"{name} sums to {vec.sum():.12g}, not 1")
    size = max(p.size, q.size)
    p = np.sort(np.pad(p, (0, size - p.size)))[::-1]
    q = np.sort(np.pad(q, (0, size - q.size)))[::-1]
    return bool(np.all(np.cumsum(q) >= np.cumsum(p) - PROBABILITY_ATOL))


def allclose_up_to_phase(a, b, atol: float = UNITARY_ATOL) -> bool:
    """Compare arrays modulo one global phase, aligned on b's largest entry."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return False
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if b[k] == 0:
        return bool(np.max(np.abs(a), initial=0.0) <= atol)
    if a[k] == 0:
        return False
    phase = a[k] / b[k]
    phase /= abs(phase)
    return bool(np.max(np.abs(a - phase * b)) <= atol)


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

def normalized_basis(basis: Sequence, dim: int) -> list[np.ndarray]:
    """Normalize possibly supernormalized basis vectors and check they resolve identity."""
    vectors = [np.asarray(v, dtype=complex).reshape(-1) for v in basis]
    if len(vectors) != dim or any(v.size != dim for v in vectors):
        raise DimensionMismatch(f"measurement basis needs {dim} vectors of length {dim}")
    out = []
    for v in vectors:
        norm = np.linalg.norm(v)
        if norm == 0:
            raise UserInputError("measurement basis contains a zero vector")
        out.append(v / norm)
    gram = np.column_stack(out)
    gram = gram.conj().T @ gram
    if np.max(np.abs(gram - np.eye(dim))) > BASIS_ATOL:
        raise UserInputError("measurement basis vectors are not orthonormal")
    return out


def measure(state: PureState, label: str, basis: Sequence) -> list[tuple[float, "PureState | None"]]:
    """Destructive projective measurement of one register.

    Returns (probability, post-state) per basis vector; the measured register
    is removed from each post-state. Zero-probability outcomes carry None.
    """
    i = state.index(label)
    vectors = normalized_basis(basis, state.dims[i])
    regs = tuple(r for j, r in enumerate(state.registers) if j != i)
    psi = state.as_tensor()
    results = []
    for v in vectors:
        branch = np.tensordot(v.conj(), psi, axes=([0], [i])).reshape(-1)
        prob = float(np.vdot(branch, branch).real)
        if prob == 0.0:
            results.append((0.0, None))
        else:
            results.append((prob, PureState(regs, branch / math.sqrt(prob))))
    return results


# ---------------------------------------------------------------------------
# Mixtures of pure states
# ---------------------------------------------------------------------------

def ensemble_trace_distance(plus: Sequence[tuple[float, np.ndarray]],
                            minus: Sequence[tuple[float, np.ndarray]] = ()) -> float:
    """Trace norm of sum_i p_i |u_i><u_i| - sum_j q_j |v_j><v_j|.

    Works in the span of the vectors: with V = QR the operator equals
    Q (R W R^dag) Q^dag, so only a small Hermitian eigenproblem is solved.
    """
    pairs = [(float(w), v) for w, v in plus] + [(-float(w), v) for w, v in minus]
    if not pairs:
        return 0.0
    weights = np.array([w for w, _ in pairs])
    vectors = np.column_stack([np.asarray(v, dtype=complex).reshape(-1) for _, v in pairs])
    _, r = np.linalg.qr(vectors, mode="reduced")
    m = (r * weights) @ r.conj().T
    return float(np.sum(np.abs(linalg.eigvalsh((m + m.conj().T) / 2))))


def gram_trace_norm(gram: np.ndarray, weights: Sequence[float]) -> float:
    """Trace norm of sum_i w_i |v_i><v_i| given only the Gram matrix G_ij = <v_i|v_j>.

    The nonzero spectrum equals that of G^(1/2) W G^(1/2).
    """
    g = np.asarray(gram, dtype=complex)
    w, u = linalg.eigh((g + g.conj().T) / 2)
    root = (u * np.sqrt(_clamped_spectrum(w))) @ u.conj().T
    m = root @ np.diag(np.asarray(weights, dtype=float)) @ root
    return float(np.sum(np.abs(linalg.eigvalsh((m + m.conj().T) / 2))))


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Finite mixture of pure states on identical registers."""

    branches: tuple[tuple[float, PureState], ...]

    def __post_init__(self):
        branches = tuple((float(p), s) for p, s in self.branches)
        if not branches:
            raise UserInputError("an ensemble needs at least one branch")
        regs = branches[0][1].registers
        for p, s in branches:
            if p < 0:
                raise InvariantViolation(f"negative branch weight {p}")
            if s.registers != regs:
                raise DimensionMismatch("ensemble branches live on different registers")
        total = math.fsum(p for p, _ in branches)
        if abs(total - 1.0) > PROBABILITY_ATOL:
            raise InvariantViolation(f"ensemble weights sum to {total:.15g}")
        object.__setattr__(self, "branches", branches)

    @classmethod
    def pure(cls, state: PureState) -> "Ensemble":
        return cls(((1.0, state),))

    @property
    def registers(self) -> tuple[Register, ...]:
        return self.branches[0][1].registers

    def fidelity(self, target: PureState) -> float:
        return float(min(math.fsum(p * abs(target.overlap(s)) ** 2 for p, s in self.branches), 1.0))

    def trace_distance(self, other: "Ensemble | PureState") -> float:
        if isinstance(other, PureState):
            other = Ensemble.pure(other)
        if other.registers != self.registers:
            raise DimensionMismatch("ensembles live on different registers")
        return ensemble_trace_distance(
            [(p, s.amplitudes) for p, s in self.branches],
            [(q, s.amplitudes) for q, s in other.branches],
        )

    def to_density(self) -> DensityOperator:
        mat = sum(p * np.outer(s.amplitudes, s.amplitudes.conj()) for p, s in self.branches)
        return DensityOperator(self.registers, mat)


# ---------------------------------------------------------------------------
# Random states
# ---------------------------------------------------------------------------

def random_pure_state(registers: Iterable[Register], rng: np.random.Generator) -> PureState:
    """Haar-random pure state."""
    regs = _check_registers(registers)
    d = math.prod(dim for _, dim in regs)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState(regs, z / np.linalg.norm(z))


def random_density(registers: Iterable[Register], rng: np.random.Generator,
                   rank: int | None = None) -> DensityOperator:
    """Ginibre-random density operator of the given rank (full rank by default)."""
    regs = _check_registers(registers)
    d = math.prod(dim for _, dim in regs)
    g = rng.standard_normal((d, rank or d)) + 1j * rng.standard_normal((d, rank or d))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityOperator(regs, m / np.trace(m).real)
