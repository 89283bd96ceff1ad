"""Markovianizing cost of a bipartite unitary.

Channels are stored as column-stacking superoperators S with
vec(E(X)) = S vec(X), where vec stacks columns. The Choi matrix is the
normalized (E x id)(Phi_d), output registers first, so trace preservation
reads Tr_out J = I / d_in.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from .errors import ChannelError, ConvergenceError, DimensionMismatch, InvariantViolation, RegisterError
from .gates import GateSpec, max_entangled
from .tensor import DensityOperator, PureState, apply_on, entropy, partial_trace, tensor

logger = logging.getLogger(__name__)

CPTP_ATOL = 1e-10
CMI_CLAMP = 1e-9
MAX_DOUBLINGS = 60
SPECTRAL_RCOND = 1e-9

CesaroMethod = Literal["spectral", "power"]


def _vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=complex).reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


def _unit(i: int, j: int, d: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    in_dim: int
    out_dim: int
    superoperator: np.ndarray
    label: str = ""

    def __post_init__(self):
        s = np.array(self.superoperator, dtype=complex)
        if s.shape != (self.out_dim ** 2, self.in_dim ** 2):
            raise DimensionMismatch(
                f"superoperator shape {s.shape} does not map {self.in_dim}x{self.in_dim} to {self.out_dim}x{self.out_dim}"
            )
        s.setflags(write=False)
        object.__setattr__(self, "superoperator", s)

    @classmethod
    def from_kraus(cls, kraus: Iterable, label: str = "") -> "QuantumChannel":
        ops = [np.asarray(k, dtype=complex) for k in kraus]
        if not ops:
            raise ChannelError("a channel needs at least one Kraus operator")
        out_dim, in_dim = ops[0].shape
        if any(k.shape != (out_dim, in_dim) for k in ops):
            raise DimensionMismatch("Kraus operators have different shapes")
        return cls(in_dim, out_dim, sum(np.kron(k.conj(), k) for k in ops), label)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], in_dim: int, out_dim: int,
                      label: str = "") -> "QuantumChannel":
        """Tabulate a linear map from its action on the matrix units |i><j|."""
        s = np.zeros((out_dim ** 2, in_dim ** 2), dtype=complex)
        for j in range(in_dim):
            for i in range(in_dim):
                image = np.asarray(fn(_unit(i, j, in_dim)), dtype=complex)
                if image.shape != (out_dim, out_dim):
                    raise DimensionMismatch(f"map returned shape {image.shape}, expected {(out_dim, out_dim)}")
                s[:, i + j * in_dim] = _vec(image)
        return cls(in_dim, out_dim, s, label)

    @classmethod
    def identity(cls, d: int) -> "QuantumChannel":
        return cls(d, d, np.eye(d * d), "id")

    @classmethod
    def unitary(cls, u) -> "QuantumChannel":
        u = np.asarray(u, dtype=complex)
        return cls.from_kraus([u], "unitary")

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.in_dim, self.in_dim):
            raise DimensionMismatch(f"input shape {x.shape}, channel expects {(self.in_dim, self.in_dim)}")
        return _unvec(self.superoperator @ _vec(x), self.out_dim)

    def compose(self, other: "QuantumChannel") -> "QuantumChannel":
        """self after other."""
        if other.out_dim != self.in_dim:
            raise DimensionMismatch(f"cannot compose {other.out_dim}-dim output into {self.in_dim}-dim input")
        return QuantumChannel(other.in_dim, self.out_dim, self.superoperator @ other.superoperator,
                              f"{self.label}o{other.label}")

    def choi(self) -> np.ndarray:
        d = self.in_dim
        j = np.zeros((self.out_dim * d, self.out_dim * d), dtype=complex)
        for b in range(d):
            for a in range(d):
                j += np.kron(_unvec(self.superoperator[:, a + b * d], self.out_dim), _unit(a, b, d))
        return j / d

    def apply_to(self, rho: "DensityOperator | PureState", label: str,
                 out_label: str | None = None) -> DensityOperator:
        """(E x id) on register `label` of rho, leaving the other registers alone."""
        if isinstance(rho, PureState):
            rho = rho.to_density()
        t = rho.index(label)
        if rho.dims[t] != self.in_dim:
            raise DimensionMismatch(f"register {label!r} has dimension {rho.dims[t]}, channel expects {self.in_dim}")
        n = len(rho.dims)
        # E[a, b, i, j] = <a| E(|i><j|) |b>
        e = self.superoperator.reshape(self.out_dim, self.out_dim, self.in_dim, self.in_dim).transpose(1, 0, 3, 2)
        out = np.tensordot(e, rho.matrix.reshape(rho.dims * 2), axes=([2, 3], [t, t + n]))
        out = np.moveaxis(out, [0, 1], [t, t + n])
        registers = list(rho.registers)
        registers[t] = (out_label or label, self.out_dim)
        d = math.prod(dim for _, dim in registers)
        return _density(tuple(registers), out.reshape(d, d))

    def residuals(self) -> dict[str, float]:
        j = self.choi()
        h = (j + j.conj().T) / 2
        tr_out = np.einsum("aiaj->ij", j.reshape(self.out_dim, self.in_dim, self.out_dim, self.in_dim))
        return {
            "choi_min_eigenvalue": float(linalg.eigvalsh(h).min()),
            "choi_hermiticity": float(np.max(np.abs(j - j.conj().T))),
            "trace_preservation": float(np.max(np.abs(tr_out - np.eye(self.in_dim) / self.in_dim))),
        }

    def validate(self, atol: float = CPTP_ATOL) -> "QuantumChannel":
        r = self.residuals()
        if r["choi_min_eigenvalue"] < -atol or r["choi_hermiticity"] > atol:
            raise ChannelError(f"channel {self.label!r} is not completely positive: {r}")
        if r["trace_preservation"] > atol:
            raise ChannelError(f"channel {self.label!r} is not trace preserving: {r}")
        return self


def _density(registers, matrix: np.ndarray) -> DensityOperator:
    m = (matrix + matrix.conj().T) / 2
    return DensityOperator(registers, m / np.trace(m).real)


# ---------------------------------------------------------------------------
# Channels induced by a unitary
# ---------------------------------------------------------------------------

def _local_dim(u: GateSpec, d: int | None) -> int:
    local = u.local_dim
    if d is not None and d != local:
        raise DimensionMismatch(f"gate acts on {local}x{local}, not {d}x{d}")
    return local


def psi_u(u: GateSpec, d: int | None = None) -> PureState:
    """(U on A,B) |Phi_d>^{A R_A} |Phi_d>^{B R_B}."""
    d = _local_dim(u, d)
    state = tensor(max_entangled(d, ("A", "RA")), max_entangled(d, ("B", "RB")))
    return apply_on(u.matrix, ("A", "B"), state)


def _recover(u: np.ndarray, d: int, tau: np.ndarray) -> np.ndarray:
    """(1/d) U (Tr_B[U^dag (tau x I) U] x Phi_d^{B R_B}) U^dag on (A, B, R_B)."""
    inner = u.conj().T @ np.kron(tau, np.eye(d)) @ u
    on_a = np.einsum("ajbj->ab", inner.reshape(d, d, d, d))
    phi = max_entangled(d, ("B", "RB")).to_density().matrix
    full_u = np.kron(u, np.eye(d))
    return full_u @ np.kron(on_a, phi) @ full_u.conj().T / d


def petz_recovery(u: GateSpec, d: int | None = None) -> QuantumChannel:
    """Petz map A -> A B R_B of Psi_U, with output registers ordered (A, B, R_B)."""
    d = _local_dim(u, d)
    m = u.matrix
    return QuantumChannel.from_function(lambda tau: _recover(m, d, tau), d, d ** 3, "petz").validate()


def induced_channel(u: GateSpec, d: int | None = None) -> QuantumChannel:
    """Tr_{B R_B} composed with the Petz map."""
    d = _local_dim(u, d)
    m = u.matrix

    def reduced(tau: np.ndarray) -> np.ndarray:
        return np.einsum("ajbj->ab", _recover(m, d, tau).reshape(d, d * d, d, d * d))

    return QuantumChannel.from_function(reduced, d, d, "induced").validate()


# ---------------------------------------------------------------------------
# Cesaro limit
# ---------------------------------------------------------------------------

def _spectral_projector(s: np.ndarray) -> np.ndarray:
    """Projector onto ker(S - I) along range(S - I).

    Kernel and range come from one SVD of S - I with an absolute cutoff, so
    S = I (all singular values at rounding level) gives the identity projector.
    """
    dim = s.shape[0]
    a = s - np.eye(dim)
    u, sv, vh = linalg.svd(a)
    cutoff = SPECTRAL_RCOND * max(1.0, float(np.linalg.norm(s, 2)))
    rank = int(np.sum(sv > cutoff))
    kernel = vh[rank:].conj().T
    image = u[:, :rank]
    basis = np.hstack([kernel, image])
    if np.linalg.cond(basis) > 1 / SPECTRAL_RCOND:
        raise ConvergenceError(f"eigenvalue 1 is not semisimple: kernel {dim - rank} meets range {rank}")
    keep = np.zeros(dim)
    keep[: dim - rank] = 1.0
    return basis @ np.diag(keep) @ linalg.inv(basis)


def _power_average(s: np.ndarray, tolerance: float) -> np.ndarray:
    """(1/N) sum_{n=1..N} S^n by doubling N, with one Richardson step per doubling.

    A_{2m} = (A_m + S^m A_m) / 2. Contractive eigenvalues leave a c/N tail in
    A_N; 2 A_{2m} - A_m cancels it, so the extrapolate settles geometrically.
    S^m comes from repeated squaring, whose rounding drift doubles with every
    squaring; four growing steps in a row stop the iteration.
    """
    average, power = s.copy(), s.copy()
    previous, best, growing = None, math.inf, 0
    for doubling in range(MAX_DOUBLINGS):
        nxt = (average + power @ average) / 2
        extrapolate = 2 * nxt - average
        power = power @ power
        average = nxt
        if previous is not None:
            step = float(np.max(np.abs(extrapolate - previous)))
            if step <= tolerance:
                logger.debug("power Cesaro average converged after %d doublings", doubling + 1)
                return extrapolate
            growing = growing + 1 if step > best else 0
            best = min(best, step)
            if growing >= 4:
                raise ConvergenceError(
                    f"Cesaro average drifts after {doubling + 1} doublings; best step {best:.3g} > {tolerance:g}"
                )
        previous = extrapolate
    raise ConvergenceError(f"Cesaro average did not settle within 2^{MAX_DOUBLINGS} terms")


def cesaro_limit(channel: QuantumChannel, tolerance: float = 1e-10,
                 method: CesaroMethod = "spectral") -> QuantumChannel:
    """lim (1/N) sum_{n=1..N} E^n, an idempotent channel commuting with E."""
    if channel.in_dim != channel.out_dim:
        raise DimensionMismatch("the Cesaro limit needs a channel from a space to itself")
    s = channel.superoperator
    if method == "spectral":
        limit = _spectral_projector(s)
    elif method == "power":
        limit = _power_average(s, tolerance)
    else:
        raise ValueError(f"unknown Cesaro method {method!r}")
    check = max(tolerance, SPECTRAL_RCOND)
    if np.max(np.abs(limit @ limit - limit)) > check or np.max(np.abs(s @ limit - limit)) > check:
        raise ConvergenceError(f"{method} Cesaro limit is not an idempotent fixed point of the channel")
    return QuantumChannel(channel.in_dim, channel.out_dim, limit, f"{channel.label}_inf").validate(max(check, CPTP_ATOL))


def fixed_point_spectrum(channel: QuantumChannel) -> list[complex]:
    """Superoperator eigenvalues, largest magnitude first."""
    eigs = linalg.eigvals(channel.superoperator)
    return [complex(e) for e in sorted(eigs, key=lambda z: (-abs(z), -z.real, -z.imag))]


def fixed_point_state(u: GateSpec, d: int | None = None, method: CesaroMethod = "spectral") -> DensityOperator:
    """Phi_{U,inf} = (E_inf x id)(Phi_d) on (A, R_A)."""
    d = _local_dim(u, d)
    limit = cesaro_limit(induced_channel(u, d), method=method)
    return _density((("A", d), ("RA", d)), limit.choi())


def markov_cost(u: GateSpec, d: int | None = None, method: CesaroMethod = "spectral") -> float:
    """M(U) = S(Phi_{U,inf}) in bits."""
    return entropy(fixed_point_state(u, d, method))


class MarkovReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    gate: str
    dim: int
    markov_cost_bits: float
    markov_cost_power_bits: float | None
    fixed_point_spectrum: list[float]
    channel_spectrum: list[tuple[float, float]]
    cptp_residuals: dict[str, dict[str, float]]
    methods_agree: bool


def markov_report(u: GateSpec, agreement: float = 1e-9) -> MarkovReport:
    d = u.local_dim
    induced = induced_channel(u, d)
    spectral = cesaro_limit(induced, method="spectral")
    phi_spectral = _density((("A", d), ("RA", d)), spectral.choi())
    try:
        power = cesaro_limit(induced, method="power")
    except ConvergenceError as e:
        # rotating peripheral eigenvalues leave an O(1/N) tail the power average cannot beat
        logger.warning("power Cesaro average failed: %s", e)
        power_bits, agree = None, False
    else:
        power_bits = entropy(_density((("A", d), ("RA", d)), power.choi()))
        agree = bool(np.max(np.abs(spectral.superoperator - power.superoperator)) <= agreement)
    if not agree:
        logger.warning("spectral and power Cesaro limits differ beyond %g", agreement)
    return MarkovReport(
        gate=u.label or u.kind.value,
        dim=d,
        markov_cost_bits=entropy(phi_spectral),
        markov_cost_power_bits=power_bits,
        fixed_point_spectrum=sorted((float(x) for x in np.clip(phi_spectral.eigenvalues(), 0.0, None)), reverse=True),
        channel_spectrum=[(z.real, z.imag) for z in fixed_point_spectrum(induced)],
        cptp_residuals={
            "petz": petz_recovery(u, d).residuals(),
            "induced": induced.residuals(),
            "cesaro": spectral.residuals(),
        },
        methods_agree=agree,
    )


# ---------------------------------------------------------------------------
# Conditional mutual information
# ---------------------------------------------------------------------------

def conditional_mutual_information(rho: "DensityOperator | PureState", a: Sequence[str],
                                   b: Sequence[str], c: Sequence[str] = ()) -> float:
    """I(A:B|C) = S(AC) + S(BC) - S(ABC) - S(C) in bits."""
    groups = [list(a), list(b), list(c)]
    flat = [label for group in groups for label in group]
    if len(set(flat)) != len(flat):
        raise RegisterError(f"register groups overlap: {groups}")
    if not a or not b:
        raise RegisterError("both A and B groups must be nonempty")
    rho.indices(flat)

    def s(labels: list[str]) -> float:
        return entropy(partial_trace(rho, labels)) if labels else 0.0

    value = s(groups[0] + groups[2]) + s(groups[1] + groups[2]) - s(flat) - s(groups[2])
    if value < -CMI_CLAMP:
        raise InvariantViolation(f"conditional mutual information {value:.3e} is negative beyond the clamp")
    return max(value, 0.0)
