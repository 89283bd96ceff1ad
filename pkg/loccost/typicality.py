"""Weakly typical sequences of a binary source and entanglement dilution.

The source is (cos^2(a/2), sin^2(a/2)) with a = sqrt(theta). The probability
of a sequence depends only on its Hamming weight, so every quantity here is
computed per weight class with binomial multiplicities in the log domain.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import gammaln, logsumexp

from .errors import ParameterRangeError
from .gates import check_theta, phi_alpha
from .tensor import PureState, ensemble_trace_distance, tensor_all

logger = logging.getLogger(__name__)

MAX_MEMBER_N = 24
MAX_CLASS_N = 1024
MAX_OMEGA_N = 12
COUNT_SLACK = 1e-9
LN2 = math.log(2.0)


def source_distribution(theta: float) -> tuple[float, float]:
    alpha = math.sqrt(check_theta(theta))
    return math.cos(alpha / 2) ** 2, math.sin(alpha / 2) ** 2


def _entropy_bits(lam: tuple[float, float]) -> float:
    return -math.fsum(p * math.log2(p) for p in lam if p > 0)


def _log2_sequence_prob(lam: tuple[float, float], n: int, k: int) -> float:
    total = 0.0
    for p, count in ((lam[0], n - k), (lam[1], k)):
        if count:
            if p == 0:
                return -math.inf
            total += count * math.log2(p)
    return total


def _ln_comb(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


@dataclass(frozen=True)
class TypicalSet:
    """delta-weakly typical sequences, stored as admitted Hamming-weight classes.

    Weight k counts occurrences of the second symbol.
    """

    n: int
    delta: float
    lam: tuple[float, float]
    H: float
    weights: tuple[int, ...]
    log2_probs: tuple[float, ...]
    multiplicities: tuple[int, ...]
    P: float
    one_minus_p: float

    @property
    def size(self) -> int:
        return sum(self.multiplicities)

    @property
    def bounds(self) -> tuple[float, float]:
        """(lower, upper) limits on log2 of a member's probability."""
        return -self.n * (self.H + self.delta), -self.n * (self.H - self.delta)

    def contains(self, sequence: Sequence[int]) -> bool:
        if len(sequence) != self.n:
            return False
        return sum(sequence) in self.weights

    def lambda_prime(self) -> dict[int, float]:
        """Renormalized probability of one sequence in each admitted class."""
        return {k: 2.0 ** lp / self.P for k, lp in zip(self.weights, self.log2_probs)}

    def members(self) -> Iterator[tuple[int, ...]]:
        if self.n > MAX_MEMBER_N:
            raise ParameterRangeError(f"member enumeration is limited to n <= {MAX_MEMBER_N}")
        for k in self.weights:
            for ones in itertools.combinations(range(self.n), k):
                seq = [0] * self.n
                for i in ones:
                    seq[i] = 1
                yield tuple(seq)


def typical_set(lam: Sequence[float], n: int, delta: float) -> TypicalSet:
    lam = (float(lam[0]), float(lam[1]))
    if min(lam) < 0 or abs(sum(lam) - 1.0) > 1e-12:
        raise ParameterRangeError(f"{lam} is not a probability pair")
    if int(n) != n or not 1 <= n <= MAX_CLASS_N:
        raise ParameterRangeError(f"n={n} outside 1..{MAX_CLASS_N}")
    if delta < 0:
        raise ParameterRangeError(f"delta={delta} is negative")
    n = int(n)
    H = _entropy_bits(lam)
    lower, upper = -n * (H + delta), -n * (H - delta)
    admitted, rejected = [], []
    for k in range(n + 1):
        lp = _log2_sequence_prob(lam, n, k)
        (admitted if lower <= lp <= upper else rejected).append((k, lp))

    def mass(classes) -> float:
        terms = [_ln_comb(n, k) + lp * LN2 for k, lp in classes if lp > -math.inf]
        return float(math.exp(logsumexp(terms))) if terms else 0.0

    return TypicalSet(
        n=n,
        delta=float(delta),
        lam=lam,
        H=H,
        weights=tuple(k for k, _ in admitted),
        log2_probs=tuple(lp for _, lp in admitted),
        multiplicities=tuple(math.comb(n, k) for k, _ in admitted),
        P=min(mass(admitted), 1.0),
        one_minus_p=min(mass(rejected), 1.0),
    )


def theta_typical_set(theta: float, n: int, delta: float) -> TypicalSet:
    return typical_set(source_distribution(theta), n, delta)


# ---------------------------------------------------------------------------
# Projected resource state
# ---------------------------------------------------------------------------

def default_pair_labels(n: int) -> list[tuple[str, str]]:
    return [(f"A0_{i}", f"B0_{i}") for i in range(1, n + 1)]


def phi_power(theta: float, n: int, labels: Sequence[tuple[str, str]] | None = None) -> PureState:
    """n copies of phi_alpha at alpha = sqrt(theta), pairs interleaved."""
    alpha = math.sqrt(check_theta(theta))
    labels = list(labels or default_pair_labels(n))
    return tensor_all(phi_alpha(alpha, pair) for pair in labels)


def omega_n(theta: float, n: int, delta: float,
            labels: Sequence[tuple[str, str]] | None = None) -> tuple[PureState, float]:
    """Typical projection of phi^n, renormalized, and its exact distance 2 sqrt(1 - P)."""
    if n > MAX_OMEGA_N:
        raise ParameterRangeError(f"explicit omega_n is limited to n <= {MAX_OMEGA_N}")
    ts = theta_typical_set(theta, n, delta)
    if not ts.weights or ts.P == 0.0:
        raise ParameterRangeError(f"typical set is empty at theta={theta}, n={n}, delta={delta}")
    labels = list(labels or default_pair_labels(n))
    if len(labels) != n:
        raise ParameterRangeError(f"{len(labels)} label pairs for n={n}")
    alpha = math.sqrt(check_theta(theta))
    c, s = math.cos(alpha / 2), 1j * math.sin(alpha / 2)

    positions = np.arange(n)
    xs = np.arange(2 ** n)
    bits = (xs[:, None] >> (n - 1 - positions)) & 1
    k = bits.sum(axis=1)
    keep = np.isin(k, ts.weights)
    # |x>_A|x>_B per pair is digit 0 or 3 in base 4
    index = (3 * bits) @ (4 ** (n - 1 - positions))
    amps = np.zeros(4 ** n, dtype=complex)
    amps[index[keep]] = (c ** (n - k[keep])) * (s ** k[keep])
    amps /= np.linalg.norm(amps)

    registers = tuple((label, 2) for pair in labels for label in pair)
    return PureState(registers, amps), 2.0 * math.sqrt(max(ts.one_minus_p, 0.0))


def eps_prime_direct(theta: float, n: int, delta: float) -> float:
    """Trace distance of omega_n to phi^n from an explicit eigendecomposition."""
    omega, _ = omega_n(theta, n, delta)
    phi = phi_power(theta, n)
    return ensemble_trace_distance([(1.0, omega.amplitudes)], [(1.0, phi.amplitudes)])


# ---------------------------------------------------------------------------
# Dilution feasibility
# ---------------------------------------------------------------------------

class DilutionCertificate(BaseModel):
    model_config = ConfigDict(frozen=True)

    feasible: bool
    budget_bits: float
    rank_bits: int
    support: int


def _log2_int(value: int) -> float:
    return math.log2(value) if value > 0 else -math.inf


def _majorizes_uniform(ts: TypicalSet, rank_bits: int, tol: float = 1e-12) -> bool:
    """Whether uniform on 2**rank_bits is majorized by the renormalized typical distribution.

    Both partial-sum curves are piecewise linear with breakpoints at class
    boundaries and at 2**rank_bits, so checking those points suffices.
    """
    size = 2 ** rank_bits
    classes = sorted(zip(ts.log2_probs, ts.multiplicities), reverse=True)
    log2_p = math.log2(ts.P)
    cumulative_count, cumulative_q = 0, 0.0
    for lp, mult in classes:
        lp_prime = lp - log2_p
        start = cumulative_count
        cumulative_count += mult
        if start < size < cumulative_count:
            q_at_size = cumulative_q + 2.0 ** (_log2_int(size - start) + lp_prime)
            if q_at_size < 1.0 - tol:
                return False
        cumulative_q += 2.0 ** (_log2_int(mult) + lp_prime)
        uniform = 1.0 if cumulative_count >= size else 2.0 ** (_log2_int(cumulative_count) - rank_bits)
        if cumulative_q < uniform - tol:
            return False
    return True


def dilution_feasible(theta: float, n: int, delta: float,
                      budget_bits: float | None = None) -> DilutionCertificate:
    ts = theta_typical_set(theta, n, delta)
    budget = n * (ts.H + delta) if budget_bits is None else float(budget_bits)
    rank_bits = max(math.ceil(budget - COUNT_SLACK), 0)
    feasible = bool(ts.weights) and ts.P > 0 and _majorizes_uniform(ts, rank_bits)
    return DilutionCertificate(feasible=feasible, budget_bits=budget, rank_bits=rank_bits, support=ts.size)


def dilution_target_distribution(ts: TypicalSet) -> np.ndarray:
    """Explicit renormalized distribution over typical sequences (small n only)."""
    if ts.n > MAX_MEMBER_N:
        raise ParameterRangeError(f"explicit distribution is limited to n <= {MAX_MEMBER_N}")
    primes = ts.lambda_prime()
    return np.concatenate([np.full(m, primes[k]) for k, m in zip(ts.weights, ts.multiplicities)])


# ---------------------------------------------------------------------------
# Concentration scan
# ---------------------------------------------------------------------------

class ScanRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    delta: float
    P: float
    one_minus_P: float
    eps_prime: float
    budget_bits: float
    feasible: bool


class ConcentrationScan(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    delta: float
    rows: list[ScanRow]
    exponent: float | None
    decreased: bool
    monotone: bool


def concentration_scan(theta: float, delta: float, n_list: Sequence[int]) -> ConcentrationScan:
    rows = []
    for n in n_list:
        ts = theta_typical_set(theta, n, delta)
        cert = dilution_feasible(theta, n, delta)
        rows.append(ScanRow(
            n=n, delta=delta, P=ts.P, one_minus_P=ts.one_minus_p,
            eps_prime=2.0 * math.sqrt(max(ts.one_minus_p, 0.0)),
            budget_bits=cert.budget_bits, feasible=cert.feasible,
        ))
    tails = [(r.n, r.one_minus_P) for r in rows if r.one_minus_P > 0]
    exponent = None
    if len(tails) >= 2:
        slope, _ = np.polyfit([n for n, _ in tails], [math.log(t) for _, t in tails], 1)
        exponent = float(-slope)
    values = [r.one_minus_P for r in rows]
    return ConcentrationScan(
        theta=theta,
        delta=delta,
        rows=rows,
        exponent=exponent,
        decreased=len(values) < 2 or values[-1] <= values[0],
        monotone=all(b <= a for a, b in zip(values, values[1:])),
    )
