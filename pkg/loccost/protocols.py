"""Controlled-phase protocols built on the LOCC engine.

- The probabilistic first half consumes one partially entangled pair. It
  applies Utilde_theta with probability p(alpha, theta). Otherwise it leaves
  the residual rotation Utilde_{-theta'}.
- The deterministic repair consumes one Bell pair. It applies any
  Utilde_phi in two rounds.
- The composite single shot runs the first half, then the repair on
  failure. It needs at most four rounds.
- The n-shot batch runs the first half on n pairs against a shared Bell
  budget. Its input is one state per pair or one joint state on all pairs.
- The full protocol replaces the n resource pairs by the typical projection
  of their product, which a maximally entangled state can be diluted into.
"""
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property, partial
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from . import typicality
from .cost import e_theta, residual_angle
from .errors import InvariantViolation, ParameterRangeError, RegisterError
from .gates import (
    bell_pair,
    check_alpha,
    check_theta,
    cnot,
    computational_basis,
    controlled_z,
    max_entangled,
    phi_alpha,
    plus_minus_basis,
    sigma_x,
    sigma_z,
    u_tilde_theta,
)
from .runtime import (
    DEFAULT_BRANCH_LIMIT,
    Party,
    Protocol,
    ResourceLedger,
    Transcript,
    conditioned,
    local_unitary,
    measurement,
    run_all_branches,
    run_sampled,
    send,
)
from .tensor import (
    Ensemble,
    PureState,
    apply_on,
    binary_entropy,
    gram_trace_norm,
    random_pure_state,
    tensor,
    tensor_all,
)
from .trials import map_trials, trial_rng

logger = logging.getLogger(__name__)

# Integer thresholds such as n(p - delta) are compared with this slack so
# that float rounding of an exact boundary does not flip the event.
COUNT_SLACK = 1e-9
MAX_FULL_N = 3
MAX_EXACT_NSHOT_N = 12
MAX_JOINT_NSHOT_N = 5
BELL_ATOL = 1e-10


@dataclass(frozen=True)
class PairLabels:
    """Register names for one gate application and its resources."""

    a: str = "A"
    b: str = "B"
    a0: str = "A0"
    b0: str = "B0"
    a1: str = "A1"
    b1: str = "B1"
    ra: str = "RA"
    rb: str = "RB"

    @classmethod
    def for_pair(cls, i: int) -> "PairLabels":
        return cls(*(f"{name}_{i}" for name in ("A", "B", "A0", "B0", "A1", "B1", "RA", "RB")))


@dataclass(frozen=True)
class Sampled:
    seed: "int | np.random.Generator"

    def rng(self) -> np.random.Generator:
        return self.seed if isinstance(self.seed, np.random.Generator) else np.random.default_rng(self.seed)


@dataclass(frozen=True)
class Exhaustive:
    limit: int = DEFAULT_BRANCH_LIMIT


EXHAUSTIVE = Exhaustive()
Mode = Sampled | Exhaustive


@dataclass(frozen=True, eq=False)
class ShotOutcome:
    """Result of one execution path.

    `residual_angle` is the signed angle of the rotation left by a failed
    first half, so the repair applies Utilde_{theta - residual_angle}.
    """

    success: bool
    residual_angle: float | None
    post_state: PureState
    ledger: ResourceLedger
    transcript: Transcript
    probability: float = 1.0


def _require(state: PureState, labels: Sequence[str], what: str) -> None:
    missing = [label for label in labels if label not in state.labels]
    if missing:
        raise RegisterError(f"{what} needs registers {missing}; input has {list(state.labels)}")


def prepare_input(psi: PureState, alpha: float | None = None, standby: bool = False,
                  labels: PairLabels = PairLabels()) -> PureState:
    """psi on (a, b) followed by phi_alpha on (a0, b0) and optionally a Bell pair on (a1, b1)."""
    if psi.dims != (2, 2):
        raise RegisterError(f"expected a two-qubit input, got dims {psi.dims}")
    state = PureState(((labels.a, 2), (labels.b, 2)), psi.amplitudes)
    if alpha is not None:
        state = tensor(state, phi_alpha(alpha, (labels.a0, labels.b0)))
    if standby:
        state = tensor(state, bell_pair((labels.a1, labels.b1)))
    return state


def target_state(theta: float, psi: PureState, labels: PairLabels = PairLabels()) -> PureState:
    state = PureState(((labels.a, 2), (labels.b, 2)), psi.amplitudes)
    return apply_on(u_tilde_theta(theta).matrix, (labels.a, labels.b), state)


def _detach(state: PureState, factor: PureState) -> PureState:
    """Remove a product factor from `state`."""
    idx = state.indices(factor.labels)
    rest = [i for i in range(len(state.dims)) if i not in idx]
    psi = np.transpose(state.as_tensor(), idx + rest).reshape(factor.dim, -1)
    out = factor.amplitudes.conj() @ psi
    norm = np.linalg.norm(out)
    if abs(norm - 1.0) > BELL_ATOL:
        raise InvariantViolation(f"registers {factor.labels} are not in the expected product state")
    return PureState(tuple(state.registers[i] for i in rest), out / norm)


# ---------------------------------------------------------------------------
# Protocol definitions
# ---------------------------------------------------------------------------

def measurement_basis(theta: float, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Bob's (chi, chi_perp), rescaled by cos(alpha/2) sin(alpha/2) to stay finite at alpha = pi."""
    ct, st = math.cos(theta / 2), math.sin(theta / 2)
    ca, sa = math.cos(alpha / 2), math.sin(alpha / 2)
    return np.array([ct * sa, st * ca]), np.array([st * ca, -ct * sa])


def first_half_protocol(theta: float, alpha: float, labels: PairLabels = PairLabels()) -> Protocol:
    L = labels
    key_a, key_b = f"pm[{L.a0}]", f"chi[{L.b0}]"
    z = sigma_z().matrix
    steps = (
        local_unitary(Party.ALICE, controlled_z().matrix, (L.a0, L.a), "cz A0->A"),
        measurement(Party.ALICE, L.a0, plus_minus_basis(), key_a, "measure A0 +/-"),
        send(Party.ALICE, (key_a,), "send A0 outcome"),
        conditioned(Party.BOB, (L.b0,), lambda known: z if known[key_a] == 1 else None, "correct B0"),
        local_unitary(Party.BOB, controlled_z().matrix, (L.b0, L.b), "cz B0->B"),
        measurement(Party.BOB, L.b0, measurement_basis(theta, alpha), key_b, "measure B0 chi"),
        send(Party.BOB, (key_b,), "send B0 outcome"),
    )
    owners = {L.a: Party.ALICE, L.a0: Party.ALICE, L.b: Party.BOB, L.b0: Party.BOB}
    ledger = ResourceLedger(ebits_consumed=binary_entropy(math.cos(alpha / 2) ** 2))
    return Protocol("first-half", steps, owners, ledger)


def deterministic_protocol(phi: float, labels: PairLabels = PairLabels()) -> Protocol:
    L = labels
    key_m, key_s = f"m[{L.a1}]", f"pm[{L.b1}]"
    x, z = sigma_x(), sigma_z().matrix
    steps = (
        local_unitary(Party.ALICE, cnot(), (L.a, L.a1), "cnot A->A1"),
        measurement(Party.ALICE, L.a1, computational_basis(), key_m, "measure A1"),
        send(Party.ALICE, (key_m,), "send A1 outcome"),
        conditioned(Party.BOB, (L.b1,), lambda known: x if known[key_m] == 1 else None, "flip B1"),
        local_unitary(Party.BOB, u_tilde_theta(phi).matrix, (L.b1, L.b), "phase B1-B"),
        measurement(Party.BOB, L.b1, plus_minus_basis(), key_s, "measure B1 +/-"),
        send(Party.BOB, (key_s,), "send B1 outcome"),
        conditioned(Party.ALICE, (L.a,), lambda known: z if known[key_s] == 1 else None, "correct A"),
    )
    owners = {L.a: Party.ALICE, L.a1: Party.ALICE, L.b: Party.BOB, L.b1: Party.BOB}
    return Protocol("one-ebit", steps, owners, ResourceLedger(ebits_consumed=1.0))


# ---------------------------------------------------------------------------
# Single shot
# ---------------------------------------------------------------------------

def _first_half_outcome(t: Transcript, prob: float, theta: float, alpha: float, labels: PairLabels) -> ShotOutcome:
    success = t.record[f"chi[{labels.b0}]"] == 0
    return ShotOutcome(
        success=success,
        residual_angle=None if success else -residual_angle(alpha, theta),
        post_state=t.final_state,
        ledger=t.ledger,
        transcript=t,
        probability=prob,
    )


def prob_first_half(theta: float, alpha: float, state: PureState, mode: Mode = EXHAUSTIVE,
                    labels: PairLabels = PairLabels()):
    """Run the probabilistic first half.

    Exhaustive mode returns [(probability, ShotOutcome)]; sampled mode one ShotOutcome.
    """
    theta, alpha = check_theta(theta), check_alpha(alpha)
    _require(state, (labels.a, labels.b, labels.a0, labels.b0), "first half")
    protocol = first_half_protocol(theta, alpha, labels)
    if isinstance(mode, Sampled):
        return _first_half_outcome(run_sampled(protocol, state, mode.rng()), 1.0, theta, alpha, labels)
    return [(p, _first_half_outcome(t, p, theta, alpha, labels))
            for p, t in run_all_branches(protocol, state, mode.limit)]


def _check_bell_pair(state: PureState, labels: PairLabels) -> None:
    _require(state, (labels.a, labels.b, labels.a1, labels.b1), "one-ebit protocol")
    bell = bell_pair((labels.a1, labels.b1)).amplitudes
    rho = state.reduced((labels.a1, labels.b1)).matrix
    if abs(1.0 - np.vdot(bell, rho @ bell).real) > BELL_ATOL:
        raise RegisterError(f"registers {labels.a1}, {labels.b1} do not hold a Bell pair")


def deterministic_one_ebit(phi: float, state: PureState, mode: Mode = EXHAUSTIVE,
                           labels: PairLabels = PairLabels()):
    """Apply Utilde_phi with one Bell pair in two rounds."""
    _check_bell_pair(state, labels)
    protocol = deterministic_protocol(phi, labels)

    def outcome(t: Transcript, p: float) -> ShotOutcome:
        return ShotOutcome(True, None, t.final_state, t.ledger, t, p)

    if isinstance(mode, Sampled):
        return outcome(run_sampled(protocol, state, mode.rng()), 1.0)
    return [(p, outcome(t, p)) for p, t in run_all_branches(protocol, state, mode.limit)]


def _finish_success(first: ShotOutcome, labels: PairLabels) -> ShotOutcome:
    bell = bell_pair((labels.a1, labels.b1))
    ledger = first.ledger + ResourceLedger(ebits_consumed=1.0, ebits_returned=1.0)
    return ShotOutcome(True, None, _detach(first.post_state, bell), ledger,
                       first.transcript.with_ledger(ledger), first.probability)


def _finish_failure(first: ShotOutcome, repair: ShotOutcome) -> ShotOutcome:
    transcript = first.transcript.then(repair.transcript)
    return ShotOutcome(False, first.residual_angle, repair.post_state, transcript.ledger,
                       transcript, first.probability * repair.probability)


def composite_single_shot(theta: float, alpha: float, state: PureState, mode: Mode = EXHAUSTIVE,
                          labels: PairLabels = PairLabels()):
    """First half, then the one-ebit repair with angle theta - residual on failure."""
    _require(state, (labels.a1, labels.b1), "composite protocol")
    if isinstance(mode, Sampled):
        rng = mode.rng()
        first = prob_first_half(theta, alpha, state, Sampled(rng), labels)
        if first.success:
            return _finish_success(first, labels)
        repair = deterministic_one_ebit(theta - first.residual_angle, first.post_state, Sampled(rng), labels)
        return _finish_failure(first, repair)

    leaves = []
    for p, first in prob_first_half(theta, alpha, state, mode, labels):
        if first.success:
            leaves.append((p, _finish_success(first, labels)))
            continue
        for q, repair in deterministic_one_ebit(theta - first.residual_angle, first.post_state, mode, labels):
            leaves.append((p * q, _finish_failure(first, repair)))
    return leaves


# ---------------------------------------------------------------------------
# n-shot batch
# ---------------------------------------------------------------------------

def success_threshold(p_theta: float, n: int, delta: float) -> float:
    return n * (p_theta - delta)


def bell_budget(p_theta: float, n: int, delta: float) -> int:
    return max(math.ceil(n * (1.0 - p_theta + delta) - COUNT_SLACK), 0)


def is_event_b(successes: int, threshold: float) -> bool:
    return successes < threshold - COUNT_SLACK


def nshot_epsilon(theta: float, n: int, delta: float) -> float:
    """Exact probability of event (b): fewer than n(p - delta) successes."""
    p = e_theta(theta).p_theta
    k_max = math.ceil(success_threshold(p, n, delta) - COUNT_SLACK) - 1
    if k_max < 0:
        return 0.0
    return float(stats.binom.cdf(k_max, n, p))


class NShotReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    n: int
    delta: float
    successes: int
    failures: int
    event: Literal["a", "b"]
    epsilon_n: float
    bell_budget: int
    bell_used: int
    ledger: ResourceLedger
    final_fidelity: float


class NShotEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    n: int
    delta: float
    trials: int
    events_b: int
    epsilon_hat: float
    stderr: float
    epsilon_exact: float
    mean_fidelity: float
    mean_net_cost: float


@dataclass(frozen=True, eq=False)
class _PairTable:
    probabilities: np.ndarray
    success: np.ndarray
    unrepaired_fidelity: np.ndarray
    repaired_fidelity: np.ndarray
    target: np.ndarray
    failure_state: np.ndarray


def _pair_table(theta: float, alpha: float, psi: PureState, labels: PairLabels) -> _PairTable:
    target = target_state(theta, psi, labels)
    probs, success, raw, repaired = [], [], [], []
    failure_state = target.amplitudes
    for p, out in prob_first_half(theta, alpha, prepare_input(psi, alpha, labels=labels), EXHAUSTIVE, labels):
        probs.append(p)
        success.append(out.success)
        raw.append(abs(target.overlap(out.post_state)) ** 2)
        if out.success:
            repaired.append(raw[-1])
            continue
        failure_state = out.post_state.amplitudes
        with_pair = tensor(out.post_state, bell_pair((labels.a1, labels.b1)))
        fixes = deterministic_one_ebit(theta - out.residual_angle, with_pair, EXHAUSTIVE, labels)
        repaired.append(math.fsum(q * abs(target.overlap(r.post_state)) ** 2 for q, r in fixes))
    return _PairTable(np.array(probs), np.array(success), np.array(raw), np.array(repaired),
                      target.amplitudes, failure_state)


def _sample_leaf(table: _PairTable, u: float) -> int:
    cumulative = np.cumsum(table.probabilities)
    return min(int(np.searchsorted(cumulative, u * cumulative[-1], side="right")), len(cumulative) - 1)


@dataclass(frozen=True, eq=False)
class _Leaf:
    probability: float
    state: PureState
    success: tuple[bool, ...] = ()
    residuals: tuple[float | None, ...] = ()
    bell_used: int = 0
    event_b: bool = False


def _batch_leaves(theta: float, alpha: float, pairs: Sequence[PairLabels], state: PureState,
                  threshold: float, budget: int, mode: Mode) -> list[_Leaf]:
    """First halves on every pair, then Bell-pair repairs of the failures in event (a)."""
    leaves = [_Leaf(1.0, state)]
    limit = mode.limit if isinstance(mode, Exhaustive) else 1
    for labels in pairs:
        grown = []
        for leaf in leaves:
            branches = prob_first_half(theta, alpha, leaf.state, mode, labels)
            for p, out in (branches if isinstance(mode, Exhaustive) else [(1.0, branches)]):
                grown.append(_Leaf(leaf.probability * p, out.post_state, leaf.success + (out.success,),
                                   leaf.residuals + (out.residual_angle,)))
        leaves = grown
        if len(leaves) > limit and isinstance(mode, Exhaustive):
            raise ParameterRangeError(f"batch on {len(pairs)} pairs exceeds {limit} branches")

    final = []
    for leaf in leaves:
        if is_event_b(sum(leaf.success), threshold):
            final.append(_Leaf(leaf.probability, leaf.state, leaf.success, leaf.residuals, 0, True))
            continue
        failed = [i for i, ok in enumerate(leaf.success) if not ok]
        if len(failed) > budget:
            raise InvariantViolation(f"{len(failed)} failures exceed the Bell budget {budget} in event (a)")
        partial_leaves = [(leaf.probability, leaf.state)]
        for i in failed:
            labels = pairs[i]
            repaired = []
            for prob, current in partial_leaves:
                with_pair = tensor(current, bell_pair((labels.a1, labels.b1)))
                fixes = deterministic_one_ebit(theta - leaf.residuals[i], with_pair, mode, labels)
                for q, r in (fixes if isinstance(mode, Exhaustive) else [(1.0, fixes)]):
                    repaired.append((prob * q, r.post_state))
            partial_leaves = repaired
        final.extend(_Leaf(p, s, leaf.success, leaf.residuals, len(failed), False) for p, s in partial_leaves)
    return final


@dataclass(frozen=True, eq=False)
class _BatchRule:
    """Event rule and budgets shared by every batch plan."""

    theta: float
    n: int
    delta: float
    alpha: float
    p_theta: float
    h_theta: float

    @property
    def threshold(self) -> float:
        return success_threshold(self.p_theta, self.n, self.delta)

    @property
    def bell_budget(self) -> int:
        return bell_budget(self.p_theta, self.n, self.delta)

    @cached_property
    def epsilon_n(self) -> float:
        return nshot_epsilon(self.theta, self.n, self.delta)

    def _report(self, successes: int, fidelity: float) -> NShotReport:
        failures = self.n - successes
        budget = self.bell_budget
        event_b = is_event_b(successes, self.threshold)
        if not event_b and failures > budget:
            raise InvariantViolation(f"{failures} failures exceed the Bell budget {budget} in event (a)")
        used = 0 if event_b else failures
        ledger = ResourceLedger(ebits_consumed=self.n * self.h_theta + budget, ebits_returned=budget - used)
        return NShotReport(
            theta=self.theta, n=self.n, delta=self.delta, successes=successes, failures=failures,
            event="b" if event_b else "a", epsilon_n=self.epsilon_n,
            bell_budget=budget, bell_used=used, ledger=ledger, final_fidelity=fidelity,
        )


@dataclass(frozen=True, eq=False)
class NShotPlan(_BatchRule):
    """Product inputs: exact per-pair branch tables; trials sample leaves from them."""

    tables: tuple[_PairTable, ...]

    def run(self, rng: np.random.Generator) -> NShotReport:
        u = rng.random(self.n)
        leaves = [_sample_leaf(t, x) for t, x in zip(self.tables, u)]
        successes = sum(bool(t.success[i]) for t, i in zip(self.tables, leaves))
        column = "unrepaired_fidelity" if is_event_b(successes, self.threshold) else "repaired_fidelity"
        fidelity = math.prod(float(getattr(t, column)[i]) for t, i in zip(self.tables, leaves))
        return self._report(successes, fidelity)


@dataclass(frozen=True, eq=False)
class JointNShotPlan(_BatchRule):
    """Batch on one state over all n pairs, run on the joint state vector.

    `state` holds A_i, B_i and any reference registers; `resources` holds
    the (A0_i, B0_i) pairs, phi_alpha^n for the plain batch or a diluted
    omega_n for the full protocol.
    """

    pairs: tuple[PairLabels, ...]
    state: PureState
    resources: PureState

    @cached_property
    def target(self) -> PureState:
        out = self.state
        for L in self.pairs:
            out = apply_on(u_tilde_theta(self.theta).matrix, (L.a, L.b), out)
        return out

    def leaves(self, mode: Mode = EXHAUSTIVE) -> list[_Leaf]:
        return _batch_leaves(self.theta, self.alpha, self.pairs, tensor(self.state, self.resources),
                             self.threshold, self.bell_budget, mode)

    def mixture(self, mode: Exhaustive = EXHAUSTIVE) -> tuple[Ensemble, float]:
        """Exact output mixture and the enumerated weight of event (b)."""
        leaves = self.leaves(mode)
        eps = math.fsum(l.probability for l in leaves if l.event_b)
        return Ensemble(tuple((l.probability, l.state) for l in leaves)), eps

    def run(self, rng: np.random.Generator) -> NShotReport:
        leaf = self.leaves(Sampled(rng))[0]
        return self._report(sum(leaf.success), abs(self.target.overlap(leaf.state)) ** 2)


def random_pair_inputs(seed: int, n: int) -> list[PureState]:
    rng = np.random.default_rng([seed, n, 1])
    return [random_pure_state((("A", 2), ("B", 2)), rng) for _ in range(n)]


def _check_batch(n: int, delta: float) -> None:
    if int(n) != n or n < 1:
        raise ParameterRangeError(f"n={n} must be a positive integer")
    if delta <= 0:
        raise ParameterRangeError(f"delta={delta} must be positive")


def _joint_input(inputs: "PureState | Sequence[PureState] | None", n: int) -> PureState | None:
    """The single state spanning all n pairs, or None for per-pair inputs."""
    qubits = (2,) * (2 * n)
    if isinstance(inputs, PureState):
        if inputs.dims != qubits:
            raise ParameterRangeError(f"joint input has dims {inputs.dims}; {n} pairs need {2 * n} qubits")
        return inputs
    if inputs is not None and n > 1 and len(inputs) == 1 and inputs[0].dims == qubits:
        return inputs[0]
    return None


def _on_pair_registers(state: PureState, pairs: Sequence[PairLabels]) -> PureState:
    """Match A_i, B_i by name; otherwise take registers in order A_1, B_1, A_2, B_2, ..."""
    order = [label for L in pairs for label in (L.a, L.b)]
    if sorted(state.labels) == sorted(order):
        return state.permuted(order)
    return PureState(tuple((label, 2) for label in order), state.amplitudes)


def nshot_plan(theta: float, n: int, delta: float,
               inputs: "PureState | Sequence[PureState] | None" = None,
               seed: int = 0) -> "NShotPlan | JointNShotPlan":
    """Batch plan for n pairs.

    `inputs` is either one two-qubit state per pair or a single state on all
    2n qubits, which may be entangled across pairs. Product inputs are
    tabulated pair by pair; a joint input is simulated on its full state
    vector and is limited to MAX_JOINT_NSHOT_N pairs.
    """
    _check_batch(n, delta)
    n = int(n)
    profile = e_theta(theta)
    rule = (profile.theta, n, float(delta), profile.alpha_theta, profile.p_theta, profile.h_theta)
    joint = _joint_input(inputs, n)
    if joint is not None:
        if n > MAX_JOINT_NSHOT_N:
            raise ParameterRangeError(f"joint n-shot inputs are limited to n <= {MAX_JOINT_NSHOT_N}")
        pairs = tuple(PairLabels.for_pair(i) for i in range(1, n + 1))
        resources = tensor_all(phi_alpha(profile.alpha_theta, (L.a0, L.b0)) for L in pairs)
        return JointNShotPlan(*rule, pairs, _on_pair_registers(joint, pairs), resources)

    inputs = list(inputs) if inputs is not None else random_pair_inputs(seed, n)
    if len(inputs) != n:
        raise ParameterRangeError(f"{len(inputs)} pair inputs for n={n}")
    tables = tuple(_pair_table(profile.theta, profile.alpha_theta, psi, PairLabels.for_pair(i + 1))
                   for i, psi in enumerate(inputs))
    return NShotPlan(*rule, tables)


def nshot_run(theta: float, n: int, delta: float,
              inputs: "PureState | Sequence[PureState] | None" = None, seed: int = 0) -> NShotReport:
    return nshot_plan(theta, n, delta, inputs, seed).run(trial_rng(seed, 0))


def _trial_summary(plan: "NShotPlan | JointNShotPlan", rng: np.random.Generator) -> tuple[bool, float, float]:
    report = plan.run(rng)
    return report.event == "b", report.final_fidelity, report.ledger.net_cost


def nshot_estimate(theta: float, n: int, delta: float, trials: int, seed: int,
                   workers: int = 1, inputs: "PureState | Sequence[PureState] | None" = None) -> NShotEstimate:
    plan = nshot_plan(theta, n, delta, inputs, seed)
    results = map_trials(partial(_trial_summary, plan), seed, trials, workers)
    events = sum(1 for b, _, _ in results if b)
    eps = events / trials if trials else 0.0
    return NShotEstimate(
        theta=plan.theta, n=plan.n, delta=plan.delta, trials=trials, events_b=events,
        epsilon_hat=eps,
        stderr=math.sqrt(eps * (1 - eps) / trials) if trials else 0.0,
        epsilon_exact=nshot_epsilon(plan.theta, plan.n, plan.delta),
        mean_fidelity=math.fsum(f for _, f, _ in results) / max(trials, 1),
        mean_net_cost=math.fsum(c for _, _, c in results) / max(trials, 1),
    )


def decay_fit(ns: Sequence[int], epsilons: Sequence[float]) -> float | None:
    """Least-squares slope of ln(epsilon) against n over positive estimates."""
    points = [(n, math.log(e)) for n, e in zip(ns, epsilons) if e > 0]
    if len(points) < 2:
        return None
    slope, _ = np.polyfit([n for n, _ in points], [y for _, y in points], 1)
    return float(slope)


class NShotExact(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    n: int
    delta: float
    epsilon_enumerated: float
    epsilon_binomial: float
    trace_distance: float
    bound: float
    fidelity: float


def nshot_exact(theta: float, n: int, delta: float,
                inputs: "PureState | Sequence[PureState] | None" = None, seed: int = 0) -> NShotExact:
    """Exact output mixture of the n-shot batch against the target.

    Event (a) leaves equal the target. For product inputs event (b) leaves
    are products of target and failure states, so their Gram matrix
    factorizes over pairs. Joint inputs enumerate every branch instead.
    """
    if n > MAX_EXACT_NSHOT_N:
        raise ParameterRangeError(f"exact n-shot evaluation is limited to n <= {MAX_EXACT_NSHOT_N}")
    plan = nshot_plan(theta, n, delta, inputs, seed)
    if isinstance(plan, JointNShotPlan):
        mixture, eps = plan.mixture()
        return NShotExact(theta=plan.theta, n=plan.n, delta=plan.delta, epsilon_enumerated=eps,
                          epsilon_binomial=plan.epsilon_n, trace_distance=mixture.trace_distance(plan.target),
                          bound=2 * eps, fidelity=mixture.fidelity(plan.target))

    p_success = np.array([t.probabilities[t.success].sum() for t in plan.tables])

    patterns, weights = [], []
    for bits in np.ndindex(*(2,) * n):
        ok = np.array(bits, dtype=bool)
        if is_event_b(int(ok.sum()), plan.threshold):
            patterns.append(ok)
            weights.append(float(np.prod(np.where(ok, p_success, 1 - p_success))))
    eps = math.fsum(weights)

    # vectors: target first, then each event-(b) pattern
    rows = np.array([np.ones(n, dtype=bool)] + patterns)
    gram = np.ones((len(rows), len(rows)), dtype=complex)
    overlaps_t = []
    for i, table in enumerate(plan.tables):
        t, f = table.target, table.failure_state
        cross = np.vdot(t, f)
        o = np.array([[np.vdot(f, f), np.conj(cross)], [cross, np.vdot(t, t)]])
        col = rows[:, i].astype(int)
        gram *= o[col[:, None], col[None, :]]
        overlaps_t.append(abs(cross) ** 2)
    distance = gram_trace_norm(gram, [-eps] + weights) if patterns else 0.0
    fidelity = (1 - eps) + math.fsum(
        w * float(np.prod([1.0 if ok else ov for ok, ov in zip(pat, overlaps_t)]))
        for w, pat in zip(weights, patterns)
    )
    return NShotExact(theta=plan.theta, n=n, delta=delta, epsilon_enumerated=eps,
                      epsilon_binomial=nshot_epsilon(plan.theta, n, delta),
                      trace_distance=distance, bound=2 * eps, fidelity=fidelity)


# ---------------------------------------------------------------------------
# Full protocol
# ---------------------------------------------------------------------------

class FullProtocolReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: float
    n: int
    delta: float
    log_rank_bits: int
    dilution_bits: int
    bell_budget: int
    trace_distance: float
    epsilon_n: float
    epsilon_n_binomial: float
    eps_prime: float
    bound: float
    resource_distance: float
    ideal_distance: float
    fidelity: float
    ledger: ResourceLedger
    final_state: Ensemble | PureState


def full_mn(theta: float, n: int, delta: float, seed: int | None = None,
            branch_limit: int = DEFAULT_BRANCH_LIMIT) -> FullProtocolReport:
    """Full protocol on n reference-purified pairs.

    A maximally entangled state of ceil(n(E_theta + 2 delta)) bits is split
    into the Bell budget and a dilution into omega_n, and the batch runs on
    omega_n in place of phi_alpha^n. With seed=None every branch is
    enumerated and the output is the exact mixture; with a seed one path is
    sampled.
    """
    if int(n) != n or not 1 <= n <= MAX_FULL_N:
        raise ParameterRangeError(f"full protocol simulation supports 1 <= n <= {MAX_FULL_N}")
    _check_batch(n, delta)
    n = int(n)
    profile = e_theta(theta)
    theta = profile.theta
    pairs = tuple(PairLabels.for_pair(i) for i in range(1, n + 1))
    resource_labels = [(L.a0, L.b0) for L in pairs]

    omega, eps_prime = typicality.omega_n(theta, n, delta, resource_labels)
    budget = bell_budget(profile.p_theta, n, delta)
    log_rank = max(math.ceil(n * (profile.E_theta + 2 * delta) - COUNT_SLACK), budget)
    certificate = typicality.dilution_feasible(theta, n, delta, budget_bits=log_rank - budget)
    if not certificate.feasible:
        raise InvariantViolation(f"{log_rank - budget} dilution bits cannot produce omega_n at n={n}, delta={delta}")

    references = tensor_all(
        tensor(max_entangled(2, (L.a, L.ra)), max_entangled(2, (L.b, L.rb))) for L in pairs
    )
    plan = JointNShotPlan(theta, n, float(delta), profile.alpha_theta, profile.p_theta, profile.h_theta,
                          pairs, references, omega)
    target = plan.target
    eps_binomial = plan.epsilon_n

    def report(**fields) -> FullProtocolReport:
        return FullProtocolReport(
            theta=theta, n=n, delta=delta, log_rank_bits=log_rank, dilution_bits=certificate.rank_bits,
            bell_budget=budget, epsilon_n_binomial=eps_binomial, eps_prime=eps_prime, **fields,
        )

    if seed is not None:
        leaf = plan.leaves(Sampled(np.random.default_rng(seed)))[0]
        overlap = abs(target.overlap(leaf.state)) ** 2
        ledger = ResourceLedger(ebits_consumed=float(log_rank), ebits_returned=float(budget - leaf.bell_used))
        return report(
            trace_distance=2.0 * math.sqrt(max(1.0 - overlap, 0.0)), epsilon_n=eps_binomial,
            bound=2 * eps_binomial + eps_prime, resource_distance=float("nan"), ideal_distance=float("nan"),
            fidelity=overlap, ledger=ledger, final_state=leaf.state,
        )

    mode = Exhaustive(branch_limit)
    leaves = plan.leaves(mode)
    with_omega = Ensemble(tuple((l.probability, l.state) for l in leaves))
    with_phi, eps_n = replace(plan, resources=typicality.phi_power(theta, n, resource_labels)).mixture(mode)
    expected_unused = math.fsum(l.probability * (budget - l.bell_used) for l in leaves)
    ledger = ResourceLedger(ebits_consumed=float(log_rank), ebits_returned=expected_unused)
    logger.debug("full protocol n=%d: %d leaves (omega), %d leaves (phi)", n, len(leaves), len(with_phi.branches))
    return report(
        trace_distance=with_omega.trace_distance(target),
        epsilon_n=eps_n,
        bound=2 * eps_n + eps_prime,
        resource_distance=with_omega.trace_distance(with_phi),
        ideal_distance=with_phi.trace_distance(target),
        fidelity=with_omega.fidelity(target),
        ledger=ledger,
        final_state=with_omega,
    )
