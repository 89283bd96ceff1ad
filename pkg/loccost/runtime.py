"""Two-party LOCC execution engine.

A protocol is an ordered list of steps, each owned by Alice or Bob. Steps
may only touch registers their actor owns, and conditioned operations and
messages only see what the actor measured or was told. Executions either
sample one path or enumerate every measurement branch exactly.
"""
import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, computed_field

from .errors import BranchLimitExceeded, InvariantViolation, LoccViolation, UserInputError
from .tensor import PROBABILITY_ATOL, PureState, apply_on, measure, normalized_basis

logger = logging.getLogger(__name__)

DEFAULT_BRANCH_LIMIT = 2 ** 16


class Party(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"

    @property
    def peer(self) -> "Party":
        return Party.BOB if self is Party.ALICE else Party.ALICE


class Action(str, Enum):
    LOCAL_UNITARY = "local_unitary"
    PROJECTIVE_MEASUREMENT = "projective_measurement"
    CONDITIONED_LOCAL_UNITARY = "conditioned_local_unitary"
    SEND_MESSAGE = "send_message"


class Knowledge(Mapping):
    """Classical values visible to one party; reading anything else is a violation."""

    def __init__(self, party: Party, values: Mapping[str, int]):
        self.party = party
        self._values = dict(values)

    def __getitem__(self, key: str) -> int:
        if key not in self._values:
            raise LoccViolation(f"{self.party.value} has no access to classical value {key!r}")
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)


Rule = Callable[[Knowledge], "np.ndarray | None"]


@dataclass(frozen=True, eq=False)
class ProtocolStep:
    actor: Party
    action: Action
    targets: tuple[str, ...] = ()
    gate: np.ndarray | None = None
    basis: tuple[np.ndarray, ...] | None = None
    key: str | None = None
    rule: Rule | None = None
    keys: tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        required = {
            Action.LOCAL_UNITARY: self.gate is not None and self.targets,
            Action.PROJECTIVE_MEASUREMENT: self.basis is not None and len(self.targets) == 1 and self.key,
            Action.CONDITIONED_LOCAL_UNITARY: self.rule is not None and self.targets,
            Action.SEND_MESSAGE: bool(self.keys),
        }
        if not required[self.action]:
            raise UserInputError(f"incomplete {self.action.value} step {self.label!r}")


def local_unitary(actor: Party, gate, targets: Sequence[str], label: str = "") -> ProtocolStep:
    return ProtocolStep(actor, Action.LOCAL_UNITARY, tuple(targets), gate=np.asarray(gate, dtype=complex), label=label)


def measurement(actor: Party, target: str, basis: Sequence, key: str, label: str = "") -> ProtocolStep:
    return ProtocolStep(actor, Action.PROJECTIVE_MEASUREMENT, (target,),
                        basis=tuple(np.asarray(v, dtype=complex) for v in basis), key=key, label=label)


def conditioned(actor: Party, targets: Sequence[str], rule: Rule, label: str = "") -> ProtocolStep:
    return ProtocolStep(actor, Action.CONDITIONED_LOCAL_UNITARY, tuple(targets), rule=rule, label=label)


def send(actor: Party, keys: Sequence[str], label: str = "") -> ProtocolStep:
    return ProtocolStep(actor, Action.SEND_MESSAGE, keys=tuple(keys), label=label)


class ResourceLedger(BaseModel):
    """Entanglement accounting in ebits.

    Resources are measured by their entanglement entropy, which is
    log2 of the Schmidt rank for maximally entangled states.
    """

    model_config = ConfigDict(frozen=True)

    ebits_consumed: float = 0.0
    ebits_returned: float = 0.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def net_cost(self) -> float:
        return self.ebits_consumed - self.ebits_returned

    def __add__(self, other: "ResourceLedger") -> "ResourceLedger":
        return ResourceLedger(
            ebits_consumed=self.ebits_consumed + other.ebits_consumed,
            ebits_returned=self.ebits_returned + other.ebits_returned,
        )

    def returning(self, ebits: float) -> "ResourceLedger":
        return ResourceLedger(ebits_consumed=self.ebits_consumed, ebits_returned=self.ebits_returned + ebits)


@dataclass(frozen=True, eq=False)
class Protocol:
    name: str
    steps: tuple[ProtocolStep, ...]
    owners: Mapping[str, Party]
    ledger: ResourceLedger = field(default_factory=ResourceLedger)


@dataclass(frozen=True)
class OutcomeRecord:
    step: int
    label: str
    outcome: int
    probability: float


@dataclass(frozen=True)
class Message:
    round: int
    sender: Party
    bits: str


@dataclass(frozen=True, eq=False)
class Transcript:
    protocol: str
    steps: tuple[str, ...]
    outcomes: tuple[OutcomeRecord, ...]
    messages: tuple[Message, ...]
    final_state: PureState
    ledger: ResourceLedger
    probability: float = 1.0
    values: tuple[tuple[str, int], ...] = ()

    @property
    def rounds_used(self) -> int:
        return len(self.messages)

    @property
    def record(self) -> dict[str, int]:
        return dict(self.values)

    @property
    def branch_label(self) -> str:
        return ",".join(f"{o.label}={o.outcome}" for o in self.outcomes) or "-"

    def then(self, other: "Transcript") -> "Transcript":
        """Concatenate a follow-up run onto this one."""
        offset = len(self.steps)
        last_round = self.messages[-1].round if self.messages else 0
        last_sender = self.messages[-1].sender if self.messages else None
        messages = list(self.messages)
        for m in other.messages:
            if m.sender != last_sender:
                last_round += 1
                last_sender = m.sender
            messages.append(Message(last_round, m.sender, m.bits))
        return Transcript(
            protocol=f"{self.protocol}+{other.protocol}",
            steps=self.steps + other.steps,
            outcomes=self.outcomes + tuple(replace(o, step=o.step + offset) for o in other.outcomes),
            messages=tuple(messages),
            final_state=other.final_state,
            ledger=self.ledger + other.ledger,
            probability=self.probability * other.probability,
            values=self.values + other.values,
        )

    def with_ledger(self, ledger: ResourceLedger) -> "Transcript":
        return replace(self, ledger=ledger)

    def to_dict(self) -> dict:
        return {
            "rounds": count_rounds(self),
            "outcomes": [
                {"step": o.step, "label": o.label, "outcome": o.outcome, "probability": o.probability}
                for o in self.outcomes
            ],
            "messages": [{"round": m.round, "sender": m.sender.value, "bits": m.bits} for m in self.messages],
            "net_cost_ebits": self.ledger.net_cost,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def count_rounds(transcript: Transcript) -> int:
    """Number of alternations of the message sender."""
    rounds, last = 0, None
    for m in transcript.messages:
        if m.sender != last:
            rounds += 1
            last = m.sender
    return rounds


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Frame:
    index: int
    state: PureState
    probability: float = 1.0
    executed: tuple[str, ...] = ()
    outcomes: tuple[OutcomeRecord, ...] = ()
    messages: tuple[Message, ...] = ()
    values: tuple[tuple[str, int], ...] = ()
    visible: tuple[frozenset, frozenset] = (frozenset(), frozenset())

    def knowledge(self, party: Party) -> Knowledge:
        seen = self.visible[0 if party is Party.ALICE else 1]
        return Knowledge(party, {k: v for k, v in self.values if k in seen})

    def learn(self, party: Party, keys) -> tuple[frozenset, frozenset]:
        alice, bob = self.visible
        if party is Party.ALICE:
            return alice | frozenset(keys), bob
        return alice, bob | frozenset(keys)


def _step_name(index: int, step: ProtocolStep) -> str:
    return step.label or f"{index}:{step.actor.value}:{step.action.value}"


def _check_locality(protocol: Protocol, step: ProtocolStep, state: PureState) -> None:
    for target in step.targets:
        state.index(target)
        if protocol.owners.get(target) is not step.actor:
            raise LoccViolation(
                f"{step.actor.value} cannot act on register {target!r} in protocol {protocol.name!r}"
            )


def _advance(protocol: Protocol, frame: _Frame) -> list[tuple[float, _Frame]]:
    """Execute one step; measurements return one frame per outcome with its probability."""
    step = protocol.steps[frame.index]
    name = _step_name(frame.index, step)
    _check_locality(protocol, step, frame.state)
    nxt = dict(index=frame.index + 1, executed=frame.executed + (name,))

    if step.action is Action.LOCAL_UNITARY:
        return [(1.0, replace(frame, state=apply_on(step.gate, step.targets, frame.state), **nxt))]

    if step.action is Action.CONDITIONED_LOCAL_UNITARY:
        gate = step.rule(frame.knowledge(step.actor))
        state = frame.state if gate is None else apply_on(gate, step.targets, frame.state)
        return [(1.0, replace(frame, state=state, **nxt))]

    if step.action is Action.SEND_MESSAGE:
        known = frame.knowledge(step.actor)
        bits = "".join(str(known[k]) for k in step.keys)
        last = frame.messages[-1] if frame.messages else None
        rnd = (last.round if last else 0) + (0 if last and last.sender is step.actor else 1)
        return [(1.0, replace(
            frame,
            messages=frame.messages + (Message(rnd, step.actor, bits),),
            visible=frame.learn(step.actor.peer, step.keys),
            **nxt,
        ))]

    target = step.targets[0]
    branches = []
    for outcome, (prob, post) in enumerate(measure(frame.state, target, step.basis)):
        if post is None:
            continue
        branches.append((prob, replace(
            frame,
            state=post,
            probability=frame.probability * prob,
            outcomes=frame.outcomes + (OutcomeRecord(frame.index, step.key, outcome, prob),),
            values=frame.values + ((step.key, outcome),),
            visible=frame.learn(step.actor, [step.key]),
            **nxt,
        )))
    return branches


def _transcript(protocol: Protocol, frame: _Frame) -> Transcript:
    return Transcript(
        protocol=protocol.name,
        steps=frame.executed,
        outcomes=frame.outcomes,
        messages=frame.messages,
        final_state=frame.state,
        ledger=protocol.ledger,
        probability=frame.probability,
        values=frame.values,
    )


def _validate_bases(protocol: Protocol, state: PureState) -> None:
    dims = dict(state.registers)
    for step in protocol.steps:
        if step.action is Action.PROJECTIVE_MEASUREMENT and step.targets[0] in dims:
            normalized_basis(step.basis, dims[step.targets[0]])


def run_sampled(protocol: Protocol, state: PureState, seed: "int | np.random.Generator") -> Transcript:
    """One execution path; outcome probabilities are exact, the choice is sampled."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    _validate_bases(protocol, state)
    frame = _Frame(0, state)
    while frame.index < len(protocol.steps):
        options = _advance(protocol, frame)
        if len(options) == 1:
            frame = options[0][1]
            continue
        probs = np.array([p for p, _ in options])
        frame = options[int(rng.choice(len(options), p=probs / probs.sum()))][1]
    return _transcript(protocol, frame)


def run_all_branches(protocol: Protocol, state: PureState,
                     limit: int = DEFAULT_BRANCH_LIMIT) -> list[tuple[float, Transcript]]:
    """Exhaustive enumeration of measurement branches, in outcome order."""
    _validate_bases(protocol, state)
    stack = [_Frame(0, state)]
    leaves: list[_Frame] = []
    while stack:
        frame = stack.pop()
        if frame.index == len(protocol.steps):
            leaves.append(frame)
            continue
        children = [f for _, f in _advance(protocol, frame)]
        stack.extend(reversed(children))
        if len(stack) + len(leaves) > limit:
            raise BranchLimitExceeded(f"protocol {protocol.name!r} exceeds {limit} branches")
    total = math.fsum(f.probability for f in leaves)
    if abs(total - 1.0) > PROBABILITY_ATOL:
        raise InvariantViolation(f"branch probabilities of {protocol.name!r} sum to {total:.15g}")
    logger.debug("protocol %s: %d branches", protocol.name, len(leaves))
    return [(f.probability, _transcript(protocol, f)) for f in leaves]
