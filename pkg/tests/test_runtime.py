"""Tests for the two-party LOCC engine."""
import json
from collections import Counter
import math

import numpy as np
import pytest

from loccost.errors import BranchLimitExceeded, LoccViolation, UserInputError
from loccost.gates import bell_pair, computational_basis, plus_minus_basis, sigma_x
from loccost.runtime import (
    Action,
    Knowledge,
    Party,
    Protocol,
    ProtocolStep,
    ResourceLedger,
    conditioned,
    count_rounds,
    local_unitary,
    measurement,
    run_all_branches,
    run_sampled,
    send,
)

OWNERS = {"A1": Party.ALICE, "B1": Party.BOB}


def teleport_bit_protocol(with_message: bool = True) -> Protocol:
    """Alice measures her half of a Bell pair; Bob flips his half to |0>."""
    steps = [measurement(Party.ALICE, "A1", computational_basis(), "m")]
    if with_message:
        steps.append(send(Party.ALICE, ["m"]))
    steps.append(conditioned(Party.BOB, ["B1"], lambda known: sigma_x() if known["m"] == 1 else None))
    return Protocol("flip", tuple(steps), OWNERS, ResourceLedger(ebits_consumed=1.0))


class TestKnowledge:
    """Classical visibility."""

    def test_unknown_key_is_violation(self):
        """Reading a value the party never saw fails."""
        known = Knowledge(Party.BOB, {"x": 1})
        assert known["x"] == 1
        with pytest.raises(LoccViolation, match="Bob has no access"):
            known["m"]

    def test_peer(self):
        """Alice and Bob are each other's peer."""
        assert Party.ALICE.peer is Party.BOB


class TestSteps:
    """Step construction."""

    def test_incomplete_step(self):
        """A measurement without a key is rejected."""
        with pytest.raises(UserInputError):
            ProtocolStep(Party.ALICE, Action.PROJECTIVE_MEASUREMENT, ("A1",), basis=tuple(np.eye(2)))


class TestExecution:
    """Exhaustive and sampled runs."""

    def test_exhaustive_branches(self):
        """Two equiprobable branches, both ending in |0> on B1."""
        branches = run_all_branches(teleport_bit_protocol(), bell_pair())
        assert [p for p, _ in branches] == pytest.approx([0.5, 0.5])
        for _, t in branches:
            assert t.final_state.labels == ("B1",)
            assert abs(t.final_state.amplitudes[0]) == pytest.approx(1.0)
            assert t.rounds_used == 1

    def test_conditioning_without_message(self):
        """Bob cannot act on Alice's outcome before it is sent."""
        with pytest.raises(LoccViolation):
            run_all_branches(teleport_bit_protocol(with_message=False), bell_pair())

    def test_nonlocal_action(self):
        """Alice may not touch Bob's register."""
        protocol = Protocol("bad", (local_unitary(Party.ALICE, sigma_x(), ["B1"]),), OWNERS)
        with pytest.raises(LoccViolation, match="cannot act"):
            run_sampled(protocol, bell_pair(), 0)

    def test_branch_limit(self):
        """Enumeration stops past the configured limit."""
        steps = (measurement(Party.ALICE, "A1", plus_minus_basis(), "a"),
                 measurement(Party.BOB, "B1", computational_basis(), "b"))
        with pytest.raises(BranchLimitExceeded):
            run_all_branches(Protocol("two", steps, OWNERS), bell_pair(), limit=1)

    def test_sampled_is_seeded(self):
        """The same seed picks the same branch."""
        a = run_sampled(teleport_bit_protocol(), bell_pair(), 42)
        b = run_sampled(teleport_bit_protocol(), bell_pair(), 42)
        assert a.branch_label == b.branch_label
        assert a.record.keys() == {"m"}


class TestTranscripts:
    """Rounds, concatenation and export."""

    def test_rounds_count_sender_changes(self):
        """Alice, Alice, Bob is two rounds in three messages."""
        steps = (measurement(Party.ALICE, "A1", computational_basis(), "a"),
                 send(Party.ALICE, ["a"]), send(Party.ALICE, ["a"]),
                 measurement(Party.BOB, "B1", computational_basis(), "b"),
                 send(Party.BOB, ["b"]))
        t = run_sampled(Protocol("chat", steps, OWNERS), bell_pair(), 1)
        assert t.rounds_used == 3
        assert count_rounds(t) == 2
        assert [m.round for m in t.messages] == [1, 1, 2]

    def test_then_continues_rounds(self):
        """Concatenated transcripts renumber rounds and add ledgers."""
        first = run_sampled(teleport_bit_protocol(), bell_pair(), 3)
        second = run_sampled(teleport_bit_protocol(), bell_pair(), 4)
        joined = first.then(second)
        assert count_rounds(joined) == 1
        assert joined.ledger.ebits_consumed == 2.0
        assert len(joined.steps) == len(first.steps) + len(second.steps)

    def test_json_export(self):
        """JSON carries rounds, outcomes, messages and net cost."""
        t = run_sampled(teleport_bit_protocol(), bell_pair(), 5)
        data = json.loads(t.to_json())
        assert set(data) == {"rounds", "outcomes", "messages", "net_cost_ebits"}
        assert data["net_cost_ebits"] == 1.0
        assert data["messages"][0]["sender"] == "Alice"


class TestLedgerAndSampling:
    """Resource accounting and sampled paths."""

    def test_ledger_arithmetic(self):
        """net_cost is consumed minus returned."""
        ledger = ResourceLedger(ebits_consumed=1.5) + ResourceLedger(ebits_consumed=1.0, ebits_returned=1.0)
        assert ledger.net_cost == pytest.approx(1.5)
        assert ledger.returning(0.5).net_cost == pytest.approx(1.0)
        assert ledger.model_dump()["net_cost"] == pytest.approx(1.5)

    def test_sampled_frequencies_follow_branches(self):
        """run_sampled visits each enumerated branch at its exact weight."""
        protocol = teleport_bit_protocol()
        branches = {t.branch_label: p for p, t in run_all_branches(protocol, bell_pair())}
        assert set(branches) == {"m=0", "m=1"}
        rng = np.random.default_rng(0)
        trials = 4000
        hits = Counter(run_sampled(protocol, bell_pair(), rng).branch_label for _ in range(trials))
        assert set(hits) <= set(branches)
        for label, p in branches.items():
            assert abs(hits[label] / trials - p) < 5 * math.sqrt(p * (1 - p) / trials)
