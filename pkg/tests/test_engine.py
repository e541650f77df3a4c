import numpy as np
import pytest

from qlinksim.engine import RuleEngine
from qlinksim.errmodel import GateErrorSpec, MemoryChain
from qlinksim.qstate import NoiseModel, QubitRecord, QubitStore, Status, entangle
from qlinksim.ruleset import OutcomeMessage, build_bootstrap_ruleset


class Harness:
    """Two engines sharing one store; messages are queued, not delivered."""

    def __init__(self, n_rounds=1, method="RSs-Sp", num_measure=10, noise=None, seed=0):
        rngs = {k: np.random.default_rng(seed + i) for i, k in enumerate(("memory", "gate", "measure"))}
        self.store = QubitStore(noise or NoiseModel.ideal(), rngs)
        self.outbox = {0: [], 1: []}
        self.tomo = []
        self.trace = []
        self.engines = [
            RuleEngine(n, self.store, self._sender(n), np.random.default_rng(100 + n),
                       on_tomography=self._on_tomo, trace=self.trace)
            for n in (0, 1)
        ]
        self.rulesets = build_bootstrap_ruleset(n_rounds, method, num_measure, ruleset_id=42)
        self.qubits = {0: [], 1: []}

    def _sender(self, node):
        def send(msg, now):
            self.outbox[node].append(msg)
        return send

    def _on_tomo(self, node, key, local, remote, now):
        self.tomo.append((node, key, local, remote))

    def install(self):
        for e, rs in zip(self.engines, self.rulesets):
            e.install(rs, 0)

    def make_pairs(self, n):
        pairs = []
        for _ in range(n):
            a = QubitRecord((0, 0, len(self.qubits[0])), status=Status.RESERVED)
            b = QubitRecord((1, 0, len(self.qubits[1])), status=Status.RESERVED)
            entangle(a, b, 0)
            self.qubits[0].append(a)
            self.qubits[1].append(b)
            pairs.append((a, b))
        return pairs

    def herald(self, n, now=0):
        pairs = self.make_pairs(n)
        self.engines[0].on_new_resources([a for a, _ in pairs], 1, now)
        self.engines[1].on_new_resources([b for _, b in pairs], 0, now)

    def flush(self, now=0):
        """Deliver queued messages until both outboxes stay empty."""
        while self.outbox[0] or self.outbox[1]:
            for src in (0, 1):
                msgs, self.outbox[src] = self.outbox[src], []
                for m in msgs:
                    self.engines[1 - src].on_message(m, now)

    def audit(self):
        for n in (0, 1):
            self.engines[n].audit(self.qubits[n])


def test_ideal_purification_always_passes():
    h = Harness(n_rounds=2, num_measure=5)
    h.install()
    h.herald(20)
    h.flush()
    h.audit()
    e0, e1 = h.engines
    assert e0.stats.failed == e1.stats.failed == 0
    # 20 raw pairs -> 10 after round one -> 5 after round two
    assert e0.stats.passed == 15
    assert len([t for t in h.tomo if t[0] == 0]) == 5
    assert e0.terminated and e1.terminated


def test_tomography_outcomes_of_ideal_pairs_are_correlated():
    h = Harness(n_rounds=0, num_measure=200)
    h.install()
    h.herald(200)
    h.flush()
    for node, key, (oa, ba), (ob, bb) in h.tomo:
        if ba == bb:
            assert oa * ob == (-1 if ba == "Y" else 1)


def test_early_message_is_buffered_and_resolved():
    h = Harness(n_rounds=1, num_measure=1)
    h.install()
    pairs = h.make_pairs(2)
    # only node 1 hears about the pairs first and fires
    h.engines[1].on_new_resources([b for _, b in pairs], 0, 0)
    (msg,) = h.outbox[1]
    h.outbox[1].clear()
    h.engines[0].on_message(msg, 5)
    assert msg.key in h.engines[0].early
    h.engines[0].on_new_resources([a for a, _ in pairs], 1, 10)
    assert not h.engines[0].early
    assert h.engines[0].stats.passed == 1
    h.flush()
    h.audit()
    assert h.engines[1].stats.passed == 1


def test_unknown_ruleset_messages_dropped():
    h = Harness()
    h.install()
    h.engines[0].on_message(OutcomeMessage(1, 0, 999, 0, 0, ((1, "Z"),)), 0)
    assert h.engines[0].stats.dropped_messages == 1


def test_resources_before_install_go_to_pool():
    h = Harness(n_rounds=0, num_measure=3)
    pairs = h.make_pairs(3)
    h.engines[0].on_new_resources([a for a, _ in pairs], 1, 0)
    assert len(h.engines[0].pool) == 3
    h.engines[0].install(h.rulesets[0], 1)
    assert not h.engines[0].pool


def test_install_rejects_foreign_ruleset():
    h = Harness()
    with pytest.raises(ValueError):
        h.engines[0].install(h.rulesets[1], 0)


def test_discard_frees_everything():
    h = Harness(n_rounds=3, num_measure=5)
    h.install()
    h.herald(5)
    h.engines[0].discard(1)
    assert all(q.status is Status.FREE for q in h.qubits[0])
    assert h.engines[0].held() == []


def test_both_nodes_fire_the_same_keys_in_the_same_order():
    noise = NoiseModel(MemoryChain(np.eye(7)), cnot=GateErrorSpec.cnot(0.2))
    h = Harness(n_rounds=2, method="RDs-Sp", num_measure=20, noise=noise, seed=4)
    h.install()
    for _ in range(10):
        h.herald(15)
        h.flush()
        h.audit()
    fires = {n: [k for _, node, kind, k in h.trace if node == n and kind == "fire"] for n in (0, 1)}
    assert fires[0] == fires[1]
    assert h.engines[0].stats.passed == h.engines[1].stats.passed
    assert h.engines[0].stats.failed == h.engines[1].stats.failed > 0
    assert h.engines[0].stats.desync == 0


def test_audit_detects_double_booking():
    h = Harness(n_rounds=1, num_measure=5)
    h.install()
    h.herald(1)
    e = h.engines[0]
    e.lists[1].append(e.lists[0][0])
    with pytest.raises(AssertionError):
        e.audit(h.qubits[0])
