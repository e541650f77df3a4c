"""Per-node rule engine: resource allocation, firing, message pairing, promotion."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from .qstate import QubitRecord, QubitStore, Status
from .ruleset import (
    ActionKind,
    OutcomeMessage,
    RuleSet,
    fire_purification,
    fire_tomography,
    verdict,
)


@dataclass
class PendingRecord:
    key: tuple
    outcomes: tuple
    kept: QubitRecord | None
    fired_at: int


@dataclass
class EngineStats:
    fired: Counter = field(default_factory=Counter)
    passed: int = 0
    failed: int = 0
    dropped_messages: int = 0
    desync: int = 0


class RuleEngine:
    """Executes one node's RuleSet.

    Parameters
    ----------
    node : int
        This node's address.
    store : QubitStore
        Shared qubit state of the simulation.
    send : callable
        ``send(msg, now)`` hands an :class:`OutcomeMessage` to the network.
    basis_rng : numpy.random.Generator
        Stream used to draw tomography bases.
    on_tomography : callable, optional
        ``on_tomography(node, key, local, remote, now)`` once per resolved
        tomography record.
    trace : list, optional
        If given, one tuple ``(time, node, kind, key)`` is appended per event.
    """

    def __init__(
        self,
        node: int,
        store: QubitStore,
        send: Callable,
        basis_rng,
        on_tomography: Callable | None = None,
        trace: list | None = None,
    ):
        self.node = node
        self.store = store
        self.send = send
        self.basis_rng = basis_rng
        self.on_tomography = on_tomography
        self.trace = trace
        self.ruleset: RuleSet | None = None
        self.lists: list[list[QubitRecord]] = []
        self.pool: list[QubitRecord] = []
        self.pending: dict[tuple, PendingRecord] = {}
        self.early: dict[tuple, OutcomeMessage] = {}
        self.installed_at: int | None = None
        self.stats = EngineStats()

    def _log(self, now, kind, key=None):
        if self.trace is not None:
            self.trace.append((now, self.node, kind, key))

    # -- installation --------------------------------------------------------

    def install(self, ruleset: RuleSet, now: int) -> None:
        if ruleset.owner != self.node:
            raise ValueError("RuleSet owned by another node")
        self.ruleset = ruleset
        self.installed_at = now
        self.lists = [[] for _ in ruleset.rules]
        partner = ruleset.rules[0].partners[0]
        keep = []
        for q in self.pool:
            (self.lists[0] if q.partner is not None and q.partner.node == partner else keep).append(q)
        self.pool = keep
        self._log(now, "install", ruleset.ruleset_id)
        self.evaluate(now)

    def discard(self, now: int) -> None:
        """Drop the RuleSet (timeout); every held resource is freed."""
        for lst in self.lists:
            for q in lst:
                self.store.release(q)
        self.lists = []
        self.pending.clear()
        self.ruleset = None
        self._log(now, "discard")

    # -- handlers ------------------------------------------------------------

    def on_new_resource(self, q: QubitRecord, partner_node: int, now: int) -> None:
        self.on_new_resources([q], partner_node, now)

    def on_new_resources(self, qs, partner_node: int, now: int) -> None:
        """Allocate freshly heralded qubits (in slot order) to rule 0, then evaluate."""
        rs = self.ruleset
        dest = self.lists[0] if rs is not None and rs.rules[0].partners[0] == partner_node else self.pool
        for q in qs:
            q.status = Status.BUSY
            dest.append(q)
            self._log(now, "resource", q.index)
        self.evaluate(now)

    def on_message(self, msg: OutcomeMessage, now: int) -> None:
        rs = self.ruleset
        if rs is None or msg.ruleset_id != rs.ruleset_id or msg.destination != self.node:
            self.stats.dropped_messages += 1
            self._log(now, "drop", msg.key)
            return
        self._log(now, "message", msg.key)
        rec = self.pending.pop(msg.key, None)
        if rec is None:
            self.early[msg.key] = msg
            return
        self._resolve(rec, msg, now)
        self.evaluate(now)

    # -- core loop -----------------------------------------------------------

    def evaluate(self, now: int) -> int:
        """Fire rules top-down, one action per pass, until nothing is fireable."""
        fired = 0
        rs = self.ruleset
        while rs is not None:
            for r, rule in enumerate(rs.rules):
                if rule.check(self.lists[r]):
                    self._fire(r, now)
                    fired += 1
                    break
            else:
                break
        return fired

    def _fire(self, r: int, now: int) -> None:
        rs = self.ruleset
        rule = rs.rules[r]
        lst = self.lists[r]
        if rule.action.kind is ActionKind.TOMOGRAPHY:
            msg = fire_tomography(rs.ruleset_id, rule, lst, self.store, now, self.node, self.basis_rng)
            kept = None
        else:
            msg, kept = fire_purification(rs.ruleset_id, rule, lst, self.store, now, self.node)
        self.stats.fired[rule.action.kind] += 1
        # measured qubits were released by the store
        self.lists[r] = [q for q in lst if q.status is not Status.FREE]
        rec = PendingRecord(msg.key, msg.outcomes, kept, now)
        self._log(now, "fire", msg.key)
        self.send(msg, now)
        early = self.early.pop(msg.key, None)
        if early is not None:
            self._resolve(rec, early, now)
        else:
            self.pending[msg.key] = rec

    def _resolve(self, rec: PendingRecord, msg: OutcomeMessage, now: int) -> None:
        _, rule_id, _ = rec.key
        if rec.kept is None:
            if self.on_tomography is not None:
                self.on_tomography(self.node, rec.key, rec.outcomes[0], msg.outcomes[0], now)
            self._log(now, "tomography", rec.key)
            return
        kept = rec.kept
        if kept.partner is not None and msg.qubits and kept.partner.index != msg.qubits[0]:
            self.stats.desync += 1
        self.lists[rule_id].remove(kept)
        if verdict(rec.outcomes, msg.outcomes):
            self.stats.passed += 1
            kept.status = Status.BUSY
            kept.lock = None
            self.lists[rule_id + 1].append(kept)
            self._log(now, "pass", rec.key)
        else:
            self.stats.failed += 1
            self.store.release(kept)
            self._log(now, "fail", rec.key)

    # -- bookkeeping -----------------------------------------------------------

    @property
    def terminated(self) -> bool:
        return self.ruleset is not None and self.ruleset.terminated

    def held(self) -> list:
        return [q for lst in self.lists for q in lst] + self.pool

    def audit(self, qubits) -> None:
        """Check every local qubit sits in exactly one place.

        Free and reserved qubits must be outside every list; allocated qubits
        must appear exactly once; locked qubits must have a pending or
        already-paired record.
        """
        counts = Counter(id(q) for q in self.held())
        for q in qubits:
            n = counts.get(id(q), 0)
            if q.status in (Status.FREE, Status.RESERVED):
                if n:
                    raise AssertionError(f"{q} is {q.status.value} but held by a rule")
            elif n != 1:
                raise AssertionError(f"{q} held {n} times")
            if q.status is Status.LOCKED and q.lock not in self.pending:
                raise AssertionError(f"{q} locked without a pending record")
