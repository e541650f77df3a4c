"""RuleSets, rules, clauses, actions and the purification circuits they run.

A purification circuit is written once as a list of local operations on the
"roles" r0, r1, ... of the resources it consumes, ordered oldest first. Role
r0 is the pair that is kept. Both nodes run the same list on their own halves
of the pairs; the verdict is that every exchanged outcome pair coincides.
"""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Sequence

from .qstate import QubitRecord, QubitStore, Status


class ActionKind(str, enum.Enum):
    SS_SP = "Ss-Sp"
    DS_SP = "Ds-Sp"
    SS_DP = "Ss-Dp"
    DS_DP = "Ds-Dp"
    TOMOGRAPHY = "Tomography"


RESOURCES = {
    ActionKind.SS_SP: 2,
    ActionKind.DS_SP: 3,
    ActionKind.SS_DP: 3,
    ActionKind.DS_DP: 5,
    ActionKind.TOMOGRAPHY: 1,
}

# Ops: ("cx", control, target), ("h", role), ("m", role, basis).
_SS_X = [("cx", 0, 1), ("m", 1, "Z")]
_SS_Z = [("cx", 1, 0), ("m", 1, "X")]
_DS_X = [("cx", 0, 1), ("cx", 2, 1), ("h", 2), ("m", 1, "Z"), ("m", 2, "Z")]
_DS_Z = [("cx", 1, 0), ("cx", 1, 2), ("h", 2), ("m", 1, "X"), ("m", 2, "X")]


def _shift(ops, offset):
    """Relabel roles >= 1 by ``offset`` (role 0 is always the kept pair)."""
    out = []
    for op in ops:
        if op[0] == "cx":
            out.append(("cx",) + tuple(r + offset if r else 0 for r in op[1:]))
        elif op[0] == "h":
            out.append(("h", op[1] + offset if op[1] else 0))
        else:
            out.append(("m", op[1] + offset if op[1] else 0, op[2]))
    return out


CIRCUITS = {
    (ActionKind.SS_SP, "X"): _SS_X,
    (ActionKind.SS_SP, "Z"): _SS_Z,
    (ActionKind.DS_SP, "X"): _DS_X,
    (ActionKind.DS_SP, "Z"): _DS_Z,
    (ActionKind.SS_DP, "XZ"): _SS_X + _shift(_SS_Z, 1),
    (ActionKind.SS_DP, "ZX"): _SS_Z + _shift(_SS_X, 1),
    (ActionKind.DS_DP, "XZ"): _DS_X + _shift(_DS_Z, 2),
    (ActionKind.DS_DP, "ZX"): _DS_Z + _shift(_DS_X, 2),
}


def circuit(kind: ActionKind, phase: str) -> list:
    try:
        return CIRCUITS[(ActionKind(kind), phase)]
    except KeyError:
        raise ValueError(f"no circuit for {kind} in phase {phase!r}") from None


def run_local_circuit(store: QubitStore, ops: Sequence, roles: Sequence[QubitRecord]) -> list:
    """Apply ``ops`` to this node's halves and return ``[(outcome, basis), ...]``."""
    outcomes = []
    for op in ops:
        if op[0] == "cx":
            store.cnot(roles[op[1]], roles[op[2]])
        elif op[0] == "h":
            store.hadamard(roles[op[1]])
        else:
            outcomes.append((store.measure_frame(roles[op[1]], op[2]), op[2]))
    return outcomes


# --- conditions -----------------------------------------------------------


@dataclass
class ResourceCondition:
    num_required: int

    def check(self, resources: Sequence[QubitRecord]) -> bool:
        if len(resources) < self.num_required:
            return False
        free = sum(1 for q in resources if q.status is not Status.LOCKED)
        return free >= self.num_required


@dataclass
class MeasurementCondition:
    """Counts tomography firings.

    ``check`` is side-effect free; the engine calls :meth:`record` once per
    firing.
    """

    num_required: int
    num_current: int = 0

    def check(self, resources=None) -> bool:
        return self.num_current < self.num_required

    def record(self) -> None:
        self.num_current += 1

    @property
    def satisfied(self) -> bool:
        return self.num_current >= self.num_required


@dataclass
class Action:
    kind: ActionKind
    phase: str | None = None  # "X", "Z", "XZ" or "ZX" for purification

    def __post_init__(self):
        self.kind = ActionKind(self.kind)
        if self.kind is not ActionKind.TOMOGRAPHY:
            circuit(self.kind, self.phase)

    @property
    def consumes(self) -> int:
        return RESOURCES[self.kind]

    @property
    def ops(self) -> list:
        return circuit(self.kind, self.phase)


@dataclass
class Rule:
    rule_id: int
    partners: list
    clauses: list
    action: Action
    action_index: int = 0

    def check(self, resources: Sequence[QubitRecord]) -> bool:
        return all(c.check(resources) for c in self.clauses)

    @property
    def measurement_clause(self) -> MeasurementCondition | None:
        for c in self.clauses:
            if isinstance(c, MeasurementCondition):
                return c
        return None


@dataclass
class RuleSet:
    ruleset_id: int
    owner: int
    rules: list

    def __post_init__(self):
        for i, r in enumerate(self.rules):
            if r.rule_id != i:
                raise ValueError("rule ids must be dense and in list order")

    @property
    def termination(self) -> MeasurementCondition | None:
        return self.rules[-1].measurement_clause if self.rules else None

    @property
    def terminated(self) -> bool:
        t = self.termination
        return t is not None and t.satisfied


@dataclass(frozen=True)
class OutcomeMessage:
    source: int
    destination: int
    ruleset_id: int
    rule_id: int
    action_index: int
    outcomes: tuple  # ((outcome, basis), ...)
    qubits: tuple = ()  # sender's qubit indices, used only for diagnostics

    @property
    def key(self) -> tuple:
        return (self.ruleset_id, self.rule_id, self.action_index)


def check_condition(rule: Rule, resources: Sequence[QubitRecord]) -> bool:
    return rule.check(resources)


def generate_ruleset_id(wall_time: int, node_addr: int, random_value: int) -> int:
    """64-bit identifier hashed from creation time, owner address and a nonce."""
    payload = struct.pack(">qqQ", int(wall_time), int(node_addr), int(random_value) & (2**64 - 1))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


# --- actions --------------------------------------------------------------


def _free_oldest(resources: Sequence[QubitRecord], n: int) -> list:
    picked = [q for q in resources if q.status is not Status.LOCKED][:n]
    if len(picked) < n:
        raise ValueError(f"need {n} unlocked resources, have {len(picked)}")
    return picked


def fire_purification(
    ruleset_id: int,
    rule: Rule,
    resources: Sequence[QubitRecord],
    store: QubitStore,
    now: int,
    source: int,
) -> tuple[OutcomeMessage, QubitRecord]:
    """Run the rule's purification circuit on the oldest unlocked resources.

    ``resources`` must be ordered oldest first. The kept resource is locked
    under this firing's key and the rule's action index advances.
    """
    roles = _free_oldest(resources, rule.action.consumes)
    for q in roles:
        store.refresh(q, now)
    kept = roles[0]
    qubit_ids = tuple(q.index for q in roles)
    outcomes = run_local_circuit(store, rule.action.ops, roles)
    key = (ruleset_id, rule.rule_id, rule.action_index)
    kept.status = Status.LOCKED
    kept.lock = key
    rule.action_index += 1
    msg = OutcomeMessage(source, rule.partners[0], *key, tuple(outcomes), qubit_ids)
    return msg, kept


def _checked(rule: Rule, kind: ActionKind) -> Rule:
    if rule.action.kind is not kind:
        raise ValueError(f"rule {rule.rule_id} runs {rule.action.kind.value}, not {kind.value}")
    return rule


def fire_ss_sp(ruleset_id, rule, resources, store, now, source):
    return fire_purification(ruleset_id, _checked(rule, ActionKind.SS_SP), resources, store, now, source)


def fire_ds_sp(ruleset_id, rule, resources, store, now, source):
    return fire_purification(ruleset_id, _checked(rule, ActionKind.DS_SP), resources, store, now, source)


def fire_ss_dp(ruleset_id, rule, resources, store, now, source):
    return fire_purification(ruleset_id, _checked(rule, ActionKind.SS_DP), resources, store, now, source)


def fire_ds_dp(ruleset_id, rule, resources, store, now, source):
    return fire_purification(ruleset_id, _checked(rule, ActionKind.DS_DP), resources, store, now, source)


BASES = ("X", "Y", "Z")


def fire_tomography(
    ruleset_id: int,
    rule: Rule,
    resources: Sequence[QubitRecord],
    store: QubitStore,
    now: int,
    source: int,
    basis_rng,
) -> OutcomeMessage:
    """Measure the oldest resource in a uniformly random basis."""
    _checked(rule, ActionKind.TOMOGRAPHY)
    (q,) = _free_oldest(resources, 1)
    basis = BASES[int(basis_rng.integers(3))]
    index = q.index
    outcome = store.measure_density(q, basis, now)
    key = (ruleset_id, rule.rule_id, rule.action_index)
    rule.action_index += 1
    clause = rule.measurement_clause
    if clause is not None:
        clause.record()
    return OutcomeMessage(source, rule.partners[0], *key, ((outcome, basis),), (index,))


def verdict(local: Sequence, remote: Sequence) -> bool:
    """A purification passes when every outcome pair coincides."""
    if len(local) != len(remote):
        raise ValueError("outcome lists differ in length")
    return all(a[0] == b[0] for a, b in zip(local, remote))


# --- bootstrap RuleSets -----------------------------------------------------

METHODS = {
    "RSs-Sp": ActionKind.SS_SP,
    "RSs-Dp": ActionKind.SS_DP,
    "RDs-Sp": ActionKind.DS_SP,
    "RDs-Dp": ActionKind.DS_DP,
}

# Purification_type identifiers; only 3003 is documented, the rest are local.
PURIFICATION_TYPES = {3003: "RSs-Sp", 3004: "RSs-Dp", 3005: "RDs-Sp", 3006: "RDs-Dp"}


def round_action(method: str, round_index: int) -> Action:
    """Action of recurrence round ``round_index``; phases alternate every round."""
    try:
        kind = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown purification method {method!r}") from None
    even = round_index % 2 == 0
    if kind in (ActionKind.SS_SP, ActionKind.DS_SP):
        phase = "X" if even else "Z"
    else:
        phase = "XZ" if even else "ZX"
    return Action(kind, phase)


def expand_schedule(method: str | Sequence[str], n_rounds: int) -> list:
    """Method name per round; the last entry of a schedule repeats."""
    if isinstance(method, str):
        return [method] * n_rounds
    sched = list(method)
    if not sched and n_rounds:
        raise ValueError("empty purification schedule")
    return [sched[min(i, len(sched) - 1)] for i in range(n_rounds)]


def build_bootstrap_ruleset(
    n_rounds: int,
    method: str | Sequence[str],
    num_measure: int,
    nodes: tuple = (0, 1),
    ruleset_id: int = 0,
) -> tuple[RuleSet, RuleSet]:
    """Mirror RuleSets: ``n_rounds`` purification rules then one tomography rule.

    ``method`` may be a single method name or a per-round schedule such as
    ``["RDs-Sp", "RSs-Sp"]`` (one round of the first, then the second).
    """
    if n_rounds < 0:
        raise ValueError("n_rounds must be nonnegative")
    if num_measure < 1:
        raise ValueError("num_measure must be positive")
    methods = expand_schedule(method, n_rounds)
    out = []
    for owner, partner in (nodes, nodes[::-1]):
        rules = []
        for r, m in enumerate(methods):
            act = round_action(m, r)
            rules.append(Rule(r, [partner], [ResourceCondition(act.consumes)], act))
        rules.append(
            Rule(
                n_rounds,
                [partner],
                [ResourceCondition(1), MeasurementCondition(num_measure)],
                Action(ActionKind.TOMOGRAPHY),
            )
        )
        out.append(RuleSet(ruleset_id, owner, rules))
    return out[0], out[1]


# --- text serialization ------------------------------------------------------


def dump_ruleset(rs: RuleSet) -> str:
    """Canonical line-oriented text form of a RuleSet."""
    lines = [f"ruleset id={rs.ruleset_id} owner={rs.owner} rules={len(rs.rules)}"]
    for r in rs.rules:
        clauses = ",".join(
            f"Resource({c.num_required})"
            if isinstance(c, ResourceCondition)
            else f"Measurement({c.num_required},{c.num_current})"
            for c in r.clauses
        )
        partners = ",".join(map(str, r.partners))
        phase = r.action.phase or "-"
        lines.append(
            f"rule id={r.rule_id} partners={partners} action={r.action.kind.value} "
            f"phase={phase} index={r.action_index} clauses={clauses}"
        )
    return "\n".join(lines) + "\n"


def _kv(tokens):
    return dict(t.split("=", 1) for t in tokens)


def _parse_clause(text: str):
    name, args = text.rstrip(")").split("(")
    nums = [int(x) for x in args.split(",")]
    if name == "Resource":
        return ResourceCondition(*nums)
    if name == "Measurement":
        return MeasurementCondition(*nums)
    raise ValueError(f"unknown clause {text!r}")


def load_ruleset(text: str) -> RuleSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = _kv(lines[0].split()[1:])
    rules = []
    for ln in lines[1:]:
        kv = _kv(ln.split()[1:])
        phase = None if kv["phase"] == "-" else kv["phase"]
        rules.append(
            Rule(
                int(kv["id"]),
                [int(p) for p in kv["partners"].split(",")],
                [_parse_clause(c) for c in kv["clauses"].replace("),", ");").split(";")],
                Action(ActionKind(kv["action"]), phase),
                int(kv["index"]),
            )
        )
    if len(rules) != int(head["rules"]):
        raise ValueError("rule count mismatch")
    return RuleSet(int(head["id"]), int(head["owner"]), rules)


def dump_message(msg: OutcomeMessage) -> str:
    outs = ",".join(f"{o:+d}{b}" for o, b in msg.outcomes)
    qs = ",".join(map(str, msg.qubits)) or "-"
    return (
        f"msg src={msg.source} dst={msg.destination} ruleset={msg.ruleset_id} "
        f"rule={msg.rule_id} index={msg.action_index} outcomes={outs} qubits={qs}"
    )


def load_message(line: str) -> OutcomeMessage:
    kv = _kv(line.split()[1:])
    outcomes = tuple((int(t[:-1]), t[-1]) for t in kv["outcomes"].split(","))
    qubits = () if kv["qubits"] == "-" else tuple(int(x) for x in kv["qubits"].split(","))
    return OutcomeMessage(
        int(kv["src"]), int(kv["dst"]), int(kv["ruleset"]), int(kv["rule"]),
        int(kv["index"]), outcomes, qubits,
    )
