"""Qubit records, Pauli-frame error propagation and measurement.

Each memory qubit carries its own X/Z flags relative to a nominal |Phi+> pair.
Gates used by purification propagate the flags only. Tomography measurements
go through an explicit 4x4 density matrix that is assembled on demand from
the flags and non-Pauli markers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errmodel import (
    FLAGS_TO_CLASS,
    FLIPS_BASIS,
    PAULI_FLAGS,
    PAULI_XZ,
    STEP_PS,
    ErrorClass,
    GateErrorSpec,
    MemoryChain,
    sample_gate_error,
)


class Status(enum.Enum):
    FREE = "free"
    RESERVED = "reserved"  # photon emitted, waiting for the BSA verdict
    BUSY = "busy"
    LOCKED = "locked"


class NonPauli(enum.IntEnum):
    NONE = 0
    EXCITED = ErrorClass.EXCITED
    RELAXED = ErrorClass.RELAXED
    MIXED = ErrorClass.MIXED


class ProtocolError(RuntimeError):
    """A protocol step touched a qubit in a state it must never be in."""


class PeerResult(NamedTuple):
    raw: int
    basis: str
    x_flag: int
    z_flag: int
    fake: bool


@dataclass(eq=False, slots=True)
class QubitRecord:
    address: tuple  # (node, qnic, index)
    status: Status = Status.FREE
    lock: tuple | None = None
    entangled_at: int = 0
    last_updated: int = 0
    x_flag: int = 0
    z_flag: int = 0
    nonpauli: NonPauli = NonPauli.NONE
    partner: "QubitRecord | None" = None
    god_entangled: bool = False
    fake: bool = False
    peer_result: PeerResult | None = None
    conditional: np.ndarray | None = None

    @property
    def node(self) -> int:
        return self.address[0]

    @property
    def index(self) -> int:
        return self.address[2]

    def memory_class(self) -> int:
        if self.nonpauli:
            return int(self.nonpauli)
        return FLAGS_TO_CLASS[(self.x_flag, self.z_flag)]

    def reset(self) -> None:
        self.status = Status.FREE
        self.lock = None
        self.x_flag = self.z_flag = 0
        self.nonpauli = NonPauli.NONE
        self.god_entangled = False
        self.fake = False
        self.peer_result = None
        self.conditional = None

    def __repr__(self) -> str:
        return (
            f"QubitRecord({self.address}, {self.status.value}, "
            f"x={self.x_flag}, z={self.z_flag}, {self.nonpauli.name})"
        )


BELL_NAMES = {(0, 0): "Phi+", (1, 0): "Psi+", (0, 1): "Phi-", (1, 1): "Psi-"}


@dataclass(frozen=True)
class PairErrorWord:
    x_parity: int
    z_parity: int
    nonpauli_a: NonPauli = NonPauli.NONE
    nonpauli_b: NonPauli = NonPauli.NONE
    fake: bool = False

    @classmethod
    def of(cls, a: QubitRecord, b: QubitRecord) -> "PairErrorWord":
        return cls(
            a.x_flag ^ b.x_flag,
            a.z_flag ^ b.z_flag,
            a.nonpauli,
            b.nonpauli,
            a.fake or b.fake,
        )

    @property
    def is_pauli(self) -> bool:
        return not (self.nonpauli_a or self.nonpauli_b or self.fake)

    @property
    def bell_state(self) -> str:
        return BELL_NAMES[(self.x_parity, self.z_parity)]

    @property
    def pauli(self) -> str:
        return {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[
            (self.x_parity, self.z_parity)
        ]


def entangle(a: QubitRecord, b: QubitRecord, time: int, fake: bool = False) -> None:
    """Link two records as a fresh |Phi+> pair (or a dark-count fake pair)."""
    for q, p in ((a, b), (b, a)):
        q.partner = p
        q.entangled_at = time
        q.god_entangled = not fake
        q.fake = fake
        q.peer_result = None
        q.conditional = None


# --- density matrices -----------------------------------------------------

_S2 = 1 / np.sqrt(2)
KET = {
    "Phi+": np.array([1, 0, 0, 1], dtype=complex) * _S2,
    "Psi+": np.array([0, 1, 1, 0], dtype=complex) * _S2,
    "Phi-": np.array([1, 0, 0, -1], dtype=complex) * _S2,
    "Psi-": np.array([0, 1, -1, 0], dtype=complex) * _S2,
}
BELL_DM = {k: np.outer(v, v.conj()) for k, v in KET.items()}
PHI_PLUS = BELL_DM["Phi+"]

SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Projector onto the +1 eigenstate of each measurement basis.
PLUS_PROJECTOR = {b: (SIGMA["I"] + SIGMA[b]) / 2 for b in "XYZ"}

_SINGLE = {
    NonPauli.EXCITED: np.diag([0, 1]).astype(complex),
    NonPauli.RELAXED: np.diag([1, 0]).astype(complex),
    NonPauli.MIXED: np.eye(2, dtype=complex) / 2,
    NonPauli.NONE: np.eye(2, dtype=complex) / 2,
}
CLASSICAL_DM = np.diag([0.5, 0, 0, 0.5]).astype(complex)


def _pauli_of(x: int, z: int) -> np.ndarray:
    return SIGMA[{(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[(x, z)]]


def build_density_matrix(a: QubitRecord, b: QubitRecord) -> np.ndarray:
    """4x4 state of the pair with ``a`` as the first tensor factor."""
    if a.nonpauli or b.nonpauli:
        return np.kron(_SINGLE[a.nonpauli], _SINGLE[b.nonpauli])
    if a.fake or b.fake:
        p = np.kron(_pauli_of(a.x_flag, a.z_flag), _pauli_of(b.x_flag, b.z_flag))
        return p @ CLASSICAL_DM @ p.conj().T
    return BELL_DM[BELL_NAMES[(a.x_flag ^ b.x_flag, a.z_flag ^ b.z_flag)]].copy()


def joint_outcome_probabilities(rho: np.ndarray, basis_a: str, basis_b: str) -> dict:
    """P(outcome_a, outcome_b) = Tr[(M_a (x) M_b) rho] for outcomes in {+1, -1}."""
    out = {}
    for oa in (1, -1):
        ma = PLUS_PROJECTOR[basis_a] if oa == 1 else SIGMA["I"] - PLUS_PROJECTOR[basis_a]
        for ob in (1, -1):
            mb = PLUS_PROJECTOR[basis_b] if ob == 1 else SIGMA["I"] - PLUS_PROJECTOR[basis_b]
            out[(oa, ob)] = float(np.real(np.trace(np.kron(ma, mb) @ rho)))
    return out


@dataclass
class GroundTruth:
    """Hidden per-trial tallies of what tomography actually measured."""

    pairs: int = 0
    fidelity_sum: float = 0.0
    clean: int = 0
    x: int = 0
    y: int = 0
    z: int = 0
    other: int = 0

    def record(self, a: QubitRecord, b: QubitRecord, rho: np.ndarray) -> None:
        self.pairs += 1
        self.fidelity_sum += float(np.real(np.trace(rho @ PHI_PLUS)))
        word = PairErrorWord.of(a, b)
        if not word.is_pauli:
            self.other += 1
        else:
            name = {"I": "clean", "X": "x", "Y": "y", "Z": "z"}[word.pauli]
            setattr(self, name, getattr(self, name) + 1)

    @property
    def fidelity(self) -> float:
        return self.fidelity_sum / self.pairs if self.pairs else float("nan")


@dataclass
class NoiseModel:
    """Everything the qubit store needs to know about hardware imperfections."""

    memory: MemoryChain
    cnot: GateErrorSpec = field(default_factory=GateErrorSpec)
    hadamard: GateErrorSpec = field(default_factory=GateErrorSpec)
    measurement: GateErrorSpec = field(default_factory=GateErrorSpec)

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(MemoryChain(np.eye(7)))


class QubitStore:
    """Owns the error-tracking state of every stationary qubit in one simulation."""

    def __init__(self, noise: NoiseModel, rngs: dict, truth: GroundTruth | None = None):
        self.noise = noise
        self.rng_memory = rngs["memory"]
        self.rng_gate = rngs["gate"]
        self.rng_measure = rngs["measure"]
        self.truth = truth if truth is not None else GroundTruth()

    # -- time evolution --------------------------------------------------

    def refresh(self, q: QubitRecord, now: int) -> None:
        """Advance the memory Markov chain of ``q`` up to ``now``."""
        elapsed = now - q.last_updated
        if elapsed < 0:
            raise ValueError("refresh into the past")
        steps = elapsed // STEP_PS
        if steps <= 0:
            return
        # carry the sub-step remainder so repeated short waits still age the qubit
        q.last_updated += steps * STEP_PS
        state = q.memory_class()
        new = self.noise.memory.sample(self.rng_memory, state, steps)
        if new == state:
            return
        if new < 4:
            q.x_flag, q.z_flag = PAULI_FLAGS[new]
            return
        was_pauli = not q.nonpauli
        q.nonpauli = NonPauli(new)
        q.god_entangled = False
        p = q.partner
        if p is not None:
            p.god_entangled = False
            if was_pauli and new != ErrorClass.MIXED and not p.nonpauli:
                p.nonpauli = NonPauli.MIXED

    # -- gates -------------------------------------------------------------

    def cnot(self, control: QubitRecord, target: QubitRecord) -> None:
        target.x_flag ^= control.x_flag
        control.z_flag ^= target.z_flag
        err = sample_gate_error(self.rng_gate, self.noise.cnot)
        if err is not None:
            tx, tz = PAULI_XZ[err[0]]
            cx, cz = PAULI_XZ[err[1]]
            target.x_flag ^= tx
            target.z_flag ^= tz
            control.x_flag ^= cx
            control.z_flag ^= cz

    def hadamard(self, q: QubitRecord) -> None:
        q.x_flag, q.z_flag = q.z_flag, q.x_flag
        err = sample_gate_error(self.rng_gate, self.noise.hadamard)
        if err is not None:
            ex, ez = PAULI_XZ[err]
            q.x_flag ^= ex
            q.z_flag ^= ez

    def _reported(self, raw: int, basis: str) -> int:
        err = sample_gate_error(self.rng_measure, self.noise.measurement)
        if err is not None and basis in FLIPS_BASIS[err]:
            raw ^= 1
        return 1 - 2 * raw

    # -- measurement -------------------------------------------------------

    def measure_frame(self, q: QubitRecord, basis: str) -> int:
        """Pauli-frame measurement used inside purification circuits.

        The first side of a pair to be measured draws a uniform raw outcome and
        leaves its flags on the partner; the second side derives its raw
        outcome from the joint parity. Non-Pauli markers are ignored here.
        """
        if q.status is Status.FREE:
            raise ProtocolError(f"measuring free qubit {q.address}")
        p = q.partner
        if p is not None:
            raw = int(self.rng_measure.random() < 0.5)
            p.peer_result = PeerResult(raw, basis, q.x_flag, q.z_flag, q.fake or p.fake)
        elif q.peer_result is not None and q.peer_result.basis == basis:
            r = q.peer_result
            if r.fake and basis != "Z":
                raw = int(self.rng_measure.random() < 0.5)
            else:
                px, pz = r.x_flag ^ q.x_flag, r.z_flag ^ q.z_flag
                parity = {"Z": px, "X": pz, "Y": 1 ^ px ^ pz}[basis]
                raw = r.raw ^ parity
        else:
            raw = int(self.rng_measure.random() < 0.5)
        outcome = self._reported(raw, basis)
        self.release(q)
        return outcome

    def measure_density(self, q: QubitRecord, basis: str, now: int) -> int:
        """Measurement through the on-demand density matrix (tomography path)."""
        if q.status is Status.FREE:
            raise ProtocolError(f"measuring free qubit {q.address}")
        self.refresh(q, now)
        p = q.partner
        if p is not None:
            self.refresh(p, now)
            rho = build_density_matrix(q, p)
            self.truth.record(q, p, rho)
            proj = np.kron(PLUS_PROJECTOR[basis], SIGMA["I"])
            p_plus = float(np.real(np.trace(proj @ rho)))
            raw = int(self.rng_measure.random() >= p_plus)
            if raw:
                proj = np.kron(SIGMA["I"] - PLUS_PROJECTOR[basis], SIGMA["I"])
            post = proj @ rho @ proj
            post = post.reshape(2, 2, 2, 2)
            cond = np.einsum("ijik->jk", post)
            cond /= np.real(np.trace(cond))
            p.conditional = cond
            p.x_flag = p.z_flag = 0
            p.nonpauli = NonPauli.NONE
        else:
            rho1 = self._local_state(q)
            p_plus = float(np.real(np.trace(PLUS_PROJECTOR[basis] @ rho1)))
            raw = int(self.rng_measure.random() >= p_plus)
        outcome = self._reported(raw, basis)
        self.release(q)
        return outcome

    def _local_state(self, q: QubitRecord) -> np.ndarray:
        if q.nonpauli:
            return _SINGLE[q.nonpauli]
        if q.conditional is None:
            return _SINGLE[NonPauli.NONE]
        pauli = _pauli_of(q.x_flag, q.z_flag)
        return pauli @ q.conditional @ pauli.conj().T

    def measure_density_pair(
        self, a: QubitRecord, b: QubitRecord, basis_a: str, basis_b: str, now: int
    ) -> tuple[int, int]:
        if a.partner is not b:
            raise ProtocolError("records are not partners")
        oa = self.measure_density(a, basis_a, now)
        ob = self.measure_density(b, basis_b, now)
        return oa, ob

    def release(self, q: QubitRecord) -> None:
        """Return ``q`` to the free pool; the partner keeps only its own flags."""
        p = q.partner
        if p is not None:
            p.partner = None
        q.partner = None
        q.reset()
