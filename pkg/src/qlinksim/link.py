"""Physical-layer entanglement generation for the two link architectures.

Time is integer picoseconds throughout. A burst is a train of photon pairs
separated by one detector interval. The BSA sits in the middle of the fibre
for MeetInTheMiddle (MIM) links and inside the receiving node for
SenderReceiver (SR) links.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errmodel import PAULI_FLAGS, ChannelClass, channel_distribution
from .qstate import QubitRecord, entangle

SPEED_OF_LIGHT = 299_792_458.0  # m/s
PS_PER_S = 10**12

MIM = "MeetInTheMiddle"
SR = "SenderReceiver"
_ALIASES = {"mim": MIM, "meetinthemiddle": MIM, "sr": SR, "senderreceiver": SR}


def normalize_architecture(name: str) -> str:
    try:
        return _ALIASES[name.replace("_", "").replace("-", "").lower()]
    except KeyError:
        raise ValueError(f"unknown link architecture {name!r}") from None


def delay_ps(length_km: float, refractive_index: float = 1.44) -> int:
    """One-way fibre propagation delay, rounded to the nearest picosecond."""
    return int(round(length_km * 1e3 * refractive_index / SPEED_OF_LIGHT * PS_PER_S))


class Outcome(enum.IntEnum):
    FAILURE = 0
    SUCCESS = 1
    FAKE = 2


@dataclass(frozen=True)
class LinkConfig:
    """Static description of one link.

    Parameters
    ----------
    architecture : str
        ``"MeetInTheMiddle"`` or ``"SenderReceiver"`` (short forms accepted).
    distance_km : float
        Total fibre length between the two nodes.
    bsa_fraction : float
        Share of the fibre on node A's side of the BSA (MIM only).
    channel_rates : tuple
        Per-km ``(px, py, pz, p_loss)``.
    """

    architecture: str = MIM
    distance_km: float = 10.0
    bsa_fraction: float = 0.5
    refractive_index: float = 1.44
    emission_prob: float = 0.46 * 0.49
    detector_efficiency: float = 0.8
    detection_rate: float = 1e9
    darkcount_prob: float = 1e-8
    bsa_success_ceiling: float = 0.5
    channel_rates: tuple = (0.01, 0.01, 0.01, 0.04501)
    buffer_size: int = 100

    def __post_init__(self):
        object.__setattr__(self, "architecture", normalize_architecture(self.architecture))
        for name in ("emission_prob", "detector_efficiency", "darkcount_prob",
                     "bsa_success_ceiling", "bsa_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.distance_km <= 0:
            raise ValueError("link length must be positive")
        if self.detection_rate <= 0:
            raise ValueError("detection_rate must be positive")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be at least 1")
        if self.architecture == MIM and not 0.0 < self.bsa_fraction < 1.0:
            raise ValueError("the BSA must sit strictly inside a MIM link")
        object.__setattr__(self, "channel_rates", tuple(map(float, self.channel_rates)))

    @property
    def side_lengths(self) -> tuple[float, float]:
        """Fibre length from node A and from node B to the BSA."""
        if self.architecture == SR:
            return (self.distance_km, 0.0)
        a = self.distance_km * self.bsa_fraction
        return (a, self.distance_km - a)

    @property
    def delays(self) -> tuple[int, int]:
        return tuple(delay_ps(x, self.refractive_index) for x in self.side_lengths)

    @property
    def interval_ps(self) -> int:
        return max(1, int(round(PS_PER_S / self.detection_rate)))

    @property
    def classical_latency_ps(self) -> int:
        """Node-to-node message latency along the fibre."""
        da, db = self.delays
        return da + db

    def photon_distribution(self, side: int) -> np.ndarray:
        """(Clean, X, Z, Y, Lost) for a photon from ``side`` reaching a detector.

        Emission failures and detector inefficiency count as losses.
        """
        chan = channel_distribution(self.channel_rates, self.side_lengths[side])
        keep = self.emission_prob * self.detector_efficiency
        out = np.empty(5)
        out[:4] = chan[:4] * keep
        out[4] = 1.0 - out[:4].sum()
        return out

    @cached_property
    def _photon_cdfs(self) -> tuple:
        return tuple(np.cumsum(self.photon_distribution(side)) for side in (0, 1))

    def survival(self, side: int) -> float:
        return float(1.0 - self.photon_distribution(side)[ChannelClass.LOST])

    def success_probability(self) -> float:
        """Per-attempt probability of a genuine herald."""
        return self.survival(0) * self.survival(1) * self.bsa_success_ceiling

    def fake_probability(self) -> float:
        sa, sb = self.survival(0), self.survival(1)
        d = self.darkcount_prob
        return (sa * (1 - sb) + sb * (1 - sa)) * d + (1 - sa) * (1 - sb) * d * d


@dataclass(frozen=True)
class EmissionSchedule:
    """When each node fires its burst and when the photons meet at the BSA."""

    decided_at: int
    arrival: int
    emit: tuple[int, int]
    interval: int
    count: int | None = None

    def emission_time(self, side: int, k: int) -> int:
        return self.emit[side] + k * self.interval

    def arrival_time(self, k: int) -> int:
        return self.arrival + k * self.interval

    def resolve_time(self, n: int) -> int:
        """Time the BSA has seen the last of ``n`` photon slots."""
        return self.arrival + max(n, 1) * self.interval


def compute_timing(link: LinkConfig, now: int, count: int | None = None) -> EmissionSchedule:
    """Emission times such that both photons of slot ``k`` co-arrive at the BSA.

    The BSA decides at ``now`` and its notification takes ``d_i`` to reach node
    ``i``; the node whose fibre is longest emits as soon as it hears. A node
    with zero fibre (the SR receiver) emits exactly at arrival time.
    """
    da, db = link.delays
    dmax = max(da, db)
    arrival = now + 2 * dmax
    return EmissionSchedule(now, arrival, (arrival - da, arrival - db), link.interval_ps, count)


@dataclass
class BurstSample:
    """Vectorized outcome of ``n`` attempts; Pauli classes use channel indices."""

    outcomes: np.ndarray
    pauli_a: np.ndarray
    pauli_b: np.ndarray

    def __len__(self) -> int:
        return len(self.outcomes)


def sample_burst(rng: np.random.Generator, link: LinkConfig, n: int) -> BurstSample:
    """Draw ``n`` independent heralding attempts."""
    ca, cb = link._photon_cdfs
    pa = np.minimum(np.searchsorted(ca, rng.random(n), side="right"), ChannelClass.LOST)
    pb = np.minimum(np.searchsorted(cb, rng.random(n), side="right"), ChannelClass.LOST)
    lost = (pa == ChannelClass.LOST).astype(int) + (pb == ChannelClass.LOST)
    ok = (lost == 0) & (rng.random(n) < link.bsa_success_ceiling)
    d = link.darkcount_prob
    p_dark = np.where(lost == 1, d, np.where(lost == 2, d * d, 0.0))
    fake = rng.random(n) < p_dark
    outcomes = np.where(ok, Outcome.SUCCESS, np.where(fake, Outcome.FAKE, Outcome.FAILURE))
    return BurstSample(outcomes.astype(np.int8), pa, pb)


def herald(
    qa: QubitRecord, qb: QubitRecord, outcome: int, pauli_a: int, pauli_b: int, arrival: int
) -> bool:
    """Apply one attempt's outcome to the two reserved memories.

    Returns ``True`` if the memories now hold a (possibly fake) pair. Channel
    Pauli errors on the photons are reapplied to their source memories.
    """
    if outcome == Outcome.FAILURE:
        return False
    fake = outcome == Outcome.FAKE
    entangle(qa, qb, arrival, fake=fake)
    if not fake:
        for q, p in ((qa, pauli_a), (qb, pauli_b)):
            x, z = PAULI_FLAGS[int(p)]
            q.x_flag ^= x
            q.z_flag ^= z
    return True


def attempt(
    rng: np.random.Generator,
    link: LinkConfig,
    qa: QubitRecord,
    qb: QubitRecord,
    arrival: int = 0,
) -> Outcome:
    """A single heralding attempt between two reserved memories."""
    s = sample_burst(rng, link, 1)
    out = Outcome(int(s.outcomes[0]))
    herald(qa, qb, out, s.pauli_a[0], s.pauli_b[0], arrival)
    return out


@dataclass
class BsaBatchResult:
    """Verdicts of one burst.

    ``outcomes`` has one entry per attempted slot. ``heralded`` lists the
    slots that produced a (possibly fake) pair as ``(slot, qubit_a,
    qubit_b)``; ``failed`` holds each side's qubits to be reinitialized,
    including surplus photons that had no partner in the burst.
    """

    schedule: EmissionSchedule
    resolved_at: int
    outcomes: np.ndarray
    heralded: list = field(default_factory=list)
    failed: tuple = ((), ())

    @property
    def successes(self) -> list:
        return [(a, b) for _, a, b in self.heralded]


def resolve_burst(
    rng: np.random.Generator,
    link: LinkConfig,
    schedule: EmissionSchedule,
    qubits_a: Sequence[QubitRecord],
    qubits_b: Sequence[QubitRecord],
    now: int,
) -> BsaBatchResult:
    """Pair slot ``k`` of each side, sample all attempts and herald the successes."""
    n = min(len(qubits_a), len(qubits_b))
    s = sample_burst(rng, link, n)
    hits = np.flatnonzero(s.outcomes != Outcome.FAILURE)
    heralded = []
    for k in hits.tolist():
        qa, qb = qubits_a[k], qubits_b[k]
        herald(qa, qb, int(s.outcomes[k]), s.pauli_a[k], s.pauli_b[k], schedule.arrival_time(k))
        heralded.append((k, qa, qb))
    hit = set(hits.tolist())
    failed = tuple(
        [q for k, q in enumerate(side) if k not in hit] for side in (qubits_a, qubits_b)
    )
    return BsaBatchResult(schedule, now, s.outcomes, heralded, failed)


@dataclass
class AckMessage:
    node: int
    deliver_at: int
    successes: list = field(default_factory=list)  # (local qubit, partner node)
    failures: list = field(default_factory=list)


def batch_ack(link: LinkConfig, result: BsaBatchResult, nodes: Sequence[int] = (0, 1)) -> list:
    """One aggregated acknowledgement per node.

    Delivery takes the BSA-to-node fibre delay, which is zero for the SR
    receiver, so it frees failed qubits at detection time.
    """
    acks = []
    for side, node in enumerate(nodes):
        other = nodes[1 - side]
        acks.append(AckMessage(
            node,
            result.resolved_at + link.delays[side],
            [(h[1 + side], other) for h in result.heralded],
            list(result.failed[side]),
        ))
    return acks
