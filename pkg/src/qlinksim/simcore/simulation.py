"""One bootstrapping trial: link generation, two rule engines, tomography."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..engine import RuleEngine
from ..link import LinkConfig, batch_ack, compute_timing, resolve_burst
from ..qstate import GroundTruth, QubitRecord, QubitStore, Status
from ..ruleset import build_bootstrap_ruleset, generate_ruleset_id
from ..tomography import (
    ReconstructionUnavailable,
    TomographyAccumulator,
    error_decomposition,
    fidelity,
    reconstruct,
    stokes,
)
from .config import ExperimentConfig, seed_sequence
from .events import EventKind, EventQueue

log = logging.getLogger(__name__)

PS = 10**12
NODES = (0, 1)
NODE_NAMES = ("EndNode1[0]", "Repeater1[0]")


@dataclass
class TrialOutput:
    """Everything one trial reports; field names follow the summary file."""

    distance: float
    fidelity: float
    bellpair_per_sec: float
    tomography_time: float
    tomography_measurements: int
    actualmeas: int
    GOD_clean_pair_total: int
    GOD_X_pair_total: int
    GOD_Y_pair_total: int
    GOD_Z_pair_total: int
    F: float
    X: float
    Z: float
    Y: float
    cost: int = 0
    fidelity_a: float = float("nan")
    timed_out: bool = False
    seed: int = 0
    density_matrix: np.ndarray | None = field(default=None, repr=False)
    counts: np.ndarray | None = field(default=None, repr=False)
    names: tuple = NODE_NAMES


class _Burst:
    __slots__ = ("schedule", "qubits", "emitted")

    def __init__(self, schedule):
        self.schedule = schedule
        self.qubits = [None, None]
        self.emitted = 0


class Simulation:
    """Wires the link, the two engines and the accumulator onto one event queue.

    Parameters
    ----------
    config : ExperimentConfig
    seed : int
    trace : list, optional
        Collects ``(time, node, kind, key)`` tuples from every component.
    audit_every : int
        Run the qubit conservation audit every this many events (0 disables).
    """

    def __init__(self, config: ExperimentConfig, seed: int, trace: list | None = None,
                 audit_every: int = 0):
        self.config = config
        self.seed = int(seed)
        self.link: LinkConfig = config.link_config()
        self.rngs = seed_sequence(seed)
        self.truth = GroundTruth()
        self.store = QubitStore(config.noise_model(), self.rngs, self.truth)
        self.queue = EventQueue()
        self.trace = trace
        self.audit_every = audit_every
        self.audits = 0
        self.qubits = {
            n: [QubitRecord((n, 0, i)) for i in range(self.link.buffer_size)] for n in NODES
        }
        self.acc = TomographyAccumulator()
        self.engines = {
            n: RuleEngine(n, self.store, self._send, self.rngs["basis"], self._on_tomography, trace)
            for n in NODES
        }
        self.latency = self.link.classical_latency_ps
        self.buffer_ps = int(round(config.Initial_notification_timing_buffer * PS))
        self.completed_at: int | None = None
        self.timed_out = False
        self.bursts = 0

    # -- callbacks -----------------------------------------------------------

    def _send(self, msg, now):
        self.queue.schedule(now + self.latency, EventKind.CLASSICAL_DELIVERY, msg)

    def _on_tomography(self, node, key, local, remote, now):
        if node != NODES[0]:
            return
        (oa, ba), (ob, bb) = local, remote
        self.acc.record(ba, bb, oa, ob)
        if self.acc.total >= self.config.num_measure and self.completed_at is None:
            self.completed_at = now

    # -- link layer ------------------------------------------------------------

    def _decide(self, now):
        sched = compute_timing(self.link, now)
        burst = _Burst(sched)
        for side in (0, 1):
            self.queue.schedule(sched.emit[side], EventKind.EMISSION_DUE, (burst, side))

    def _emit(self, burst, side, now):
        free = [q for q in self.qubits[NODES[side]] if q.status is Status.FREE]
        for k, q in enumerate(free):
            q.status = Status.RESERVED
            q.last_updated = burst.schedule.emission_time(side, k)
        burst.qubits[side] = free
        burst.emitted += 1
        if burst.emitted == 2:
            n = max(len(burst.qubits[0]), len(burst.qubits[1]))
            self.queue.schedule(burst.schedule.resolve_time(n), EventKind.BSA_RESOLVE, burst)

    def _resolve(self, burst, now):
        self.bursts += 1
        qa, qb = burst.qubits
        result = resolve_burst(self.rngs["link"], self.link, burst.schedule, qa, qb, now)
        for ack in batch_ack(self.link, result, NODES):
            self.queue.schedule(ack.deliver_at, EventKind.ACK, ack)
        if self.trace is not None:
            self.trace.append((now, -1, "burst", (len(result.outcomes), len(result.heralded))))
        self._decide(now)

    def _ack(self, ack, now):
        for q in ack.failures:
            q.status = Status.FREE
        if ack.successes:
            self.engines[ack.node].on_new_resources(
                [q for q, _ in ack.successes], ack.successes[0][1], now
            )

    # -- main loop -----------------------------------------------------------

    def run(self) -> TrialOutput:
        cfg = self.config
        rid = generate_ruleset_id(0, NODES[0], self.seed)
        rs_a, rs_b = build_bootstrap_ruleset(cfg.n_rounds, cfg.schedule, cfg.num_measure, NODES, rid)
        self.engines[NODES[0]].install(rs_a, 0)
        self.engines[NODES[1]].install(rs_b, 0)
        deadline = int(round(cfg.timeout * PS))
        self.queue.schedule(deadline, EventKind.TIMEOUT)
        self._decide(self.buffer_ps)

        q = self.queue
        while q and self.completed_at is None:
            ev = q.pop()
            kind = ev.kind
            if kind is EventKind.ACK:
                self._ack(ev.payload, ev.time)
            elif kind is EventKind.CLASSICAL_DELIVERY:
                self.engines[ev.payload.destination].on_message(ev.payload, ev.time)
            elif kind is EventKind.EMISSION_DUE:
                self._emit(*ev.payload, ev.time)
            elif kind is EventKind.BSA_RESOLVE:
                self._resolve(ev.payload, ev.time)
            elif kind is EventKind.TIMEOUT:
                self.timed_out = True
                for e in self.engines.values():
                    e.discard(ev.time)
                break
            if self.audit_every and q.processed % self.audit_every == 0:
                self.audit()
        return self._output()

    def audit(self) -> None:
        self.audits += 1
        for n, engine in self.engines.items():
            engine.audit(self.qubits[n])
        for qs in self.qubits.values():
            for x in qs:
                p = x.partner
                if p is not None and p.partner is not x:
                    raise AssertionError(f"asymmetric partners {x} / {p}")

    def _output(self) -> TrialOutput:
        cfg = self.config
        end = self.completed_at if self.completed_at is not None else self.queue.now
        elapsed = max(end - self.buffer_ps, 1) / PS
        try:
            rho = reconstruct(stokes(self.acc))
            f_r = fidelity(rho)
            dec = error_decomposition(rho)
        except ReconstructionUnavailable:
            rho, f_r = None, float("nan")
            dec = dict.fromkeys("FXZY", float("nan"))
        t = self.truth
        return TrialOutput(
            distance=self.link.distance_km,
            fidelity=f_r,
            bellpair_per_sec=self.acc.total / elapsed,
            tomography_time=elapsed,
            tomography_measurements=cfg.num_measure,
            actualmeas=self.acc.total,
            GOD_clean_pair_total=t.clean,
            GOD_X_pair_total=t.x,
            GOD_Y_pair_total=t.y,
            GOD_Z_pair_total=t.z,
            F=dec["F"], X=dec["X"], Z=dec["Z"], Y=dec["Y"],
            fidelity_a=t.fidelity,
            timed_out=self.timed_out,
            seed=self.seed,
            density_matrix=rho,
            counts=self.acc.counts.copy(),
        )


def run_trial(config: ExperimentConfig, seed: int | None = None, trace: list | None = None,
              audit_every: int = 0) -> TrialOutput:
    """Run one trial; deterministic for a given (config, seed)."""
    sim = Simulation(config, config.seed if seed is None else seed, trace, audit_every)
    return sim.run()
