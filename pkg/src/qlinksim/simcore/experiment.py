"""Multi-trial experiments and the round-by-round bootstrapping loop."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..tomography import TrialStats, aggregate
from .config import ExperimentConfig
from .simulation import TrialOutput, run_trial

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    outputs: list
    summary: dict = field(default_factory=dict)

    @property
    def timed_out(self) -> bool:
        return any(o.timed_out for o in self.outputs)


def _one(args):
    config, seed = args
    return run_trial(config, seed)


def summarize(outputs) -> dict:
    """Cross-trial statistics; trials without a reconstruction are skipped."""
    usable = [o for o in outputs if np.isfinite(o.fidelity)]
    if not usable:
        return {"n": 0}
    return aggregate([TrialStats(o.fidelity, o.fidelity_a, o.bellpair_per_sec) for o in usable])


def run_experiment(config: ExperimentConfig, trials: int | None = None, jobs: int = 1) -> ExperimentResult:
    """Run ``trials`` independent trials with seeds ``seed, seed+1, ...``.

    Trials share no state, so ``jobs > 1`` farms them out to worker
    processes; results are ordered by trial index either way.
    """
    n = config.trials if trials is None else int(trials)
    if n < 1:
        raise ValueError("need at least one trial")
    work = [(config, config.seed + i) for i in range(n)]
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs: list[TrialOutput] = list(pool.map(_one, work))
    else:
        outputs = [_one(w) for w in work]
    return ExperimentResult(config, outputs, summarize(outputs))


@dataclass
class RoundResult:
    n_rounds: int
    result: ExperimentResult

    @property
    def fidelity(self) -> float:
        return self.result.summary.get("mean", float("nan"))

    @property
    def throughput(self) -> float:
        return self.result.summary.get("throughput_mean", float("nan"))


def run_bootstrap(
    config: ExperimentConfig,
    max_rounds: int = 6,
    trials: int | None = None,
    jobs: int = 1,
    stop_on_decline: bool = True,
) -> list:
    """Add purification rounds one at a time, N_p = 0, 1, 2, ...

    Stops after the first round whose mean reconstructed fidelity is lower
    than the previous one (when ``stop_on_decline``), after a round where any
    trial timed out, or at ``max_rounds``.
    """
    rounds = []
    prev = -np.inf
    for n in range(max_rounds + 1):
        cfg = config.replace(initial_purification=n)
        res = run_experiment(cfg, trials, jobs)
        rr = RoundResult(n, res)
        rounds.append(rr)
        log.info("N_p=%d F_r=%.4f throughput=%.1f/s", n, rr.fidelity, rr.throughput)
        if res.timed_out:
            break
        if stop_on_decline and rr.fidelity < prev:
            break
        prev = rr.fidelity
    return rounds
