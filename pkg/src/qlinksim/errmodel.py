"""Stochastic error models for memories, channels, gates and measurements.

Memory and channel noise are discrete-time Markov chains over a small set of
error classes. Memory time advances in steps of one microsecond, channel
"time" advances in steps of one kilometre.
"""
from __future__ import annotations

import enum
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import accumulate
from typing import Mapping, Sequence

import numpy as np

STEP_PS = 1_000_000  # one microsecond in picoseconds
ROW_TOL = 1e-9


class ErrorClass(enum.IntEnum):
    """The seven error classes a stationary qubit can be in."""

    CLEAN = 0
    X = 1
    Z = 2
    Y = 3
    EXCITED = 4
    RELAXED = 5
    MIXED = 6


class ChannelClass(enum.IntEnum):
    CLEAN = 0
    X = 1
    Z = 2
    Y = 3
    LOST = 4


# (x_flag, z_flag) for the Pauli classes, shared by both domains.
PAULI_FLAGS = {0: (0, 0), 1: (1, 0), 2: (0, 1), 3: (1, 1)}
FLAGS_TO_CLASS = {v: k for k, v in PAULI_FLAGS.items()}


class InvalidRates(ValueError):
    """Raised when rates cannot form a stochastic matrix at the chosen step."""


def _pauli_block(px: float, py: float, pz: float) -> np.ndarray:
    # Row/column order Clean, X, Z, Y; entry (i, j) is the probability of the
    # Pauli that maps class i to class j.
    return np.array(
        [
            [0.0, px, pz, py],
            [px, 0.0, py, pz],
            [pz, py, 0.0, px],
            [py, pz, px, 0.0],
        ]
    )


def _fill_diagonal(q: np.ndarray) -> np.ndarray:
    off = q.sum(axis=1) - np.diag(q)
    if np.any(off >= 1.0):
        raise InvalidRates(
            "off-diagonal row mass >= 1; time step too coarse for the given rates"
        )
    np.fill_diagonal(q, 1.0 - off)
    return q


def build_memory_matrix(
    pauli_rate_per_sec: float,
    xyz_ratios: Sequence[float] = (1.0, 1.0, 1.0),
    excite_rate: float = 0.0,
    relax_rate: float = 0.0,
    mixed_rate: float = 0.0,
) -> np.ndarray:
    """Per-microsecond transition matrix for a memory qubit.

    Parameters
    ----------
    pauli_rate_per_sec : float
        Total Pauli error rate, split over X, Y, Z by ``xyz_ratios``.
    xyz_ratios : sequence of 3 floats
        Relative weights of the X, Y and Z errors.
    excite_rate, relax_rate, mixed_rate : float
        Per-second rates of energy excitation, relaxation and of becoming
        completely mixed.

    Returns
    -------
    np.ndarray
        7x7 row-stochastic matrix in class order Clean, X, Z, Y, Excited,
        Relaxed, Mixed.
    """
    rates = [pauli_rate_per_sec, excite_rate, relax_rate, mixed_rate, *xyz_ratios]
    if any(r < 0 for r in rates):
        raise InvalidRates("rates and ratios must be nonnegative")
    total = float(sum(xyz_ratios))
    if pauli_rate_per_sec > 0 and total <= 0:
        raise InvalidRates("xyz_ratios must not all be zero")
    per_step = 1e-6
    px, py, pz = (
        (pauli_rate_per_sec * per_step * r / total) if total > 0 else 0.0
        for r in xyz_ratios
    )
    pe, pr, pm = excite_rate * per_step, relax_rate * per_step, mixed_rate * per_step

    q = np.zeros((7, 7))
    q[:4, :4] = _pauli_block(px, py, pz)
    q[:4, 4] = pe
    q[:4, 5] = pr
    q[:6, 6] = pm
    q[4, 5] = pr
    q[5, 4] = pe
    q[6, 4] = pe
    q[6, 5] = pr
    return _fill_diagonal(q)


def build_channel_matrix(px: float, py: float, pz: float, p_loss: float) -> np.ndarray:
    """Per-kilometre 5x5 transition matrix (Clean, X, Z, Y, Lost)."""
    if min(px, py, pz, p_loss) < 0:
        raise InvalidRates("channel rates must be nonnegative")
    q = np.zeros((5, 5))
    q[:4, :4] = _pauli_block(px, py, pz)
    q[:4, 4] = p_loss
    q[4, 4] = 1.0
    return _fill_diagonal(q)


def check_stochastic(q: np.ndarray, tol: float = ROW_TOL) -> None:
    if np.any(q < -tol) or np.any(q > 1 + tol):
        raise InvalidRates("entries outside [0, 1]")
    if not np.allclose(q.sum(axis=1), 1.0, atol=tol, rtol=0):
        raise InvalidRates("rows do not sum to 1")


def _renormalize(m: np.ndarray) -> np.ndarray:
    np.clip(m, 0.0, None, out=m)
    return m / m.sum(axis=1, keepdims=True)


def matrix_power(q: np.ndarray, steps: int) -> np.ndarray:
    """``q ** steps`` by repeated squaring.

    Rows are renormalized after every product. Without this the float
    rounding drift of the row sums grows linearly with ``steps`` and exceeds
    1e-9 near 1e8 steps.
    """
    steps = int(steps)
    if steps < 0:
        raise ValueError("negative step count")
    result = np.eye(len(q))
    base = np.array(q, dtype=float)
    while steps:
        if steps & 1:
            result = _renormalize(result @ base)
        steps >>= 1
        if steps:
            base = _renormalize(base @ base)
    return result


def steps_for(elapsed_ps: int) -> int:
    """Nearest whole number of one-microsecond steps."""
    return int((elapsed_ps + STEP_PS // 2) // STEP_PS)


def evolve(q: np.ndarray, pi0: Sequence[float], elapsed_ps: int) -> np.ndarray:
    """Distribution after ``elapsed_ps`` picoseconds, ``pi0 @ q**steps``."""
    pi0 = np.asarray(pi0, dtype=float)
    if abs(pi0.sum() - 1.0) > 1e-9:
        raise ValueError("pi0 must sum to 1")
    if elapsed_ps < 0:
        raise ValueError("elapsed time must be nonnegative")
    return pi0 @ matrix_power(q, steps_for(elapsed_ps))


def sample_error(rng: np.random.Generator, pi: Sequence[float]) -> int:
    """Draw one class index from the probability vector ``pi``."""
    cdf = list(accumulate(pi))
    if abs(cdf[-1] - 1.0) > 1e-6:
        raise ValueError("pi must sum to 1")
    return min(bisect_right(cdf, rng.random() * cdf[-1]), len(cdf) - 1)


class MemoryChain:
    """Caches powers of a memory matrix as cumulative rows for fast sampling."""

    def __init__(self, q: np.ndarray, cache_size: int = 65536):
        check_stochastic(q)
        self.q = q
        self._rows = lru_cache(maxsize=cache_size)(self._cdf_rows)
        self.is_identity = bool(np.array_equal(q, np.eye(len(q))))

    def _cdf_rows(self, steps: int) -> tuple:
        m = matrix_power(self.q, steps)
        return tuple(tuple(accumulate(row)) for row in m)

    def sample(self, rng: np.random.Generator, state: int, steps: int) -> int:
        if steps <= 0 or self.is_identity:
            return state
        cdf = self._rows(steps)[state]
        return min(bisect_right(cdf, rng.random() * cdf[-1]), len(cdf) - 1)


@lru_cache(maxsize=256)
def _channel_distribution(px, py, pz, p_loss, length_km) -> tuple:
    q = build_channel_matrix(px, py, pz, p_loss)
    whole = int(np.floor(length_km))
    m = matrix_power(q, whole)
    frac = length_km - whole
    if frac > 1e-12:
        # fractional kilometre: scale the per-km rates linearly
        m = m @ build_channel_matrix(px * frac, py * frac, pz * frac, p_loss * frac)
    return tuple(m[0])


def channel_distribution(
    per_km_rates: Mapping[str, float] | Sequence[float], length_km: float
) -> np.ndarray:
    """Distribution over (Clean, X, Z, Y, Lost) for a clean photon after the fibre.

    ``per_km_rates`` is either a mapping with keys ``X, Y, Z, loss`` or a
    sequence ``(px, py, pz, p_loss)``. Results are cached per distinct
    channel.
    """
    if length_km < 0:
        raise ValueError("negative channel length")
    if isinstance(per_km_rates, Mapping):
        rates = (
            per_km_rates.get("X", 0.0),
            per_km_rates.get("Y", 0.0),
            per_km_rates.get("Z", 0.0),
            per_km_rates.get("loss", 0.0),
        )
    else:
        rates = tuple(per_km_rates)
    return np.array(_channel_distribution(*map(float, rates), float(length_km)))


SINGLE_QUBIT_KEYS = ("X", "Y", "Z")
CNOT_KEYS = ("IX", "XI", "XX", "IZ", "ZI", "ZZ", "IY", "YI", "YY")


@dataclass(frozen=True)
class GateErrorSpec:
    """Error rate of one gate kind plus weights over the possible Pauli outcomes.

    For the CNOT the two-letter keys name the Pauli on the target first and on
    the control second, e.g. ``"IZ"`` leaves the target alone and puts Z on the
    control.
    """

    rate: float = 0.0
    ratios: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"gate error rate {self.rate} outside [0, 1]")
        if any(v < 0 for v in self.ratios.values()):
            raise ValueError("ratios must be nonnegative")
        if self.rate > 0 and sum(self.ratios.values()) <= 0:
            raise ValueError("rate > 0 needs at least one positive ratio")
        keys = tuple(k for k, v in self.ratios.items() if v > 0)
        total = sum(self.ratios[k] for k in keys)
        cdf = tuple(accumulate(self.ratios[k] / total for k in keys)) if keys else ()
        object.__setattr__(self, "_keys", keys)
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def single(cls, rate: float, x: float = 1.0, y: float = 1.0, z: float = 1.0):
        return cls(rate, {"X": x, "Y": y, "Z": z})

    @classmethod
    def cnot(cls, rate: float, ratios: Mapping[str, float] | None = None):
        if ratios is None:
            ratios = {k: 1.0 for k in CNOT_KEYS}
        unknown = set(ratios) - set(CNOT_KEYS)
        if unknown:
            raise ValueError(f"unknown CNOT error keys {sorted(unknown)}")
        return cls(rate, dict(ratios))

    def probability(self, key: str) -> float:
        total = sum(self.ratios.values())
        return self.rate * self.ratios.get(key, 0.0) / total if total else 0.0


def sample_gate_error(rng: np.random.Generator, spec: GateErrorSpec) -> str | None:
    """Return ``None`` for an error-free gate or the key of the sampled Pauli."""
    if spec.rate <= 0.0 or rng.random() >= spec.rate:
        return None
    u = rng.random()
    cdf = spec._cdf
    return spec._keys[min(bisect_right(cdf, u * cdf[-1]), len(cdf) - 1)]


PAULI_XZ = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}

# Which bases a single-qubit Pauli error flips when it hits a measurement.
FLIPS_BASIS = {
    "X": frozenset("ZY"),
    "Y": frozenset("XZ"),
    "Z": frozenset("XY"),
}


def measurement_flip_probability(spec: GateErrorSpec, basis: str) -> float:
    """Probability that a measurement in ``basis`` reports the wrong outcome."""
    return sum(spec.probability(p) for p in "XYZ" if basis in FLIPS_BASIS[p])
