"""Two-qubit state tomography from joint Pauli measurement counts.

Counts are indexed by (basis_a, basis_b, outcome_a, outcome_b) with bases in
X, Y, Z and outcomes in +1, -1. Reconstruction is plain linear inversion of
the 16 Stokes parameters, so the estimate can have small negative
eigenvalues.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .qstate import BELL_DM, PHI_PLUS, SIGMA, joint_outcome_probabilities

BASES = ("X", "Y", "Z")
_BASIS_INDEX = {b: i for i, b in enumerate(BASES)}
# Stokes index k (1, 2, 3) <-> basis X, Y, Z
_PAULIS = [SIGMA["I"], SIGMA["X"], SIGMA["Y"], SIGMA["Z"]]
_PAULI_PAIRS = np.array([[np.kron(a, b) for b in _PAULIS] for a in _PAULIS])


class ReconstructionUnavailable(ValueError):
    """Raised when a measurement setting has no counts."""


def _outcome_index(o: int) -> int:
    if o == 1:
        return 0
    if o == -1:
        return 1
    raise ValueError(f"outcome must be +1 or -1, got {o!r}")


class TomographyAccumulator:
    """Joint outcome counts for the nine basis settings."""

    def __init__(self):
        self.counts = np.zeros((3, 3, 2, 2), dtype=np.int64)

    def record(self, basis_a: str, basis_b: str, outcome_a: int, outcome_b: int) -> None:
        self.counts[
            _BASIS_INDEX[basis_a], _BASIS_INDEX[basis_b],
            _outcome_index(outcome_a), _outcome_index(outcome_b),
        ] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def setting_totals(self) -> np.ndarray:
        return self.counts.sum(axis=(2, 3))

    def probabilities(self) -> np.ndarray:
        tot = self.setting_totals()
        if np.any(tot == 0):
            missing = [BASES[i] + BASES[j] for i, j in zip(*np.nonzero(tot == 0))]
            raise ReconstructionUnavailable(f"no counts for settings {missing}")
        return self.counts / tot[:, :, None, None]

    @classmethod
    def from_counts(cls, counts) -> "TomographyAccumulator":
        acc = cls()
        acc.counts = np.asarray(counts, dtype=np.int64).reshape(3, 3, 2, 2).copy()
        return acc


def exact_probabilities(rho: np.ndarray) -> np.ndarray:
    """P(outcome pair | setting) implied by ``rho``, same layout as the counts."""
    p = np.empty((3, 3, 2, 2))
    for i, ba in enumerate(BASES):
        for j, bb in enumerate(BASES):
            probs = joint_outcome_probabilities(rho, ba, bb)
            for (oa, ob), v in probs.items():
                p[i, j, _outcome_index(oa), _outcome_index(ob)] = v
    return p


def sample_counts(rho: np.ndarray, shots_per_setting: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts drawn from ``rho`` for every setting."""
    p = np.clip(exact_probabilities(rho), 0.0, None)
    out = np.empty((3, 3, 2, 2), dtype=np.int64)
    for i in range(3):
        for j in range(3):
            pij = p[i, j].ravel()
            out[i, j] = rng.multinomial(shots_per_setting, pij / pij.sum()).reshape(2, 2)
    return out


def stokes(data) -> np.ndarray:
    """16 Stokes parameters from an accumulator or a probability array.

    For i, j >= 1 the correlator S_ij uses setting (i, j). The marginals
    S_i0 and S_0j use the matching diagonal setting (i, i) or (j, j), with
    the first index always referring to qubit A.
    """
    p = data.probabilities() if isinstance(data, TomographyAccumulator) else np.asarray(data)
    s = np.zeros((4, 4))
    s[0, 0] = 1.0
    for i in range(3):
        for j in range(3):
            q = p[i, j]
            s[i + 1, j + 1] = q[0, 0] - q[0, 1] - q[1, 0] + q[1, 1]
        d = p[i, i]
        s[i + 1, 0] = d[0, 0] + d[0, 1] - d[1, 0] - d[1, 1]
        s[0, i + 1] = d[0, 0] - d[0, 1] + d[1, 0] - d[1, 1]
    return s


def exact_stokes(rho: np.ndarray) -> np.ndarray:
    """S_ij = Tr[(sigma_i (x) sigma_j) rho]."""
    return np.real(np.einsum("ijab,ba->ij", _PAULI_PAIRS, rho))


def reconstruct(s: np.ndarray) -> np.ndarray:
    """rho = 1/4 sum_ij S_ij sigma_i (x) sigma_j."""
    return np.einsum("ij,ijab->ab", np.asarray(s, dtype=float), _PAULI_PAIRS) / 4


def project_psd(rho: np.ndarray) -> np.ndarray:
    """Nearest trace-1 state by clipping negative eigenvalues."""
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return out / np.real(np.trace(out))


def fidelity(rho_r: np.ndarray, rho_i: np.ndarray = PHI_PLUS) -> float:
    """Re Tr[rho_r rho_i]; reported as-is even if slightly outside [0, 1]."""
    return float(np.real(np.trace(rho_r @ rho_i)))


def error_decomposition(rho: np.ndarray) -> dict:
    """Overlaps with Phi+ (F), Psi+ (X), Phi- (Z) and Psi- (Y)."""
    return {
        "F": fidelity(rho, BELL_DM["Phi+"]),
        "X": fidelity(rho, BELL_DM["Psi+"]),
        "Z": fidelity(rho, BELL_DM["Phi-"]),
        "Y": fidelity(rho, BELL_DM["Psi-"]),
    }


@dataclass
class TrialStats:
    fidelity_r: float
    fidelity_a: float
    throughput: float


def aggregate(trials: Sequence[TrialStats]) -> dict:
    """Cross-trial summary; sigma is the sample standard deviation."""
    if not trials:
        raise ValueError("need at least one trial")
    fr = np.array([t.fidelity_r for t in trials])
    fa = np.array([t.fidelity_a for t in trials])
    tp = np.array([t.throughput for t in trials])
    return {
        "n": len(trials),
        "mean": float(fr.mean()),
        "sigma": float(fr.std(ddof=1)) if len(fr) > 1 else 0.0,
        "min": float(fr.min()),
        "max": float(fr.max()),
        "mean_abs_diff": float(np.mean(np.abs(fr - fa))),
        "fidelity_a_mean": float(fa.mean()),
        "throughput_mean": float(tp.mean()),
    }


def _basis_column(col) -> np.ndarray:
    if all(isinstance(b, str) for b in col):
        try:
            return np.array([_BASIS_INDEX[b.upper()] for b in col])
        except KeyError as err:
            raise ValueError(f"unknown basis {err.args[0]!r}") from None
    idx = np.asarray(col, dtype=np.int64)
    if np.any((idx < 0) | (idx > 2)):
        raise ValueError("basis indices must be 0, 1 or 2")
    return idx


class LinkTomography(BaseEstimator):
    """Estimator wrapper: fit a density matrix to joint measurement records.

    Parameters
    ----------
    target : {"Phi+", "Psi+", "Phi-", "Psi-"}
        Reference Bell state for :meth:`score`.
    psd : bool
        Project the linear-inversion estimate onto the nearest state.

    Attributes
    ----------
    counts_ : ndarray of shape (3, 3, 2, 2)
    stokes_ : ndarray of shape (4, 4)
    density_matrix_ : ndarray of shape (4, 4)
    fidelity_ : float
    error_rates_ : dict
    """

    def __init__(self, target: str = "Phi+", psd: bool = False):
        self.target = target
        self.psd = psd

    def _records(self, X):
        arr = np.asarray(X, dtype=object)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError("X must have shape (n_records, 4): basis_a, basis_b, out_a, out_b")
        if arr.shape[0] == 0:
            raise ValueError("X has no records")
        ba = _basis_column(arr[:, 0])
        bb = _basis_column(arr[:, 1])
        outs = check_array(arr[:, 2:].astype(float), dtype=np.int64)
        if not np.all(np.isin(outs, (-1, 1))):
            raise ValueError("outcomes must be +1 or -1")
        counts = np.zeros((3, 3, 2, 2), dtype=np.int64)
        np.add.at(counts, (ba, bb, (outs[:, 0] == -1).astype(int), (outs[:, 1] == -1).astype(int)), 1)
        return counts

    def fit(self, X, y=None):
        if self.target not in BELL_DM:
            raise ValueError(f"unknown target state {self.target!r}")
        self.counts_ = self._records(X)
        acc = TomographyAccumulator.from_counts(self.counts_)
        self.stokes_ = stokes(acc)
        rho = reconstruct(self.stokes_)
        self.density_matrix_ = project_psd(rho) if self.psd else rho
        self.fidelity_ = fidelity(self.density_matrix_, BELL_DM[self.target])
        self.error_rates_ = error_decomposition(self.density_matrix_)
        self.n_records_ = int(self.counts_.sum())
        return self

    def transform(self, X=None):
        """Return the fitted density matrix."""
        check_is_fitted(self, "density_matrix_")
        return self.density_matrix_

    def score(self, X=None, y=None) -> float:
        """Fidelity of the fitted state with ``target`` (higher is better)."""
        check_is_fitted(self, "density_matrix_")
        return self.fidelity_
