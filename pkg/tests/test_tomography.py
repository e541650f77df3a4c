import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from qlinksim.qstate import BELL_DM, PHI_PLUS, SIGMA
from qlinksim.tomography import (
    BASES,
    LinkTomography,
    ReconstructionUnavailable,
    TomographyAccumulator,
    TrialStats,
    aggregate,
    error_decomposition,
    exact_probabilities,
    exact_stokes,
    fidelity,
    project_psd,
    reconstruct,
    sample_counts,
    stokes,
)

PAULI = [SIGMA[k] for k in "IXYZ"]

# reference density matrices with their published error decompositions
REFERENCE_DM_1 = np.array([
    [0.245333, 0.00546737, 0.00436971, 0.239046],
    [0.00546737, 0.250667, 0.260954, 0.0115033],
    [0.00436971, 0.260954, 0.253333, 0.0104056],
    [0.239046, 0.0115033, 0.0104056, 0.250667],
]) + 1j * np.array([
    [0, 0.00795211, 0.00799364, -0.00275699],
    [-0.00795211, 0, 0.0163757, -0.00541632],
    [-0.00799364, -0.0163757, 0, 0.00106851],
    [0.00275699, 0.00541632, -0.00106851, 0],
])
REFERENCE_DM_2 = np.array([
    [0.462611, 0.00723047, 0.0170436, 0.370249],
    [0.00723047, 0.0202788, 0.00964299, -0.00152404],
    [0.0170436, 0.00964299, 0.0190114, 0.00154146],
    [0.370249, -0.00152404, 0.00154146, 0.498099],
]) + 1j * np.array([
    [0, -0.0146235, 0.0182761, -0.00885229],
    [0.0146235, 0, 0.0129395, -0.00312463],
    [-0.0182761, -0.0129395, 0, 0.00553257],
    [0.00885229, 0.00312463, -0.00553257, 0],
])


def random_state(seed, rank=4):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def analytic_stokes(rho):
    """Independent oracle: Tr[(sigma_i (x) sigma_j) rho] by explicit loops."""
    s = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            s[i, j] = np.real(np.trace(np.kron(PAULI[i], PAULI[j]) @ rho))
    return s


def test_record_increments():
    acc = TomographyAccumulator()
    acc.record("X", "Z", 1, -1)
    assert acc.total == 1
    acc.record("X", "Z", 1, -1)
    acc.record("Y", "Y", -1, -1)
    assert acc.counts[0, 2, 0, 1] == 2 and acc.counts[1, 1, 1, 1] == 1
    with pytest.raises(ValueError):
        acc.record("X", "X", 0, 1)


def test_missing_setting_unavailable():
    acc = TomographyAccumulator()
    acc.record("X", "X", 1, 1)
    with pytest.raises(ReconstructionUnavailable):
        stokes(acc)


def test_phi_plus_stokes():
    s = stokes(exact_probabilities(PHI_PLUS))
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[1, 1] = expected[3, 3] = 1
    expected[2, 2] = -1
    np.testing.assert_allclose(s, expected, atol=1e-15)


def test_mixed_state_stokes():
    s = stokes(exact_probabilities(np.eye(4) / 4))
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    np.testing.assert_allclose(s, expected, atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_marginals_assign_first_index_to_qubit_a(seed):
    # a product state with distinct local Bloch vectors pins the convention
    rng = np.random.default_rng(seed)
    va, vb = rng.normal(size=3), rng.normal(size=3)
    va, vb = 0.9 * va / np.linalg.norm(va), 0.5 * vb / np.linalg.norm(vb)
    ra = (PAULI[0] + sum(v * p for v, p in zip(va, PAULI[1:]))) / 2
    rb = (PAULI[0] + sum(v * p for v, p in zip(vb, PAULI[1:]))) / 2
    rho = np.kron(ra, rb)
    s = stokes(exact_probabilities(rho))
    np.testing.assert_allclose(s[1:, 0], va, atol=1e-12)
    np.testing.assert_allclose(s[0, 1:], vb, atol=1e-12)
    np.testing.assert_allclose(s, analytic_stokes(rho), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_round_trip_identity(seed, rank):
    rho = random_state(seed, rank)
    np.testing.assert_allclose(reconstruct(exact_stokes(rho)), rho, atol=1e-12)
    np.testing.assert_allclose(exact_stokes(rho), analytic_stokes(rho), atol=1e-12)
    np.testing.assert_allclose(stokes(exact_probabilities(rho)), analytic_stokes(rho), atol=1e-12)


def test_reconstruct_phi_plus_corners():
    rho = reconstruct(exact_stokes(PHI_PLUS))
    assert rho[0, 0] == pytest.approx(0.5) and rho[0, 3] == pytest.approx(0.5)
    assert rho[3, 3] == pytest.approx(0.5) and abs(rho[1, 1]) < 1e-15
    np.testing.assert_allclose(reconstruct(np.diag([1, 0, 0, 0]) * 1.0), np.eye(4) / 4)


def test_sampled_stokes_within_clt_bound():
    rho = random_state(42)
    n = 10**6
    s = stokes(TomographyAccumulator.from_counts(sample_counts(rho, n, np.random.default_rng(0))))
    assert np.max(np.abs(s - analytic_stokes(rho))) < 3 / np.sqrt(n)


def test_convergence_rate_is_inverse_sqrt():
    rho = random_state(7)
    truth = analytic_stokes(rho)
    rng = np.random.default_rng(1)
    ns = np.array([10**3, 10**4, 10**5, 10**6])
    errs = []
    for n in ns:
        e = [np.sqrt(np.mean((stokes(TomographyAccumulator.from_counts(sample_counts(rho, n, rng))) - truth) ** 2)) for _ in range(20)]
        errs.append(np.mean(e))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


@pytest.mark.parametrize(
    "rho, expected",
    [
        (PHI_PLUS, 1.0),
        (np.eye(4) / 4, 0.25),
        (0.9 * BELL_DM["Phi+"] + 0.1 * BELL_DM["Psi+"], 0.9),
    ],
)
def test_fidelity_examples(rho, expected):
    assert fidelity(rho) == pytest.approx(expected)


def test_error_decomposition_pure_psi_plus():
    d = error_decomposition(BELL_DM["Psi+"])
    assert d == pytest.approx({"F": 0.0, "X": 1.0, "Z": 0.0, "Y": 0.0})


@pytest.mark.parametrize(
    "rho, expected",
    [
        (REFERENCE_DM_1, {"F": 0.487046, "X": 0.512954, "Z": 0.00895361, "Y": -0.00895361}),
        (REFERENCE_DM_2, {"F": 0.850604, "X": 0.0292881, "Z": 0.110106, "Y": 0.0100021}),
    ],
)
def test_reference_density_matrices(rho, expected):
    d = error_decomposition(rho)
    for k, v in expected.items():
        assert d[k] == pytest.approx(v, abs=2e-6)
    assert sum(d.values()) == pytest.approx(1.0, abs=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_decomposition_sums_to_one(seed):
    assert sum(error_decomposition(random_state(seed)).values()) == pytest.approx(1.0, abs=1e-9)


def test_project_psd():
    s = exact_stokes(PHI_PLUS)
    s[1, 1] = 1.3  # unphysical
    rho = project_psd(reconstruct(s))
    assert np.min(np.linalg.eigvalsh(rho)) >= -1e-12
    assert np.trace(rho).real == pytest.approx(1.0)


def test_aggregate_two_trials():
    out = aggregate([TrialStats(0.6, 0.7, 100.0), TrialStats(0.8, 0.7, 300.0)])
    assert out["mean"] == pytest.approx(0.7)
    assert out["mean_abs_diff"] == pytest.approx(0.1)
    assert out["sigma"] == pytest.approx(0.1414, abs=1e-4)
    assert out["throughput_mean"] == pytest.approx(200.0)


def test_aggregate_identical_trials():
    out = aggregate([TrialStats(0.75, 0.8, 1.0)] * 5)
    assert out["sigma"] == 0.0 and out["min"] == out["max"] == 0.75
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_sigma_statistical():
    rng = np.random.default_rng(3)
    sig = []
    for _ in range(200):
        fr = rng.normal(0.7, 0.04, size=25)
        sig.append(aggregate([TrialStats(f, 0.7, 1.0) for f in fr])["sigma"])
    # sample sigma of 25 normals has relative spread about 1/sqrt(48)
    assert np.mean(sig) == pytest.approx(0.04, rel=0.05)


def records_from(rho, n, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        ba, bb = rng.choice(BASES), rng.choice(BASES)
        p = exact_probabilities(rho)[BASES.index(ba), BASES.index(bb)].ravel()
        k = rng.choice(4, p=p)
        rows.append([ba, bb, 1 - 2 * (k // 2), 1 - 2 * (k % 2)])
    return rows


def test_estimator_fit_and_score():
    rho = 0.8 * BELL_DM["Phi+"] + 0.2 * np.eye(4) / 4
    X = records_from(rho, 20_000, 0)
    est = LinkTomography().fit(X)
    assert est.score() == pytest.approx(0.85, abs=0.02)
    assert est.n_records_ == 20_000
    np.testing.assert_allclose(est.transform(), est.density_matrix_)
    assert LinkTomography(target="Psi+").fit(X).score() == pytest.approx(0.05, abs=0.02)
    assert est.get_params() == {"target": "Phi+", "psd": False}


def test_estimator_accepts_integer_bases():
    X = [[0, 0, 1, 1], [1, 1, 1, -1], [2, 2, -1, -1]] * 3
    X += [[i, j, 1, 1] for i in range(3) for j in range(3) if i != j]
    est = LinkTomography(psd=True).fit(np.array(X))
    assert np.min(np.linalg.eigvalsh(est.density_matrix_)) >= -1e-12


@pytest.mark.parametrize(
    "X",
    [
        [["X", "Z", 1]],
        [["Q", "Z", 1, 1]],
        [["X", "Z", 0, 1]],
        np.zeros((0, 4)),
    ],
)
def test_estimator_rejects_bad_records(X):
    with pytest.raises(ValueError):
        LinkTomography().fit(X)


def test_estimator_unfitted():
    with pytest.raises(NotFittedError):
        LinkTomography().score()
    with pytest.raises(ValueError):
        LinkTomography(target="GHZ").fit([["X", "X", 1, 1]])
