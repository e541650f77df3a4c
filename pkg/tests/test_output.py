from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlinksim.simcore.output import (
    SUMMARY_KEYS,
    TAIL_KEYS,
    format_dm,
    format_summary,
    parse_dm,
    parse_summary,
    read_csv,
    swap_qubits,
    write_csv,
    write_trace,
)

DATA = Path(__file__).parent / "data"


def test_single_summary_fixture():
    (rec,) = parse_summary((DATA / "reference_single_summary.tex").read_text())
    assert (rec.node_a, rec.node_b) == ("EndNode1[0]", "Repeater1[0]")
    assert rec["cost"] == 602856 and rec["distance"] == 5.0
    assert rec["fidelity"] == 0.487046 and rec["bellpair_per_sec"] == 699.271
    assert rec["tomography_time"] == 0.010420677295
    assert rec["GOD_clean_pair_total"] == 3525 and rec["GOD_X_pair_total"] == 3475
    assert (rec["F"], rec["X"], rec["Z"], rec["Y"]) == (0.487046, 0.512954, 0.00895361, -0.00895361)


def test_example_summary_fixture():
    recs = parse_summary((DATA / "reference_example_summary.tex").read_text())
    assert [(r.node_a, r.node_b) for r in recs] == [
        ("EndNode1[0]", "Repeater1[0]"), ("EndNode2[0]", "HoM1[0]"),
        ("Repeater1[0]", "EndNode1[0]"), ("Repeater1[0]", "HoM1[0]"),
    ]
    assert recs[1]["distance"] == 2.5
    assert recs[0].fields == recs[2].fields
    assert recs[0]["GOD_Z_pair_total"] == 691 and recs[0]["Y"] == 0.0100021


def test_single_dm_fixture():
    ((a, b, rho),) = parse_dm((DATA / "reference_single_dm.tex").read_text())
    assert (a, b) == ("EndNode1[0]", "Repeater1[0]")
    assert rho[0, 3].real == 0.239046 and rho[1, 2].imag == 0.0163757
    assert np.real(np.trace(rho)) == pytest.approx(1.0, abs=1e-5)
    np.testing.assert_allclose(rho, rho.conj().T)


def test_example_dm_fixture_reverse_direction_is_qubit_swap():
    blocks = parse_dm((DATA / "reference_example_dm.tex").read_text())
    assert len(blocks) == 4
    named = {(a, b): rho for a, b, rho in blocks}
    fwd = named[("EndNode1[0]", "Repeater1[0]")]
    rev = named[("Repeater1[0]", "EndNode1[0]")]
    np.testing.assert_array_equal(swap_qubits(fwd), rev)
    np.testing.assert_array_equal(swap_qubits(named[("EndNode2[0]", "HoM1[0]")]), named[("Repeater1[0]", "HoM1[0]")])


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(finite, min_size=8, max_size=8),
    st.lists(st.integers(0, 10**9), min_size=7, max_size=7),
    st.floats(0.001, 1000.0),
)
def test_summary_round_trip_exact(floats, ints, distance):
    fields = dict(zip(("fidelity", "bellpair_per_sec", "tomography_time") + TAIL_KEYS, floats))
    fields.update(zip(("cost", "tomography_measurements", "actualmeas", "GOD_clean_pair_total",
                       "GOD_X_pair_total", "GOD_Y_pair_total", "GOD_Z_pair_total"), ints))
    fields["distance"] = distance
    assert set(fields) == set(SUMMARY_KEYS + TAIL_KEYS)
    text = format_summary("A[0]", "B[0]", fields)
    (rec,) = parse_summary(text)
    assert rec.fields == fields
    assert format_summary(rec.node_a, rec.node_b, rec.fields) == text


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=32, max_size=32))
def test_dm_round_trip_exact(vals):
    rho = np.array(vals[:16]).reshape(4, 4) + 1j * np.array(vals[16:]).reshape(4, 4)
    text = format_dm("A", "B", rho)
    ((a, b, back),) = parse_dm(text)
    assert (a, b) == ("A", "B")
    np.testing.assert_array_equal(back, rho)
    assert format_dm(a, b, back) == text


def test_dm_without_imaginary_block_rejected():
    with pytest.raises(ValueError):
        parse_dm("A<--->B\nREAL\n1 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n")
    with pytest.raises(ValueError):
        parse_summary("nothing here")


def test_csv_round_trip(tmp_path):
    rows = [{
        "trial": 0, "seed": 3, "architecture": "MeetInTheMiddle", "distance_km": 10.0,
        "n_rounds": 2, "method": "RSs-Sp+RSs-Sp", "fidelity_r": 0.1 + 0.2, "fidelity_a": 0.7,
        "F": 0.3, "X": 0.1, "Z": 0.5, "Y": 0.1, "bellpair_per_sec": 1234.5,
        "tomography_time": 1.5, "num_measure": 10, "actualmeas": 10, "god_clean": 7,
        "god_x": 1, "god_y": 1, "god_z": 1, "timed_out": 0,
    }]
    path = write_csv(rows, tmp_path / "t.csv")
    assert read_csv(path) == rows


def test_trace_lines(tmp_path):
    path = write_trace([(0, 0, "install", 5), (10, -1, "burst", (100, 3)), (20, 1, "discard", None)],
                       tmp_path / "sub" / "trace.log")
    assert path.read_text().splitlines() == ["0 0 install 5", "10 -1 burst 100:3", "20 1 discard -"]
