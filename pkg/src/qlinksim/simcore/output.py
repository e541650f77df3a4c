"""Summary and density-matrix output files, per-trial CSV and event traces.

Summary file, one record per link direction::

    A<-->QuantumChannel{cost=0; distance=10km; fidelity=...; bellpair_per_sec=...;
    tomography_time=...; tomography_measurements=...; actualmeas=...;
    GOD_clean_pair_total=...; GOD_X_pair_total=...; GOD_Y_pair_total=...;
    GOD_Z_pair_total=...; }<-->B; F=...; X=...; Z=...; Y=...

Density-matrix file (``<name>_dm``), per direction a header ``A<--->B``
followed by ``REAL`` and ``IMAGINARY`` blocks of four rows each. The reverse
direction carries the same state with the two qubits swapped.

Floats are written with ``repr`` so parse(write(x)) reproduces x exactly.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SUMMARY_KEYS = (
    "cost", "distance", "fidelity", "bellpair_per_sec", "tomography_time",
    "tomography_measurements", "actualmeas", "GOD_clean_pair_total",
    "GOD_X_pair_total", "GOD_Y_pair_total", "GOD_Z_pair_total",
)
TAIL_KEYS = ("F", "X", "Z", "Y")
_INT_KEYS = {"cost", "tomography_measurements", "actualmeas", "GOD_clean_pair_total",
             "GOD_X_pair_total", "GOD_Y_pair_total", "GOD_Z_pair_total"}

SWAP = np.eye(4)[[0, 2, 1, 3]]


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("booleans are not numeric output fields")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _km(v: float) -> str:
    v = float(v)
    return f"{int(v)}km" if v.is_integer() else f"{v!r}km"


@dataclass
class SummaryRecord:
    node_a: str
    node_b: str
    fields: dict

    def __getitem__(self, key):
        return self.fields[key]


def summary_fields(out) -> dict:
    """Pull the summary values out of a TrialOutput-like object."""
    return {k: getattr(out, k) for k in SUMMARY_KEYS + TAIL_KEYS}


def format_summary(node_a: str, node_b: str, fields: dict) -> str:
    body = "; ".join(
        f"{k}={_km(fields[k]) if k == 'distance' else _num(fields[k])}" for k in SUMMARY_KEYS
    )
    tail = "; ".join(f"{k}={_num(fields[k])}" for k in TAIL_KEYS)
    return f"{node_a}<-->QuantumChannel{{{body}; }}<-->{node_b}; {tail}"


def _untex(text: str) -> str:
    """Undo the escaping used when the format is typeset."""
    text = text.replace("\\\\", " ")
    for esc, ch in (("\\{", "{"), ("\\}", "}"), ("\\_", "_")):
        text = text.replace(esc, ch)
    return text


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_RECORD_RE = re.compile(
    r"(?P<a>[^\s;{}]+)<-->QuantumChannel\{(?P<body>[^}]*)\}<-->(?P<b>[^\s;]+)\s*;"
    r"(?P<tail>(?:\s*[FXZY]\s*=\s*" + _NUM + r"\s*;?){4})"
)


def _typed(key: str, raw: str):
    raw = raw.strip()
    if key == "distance":
        return float(raw.removesuffix("km"))
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def parse_summary(text: str) -> list:
    """Parse every summary record in ``text``.

    Whitespace, line wraps and typesetting escapes between fields are
    tolerated.
    """
    text = re.sub(r"\s+", " ", _untex(text))
    out = []
    for m in _RECORD_RE.finditer(text):
        fields = {}
        for part in m.group("body").split(";"):
            if "=" in part:
                k, v = part.split("=", 1)
                k = k.strip()
                fields[k] = _typed(k, v)
        for part in m.group("tail").split(";"):
            if "=" in part:
                k, v = part.split("=", 1)
                fields[k.strip()] = float(v)
        missing = set(SUMMARY_KEYS + TAIL_KEYS) - set(fields)
        if missing:
            raise ValueError(f"summary record lacks {sorted(missing)}")
        out.append(SummaryRecord(m.group("a"), m.group("b"), fields))
    if not out:
        raise ValueError("no summary records found")
    return out


def format_dm(node_a: str, node_b: str, rho: np.ndarray) -> str:
    lines = [f"{node_a}<--->{node_b}"]
    for label, part in (("REAL", rho.real), ("IMAGINARY", rho.imag)):
        lines.append(label)
        cells = [[repr(float(x)) for x in row] for row in part]
        width = max(len(c) for row in cells for c in row) + 1
        lines.extend("".join(c.rjust(width) for c in row) for row in cells)
    return "\n".join(lines) + "\n"


def parse_dm(text: str) -> list:
    """Return ``[(node_a, node_b, rho), ...]`` from a density-matrix file."""
    text = _untex(text)
    blocks = re.split(r"(\S+)<--->(\S+)", text)
    out = []
    for i in range(1, len(blocks) - 2, 3):
        a, b, body = blocks[i], blocks[i + 1], blocks[i + 2]
        m = re.search(r"REAL(?P<re>.*?)IMAGINARY(?P<im>.*)", body, re.S)
        if not m:
            raise ValueError(f"block {a}<--->{b} lacks REAL/IMAGINARY sections")
        re_vals = [float(x) for x in re.findall(_NUM, m.group("re"))]
        im_vals = [float(x) for x in re.findall(_NUM, m.group("im"))][:16]
        if len(re_vals) != 16 or len(im_vals) != 16:
            raise ValueError(f"block {a}<--->{b} does not hold two 4x4 matrices")
        rho = np.array(re_vals).reshape(4, 4) + 1j * np.array(im_vals).reshape(4, 4)
        out.append((a, b, rho))
    if not out:
        raise ValueError("no density-matrix blocks found")
    return out


def swap_qubits(rho: np.ndarray) -> np.ndarray:
    return SWAP @ rho @ SWAP


def write_outputs(outputs: Sequence, path, names: tuple | None = None) -> list:
    """Write ``path`` (summary) and ``path_dm`` for the given trial outputs.

    Each trial contributes both link directions. Returns the written paths.
    """
    path = Path(path)
    summary, dm = [], []
    for out in outputs:
        a, b = names or out.names
        f = summary_fields(out)
        summary += [format_summary(a, b, f), format_summary(b, a, f)]
        if out.density_matrix is not None:
            dm += [format_dm(a, b, out.density_matrix), format_dm(b, a, swap_qubits(out.density_matrix))]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    dm_path = path.with_name(path.name + "_dm")
    dm_path.write_text("".join(dm), encoding="utf-8")
    return [path, dm_path]


CSV_COLUMNS = (
    "trial", "seed", "architecture", "distance_km", "n_rounds", "method",
    "fidelity_r", "fidelity_a", "F", "X", "Z", "Y", "bellpair_per_sec",
    "tomography_time", "num_measure", "actualmeas", "god_clean", "god_x", "god_y",
    "god_z", "timed_out",
)


def trial_row(index: int, out, config) -> dict:
    return {
        "trial": index,
        "seed": out.seed,
        "architecture": config.architecture,
        "distance_km": out.distance,
        "n_rounds": config.n_rounds,
        "method": "+".join(config.schedule) if config.n_rounds else "none",
        "fidelity_r": out.fidelity,
        "fidelity_a": out.fidelity_a,
        "F": out.F, "X": out.X, "Z": out.Z, "Y": out.Y,
        "bellpair_per_sec": out.bellpair_per_sec,
        "tomography_time": out.tomography_time,
        "num_measure": out.tomography_measurements,
        "actualmeas": out.actualmeas,
        "god_clean": out.GOD_clean_pair_total,
        "god_x": out.GOD_X_pair_total,
        "god_y": out.GOD_Y_pair_total,
        "god_z": out.GOD_Z_pair_total,
        "timed_out": int(out.timed_out),
    }


def write_csv(rows: Iterable[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def read_csv(path) -> list:
    ints = {"trial", "seed", "n_rounds", "num_measure", "actualmeas", "god_clean",
            "god_x", "god_y", "god_z", "timed_out"}
    strs = {"architecture", "method"}
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            rows.append({
                k: (v if k in strs else int(v) if k in ints else float(v)) for k, v in raw.items()
            })
    return rows


def write_trace(trace: Iterable[tuple], path) -> Path:
    """One line per event: time in ps, node (-1 for the BSA), kind, key."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for t, node, kind, key in trace:
            if key is None:
                key = "-"
            elif isinstance(key, tuple):
                key = ":".join(map(str, key))
            fh.write(f"{t} {node} {kind} {key}\n")
    return path
