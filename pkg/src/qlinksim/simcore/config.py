"""INI-style experiment configuration.

Values may be arithmetic expressions (``1/2000``, ``0.46*0.49``), carry a unit
suffix (``10 s``, ``50ms``, ``5km``), be quoted strings or booleans. Keys may
carry the ``**.`` wildcard prefix. Absent keys take the default hardware
parameters; unknown keys are rejected.
"""
from __future__ import annotations

import ast
import dataclasses
import logging
import math
import operator
import re
from dataclasses import dataclass

import numpy as np

from ..errmodel import CNOT_KEYS, GateErrorSpec, MemoryChain, build_memory_matrix
from ..link import LinkConfig, normalize_architecture
from ..qstate import NoiseModel
from ..ruleset import METHODS, PURIFICATION_TYPES

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


_PER_US_LIFETIME = 1.0 / 50_000  # 50 ms lifetime, per microsecond step


@dataclass
class ExperimentConfig:
    # single-qubit gates: rate and X:Y:Z ratios
    Hgate_error_rate: float = 0.0005
    Hgate_X_error_ratio: float = 1.0
    Hgate_Y_error_ratio: float = 1.0
    Hgate_Z_error_ratio: float = 1.0
    Xgate_error_rate: float = 0.0005
    Xgate_X_error_ratio: float = 1.0
    Xgate_Y_error_ratio: float = 1.0
    Xgate_Z_error_ratio: float = 1.0
    Zgate_error_rate: float = 0.0005
    Zgate_X_error_ratio: float = 1.0
    Zgate_Y_error_ratio: float = 1.0
    Zgate_Z_error_ratio: float = 1.0
    Measurement_error_rate: float = 0.05
    Measurement_X_error_ratio: float = 1.0
    Measurement_Y_error_ratio: float = 1.0
    Measurement_Z_error_ratio: float = 1.0
    # CNOT: first letter acts on the target, second on the control
    CNOTgate_error_rate: float = 0.02
    CNOTgate_IZ_error_ratio: float = 1.0
    CNOTgate_ZI_error_ratio: float = 1.0
    CNOTgate_ZZ_error_ratio: float = 1.0
    CNOTgate_IX_error_ratio: float = 1.0
    CNOTgate_XI_error_ratio: float = 1.0
    CNOTgate_XX_error_ratio: float = 1.0
    CNOTgate_IY_error_ratio: float = 1.0
    CNOTgate_YI_error_ratio: float = 1.0
    CNOTgate_YY_error_ratio: float = 1.0
    # memory, per microsecond
    memory_X_error_rate: float = 1 / 3 / 3 * 1e-6
    memory_Y_error_rate: float = 1 / 3 / 3 * 1e-6
    memory_Z_error_rate: float = 1 / 3 / 3 * 1e-6
    memory_energy_excitation_rate: float = _PER_US_LIFETIME * 100 / 101
    memory_energy_relaxation_rate: float = _PER_US_LIFETIME * 1 / 101
    memory_completely_mixed_rate: float = 0.0
    # channel, per km
    channel_Loss_error_rate: float = 0.04501
    channel_X_error_rate: float = 0.01
    channel_Y_error_rate: float = 0.01
    channel_Z_error_rate: float = 0.01
    # detectors
    internal_hom_photon_detection_per_sec: float = 1e9
    internal_hom_darkcount_probability: float = 1e-8
    hom_photon_detection_per_sec: float = 1e9
    hom_darkcount_probability: float = 1e-8
    detector_efficiency: float = 0.8
    bsa_success_ceiling: float = 0.5
    emission_success_probability: float = 0.46 * 0.49
    # protocol
    num_measure: int = 7000
    buffers: int = 100
    tomography_output_filename: str = "link_tomography"
    link_tomography: bool = True
    initial_purification: int = 0
    Purification_type: int = 3003
    purification_method: str | None = None
    Initial_notification_timing_buffer: float = 10.0  # seconds
    timeout: float = 120.0  # seconds after RuleSet installation
    # topology and run control
    architecture: str = "MeetInTheMiddle"
    distance_km: float = 10.0
    bsa_fraction: float = 0.5
    refractive_index: float = 1.44
    network: str | None = None
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        self.validate()

    # -- validation ------------------------------------------------------------

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            n = f.name
            if n.endswith("_ratio") and v < 0:
                raise ConfigError("ratio must be nonnegative", n)
            if (n.endswith("_error_rate") or n.endswith("_probability")
                    or n in ("detector_efficiency", "bsa_success_ceiling", "bsa_fraction")
                    or n.startswith("memory_")):
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"probability {v} outside [0, 1]", n)
        for n in ("hom_photon_detection_per_sec", "internal_hom_photon_detection_per_sec",
                  "distance_km", "refractive_index", "timeout"):
            if getattr(self, n) <= 0:
                raise ConfigError("must be positive", n)
        for n in ("num_measure", "buffers", "trials"):
            if int(getattr(self, n)) < 1:
                raise ConfigError("must be at least 1", n)
        if self.initial_purification < 0:
            raise ConfigError("must be nonnegative", "initial_purification")
        if self.Initial_notification_timing_buffer < 0:
            raise ConfigError("must be nonnegative", "Initial_notification_timing_buffer")
        try:
            self.architecture = normalize_architecture(self.architecture)
        except ValueError as err:
            raise ConfigError(str(err), "architecture") from None
        if self.purification_method is None and self.Purification_type not in PURIFICATION_TYPES:
            raise ConfigError(f"unknown id {self.Purification_type}", "Purification_type")
        for m in self.schedule:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}", "purification_method")
        if self.total_memory_rate() >= 1.0:
            raise ConfigError("memory rates sum to >= 1 per microsecond", "memory_X_error_rate")

    # -- derived objects ---------------------------------------------------------

    @property
    def schedule(self) -> list:
        """Purification method per round (last entry repeats)."""
        if self.purification_method:
            return [m.strip() for m in self.purification_method.split(",") if m.strip()]
        return [PURIFICATION_TYPES[self.Purification_type]]

    @property
    def n_rounds(self) -> int:
        return int(self.initial_purification)

    def total_memory_rate(self) -> float:
        return (self.memory_X_error_rate + self.memory_Y_error_rate + self.memory_Z_error_rate
                + self.memory_energy_excitation_rate + self.memory_energy_relaxation_rate
                + self.memory_completely_mixed_rate)

    def _single(self, prefix: str) -> GateErrorSpec:
        ratios = [getattr(self, f"{prefix}_{p}_error_ratio") for p in "XYZ"]
        return GateErrorSpec.single(getattr(self, f"{prefix}_error_rate"), *ratios)

    def noise_model(self) -> NoiseModel:
        xyz = (self.memory_X_error_rate, self.memory_Y_error_rate, self.memory_Z_error_rate)
        q = build_memory_matrix(
            sum(xyz) * 1e6,
            xyz if sum(xyz) > 0 else (1.0, 1.0, 1.0),
            self.memory_energy_excitation_rate * 1e6,
            self.memory_energy_relaxation_rate * 1e6,
            self.memory_completely_mixed_rate * 1e6,
        )
        cnot = GateErrorSpec.cnot(
            self.CNOTgate_error_rate,
            {k: getattr(self, f"CNOTgate_{k}_error_ratio") for k in CNOT_KEYS},
        )
        return NoiseModel(MemoryChain(q), cnot, self._single("Hgate"), self._single("Measurement"))

    def link_config(self) -> LinkConfig:
        sr = self.architecture == "SenderReceiver"
        pre = "internal_hom" if sr else "hom"
        return LinkConfig(
            architecture=self.architecture,
            distance_km=self.distance_km,
            bsa_fraction=self.bsa_fraction,
            refractive_index=self.refractive_index,
            emission_prob=self.emission_success_probability,
            detector_efficiency=self.detector_efficiency,
            detection_rate=getattr(self, f"{pre}_photon_detection_per_sec"),
            darkcount_prob=getattr(self, f"{pre}_darkcount_probability"),
            bsa_success_ceiling=self.bsa_success_ceiling,
            channel_rates=(self.channel_X_error_rate, self.channel_Y_error_rate,
                           self.channel_Z_error_rate, self.channel_Loss_error_rate),
            buffer_size=int(self.buffers),
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Serialize back to the key=value format (round-trips through parse)."""
        lines = ["[General]"]
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, str):
                v = f'"{v}"'
            else:
                v = repr(v)
            lines.append(f"**.{f.name} = {v}")
        return "\n".join(lines) + "\n"


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LOWER = {k.lower(): k for k in FIELDS}
_ALIASES = {"seed-set": "seed", "seed_set": "seed"}

_UNITS = {
    "s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12,
    "km": 1.0, "m": 1e-3,
}
_UNIT_RE = re.compile(r"^(?P<num>.*?)\s*(?P<unit>s|ms|us|ns|ps|km|m)$")

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def safe_eval(expr: str) -> float:
    """Evaluate a numeric literal expression without ``eval``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {expr!r}")

    try:
        return ev(ast.parse(expr.strip(), mode="eval"))
    except SyntaxError:
        raise ValueError(f"cannot parse {expr!r}") from None


def parse_value(raw: str):
    """Turn one right-hand side into bool, str or number (units folded in)."""
    v = raw.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    if v.lower() in ("true", "false"):
        return v.lower() == "true"
    m = _UNIT_RE.match(v)
    if m and m.group("num"):
        try:
            return safe_eval(m.group("num")) * _UNITS[m.group("unit")]
        except ValueError:
            pass
    try:
        return safe_eval(v)
    except ValueError:
        return v


def _strip_comment(line: str) -> str:
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out).strip()


def _coerce(key: str, value):
    f = FIELDS[key]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError("expected true or false")
            return value
        if kind == "int":
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError("expected an integer")
            return int(float(value))
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError("expected a number")
            v = float(value)
            if math.isnan(v):
                raise ValueError("NaN")
            return v
        return str(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value {value!r} ({err})", key) from None


_NETWORK_RE = re.compile(r"_(?P<arch>MIM|SR)_.*?(?P<km>\d+(?:\.\d+)?)km", re.IGNORECASE)


def parse_config(text: str, section: str | None = None) -> ExperimentConfig:
    """Parse config text.

    ``[General]`` applies to everything; ``[Config NAME]`` sections are merged
    on top (only ``section`` if given, else all of them in order).
    """
    values: dict = {}
    current = "General"
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _strip_comment(line)
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current.lower().startswith("config "):
                current = current[7:].strip()
            continue
        if section is not None and current not in ("General", section):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key.startswith("**."):
            key = key[3:]
        key = _ALIASES.get(key.lower(), key)
        name = _LOWER.get(key.lower())
        if name is None:
            raise ConfigError("unknown key", key)
        value = parse_value(raw)
        if name == "seed" and isinstance(value, str):
            m = re.fullmatch(r"\$\{(\d+)\}", value.strip())
            if not m:
                raise ConfigError(f"bad seed {value!r}", name)
            value = int(m.group(1))
        values[name] = _coerce(name, value)

    net = values.get("network")
    if net:
        m = _NETWORK_RE.search(net)
        if m:
            values.setdefault("architecture", m.group("arch"))
            values.setdefault("distance_km", float(m.group("km")))

    for prefix in ("Hgate", "Xgate", "Zgate", "Measurement"):
        ratios = [values.get(f"{prefix}_{p}_error_ratio", 1.0) for p in "XYZ"]
        rate = values.get(f"{prefix}_error_rate", FIELDS[f"{prefix}_error_rate"].default)
        if rate > 0 and sum(ratios) == 0:
            log.warning("%s ratios are all zero; treating %s_error_rate as 0", prefix, prefix)
            values[f"{prefix}_error_rate"] = 0.0
    cnot_ratios = [values.get(f"CNOTgate_{k}_error_ratio", 1.0) for k in CNOT_KEYS]
    if sum(cnot_ratios) == 0:
        values["CNOTgate_error_rate"] = 0.0
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


def load_config(path, section: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), section)


def seed_sequence(seed: int) -> dict:
    """Independent generator streams for each simulator subsystem."""
    names = ("link", "gate", "measure", "basis", "memory")
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def ideal_config(**changes) -> ExperimentConfig:
    """Noise-free hardware: handy for tests and sanity runs."""
    zero = {
        f.name: 0.0 for f in dataclasses.fields(ExperimentConfig)
        if f.name.endswith("_error_rate") or f.name.startswith("memory_")
        or f.name.endswith("darkcount_probability")
    }
    zero.update(emission_success_probability=1.0, detector_efficiency=1.0, bsa_success_ceiling=1.0)
    zero.update(changes)
    return ExperimentConfig(**zero)

