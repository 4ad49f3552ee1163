"""Architecture description, gate sampling and seed derivation.

Everything in this module is shared by the statevector and Markov engines.
Qubit ``q`` of core ``c`` has the global index ``c * n_qubits_per_core + q``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .errors import ConfigError, DegenerateCore, InvalidCoreCount

STATEVECTOR_QUBIT_CAP = 14
MARKOV_DIM_CAP = 3**10

# spawn-key prefixes keep circuit streams and Haar-reference streams disjoint
CIRCUIT_STREAM = 0
HAAR_STREAM = 1


class Topology(str, enum.Enum):
    LINEAR = "linear"
    RING = "ring"
    STAR = "star"
    FULL = "full"

    @classmethod
    def parse(cls, value: Union[str, "Topology"]) -> "Topology":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(t.value for t in cls)
            raise ConfigError(f"unknown topology {value!r} (expected one of {choices})") from None


@dataclass(frozen=True)
class LinkSet:
    """Inter-core links of an architecture, sorted lexicographically."""

    kind: Topology
    n_cores: int
    links: tuple[tuple[int, int], ...]

    @property
    def n_links(self) -> int:
        return len(self.links)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.links)


def build_topology(kind: Union[str, Topology], n_cores: int) -> LinkSet:
    """Return the canonical link set for ``kind`` on ``n_cores`` cores.

    Links are pairs ``(a, b)`` with ``a < b`` in ascending lexicographic
    order. The star hub is core 0. A ring needs at least three cores, since
    on two cores the closing link would duplicate ``(0, 1)``.
    """
    kind = Topology.parse(kind)
    n_cores = int(n_cores)
    if n_cores < 2:
        raise InvalidCoreCount(f"{kind.value} topology needs at least 2 cores, got {n_cores}")
    if kind is Topology.RING and n_cores < 3:
        raise InvalidCoreCount(
            "ring topology needs at least 3 cores: with 2 cores the closing "
            "link (0, 1) duplicates the linear link"
        )
    if kind is Topology.LINEAR:
        links = [(i, i + 1) for i in range(n_cores - 1)]
    elif kind is Topology.RING:
        links = [(i, i + 1) for i in range(n_cores - 1)] + [(0, n_cores - 1)]
    elif kind is Topology.STAR:
        links = [(0, i) for i in range(1, n_cores)]
    else:
        links = list(itertools.combinations(range(n_cores), 2))
    return LinkSet(kind, n_cores, tuple(sorted(links)))


@dataclass(frozen=True)
class CircuitConfig:
    """Full parametrization of one architecture and its circuit ensemble."""

    n_cores: int
    n_qubits_per_core: int
    topology: Topology
    intracore_steps: int = 1
    n_layers: int = 1
    p_single: float = 0.5
    c_rand: float = 1 / 3
    master_seed: int = 0
    ensemble_size: int = 5000
    links: LinkSet = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "topology", Topology.parse(self.topology))
        for name in ("n_cores", "n_qubits_per_core", "intracore_steps", "n_layers",
                     "master_seed", "ensemble_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("p_single", "c_rand"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.n_qubits_per_core < 1:
            raise ConfigError("n_qubits_per_core must be >= 1")
        if self.intracore_steps < 0:
            raise ConfigError("intracore_steps must be >= 0")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if not 0.0 <= self.p_single <= 1.0:
            raise ConfigError(f"p_single must lie in [0, 1], got {self.p_single}")
        if not -1.0 <= self.c_rand <= 1.0:
            raise ConfigError(f"c_rand must lie in [-1, 1], got {self.c_rand}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if self.n_qubits_per_core == 1 and self.p_single < 1.0 and self.intracore_steps > 0:
            raise DegenerateCore("two-qubit intracore gates need n_qubits_per_core >= 2")
        object.__setattr__(self, "links", build_topology(self.topology, self.n_cores))

    @property
    def n_qubits(self) -> int:
        return self.n_cores * self.n_qubits_per_core

    @property
    def n_links(self) -> int:
        return self.links.n_links

    def with_steps(self, intracore_steps: int) -> "CircuitConfig":
        return replace(self, intracore_steps=intracore_steps)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.init}
        out["topology"] = self.topology.value
        return out


CONFIG_KEYS = tuple(f.name for f in fields(CircuitConfig) if f.init)
_INT_KEYS = {"n_cores", "n_qubits_per_core", "intracore_steps", "n_layers",
             "master_seed", "ensemble_size"}


def parse_config_value(key: str, raw: str):
    """Coerce a textual config value; fractions such as ``1/3`` are accepted."""
    raw = raw.strip()
    if key not in CONFIG_KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        if key == "topology":
            return Topology.parse(raw)
        if key in _INT_KEYS:
            return int(raw, 0)
        return float(Fraction(raw))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def read_config_file(path: Union[str, Path]) -> dict:
    """Read a flat ``key = value`` file. Blank lines and ``#`` comments are skipped."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = parse_config_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def depth_per_layer(config: CircuitConfig) -> int:
    """Number of gates in one layer: ``n_cores * I + n_links``."""
    return config.n_cores * config.intracore_steps + config.n_links


# -- gate events -----------------------------------------------------------

@dataclass(frozen=True)
class SingleQubit:
    qubit: int
    angles: tuple[float, float, float]


@dataclass(frozen=True)
class IntraCZ:
    q1: int
    q2: int


@dataclass(frozen=True)
class InterCZ:
    control: int
    target: int


GateEvent = Union[SingleQubit, IntraCZ, InterCZ]


def stream(master_seed: int, index: int, kind: int = CIRCUIT_STREAM) -> np.random.Generator:
    """Independent generator for stream ``index`` under ``master_seed``.

    The mix is numpy's ``SeedSequence`` hash of ``(master_seed, spawn_key)``
    with ``spawn_key = (kind, index)``; it depends only on these integers, so
    any subset of circuits can be regenerated in any order.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(kind), int(index)))
    return np.random.Generator(np.random.PCG64(seq))


def haar_angles(rng: np.random.Generator) -> tuple[float, float, float]:
    """ZYZ Euler angles ``(theta, phi, lam)`` of a Haar-random single-qubit rotation.

    The Haar density in these coordinates is proportional to ``sin(theta)``,
    so ``cos(theta)`` is uniform on [-1, 1] and both phases are uniform.
    """
    theta = math.acos(1.0 - 2.0 * rng.random())
    phi, lam = rng.random(2) * (2.0 * math.pi)
    return (theta, float(phi), float(lam))


def sample_intracore_gate(
    rng: np.random.Generator, n_qubits_per_core: int, p_single: float, core_index: int
) -> GateEvent:
    """Draw one intracore gate on core ``core_index``.

    With probability ``p_single`` a Haar rotation on a uniformly chosen qubit,
    otherwise a CZ on one of the ``Nq (Nq - 1)`` ordered pairs, uniformly.
    """
    nq = n_qubits_per_core
    if nq == 1 and p_single < 1.0:
        raise DegenerateCore("a single-qubit core has no pair for a two-qubit gate")
    offset = core_index * nq
    if rng.random() < p_single:
        q = int(rng.integers(nq))
        return SingleQubit(offset + q, haar_angles(rng))
    k = int(rng.integers(nq * (nq - 1)))
    i, j = divmod(k, nq - 1)
    if j >= i:
        j += 1
    return IntraCZ(offset + i, offset + j)


def sample_intercore_gate(
    rng: np.random.Generator, link: tuple[int, int], n_qubits_per_core: int
) -> InterCZ:
    """Draw the CZ for one link, uniform over the ``2 Nq^2`` placements.

    A placement is (which core holds the control, control qubit, target qubit).
    """
    alpha, beta = link
    nq = n_qubits_per_core
    k = int(rng.integers(2 * nq * nq))
    flipped, rest = divmod(k, nq * nq)
    q_alpha, q_beta = divmod(rest, nq)
    a = alpha * nq + q_alpha
    b = beta * nq + q_beta
    return InterCZ(b, a) if flipped else InterCZ(a, b)


def sample_circuit(config: CircuitConfig, circuit_index: int) -> tuple[GateEvent, ...]:
    """Sampled gate list for circuit ``circuit_index`` of the ensemble.

    Per layer: ``I`` events for each core in ascending core order, then one
    inter-core CZ per link in canonical link order.
    """
    rng = stream(config.master_seed, circuit_index)
    nq = config.n_qubits_per_core
    events: list[GateEvent] = []
    for _ in range(config.n_layers):
        for core in range(config.n_cores):
            for _ in range(config.intracore_steps):
                events.append(sample_intracore_gate(rng, nq, config.p_single, core))
        for link in config.links:
            events.append(sample_intercore_gate(rng, link, nq))
    return tuple(events)
