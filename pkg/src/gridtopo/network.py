"""Power-network data model and the versioned JSON file format.

A network is a set of buses (inertia, damping, one reference) and a set of
undirected lines (positive susceptance, status ``existing`` or ``candidate``).
The JSON schema is deliberately small::

    {
      "schema": 1,
      "buses": [{"id": 0, "inertia": 1.0, "damping": 0.025, "is_reference": true}, ...],
      "lines": [{"from": 0, "to": 1, "susceptance": 2.5, "status": "existing"}, ...],
      "metric": {"preset": "coherence"}                    # or explicit weights
      "defaults": {"d": 0.025, "M_default": 1e-4}          # optional
    }

An explicit metric carries coherence-graph edge weights and a frequency
weight diagonal::

    "metric": {"w": [[0, 1, 0.5], [1, 2, 1.0]], "s": [0.0, 0.0, 1.0]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

SCHEMA_VERSION = 1

EXISTING = "existing"
CANDIDATE = "candidate"


class InvalidNetworkError(ValueError):
    """Raised when a network file or in-memory network violates the schema."""


@dataclass(frozen=True)
class Bus:
    id: int
    inertia: float
    damping: float
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    status: str = EXISTING

    @property
    def pair(self) -> tuple[int, int]:
        """Unordered endpoints, normalized low-high."""
        i, j = self.from_bus, self.to_bus
        return (i, j) if i < j else (j, i)

    @property
    def is_existing(self) -> bool:
        return self.status == EXISTING


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    metric: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_network(self)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def reference(self) -> int:
        return next(b.id for b in self.buses if b.is_reference)

    @property
    def inertias(self) -> list[float]:
        return [b.inertia for b in sorted(self.buses, key=lambda b: b.id)]

    @property
    def dampings(self) -> list[float]:
        return [b.damping for b in sorted(self.buses, key=lambda b: b.id)]

    @property
    def existing_lines(self) -> tuple[Line, ...]:
        return tuple(l for l in self.lines if l.is_existing)

    @property
    def candidate_lines(self) -> tuple[Line, ...]:
        return tuple(l for l in self.lines if not l.is_existing)


def validate_network(net: PowerNetwork) -> None:
    ids = sorted(b.id for b in net.buses)
    if not net.buses:
        raise InvalidNetworkError("network has no buses")
    if ids != list(range(len(ids))):
        raise InvalidNetworkError(f"bus ids must be contiguous from 0, got {ids}")
    refs = [b.id for b in net.buses if b.is_reference]
    if len(refs) != 1:
        raise InvalidNetworkError(f"exactly one reference bus required, got {len(refs)}")
    for b in net.buses:
        if b.inertia <= 0:
            raise InvalidNetworkError(f"bus {b.id}: inertia must be strictly positive")
        if b.damping <= 0:
            raise InvalidNetworkError(f"bus {b.id}: damping must be strictly positive")
    seen: set[tuple[int, int]] = set()
    for l in net.lines:
        if l.from_bus == l.to_bus:
            raise InvalidNetworkError(f"line {l.from_bus}-{l.to_bus}: self-loop")
        if not (0 <= l.from_bus < net.n_buses and 0 <= l.to_bus < net.n_buses):
            raise InvalidNetworkError(f"line {l.from_bus}-{l.to_bus}: unknown bus id")
        if l.susceptance <= 0:
            raise InvalidNetworkError(
                f"line {l.from_bus}-{l.to_bus}: susceptance must be positive"
            )
        if l.status not in (EXISTING, CANDIDATE):
            raise InvalidNetworkError(f"line {l.from_bus}-{l.to_bus}: bad status {l.status!r}")
        if l.pair in seen:
            raise InvalidNetworkError(f"duplicate line {l.pair}")
        seen.add(l.pair)


def network_from_dict(doc: dict) -> PowerNetwork:
    if not isinstance(doc, dict):
        raise InvalidNetworkError("network document must be a JSON object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise InvalidNetworkError(
            f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA_VERSION}"
        )
    defaults = doc.get("defaults", {})
    d_default = defaults.get("d", 0.025)
    m_default = defaults.get("M_default", 1.0)
    try:
        buses = tuple(
            Bus(
                id=int(b["id"]),
                inertia=float(b.get("inertia", m_default)),
                damping=float(b.get("damping", d_default)),
                is_reference=bool(b.get("is_reference", False)),
            )
            for b in doc["buses"]
        )
        lines = tuple(
            Line(
                from_bus=int(l["from"]),
                to_bus=int(l["to"]),
                susceptance=float(l["susceptance"]),
                status=str(l.get("status", EXISTING)),
            )
            for l in doc["lines"]
        )
    except (KeyError, TypeError) as exc:
        raise InvalidNetworkError(f"malformed network document: {exc}") from exc
    return PowerNetwork(buses=buses, lines=lines, metric=doc.get("metric", {}))


def network_to_dict(net: PowerNetwork) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "buses": [
            {
                "id": b.id,
                "inertia": b.inertia,
                "damping": b.damping,
                "is_reference": b.is_reference,
            }
            for b in sorted(net.buses, key=lambda b: b.id)
        ],
        "lines": [
            {
                "from": l.from_bus,
                "to": l.to_bus,
                "susceptance": l.susceptance,
                "status": l.status,
            }
            for l in net.lines
        ],
        "metric": net.metric,
    }


def load_network(path: str | Path) -> PowerNetwork:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidNetworkError(f"{path}: not valid JSON ({exc})") from exc
    return network_from_dict(doc)


def save_network(net: PowerNetwork, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh, indent=2)
        fh.write("\n")


def with_lines_energized(net: PowerNetwork, pairs: Iterable[tuple[int, int]]) -> PowerNetwork:
    """Copy of the network with the given candidate pairs flipped to existing."""
    wanted = {tuple(sorted(p)) for p in pairs}
    unknown = wanted - {l.pair for l in net.lines}
    if unknown:
        raise InvalidNetworkError(f"cannot energize unknown lines: {sorted(unknown)}")
    lines = tuple(
        Line(l.from_bus, l.to_bus, l.susceptance, EXISTING) if l.pair in wanted else l
        for l in net.lines
    )
    return PowerNetwork(buses=net.buses, lines=lines, metric=net.metric)
