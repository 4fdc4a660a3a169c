"""IEEE 39-bus (New England) benchmark fixture.

Converter stub from MATPOWER-style branch/machine data to the network JSON
schema. Line susceptances are the reciprocal series reactances (per unit);
generator buses carry classic inertia constants converted to per-unit
seconds-squared, every other bus a small synthetic inertia, and damping is
uniform. Ten fixed candidate lines (seeded draw over non-adjacent pairs of
load-level buses) are included for augmentation studies.

Bus ids are shifted to 0-based: MATPOWER bus k becomes id k-1.
"""

from __future__ import annotations

import importlib.resources as resources
import math

from .network import (
    CANDIDATE,
    EXISTING,
    Bus,
    Line,
    PowerNetwork,
    network_from_dict,
    network_to_dict,
)

# (from, to, series reactance x) in MATPOWER numbering
BRANCHES = [
    (1, 2, 0.0411), (1, 39, 0.0250), (2, 3, 0.0151), (2, 25, 0.0086),
    (2, 30, 0.0181), (3, 4, 0.0213), (3, 18, 0.0133), (4, 5, 0.0128),
    (4, 14, 0.0129), (5, 6, 0.0026), (5, 8, 0.0112), (6, 7, 0.0092),
    (6, 11, 0.0082), (6, 31, 0.0250), (7, 8, 0.0046), (8, 9, 0.0363),
    (9, 39, 0.0250), (10, 11, 0.0043), (10, 13, 0.0043), (10, 32, 0.0200),
    (12, 11, 0.0435), (12, 13, 0.0435), (13, 14, 0.0101), (14, 15, 0.0217),
    (15, 16, 0.0094), (16, 17, 0.0089), (16, 19, 0.0195), (16, 21, 0.0135),
    (16, 24, 0.0059), (17, 18, 0.0082), (17, 27, 0.0173), (19, 20, 0.0138),
    (19, 33, 0.0142), (20, 34, 0.0180), (21, 22, 0.0140), (22, 23, 0.0096),
    (22, 35, 0.0143), (23, 24, 0.0350), (23, 36, 0.0272), (25, 26, 0.0323),
    (25, 37, 0.0232), (26, 27, 0.0147), (26, 28, 0.0474), (26, 29, 0.0625),
    (28, 29, 0.0151), (29, 38, 0.0156),
]

# classic New England machine inertia constants H (s, 100 MVA base)
GENERATOR_H = {
    30: 42.0, 31: 30.3, 32: 35.8, 33: 28.6, 34: 26.0,
    35: 34.8, 36: 26.4, 37: 24.3, 38: 34.5, 39: 500.0,
}

# fixed candidate additions, seeded draw over non-adjacent pairs of buses 1..29
CANDIDATE_PAIRS = [
    (2, 27), (4, 15), (5, 21), (5, 22), (8, 29),
    (9, 23), (10, 24), (14, 29), (16, 18), (22, 27),
]
CANDIDATE_REACTANCE = 0.0250

N_BUSES = 39
DAMPING = 0.025
NON_GENERATOR_INERTIA = 1e-4
OMEGA_SYNC = 2.0 * math.pi * 60.0

# 20-bus radial-design subnetwork: connected, with bus 31 as the unique
# degree-one bus (used as the radial reference)
SUBNET_BUSES = tuple(range(1, 19)) + (31, 39)
SUBNET_REFERENCE = 31


def build_network() -> PowerNetwork:
    """The full benchmark as a PowerNetwork (reference at bus id 0)."""
    buses = []
    for k in range(1, N_BUSES + 1):
        if k in GENERATOR_H:
            inertia = 2.0 * GENERATOR_H[k] / OMEGA_SYNC
        else:
            inertia = NON_GENERATOR_INERTIA
        buses.append(Bus(id=k - 1, inertia=inertia, damping=DAMPING, is_reference=(k == 1)))
    lines = [
        Line(f - 1, t - 1, 1.0 / x, EXISTING) for f, t, x in BRANCHES
    ] + [
        Line(f - 1, t - 1, 1.0 / CANDIDATE_REACTANCE, CANDIDATE)
        for f, t in CANDIDATE_PAIRS
    ]
    return PowerNetwork(
        buses=tuple(buses), lines=tuple(lines), metric={"preset": "coherence"}
    )


def fixture_dict() -> dict:
    doc = network_to_dict(build_network())
    doc["defaults"] = {"d": DAMPING, "M_default": NON_GENERATOR_INERTIA}
    return doc


def load_ieee39() -> PowerNetwork:
    """The packaged JSON fixture (identical content to ``build_network``)."""
    path = resources.files("gridtopo").joinpath("data/ieee39.json")
    with resources.as_file(path) as p:
        import json

        with open(p) as fh:
            return network_from_dict(json.load(fh))


def radial_subnetwork(
    bus_ids: tuple[int, ...] = SUBNET_BUSES, reference: int = SUBNET_REFERENCE
) -> PowerNetwork:
    """Induced subnetwork (MATPOWER bus ids) with all lines as candidates.

    Used for radial design experiments: buses are re-indexed contiguously and
    ``reference`` marks the reference bus in the new numbering.
    """
    net = build_network()
    keep = sorted(b - 1 for b in bus_ids)
    remap = {old: new for new, old in enumerate(keep)}
    ref_old = reference - 1
    if ref_old not in remap:
        raise ValueError(f"reference bus {reference} not in subnetwork")
    buses = tuple(
        Bus(
            id=remap[b.id],
            inertia=b.inertia,
            damping=b.damping,
            is_reference=(b.id == ref_old),
        )
        for b in net.buses
        if b.id in remap
    )
    lines = tuple(
        Line(remap[l.from_bus], remap[l.to_bus], l.susceptance, CANDIDATE)
        for l in net.existing_lines
        if l.from_bus in remap and l.to_bus in remap
    )
    return PowerNetwork(
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        lines=lines,
        metric={"preset": "coherence"},
    )
