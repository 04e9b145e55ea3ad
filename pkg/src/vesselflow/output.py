"""Probe records, record sinks, and CSV output.

Each probe observes one grid station of one vessel (quantities P, Q,
A, R, V) or one node (P_C1, P_C2, Q_C on transitional nodes, P_junc on
branching nodes). The solver emits one record per probe quantity per
completed step; rows are ordered by time, then probe declaration order,
then quantity declaration order, and values are formatted with repr so
two identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .constitutive import PrimitiveState, coefficients
from .errors import ConfigError
from .network import Branching, Network, Transitional

CSV_HEADER = ("t", "kind", "id", "x", "quantity", "value")

VESSEL_QUANTITIES = ("P", "Q", "A", "R", "V")
NODE_QUANTITIES = ("P_C1", "P_C2", "Q_C", "P_junc")


@dataclass(frozen=True)
class ProbeSpec:
    """One observation point. Set vessel= with x_index or x_fraction,
    or node= for node-internal quantities."""

    quantities: tuple[str, ...]
    vessel: str | None = None
    node: str | None = None
    x_index: int | None = None
    x_fraction: float | None = None

    def __post_init__(self):
        if (self.vessel is None) == (self.node is None):
            raise ConfigError("probe needs exactly one of vessel= or node=")
        if self.vessel is not None:
            if (self.x_index is None) == (self.x_fraction is None):
                raise ConfigError("vessel probe needs exactly one of x_index or x_fraction")
            bad = [q for q in self.quantities if q not in VESSEL_QUANTITIES]
        else:
            bad = [q for q in self.quantities if q not in NODE_QUANTITIES]
        if bad:
            raise ConfigError(f"unknown probe quantities {bad}")
        if not self.quantities:
            raise ConfigError("probe needs at least one quantity")


@dataclass(frozen=True)
class ProbeRecord:
    t: float
    kind: str  # "vessel" | "node"
    id: str
    x: float | None
    quantity: str
    value: float


class ListSink:
    """Collects records in memory; handy for tests and experiments."""

    def __init__(self):
        self.records: list[ProbeRecord] = []

    def emit(self, rec: ProbeRecord) -> None:
        self.records.append(rec)


class CsvSink:
    """Streams records to a CSV file with the standard header."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(CSV_HEADER)

    def emit(self, rec: ProbeRecord) -> None:
        self._writer.writerow(_format_row(rec))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _format_row(rec: ProbeRecord):
    return (
        repr(float(rec.t)),
        rec.kind,
        rec.id,
        "" if rec.x is None else repr(float(rec.x)),
        rec.quantity,
        repr(float(rec.value)),
    )


def write_records(path, records: Iterable[ProbeRecord]) -> None:
    """Write records to a CSV file, header included."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(_format_row(rec))


def resolve_probe_index(probe: ProbeSpec, n_cells: int) -> int:
    if probe.x_index is not None:
        if not 0 <= probe.x_index <= n_cells:
            raise ConfigError(
                f"probe x_index {probe.x_index} out of range 0..{n_cells} for vessel {probe.vessel!r}"
            )
        return probe.x_index
    if not 0.0 <= probe.x_fraction <= 1.0:
        raise ConfigError(f"probe x_fraction {probe.x_fraction} must lie in [0, 1]")
    return int(round(probe.x_fraction * n_cells))


def validate_probes(net: Network, probes) -> None:
    for p in probes:
        if p.vessel is not None:
            if p.vessel not in net.vessels:
                raise ConfigError(f"probe references unknown vessel {p.vessel!r}")
            resolve_probe_index(p, net.vessels[p.vessel].n_cells)
        else:
            if p.node not in net.nodes:
                raise ConfigError(f"probe references unknown node {p.node!r}")
            node = net.nodes[p.node]
            for q in p.quantities:
                if q == "P_junc" and not isinstance(node, Branching):
                    raise ConfigError(f"P_junc probe needs a branching node, got {p.node!r}")
                if q in ("P_C1", "P_C2", "Q_C") and not isinstance(node, Transitional):
                    raise ConfigError(f"{q} probe needs a transitional node, got {p.node!r}")


def vessel_quantity(net: Network, state, vid: str, idx: int, quantity: str, epsilon0: float) -> float:
    """One derived quantity at a vessel grid station."""
    v = net.vessels[vid]
    f = state.fields[vid]
    P = float(f.P[idx])
    Q = float(f.Q[idx])
    if quantity == "P":
        return P
    if quantity == "Q":
        return Q
    x = float(v.grid[idx])
    cs = coefficients(v, x, state.t, PrimitiveState(P, Q), epsilon0=epsilon0)
    if quantity == "A":
        return float(cs.A)
    if quantity == "R":
        return float(np.sqrt(cs.A / np.pi))
    if quantity == "V":
        return Q / float(cs.A)
    raise ConfigError(f"unknown vessel quantity {quantity!r}")


def emit_probes(sink, net: Network, state, probes, epsilon0: float) -> None:
    """Emit one record per probe quantity for the current state."""
    for p in probes:
        if p.vessel is not None:
            idx = resolve_probe_index(p, net.vessels[p.vessel].n_cells)
            x = float(net.vessels[p.vessel].grid[idx])
            for q in p.quantities:
                sink.emit(
                    ProbeRecord(
                        t=state.t, kind="vessel", id=p.vessel, x=x, quantity=q,
                        value=vessel_quantity(net, state, p.vessel, idx, q, epsilon0),
                    )
                )
        else:
            node = net.nodes[p.node]
            for q in p.quantities:
                if q == "P_junc":
                    val = state.junction_pressures[p.node]
                elif q == "Q_C":
                    ts = state.transitional[p.node]
                    val = (ts.P_C1 - ts.P_C2) / node.R_C
                else:
                    ts = state.transitional[p.node]
                    val = ts.P_C1 if q == "P_C1" else ts.P_C2
                sink.emit(ProbeRecord(t=state.t, kind="node", id=p.node, x=None, quantity=q, value=val))


def emit_snapshot(sink, net: Network, state, epsilon0: float) -> None:
    """Emit the full field of every vessel (all stations, all vessel
    quantities) at the current time level."""
    for vid in sorted(net.vessels):
        v = net.vessels[vid]
        for idx in range(v.n_cells + 1):
            x = float(v.grid[idx])
            for q in VESSEL_QUANTITIES:
                sink.emit(
                    ProbeRecord(
                        t=state.t, kind="vessel", id=vid, x=x, quantity=q,
                        value=vessel_quantity(net, state, vid, idx, q, epsilon0),
                    )
                )
