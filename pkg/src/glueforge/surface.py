"""Marked-surface backend contract: exact torus or declared finite graph.

A BackendHandle names the curve-graph model a boundary component lives on.
The torus backend delegates to the exact Farey machinery; the finite-graph
backend runs on BFS tables plus declared data (named markings and, when
supplied, a table of subsurface-projection values).  Graph backends carry
no Teichmuller structure, so geometric consumers must check the kind and
degrade honestly.

Operations never mix backends: every binary operation insists the handles
are equal and raises BackendMismatchError otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BackendMismatchError, ParseError, ValidationError
from .hypgraph import DistanceTable, FiniteGraph, all_pairs_distances
from .torus import (
    AnnulusLabel,
    FareyMarking,
    Slope,
    SurfaceMap,
    farey_distance,
    farey_geodesic,
    parse_slope,
)
from . import torus as _torus

__all__ = [
    "BackendHandle",
    "AbstractMarking",
    "DiskSet",
    "GraphProjection",
    "ProjectionResult",
    "marking_distance",
    "marking_diameter",
    "sup_projection",
    "disk_distance",
    "pushforward",
    "curve_distance",
    "geodesic_between",
    "marking_to_path_distance",
    "as_torus_marking",
]

TORUS = "torus"
GRAPH = "graph"


@dataclass(frozen=True)
class GraphProjection:
    """Declared subsurface-projection value for one unordered marking pair."""

    a: tuple[int, ...]
    b: tuple[int, ...]
    label: str
    value: int

    def matches(self, x: tuple[int, ...], y: tuple[int, ...]) -> bool:
        return {self.a, self.b} == {x, y}


@lru_cache(maxsize=None)
def _graph_table(graph: FiniteGraph) -> DistanceTable:
    return all_pairs_distances(graph)


@dataclass(frozen=True)
class BackendHandle:
    """Curve-graph model for one boundary component."""

    kind: str
    graph: FiniteGraph | None = None
    markings: tuple[tuple[str, tuple[int, ...]], ...] = ()
    projections: tuple[GraphProjection, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (TORUS, GRAPH):
            raise ValidationError(f"unknown backend kind {self.kind!r}")
        if self.kind == TORUS:
            if self.graph is not None or self.markings or self.projections:
                raise ValidationError("torus backend takes no graph data")
        elif self.graph is None:
            raise ValidationError("graph backend needs a FiniteGraph")

    @staticmethod
    def torus() -> "BackendHandle":
        return BackendHandle(TORUS)

    @staticmethod
    def finite_graph(
        graph: FiniteGraph,
        markings: Mapping[str, Iterable[int]] | None = None,
        projections: Iterable[GraphProjection] = (),
    ) -> "BackendHandle":
        named = tuple(
            sorted((name, tuple(vs)) for name, vs in (markings or {}).items())
        )
        return BackendHandle(GRAPH, graph, named, tuple(projections))

    @property
    def is_torus(self) -> bool:
        return self.kind == TORUS

    def table(self) -> DistanceTable:
        if self.graph is None:
            raise BackendMismatchError("torus backend has no distance table")
        return _graph_table(self.graph)

    def named_marking(self, name: str) -> "AbstractMarking":
        for key, payload in self.markings:
            if key == name:
                return AbstractMarking(self, payload)
        raise ValidationError(f"backend declares no marking named {name!r}")

    def to_json(self) -> dict:
        if self.is_torus:
            return {"kind": TORUS}
        assert self.graph is not None
        out: dict = {
            "kind": GRAPH,
            "n": self.graph.vertex_count,
            "edges": sorted([u, v] for u, v in self.graph.edges),
        }
        if self.markings:
            out["markings"] = {name: list(vs) for name, vs in self.markings}
        if self.projections:
            out["projections"] = [
                {"a": list(e.a), "b": list(e.b), "label": e.label, "value": e.value}
                for e in self.projections
            ]
        return out

    @staticmethod
    def from_json(obj: object) -> "BackendHandle":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ParseError("backend declaration must be an object with a kind")
        kind = obj["kind"]
        if kind == TORUS:
            return BackendHandle.torus()
        if kind != GRAPH:
            raise ParseError(f"unknown backend kind {kind!r}")
        try:
            graph = FiniteGraph.from_edges(
                int(obj["n"]), [(int(u), int(v)) for u, v in obj.get("edges", [])]
            )
            markings = {
                str(name): [int(v) for v in vs]
                for name, vs in obj.get("markings", {}).items()
            }
            projections = [
                GraphProjection(
                    tuple(int(v) for v in e["a"]),
                    tuple(int(v) for v in e["b"]),
                    str(e["label"]),
                    int(e["value"]),
                )
                for e in obj.get("projections", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad graph backend declaration: {exc}") from exc
        return BackendHandle.finite_graph(graph, markings, projections)


def _require_same(a: BackendHandle, b: BackendHandle) -> None:
    if a != b:
        raise BackendMismatchError(
            f"operands live on different backends ({a.kind} vs {b.kind})"
        )


@dataclass(frozen=True)
class AbstractMarking:
    """Marking on a backend: a FareyMarking, or a small vertex set of
    curve-graph diameter at most 2."""

    handle: BackendHandle
    payload: FareyMarking | tuple[int, ...]

    def __post_init__(self) -> None:
        if self.handle.is_torus:
            if not isinstance(self.payload, FareyMarking):
                raise ValidationError("torus marking payload must be a FareyMarking")
            return
        if isinstance(self.payload, FareyMarking) or not isinstance(self.payload, tuple):
            raise ValidationError("graph marking payload must be a vertex tuple")
        verts = self.payload
        if not verts:
            raise ValidationError("graph marking needs at least one vertex")
        table = self.handle.table()
        n = table.n
        for v in verts:
            if not isinstance(v, int) or not 0 <= v < n:
                raise ValidationError(f"marking vertex {v} outside the graph")
        if len(set(verts)) != len(verts):
            raise ValidationError("graph marking repeats a vertex")
        object.__setattr__(self, "payload", tuple(sorted(verts)))
        diam = max(table.d(u, v) for u in verts for v in verts)
        if diam > 2:
            raise ValidationError(f"marking diameter {diam} exceeds 2")

    def elements(self) -> tuple:
        if isinstance(self.payload, FareyMarking):
            return self.payload.slopes()
        return self.payload

    def __str__(self) -> str:
        if isinstance(self.payload, FareyMarking):
            return str(self.payload)
        return "{" + ",".join(str(v) for v in self.payload) + "}"

    def to_json(self) -> dict:
        if isinstance(self.payload, FareyMarking):
            return {
                "base": str(self.payload.base),
                "transversal": str(self.payload.transversal),
            }
        return {"vertices": list(self.payload)}

    @staticmethod
    def from_json(handle: BackendHandle, obj: object) -> "AbstractMarking":
        if not isinstance(obj, dict):
            raise ParseError("marking must be an object")
        if handle.is_torus:
            if "base" not in obj or "transversal" not in obj:
                raise ParseError("torus marking needs base and transversal")
            try:
                payload = FareyMarking(
                    parse_slope(str(obj["base"])), parse_slope(str(obj["transversal"]))
                )
            except ValidationError as exc:
                raise ParseError(f"bad torus marking: {exc}") from exc
            return AbstractMarking(handle, payload)
        if "name" in obj:
            return handle.named_marking(str(obj["name"]))
        if "vertices" not in obj:
            raise ParseError("graph marking needs vertices or a declared name")
        try:
            verts = tuple(int(v) for v in obj["vertices"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad graph marking: {exc}") from exc
        return AbstractMarking(handle, verts)


@dataclass(frozen=True)
class DiskSet:
    """Declared meridian list for a compressible boundary; possibly empty.
    The owner string names the boundary in diagnostics."""

    handle: BackendHandle
    elements: tuple
    owner: str = ""

    def __post_init__(self) -> None:
        if self.handle.is_torus:
            for e in self.elements:
                if not isinstance(e, Slope):
                    raise ValidationError("torus disk set elements must be slopes")
        else:
            n = self.handle.table().n
            for e in self.elements:
                if not isinstance(e, int) or not 0 <= e < n:
                    raise ValidationError(f"disk vertex {e} outside the graph")

    @property
    def is_empty(self) -> bool:
        return not self.elements

    def to_json(self) -> list:
        if self.handle.is_torus:
            return [str(s) for s in self.elements]
        return list(self.elements)

    @staticmethod
    def from_json(handle: BackendHandle, obj: object, owner: str = "") -> "DiskSet":
        if not isinstance(obj, list):
            raise ParseError("disk set must be a list")
        if handle.is_torus:
            return DiskSet(handle, tuple(parse_slope(str(s)) for s in obj), owner)
        return DiskSet(handle, tuple(int(v) for v in obj), owner)


@dataclass(frozen=True)
class ProjectionResult:
    """Certified or best-effort subsurface-projection maximum."""

    label: object
    value: int
    certified: bool
    unmodeled: bool = False

    def to_dict(self) -> dict:
        return {
            "label": str(self.label),
            "value": self.value,
            "certified": self.certified,
            "unmodeled": self.unmodeled,
        }


def curve_distance(handle: BackendHandle, a: object, b: object) -> int:
    """Curve-graph distance between two vertices of the backend."""
    if handle.is_torus:
        if not isinstance(a, Slope) or not isinstance(b, Slope):
            raise ValidationError("torus curve vertices are slopes")
        return farey_distance(a, b)
    return handle.table().d(a, b)  # type: ignore[arg-type]


def marking_distance(m1: AbstractMarking, m2: AbstractMarking) -> int:
    """Min over element pairs of the curve-graph distance."""
    _require_same(m1.handle, m2.handle)
    return min(
        curve_distance(m1.handle, x, y) for x in m1.elements() for y in m2.elements()
    )


def marking_diameter(*markings: AbstractMarking) -> int:
    """Max pairwise curve-graph distance over all elements."""
    if not markings:
        raise ValidationError("diameter of nothing")
    handle = markings[0].handle
    elems: list = []
    for m in markings:
        _require_same(handle, m.handle)
        elems.extend(m.elements())
    return max(
        (
            curve_distance(handle, elems[i], elems[j])
            for i in range(len(elems))
            for j in range(i + 1, len(elems))
        ),
        default=0,
    )


def sup_projection(
    m1: AbstractMarking,
    m2: AbstractMarking,
    denom_bound: int | None = None,
) -> ProjectionResult:
    """Maximal subsurface projection between two markings.

    Torus: exact pivot search, plus a denominator-bounded certifying sweep
    when a bound is passed.  Graph: declared lookup table; without an entry
    the value is 0 and the result is flagged unmodeled.
    """
    _require_same(m1.handle, m2.handle)
    if m1.handle.is_torus:
        assert isinstance(m1.payload, FareyMarking) and isinstance(m2.payload, FareyMarking)
        label, value = _torus.max_subsurface_projection(
            m1.payload, m2.payload, denom_bound=denom_bound
        )
        return ProjectionResult(label, value, certified=denom_bound is not None)
    a, b = m1.payload, m2.payload
    hits = [e for e in m1.handle.projections if e.matches(a, b)]  # type: ignore[arg-type]
    if not hits:
        return ProjectionResult("", 0, certified=False, unmodeled=True)
    best = max(hits, key=lambda e: (e.value, e.label))
    return ProjectionResult(best.label, best.value, certified=True)


def disk_distance(m: AbstractMarking, disks: DiskSet) -> int:
    """Min curve-graph distance from the marking to the declared disk set."""
    _require_same(m.handle, disks.handle)
    if disks.is_empty:
        name = disks.owner or "<unnamed>"
        raise ValidationError(f"empty disk set on boundary {name}")
    return min(
        curve_distance(m.handle, d, x) for d in disks.elements for x in m.elements()
    )


def _graph_permutation(handle: BackendHandle, descriptor: object) -> list[int]:
    n = handle.table().n
    if isinstance(descriptor, Mapping):
        perm = [descriptor.get(v, -1) for v in range(n)]
    elif isinstance(descriptor, Sequence) and not isinstance(descriptor, (str, bytes)):
        perm = [int(v) for v in descriptor]
    else:
        raise ValidationError("graph map descriptor must be a permutation")
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise ValidationError("graph map descriptor is not a vertex bijection")
    m = handle.table().as_array()
    if not np.array_equal(m[np.ix_(perm, perm)], m):
        raise ValidationError("graph map descriptor is not distance preserving")
    return perm


def pushforward(descriptor: object, m: AbstractMarking) -> AbstractMarking:
    """Image marking under a backend map: a SurfaceMap on the torus, a
    distance-preserving vertex bijection on a graph."""
    if m.handle.is_torus:
        if not isinstance(descriptor, SurfaceMap):
            raise ValidationError("torus pushforward needs a SurfaceMap")
        assert isinstance(m.payload, FareyMarking)
        return AbstractMarking(m.handle, descriptor.on_marking(m.payload))
    perm = _graph_permutation(m.handle, descriptor)
    return AbstractMarking(m.handle, tuple(perm[v] for v in m.payload))


def _graph_geodesic(table: DistanceTable, graph: FiniteGraph, a: int, b: int) -> list[int]:
    # deterministic: at every step pick the smallest-index neighbour
    # that moves closer to the target
    adj = graph.adjacency()
    path = [a]
    cur = a
    while cur != b:
        cur = min(w for w in adj[cur] if table.d(w, b) == table.d(cur, b) - 1)
        path.append(cur)
    return path


def geodesic_between(m1: AbstractMarking, m2: AbstractMarking) -> list:
    """Deterministic curve-graph geodesic between representatives of the
    two markings: base-to-base on the torus, closest-pair on a graph."""
    _require_same(m1.handle, m2.handle)
    if m1.handle.is_torus:
        assert isinstance(m1.payload, FareyMarking) and isinstance(m2.payload, FareyMarking)
        return farey_geodesic(m1.payload.base, m2.payload.base)
    table = m1.handle.table()
    best = min(
        ((table.d(x, y), x, y) for x in m1.payload for y in m2.payload),
    )
    _, x, y = best
    assert m1.handle.graph is not None
    return _graph_geodesic(table, m1.handle.graph, x, y)


def marking_to_path_distance(m: AbstractMarking, path: Sequence) -> int:
    """Min curve-graph distance from any marking element to any path vertex."""
    if not path:
        raise ValidationError("empty path")
    return min(
        curve_distance(m.handle, x, v) for x in m.elements() for v in path
    )


def as_torus_marking(m: AbstractMarking) -> FareyMarking:
    """Unwrap the exact payload; graph backends have none."""
    if not isinstance(m.payload, FareyMarking):
        raise BackendMismatchError("operation needs the torus backend")
    return m.payload
