"""Finite metric-graph laboratory: hyperbolicity, quasiconvexity, stability.

Everything is exact: distances are BFS integers, the four-point constant is
a half-integer Fraction, and quasiconvexity constants come from the interval
characterization (v lies on a geodesic from x to y iff d(x,v)+d(v,y)=d(x,y),
since concatenating geodesics through such a v realizes the distance).

The explicit geodesic enumerator is kept as a separate utility with a hard
cap; above the cap it degrades to a uniform sample and says so.

Quasigeodesic constants are plain ratios: K' is the max over sub-intervals
of (edge length)/(endpoint distance), so length <= K'*d holds exactly and
the additive-slack-1 form length <= K'*d + 1 holds a fortiori.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

__all__ = [
    "FiniteGraph",
    "DistanceTable",
    "PathWitness",
    "StabilityReport",
    "QuasigeodesicReport",
    "GeodesicFamily",
    "all_pairs_distances",
    "four_point_delta",
    "geodesic_interval",
    "quasiconvexity_constant",
    "count_geodesics",
    "enumerate_geodesics",
    "check_qconvex_stability",
    "local_to_global_report",
    "read_graph",
    "path_graph",
    "cycle_graph",
    "complete_graph",
]


@dataclass(frozen=True)
class FiniteGraph:
    """Simple connected graph on vertices 0..n-1."""

    vertex_count: int
    edges: frozenset[tuple[int, int]]

    @staticmethod
    def from_edges(n: int, pairs: Iterable[tuple[int, int]]) -> "FiniteGraph":
        if n <= 0:
            raise ValidationError("graph needs at least one vertex")
        norm = set()
        for u, v in pairs:
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u},{v}) out of range for {n} vertices")
            if u == v:
                raise ValidationError(f"self-loop at vertex {u}")
            e = (min(u, v), max(u, v))
            if e in norm:
                raise ValidationError(f"duplicate edge {e}")
            norm.add(e)
        g = FiniteGraph(n, frozenset(norm))
        adj = g.adjacency()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        if len(seen) != n:
            missing = min(set(range(n)) - seen)
            raise ValidationError(f"graph disconnected: no path from 0 to {missing}")
        return g

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for row in adj:
            row.sort()
        return adj


class DistanceTable:
    """All-pairs distances; the metric invariants are checkable on demand."""

    def __init__(self, matrix: np.ndarray):
        self._m = np.asarray(matrix, dtype=np.int64)

    @property
    def n(self) -> int:
        return self._m.shape[0]

    def d(self, u: int, v: int) -> int:
        return int(self._m[u, v])

    def __call__(self, u: int, v: int) -> int:
        return int(self._m[u, v])

    def as_array(self) -> np.ndarray:
        return self._m

    def submatrix(self, vertices: Sequence[int]) -> "DistanceTable":
        idx = list(vertices)
        return DistanceTable(self._m[np.ix_(idx, idx)])

    def check(self) -> None:
        m = self._m
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("distance table not square")
        if not np.array_equal(m, m.T):
            raise ValidationError("distance table not symmetric")
        if np.any(np.diag(m) != 0):
            raise ValidationError("distance table has nonzero diagonal")
        if np.any(m < 0):
            raise ValidationError("negative distance")
        for k in range(self.n):
            via = m[:, k][:, None] + m[k, :][None, :]
            if np.any(m > via):
                raise ValidationError("triangle inequality violated")


def all_pairs_distances(g: FiniteGraph) -> DistanceTable:
    """BFS from every vertex."""
    n = g.vertex_count
    adj = g.adjacency()
    out = np.full((n, n), -1, dtype=np.int64)
    for s in range(n):
        out[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if out[s, w] < 0:
                    out[s, w] = out[s, u] + 1
                    queue.append(w)
    return DistanceTable(out)


def four_point_delta(table: DistanceTable) -> Fraction:
    """Least delta such that for every vertex quadruple the two largest of
    the three pairing sums d(i,j)+d(k,l), d(i,k)+d(j,l), d(i,l)+d(j,k)
    differ by at most 2*delta.  Exhaustive; quadruples with repeats
    contribute gap 0, so scanning i<j against all (k,l) is complete."""
    m = table.as_array()
    n = table.n
    worst = 0
    for i in range(n):
        mi = m[i][:, None]
        for j in range(i + 1, n):
            s1 = m[i, j] + m
            s2 = mi + m[j][None, :]
            s3 = s2.T
            hi = np.maximum(s1, s2)
            lo = np.minimum(s1, s2)
            top = np.maximum(hi, s3)
            mid = np.maximum(lo, np.minimum(hi, s3))
            gap = int((top - mid).max())
            if gap > worst:
                worst = gap
    return Fraction(worst, 2)


def geodesic_interval(table: DistanceTable, x: int, y: int) -> list[int]:
    """Vertices lying on some geodesic from x to y."""
    m = table.as_array()
    return [v for v in range(table.n) if m[x, v] + m[v, y] == m[x, y]]


def quasiconvexity_constant(table: DistanceTable, subset: Sequence[int]) -> int:
    """Exact minimal a such that every geodesic between subset points stays
    in the a-neighbourhood of the subset.  Uses the interval
    characterization, which covers the union of all geodesics without
    enumerating them."""
    sub = sorted(set(subset))
    if not sub:
        raise ValidationError("quasiconvexity needs a nonempty subset")
    m = table.as_array()
    to_sub = np.min(m[:, sub], axis=1)
    best = 0
    for i, x in enumerate(sub):
        for y in sub[i:]:
            on = m[x, :] + m[:, y] == m[x, y]
            best = max(best, int(np.max(to_sub[on])))
    return best


@dataclass(frozen=True)
class GeodesicFamily:
    """Result of enumerate_geodesics: possibly a uniform sample."""

    paths: tuple[tuple[int, ...], ...]
    count: int
    sampled: bool


def _geodesic_successors(m: np.ndarray, adj: list[list[int]], x: int, y: int, v: int) -> list[int]:
    return [w for w in adj[v] if m[x, w] == m[x, v] + 1 and m[w, y] == m[v, y] - 1]


def count_geodesics(table: DistanceTable, g: FiniteGraph, x: int, y: int) -> int:
    """Number of geodesics from x to y, by dynamic programming over the
    predecessor DAG."""
    adj = g.adjacency()
    m = table.as_array()
    if x == y:
        return 1
    order = sorted(geodesic_interval(table, x, y), key=lambda v: m[x, v])
    ways = {x: 1}
    for v in order:
        if v == x:
            continue
        ways[v] = sum(
            ways.get(u, 0) for u in adj[v] if m[x, u] + 1 == m[x, v] and m[u, y] == m[v, y] + 1
        )
    return ways.get(y, 0)


def enumerate_geodesics(
    g: FiniteGraph,
    table: DistanceTable,
    x: int,
    y: int,
    cap: int = 10**6,
    sample_size: int = 1000,
    seed: int = 0,
) -> GeodesicFamily:
    """All geodesics from x to y via the predecessor DAG.

    When their number exceeds the cap, a sample (weighted by completion
    counts, so each geodesic is equally likely) is returned instead and
    the family is flagged sampled.
    """
    adj = g.adjacency()
    m = table.as_array()
    total = count_geodesics(table, g, x, y)
    if total <= cap:
        out: list[tuple[int, ...]] = []

        def walk(prefix: list[int]) -> None:
            v = prefix[-1]
            if v == y:
                out.append(tuple(prefix))
                return
            for w in _geodesic_successors(m, adj, x, y, v):
                walk(prefix + [w])

        walk([x])
        return GeodesicFamily(tuple(out), total, sampled=False)
    ways_from = {y: 1}
    order = sorted(geodesic_interval(table, x, y), key=lambda v: -m[x, v])
    for v in order:
        if v == y:
            continue
        ways_from[v] = sum(ways_from.get(w, 0) for w in _geodesic_successors(m, adj, x, y, v))
    rng = random.Random(seed)
    sample = []
    for _ in range(sample_size):
        cur = x
        path = [x]
        while cur != y:
            nexts = _geodesic_successors(m, adj, x, y, cur)
            cur = rng.choices(nexts, weights=[ways_from[w] for w in nexts])[0]
            path.append(cur)
        sample.append(tuple(path))
    return GeodesicFamily(tuple(sample), total, sampled=True)


@dataclass(frozen=True)
class StabilityReport:
    """Witnessed (h0 -> r') table for the geodesic-stability scan.

    Row (h0, r') means: over all configurations (x, y, z) with y in the
    subset, d(x,y) <= d(x,subset) + r, and x on a geodesic [y,z], those
    with d(x,y) > h0 satisfy d(z,y) <= d(z,subset) + r'.
    """

    subset: tuple[int, ...]
    r: int
    table: tuple[tuple[int, int], ...]
    extremal: tuple[int, int, int] | None
    degenerate: bool

    def r_prime(self, h0: int) -> int:
        for h, rp in self.table:
            if h == h0:
                return rp
        return 0

    def to_dict(self) -> dict:
        return {
            "subset": list(self.subset),
            "r": self.r,
            "table": [[h, rp] for h, rp in self.table],
            "extremal": list(self.extremal) if self.extremal else None,
            "degenerate": self.degenerate,
        }


def check_qconvex_stability(table: DistanceTable, subset: Sequence[int], r: int) -> StabilityReport:
    """Exhaustive scan over all configurations satisfying the hypotheses;
    for every threshold h0 the least sufficient r' is witnessed.  The
    extremal field is the configuration of largest excess (ties broken by
    larger d(x,y), then lexicographically); None when every excess is 0."""
    sub = sorted(set(subset))
    if not sub:
        raise ValidationError("stability scan needs a nonempty subset")
    if r < 0:
        raise ValidationError("r must be non-negative")
    m = table.as_array()
    hmax = int(m.max())
    to_sub = np.min(m[:, sub], axis=1)
    # worst_at[t] = max excess over configs with d(x,y) == t
    worst_at = np.zeros(hmax + 2, dtype=np.int64)
    best: tuple[int, int, tuple[int, int, int]] | None = None
    for y in sub:
        ok_x = m[:, y] <= to_sub + r
        if not ok_x.any():
            continue
        on_geo = (m[y, :][:, None] + m) == m[y, :][None, :]  # indexed [x, z]
        xs, zs = np.nonzero(on_geo & ok_x[:, None])
        if xs.size == 0:
            continue
        t = m[xs, y]
        e = m[zs, y] - to_sub[zs]
        np.maximum.at(worst_at, t, e)
        # configs with d(x,y) = 0 never pass any threshold; the extremal
        # witness comes from those that feed the table
        live = t >= 1
        if not live.any():
            continue
        emax = int(e[live].max())
        if emax > 0:
            sel = live & (e == emax)
            tmax = int(t[sel].max())
            sel &= t == tmax
            x_best, z_best = max(zip(xs[sel].tolist(), zs[sel].tolist()))
            cand = (emax, tmax, (x_best, y, z_best))
            if best is None or cand > best:
                best = cand
    # r'(h0) covers configs with d(x,y) strictly above h0
    suffix = np.maximum.accumulate(worst_at[::-1])[::-1]
    rows = tuple((h0, int(suffix[h0 + 1])) for h0 in range(hmax + 1))
    extremal = best[2] if best else None
    return StabilityReport(tuple(sub), r, rows, extremal, all(rp == 0 for _, rp in rows))


_CLAIMS = ("geodesic", "local-quasigeodesic", "quasigeodesic")


@dataclass(frozen=True)
class PathWitness:
    """Vertex path with a claimed quality, checkable against a distance
    oracle.  Quasigeodesic claims carry their constant k (and the window
    for local claims); a claimed k promises every sub-interval (within the
    window, for local claims) has edge length <= k * endpoint distance."""

    vertices: tuple
    claim: str = "geodesic"
    k: Fraction | None = None
    window: int | None = None

    def __post_init__(self) -> None:
        if not self.vertices:
            raise ValidationError("empty path")
        if self.claim not in _CLAIMS:
            raise ValidationError(f"unknown path claim {self.claim!r}")
        if self.claim == "geodesic":
            if self.k is not None or self.window is not None:
                raise ValidationError("geodesic claim takes no constants")
        else:
            if self.k is None or self.k < 1:
                raise ValidationError("quasigeodesic claim needs k >= 1")
            if self.claim == "local-quasigeodesic" and (self.window is None or self.window < 1):
                raise ValidationError("local claim needs a window >= 1")
            if self.claim == "quasigeodesic" and self.window is not None:
                raise ValidationError("global claim takes no window")

    def __len__(self) -> int:
        return len(self.vertices)

    def validate(self, dist: Callable[[object, object], int]) -> None:
        vs = self.vertices
        for u, v in zip(vs, vs[1:]):
            if dist(u, v) != 1:
                raise ValidationError(f"consecutive vertices not adjacent: {u}, {v}")
        if len(vs) < 2:
            return
        if self.claim == "geodesic":
            if dist(vs[0], vs[-1]) != len(vs) - 1:
                raise ValidationError("path is not a geodesic")
            return
        limit = self.window if self.claim == "local-quasigeodesic" else len(vs) - 1
        for i in range(len(vs)):
            for j in range(i + 1, min(i + limit, len(vs) - 1) + 1):
                d = dist(vs[i], vs[j])
                if d == 0:
                    raise ValidationError(f"revisited vertex over interval ({i}, {j})")
                if Fraction(j - i, d) > self.k:
                    raise ValidationError(
                        f"claimed constant {self.k} violated on interval ({i}, {j})"
                    )

    def to_dict(self) -> dict:
        out: dict = {"vertices": [str(v) for v in self.vertices], "claim": self.claim}
        if self.k is not None:
            out["k"] = [self.k.numerator, self.k.denominator]
        if self.window is not None:
            out["window"] = self.window
        return out


@dataclass(frozen=True)
class QuasigeodesicReport:
    """Measured local and global quasigeodesic quality of a path."""

    window: int
    local_k: Fraction | None
    global_k: Fraction | None
    ok: bool
    offending: tuple[int, int] | None

    def to_dict(self) -> dict:
        def enc(x: Fraction | None) -> list[int] | None:
            return None if x is None else [x.numerator, x.denominator]

        return {
            "window": self.window,
            "local_k": enc(self.local_k),
            "global_k": enc(self.global_k),
            "ok": self.ok,
            "offending": list(self.offending) if self.offending else None,
        }


def _as_dist(dist: object) -> Callable[[object, object], int]:
    if isinstance(dist, DistanceTable):
        return dist
    if callable(dist):
        return dist  # type: ignore[return-value]
    raise ValidationError("distance oracle must be a DistanceTable or callable")


def local_to_global_report(dist: object, path: object, window: int) -> QuasigeodesicReport:
    """Worst (edge length)/(endpoint distance) ratio over sub-intervals of
    length at most the window (local) and over all sub-intervals (global).
    A sub-interval of positive length with coinciding endpoints is not a
    quasigeodesic at any constant; the report flags the offending interval
    and carries no ratios."""
    d = _as_dist(dist)
    if window < 1:
        raise ValidationError("window must be at least 1")
    if isinstance(path, PathWitness):
        path.validate(d)
        seq: Sequence = path.vertices
    else:
        seq = path  # type: ignore[assignment]
    n = len(seq)
    local = Fraction(1)
    global_ = Fraction(1)
    for i in range(n):
        for j in range(i + 1, n):
            dist_ij = d(seq[i], seq[j])
            if dist_ij == 0:
                return QuasigeodesicReport(window, None, None, False, (i, j))
            ratio = Fraction(j - i, dist_ij)
            if ratio > global_:
                global_ = ratio
            if j - i <= window and ratio > local:
                local = ratio
    return QuasigeodesicReport(window, local, global_, True, None)


def read_graph(text: str) -> FiniteGraph:
    """Edge-list format: first line 'n m', then m lines 'u v' (0-based).
    Blank lines and lines starting with '#' are ignored."""
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError(f"header must be 'n m', got {lines[0]!r}")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError as exc:
        raise ParseError(f"bad header: {exc}") from exc
    body = lines[1:]
    if len(body) != m:
        raise ParseError(f"expected {m} edge lines, found {len(body)}")
    pairs: list[tuple[int, int]] = []
    for ln in body:
        parts = ln.split()
        if len(parts) != 2:
            raise ParseError(f"edge line must be 'u v', got {ln!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ParseError(f"bad edge line {ln!r}: {exc}") from exc
    return FiniteGraph.from_edges(n, pairs)


def path_graph(n: int) -> FiniteGraph:
    return FiniteGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> FiniteGraph:
    return FiniteGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> FiniteGraph:
    return FiniteGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
