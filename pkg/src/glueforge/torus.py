"""Exact curve combinatorics and half-plane geometry for the torus boundary.

Slopes p/q (q >= 0, gcd 1, infinity = 1/0) are the curve-graph vertices;
two slopes are adjacent iff |p a' - p' a| = 1 (the Farey graph).  All graph
quantities are computed in integer arithmetic.  Teichmueller space is the
upper half plane with the distance halved, so that the translation length
conventions match the curve-length formula len_z(p/q) = |p - q z| / sqrt(y).

Conventions fixed here and recorded in exported reports:
  * annular projections move the annulus core to infinity by the canonical
    orientation-preserving map and return |floor(a') - floor(b')| + 2;
  * geodesics are made deterministic by the lexicographic (q, p) tie-break;
  * markings are unordered-looking pairs (base, transversal) with
    intersection number one, and marking distances take the min over the
    four slope pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import EmptyProjectionError, ParseError, ValidationError

__all__ = [
    "Slope",
    "INFINITY",
    "parse_slope",
    "intersection_number",
    "is_adjacent",
    "cf_expansion",
    "SurfaceMap",
    "IDENTITY",
    "REFLECTION",
    "TeichPoint",
    "AnnulusLabel",
    "FareyMarking",
    "farey_distance",
    "farey_geodesic",
    "annular_projection_distance",
    "marking_distance",
    "marking_diameter",
    "geodesic_between_markings",
    "marking_to_path_distance",
    "max_subsurface_projection",
    "sigma_matrix",
    "sigma_of_marking",
    "curve_length",
    "shortest_slope",
    "shortest_marking",
    "systole",
    "teich_distance",
    "teich_geodesic",
    "thick_check",
    "segment_thick_check",
    "SegmentThickReport",
]


@dataclass(frozen=True)
class Slope:
    """Primitive slope p/q in canonical form: q > 0, or (1, 0) for infinity."""

    p: int
    q: int

    def __post_init__(self) -> None:
        p, q = self.p, self.q
        if p == 0 and q == 0:
            raise ValidationError("slope 0/0 is not a curve")
        g = math.gcd(p, q)
        p, q = p // g, q // g
        if q < 0:
            p, q = -p, -q
        if q == 0:
            p = 1
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def is_infinity(self) -> bool:
        return self.q == 0

    def value(self) -> Fraction | None:
        return None if self.q == 0 else Fraction(self.p, self.q)

    def __str__(self) -> str:
        return "inf" if self.q == 0 else f"{self.p}/{self.q}"

    def sort_key(self) -> tuple[int, int]:
        return (self.q, self.p)


INFINITY = Slope(1, 0)


def parse_slope(text: str) -> Slope:
    """Parse 'p/q', a bare integer, or 'inf'."""
    s = text.strip()
    if s in ("inf", "1/0", "-1/0"):
        return INFINITY
    try:
        if "/" in s:
            num, den = s.split("/")
            return Slope(int(num), int(den))
        return Slope(int(s), 1)
    except (ValueError, ValidationError) as exc:
        raise ParseError(f"bad slope {text!r}") from exc


def intersection_number(a: Slope, b: Slope) -> int:
    return abs(a.p * b.q - b.p * a.q)


def is_adjacent(a: Slope, b: Slope) -> bool:
    return intersection_number(a, b) == 1


def cf_expansion(a: Slope) -> list[int]:
    """Canonical continued fraction [a0; a1, ..., ak], ai >= 1 for i >= 1, ak >= 2.

    Uses the floor convention, so negative rationals get a0 = floor(p/q).
    Infinity is rejected (no expansion in this chart).
    """
    if a.is_infinity:
        raise ValidationError("infinity has no continued-fraction expansion")
    x = Fraction(a.p, a.q)
    out: list[int] = []
    while True:
        n = math.floor(x)
        out.append(n)
        frac = x - n
        if frac == 0:
            break
        x = 1 / frac
    return out


@dataclass(frozen=True)
class SurfaceMap:
    """Mapping class of the torus as an integer matrix with det = +-1.

    det +1 acts on the half plane by Moebius transformations, det -1 by
    anti-Moebius ones (conjugate first).  Slopes transform as column
    vectors (p, q).
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        if self.det not in (1, -1):
            raise ValidationError(f"surface map must have det +-1, got {self.det}")

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    @property
    def entries(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return ((self.a, self.b), (self.c, self.d))

    def inverse(self) -> "SurfaceMap":
        s = self.det
        return SurfaceMap(s * self.d, -s * self.b, -s * self.c, s * self.a)

    def compose(self, other: "SurfaceMap") -> "SurfaceMap":
        """self after other (matrix product self * other)."""
        return SurfaceMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def __matmul__(self, other: "SurfaceMap") -> "SurfaceMap":
        return self.compose(other)

    def power(self, n: int) -> "SurfaceMap":
        if n < 0:
            return self.inverse().power(-n)
        out = IDENTITY
        base = self
        while n:
            if n & 1:
                out = out @ base
            base = base @ base
            n >>= 1
        return out

    def on_slope(self, s: Slope) -> Slope:
        return Slope(self.a * s.p + self.b * s.q, self.c * s.p + self.d * s.q)

    def on_marking(self, m: "FareyMarking") -> "FareyMarking":
        return FareyMarking(self.on_slope(m.base), self.on_slope(m.transversal))

    def on_point(self, z: "TeichPoint") -> "TeichPoint":
        w = complex(z.x, z.y)
        if self.det == -1:
            w = w.conjugate()
        num = self.a * w + self.b
        den = self.c * w + self.d
        img = num / den
        return TeichPoint(img.real, img.imag)

    def is_involution(self) -> bool:
        sq = self @ self
        return sq in (IDENTITY, SurfaceMap(-1, 0, 0, -1))

    def to_json(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]

    @staticmethod
    def from_json(rows: object) -> "SurfaceMap":
        try:
            (a, b), (c, d) = rows  # type: ignore[misc]
            return SurfaceMap(int(a), int(b), int(c), int(d))
        except (TypeError, ValueError, ValidationError) as exc:
            raise ParseError(f"bad surface map {rows!r}") from exc


IDENTITY = SurfaceMap(1, 0, 0, 1)
REFLECTION = SurfaceMap(1, 0, 0, -1)


@dataclass(frozen=True)
class TeichPoint:
    """Point x + iy of the upper half plane, y > 0."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (self.y > 0):
            raise ValidationError(f"half-plane point needs y > 0, got {self.y}")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    def close_to(self, other: "TeichPoint", tol: float = 1e-9) -> bool:
        return abs(self.z - other.z) <= tol * max(1.0, abs(self.z), abs(other.z))


@dataclass(frozen=True)
class AnnulusLabel:
    """Annular subsurface of the torus, named by its core slope."""

    core: Slope

    def __str__(self) -> str:
        return f"annulus({self.core})"


@dataclass(frozen=True)
class FareyMarking:
    """Complete marking: base and transversal slopes with intersection one."""

    base: Slope
    transversal: Slope

    def __post_init__(self) -> None:
        if intersection_number(self.base, self.transversal) != 1:
            raise ValidationError(
                f"marking slopes must intersect once: {self.base}, {self.transversal}"
            )

    def slopes(self) -> tuple[Slope, Slope]:
        return (self.base, self.transversal)

    def __str__(self) -> str:
        return f"({self.base},{self.transversal})"


def normalizer_to_infinity(w: Slope) -> SurfaceMap:
    """Canonical orientation-preserving map sending w to infinity.

    Deterministic: the Farey neighbour sent to 0 is r/s with p s - q r = 1
    and 0 <= s < q (s = 0 and M = identity when w is already infinity).
    """
    if w.is_infinity:
        return IDENTITY
    p, q = w.p, w.q
    if q == 1:
        s, r = 0, -1
    else:
        s = pow(p % q, -1, q)
        r = (p * s - 1) // q
    return SurfaceMap(s, -r, -q, p)


@lru_cache(maxsize=None)
def _dist_to_infinity(p: int, q: int) -> int:
    # Geodesics from infinity descend through floor or ceil of the target;
    # both recursive arguments keep coprimality and shrink the denominator.
    if q == 0:
        return 0
    if q == 1:
        return 1
    n = p // q
    r1 = p - n * q
    r2 = r1 - q
    return 1 + min(_dist_to_infinity(q, r1), _dist_to_infinity(-q, -r2))


def farey_distance(a: Slope, b: Slope) -> int:
    """Exact distance in the Farey graph."""
    if a == b:
        return 0
    m = normalizer_to_infinity(a)
    img = m.on_slope(b)
    return _dist_to_infinity(img.p, img.q)


def farey_geodesic(a: Slope, b: Slope) -> list[Slope]:
    """One geodesic from a to b; ties broken lexicographically on (q, p).

    At each step only the two pulled-back integer neighbours floor/ceil of
    the normalized target can decrease the distance; among those that do,
    the candidate with the smaller canonical (q, p) key is chosen.
    """
    path = [a]
    cur = a
    remaining = farey_distance(a, b)
    while cur != b:
        m = normalizer_to_infinity(cur)
        minv = m.inverse()
        img = m.on_slope(b)
        if img.q == 1:
            nxt = b
        else:
            n = img.p // img.q
            cands = []
            for k in (n, n + 1):
                step = Slope(k, 1)
                if farey_distance(step, img) == remaining - 1:
                    cands.append(minv.on_slope(step))
            nxt = min(cands, key=Slope.sort_key)
        path.append(nxt)
        cur = nxt
        remaining -= 1
    return path


def annular_projection_distance(w: AnnulusLabel, a: Slope, b: Slope) -> int:
    """Projection distance |floor(a') - floor(b')| + 2 in the w-chart.

    The chart is the canonical normalizer sending the core to infinity;
    integer translations of the chart cancel in the floor difference, so
    the value only depends on the orientation-preserving chart choice.
    """
    if a == w.core or b == w.core:
        raise EmptyProjectionError(f"slope equal to the core of {w}")
    m = normalizer_to_infinity(w.core)
    ia = m.on_slope(a)
    ib = m.on_slope(b)
    fa = ia.p // ia.q
    fb = ib.p // ib.q
    return abs(fa - fb) + 2


def marking_distance(m1: FareyMarking, m2: FareyMarking) -> int:
    """Min over the four slope pairs of the Farey distance."""
    return min(
        farey_distance(x, y) for x in m1.slopes() for y in m2.slopes()
    )


def marking_diameter(*markings: FareyMarking) -> int:
    """Max pairwise Farey distance over all slopes of the given markings."""
    slopes: list[Slope] = []
    for m in markings:
        slopes.extend(m.slopes())
    return max(
        farey_distance(slopes[i], slopes[j])
        for i in range(len(slopes))
        for j in range(i + 1, len(slopes))
    )


def geodesic_between_markings(m1: FareyMarking, m2: FareyMarking) -> list[Slope]:
    """Deterministic geodesic between markings: base slope to base slope."""
    return farey_geodesic(m1.base, m2.base)


def marking_to_path_distance(m: FareyMarking, path: list[Slope]) -> int:
    """Min Farey distance from any marking slope to any path vertex."""
    return min(farey_distance(s, v) for s in m.slopes() for v in path)


def _marking_pair_projection(w: AnnulusLabel, m1: FareyMarking, m2: FareyMarking) -> int | None:
    """Max projection over slope pairs with both slopes off the core; None if no pair."""
    best: int | None = None
    for x in m1.slopes():
        if x == w.core:
            continue
        for y in m2.slopes():
            if y == w.core:
                continue
            v = annular_projection_distance(w, x, y)
            if best is None or v > best:
                best = v
    return best


def _sweep_candidates(values: list[Fraction], denom_bound: int, pad: int = 2) -> list[Slope]:
    """All slopes with denominator <= denom_bound in the padded value window."""
    lo = min(values) - pad
    hi = max(values) + pad
    out = [INFINITY]
    for q in range(1, denom_bound + 1):
        p_lo = math.ceil(lo * q)
        p_hi = math.floor(hi * q)
        for p in range(p_lo, p_hi + 1):
            if math.gcd(p, q) == 1:
                out.append(Slope(p, q))
    return out


def _convergents(s: Slope) -> list[Slope]:
    """Continued-fraction convergents of a finite slope, including itself."""
    h_prev, k_prev = 0, 1
    h, k = 1, 0
    out: list[Slope] = []
    for a in cf_expansion(s):
        h_prev, h = h, a * h + h_prev
        k_prev, k = k, a * k + k_prev
        out.append(Slope(h, k))
    return out


def _pivot_candidates(m1: FareyMarking, m2: FareyMarking) -> set[Slope]:
    """Annulus cores that can carry a large projection of the slope pairs.

    For each ordered pair of marking slopes, the convergents of the second
    slope in the chart normalizing the first to infinity, mapped back.
    The set is equivariant under orientation-preserving maps: the chart
    changes only by an integer shift, which shifts every convergent.
    """
    slopes = (*m1.slopes(), *m2.slopes())
    out: set[Slope] = set(slopes)
    for x in slopes:
        norm = normalizer_to_infinity(x)
        back = norm.inverse()
        for y in slopes:
            if y == x:
                continue
            out.update(back.on_slope(c) for c in _convergents(norm.on_slope(y)))
    return out


def max_subsurface_projection(
    m1: FareyMarking,
    m2: FareyMarking,
    denom_bound: int | None = None,
) -> tuple[AnnulusLabel, int]:
    """Annulus maximizing the marking-to-marking projection distance.

    The search runs over the four marking slopes and the convergent pivots
    of every slope pair; passing denom_bound additionally certifies the
    result by a brute-force sweep over all slopes with that denominator
    bound inside the padded value window of the marking slopes.
    Ties go to the candidate with the smaller (q, p) key.
    """
    cands = _pivot_candidates(m1, m2)
    if denom_bound is not None:
        finite = [s.value() for s in (*m1.slopes(), *m2.slopes()) if not s.is_infinity]
        if finite:
            cands.update(_sweep_candidates(finite, denom_bound))
        else:
            cands.update(Slope(k, 1) for k in range(-2, 3))
    best_label: AnnulusLabel | None = None
    best_val = -1
    for core in sorted(cands, key=Slope.sort_key):
        w = AnnulusLabel(core)
        v = _marking_pair_projection(w, m1, m2)
        if v is not None and v > best_val:
            best_val = v
            best_label = w
    assert best_label is not None
    return best_label, best_val


def sigma_matrix(m: FareyMarking) -> SurfaceMap:
    """The orientation-preserving map sending 0/1 to base and 1/0 to transversal."""
    t, b = m.transversal, m.base
    cand = SurfaceMap(t.p, b.p, t.q, b.q)
    if cand.det == -1:
        cand = SurfaceMap(t.p, -b.p, t.q, -b.q)
    return cand


def sigma_of_marking(m: FareyMarking) -> TeichPoint:
    """Balanced point of the marking: the sigma matrix applied to i."""
    return sigma_matrix(m).on_point(TeichPoint(0.0, 1.0))


def curve_length(z: TeichPoint, a: Slope) -> float:
    """Flat-torus length len_z(p/q) = |p - q z| / sqrt(y) at unit area."""
    return abs(complex(a.p, 0) - a.q * z.z) / math.sqrt(z.y)


_TIE_TOL = 1e-9


def _norm_sq(z: TeichPoint, p: int, q: int) -> float:
    # (length * sqrt(y))^2; monotone proxy for curve_length at fixed z.
    dx = p - q * z.x
    dy = q * z.y
    return dx * dx + dy * dy


def _slope_tie_key(s: Slope) -> tuple[int, int, int, int]:
    # Finite slopes first (spec examples demand 0/1 over 1/0 at z = i),
    # then lexicographic on (q, |p|, p).
    return (1 if s.is_infinity else 0, s.q, abs(s.p), s.p)


def shortest_slope(z: TeichPoint) -> Slope:
    """Shortest slope at z; ties resolved by the documented key."""
    best = None
    best_n = math.inf
    q = 0
    while True:
        if q == 0:
            cands = [(1, 0)]
        else:
            if (q * z.y) ** 2 > best_n * (1 + _TIE_TOL):
                break
            center = round(q * z.x)
            cands = [(p, q) for p in range(center - 2, center + 3) if math.gcd(p, q) == 1]
        for p, qq in cands:
            n = _norm_sq(z, p, qq)
            if n < best_n * (1 - _TIE_TOL) or best is None:
                best, best_n = Slope(p, qq), n
            elif n <= best_n * (1 + _TIE_TOL):
                cand = Slope(p, qq)
                if _slope_tie_key(cand) < _slope_tie_key(best):
                    best, best_n = cand, min(best_n, n)
        q += 1
    assert best is not None
    return best


def _shortest_neighbour(z: TeichPoint, base: Slope) -> Slope:
    # Neighbours of base are the pullbacks of the integers under the
    # canonical chart; the squared norm is quadratic in the integer, so a
    # window around the real minimizer suffices.
    minv = normalizer_to_infinity(base).inverse()
    ac = complex(minv.a, 0) - minv.c * z.z
    bc = complex(minv.b, 0) - minv.d * z.z
    denom = abs(ac) ** 2
    k_star = 0.0 if denom == 0 else -(ac.conjugate() * bc).real / denom
    k0 = math.floor(k_star)
    best: Slope | None = None
    best_n = math.inf
    for k in range(k0 - 3, k0 + 5):
        cand = minv.on_slope(Slope(k, 1))
        n = _norm_sq(z, cand.p, cand.q)
        if best is None or n < best_n * (1 - _TIE_TOL):
            best, best_n = cand, n
        elif n <= best_n * (1 + _TIE_TOL) and _slope_tie_key(cand) < _slope_tie_key(best):
            best, best_n = cand, min(best_n, n)
    assert best is not None
    return best


def shortest_marking(z: TeichPoint) -> FareyMarking:
    """Shortest slope plus its shortest Farey neighbour, with the fixed tie-break."""
    base = shortest_slope(z)
    return FareyMarking(base, _shortest_neighbour(z, base))


def systole(z: TeichPoint) -> float:
    """Length of the shortest slope at z."""
    return curve_length(z, shortest_slope(z))


def teich_distance(z: TeichPoint, w: TeichPoint) -> float:
    """Half the hyperbolic half-plane distance."""
    d2 = (z.x - w.x) ** 2 + (z.y - w.y) ** 2
    return 0.5 * math.acosh(1.0 + d2 / (2.0 * z.y * w.y))


def teich_geodesic(z: TeichPoint, w: TeichPoint, t: float) -> TeichPoint:
    """Point at parameter t in [0, 1], proportional to arc length, from z to w."""
    if not (0.0 <= t <= 1.0):
        raise ValidationError(f"geodesic parameter must lie in [0,1], got {t}")
    scale = max(1.0, abs(z.x), abs(w.x))
    if abs(z.x - w.x) <= 1e-12 * scale:
        y = z.y ** (1.0 - t) * w.y ** t
        return TeichPoint(z.x, y)
    c = (w.x * w.x + w.y * w.y - z.x * z.x - z.y * z.y) / (2.0 * (w.x - z.x))
    r = math.hypot(z.x - c, z.y)
    th_z = math.atan2(z.y, z.x - c)
    th_w = math.atan2(w.y, w.x - c)
    u_z = math.log(math.tan(th_z / 2.0))
    u_w = math.log(math.tan(th_w / 2.0))
    u = (1.0 - t) * u_z + t * u_w
    th = 2.0 * math.atan(math.exp(u))
    return TeichPoint(c + r * math.cos(th), r * math.sin(th))


def thick_check(z: TeichPoint, eps0: float) -> bool:
    """True iff every curve at z has length at least eps0."""
    return systole(z) >= eps0


@dataclass(frozen=True)
class SegmentThickReport:
    """Sampled thickness of a half-plane geodesic segment."""

    eps0: float
    samples: int
    min_systole: float
    argmin_t: float
    thick: bool
    relative_cf_max_coeff: int
    endpoints_marking_distance: int

    def to_dict(self) -> dict:
        return {
            "eps0": self.eps0,
            "samples": self.samples,
            "min_systole": self.min_systole,
            "argmin_t": self.argmin_t,
            "thick": self.thick,
            "relative_cf_max_coeff": self.relative_cf_max_coeff,
            "endpoints_marking_distance": self.endpoints_marking_distance,
        }


def relative_cf_max_coeff(m_from: FareyMarking, m_to: FareyMarking) -> int:
    """Max |coefficient| of the target base expanded in the source marking chart."""
    rel = sigma_matrix(m_from).inverse().on_slope(m_to.base)
    if rel.is_infinity:
        return 0
    return max(abs(c) for c in cf_expansion(rel))


def segment_thick_check(
    z: TeichPoint, w: TeichPoint, eps0: float, samples: int
) -> SegmentThickReport:
    """Sampled systole minimum along [z, w] plus the combinatorial indicator."""
    if samples < 2:
        raise ValidationError("segment sampling needs at least 2 samples")
    best = math.inf
    best_t = 0.0
    for k in range(samples):
        t = k / (samples - 1)
        s = systole(teich_geodesic(z, w, t))
        if s < best:
            best, best_t = s, t
    mz = shortest_marking(z)
    mw = shortest_marking(w)
    return SegmentThickReport(
        eps0=eps0,
        samples=samples,
        min_systole=best,
        argmin_t=best_t,
        thick=best >= eps0,
        relative_cf_max_coeff=relative_cf_max_coeff(mz, mw),
        endpoints_marking_distance=marking_distance(mz, mw),
    )
