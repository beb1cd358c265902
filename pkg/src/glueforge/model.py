"""Model-skeleton assembly.

A decorated gluing determines a piecewise metric model: every piece keeps
an opaque interior whose boundary restrictions are the balanced points of
its decorations, and every identification contributes a tube swept along
the half-plane geodesic between the two induced balanced points.  On the
torus backend the fiber geometry is computed exactly from the modulus;
finite-graph slots have no geometry and their tubes stay combinatorial.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Mapping

from .errors import ParseError, ValidationError
from .gluing import GluingGraph, Slot, SlotMap
from .surface import AbstractMarking, BackendHandle, as_torus_marking
from .torus import (
    Slope,
    TeichPoint,
    relative_cf_max_coeff,
    shortest_marking,
    shortest_slope,
    sigma_of_marking,
    systole,
    teich_distance,
    teich_geodesic,
)

# balanced points are the only irrational data; everything upstream of
# them is exact, so a fixed absolute-ish tolerance is safe here
SIGMA_TOL = 1e-9

# the horizontal complement is a convention, not data: on the torus the
# flat product split is used and recorded so exports stay comparable
HORIZONTAL_SPLIT = "zero-connection-product"

SCHEMA = "skeleton/1"

DEFAULT_SAMPLES = 9


def _slot_name(slot: Slot) -> str:
    return f"{slot[0]}:{slot[1]}"


def _point_json(z: TeichPoint | None) -> list[float] | None:
    return None if z is None else [z.x, z.y]


def _point_from_json(obj: object) -> TeichPoint | None:
    if obj is None:
        return None
    try:
        x, y = obj  # type: ignore[misc]
        return TeichPoint(float(x), float(y))
    except (TypeError, ValueError, ValidationError) as exc:
        raise ParseError(f"bad half-plane point {obj!r}") from exc


@dataclass(frozen=True)
class TubeSample:
    """One fiber of a tube: parameter, modulus, and its shortest geometry."""

    t: float
    point: TeichPoint
    systole: float
    shortest: Slope

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "point": _point_json(self.point),
            "systole": self.systole,
            "shortest": [self.shortest.p, self.shortest.q],
        }

    @staticmethod
    def from_json(obj: object) -> "TubeSample":
        if not isinstance(obj, Mapping):
            raise ParseError("tube sample must be an object")
        try:
            p, q = obj["shortest"]
            point = _point_from_json(obj["point"])
            assert point is not None
            return TubeSample(
                float(obj["t"]), point, float(obj["systole"]), Slope(int(p), int(q))
            )
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ParseError(f"bad tube sample: {exc}") from exc


@dataclass(frozen=True)
class TubeBlock:
    """Geodesic tube between two induced balanced points.

    kind is "internal" for a two-slot identification, "quotient" for a
    self-identification (the involution is kept for the record), and
    "boundary" for a free slot joined to its share of the free marking.
    Equal endpoints force the degenerate flag: the block is then the
    product of the fiber with a unit interval.  Combinatorial tubes come
    from finite-graph slots and carry no geometry at all.
    """

    slot_a: Slot
    slot_b: Slot
    kind: str
    combinatorial: bool = False
    sigma_a: TeichPoint | None = None
    sigma_b: TeichPoint | None = None
    length: float = 0.0
    degenerate: bool = False
    involution: SlotMap | None = None
    samples: tuple[TubeSample, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("internal", "quotient", "boundary"):
            raise ValidationError(f"unknown tube kind {self.kind!r}")
        if self.combinatorial:
            return
        if self.sigma_a is None or self.sigma_b is None:
            raise ValidationError(f"tube {self.name} lacks endpoint geometry")
        if self.degenerate:
            if self.length != 0.0:
                raise ValidationError(f"degenerate tube {self.name} with length")
        elif not self.length > 0.0:
            raise ValidationError(f"tube {self.name} needs positive length")

    @property
    def name(self) -> str:
        if self.kind == "boundary":
            return f"{_slot_name(self.slot_a)}--free"
        return f"{_slot_name(self.slot_a)}--{_slot_name(self.slot_b)}"

    def to_json(self) -> dict:
        out: dict = {
            "slot_a": list(self.slot_a),
            "slot_b": list(self.slot_b),
            "kind": self.kind,
            "combinatorial": self.combinatorial,
            "sigma_a": _point_json(self.sigma_a),
            "sigma_b": _point_json(self.sigma_b),
            "length": self.length,
            "degenerate": self.degenerate,
            "samples": [s.to_json() for s in self.samples],
        }
        if self.involution is not None:
            out["involution"] = {
                "backend": self.involution.handle.to_json(),
                "map": self.involution.to_json(),
            }
        return out

    @staticmethod
    def from_json(obj: object) -> "TubeBlock":
        if not isinstance(obj, Mapping):
            raise ParseError("tube block must be an object")
        try:
            involution = None
            if "involution" in obj:
                blob = obj["involution"]
                handle = BackendHandle.from_json(blob["backend"])
                involution = SlotMap.from_json(handle, blob["map"])
            pa, ba = obj["slot_a"]
            pb, bb = obj["slot_b"]
            return TubeBlock(
                (str(pa), str(ba)),
                (str(pb), str(bb)),
                str(obj["kind"]),
                combinatorial=bool(obj["combinatorial"]),
                sigma_a=_point_from_json(obj["sigma_a"]),
                sigma_b=_point_from_json(obj["sigma_b"]),
                length=float(obj["length"]),
                degenerate=bool(obj["degenerate"]),
                involution=involution,
                samples=tuple(TubeSample.from_json(s) for s in obj["samples"]),
            )
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ParseError(f"bad tube block: {exc}") from exc


@dataclass(frozen=True)
class PieceBlock:
    """Opaque interior of one piece, known only by its boundary anchors."""

    piece: str
    anchors: tuple[tuple[str, TeichPoint | None], ...]
    volume_tag: str = "opaque"

    def to_json(self) -> dict:
        return {
            "piece": self.piece,
            "anchors": {bid: _point_json(z) for bid, z in self.anchors},
            "volume_tag": self.volume_tag,
        }

    @staticmethod
    def from_json(obj: object) -> "PieceBlock":
        if not isinstance(obj, Mapping):
            raise ParseError("piece block must be an object")
        try:
            anchors = tuple(
                (str(bid), _point_from_json(z))
                for bid, z in sorted(dict(obj["anchors"]).items())
            )
            return PieceBlock(str(obj["piece"]), anchors, str(obj["volume_tag"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad piece block: {exc}") from exc


@dataclass(frozen=True)
class ModelSkeleton:
    """Piece blocks plus one tube per identification, with free-marking
    boundary tubes appended; incidence lists the tubes' slot pairs in the
    same order the tubes are stored."""

    pieces: tuple[PieceBlock, ...]
    tubes: tuple[TubeBlock, ...]
    incidence: tuple[tuple[str, str], ...]
    total_tube_length: float
    min_sampled_systole: float | None

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "horizontal_split": HORIZONTAL_SPLIT,
            "pieces": [p.to_json() for p in self.pieces],
            "tubes": [t.to_json() for t in self.tubes],
            "incidence": [list(pair) for pair in self.incidence],
            "stats": {
                "total_tube_length": self.total_tube_length,
                "min_sampled_systole": self.min_sampled_systole,
            },
        }

    @staticmethod
    def from_json(obj: object) -> "ModelSkeleton":
        if not isinstance(obj, Mapping):
            raise ParseError("skeleton must be a JSON object")
        if obj.get("schema") != SCHEMA:
            raise ParseError(f"unsupported skeleton schema {obj.get('schema')!r}")
        try:
            stats = obj["stats"]
            min_sys = stats["min_sampled_systole"]
            return ModelSkeleton(
                pieces=tuple(PieceBlock.from_json(p) for p in obj["pieces"]),
                tubes=tuple(TubeBlock.from_json(t) for t in obj["tubes"]),
                incidence=tuple((str(a), str(b)) for a, b in obj["incidence"]),
                total_tube_length=float(stats["total_tube_length"]),
                min_sampled_systole=None if min_sys is None else float(min_sys),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad skeleton: {exc}") from exc


def _sigma(m: AbstractMarking) -> TeichPoint:
    return sigma_of_marking(as_torus_marking(m))


def sample_tube(tube: TubeBlock, n: int) -> tuple[TubeSample, ...]:
    """Equally spaced fibers along the tube geodesic.

    A degenerate tube is the product of one fiber with an interval, so it
    always yields exactly two identical samples regardless of n.
    """
    if tube.combinatorial:
        raise ValidationError(f"combinatorial tube {tube.name} carries no geometry")
    if n < 2:
        raise ValidationError("tube sampling needs at least 2 samples")
    assert tube.sigma_a is not None and tube.sigma_b is not None
    if tube.degenerate:
        z = tube.sigma_a
        fixed = TubeSample(0.0, z, systole(z), shortest_slope(z))
        return (fixed, TubeSample(1.0, z, fixed.systole, fixed.shortest))
    out = []
    for k in range(n):
        t = k / (n - 1)
        z = teich_geodesic(tube.sigma_a, tube.sigma_b, t)
        out.append(TubeSample(t, z, systole(z), shortest_slope(z)))
    return tuple(out)


def _geometry(
    slot_a: Slot,
    slot_b: Slot,
    kind: str,
    mu: AbstractMarking,
    nu: AbstractMarking,
    samples: int,
    involution: SlotMap | None = None,
) -> TubeBlock:
    sigma_a = _sigma(mu)
    sigma_b = _sigma(nu)
    degenerate = sigma_a.close_to(sigma_b, SIGMA_TOL)
    tube = TubeBlock(
        slot_a,
        slot_b,
        kind,
        sigma_a=sigma_a,
        sigma_b=sigma_b,
        length=0.0 if degenerate else teich_distance(sigma_a, sigma_b),
        degenerate=degenerate,
        involution=involution,
    )
    return replace(tube, samples=sample_tube(tube, samples))


def _quotient_tube(
    x: GluingGraph, slot: Slot, ident_map: SlotMap, samples: int
) -> TubeBlock:
    mu = x.decoration(slot)
    nu = ident_map.apply(mu)
    if not ident_map.handle.is_torus:
        return TubeBlock(slot, slot, "quotient", combinatorial=True, involution=ident_map)
    tube = _geometry(slot, slot, "quotient", mu, nu, samples, involution=ident_map)
    # the gluing restricts to an isometry of the tube that must exchange
    # the two ends; an involution that moved the ends elsewhere would not
    # quotient to a bundle over the fiber
    assert ident_map.matrix is not None
    image_a = ident_map.matrix.on_point(tube.sigma_a)
    image_b = ident_map.matrix.on_point(tube.sigma_b)
    if not (image_a.close_to(tube.sigma_b, SIGMA_TOL) and image_b.close_to(tube.sigma_a, SIGMA_TOL)):
        raise ValidationError(
            f"self-identification on {_slot_name(slot)} does not exchange the"
            " tube endpoints"
        )
    if not tube.degenerate:
        mid = teich_geodesic(tube.sigma_a, tube.sigma_b, 0.5)
        if not ident_map.matrix.on_point(mid).close_to(mid, SIGMA_TOL):
            raise ValidationError(
                f"self-identification on {_slot_name(slot)} moves the tube midpoint"
            )
    return tube


def build_skeleton(
    x: GluingGraph,
    lam: Mapping[Slot, AbstractMarking] | None = None,
    samples: int = DEFAULT_SAMPLES,
) -> ModelSkeleton:
    """Assemble the skeleton of a valid gluing.

    Every identification produces exactly one tube between the induced
    balanced points of its two sides (a self-identification produces the
    quotient tube with the involution recorded).  Unburied slots holding a
    free marking get a boundary tube; without one the tube is omitted with
    a warning.  The free markings default to the gluing's own but can be
    supplied explicitly.
    """
    x.validate()
    blocks = []
    for pid, _ in x.pieces:
        spec = x.spec_of(pid)
        anchors = tuple(
            (b.id, _sigma(b.decoration) if b.handle is not None and b.handle.is_torus else None)
            for b in spec.nontoroidal()
            if b.decoration is not None
        )
        blocks.append(PieceBlock(pid, anchors))

    tubes: list[TubeBlock] = []
    for ident in x.identifications:
        if ident.slot_a == ident.slot_b:
            tubes.append(_quotient_tube(x, ident.slot_a, ident.map, samples))
            continue
        slot = ident.slot_a
        handle = x.boundary_of(slot).handle
        assert handle is not None
        if not handle.is_torus:
            tubes.append(TubeBlock(slot, ident.slot_b, "internal", combinatorial=True))
            continue
        partner, push = x.psi(slot)
        nu = push.apply(x.decoration(partner))
        tubes.append(_geometry(slot, partner, "internal", x.decoration(slot), nu, samples))

    for slot in x.slots():
        if x.is_buried(slot):
            continue
        free = x.lam(slot) if lam is None else lam.get(slot)
        if free is None:
            warnings.warn(
                f"unburied slot {_slot_name(slot)} has no free marking;"
                " boundary tube omitted",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        handle = x.boundary_of(slot).handle
        assert handle is not None
        if not handle.is_torus:
            tubes.append(TubeBlock(slot, slot, "boundary", combinatorial=True))
            continue
        tubes.append(_geometry(slot, slot, "boundary", x.decoration(slot), free, samples))

    sampled = [s.systole for t in tubes for s in t.samples]
    return ModelSkeleton(
        pieces=tuple(blocks),
        tubes=tuple(tubes),
        incidence=tuple(
            (_slot_name(t.slot_a), _slot_name(t.slot_b)) for t in tubes
        ),
        total_tube_length=math.fsum(t.length for t in tubes),
        min_sampled_systole=min(sampled) if sampled else None,
    )


@dataclass(frozen=True)
class ThicknessRow:
    """Per-tube verdict with the combinatorial thinness indicator."""

    tube: str
    min_systole: float
    thick: bool
    cf_coefficient: int

    def to_json(self) -> dict:
        return {
            "tube": self.tube,
            "min_systole": self.min_systole,
            "thick": self.thick,
            "cf_coefficient": self.cf_coefficient,
        }


@dataclass(frozen=True)
class ThicknessReport:
    """Sampled thickness of every geometric tube of a skeleton.

    The correlation list pairs each tube's relative continued-fraction
    coefficient with its sampled minimum, largest coefficient first: a
    long coefficient forces a deep modulus excursion, so thin fibers
    should cluster at the top.
    """

    eps0: float
    rows: tuple[ThicknessRow, ...]
    ok: bool
    correlation: tuple[tuple[str, int, float], ...]

    def to_json(self) -> dict:
        return {
            "eps0": self.eps0,
            "rows": [r.to_json() for r in self.rows],
            "ok": self.ok,
            "correlation": [list(entry) for entry in self.correlation],
        }


def verify_thickness(s: ModelSkeleton, eps0: float) -> ThicknessReport:
    """Compare every sampled tube systole against the thickness floor."""
    if not eps0 > 0:
        raise ValidationError("thickness floor must be positive")
    rows = []
    for tube in s.tubes:
        if tube.combinatorial or not tube.samples:
            continue
        low = min(smp.systole for smp in tube.samples)
        assert tube.sigma_a is not None and tube.sigma_b is not None
        coeff = relative_cf_max_coeff(
            shortest_marking(tube.sigma_a), shortest_marking(tube.sigma_b)
        )
        rows.append(ThicknessRow(tube.name, low, low >= eps0, coeff))
    return ThicknessReport(
        eps0=eps0,
        rows=tuple(rows),
        ok=all(r.thick for r in rows),
        correlation=tuple(
            (r.tube, r.cf_coefficient, r.min_systole)
            for r in sorted(rows, key=lambda r: (-r.cf_coefficient, r.tube))
        ),
    )


def _obj_bytes(s: ModelSkeleton, fiber_resolution: int) -> bytes:
    if fiber_resolution < 3:
        raise ValidationError("fiber resolution must be at least 3")
    lines = [f"# {SCHEMA} sweep, horizontal split {HORIZONTAL_SPLIT}"]
    base = 0
    for index, tube in enumerate(s.tubes):
        if tube.combinatorial or not tube.samples:
            continue
        lines.append(f"o {tube.name}")
        span = tube.length if not tube.degenerate else 1.0
        offset = 3.0 * index
        rings = len(tube.samples)
        for smp in tube.samples:
            radius = smp.systole / (2.0 * math.pi)
            cx = smp.t * span
            for j in range(fiber_resolution):
                angle = 2.0 * math.pi * j / fiber_resolution
                y = radius * math.cos(angle)
                z = offset + radius * math.sin(angle)
                lines.append(f"v {cx:.9f} {y:.9f} {z:.9f}")
        for k in range(rings - 1):
            for j in range(fiber_resolution):
                a = base + k * fiber_resolution + j + 1
                b = base + k * fiber_resolution + (j + 1) % fiber_resolution + 1
                c = a + fiber_resolution
                d = b + fiber_resolution
                lines.append(f"f {a} {b} {d}")
                lines.append(f"f {a} {d} {c}")
        base += rings * fiber_resolution
    lines.append("")
    return "\n".join(lines).encode()


def export_skeleton(
    s: ModelSkeleton, format: str = "json", fiber_resolution: int = 16
) -> bytes:
    """Serialize a skeleton: canonical JSON or a per-tube surface sweep."""
    if format == "json":
        text = json.dumps(s.to_json(), sort_keys=True, indent=2)
        return (text + "\n").encode()
    if format == "obj":
        return _obj_bytes(s, fiber_resolution)
    raise ValidationError(f"unknown export format {format!r}")


def load_skeleton(data: bytes | str) -> ModelSkeleton:
    """Inverse of the JSON export; round trips are byte identical."""
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"skeleton is not valid JSON: {exc}") from exc
    return ModelSkeleton.from_json(obj)
