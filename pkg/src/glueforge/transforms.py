"""Gluing transformations.

Stack combination pushes every decoration of an I-bundle chain into one
boundary frame and certifies the chain conditions; collapse removes the
bundle pieces and rewires their neighbors with composed chart maps;
compression assembly, decompositions, and transparency reports cover the
remaining graph rewrites.  All transformations are pure: they return new
values and never mutate the input graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import BackendMismatchError, ValidationError
from .gluing import (
    COMPRESSION_BODY,
    BoundarySpec,
    DecoratedManifoldSpec,
    GluingGraph,
    Identification,
    Slot,
    SlotMap,
    TRIVIAL_IBUNDLE,
    _slot_name,
    induced_markings,
    heights,
)
from .hypgraph import local_to_global_report
from .surface import (
    AbstractMarking,
    curve_distance,
    disk_distance,
    geodesic_between,
    marking_distance,
    marking_to_path_distance,
    sup_projection,
)


def _fraction_json(x: Fraction | None) -> list[int] | None:
    return None if x is None else [x.numerator, x.denominator]


# --------------------------------------------------------------- stacks


@dataclass(frozen=True)
class _StackStep:
    """One resolved piece of an ordered bundle chain: the slot the walk
    enters through, the slot it leaves through (None on a terminal twisted
    piece), and the exchange map pulling exit data into the entry chart."""

    piece: str
    entry: Slot
    exit: Slot | None
    flip: SlotMap | None


def _bundle_slots(spec: DecoratedManifoldSpec) -> list[str]:
    return [b.id for b in spec.nontoroidal()]


def _exchange_into(spec: DecoratedManifoldSpec, entry_bdry: str) -> SlotMap:
    """Exchange map re-oriented to pull the exit boundary's data into the
    entry chart.  The declared map pushes the second boundary's chart onto
    the first."""
    assert spec.bundle_map is not None
    first = _bundle_slots(spec)[0]
    return spec.bundle_map if entry_bdry == first else spec.bundle_map.inverse()


def _fold_slot(x: GluingGraph, pid: str) -> str | None:
    """The self-identified boundary of a bundle piece, if any; such a slot
    folds the chain back on itself exactly like a twisted end."""
    for b in x.spec_of(pid).nontoroidal():
        slot = (pid, b.id)
        if x.is_buried(slot) and x.psi(slot)[0] == slot:
            return b.id
    return None


def _resolve_stack(x: GluingGraph, piece_ids: Sequence[str]) -> list[_StackStep]:
    if not piece_ids:
        raise ValidationError("empty stack")
    specs = [x.spec_of(pid) for pid in piece_ids]
    for pid, spec in zip(piece_ids, specs):
        if not spec.is_bundle:
            raise ValidationError(f"piece {pid} is not an I-bundle")
        if spec.kind != TRIVIAL_IBUNDLE and pid != piece_ids[-1]:
            raise ValidationError(f"twisted piece {pid} must be terminal in a stack")
    handles = {spec.nontoroidal()[0].handle for spec in specs}
    if len(handles) != 1:
        raise BackendMismatchError("stack pieces live on different backends")

    # joint i: the identification between piece i and piece i+1, read off
    # as (exit slot of i, entry slot of i+1, pull map into the exit chart);
    # a two-piece cycle is doubly identified and either joint works, so the
    # first in boundary order is taken
    joints: list[tuple[Slot, Slot, SlotMap]] = []
    for i in range(len(piece_ids) - 1):
        pid, nxt = piece_ids[i], piece_ids[i + 1]
        found = None
        for bid in _bundle_slots(specs[i]):
            slot = (pid, bid)
            if not x.is_buried(slot):
                continue
            partner, pull = x.psi(slot)
            if partner[0] == nxt and partner != slot:
                found = (slot, partner, pull)
                break
        if found is None:
            raise ValidationError(
                f"stack pieces {pid}, {nxt} are not identified end-to-end"
            )
        joints.append(found)

    steps: list[_StackStep] = []
    for i, (pid, spec) in enumerate(zip(piece_ids, specs)):
        slots = _bundle_slots(spec)
        if spec.kind != TRIVIAL_IBUNDLE:
            steps.append(_StackStep(pid, (pid, slots[0]), None, None))
            continue
        if i == 0:
            if joints:
                exit_bdry = joints[0][0][1]
            elif _fold_slot(x, pid) == slots[0]:
                exit_bdry = slots[0]
            else:
                exit_bdry = slots[1]
            entry_bdry = slots[0] if exit_bdry == slots[1] else slots[1]
        else:
            entry_bdry = joints[i - 1][1][1]
            exit_bdry = slots[0] if entry_bdry == slots[1] else slots[1]
            if entry_bdry == exit_bdry:
                raise ValidationError(f"stack enters and exits piece {pid} on one slot")
            if joints and i < len(joints) and joints[i][0] != (pid, exit_bdry):
                raise ValidationError(f"stack does not traverse piece {pid} end-to-end")
        steps.append(
            _StackStep(pid, (pid, entry_bdry), (pid, exit_bdry), _exchange_into(spec, entry_bdry))
        )
    return steps


@dataclass(frozen=True)
class StackCertificate:
    """Exact verification record for one I-bundle chain.

    The nu sequence holds every decoration pushed into the frame of the
    first piece's entry boundary; heights are consecutive distances.  The
    three chain conditions are strict: heights above the height floor,
    subsurface projections and geodesic deviations below the combinatorics
    bound.  k_prime is the measured global quasigeodesic constant of the
    concatenated geodesic (None when the concatenation revisits a vertex),
    and the certified inequality is combined >= sum(heights)/k' - k'.
    """

    pieces: tuple[str, ...]
    nu: tuple[AbstractMarking, ...]
    heights: tuple[int, ...]
    h_bound: int
    r_bound: int
    heights_ok: bool
    projection_values: tuple[int, ...]
    projections_ok: bool
    geodesic_values: tuple[int, ...]
    geodesics_ok: bool
    witness: tuple[str, int] | None
    k_prime: Fraction | None
    combined_height: int
    lower_bound: Fraction | None
    lower_bound_ok: bool | None
    fellow_traveling: int
    twisted_note: str
    ok: bool

    def to_json(self) -> dict:
        return {
            "pieces": list(self.pieces),
            "nu": [m.to_json() for m in self.nu],
            "heights": list(self.heights),
            "params": {"h": self.h_bound, "R": self.r_bound},
            "conditions": {
                "heights_ok": self.heights_ok,
                "projection_values": list(self.projection_values),
                "projections_ok": self.projections_ok,
                "geodesic_values": list(self.geodesic_values),
                "geodesics_ok": self.geodesics_ok,
                "witness": list(self.witness) if self.witness else None,
            },
            "k_prime": _fraction_json(self.k_prime),
            "combined_height": self.combined_height,
            "lower_bound": _fraction_json(self.lower_bound),
            "lower_bound_ok": self.lower_bound_ok,
            "fellow_traveling": self.fellow_traveling,
            "twisted_note": self.twisted_note,
            "ok": self.ok,
        }


def _nu_sequence(
    x: GluingGraph, steps: Sequence[_StackStep]
) -> tuple[list[AbstractMarking], SlotMap, str]:
    """Push every bundle decoration into the frame of the first entry
    chart.  Returns the deduplicated sequence, the total flip carrying the
    final exit chart onto the frame, and the twisted-cover note."""
    handle = x.boundary_of(steps[0].entry).handle
    transport = SlotMap.identity(handle)
    seq: list[AbstractMarking] = []
    note = ""

    def push(m: AbstractMarking) -> None:
        if not seq or seq[-1] != m:
            seq.append(m)

    for i, step in enumerate(steps):
        spec = x.spec_of(step.piece)
        if step.flip is None:
            cover = spec.cover
            if cover is None:
                raise ValidationError(f"twisted piece without cover data: {step.piece}")
            lifted = transport.compose(cover.lift0.inverse())
            push(lifted.apply(cover.mu0))
            push(lifted.apply(cover.phi.apply(cover.mu1)))
            note = f"twisted end {step.piece} certified in its declared double cover"
            return seq, transport, note
        assert step.exit is not None
        push(transport.apply(x.decoration(step.entry)))
        push(transport.apply(step.flip.apply(x.decoration(step.exit))))
        transport = transport.compose(step.flip)
        if i + 1 < len(steps):
            _, pull = x.psi(step.exit)
            transport = transport.compose(pull)
    return seq, transport, note


def combine_stack(
    x: GluingGraph,
    piece_ids: Sequence[str],
    h_bound: int,
    r_bound: int,
    denom_bound: int | None = None,
) -> StackCertificate:
    """Verify the chain conditions for an ordered I-bundle stack and
    certify the combined height against the measured quasigeodesic
    constant of the concatenated geodesic."""
    if not isinstance(h_bound, int) or h_bound < 0:
        raise ValidationError("height floor must be a non-negative integer")
    if not isinstance(r_bound, int) or r_bound < 1:
        raise ValidationError("combinatorics bound must be a positive integer")
    steps = _resolve_stack(x, piece_ids)
    seq, flip_total, note = _nu_sequence(x, steps)
    handle = seq[0].handle

    hs = tuple(marking_distance(a, b) for a, b in zip(seq, seq[1:]))
    heights_ok = all(v > h_bound for v in hs)
    projs = tuple(
        sup_projection(a, b, denom_bound).value for a, b in zip(seq, seq[1:])
    )
    projections_ok = all(v < r_bound for v in projs)
    geos = tuple(
        marking_to_path_distance(seq[i], geodesic_between(seq[i - 1], seq[i + 1]))
        for i in range(1, len(seq) - 1)
    )
    geodesics_ok = all(v < r_bound for v in geos)

    witness: tuple[str, int] | None = None
    for name, values, bad in (
        ("height", hs, lambda v: v <= h_bound),
        ("projection", projs, lambda v: v >= r_bound),
        ("geodesic", geos, lambda v: v >= r_bound),
    ):
        for i, v in enumerate(values):
            if bad(v):
                witness = (name, i if name != "geodesic" else i + 1)
                break
        if witness:
            break

    path: list = []
    for a, b in zip(seq, seq[1:]):
        seg = geodesic_between(a, b)
        if path and path[-1] != seg[0]:
            # closest-pair segments on a graph backend may land on a
            # different representative of the junction marking
            bridge = geodesic_between(
                AbstractMarking(handle, (path[-1],)), AbstractMarking(handle, (seg[0],))
            )
            path.extend(bridge[1:])
        path.extend(seg if not path else seg[1:])
    if not path:
        path = geodesic_between(seq[0], seq[0])

    def dist(u: object, v: object) -> int:
        return curve_distance(handle, u, v)

    if len(path) >= 2:
        report = local_to_global_report(dist, path, window=len(path) - 1)
        k_prime = report.global_k if report.ok else None
    else:
        k_prime = Fraction(1)

    combined = marking_distance(seq[0], seq[-1])
    if k_prime is None:
        lower: Fraction | None = None
        lower_ok: bool | None = None
    else:
        lower = Fraction(sum(hs), 1) / k_prime - k_prime
        lower_ok = Fraction(combined) >= lower

    direct = geodesic_between(seq[0], seq[-1])
    fellow = max(min(dist(v, w) for w in direct) for v in path)

    ok = (
        heights_ok
        and projections_ok
        and geodesics_ok
        and k_prime is not None
        and bool(lower_ok)
    )
    return StackCertificate(
        pieces=tuple(piece_ids),
        nu=tuple(seq),
        heights=hs,
        h_bound=h_bound,
        r_bound=r_bound,
        heights_ok=heights_ok,
        projection_values=projs,
        projections_ok=projections_ok,
        geodesic_values=geos,
        geodesics_ok=geodesics_ok,
        witness=witness,
        k_prime=k_prime,
        combined_height=combined,
        lower_bound=lower,
        lower_bound_ok=lower_ok,
        fellow_traveling=fellow,
        twisted_note=note,
        ok=ok,
    )


# -------------------------------------------------------------- collapse


@dataclass(frozen=True)
class CollapsedStack:
    """Block correspondence for one removed chain: which pieces vanished,
    which surviving slots were rewired, and the measured re-verification
    numbers for the new tube."""

    pieces: tuple[str, ...]
    certificate: StackCertificate
    left: Slot | None
    right: Slot | None
    new_identification: Identification | None
    new_marking: tuple[Slot, AbstractMarking] | None
    new_height: int | None
    sup_value: int | None
    sup_ok: bool | None
    clause_b_excesses: tuple[tuple[str, int], ...]

    def to_json(self) -> dict:
        return {
            "pieces": list(self.pieces),
            "certificate": self.certificate.to_json(),
            "left": _slot_name(self.left) if self.left else None,
            "right": _slot_name(self.right) if self.right else None,
            "new_identification": (
                self.new_identification.to_json() if self.new_identification else None
            ),
            "new_marking": (
                [_slot_name(self.new_marking[0]), self.new_marking[1].to_json()]
                if self.new_marking
                else None
            ),
            "new_height": self.new_height,
            "sup_value": self.sup_value,
            "sup_ok": self.sup_ok,
            "clause_b_excesses": [list(t) for t in self.clause_b_excesses],
        }


@dataclass(frozen=True)
class CollapseResult:
    collapsed: GluingGraph
    stacks: tuple[CollapsedStack, ...]
    fibered: bool
    r_prime: int
    note: str

    @property
    def ok(self) -> bool:
        return all(s.certificate.ok for s in self.stacks)

    def to_json(self, emit_correspondence: bool = False) -> dict:
        out = {
            "collapsed": self.collapsed.to_json(),
            "stacks": [s.to_json() for s in self.stacks],
            "fibered": self.fibered,
            "r_prime": self.r_prime,
            "note": self.note,
            "ok": self.ok,
        }
        if emit_correspondence:
            out["correspondence"] = [
                {
                    "stack": list(s.pieces),
                    "slots": [
                        _slot_name(t) for t in (s.left, s.right) if t is not None
                    ],
                }
                for s in self.stacks
            ]
        return out


def measured_r_bound(x: GluingGraph, denom_bound: int | None = None) -> int:
    """Smallest bound at which every decorated slot clears the projection
    clause and every compressible slot clears the meridian clause."""
    table = induced_markings(x)
    hts = heights(x, table)
    best = 0
    for slot in x.slots():
        nu = table.nu(*slot)
        if nu is None:
            continue
        best = max(best, sup_projection(x.decoration(slot), nu, denom_bound).value)
        boundary = x.boundary_of(slot)
        if boundary.compressible:
            assert boundary.disks is not None
            h = hts.height(*slot)
            assert h is not None
            best = max(best, h - disk_distance(nu, boundary.disks))
    return best


def _stack_components(x: GluingGraph) -> list[list[str]]:
    """Connected chains of bundle pieces, each ordered so that any twisted
    piece comes last; cycles are cut at the lexicographically smallest
    piece."""
    bundle_ids = [pid for pid, _ in x.pieces if x.spec_of(pid).is_bundle]
    bundle_set = set(bundle_ids)
    neighbors: dict[str, list[str]] = {pid: [] for pid in bundle_ids}
    for pid in bundle_ids:
        for b in x.spec_of(pid).nontoroidal():
            slot = (pid, b.id)
            if not x.is_buried(slot):
                continue
            partner, _ = x.psi(slot)
            if partner[0] in bundle_set and partner[0] != pid:
                neighbors[pid].append(partner[0])

    seen: set[str] = set()
    stacks: list[list[str]] = []
    for pid in bundle_ids:
        if pid in seen:
            continue
        comp = {pid}
        frontier = [pid]
        while frontier:
            cur = frontier.pop()
            for nxt in neighbors[cur]:
                if nxt not in comp:
                    comp.add(nxt)
                    frontier.append(nxt)
        seen |= comp
        ends = sorted(p for p in comp if len(set(neighbors[p])) < 2)
        if not ends:
            start = min(comp)
        else:
            # a twisted piece or a folded slot must close the chain, so
            # start the walk from a plain end when one exists
            plain_ends = [
                p
                for p in ends
                if x.spec_of(p).kind == TRIVIAL_IBUNDLE and _fold_slot(x, p) is None
            ]
            start = plain_ends[0] if plain_ends else ends[0]
        order = [start]
        prev = None
        while len(order) < len(comp):
            nxt = [p for p in set(neighbors[order[-1]]) if p != prev]
            assert nxt, "bundle chain walk stalled"
            prev = order[-1]
            order.append(min(nxt))
        stacks.append(order)
    return sorted(stacks, key=lambda s: s[0])


def _outer_attachment(
    x: GluingGraph, slot: Slot
) -> tuple[Slot, SlotMap] | None:
    """The non-bundle slot glued onto a stack end, with the chart pull."""
    if not x.is_buried(slot):
        return None
    partner, pull = x.psi(slot)
    return partner, pull


def _collapsed_graph(
    x: GluingGraph,
    removed: set[str],
    new_idents: list[Identification],
    new_markings: list[tuple[Slot, AbstractMarking]],
) -> GluingGraph:
    pieces = tuple(sorted((p for p in x.pieces if p[0] not in removed)))
    kept = tuple(
        i
        for i in x.identifications
        if i.piece_a not in removed and i.piece_b not in removed
    )
    lam = tuple(m for m in x.boundary_markings if m[0][0] not in removed)
    return GluingGraph(
        manifolds=x.manifolds,
        pieces=pieces,
        identifications=kept + tuple(sorted(new_idents, key=lambda i: i.slot_a)),
        boundary_markings=lam + tuple(sorted(new_markings, key=lambda m: m[0])),
    ).validate()


def _fibered_collapse(
    x: GluingGraph, r_bound: int, h_bound: int, denom_bound: int | None
) -> CollapseResult:
    if any(
        x.spec_of(pid).kind != TRIVIAL_IBUNDLE or _fold_slot(x, pid) is not None
        for pid, _ in x.pieces
    ):
        return CollapseResult(
            collapsed=x,
            stacks=(),
            fibered=True,
            r_prime=measured_r_bound(x, denom_bound),
            note="fibered gluing case with a twisted bundle: left uncollapsed",
        )
    stacks = _stack_components(x)
    assert len(stacks) == 1, "connected all-bundle gluing must be one chain"
    order = stacks[0]
    steps = _resolve_stack(x, order)
    cert = combine_stack(x, order, h_bound, r_bound, denom_bound)
    _, flip_total, _ = _nu_sequence(x, steps)
    first, last = steps[0], steps[-1]
    assert last.exit is not None
    handle = x.boundary_of(first.entry).handle

    new_pid = "+".join(order)
    new_mid = f"B[{new_pid}]"
    spec = DecoratedManifoldSpec(
        new_mid,
        TRIVIAL_IBUNDLE,
        (
            BoundarySpec("F0", handle=handle, decoration=x.decoration(first.entry)),
            BoundarySpec("F1", handle=handle, decoration=x.decoration(last.exit)),
        ),
        bundle_map=flip_total,
    )
    idents: tuple[Identification, ...] = ()
    note = "fibered gluing case: open bundle chain combined"
    new_height = None
    if x.is_buried(first.entry):
        # a cycle: the closing identification survives as the self-gluing
        # of the combined bundle, pushing the F0 chart onto the F1 chart
        partner, pull = x.psi(last.exit)
        assert partner == first.entry
        idents = (Identification(new_pid, "F0", new_pid, "F1", pull),)
        note = "fibered gluing case: bundle cycle combined and self-glued"
    lam = []
    for slot, m in x.boundary_markings:
        if slot == first.entry:
            lam.append(((new_pid, "F0"), m))
        elif slot == last.exit:
            lam.append(((new_pid, "F1"), m))
    collapsed = GluingGraph(
        manifolds=(spec,),
        pieces=((new_pid, new_mid),),
        identifications=idents,
        boundary_markings=tuple(lam),
    ).validate()
    if idents:
        new_height = heights(collapsed).height(new_pid, "F0")
    sup = sup_projection(cert.nu[0], cert.nu[-1], denom_bound).value
    record = CollapsedStack(
        pieces=tuple(order),
        certificate=cert,
        left=None,
        right=None,
        new_identification=idents[0] if idents else None,
        new_marking=None,
        new_height=new_height,
        sup_value=sup,
        sup_ok=sup <= 2 * r_bound,
        clause_b_excesses=(),
    )
    return CollapseResult(
        collapsed=collapsed,
        stacks=(record,),
        fibered=True,
        r_prime=measured_r_bound(collapsed, denom_bound),
        note=note,
    )


def collapse_ibundles(
    x: GluingGraph,
    r_bound: int,
    h_bound: int,
    denom_bound: int | None = None,
) -> CollapseResult:
    """Remove every I-bundle chain, rewiring its neighbors by the composed
    chart maps; each removed chain carries a stack certificate and the new
    tube's measured combinatorics."""
    x.validate()
    if not any(x.spec_of(pid).is_bundle for pid, _ in x.pieces):
        return CollapseResult(
            collapsed=x,
            stacks=(),
            fibered=False,
            r_prime=measured_r_bound(x, denom_bound),
            note="no I-bundle pieces",
        )
    if all(x.spec_of(pid).is_bundle for pid, _ in x.pieces):
        return _fibered_collapse(x, r_bound, h_bound, denom_bound)

    orders = _stack_components(x)
    for order in orders:
        twisted = [
            x.spec_of(p).kind != TRIVIAL_IBUNDLE or _fold_slot(x, p) is not None
            for p in order
        ]
        if sum(twisted) > 1 or (any(twisted) and not twisted[-1]):
            return CollapseResult(
                collapsed=x,
                stacks=(),
                fibered=False,
                r_prime=measured_r_bound(x, denom_bound),
                note=f"doubly-twisted stack left uncollapsed: {', '.join(order)}",
            )

    removed: set[str] = set()
    new_idents: list[Identification] = []
    new_markings: list[tuple[Slot, AbstractMarking]] = []
    partial: list[dict] = []
    for order in orders:
        steps = _resolve_stack(x, order)
        cert = combine_stack(x, order, h_bound, r_bound, denom_bound)
        _, flip_total, _ = _nu_sequence(x, steps)
        first, last = steps[0], steps[-1]
        left = _outer_attachment(x, first.entry)
        fold = last.exit is not None and _fold_slot(x, last.piece) == last.exit[1]
        twisted_end = last.exit is None or fold
        right = None if twisted_end else _outer_attachment(x, last.exit)
        ident: Identification | None = None
        pushed: tuple[Slot, AbstractMarking] | None = None

        if twisted_end:
            # the chain folds back on itself: the surviving neighbor slot
            # is glued to itself by a conjugated involution
            assert left is not None, "twisted chain with a free end is fibered"
            l_slot, m_left = left
            if fold:
                assert last.exit is not None
                _, phi_node = x.psi(last.exit)
            else:
                spec_tw = x.spec_of(last.piece)
                assert spec_tw.bundle_map is not None
                phi_node = spec_tw.bundle_map
            up = flip_total.inverse().compose(m_left)
            psi_star = up.inverse().compose(phi_node).compose(up)
            ident = Identification(l_slot[0], l_slot[1], l_slot[0], l_slot[1], psi_star)
        elif left is not None and right is not None:
            l_slot, m_left = left
            r_slot, m_right = right
            psi_star = m_right.inverse().compose(flip_total.inverse()).compose(m_left)
            ident = Identification(l_slot[0], l_slot[1], r_slot[0], r_slot[1], psi_star)
        elif left is not None and right is None:
            # far end unburied: the neighbor slot opens up, inheriting any
            # declared free-boundary marking through the chain
            assert last.exit is not None
            l_slot, m_left = left
            free = x.lam(last.exit)
            if free is not None:
                pushed = (l_slot, m_left.inverse().compose(flip_total).apply(free))
        elif right is not None:
            assert last.exit is not None
            r_slot, m_right = right
            free = x.lam(first.entry)
            if free is not None:
                down = m_right.inverse().compose(flip_total.inverse())
                pushed = (r_slot, down.apply(free))

        removed.update(order)
        if ident is not None:
            new_idents.append(ident)
        if pushed is not None:
            new_markings.append(pushed)
        partial.append(
            {
                "order": tuple(order),
                "cert": cert,
                "left": left[0] if left else None,
                "right": right[0] if right else None,
                "ident": ident,
                "pushed": pushed,
            }
        )

    collapsed = _collapsed_graph(x, removed, new_idents, new_markings)
    table = induced_markings(collapsed)
    hts = heights(collapsed, table)

    records = []
    for item in partial:
        ident = item["ident"]
        new_height = None
        excesses: list[tuple[str, int]] = []
        if ident is not None:
            new_height = hts.height(*ident.slot_a)
            sides = {ident.slot_a, ident.slot_b}
            for slot in sorted(sides):
                boundary = collapsed.boundary_of(slot)
                if not boundary.compressible:
                    continue
                assert boundary.disks is not None
                nu = table.nu(*slot)
                h = hts.height(*slot)
                assert nu is not None and h is not None
                excesses.append((_slot_name(slot), h - disk_distance(nu, boundary.disks)))
        cert = item["cert"]
        sup = sup_projection(cert.nu[0], cert.nu[-1], denom_bound).value
        records.append(
            CollapsedStack(
                pieces=item["order"],
                certificate=cert,
                left=item["left"],
                right=item["right"],
                new_identification=ident,
                new_marking=item["pushed"],
                new_height=new_height,
                sup_value=sup,
                sup_ok=sup <= 2 * r_bound,
                clause_b_excesses=tuple(excesses),
            )
        )

    return CollapseResult(
        collapsed=collapsed,
        stacks=tuple(records),
        fibered=False,
        r_prime=measured_r_bound(collapsed, denom_bound),
        note="",
    )


# ------------------------------------------------------------ compression


@dataclass(frozen=True)
class CompressionStep:
    """Attach one compression body by its exterior boundary."""

    piece_id: str
    body: DecoratedManifoldSpec
    target: Slot
    attach: SlotMap

    def __post_init__(self) -> None:
        if self.body.kind != COMPRESSION_BODY:
            raise ValidationError(f"step piece {self.piece_id} is not a compression body")


def build_compression(
    base: DecoratedManifoldSpec,
    steps: Sequence[CompressionStep],
    budget: int | None = None,
    base_piece: str = "p0",
) -> GluingGraph:
    """Inductively glue compression bodies onto free slots of a growing
    gluing, starting from the bare piece.  The budget caps the total piece
    count; by default one base piece plus two bodies per base boundary."""
    if budget is None:
        budget = 1 + 2 * len(base.nontoroidal())
    manifolds: dict[str, DecoratedManifoldSpec] = {base.id: base}
    pieces: list[tuple[str, str]] = [(base_piece, base.id)]
    idents: list[Identification] = []
    buried: set[Slot] = set()
    known: set[Slot] = {(base_piece, b.id) for b in base.nontoroidal()}

    for step in steps:
        if len(pieces) + 1 > budget:
            raise ValidationError(f"compression budget exceeded: {budget} pieces")
        if step.target not in known:
            raise ValidationError(f"unknown attachment slot {_slot_name(step.target)}")
        if step.target in buried:
            raise ValidationError(f"attachment to buried slot {_slot_name(step.target)}")
        if any(pid == step.piece_id for pid, _ in pieces):
            raise ValidationError(f"piece id {step.piece_id} reused")
        existing = manifolds.get(step.body.id)
        if existing is not None and existing != step.body:
            raise ValidationError(f"conflicting manifold spec {step.body.id}")
        manifolds[step.body.id] = step.body
        pieces.append((step.piece_id, step.body.id))
        exterior = step.body.exterior_boundary().id
        source = (step.piece_id, exterior)
        idents.append(Identification(*source, *step.target, map=step.attach))
        buried.add(step.target)
        buried.add(source)
        known |= {(step.piece_id, b.id) for b in step.body.nontoroidal()}

    return GluingGraph(
        manifolds=tuple(manifolds.values()),
        pieces=tuple(pieces),
        identifications=tuple(idents),
    ).validate()


# ---------------------------------------------------------- decomposition


@dataclass(frozen=True)
class Component:
    pieces: tuple[str, ...]
    kind: str
    identifications: tuple[Identification, ...]

    def to_json(self) -> dict:
        return {
            "pieces": list(self.pieces),
            "kind": self.kind,
            "identifications": [i.to_json() for i in self.identifications],
        }


@dataclass(frozen=True)
class DecompositionResult:
    full: GluingGraph
    components: tuple[Component, ...]
    cut: tuple[Identification, ...]

    def cut_slots(self) -> tuple[tuple[Slot, Slot], ...]:
        return tuple((i.slot_a, i.slot_b) for i in self.cut)

    def reglue(self) -> GluingGraph:
        """Reassemble the full decomposition from the partition; the kept
        and cut identifications must tile the original list exactly."""
        kept = {id(i) for c in self.components for i in c.identifications}
        kept |= {id(i) for i in self.cut}
        if len(kept) != len(self.full.identifications):
            raise ValidationError("decomposition does not partition the identifications")
        return GluingGraph(
            manifolds=self.full.manifolds,
            pieces=self.full.pieces,
            identifications=self.full.identifications,
            boundary_markings=self.full.boundary_markings,
        ).validate()

    def to_json(self) -> dict:
        return {
            "full": self.full.to_json(),
            "components": [c.to_json() for c in self.components],
            "cut": [i.to_json() for i in self.cut],
        }


def _expand_splittings(x: GluingGraph) -> GluingGraph:
    """Replace each piece by its declared core/compression-body splitting;
    pieces without metadata stand for themselves."""
    spec_by_id = {m.id: m for m in x.manifolds}
    pieces: list[tuple[str, str]] = []
    idents: list[Identification] = []
    # per original piece: boundary id -> (new piece, new boundary)
    slot_map: dict[Slot, Slot] = {}
    for pid, mid in x.pieces:
        spec = x.spec_of(pid)
        split = spec.splitting
        if split is None:
            pieces.append((pid, mid))
            for b in spec.boundaries:
                slot_map[(pid, b.id)] = (pid, b.id)
            continue
        covered: dict[str, Slot] = {}
        for sub in split.pieces:
            sub_spec = spec_by_id.get(sub.manifold)
            if sub_spec is None:
                raise ValidationError(
                    f"piece {pid}: splitting references unknown manifold {sub.manifold}"
                )
            sub_pid = f"{pid}/{sub.id}"
            pieces.append((sub_pid, sub.manifold))
            for parent_bdry, sub_bdry in sub.boundaries:
                if not spec.has_boundary(parent_bdry):
                    raise ValidationError(
                        f"piece {pid}: splitting maps unknown boundary {parent_bdry}"
                    )
                if not sub_spec.has_boundary(sub_bdry):
                    raise ValidationError(
                        f"piece {pid}: splitting targets unknown boundary "
                        f"{sub.manifold}:{sub_bdry}"
                    )
                if parent_bdry in covered:
                    raise ValidationError(
                        f"piece {pid}: boundary {parent_bdry} split twice"
                    )
                covered[parent_bdry] = (sub_pid, sub_bdry)
        for b in spec.nontoroidal():
            if b.id not in covered:
                raise ValidationError(
                    f"piece {pid}: splitting leaves boundary {b.id} unplaced"
                )
            slot_map[(pid, b.id)] = covered[b.id]
        for sub_a, bdry_a, sub_b, bdry_b, map_json in split.identifications:
            owners = [s.manifold for s in split.pieces if s.id == sub_a]
            if not owners:
                raise ValidationError(
                    f"piece {pid}: splitting identification names unknown part {sub_a}"
                )
            spec_a = spec_by_id[owners[0]]
            handle = spec_a.boundary(bdry_a).handle
            assert handle is not None
            idents.append(
                Identification(
                    f"{pid}/{sub_a}",
                    bdry_a,
                    f"{pid}/{sub_b}",
                    bdry_b,
                    SlotMap.from_json(handle, map_json),
                )
            )
    for ident in x.identifications:
        a = slot_map[ident.slot_a]
        b = slot_map[ident.slot_b]
        idents.append(Identification(a[0], a[1], b[0], b[1], ident.map))
    lam = tuple((slot_map[slot], m) for slot, m in x.boundary_markings)
    return GluingGraph(
        manifolds=x.manifolds,
        pieces=tuple(pieces),
        identifications=tuple(idents),
        boundary_markings=lam,
    ).validate()


def _is_exterior_side(x: GluingGraph, slot: Slot) -> bool:
    spec = x.spec_of(slot[0])
    return (
        spec.kind == COMPRESSION_BODY and spec.exterior_boundary().id == slot[1]
    )


def full_and_maximal_decomposition(x: GluingGraph) -> DecompositionResult:
    """Expand every declared splitting, then keep exactly the
    identifications meeting a compression body's exterior boundary; the
    connected groups under the kept identifications are the components."""
    full = _expand_splittings(x)
    kept: list[Identification] = []
    cut: list[Identification] = []
    for ident in full.identifications:
        if _is_exterior_side(full, ident.slot_a) or _is_exterior_side(full, ident.slot_b):
            kept.append(ident)
        else:
            cut.append(ident)

    parent: dict[str, str] = {pid: pid for pid, _ in full.pieces}

    def find(p: str) -> str:
        while parent[p] != p:
            parent[p] = parent[parent[p]]
            p = parent[p]
        return p

    for ident in kept:
        ra, rb = find(ident.piece_a), find(ident.piece_b)
        if ra != rb:
            parent[ra] = rb

    groups: dict[str, list[str]] = {}
    for pid, _ in full.pieces:
        groups.setdefault(find(pid), []).append(pid)
    by_ident: dict[str, list[Identification]] = {root: [] for root in groups}
    for ident in kept:
        by_ident[find(ident.piece_a)].append(ident)

    components = []
    for root in sorted(groups, key=lambda r: min(groups[r])):
        members = tuple(sorted(groups[root]))
        cores = [p for p in members if full.spec_of(p).kind != COMPRESSION_BODY]
        assert len(cores) <= 1, "kept identifications cannot join two cores"
        kind = "compression-of-core" if cores else "compression-body-chain"
        components.append(Component(members, kind, tuple(by_ident[root])))
    return DecompositionResult(full=full, components=tuple(components), cut=tuple(cut))


# ------------------------------------------------------------ transparency


@dataclass(frozen=True)
class TransparencyReport:
    piece: str
    transparent: tuple[str, ...]
    adjusted: tuple[tuple[str, tuple[tuple[str, str], ...]], ...]
    removed: tuple[str, ...]
    induced: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "piece": self.piece,
            "transparent": list(self.transparent),
            "adjusted": {
                tid: [list(e) for e in fp] for tid, fp in self.adjusted
            },
            "removed": list(self.removed),
            "induced": list(self.induced),
        }


def transparency_and_induced_charsub(x: GluingGraph, piece_id: str) -> TransparencyReport:
    """Classify the piece's declared JSJ windows: an I-bundle is
    transparent when its whole footprint sits on unburied boundaries, a
    solid torus when at least two footprint annuli do (keeping only those
    annuli); declared-parallel tori with equal adjusted footprints
    collapse to one representative."""
    spec = x.spec_of(piece_id)
    if not spec.jsj:
        raise ValidationError(f"piece {piece_id} carries no JSJ metadata")
    for piece in spec.jsj:
        for bdry, _ in piece.footprint:
            if not spec.has_boundary(bdry):
                raise ValidationError(
                    f"JSJ footprint references unknown boundary {bdry}"
                )

    def unburied(bdry: str) -> bool:
        return not x.is_buried((piece_id, bdry))

    transparent: list[str] = []
    adjusted: list[tuple[str, tuple[tuple[str, str], ...]]] = []
    tori: list[tuple[str, tuple[tuple[str, str], ...], str]] = []
    for piece in spec.jsj:
        if piece.type == "ibundle":
            if all(unburied(b) for b, _ in piece.footprint):
                transparent.append(piece.id)
        elif piece.type == "solidtorus":
            free = tuple(e for e in piece.footprint if unburied(e[0]))
            if len(free) >= 2:
                transparent.append(piece.id)
                adjusted.append((piece.id, free))
                tori.append((piece.id, free, piece.parallel_class))

    removed: list[str] = []
    kept_tori: list[str] = []
    seen: dict[tuple[str, tuple], str] = {}
    for tid, footprint, parallel in sorted(tori):
        if parallel and (parallel, footprint) in seen:
            removed.append(tid)
            continue
        if parallel:
            seen[(parallel, footprint)] = tid
        kept_tori.append(tid)

    windows = [
        p.id for p in spec.jsj if p.type == "ibundle" and p.id in transparent
    ]
    return TransparencyReport(
        piece=piece_id,
        transparent=tuple(sorted(transparent)),
        adjusted=tuple(adjusted),
        removed=tuple(sorted(removed)),
        induced=tuple(sorted(windows + kept_tori)),
    )
