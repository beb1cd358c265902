"""Batch front-end.

Every command reads one input file, runs the corresponding pipeline, and
emits a deterministic JSON report carrying the input's content hash and
all parameters, so identical invocations are byte identical.  Exit codes
are fixed for scripting: 0 pass, 1 verdict fail, 2 parse trouble, 3
invariant violation, 4 the all-bundle fibered case.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from .errors import GlueforgeError, ParseError, ValidationError
from .gluing import check_bounded_combinatorics, validate_gluing
from .hypgraph import (
    all_pairs_distances,
    check_qconvex_stability,
    four_point_delta,
    geodesic_interval,
    quasiconvexity_constant,
    read_graph,
)
from .ioutil import canonical_dumps, sha256_of_text
from .model import build_skeleton, export_skeleton, verify_thickness
from .transforms import collapse_ibundles, full_and_maximal_decomposition

EXIT_PASS = 0
EXIT_VERDICT = 1
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_FIBERED = 4


@dataclass(frozen=True)
class RunConfig:
    """One fully resolved invocation."""

    command: str
    input: str
    r_bound: int
    d_bound: int
    h_bound: int
    eps0: float
    samples: int
    denom_bound: int | None
    out: str | None
    format: str
    seed: int
    emit_correspondence: bool

    def __post_init__(self) -> None:
        if self.r_bound < 1:
            raise ValidationError("R must be at least 1")
        if self.d_bound < 0:
            raise ValidationError("D must be non-negative")
        if self.h_bound < 0:
            raise ValidationError("h must be non-negative")
        if not self.eps0 > 0:
            raise ValidationError("eps0 must be positive")
        if self.samples < 2:
            raise ValidationError("sample count must be at least 2")
        if self.denom_bound is not None and self.denom_bound < 1:
            raise ValidationError("denominator bound must be at least 1")
        if self.format not in ("json", "obj"):
            raise ValidationError(f"unknown output format {self.format!r}")

    def params_json(self) -> dict:
        return {
            "R": self.r_bound,
            "D": self.d_bound,
            "h": self.h_bound,
            "eps0": self.eps0,
            "samples": self.samples,
            "denom_bound": self.denom_bound,
            "format": self.format,
            "seed": self.seed,
        }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glueforge",
        description="exact decorated-gluing toolkit: validation, certificates,"
        " collapse, decomposition, model skeletons, graph experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("validate", "parse a gluing file and check every structural invariant"),
        ("report", "certify bounded combinatorics at (R, D)"),
        ("collapse", "combine I-bundle stacks and rewire the gluing"),
        ("decompose", "expand splittings and cut along maximal compressions"),
        ("model", "assemble, verify and export the metric skeleton"),
        ("hyplab", "measure hyperbolicity and stability on a finite graph"),
    ):
        cmd = sub.add_parser(name, help=blurb)
        cmd.add_argument("--input", required=True, help="input file path")
        cmd.add_argument("--R", type=int, default=6, dest="r_bound")
        cmd.add_argument("--D", type=int, default=1, dest="d_bound")
        cmd.add_argument("--h", type=int, default=1, dest="h_bound")
        cmd.add_argument("--eps0", type=float, default=0.1)
        cmd.add_argument("--samples", type=int, default=9)
        cmd.add_argument("--denom-bound", type=int, default=None)
        cmd.add_argument("--out", default=None, help="write output here instead of stdout")
        cmd.add_argument("--format", choices=("json", "obj"), default="json")
        cmd.add_argument("--seed", type=int, default=0)
        if name == "collapse":
            cmd.add_argument(
                "--emit-correspondence",
                action="store_true",
                help="include the stack-to-slot table in the report",
            )
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        input=args.input,
        r_bound=args.r_bound,
        d_bound=args.d_bound,
        h_bound=args.h_bound,
        eps0=args.eps0,
        samples=args.samples,
        denom_bound=args.denom_bound,
        out=args.out,
        format=args.format,
        seed=args.seed,
        emit_correspondence=getattr(args, "emit_correspondence", False),
    )


def _read_input(cfg: RunConfig) -> str:
    try:
        with open(cfg.input, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {cfg.input}: {exc}") from exc


def _emit(cfg: RunConfig, payload: bytes) -> None:
    if cfg.out is None:
        sys.stdout.write(payload.decode())
        return
    with open(cfg.out, "wb") as fh:
        fh.write(payload)


def _emit_report(cfg: RunConfig, text: str, result: dict) -> None:
    envelope = {
        "command": cfg.command,
        "input_sha256": sha256_of_text(text),
        "params": cfg.params_json(),
        "result": result,
    }
    _emit(cfg, canonical_dumps(envelope).encode())


def cmd_validate(cfg: RunConfig) -> int:
    text = _read_input(cfg)
    x = validate_gluing(text)
    _emit_report(
        cfg,
        text,
        {
            "valid": True,
            "pieces": len(x.pieces),
            "identifications": len(x.identifications),
            "unburied": [f"{p}:{b}" for p, b in x.slots() if not x.is_buried((p, b))],
        },
    )
    return EXIT_PASS


def cmd_report(cfg: RunConfig) -> int:
    text = _read_input(cfg)
    x = validate_gluing(text)
    cert = check_bounded_combinatorics(x, cfg.r_bound, cfg.d_bound, cfg.denom_bound)
    _emit_report(cfg, text, cert.to_json())
    return EXIT_PASS if cert.passed else EXIT_VERDICT


def cmd_collapse(cfg: RunConfig) -> int:
    text = _read_input(cfg)
    x = validate_gluing(text)
    res = collapse_ibundles(x, cfg.r_bound, cfg.h_bound, cfg.denom_bound)
    _emit_report(cfg, text, res.to_json(emit_correspondence=cfg.emit_correspondence))
    if res.fibered:
        return EXIT_FIBERED
    return EXIT_PASS if res.ok else EXIT_VERDICT


def cmd_decompose(cfg: RunConfig) -> int:
    text = _read_input(cfg)
    x = validate_gluing(text)
    res = full_and_maximal_decomposition(x)
    _emit_report(cfg, text, res.to_json())
    return EXIT_PASS


def cmd_model(cfg: RunConfig) -> int:
    text = _read_input(cfg)
    x = validate_gluing(text)
    skeleton = build_skeleton(x, samples=cfg.samples)
    if cfg.format == "obj":
        _emit(cfg, export_skeleton(skeleton, "obj"))
        return EXIT_PASS
    report = verify_thickness(skeleton, cfg.eps0)
    _emit_report(
        cfg,
        text,
        {"skeleton": skeleton.to_json(), "thickness": report.to_json()},
    )
    return EXIT_PASS if report.ok else EXIT_VERDICT


def cmd_hyplab(cfg: RunConfig) -> int:
    text = _read_input(cfg)
    graph = read_graph(text)
    table = all_pairs_distances(graph)
    delta = four_point_delta(table)
    # the widest geodesic interval doubles as the stability test bed
    m = table.as_array()
    x, y = divmod(int(m.argmax()), table.n)
    interval = geodesic_interval(table, x, y)
    stability = check_qconvex_stability(table, interval, cfg.r_bound)
    _emit_report(
        cfg,
        text,
        {
            "vertices": table.n,
            "delta": [delta.numerator, delta.denominator],
            "diameter": int(m.max()),
            "interval": {
                "endpoints": [x, y],
                "vertices": interval,
                "quasiconvexity": quasiconvexity_constant(table, interval),
            },
            "stability": stability.to_dict(),
        },
    )
    return EXIT_PASS


_COMMANDS = {
    "validate": cmd_validate,
    "report": cmd_report,
    "collapse": cmd_collapse,
    "decompose": cmd_decompose,
    "model": cmd_model,
    "hyplab": cmd_hyplab,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return _COMMANDS[cfg.command](cfg)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GlueforgeError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
