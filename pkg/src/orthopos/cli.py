"""Command-line surface: gen, verify, convert, bench, scores.

Exit codes: 0 success, 1 verification failure, 2 usage error,
3 mathematical precondition failure (e.g. determinant -1 on conversion).

All randomness flows through numpy's default PCG64 generator seeded from
``--seed``, so identical invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import tensorio
from .attention import AttentionBatch, modulated_scores_fast
from .encoders import (
    GroupInterpretation,
    grid_positions,
    interpretation_from_params,
    make_periodic_generator,
    near_identity_params,
    position_matrices,
    random_params,
    seq_powers,
    tree_positions,
)
from .errors import NotSpecialOrthogonal, OrthoposError
from .orthogonal import GeneratorParam
from .paths import Kind, StructureSpec
from .rotary import RotarySpec, angles_to_generator, generator_to_angles
from .verification import DEFAULT_SUITES, run_suites

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_MATH = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthopos",
        description="Generate, verify, convert, and benchmark orthogonal "
                    "positional operators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="build a position tensor or generator stack")
    gen.add_argument("--kind", choices=["seq", "tree", "grid"], default="seq")
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--max-pos", type=int, default=None,
                     help="largest sequence position (seq)")
    gen.add_argument("--k", type=int, default=2, help="branching factor (tree)")
    gen.add_argument("--depth", type=int, default=None,
                     help="complete-tree depth (tree)")
    gen.add_argument("--axes", type=int, default=2, help="axis count (grid)")
    gen.add_argument("--extents", type=str, default=None,
                     help="comma-separated per-axis extents (grid)")
    gen.add_argument("--period", type=str, default=None,
                     help="cyclic order, one int or comma list")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--init", choices=["random", "rotary", "near-identity"],
                     default="random")
    gen.add_argument("--param-file", type=str, default=None,
                     help="JSON file with explicit parameter matrices")
    gen.add_argument("--emit", choices=["tensor", "generators"], default="tensor")
    gen.add_argument("--out", type=str, required=True)

    ver = sub.add_parser("verify", help="run self-check suites, report JSON")
    ver.add_argument("--suite", action="append", default=None,
                     choices=list(DEFAULT_SUITES),
                     help="suite name (repeatable; default: all)")
    ver.add_argument("--dim", type=int, default=4)
    ver.add_argument("--trials", type=int, default=None)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--tolerance", type=float, default=None,
                     help="override every suite tolerance (0 forces failure)")
    ver.add_argument("--out", type=str, default=None, help="write report here too")

    conv = sub.add_parser("convert", help="angles <-> generator conversion")
    conv.add_argument("--in", dest="infile", type=str, required=True,
                      help="JSON angle list or tensor dump with one slice")
    conv.add_argument("--out", type=str, default=None,
                      help="converted representation (dump or JSON)")
    conv.add_argument("--basis-out", type=str, default=None,
                      help="where to write the change-of-basis dump")

    bench = sub.add_parser("bench", help="builder timing and product counts")
    bench.add_argument("--dim", type=int, default=64)
    bench.add_argument("--seq-sizes", type=str, default="1,10,100,1000,10000")
    bench.add_argument("--k", type=int, default=2)
    bench.add_argument("--tree-depth", type=int, default=8)
    bench.add_argument("--grid-extents", type=str, default="32,32")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", type=str, default=None, help="write CSV here too")

    sc = sub.add_parser("scores", help="modulated attention scores for a batch file")
    sc.add_argument("--batch", type=str, required=True,
                    help="JSON batch description")
    sc.add_argument("--out", type=str, default=None)
    return parser


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _spec_from_args(args) -> StructureSpec:
    period = _parse_int_list(args.period) if args.period else None
    if args.kind == "seq":
        return StructureSpec.sequence(period=period[0] if period else None)
    if args.kind == "tree":
        return StructureSpec.tree(args.k)
    return StructureSpec.grid(args.axes, period=period)


def _params_for(spec: StructureSpec, dim: int, args) -> list[GeneratorParam]:
    if args.param_file:
        with open(args.param_file, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        mats = raw if isinstance(raw[0][0], list) else [raw]
        return [GeneratorParam(np.asarray(m, dtype=float)) for m in mats]
    rng = np.random.default_rng(args.seed)
    if args.init == "near-identity":
        return near_identity_params(spec, dim, rng)
    if args.init == "rotary":
        from .rotary import default_angle_ladder

        block = dim // spec.axes if spec.kind is Kind.GRID else dim
        params = []
        for _ in range(spec.generator_count):
            param, _gen = angles_to_generator(default_angle_ladder(block))
            params.append(param)
        return params
    return random_params(spec, dim, rng)


def _interpretation_for(spec: StructureSpec, dim: int, args) -> GroupInterpretation:
    if spec.period is not None:
        block = dim // spec.axes if spec.kind is Kind.GRID else dim
        gens = [make_periodic_generator(n, block).entries for n in spec.period]
        return GroupInterpretation(spec, tuple(gens))
    return interpretation_from_params(spec, _params_for(spec, dim, args))


def _complete_tree(depth: int, branching: int):
    level: list[tuple[int, ...]] = [()]
    out = [()]
    for _ in range(depth):
        level = [w + (j,) for w in level for j in range(1, branching + 1)]
        out.extend(level)
    return out


def _cmd_gen(args) -> int:
    spec = _spec_from_args(args)
    g = _interpretation_for(spec, args.dim, args)
    if args.emit == "generators":
        stack = np.stack(g.generators)
        tensorio.write_tensor(args.out, stack)
        print(f"nu={stack.shape[0]} dim={stack.shape[1]} products=0")
        return EXIT_OK
    if spec.kind is Kind.SEQUENCE:
        if args.max_pos is None:
            raise OrthoposError("seq generation needs --max-pos")
        tensor = seq_powers(g.generators[0], args.max_pos)
    elif spec.kind is Kind.TREE:
        if args.depth is None:
            raise OrthoposError("tree generation needs --depth")
        tensor = tree_positions(g, _complete_tree(args.depth, spec.branching))
    else:
        if args.extents is None:
            raise OrthoposError("grid generation needs --extents")
        extents = _parse_int_list(args.extents)
        tensor = grid_positions(g, extents)
    tensorio.write_tensor(args.out, tensor.matrices)
    print(f"nu={tensor.count} dim={tensor.dim} products={tensor.products_used}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_suites(args.suite, dim=args.dim, trials=args.trials,
                         seed=args.seed, tolerance=args.tolerance)
    report = {
        "suites": [r.to_json() for r in results],
        "pass": all(r.passed for r in results),
    }
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK if report["pass"] else EXIT_VERIFY_FAILED


def _cmd_convert(args) -> int:
    with open(args.infile, "rb") as fh:
        raw = fh.read()
    try:
        angles = json.loads(raw.decode("utf-8"))
        is_angles = isinstance(angles, list)
    except (UnicodeDecodeError, json.JSONDecodeError):
        is_angles = False
    if is_angles:
        spec = RotarySpec(2 * len(angles), tuple(float(a) for a in angles))
        param, generator = angles_to_generator(spec)
        from .rotary import rotation_block_matrix

        target = rotation_block_matrix(spec)
        residual = float(np.linalg.norm(generator.entries - target.entries))
        if args.out:
            tensorio.write_tensor(args.out, generator.entries)
        print(json.dumps({"direction": "angles-to-generator",
                          "dim": spec.dim, "residual": residual}))
        return EXIT_OK
    stack = tensorio.load_bytes(raw)
    if stack.shape[0] != 1:
        raise OrthoposError("generator dump must hold exactly one slice")
    spec, basis = generator_to_angles(stack[0])
    from .rotary import rotation_block_matrix

    recon = basis @ rotation_block_matrix(spec).entries @ basis.T
    residual = float(np.linalg.norm(recon - stack[0]))
    if args.basis_out:
        tensorio.write_tensor(args.basis_out, basis)
    payload = {"direction": "generator-to-angles", "dim": spec.dim,
               "angles": list(spec.angles), "residual": residual}
    text = json.dumps(payload)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = [("structure", "size", "nu", "products", "bound", "within_bound",
             "seconds")]
    seq_spec = StructureSpec.sequence()
    g_seq = interpretation_from_params(
        seq_spec, random_params(seq_spec, args.dim, rng))
    for p in _parse_int_list(args.seq_sizes):
        start = time.perf_counter()
        tensor = seq_powers(g_seq.generators[0], p)
        elapsed = time.perf_counter() - start
        bound = 2 * math.ceil(math.log2(max(p, 1))) + 1
        rows.append(("seq", f"p={p}", tensor.count, tensor.products_used,
                     bound, tensor.products_used <= bound, f"{elapsed:.4f}"))
    tree_spec = StructureSpec.tree(args.k)
    g_tree = interpretation_from_params(
        tree_spec, random_params(tree_spec, args.dim, rng))
    start = time.perf_counter()
    tensor = tree_positions(g_tree, _complete_tree(args.tree_depth, args.k))
    elapsed = time.perf_counter() - start
    bound = args.tree_depth * args.k
    rows.append(("tree", f"depth={args.tree_depth};k={args.k}", tensor.count,
                 tensor.products_used, bound,
                 tensor.products_used <= bound, f"{elapsed:.4f}"))
    extents = _parse_int_list(args.grid_extents)
    grid_spec = StructureSpec.grid(len(extents))
    g_grid = interpretation_from_params(
        grid_spec, random_params(grid_spec, args.dim, rng))
    start = time.perf_counter()
    tensor = grid_positions(g_grid, extents)
    elapsed = time.perf_counter() - start
    bound = sum(2 * math.ceil(math.log2(max(e - 1, 1))) + 1 for e in extents)
    rows.append(("grid", "x".join(str(e) for e in extents), tensor.count,
                 tensor.products_used, bound,
                 tensor.products_used <= bound, f"{elapsed:.4f}"))
    text = "\n".join(",".join(str(cell) for cell in row) for row in rows)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    ok = all(row[5] for row in rows[1:])
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def _cmd_scores(args) -> int:
    with open(args.batch, "r", encoding="utf-8") as fh:
        desc = json.load(fh)
    structure = desc.get("structure", {"kind": "seq"})
    kind = structure.get("kind", "seq")
    period = structure.get("period")
    if kind == "seq":
        spec = StructureSpec.sequence(period=period)
    elif kind == "tree":
        spec = StructureSpec.tree(int(structure.get("k", 2)))
    elif kind == "grid":
        spec = StructureSpec.grid(int(structure.get("axes", 2)), period=period)
    else:
        raise OrthoposError(f"unknown structure kind {kind!r}")
    queries = np.asarray(desc["queries"], dtype=float)
    keys = np.asarray(desc["keys"], dtype=float)
    dim = queries.shape[1]
    phi_q = np.asarray(desc.get("phi_q", np.eye(dim).tolist()), dtype=float)
    phi_k = np.asarray(desc.get("phi_k", np.eye(dim).tolist()), dtype=float)
    batch = AttentionBatch(queries, keys, keys, phi_q, phi_k, np.eye(dim))
    params = [GeneratorParam(np.asarray(p, dtype=float))
              for p in desc["params"]]
    g = interpretation_from_params(spec, params)
    qpos = [_decode_position(p, spec) for p in desc["query_positions"]]
    kpos = [_decode_position(p, spec) for p in desc["key_positions"]]
    absolute = desc.get("mode", "relative") == "absolute"
    scores = modulated_scores_fast(
        batch,
        position_matrices(g, qpos),
        position_matrices(g, kpos),
        absolute=absolute,
    )
    text = json.dumps({"scores": scores.tolist()})
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _decode_position(p, spec: StructureSpec):
    if spec.kind is Kind.SEQUENCE:
        return int(p)
    return tuple(int(c) for c in p)


_COMMANDS = {
    "gen": _cmd_gen,
    "verify": _cmd_verify,
    "convert": _cmd_convert,
    "bench": _cmd_bench,
    "scores": _cmd_scores,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NotSpecialOrthogonal as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH
    except OrthoposError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
