"""Command line front end.

Exit codes: 0 success, 1 usage, 2 malformed file, 3 error-bound
violation, 4 convergence failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import codec, quantizer
from .correction import (BoundViolationError, ConvergenceError,
                         CorrectionConfig, run_correction)
from .grid import ScalarField
from .parallel import SyncStrategy, run_parallel
from .quantizer import quantize, relative_to_absolute
from .synth import NoiseSpec, constant, perlin, ramp
from .topology import compare_plmss, compute_segmentation, find_extrema

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_BOUND = 3
EXIT_CONVERGENCE = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; this tool reserves 2 for file
    # format errors, so route usage failures to exit code 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _triple(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(
            f"expected NXxNY or NXxNYxNZ, got {text!r}")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer extent in {text!r}")
    if len(vals) == 2:
        vals.append(1)
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"extents must be >= 1 in {text!r}")
    return tuple(vals)


def _triple_list(text: str) -> list[tuple[int, int, int]]:
    return [_triple(part) for part in text.split(",") if part]


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def _read_bytes(path: str) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"no such file: {path}")
    return p.read_bytes()


def _load_field(path: str) -> ScalarField:
    return codec.read_field(_read_bytes(path))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_output(path: str, data: bytes, outputs: dict) -> None:
    Path(path).write_bytes(data)
    outputs[path] = _sha256(data)


def _resolve_bound(args, field: ScalarField) -> float:
    if getattr(args, "rel_eb", None) is not None:
        return relative_to_absolute(field, args.rel_eb)
    return float(args.abs_eb)


def _add_bound_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--rel-eb", type=float,
                       help="error bound relative to the value range")
    group.add_argument("--abs-eb", type=float, help="absolute error bound")


def _emit_report(report: dict, dest: str | None) -> None:
    if dest is None:
        return
    text = json.dumps(report, indent=2, sort_keys=True)
    if dest == "-":
        print(text)
    else:
        Path(dest).write_text(text + "\n")


def _base_report(command: str, inputs: dict, outputs: dict, started: float) -> dict:
    return {
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "wall_seconds": time.perf_counter() - started,
    }


def cmd_gen(args) -> int:
    started = time.perf_counter()
    if args.kind == "perlin":
        field = perlin(NoiseSpec(dims=args.dims, seed=args.seed,
                                 frequency=args.frequency, octaves=args.octaves))
    elif args.kind == "ramp":
        field = ramp(args.dims, args.coefficients)
    else:
        field = constant(args.dims, args.value)
    outputs: dict = {}
    _write_output(args.out, codec.write_field(field, args.precision), outputs)
    report = _base_report("gen", {}, outputs, started)
    report.update({
        "kind": args.kind,
        "dims": list(field.dims),
        "seed": args.seed,
        "frequency": args.frequency,
        "octaves": args.octaves,
        "vertex_count": field.vertex_count,
    })
    _emit_report(report, args.report)
    print(f"wrote {args.out}: {args.kind} field {field.dims}")
    return EXIT_OK


def cmd_compress(args) -> int:
    started = time.perf_counter()
    raw = _read_bytes(args.input)
    field = codec.read_field(raw)
    xi_abs = _resolve_bound(args, field)
    payload, recon = quantize(field, xi_abs)
    payload_data = payload.to_bytes()
    decomp_data = codec.write_field(recon)
    outputs: dict = {}
    _write_output(args.payload_out, payload_data, outputs)
    _write_output(args.decomp_out, decomp_data, outputs)
    original_bytes = field.vertex_count * 8
    report = _base_report("compress", {args.input: _sha256(raw)}, outputs, started)
    report.update({
        "xi_abs": xi_abs,
        "bit_width": payload.bit_width,
        "original_bytes": original_bytes,
        "payload_bytes": len(payload_data),
        "cr_base": original_bytes / len(payload_data),
    })
    _emit_report(report, args.report)
    print(f"wrote {args.payload_out} ({len(payload_data)} bytes, "
          f"{payload.bit_width}-bit codes) and {args.decomp_out}")
    return EXIT_OK


def cmd_correct(args) -> int:
    started = time.perf_counter()
    raw_f = _read_bytes(args.original)
    raw_g = _read_bytes(args.decompressed)
    original = codec.read_field(raw_f)
    decompressed = codec.read_field(raw_g)
    xi_abs = _resolve_bound(args, original)
    config = CorrectionConfig(xi_abs=xi_abs, tau=args.tau,
                              max_outer_iterations=args.max_iterations)
    input_distortions = compare_plmss(original, decompressed).counts()

    stats = None
    if args.strategy == "serial":
        if args.blocks != (1, 1, 1):
            raise ValueError("--blocks requires --strategy lockstep or relaxed")
        result = run_correction(original, decompressed, config)
    else:
        result, stats = run_parallel(original, decompressed, config,
                                     block_grid=args.blocks,
                                     strategy=SyncStrategy(args.strategy),
                                     workers=args.workers)

    edits_data = codec.encode_edits(result.edits, xi_abs, config.tau)
    outputs: dict = {}
    _write_output(args.edits_out, edits_data, outputs)
    if args.corrected_out:
        _write_output(args.corrected_out,
                      codec.write_field(result.corrected), outputs)

    inputs = {args.original: _sha256(raw_f), args.decompressed: _sha256(raw_g)}
    report = _base_report("correct", inputs, outputs, started)
    report.update({
        "config": {
            "xi_abs": config.xi_abs,
            "tau": config.tau,
            "max_outer_iterations": config.max_outer_iterations,
            "strategy": args.strategy,
            "blocks": list(args.blocks),
            "workers": args.workers,
        },
        "input_distortions": input_distortions,
        "verification": result.verification.counts(),
        "edit_count": result.edits.count,
        "edit_ratio": result.edits.ratio,
        "edits_bytes": len(edits_data),
        "iterations": result.iterations,
        "edits_per_iteration": list(result.edits_per_iteration),
        "max_vertex_edits": result.max_vertex_edits,
    })
    if stats is not None:
        report["parallel"] = stats.to_dict()
    _emit_report(report, args.report)
    print(f"corrected with {result.edits.count} edits "
          f"({result.edits.ratio:.4%} of vertices), wrote {args.edits_out}")
    return EXIT_OK


def cmd_apply(args) -> int:
    started = time.perf_counter()
    raw_g = _read_bytes(args.decompressed)
    raw_e = _read_bytes(args.edits)
    decompressed = codec.read_field(raw_g)
    edits, xi_abs, tau = codec.decode_edits_meta(raw_e)
    corrected = edits.apply_to(decompressed)
    outputs: dict = {}
    _write_output(args.out, codec.write_field(corrected), outputs)
    inputs = {args.decompressed: _sha256(raw_g), args.edits: _sha256(raw_e)}
    report = _base_report("apply", inputs, outputs, started)
    report.update({
        "edit_count": edits.count,
        "edit_ratio": edits.ratio,
        "xi_abs": xi_abs,
        "tau": tau,
    })
    _emit_report(report, args.report)
    print(f"applied {edits.count} edits, wrote {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    started = time.perf_counter()
    raw_ref = _read_bytes(args.reference)
    raw_test = _read_bytes(args.test)
    reference = codec.read_field(raw_ref)
    test = codec.read_field(raw_test)
    diff = compare_plmss(reference, test)
    inputs = {args.reference: _sha256(raw_ref), args.test: _sha256(raw_test)}
    report = _base_report("verify", inputs, {}, started)
    report["distortions"] = diff.to_dict()
    _emit_report(report, args.report)
    if diff.is_clean:
        print("clean: segmentations and extrema agree")
    else:
        print("distorted: " + json.dumps(diff.counts()))
    return EXIT_OK


def cmd_segment(args) -> int:
    started = time.perf_counter()
    raw = _read_bytes(args.input)
    field = codec.read_field(raw)
    labels = compute_segmentation(field)
    extrema = find_extrema(field)
    outputs: dict = {}
    if args.asc_out:
        _write_output(args.asc_out,
                      codec.write_labels(field.dims, labels.asc_target), outputs)
    if args.desc_out:
        _write_output(args.desc_out,
                      codec.write_labels(field.dims, labels.desc_target), outputs)
    pairs = {(int(a), int(d))
             for a, d in zip(labels.asc_target, labels.desc_target)}
    report = _base_report("segment", {args.input: _sha256(raw)}, outputs, started)
    report.update({
        "minima": len(extrema.minima),
        "maxima": len(extrema.maxima),
        "segments": len(pairs),
    })
    _emit_report(report, args.report)
    print(f"{len(extrema.minima)} minima, {len(extrema.maxima)} maxima, "
          f"{len(pairs)} segments")
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.perf_counter()
    raw_f = _read_bytes(args.original)
    raw_g = _read_bytes(args.decompressed)
    field = codec.read_field(raw_f)
    recon = codec.read_field(raw_g)
    xi_abs = _resolve_bound(args, field)
    config = CorrectionConfig(xi_abs=xi_abs, tau=args.tau)

    entries = []
    t0 = time.perf_counter()
    serial = run_correction(field, recon, config)
    serial_wall = time.perf_counter() - t0
    edits_data = codec.encode_edits(serial.edits, xi_abs, config.tau)
    entries.append({
        "strategy": "serial",
        "block_grid": [1, 1, 1],
        "iterations": serial.iterations,
        "edit_count": serial.edits.count,
        "edit_ratio": serial.edits.ratio,
        "wall_seconds": serial_wall,
    })
    for blocks in args.sweep_blocks:
        for strategy in args.strategies:
            t0 = time.perf_counter()
            _, stats = run_parallel(field, recon, config, block_grid=blocks,
                                    strategy=SyncStrategy(strategy),
                                    workers=args.workers)
            entry = stats.to_dict()
            entry["wall_seconds"] = time.perf_counter() - t0
            entries.append(entry)

    inputs = {args.original: _sha256(raw_f), args.decompressed: _sha256(raw_g)}
    report = _base_report("bench", inputs, {}, started)
    report.update({
        "xi_abs": xi_abs,
        "tau": config.tau,
        "workers": args.workers,
        "edits_bytes": len(edits_data),
        "entries": entries,
    })
    if args.payload:
        payload_bytes = len(_read_bytes(args.payload))
        cr = codec.compression_report(field.vertex_count * 8,
                                      payload_bytes, len(edits_data))
        report["compression"] = cr.to_dict()
    _emit_report(report, args.report)
    for e in entries:
        grid = "x".join(str(v) for v in e["block_grid"])
        extra = (f" rounds={e['rounds']} syncs={e['syncs']}"
                 if "rounds" in e else f" iterations={e['iterations']}")
        print(f"{e['strategy']:>8} {grid:>7}{extra} "
              f"wall={e['wall_seconds']:.3f}s")
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="topocorrect",
                     description="Correct extrema and segmentation distortions "
                                 "in lossy-compressed scalar fields")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic field file")
    p.add_argument("--dims", type=_triple, required=True,
                   help="grid extents, NXxNY or NXxNYxNZ")
    p.add_argument("--kind", choices=["perlin", "ramp", "constant"],
                   default="perlin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frequency", type=float, default=4.0,
                   help="perlin lattice cells per axis")
    p.add_argument("--octaves", type=int, default=3)
    p.add_argument("--coefficients", type=_floats, default=(1.0, 2.0, 4.0),
                   help="ramp axis coefficients, comma separated")
    p.add_argument("--value", type=float, default=0.0,
                   help="constant field value")
    p.add_argument("--precision", choices=["f32", "f64"], default="f64")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("compress", help="quantize a field under an error bound")
    p.add_argument("--in", dest="input", required=True)
    _add_bound_flags(p)
    p.add_argument("--out-payload", dest="payload_out", required=True)
    p.add_argument("--out-decomp", dest="decomp_out", required=True,
                   help="where to write the reconstructed field")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_compress)

    p = sub.add_parser("correct",
                       help="correct a decompressed field against its original")
    p.add_argument("--orig", dest="original", required=True)
    p.add_argument("--decomp", dest="decompressed", required=True)
    _add_bound_flags(p)
    p.add_argument("--tau", type=float, default=None,
                   help="minimum edit decrement (default xi_abs/1024)")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--strategy", choices=["serial", "lockstep", "relaxed"],
                   default="serial")
    p.add_argument("--blocks", type=_triple, default=(1, 1, 1),
                   help="block grid BXxBYxBZ for parallel strategies")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--edits-out", required=True)
    p.add_argument("--corrected-out",
                   help="optionally write the corrected field")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_correct)

    p = sub.add_parser("apply", help="apply an edits file to a decompressed field")
    p.add_argument("--decomp", dest="decompressed", required=True)
    p.add_argument("--edits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_apply)

    p = sub.add_parser("verify",
                       help="report segmentation distortions of test vs reference")
    p.add_argument("--ref", dest="reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("segment", help="write segmentation label files")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-asc", dest="asc_out", help="labels by reached minimum")
    p.add_argument("--out-desc", dest="desc_out", help="labels by reached maximum")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_segment)

    p = sub.add_parser("bench",
                       help="time correction across block grids and strategies")
    p.add_argument("--orig", dest="original", required=True)
    p.add_argument("--decomp", dest="decompressed", required=True)
    _add_bound_flags(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--sweep-blocks", dest="sweep_blocks", type=_triple_list,
                   default=[(1, 1, 1), (2, 1, 1), (2, 2, 1), (2, 2, 2)],
                   help="comma-separated block grids")
    p.add_argument("--strategies", type=lambda s: s.split(","),
                   default=["lockstep", "relaxed"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--payload",
                   help="compressed payload file for compression-ratio figures")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.handler(args))
    except (codec.FormatError, quantizer.PayloadFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except BoundViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
