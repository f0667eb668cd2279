import json

import numpy as np
import pytest

from topocorrect import ScalarField, codec, compute_segmentation
from topocorrect.cli import (EXIT_BOUND, EXIT_CONVERGENCE, EXIT_FORMAT,
                             EXIT_OK, EXIT_USAGE, main)


def run_cli(*argv):
    return main(list(argv))


def gen_field(tmp_path, name="f.pmszf", dims="12x12x6", seed=3, **extra):
    path = tmp_path / name
    argv = ["gen", "--dims", dims, "--seed", str(seed), "--out", str(path)]
    for flag, value in extra.items():
        argv += [f"--{flag.replace('_', '-')}", str(value)]
    assert run_cli(*argv) == EXIT_OK
    return path


def compress_field(tmp_path, field_path, rel="1e-2"):
    payload = tmp_path / "payload.bin"
    decomp = tmp_path / "decomp.pmszf"
    assert run_cli("compress", "--in", str(field_path), "--rel-eb", rel,
                   "--out-payload", str(payload),
                   "--out-decomp", str(decomp)) == EXIT_OK
    return payload, decomp


def write_dipped_ramp(tmp_path):
    """An 8x4 ramp plus a deep dip at vertex 5; corrigible within xi=3."""
    xs = np.arange(8, dtype=np.float64)
    ys = 0.1 * np.arange(4, dtype=np.float64)
    f = ScalarField((8, 4, 1), (xs[None, :] + ys[:, None]).reshape(-1))
    g_vals = f.values.copy()
    g_vals[5] = 2.5
    fp = tmp_path / "ramp_f.pmszf"
    gp = tmp_path / "ramp_g.pmszf"
    fp.write_bytes(codec.write_field(f))
    gp.write_bytes(codec.write_field(f.with_values(g_vals)))
    return fp, gp


def test_full_pipeline(tmp_path, capsys):
    field_path = gen_field(tmp_path, dims="16x16x8")
    payload, decomp = compress_field(tmp_path, field_path)

    edits = tmp_path / "edits.pmsze"
    corrected = tmp_path / "corrected.pmszf"
    report_path = tmp_path / "correct.json"
    assert run_cli("correct", "--orig", str(field_path), "--decomp", str(decomp),
                   "--rel-eb", "1e-2", "--edits-out", str(edits),
                   "--corrected-out", str(corrected),
                   "--report", str(report_path)) == EXIT_OK
    report = json.loads(report_path.read_text())
    assert all(v == 0 for v in report["verification"].values())
    assert report["edit_count"] == codec.decode_edits(edits.read_bytes()).count
    assert report["edits_bytes"] == len(edits.read_bytes())

    applied = tmp_path / "applied.pmszf"
    assert run_cli("apply", "--decomp", str(decomp), "--edits", str(edits),
                   "--out", str(applied)) == EXIT_OK
    assert applied.read_bytes() == corrected.read_bytes()

    capsys.readouterr()
    assert run_cli("verify", "--ref", str(field_path),
                   "--test", str(corrected)) == EXIT_OK
    assert "clean" in capsys.readouterr().out

    asc = tmp_path / "asc.bin"
    desc = tmp_path / "desc.bin"
    assert run_cli("segment", "--in", str(corrected), "--out-asc", str(asc),
                   "--out-desc", str(desc)) == EXIT_OK
    labels = compute_segmentation(codec.read_field(corrected.read_bytes()))
    _, asc_read = codec.read_labels(asc.read_bytes())
    _, desc_read = codec.read_labels(desc.read_bytes())
    assert np.array_equal(asc_read, labels.asc_target)
    assert np.array_equal(desc_read, labels.desc_target)


def test_verify_reports_distortions_without_failing(tmp_path, capsys):
    a = gen_field(tmp_path, name="a.pmszf", seed=1)
    b = gen_field(tmp_path, name="b.pmszf", seed=2)
    capsys.readouterr()
    assert run_cli("verify", "--ref", str(a), "--test", str(b)) == EXIT_OK
    assert "distorted" in capsys.readouterr().out


def test_correct_parallel_through_cli(tmp_path):
    field_path = gen_field(tmp_path, dims="16x16x8")
    _, decomp = compress_field(tmp_path, field_path)
    edits = tmp_path / "edits.pmsze"
    report_path = tmp_path / "r.json"
    assert run_cli("correct", "--orig", str(field_path), "--decomp", str(decomp),
                   "--rel-eb", "1e-2", "--strategy", "relaxed",
                   "--blocks", "2x2x1", "--workers", "2",
                   "--edits-out", str(edits),
                   "--report", str(report_path)) == EXIT_OK
    report = json.loads(report_path.read_text())
    assert report["parallel"]["strategy"] == "relaxed"
    assert report["parallel"]["block_grid"] == [2, 2, 1]
    assert report["parallel"]["syncs"] <= report["parallel"]["rounds"]
    assert all(v == 0 for v in report["verification"].values())


def test_gen_is_deterministic(tmp_path):
    a = gen_field(tmp_path, name="one.pmszf", seed=9)
    b = gen_field(tmp_path, name="two.pmszf", seed=9)
    assert a.read_bytes() == b.read_bytes()


def test_gen_ramp_constant_and_precision(tmp_path):
    ramp_path = tmp_path / "ramp.pmszf"
    assert run_cli("gen", "--kind", "ramp", "--dims", "3x3",
                   "--coefficients", "1,3", "--out", str(ramp_path)) == EXIT_OK
    ramp = codec.read_field(ramp_path.read_bytes())
    assert ramp.values.tolist() == [0, 1, 2, 3, 4, 5, 6, 7, 8]

    const_path = tmp_path / "const.pmszf"
    assert run_cli("gen", "--kind", "constant", "--dims", "4x2",
                   "--value", "2.5", "--out", str(const_path)) == EXIT_OK
    assert np.all(codec.read_field(const_path.read_bytes()).values == 2.5)

    f32_path = tmp_path / "small.pmszf"
    assert run_cli("gen", "--dims", "4x4", "--precision", "f32",
                   "--out", str(f32_path)) == EXIT_OK
    assert f32_path.read_bytes()[7] == 1  # f32 dtype code


def test_report_to_stdout(tmp_path, capsys):
    out = tmp_path / "f.pmszf"
    capsys.readouterr()
    assert run_cli("gen", "--dims", "4x4", "--out", str(out),
                   "--report", "-") == EXIT_OK
    stdout = capsys.readouterr().out
    json_text = stdout[:stdout.rindex("}") + 1]
    report = json.loads(json_text)
    assert report["command"] == "gen"
    assert report["dims"] == [4, 4, 1]


def test_usage_errors_exit_1(tmp_path):
    f = gen_field(tmp_path)
    _, decomp = compress_field(tmp_path, f)
    # missing required flag
    assert run_cli("compress", "--rel-eb", "1e-2", "--out-payload", "x",
                   "--out-decomp", "y") == EXIT_USAGE
    # both bound flags are mutually exclusive
    assert run_cli("compress", "--in", str(f), "--rel-eb", "1e-2",
                   "--abs-eb", "0.1", "--out-payload", "x",
                   "--out-decomp", "y") == EXIT_USAGE
    # a bound flag is required
    assert run_cli("correct", "--orig", str(f), "--decomp", str(decomp),
                   "--edits-out", "e") == EXIT_USAGE
    # malformed dims
    assert run_cli("gen", "--dims", "0x4", "--out", "x") == EXIT_USAGE
    assert run_cli("gen", "--dims", "4x4x4x4", "--out", "x") == EXIT_USAGE
    # block grids belong to the parallel strategies
    assert run_cli("correct", "--orig", str(f), "--decomp", str(decomp),
                   "--rel-eb", "1e-2", "--strategy", "serial",
                   "--blocks", "2x1x1",
                   "--edits-out", str(tmp_path / "e.pmsze")) == EXIT_USAGE
    # missing input file
    assert run_cli("verify", "--ref", str(tmp_path / "absent.pmszf"),
                   "--test", str(f)) == EXIT_USAGE


def test_format_errors_exit_2(tmp_path):
    f = gen_field(tmp_path)
    truncated = tmp_path / "truncated.pmszf"
    truncated.write_bytes(f.read_bytes()[:-3])
    assert run_cli("segment", "--in", str(truncated)) == EXIT_FORMAT

    _, decomp = compress_field(tmp_path, f)
    edits = tmp_path / "edits.pmsze"
    assert run_cli("correct", "--orig", str(f), "--decomp", str(decomp),
                   "--rel-eb", "1e-2", "--edits-out", str(edits)) == EXIT_OK
    corrupt = bytearray(edits.read_bytes())
    corrupt[-1] ^= 0xFF
    bad = tmp_path / "bad.pmsze"
    bad.write_bytes(bytes(corrupt))
    assert run_cli("apply", "--decomp", str(decomp), "--edits", str(bad),
                   "--out", str(tmp_path / "o.pmszf")) == EXIT_FORMAT


def test_bound_violation_exits_3(tmp_path):
    a = gen_field(tmp_path, name="a.pmszf", seed=1)
    b = gen_field(tmp_path, name="b.pmszf", seed=2)
    assert run_cli("correct", "--orig", str(a), "--decomp", str(b),
                   "--abs-eb", "1e-12",
                   "--edits-out", str(tmp_path / "e.pmsze")) == EXIT_BOUND


def test_convergence_cap_exits_4(tmp_path):
    fp, gp = write_dipped_ramp(tmp_path)
    edits = tmp_path / "e.pmsze"
    assert run_cli("correct", "--orig", str(fp), "--decomp", str(gp),
                   "--abs-eb", "3.0", "--tau", "0.25", "--max-iterations", "1",
                   "--edits-out", str(edits)) == EXIT_CONVERGENCE
    # and with the cap lifted the same pair corrects fine
    assert run_cli("correct", "--orig", str(fp), "--decomp", str(gp),
                   "--abs-eb", "3.0", "--tau", "0.25",
                   "--edits-out", str(edits)) == EXIT_OK


def test_apply_rejects_mismatched_grid(tmp_path):
    f = gen_field(tmp_path, dims="8x8x4")
    _, decomp = compress_field(tmp_path, f, rel="1e-1")
    edits = tmp_path / "e.pmsze"
    assert run_cli("correct", "--orig", str(f), "--decomp", str(decomp),
                   "--rel-eb", "1e-1", "--edits-out", str(edits)) == EXIT_OK
    other = gen_field(tmp_path, name="other.pmszf", dims="4x4x4")
    assert run_cli("apply", "--decomp", str(other), "--edits", str(edits),
                   "--out", str(tmp_path / "o.pmszf")) == EXIT_USAGE


def test_bench_reports_and_compression_section(tmp_path, capsys):
    f = gen_field(tmp_path, dims="12x12x12", seed=5)
    payload, decomp = compress_field(tmp_path, f)
    report_path = tmp_path / "bench.json"
    capsys.readouterr()
    assert run_cli("bench", "--orig", str(f), "--decomp", str(decomp),
                   "--rel-eb", "1e-2", "--sweep-blocks", "2x2x1",
                   "--strategies", "relaxed", "--payload", str(payload),
                   "--report", str(report_path)) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "serial" in stdout and "relaxed" in stdout
    report = json.loads(report_path.read_text())
    assert [e["strategy"] for e in report["entries"]] == ["serial", "relaxed"]
    assert all("wall_seconds" in e for e in report["entries"])
    comp = report["compression"]
    assert comp["cr_with_edits"] <= comp["cr_base"]
    assert comp["edits_bytes"] == report["edits_bytes"]


def test_bench_without_payload_has_no_compression_section(tmp_path):
    f = gen_field(tmp_path, dims="8x8x8", seed=6)
    _, decomp = compress_field(tmp_path, f, rel="1e-1")
    report_path = tmp_path / "bench.json"
    assert run_cli("bench", "--orig", str(f), "--decomp", str(decomp),
                   "--rel-eb", "1e-1", "--sweep-blocks", "2x1x1",
                   "--strategies", "lockstep",
                   "--report", str(report_path)) == EXIT_OK
    assert "compression" not in json.loads(report_path.read_text())
