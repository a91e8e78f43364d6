"""CLI subcommands: exit codes, artifacts, byte-identical reruns."""

import csv
import io

import pytest

from shortvec.cli import main

from test_engine import GOLDEN_PROGRAM, GOLDEN_ROWS_AT_4

GOLDEN_FLAGS = ["--set", "vlen=128", "--set", "dlen=64",
                "--set", "num_arch_regs=4", "--set", "mem_base_latency=3"]


def run_cli(capsys, *argv):
    rc = main(list(argv))
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


def parse_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_kernel_prints_one_csv_row(capsys):
    rc, out, err = run_cli(capsys, "run", "--kernel", "axpy",
                           "--size", "30720", "--sew", "64", "--lmul", "8")
    assert rc == 0 and err == ""
    rows = parse_rows(out)
    assert len(rows) == 1
    row = rows[0]
    assert row["kernel"] == "axpy" and row["sew"] == "64"
    assert 0.0 < float(row["util"]) <= 1.0


def test_run_empty_program(tmp_path, capsys):
    empty = tmp_path / "empty.vasm"
    empty.write_text("")
    rc, out, _ = run_cli(capsys, "run", "--program", str(empty))
    assert rc == 0
    row = parse_rows(out)[0]
    assert int(row["cycles"]) > 0
    assert row["element_ops"] == "0"
    assert row["kernel"] == "empty"


def test_fault_page_exits_two_with_report(capsys):
    rc, out, err = run_cli(capsys, "run", "--kernel", "stream_load",
                           "--size", "512", "--sew", "32", "--lmul", "2",
                           "--fault-page", "0x10")
    assert rc == 2
    assert "trap: instruction" in err and "0x10" in err
    assert parse_rows(out)  # metrics row still written


def test_usage_errors_exit_one(capsys):
    assert run_cli(capsys, "run")[0] == 1  # no kernel, no program
    assert run_cli(capsys, "run", "--kernel", "fft")[0] == 1
    assert run_cli(capsys, "run", "--kernel", "axpy", "--bogus")[0] == 1
    assert run_cli(capsys, "bogus-command")[0] == 1
    rc, _, err = run_cli(capsys, "run", "--kernel", "axpy",
                         "--set", "vlen=100")
    assert rc == 1 and "vlen" in err


def test_missing_program_file_exits_one(capsys):
    rc, _, err = run_cli(capsys, "run", "--program", "/no/such/file.vasm")
    assert rc == 1 and "file.vasm" in err


def test_trace_and_dump_arch_artifacts(tmp_path, capsys):
    trace = tmp_path / "run.trace"
    arch = tmp_path / "arch.txt"
    rc, _, _ = run_cli(capsys, "run", "--kernel", "memcpy", "--size", "256",
                       "--trace", str(trace), "--dump-arch", str(arch))
    assert rc == 0
    assert trace.read_text().count("\n") > 4
    assert arch.read_text().startswith("[registers]")


def test_reruns_are_byte_identical(capsys):
    args = ("run", "--kernel", "gather", "--size", "512", "--lmul", "2")
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second


def test_config_file_and_env(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "machine.cfg"
    cfg.write_text("vlen = 256\ndlen = 128  # half-rate datapath\n")
    rc, out, _ = run_cli(capsys, "--config", str(cfg), "run",
                         "--kernel", "axpy", "--size", "256")
    assert rc == 0
    assert parse_rows(out)[0]["vlen"] == "256"

    monkeypatch.setenv("SHORTVEC_CONFIG", str(cfg))
    rc, out, _ = run_cli(capsys, "run", "--kernel", "axpy", "--size", "256")
    assert parse_rows(out)[0]["vlen"] == "256"

    # explicit --set beats the file
    rc, out, _ = run_cli(capsys, "--set", "vlen=512", "run",
                         "--kernel", "axpy", "--size", "256")
    assert parse_rows(out)[0]["vlen"] == "512"


def test_sweep_orders_rows_by_spec(capsys):
    rc, out, _ = run_cli(capsys, "sweep", "--axis", "vlen=256,512",
                         "--kernels", "axpy,memcpy", "--size", "256",
                         "--lmul", "2")
    assert rc == 0
    rows = parse_rows(out)
    key = [(r["vlen"], r["kernel"]) for r in rows]
    assert key == [("256", "axpy"), ("256", "memcpy"),
                   ("512", "axpy"), ("512", "memcpy")]
    assert rows[0]["pct_speedup_vs_prev_vlen"] == ""
    assert rows[2]["pct_speedup_vs_prev_vlen"] != ""


def test_axisless_sweep_equals_run_output(capsys):
    shape = ("--kernels", "axpy"), ("--kernel", "axpy")
    _, swept, _ = run_cli(capsys, "sweep", *shape[0], "--size", "512",
                          "--lmul", "2")
    _, ran, _ = run_cli(capsys, "run", *shape[1], "--size", "512",
                        "--lmul", "2")
    assert swept == ran


def test_sweep_cap_refused(capsys):
    rc, _, err = run_cli(capsys, "sweep", "--axis", "vlen=256,512",
                         "--seeds", ",".join(str(s) for s in range(600)),
                         "--cap", "1000")
    assert rc == 1
    assert "cap" in err


def test_sweep_parallel_matches_serial(capsys):
    args = ("sweep", "--axis", "iq_depth=0,4", "--size", "256", "--lmul", "2")
    _, serial, _ = run_cli(capsys, *args)
    _, parallel, _ = run_cli(capsys, *args, "--jobs", "2")
    assert serial == parallel


def test_snapshot_prints_scoreboard_rows(tmp_path, capsys):
    prog = tmp_path / "golden.vasm"
    prog.write_text(GOLDEN_PROGRAM)
    rc, out, _ = run_cli(capsys, *GOLDEN_FLAGS, "snapshot",
                         "--program", str(prog), "--at-cycle", "4")
    assert rc == 0
    assert out.splitlines() == GOLDEN_ROWS_AT_4


def test_snapshot_at_zero_shows_unsequenced_only(tmp_path, capsys):
    prog = tmp_path / "golden.vasm"
    prog.write_text(GOLDEN_PROGRAM)
    rc, out, _ = run_cli(capsys, *GOLDEN_FLAGS, "snapshot",
                         "--program", str(prog), "--at-cycle", "0")
    assert rc == 0
    rows = out.splitlines()
    assert len(rows) == 1
    assert rows[0].startswith("vadd.2 v0, v0, v2, 0, PRSb=8'b11111111")


def test_dump_arch_subcommand(tmp_path, capsys):
    prog = tmp_path / "store.vasm"
    prog.write_text("vsetvli 4, e32, m1\nvadd v1, 9, v1\nvse v1, 0x2000\n")
    rc, out, _ = run_cli(capsys, "--set", "vlen=128", "--set", "dlen=64",
                         "--set", "num_arch_regs=8", "dump-arch",
                         "--program", str(prog))
    assert rc == 0
    assert "[registers]" in out and "[memory]" in out
    assert "v1: " in out
