"""Command-line client for the simulator service.

By default the service runs in process, so `shortvec run --kernel axpy`
needs no server; point --server at a deployed instance to farm the same
commands out over HTTP. Subcommands mirror the service endpoints one to
one. Exit codes: 0 clean run, 2 the simulated program trapped, 1 usage
or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import SimConfig, load_config, parse_config_text
from .program import KERNEL_NAMES


class CliError(Exception):
    """Anything that should end the process with a usage error."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; this tool reserves 2 for traps
    def error(self, message):
        raise CliError(message)


class _Client:
    def __init__(self, server: str | None):
        if server:
            import httpx
            self._http = httpx.Client(base_url=server, timeout=300.0)
        else:
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient
            from .service import app
            self._http = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._http.post(path, json=payload)
        except Exception as exc:
            raise CliError(f"service unreachable: {exc}")
        if resp.status_code >= 400:
            try:
                detail = resp.json()["detail"]
            except Exception:
                detail = resp.text
            raise CliError(f"{path[1:]}: {detail}")
        return resp.json()


def _add_workload_flags(sub, with_fault=True):
    src = sub.add_mutually_exclusive_group()
    src.add_argument("--kernel", choices=KERNEL_NAMES,
                     help="generate a built-in kernel")
    src.add_argument("--program", metavar="PATH",
                     help="assembly file to simulate")
    sub.add_argument("--size", default="1024",
                     help="kernel working-set size (int or MxNxK)")
    sub.add_argument("--sew", type=int, default=32)
    sub.add_argument("--lmul", type=int, default=1)
    sub.add_argument("--seed", type=int, default=0,
                     help="data seed for generated kernels")
    if with_fault:
        sub.add_argument("--fault-page", action="append", default=[],
                         metavar="N", help="page number that faults on access "
                         "(repeatable, 0x ok)")


def _size_value(raw: str) -> int | str:
    try:
        return int(raw, 0)
    except ValueError:
        return raw


def _workload_payload(args) -> dict:
    if (args.kernel is None) == (args.program is None):
        raise CliError("exactly one of --kernel or --program is required")
    payload = dict(size=_size_value(args.size), sew=args.sew, lmul=args.lmul,
                   seed=args.seed, config=_config_dict(args))
    if args.kernel:
        payload["kernel"] = args.kernel
    else:
        try:
            with open(args.program) as fh:
                payload["program"] = fh.read()
        except OSError as exc:
            raise CliError(str(exc))
        stem = args.program.rsplit("/", 1)[-1]
        payload["name"] = stem.rsplit(".", 1)[0]
    if getattr(args, "fault_page", None):
        payload["fault_pages"] = [_int_value(p, "--fault-page")
                                  for p in args.fault_page]
    return payload


def _config_dict(args) -> dict:
    try:
        cfg = load_config(args.config)
        if args.set:
            cfg = parse_config_text("\n".join(args.set), base=cfg)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc))
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(SimConfig)}


def _write_artifact(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _report_trap(trap: dict) -> None:
    print(f"trap: instruction {trap['seq_id']} element {trap['element']} "
          f"at {trap['addr']:#x}", file=sys.stderr)


def cmd_run(client: _Client, args) -> int:
    payload = _workload_payload(args)
    payload.update(trace=bool(args.trace), arch=bool(args.dump_arch))
    out = client.post("/run", payload)
    sys.stdout.write(out["csv"])
    if args.trace:
        _write_artifact(args.trace, out["trace"])
    if args.dump_arch:
        _write_artifact(args.dump_arch, out["arch"])
    if out["trap"] is not None:
        _report_trap(out["trap"])
        return 2
    return 0


def _parse_axis(raw: str) -> dict:
    field, _, tail = raw.partition("=")
    if not tail:
        raise CliError(f"--axis wants FIELD=V1,V2,...; got {raw!r}")
    words = {"true": True, "false": False}
    values = []
    for v in tail.split(","):
        if v.lower() in words:
            values.append(words[v.lower()])
        else:
            values.append(_int_value(v, "--axis"))
    return {"field": field.strip(), "values": values}


def _int_value(raw: str, flag: str) -> int:
    try:
        return int(raw, 0)
    except ValueError:
        raise CliError(f"{flag}: not an integer: {raw!r}")


def _ints(raw: str, flag: str) -> list[int]:
    return [_int_value(v, flag) for v in raw.split(",")]


def cmd_sweep(client: _Client, args) -> int:
    payload = dict(axes=[_parse_axis(a) for a in args.axis],
                   kernels=args.kernels.split(","),
                   size=_size_value(args.size), sew=args.sew, lmul=args.lmul,
                   seeds=_ints(args.seeds, "--seeds"), cap=args.cap, jobs=args.jobs,
                   config=_config_dict(args))
    out = client.post("/sweep", payload)
    sys.stdout.write(out["csv"])
    return 0


def cmd_snapshot(client: _Client, args) -> int:
    payload = _workload_payload(args)
    payload["at_cycle"] = args.at_cycle
    out = client.post("/snapshot", payload)
    for row in out["rows"]:
        print(row)
    return 0


def cmd_dump_arch(client: _Client, args) -> int:
    out = client.post("/arch", _workload_payload(args))
    sys.stdout.write(out["dump"])
    if out["trap"] is not None:
        _report_trap(out["trap"])
        return 2
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="shortvec",
                     description="short-vector backend simulator")
    parser.add_argument("--config", metavar="PATH",
                        help="machine config file (default: $SHORTVEC_CONFIG)")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override one config field (repeatable)")
    parser.add_argument("--server", metavar="URL",
                        help="remote service; default runs in process")
    subs = parser.add_subparsers(dest="command", required=True)

    run_p = subs.add_parser("run", help="simulate one program, print CSV metrics")
    _add_workload_flags(run_p)
    run_p.add_argument("--trace", metavar="PATH",
                       help="write per-cycle issue/stall trace ('-' = stdout)")
    run_p.add_argument("--dump-arch", metavar="PATH",
                       help="write final architectural state ('-' = stdout)")
    run_p.set_defaults(fn=cmd_run)

    sweep_p = subs.add_parser("sweep", help="cross-product of config points, CSV out")
    sweep_p.add_argument("--axis", action="append", default=[],
                         metavar="FIELD=V1,V2,...",
                         help="config axis to vary (repeatable, outermost first)")
    sweep_p.add_argument("--kernels", default="axpy",
                         help="comma-separated kernel names")
    sweep_p.add_argument("--size", default="1024")
    sweep_p.add_argument("--sew", type=int, default=32)
    sweep_p.add_argument("--lmul", type=int, default=1)
    sweep_p.add_argument("--seeds", default="0",
                         help="comma-separated data seeds")
    sweep_p.add_argument("--cap", type=int, default=1024,
                         help="refuse sweeps over this many runs")
    sweep_p.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes")
    sweep_p.set_defaults(fn=cmd_sweep)

    snap_p = subs.add_parser("snapshot",
                             help="render the live instruction window's scoreboards")
    _add_workload_flags(snap_p, with_fault=False)
    snap_p.add_argument("--at-cycle", type=int, default=0, metavar="N")
    snap_p.set_defaults(fn=cmd_snapshot)

    arch_p = subs.add_parser("dump-arch",
                             help="run to completion and print register/memory state")
    _add_workload_flags(arch_p)
    arch_p.set_defaults(fn=cmd_dump_arch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        client = _Client(args.server)
        return args.fn(client, args)
    except CliError as exc:
        print(f"shortvec: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
