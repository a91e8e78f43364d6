"""HTTP facade over the simulator core.

Every CLI subcommand maps to one endpoint here, so a sweep farm can
drive the same surface over the network that a local shell gets in
process. Requests carry the full machine configuration as a flat field
dict; the service holds no state between calls and every response is a
pure function of its request, which keeps reruns byte-identical no
matter which worker answered.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from . import oracle
from .config import SimConfig
from .engine import RunResult, run
from .isa import VType
from .program import KERNEL_NAMES, ProgramError, gen_kernel, parse
from .sweep import SweepSpec, csv_header, metrics_row, run_sweep, to_csv

app = FastAPI(title="shortvec", version="0.1.0")


class WorkloadRequest(BaseModel):
    """One simulated program: a named kernel or literal assembly text."""

    kernel: str | None = None
    program: str | None = None
    name: str = ""  # CSV label for program-text runs
    size: int | str = 1024
    sew: int = 32
    lmul: int = 1
    seed: int = 0
    fault_pages: list[int] = Field(default_factory=list)
    config: dict[str, int | bool] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.kernel is None) == (self.program is None):
            raise ValueError("exactly one of kernel or program is required")
        return self


class RunRequest(WorkloadRequest):
    trace: bool = False
    arch: bool = False


class SnapshotRequest(WorkloadRequest):
    at_cycle: int = Field(0, ge=0)


class TrapInfo(BaseModel):
    seq_id: int
    element: int
    addr: int


class RunResponse(BaseModel):
    cycles: int
    element_ops: int
    bits_computed: int
    bytes_moved: int
    compute_util: float
    mem_util: float
    util: float
    stall_cycles: dict[str, int]
    monitor_violations: int
    trap: TrapInfo | None
    csv: str
    trace: str | None
    arch: str | None


class Axis(BaseModel):
    field: str
    values: list[bool | int]


class SweepRequest(BaseModel):
    axes: list[Axis] = Field(default_factory=list)
    kernels: list[str] = Field(default_factory=lambda: ["axpy"])
    size: int | str = 1024
    sew: int = 32
    lmul: int = 1
    seeds: list[int] = Field(default_factory=lambda: [0])
    cap: int = 1024
    jobs: int = Field(1, ge=1)
    config: dict[str, int | bool] = Field(default_factory=dict)


class SweepResponse(BaseModel):
    csv: str
    runs: int


class SnapshotResponse(BaseModel):
    at_cycle: int
    rows: list[str]


class ArchResponse(BaseModel):
    dump: str
    cycles: int
    trap: TrapInfo | None


def _machine(config: dict) -> SimConfig:
    try:
        return SimConfig().replace(**config)
    except (TypeError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))


def _workload(req: WorkloadRequest, machine: SimConfig):
    """Materialize the requested program; 400 on anything malformed."""
    try:
        if req.kernel is not None:
            if req.kernel not in KERNEL_NAMES:
                raise ValueError(
                    f"unknown kernel {req.kernel!r}; have {', '.join(KERNEL_NAMES)}")
            vt = VType(sew=req.sew, lmul=req.lmul, vl=0)
            return gen_kernel(req.kernel, req.size, vt, machine, seed=req.seed)
        return parse(req.program)
    except (ProgramError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))


def _trap_info(res: RunResult) -> TrapInfo | None:
    if res.trap is None:
        return None
    return TrapInfo(seq_id=res.trap.seq_id, element=res.trap.element,
                    addr=res.trap.addr)


def _row_meta(req: WorkloadRequest) -> dict:
    if req.kernel is not None:
        return dict(kernel=req.kernel, size=req.size, sew=req.sew,
                    lmul=req.lmul, seed=req.seed)
    # program text defines its own vector types; zeros keep cells numeric
    return dict(kernel=req.name or "program", size=0, sew=0, lmul=0,
                seed=req.seed)


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/run", response_model=RunResponse)
def do_run(req: RunRequest) -> RunResponse:
    machine = _machine(req.config)
    prog = _workload(req, machine)
    res = run(prog, machine, fault_pages=frozenset(req.fault_pages),
              want_trace=req.trace)
    row = metrics_row(machine, res, **_row_meta(req))
    csv_text = to_csv([row])
    return RunResponse(
        cycles=res.cycles,
        element_ops=res.metrics.element_ops,
        bits_computed=res.metrics.bits_computed,
        bytes_moved=res.metrics.bytes_moved,
        compute_util=res.compute_util,
        mem_util=res.mem_util,
        util=res.util,
        stall_cycles=dict(res.metrics.stall_cycles),
        monitor_violations=res.monitor_violations,
        trap=_trap_info(res),
        csv=csv_text,
        trace="\n".join(res.trace) + "\n" if req.trace else None,
        arch=oracle.dump_arch(res.vrf_regs, res.mem) if req.arch else None,
    )


@app.post("/sweep", response_model=SweepResponse)
def do_sweep(req: SweepRequest) -> SweepResponse:
    try:
        spec = SweepSpec(axes=tuple((a.field, tuple(a.values)) for a in req.axes),
                         kernels=tuple(req.kernels), size=req.size,
                         sew=req.sew, lmul=req.lmul,
                         seeds=tuple(req.seeds), cap=req.cap)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    base = _machine(req.config)
    jobs = min(req.jobs, os.cpu_count() or 1)
    rows = run_sweep(spec, base=base, jobs=jobs)
    return SweepResponse(csv=to_csv(rows, spec), runs=len(rows))


@app.post("/snapshot", response_model=SnapshotResponse)
def do_snapshot(req: SnapshotRequest) -> SnapshotResponse:
    machine = _machine(req.config)
    prog = _workload(req, machine)
    res = run(prog, machine, fault_pages=frozenset(req.fault_pages),
              snapshot_at=(req.at_cycle,))
    if req.at_cycle not in res.snapshots:
        raise HTTPException(
            status_code=400,
            detail=f"at_cycle {req.at_cycle} beyond run length {res.cycles}")
    text = res.snapshots[req.at_cycle]
    return SnapshotResponse(at_cycle=req.at_cycle,
                            rows=text.splitlines() if text else [])


@app.post("/arch", response_model=ArchResponse)
def do_arch(req: WorkloadRequest) -> ArchResponse:
    machine = _machine(req.config)
    prog = _workload(req, machine)
    res = run(prog, machine, fault_pages=frozenset(req.fault_pages))
    return ArchResponse(dump=oracle.dump_arch(res.vrf_regs, res.mem),
                        cycles=res.cycles, trap=_trap_info(res))
