"""The cycle loop: frontend, queues, sequencers, register file, LSU, memory.

One call to step() advances the whole machine a single cycle, in a fixed
phase order that makes write visibility unambiguous:

  1. memory responses land and merge into load fill buffers,
  2. sequencers issue micro-ops (hazards judged against the window as it
     stood when the cycle began, ports granted oldest first),
  3. the frontend dispatches and the dispatch queue feeds issue queues,
  4. the LSU presents memory requests, stores ahead of loads,
  5. writebacks due this cycle commit, and emptied sequencers refill.

A micro-op issued at cycle t with functional-unit delay w commits its
write at the end of cycle t+w and is readable from t+w+1. Loads carry
no delay: a row popped from the fill buffer commits the same cycle, so
a dependent micro-op can chain exactly one cycle behind.

The window an instruction hazards against is everything dispatched
before it and not yet done: queued entries with coarse whole-footprint
masks, sequencer residents with precise shrinking masks, and the single
destination groups of writes still inside functional-unit pipelines.
An in-flight write blocks everyone regardless of age, which is sound
because an issued write is always the oldest write to its group. An
online monitor re-derives every verdict entry by entry and counts any
disagreement with the OR-composed fast path, so a scheduling bug shows
up as a nonzero violation count rather than a silently wrong trace.

Feature toggles reshape the same loop: ooo=False lets only the oldest
live instruction sequence (everything younger reports "serialize"), and
dae=False is handled inside the LSU by coupling address generation to
the resident load, one beat at a time.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .config import SimConfig
from .frontend import Frontend, mem_elem_count
from .isa import ACC_OPS, Opcode, SEGMENT_OPS, VectorInstruction
from .lsu import LSU
from .memimg import ByteMap
from .memsys import Memsys
from .oracle import Trap, pack_lanes, unpack_lanes
from .program import Program, disasm, resolve
from .scoreboard import (
    EntryKind,
    WindowEntry,
    coarse_from_inst,
    compose_older,
    hazard,
    render_entry,
)
from .sequencer import IssueQueue, Resident
from .vrf import RegisterFile

HAZARD_CAUSES = ("raw", "waw", "war")

# every label a stalled cycle can be charged to, in reporting order
STALL_CAUSES = ("raw", "waw", "war", "read_port", "write_port", "mem_data",
                "store_buf", "serialize", "empty", "tlb", "index_wait",
                "dispatch_full")


def latency_bound(cfg: SimConfig) -> int:
    """Longest load latency the decoupling queues can hide, in cycles.

    Queued instructions on the load side, times the widest register
    grouping, times the native chime: each queued load can cover that
    many cycles of backend work in the best case.
    """
    return (cfg.dispatch_q_depth + cfg.iq_depth) * 8 * cfg.native_chime


class EngineHang(RuntimeError):
    """No forward progress for far longer than any queue could explain."""


def prefix_uops(inst: VectorInstruction, machine: SimConfig, nelems: int) -> int:
    """Micro-ops covered by the first nelems stream elements of a memory op.

    The stream walks rows monotonically, so these are always a prefix of
    the sequencer's schedule; used to cut an instruction short after a
    mid-stream page fault.
    """
    if nelems <= 0:
        return 0
    nf = inst.nf if inst.opcode in SEGMENT_OPS else 1
    row_bytes = machine.dlen // 8
    esz = inst.vtype.esz
    slots = set()
    for k in range(nelems):
        i, f = divmod(k, nf)
        slots.add((f, i * esz // row_bytes))
    return len(slots)


@dataclass
class SimMetrics:
    cycles: int = 0
    element_ops: int = 0
    bits_computed: int = 0
    bytes_moved: int = 0
    stall_cycles: dict[str, int] = field(default_factory=dict)
    fu_busy_cycles: int = 0
    mem_busy_cycles: int = 0

    def compute_util(self, dlen: int) -> float:
        if self.cycles == 0:
            return 0.0
        return self.bits_computed / (dlen * self.cycles)

    def mem_util(self, dlen: int) -> float:
        if self.cycles == 0:
            return 0.0
        return self.bytes_moved * 8 / (dlen * self.cycles)


@dataclass
class RunResult:
    machine: SimConfig
    cycles: int
    metrics: SimMetrics
    trap: Trap | None
    monitor_violations: int
    trace: list[str]
    vrf_regs: list[bytes]
    mem: ByteMap
    snapshots: dict[int, str]

    @property
    def compute_util(self) -> float:
        return self.metrics.compute_util(self.machine.dlen)

    @property
    def mem_util(self) -> float:
        return self.metrics.mem_util(self.machine.dlen)

    @property
    def util(self) -> float:
        return max(self.compute_util, self.mem_util)


class _Rec:
    """Engine-side bookkeeping for one dispatched instruction."""

    __slots__ = ("inst", "age", "coarse_prsb", "coarse_pwsb", "state",
                 "arrival", "resident")

    def __init__(self, inst, age, machine):
        self.inst = inst
        self.age = age
        self.coarse_prsb, self.coarse_pwsb = coarse_from_inst(inst, machine)
        self.state = "dq"       # dq | iq | res | fu | done
        self.arrival = -1       # cycle it entered the stage pulls read from
        self.resident: Resident | None = None


class _FrontendPort:
    """Narrow view of the backend the frontend is allowed to consult."""

    def __init__(self, engine):
        self.e = engine

    def can_accept(self, inst) -> bool:
        e = self.e
        # depth 0 degrades to a one-deep wire so dispatch can still flow
        if len(e.dq) >= max(e.cfg.dispatch_q_depth, 1):
            return False
        return not inst.is_mem or e.lsu.can_accept(inst)

    def eg_write_pending(self, eg: int) -> bool:
        bit = 1 << eg
        return any(entry.pwsb & bit for entry in self.e._window())

    def read_reg_bytes(self, reg: int, offset: int, nbytes: int) -> bytes:
        return self.e.vrf.read_reg_bytes(reg, offset, nbytes)


class Engine:
    def __init__(self, machine: SimConfig, program: Program,
                 fault_pages: frozenset[int] = frozenset(),
                 want_trace: bool = False,
                 snapshot_at: frozenset[int] = frozenset()):
        self.cfg = machine
        self.insts = resolve(program, machine)
        self.mem = Memsys(machine, program.data.clone())
        self.lsu = LSU(machine, self.mem)
        self.vrf = RegisterFile(machine)
        self.frontend = Frontend(machine, self.insts, fault_pages)
        self.fe_port = _FrontendPort(self)

        self.dq: deque[_Rec] = deque()
        self.iqs = {p: IssueQueue(machine.iq_depth) for p in machine.paths}
        self.residents: dict[str, Resident | None] = {p: None for p in machine.paths}
        self.fu: list[WindowEntry] = []
        self.pending_writes: dict[int, list] = {}   # wb_cycle -> [(eg, data, mask)]
        self.recs: dict[int, _Rec] = {}
        self.by_seq: dict[int, _Rec] = {}
        self.truncated: dict[int, int] = {}         # seq_id -> kept elements

        self._ages = itertools.count()
        self._rr = 0                                 # arithmetic steering pointer
        self._pulls = 0                              # dispatch->sequencer moves this cycle
        self._seq_free_at_start: dict[str, bool] = {}

        self.now = 0
        self.trap: Trap | None = None
        self.monitor_violations = 0
        self.metrics = SimMetrics()
        self.want_trace = want_trace
        self.trace: list[str] = []
        self.snapshot_at = frozenset(snapshot_at)
        self.snapshots: dict[int, str] = {}
        self._last_progress = 0
        watch = max(latency_bound(machine),
                    machine.mem_base_latency + machine.inject_latency, 64)
        self._watchdog = 10 * watch

    # ------------------------------------------------------------- window

    def _window(self) -> list[WindowEntry]:
        out = []
        for rec in self.recs.values():
            if rec.state in ("dq", "iq"):
                out.append(WindowEntry(rec.age, rec.coarse_prsb, rec.coarse_pwsb,
                                       EntryKind.COARSE, rec.inst))
            elif rec.state == "res":
                r = rec.resident
                out.append(WindowEntry(rec.age, r.prsb, r.pwsb,
                                       EntryKind.PRECISE, rec.inst))
        out.extend(self.fu)
        return out

    def _min_live_age(self) -> int | None:
        live = [rec.age for rec in self.recs.values() if rec.state != "done"]
        return min(live) if live else None

    def _fu_bits(self, age: int) -> int:
        bits = 0
        for e in self.fu:
            if e.age == age:
                bits |= e.pwsb
        return bits

    def render_window(self) -> str:
        """Per-instruction scoreboard rows, oldest first."""
        width = self.cfg.total_egs
        rows = []
        for age in sorted(self.recs):
            rec = self.recs[age]
            if rec.state == "done":
                continue
            if rec.state in ("dq", "iq"):
                pr, pw = rec.coarse_prsb, rec.coarse_pwsb
            elif rec.state == "res":
                pr = rec.resident.prsb
                pw = rec.resident.pwsb | self._fu_bits(age)
            else:
                pr, pw = 0, self._fu_bits(age)
            rows.append(render_entry(disasm(rec.inst), age, pr, pw, width))
        return "\n".join(rows) + "\n"

    # ------------------------------------------------------------ steering

    def _steer_paths(self, inst) -> list[str]:
        """Issue paths that may take this instruction, preferred first."""
        if inst.is_load:
            return ["load"]
        if inst.is_store:
            return ["store"]
        n = self.cfg.num_arith_seqs
        return [f"arith{(self._rr + i) % n}" for i in range(n)]

    def _note_arith_steer(self, path: str) -> None:
        if path.startswith("arith"):
            self._rr = (int(path[5:]) + 1) % self.cfg.num_arith_seqs

    # ------------------------------------------------------- trap plumbing

    def _apply_trap(self, res) -> None:
        self.trap = res.trap
        done = res.trap_done_elems
        rec = self.by_seq.get(res.trap.seq_id)
        if rec is None:
            return  # faulted before anything dispatched
        self.truncated[res.trap.seq_id] = done
        self.lsu.finalize(rec.inst, done)
        if rec.state == "res":
            # a store may have read rows past the dispatched elements; those
            # issues stand, the drain envelope keeps their tail out of memory
            keep = max(prefix_uops(rec.inst, self.cfg, done),
                       rec.resident.next_idx)
            rec.resident.truncate(keep)
            if rec.resident.done:
                # cut back to exactly the issued prefix: nothing left to do
                path = next(p for p, r in self.residents.items()
                            if r is rec.resident)
                self._retire(path, rec.resident)

    # ------------------------------------------------------------ dispatch

    def _place_dispatched(self, rec: _Rec) -> None:
        """New instruction enters the dispatch queue, or jumps it when empty."""
        if not self.dq and self.cfg.iq_depth > 0:
            for path in self._steer_paths(rec.inst):
                if not self.iqs[path].full:
                    self.iqs[path].push(rec.inst, rec.age)
                    rec.state = "iq"
                    rec.arrival = self.now
                    self._note_arith_steer(path)
                    return
        rec.state = "dq"
        rec.arrival = self.now
        self.dq.append(rec)

    def _move_dq_to_iq(self) -> bool:
        moved = False
        if self.cfg.iq_depth == 0:
            return moved  # pass-through: refill pulls straight from the queue
        budget = self.cfg.dispatch_ipc
        while budget > 0 and self.dq:
            rec = self.dq[0]
            dest = None
            for path in self._steer_paths(rec.inst):
                if not self.iqs[path].full:
                    dest = path
                    break
            if dest is None:
                break  # in-order dispatch: a blocked head blocks everything
            self.dq.popleft()
            self.iqs[dest].push(rec.inst, rec.age)
            rec.state = "iq"
            rec.arrival = self.now
            self._note_arith_steer(dest)
            budget -= 1
            moved = True
        return moved

    def _dispatch(self, now: int) -> tuple[bool, str | None]:
        progressed = self._move_dq_to_iq()
        fe = self.frontend
        if fe.trapped is not None or fe.done:
            return progressed, None
        res = fe.step(self.fe_port)
        if res.setvl is not None:
            progressed = True
        if res.backend_inst is not None:
            inst = res.backend_inst
            age = next(self._ages)
            rec = _Rec(inst, age, self.cfg)
            self.recs[age] = rec
            self.by_seq[inst.seq_id] = rec
            if inst.is_mem:
                self.lsu.dispatch(inst, age)
            self._place_dispatched(rec)
            progressed = True
        if res.lsu_op is not None:
            self.lsu.push_op(res.lsu_op)
            progressed = True
        if res.trap is not None:
            self._apply_trap(res)
            progressed = True
        return progressed, res.stall

    # -------------------------------------------------------------- refill

    def _install(self, path: str, rec: _Rec) -> None:
        res = Resident(rec.inst, rec.age, self.cfg)
        if rec.inst.seq_id in self.truncated:
            res.truncate(prefix_uops(rec.inst, self.cfg,
                                     self.truncated[rec.inst.seq_id]))
        rec.state = "res"
        rec.resident = res
        self.residents[path] = res

    def _retire(self, path: str, res: Resident) -> None:
        rec = self.recs[res.age]
        if rec.inst.is_load:
            self.lsu.retire_load(rec.inst)
        rec.state = "fu" if self._fu_bits(res.age) else "done"
        rec.resident = None
        self.residents[path] = None

    def _pull_into(self, path: str, now: int, same_cycle: bool) -> bool:
        """Move the next eligible instruction into an empty sequencer.

        same_cycle marks pulls triggered by this cycle's own retire; with
        no_bypass those wait for the next cycle, and queue entries must
        additionally have arrived in an earlier cycle.
        """
        pulled = False
        while self.residents[path] is None:
            if self.cfg.no_bypass and (same_cycle or not self._seq_free_at_start[path]):
                break
            if self.cfg.iq_depth > 0:
                head = self.iqs[path].head()
                if head is None:
                    break
                rec = self.recs[head[1]]
                if self.cfg.no_bypass and rec.arrival >= now:
                    break
                self.iqs[path].pop()
            else:
                if self._pulls >= self.cfg.dispatch_ipc or not self.dq:
                    break
                rec = self.dq[0]
                if path not in self._steer_paths(rec.inst):
                    break
                if self.cfg.no_bypass and rec.arrival >= now:
                    break
                self.dq.popleft()
                self._note_arith_steer(path)
                self._pulls += 1
            self._install(path, rec)
            pulled = True
            res = self.residents[path]
            if res.done:  # zero-length bodies retire without issuing
                self._retire(path, res)
                continue
            break
        return pulled

    def _refill(self, now: int) -> bool:
        pulled = False
        for path in self.cfg.paths:
            if self.residents[path] is None:
                pulled |= self._pull_into(path, now, same_cycle=False)
        return pulled

    # ------------------------------------------------------------ sequence

    def _check_hazard(self, uop, age: int, win) -> str:
        reads = uop.reads
        writes = {uop.write} if uop.write is not None else frozenset()
        older_prsb, older_pwsb = compose_older(win, age)
        verdict = hazard(reads, writes, older_prsb, older_pwsb)
        causes = set()
        for e in win:  # monitor: fan-in composition must match per-entry truth
            if e.kind is EntryKind.FU_INFLIGHT or e.age < age:
                c = hazard(reads, writes, e.prsb, e.pwsb)
                if c != "clear":
                    causes.add(c)
        brute = next((c for c in HAZARD_CAUSES if c in causes), "clear")
        if brute != verdict:
            self.monitor_violations += 1
        return verdict

    def _compute_row(self, inst: VectorInstruction, row: int) -> tuple[bytes, bytes]:
        """Functional result of one arithmetic micro-op over committed state."""
        esz = inst.vtype.esz
        rb = self.vrf.row_bytes
        lanes = rb // esz
        active = min(inst.vtype.vl - row * lanes, lanes)
        epr = self.cfg.egs_per_reg
        b = unpack_lanes(self.vrf.read_row(inst.vs2 * epr + row), esz, active)
        if inst.vs1 is not None:
            a = unpack_lanes(self.vrf.read_row(inst.vs1 * epr + row), esz, active)
        else:
            a = [inst.imm] * active
        op = inst.opcode
        if op is Opcode.VADD:
            out = [x + y for x, y in zip(a, b)]
        elif op is Opcode.VMUL:
            out = [x * y for x, y in zip(a, b)]
        elif op in ACC_OPS:
            acc = unpack_lanes(self.vrf.read_row(inst.vd * epr + row), esz, active)
            out = [c + x * y for c, x, y in zip(acc, a, b)]
        else:
            raise AssertionError(f"not an arithmetic opcode: {op}")
        pad = rb - active * esz
        return pack_lanes(out, esz) + bytes(pad), b"\x01" * (active * esz) + bytes(pad)

    def _schedule_write(self, eg: int, wb: int, data: bytes, mask: bytes,
                        age: int, inst) -> None:
        if any(e.pwsb >> eg & 1 for e in self.fu):  # monitor: oldest-write rule
            self.monitor_violations += 1
        self.pending_writes.setdefault(wb, []).append((eg, data, mask))
        self.fu.append(WindowEntry(age, 0, 1 << eg, EntryKind.FU_INFLIGHT,
                                   inst, wb_cycle=wb))

    def _sequence(self, now: int, win) -> tuple[int, dict]:
        cfg = self.cfg
        min_live = self._min_live_age() if not cfg.ooo else None
        cands = []
        causes: dict[str, tuple[str, int]] = {}
        for path in cfg.paths:
            res = self.residents[path]
            if res is None:
                continue
            uop = res.peek()
            if not cfg.ooo and res.age != min_live:
                causes[path] = ("serialize", res.age)
                continue
            verdict = self._check_hazard(uop, res.age, win)
            if verdict != "clear":
                causes[path] = (verdict, res.age)
                continue
            if path == "load" and not self.lsu.load_row_ready(res.inst, uop.field, uop.row):
                causes[path] = ("mem_data", res.age)
                continue
            if path == "store" and not self.lsu.can_push_data(res.inst):
                causes[path] = ("store_buf", res.age)
                continue
            cands.append((res.age, path, res, uop))

        cands.sort()
        issued = 0
        for age, path, res, uop in cands:
            inst = res.inst
            wb = now + cfg.wb_delay(inst.opcode)
            if uop.write is not None:
                if not self.vrf.try_reserve_write(uop.write, wb, is_load=inst.is_load):
                    causes[path] = ("write_port", age)
                    continue
            if uop.reads and not self.vrf.try_reads(uop.reads):
                if uop.write is not None:
                    self.vrf.release_write(uop.write, wb, is_load=inst.is_load)
                causes[path] = ("read_port", age)
                continue

            res.issue()
            if inst.is_load:
                data, mask = self.lsu.pop_load_row(inst, uop.field, uop.row)
                self._schedule_write(uop.write, wb, data, mask, age, inst)
            elif inst.is_store:
                src = next(iter(uop.reads))
                self.lsu.push_data(inst, uop.field, uop.row, self.vrf.read_row(src))
            else:
                data, mask = self._compute_row(inst, uop.row)
                self._schedule_write(uop.write, wb, data, mask, age, inst)
                lanes = self.vrf.row_bytes // inst.vtype.esz
                active = min(inst.vtype.vl - uop.row * lanes, lanes)
                self.metrics.element_ops += active
                self.metrics.bits_computed += active * inst.vtype.sew
                self.metrics.fu_busy_cycles += 1
            issued += 1
            causes.pop(path, None)
            if self.want_trace:
                reads = " ".join(str(r) for r in sorted(uop.reads))
                w = "" if uop.write is None else str(uop.write)
                self.trace.append(f"{now},{path},{inst.seq_id},{reads},{w},")
            if res.done:
                self._retire(path, res)
                self._pull_into(path, now, same_cycle=True)

        if self.want_trace:
            for path, (cause, _) in sorted(causes.items(),
                                           key=lambda kv: cfg.paths.index(kv[0])):
                res = self.residents[path]
                uop = res.peek()
                reads = " ".join(str(r) for r in sorted(uop.reads))
                w = "" if uop.write is None else str(uop.write)
                self.trace.append(f"{now},{path},{res.inst.seq_id},{reads},{w},{cause}")
        return issued, causes

    # ----------------------------------------------------------- commit

    def _commit(self, now: int) -> bool:
        due = self.pending_writes.pop(now, None)
        if due:
            for eg, data, mask in due:
                self.vrf.stage_write(eg, data, mask)
            self.vrf.apply_staged()
        survivors = [e for e in self.fu if e.wb_cycle != now]
        finished = len(survivors) != len(self.fu)
        self.fu = survivors
        if finished:
            for rec in self.recs.values():
                if rec.state == "fu" and not self._fu_bits(rec.age):
                    rec.state = "done"
        return bool(due)

    # ----------------------------------------------------------- main loop

    def _finished(self) -> bool:
        fe = self.frontend
        if not (fe.done or fe.trapped is not None):
            return False
        if self.dq or self.fu or self.pending_writes:
            return False
        if any(len(q) for q in self.iqs.values()):
            return False
        if any(r is not None for r in self.residents.values()):
            return False
        return not self.lsu.busy and self.mem.outstanding == 0

    def step(self) -> None:
        now = self.now
        cfg = self.cfg
        self.vrf.begin_cycle(now)
        self._pulls = 0
        self._seq_free_at_start = {p: self.residents[p] is None for p in cfg.paths}

        before = self.mem.outstanding
        self.lsu.take_responses(now)
        progress = self.mem.outstanding != before

        win = self._window()
        issued, causes = self._sequence(now, win)
        progress |= issued > 0

        moved, fe_stall = self._dispatch(now)
        progress |= moved

        accepts0, bytes0 = self.mem.accepts, self.mem.bytes_accepted
        load_res = self.residents["load"]
        self.lsu.do_agen(now, cfg.dae, load_res.inst if load_res else None)
        if self.mem.accepts != accepts0:
            progress = True
            self.metrics.mem_busy_cycles += 1
            self.metrics.bytes_moved += self.mem.bytes_accepted - bytes0

        progress |= self._commit(now)
        progress |= self._refill(now)

        if issued == 0 and not self._finished():
            if causes:
                hz = {p: c for p, c in causes.items() if c[0] in HAZARD_CAUSES}
                pool = hz or causes
                cause = min(pool.values(), key=lambda c: c[1])[0]
            else:
                cause = fe_stall or "empty"
            self.metrics.stall_cycles[cause] = self.metrics.stall_cycles.get(cause, 0) + 1

        if now in self.snapshot_at:
            self.snapshots[now] = self.render_window()

        if progress:
            self._last_progress = now
        elif now - self._last_progress > self._watchdog:
            raise EngineHang(self._hang_report(now))
        self.now = now + 1
        self.metrics.cycles = self.now

    def _hang_report(self, now: int) -> str:
        lines = [f"no progress since cycle {self._last_progress} (now {now})"]
        for path in self.cfg.paths:
            res = self.residents[path]
            state = "idle" if res is None else f"age {res.age} uop {res.next_idx}/{len(res.uops)}"
            lines.append(f"  {path}: {state}")
        lines.append(f"  dispatch queue: {[r.age for r in self.dq]}")
        lines.append(f"  memory outstanding: {self.mem.outstanding}")
        lines.append(self.render_window())
        return "\n".join(lines)

    def run(self) -> RunResult:
        while True:
            self.step()
            if self._finished():
                break
        regs = [self.vrf.get_reg(r) for r in range(self.cfg.num_arch_regs)]
        return RunResult(machine=self.cfg, cycles=self.metrics.cycles,
                         metrics=self.metrics, trap=self.trap,
                         monitor_violations=self.monitor_violations,
                         trace=self.trace, vrf_regs=regs,
                         mem=self.mem.backing, snapshots=self.snapshots)


def run(program: Program, machine: SimConfig,
        fault_pages: frozenset[int] = frozenset(),
        want_trace: bool = False,
        snapshot_at=()) -> RunResult:
    """Simulate program on machine to completion (or trap) and collect results."""
    eng = Engine(machine, program, fault_pages=frozenset(fault_pages),
                 want_trace=want_trace, snapshot_at=frozenset(snapshot_at))
    return eng.run()
