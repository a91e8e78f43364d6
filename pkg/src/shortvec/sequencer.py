"""Issue queues and the per-path element-group sequencers.

Each execution path owns a small in-order issue queue and one sequencer.
The sequencer holds a single resident instruction, broken into
micro-ops: one element-group row of work per cycle. Arithmetic walks
operand rows in order; loads issue one writeback row per cycle as data
becomes available; stores read one data row per cycle into the store
unit's buffer. Segmented accesses walk rows in record-block order, all
fields of row r before row r+1, matching the order the memory stream
produces them.

While queued, an instruction is covered by its coarse whole-footprint
masks. Once resident, the masks turn precise and shrink as rows retire:
a row's bits clear the cycle its micro-op issues, so dependents chain
row by row instead of waiting for the whole register group. Indexed
accesses are the exception: their element-to-row mapping is driven by
index data, so their bits hold until the instruction leaves the
sequencer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .config import SimConfig
from .isa import ACC_OPS, INDEXED_OPS, SEGMENT_OPS, VectorInstruction
from .scoreboard import mask_from_ids


@dataclass(frozen=True, slots=True)
class MicroOp:
    """One cycle of work: read up to three rows, write up to one."""

    inst: VectorInstruction
    idx: int
    reads: frozenset[int]
    write: int | None
    field: int  # segment field, 0 otherwise
    row: int    # row within the operand register group
    last: bool


def rows_per_field(inst: VectorInstruction, machine: SimConfig) -> int:
    """Writeback (or data) rows each destination field occupies."""
    bits = inst.vtype.vl * inst.vtype.sew
    return -(-bits // machine.dlen)


def uop_schedule(inst: VectorInstruction, machine: SimConfig) -> tuple[MicroOp, ...]:
    epr = machine.egs_per_reg
    vd = inst.vd
    ops: list[MicroOp] = []

    if inst.is_arith:
        n = rows_per_field(inst, machine)
        for g in range(n):
            reads = set()
            if inst.vs1 is not None:
                reads.add(inst.vs1 * epr + g)
            reads.add(inst.vs2 * epr + g)
            if inst.opcode in ACC_OPS:
                reads.add(vd * epr + g)
            ops.append(MicroOp(inst=inst, idx=g, reads=frozenset(reads),
                               write=vd * epr + g, field=0, row=g,
                               last=g == n - 1))
        return tuple(ops)

    nf = inst.nf if inst.opcode in SEGMENT_OPS else 1
    rows = rows_per_field(inst, machine)
    total = rows * nf
    k = 0
    for r in range(rows):
        for f in range(nf):
            eg = (vd + f * inst.vtype.lmul) * epr + r
            if inst.is_load:
                op = MicroOp(inst=inst, idx=k, reads=frozenset(),
                             write=eg, field=f, row=r, last=k == total - 1)
            else:
                op = MicroOp(inst=inst, idx=k, reads=frozenset({eg}),
                             write=None, field=f, row=r, last=k == total - 1)
            ops.append(op)
            k += 1
    return tuple(ops)


class IssueQueue:
    """In-order FIFO in front of one sequencer."""

    def __init__(self, depth: int):
        self.depth = depth
        self._q: deque[tuple[VectorInstruction, int]] = deque()

    def __len__(self) -> int:
        return len(self._q)

    @property
    def full(self) -> bool:
        return len(self._q) >= self.depth

    def push(self, inst: VectorInstruction, age: int) -> None:
        if self.full:
            raise AssertionError("push to full issue queue")
        self._q.append((inst, age))

    def head(self) -> tuple[VectorInstruction, int] | None:
        return self._q[0] if self._q else None

    def pop(self) -> tuple[VectorInstruction, int]:
        return self._q.popleft()

    def ages(self) -> list[int]:
        return [age for _, age in self._q]


class Resident:
    """An instruction occupying a sequencer, with precise masks."""

    __slots__ = ("inst", "age", "uops", "next_idx", "prsb", "pwsb", "hold")

    def __init__(self, inst: VectorInstruction, age: int, machine: SimConfig):
        self.inst = inst
        self.age = age
        self.uops = uop_schedule(inst, machine)
        self.next_idx = 0
        reads = set()
        writes = set()
        for op in self.uops:
            reads |= op.reads
            if op.write is not None:
                writes.add(op.write)
        self.prsb = mask_from_ids(reads)
        self.pwsb = mask_from_ids(writes)
        self.hold = inst.opcode in INDEXED_OPS

    @property
    def done(self) -> bool:
        return self.next_idx >= len(self.uops)

    def peek(self) -> MicroOp | None:
        if self.done:
            return None
        return self.uops[self.next_idx]

    def truncate(self, keep_uops: int) -> None:
        """Drop trailing micro-ops after a trap cut the element stream."""
        keep_uops = max(keep_uops, self.next_idx)
        if keep_uops < len(self.uops):
            kept = list(self.uops[:keep_uops])
            if kept:
                last = kept[-1]
                kept[-1] = MicroOp(inst=last.inst, idx=last.idx, reads=last.reads,
                                   write=last.write, field=last.field,
                                   row=last.row, last=True)
            self.uops = tuple(kept)
            if not self.hold:
                live_r = set()
                live_w = set()
                for op in self.uops[self.next_idx:]:
                    live_r |= op.reads
                    if op.write is not None:
                        live_w.add(op.write)
                self.prsb &= mask_from_ids(live_r)
                self.pwsb &= mask_from_ids(live_w)

    def issue(self) -> MicroOp:
        """Advance one micro-op, clearing its bits unless held."""
        op = self.uops[self.next_idx]
        self.next_idx += 1
        if not self.hold:
            self.prsb &= ~mask_from_ids(op.reads)
            if op.write is not None:
                self.pwsb &= ~(1 << op.write)
        elif self.done:
            self.prsb = 0
            self.pwsb = 0
        return op
