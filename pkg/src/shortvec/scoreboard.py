"""Pending-read / pending-write scoreboards at element-group granularity.

Every instruction in the out-of-order window owns two bit-vectors over
all element groups in the register file: groups it has still to read,
and groups it has still to write. Hazard checks for an issuing micro-op
reduce to three mask intersections against the OR of all strictly older
entries. Scoreboards are plain ints here (bit i = element group i);
helpers convert to and from id sets at the edges.

Window entries come in three kinds with different precision:

* coarse entries sit in issue queues and claim the full operand
  footprint of the instruction,
* precise entries belong to sequencers and shed bits aggressively as
  micro-ops issue,
* in-flight entries track single not-yet-written destination groups of
  micro-ops inside a functional unit; they carry no reads and hazard
  against everyone regardless of age, which is sound because an issued
  write is always the oldest write to its group.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .config import SimConfig
from .isa import (
    ACC_OPS,
    ARITH_OPS,
    LOAD_OPS,
    SEGMENT_OPS,
    STORE_OPS,
    Opcode,
    VectorInstruction,
    groups_per_operand,
)


class EntryKind(enum.Enum):
    COARSE = "issue_queue_coarse"
    PRECISE = "sequencer_precise"
    FU_INFLIGHT = "fu_inflight"


@dataclass(slots=True)
class WindowEntry:
    age: int
    prsb: int
    pwsb: int
    kind: EntryKind
    inst: VectorInstruction | None = None
    wb_cycle: int = -1  # in-flight entries only: cycle the write lands


class AgeAllocator:
    """Monotonic 64-bit age tags; allocated at window entry, freed when an
    instruction finishes sequencing. Tags are never reused."""

    def __init__(self):
        self._next = 0
        self.live: set[int] = set()

    def alloc(self) -> int:
        tag = self._next
        self._next += 1
        if self._next >= 1 << 64:
            raise OverflowError("age tag space exhausted")
        self.live.add(tag)
        return tag

    def free(self, tag: int) -> None:
        self.live.remove(tag)


# ------------------------------------------------------------- bit helpers

def mask_from_ids(ids) -> int:
    mask = 0
    for i in ids:
        mask |= 1 << i
    return mask


def ids_from_mask(mask: int) -> frozenset[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return frozenset(out)


def render_bits(mask: int, width: int) -> str:
    """Table-style textual form, most significant group first: 8'b00001100."""
    return f"{width}'b{mask:0{width}b}"


def parse_bits(text: str) -> int:
    width_part, _, bits = text.partition("'b")
    if int(width_part) != len(bits):
        raise ValueError(f"width mismatch in {text!r}")
    return int(bits, 2)


def _span_mask(base_reg: int, count: int, epr: int) -> int:
    start = base_reg * epr
    return ((1 << count) - 1) << start


def operand_mask(inst: VectorInstruction, operand: str, machine: SimConfig) -> int:
    """Bitmask twin of isa.element_groups_of."""
    count = groups_per_operand(inst.vtype, machine)
    if count == 0:
        return 0
    epr = machine.egs_per_reg
    op = inst.opcode
    if operand == "vd":
        if inst.vd is None:
            return 0
        if op in SEGMENT_OPS:
            mask = 0
            for f in range(inst.nf):
                mask |= _span_mask(inst.vd + f * inst.vtype.lmul, count, epr)
            return mask
        return _span_mask(inst.vd, count, epr)
    if operand == "vs1":
        if op in ARITH_OPS and inst.vs1 is not None:
            return _span_mask(inst.vs1, count, epr)
        return 0
    if operand == "vs2":
        if inst.vs2 is not None and op in ARITH_OPS:
            return _span_mask(inst.vs2, count, epr)
        return 0
    raise ValueError(f"unknown operand {operand!r}")


def coarse_from_inst(inst: VectorInstruction, machine: SimConfig) -> tuple[int, int]:
    """Full-footprint (prsb, pwsb) claimed while an instruction waits in an
    issue queue: union of source operand groups, and all destination groups.

    Loads claim no reads here: index operands of indexed accesses are
    consumed before the instruction ever reaches the backend.
    """
    op = inst.opcode
    if op is Opcode.VSETVLI:
        return 0, 0
    prsb = 0
    pwsb = 0
    if op in ARITH_OPS:
        prsb |= operand_mask(inst, "vs1", machine)
        prsb |= operand_mask(inst, "vs2", machine)
        if op in ACC_OPS:
            prsb |= operand_mask(inst, "vd", machine)
        pwsb = operand_mask(inst, "vd", machine)
    elif op in LOAD_OPS:
        pwsb = operand_mask(inst, "vd", machine)
    elif op in STORE_OPS:
        prsb = operand_mask(inst, "vd", machine)
    return prsb, pwsb


def compose_older(window, me: int) -> tuple[int, int]:
    """OR of (prsb, pwsb) over all window entries strictly older than me.

    In-flight functional-unit entries participate with no age comparison:
    any write already in flight is older than every write the window can
    still issue to that group.
    """
    prsb = 0
    pwsb = 0
    for entry in window:
        if entry.kind is EntryKind.FU_INFLIGHT or entry.age < me:
            prsb |= entry.prsb
            pwsb |= entry.pwsb
    return prsb, pwsb


def hazard(reads, writes, older_prsb: int, older_pwsb: int) -> str:
    """Classify the dependence of a micro-op against older pending work.

    Any non-clear verdict stalls; the order raw > waw > war is only a
    reporting priority when several apply at once.
    """
    if not isinstance(reads, int):
        reads = mask_from_ids(reads)
    if not isinstance(writes, int):
        writes = mask_from_ids(writes)
    if reads & older_pwsb:
        return "raw"
    if writes & older_pwsb:
        return "waw"
    if writes & older_prsb:
        return "war"
    return "clear"


def render_entry(inst_text: str, ident, prsb: int, pwsb: int, width: int) -> str:
    return (f"{inst_text}, {ident}, "
            f"PRSb={render_bits(prsb, width)}, PWSb={render_bits(pwsb, width)}")
