"""Instruction set vocabulary for the simulator's vector mini-ISA.

Covers just enough of a vector ISA to exercise the scheduling machinery:
elementwise integer arithmetic, a timing-opaque fused multiply-add, and
unit-stride / strided / indexed / segmented loads and stores, plus the
vl/vtype-setting instruction.

The central geometric notion is the element group: one DLEN-bit row of
the register file. Register r owns rows [r*(VLEN/DLEN), (r+1)*(VLEN/DLEN)),
so a group id is global across the whole register file and everything the
scheduler tracks is a set of these ids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .config import SimConfig

SEWS = (8, 16, 32, 64)
LMULS = (1, 2, 4, 8)


class Opcode(enum.Enum):
    VADD = "vadd"
    VMUL = "vmul"
    VMACC = "vmacc"
    VFMA_OPAQUE = "vfma"
    VLE = "vle"
    VSE = "vse"
    VLSE = "vlse"
    VSSE = "vsse"
    VLXE = "vlxe"
    VSXE = "vsxe"
    VLSEG = "vlseg"
    VSSEG = "vsseg"
    VSETVLI = "vsetvli"

    @property
    def mnemonic(self) -> str:
        return self.value


ARITH_OPS = frozenset({Opcode.VADD, Opcode.VMUL, Opcode.VMACC, Opcode.VFMA_OPAQUE})
LOAD_OPS = frozenset({Opcode.VLE, Opcode.VLSE, Opcode.VLXE, Opcode.VLSEG})
STORE_OPS = frozenset({Opcode.VSE, Opcode.VSSE, Opcode.VSXE, Opcode.VSSEG})
MEM_OPS = LOAD_OPS | STORE_OPS
INDEXED_OPS = frozenset({Opcode.VLXE, Opcode.VSXE})
STRIDED_OPS = frozenset({Opcode.VLSE, Opcode.VSSE})
SEGMENT_OPS = frozenset({Opcode.VLSEG, Opcode.VSSEG})
# multiply-accumulate forms read their destination as a third source
ACC_OPS = frozenset({Opcode.VMACC, Opcode.VFMA_OPAQUE})

MNEMONIC_TO_OPCODE = {op.mnemonic: op for op in Opcode}


@dataclass(frozen=True, slots=True)
class VType:
    """Per-instruction vector type snapshot: element width, grouping, length."""

    sew: int
    lmul: int
    vl: int

    def __post_init__(self):
        if self.sew not in SEWS:
            raise ValueError(f"unsupported SEW {self.sew}")
        if self.lmul not in LMULS:
            raise ValueError(f"unsupported LMUL {self.lmul}")
        if self.vl < 0:
            raise ValueError(f"negative vl {self.vl}")

    @property
    def esz(self) -> int:
        """Element size in bytes."""
        return self.sew // 8


@dataclass(frozen=True, slots=True)
class VectorInstruction:
    """One decoded instruction.

    Register operand meaning varies by opcode: vd is the destination for
    loads and arithmetic but the data source for stores; vs2 doubles as
    the index register for indexed accesses. imm carries the scalar
    operand of scalar-vector arithmetic forms and the requested vl of a
    vsetvli. Memory opcodes carry a byte base address (and stride where
    applicable); arithmetic opcodes never do.
    """

    opcode: Opcode
    vtype: VType
    vd: int | None = None
    vs1: int | None = None
    vs2: int | None = None
    imm: int | None = None
    scalar_base: int | None = None
    stride: int | None = None
    nf: int = 1
    seq_id: int | None = None

    def with_vtype(self, vtype: VType) -> "VectorInstruction":
        return replace(self, vtype=vtype)

    def with_seq_id(self, seq_id: int) -> "VectorInstruction":
        return replace(self, seq_id=seq_id)

    @property
    def is_load(self) -> bool:
        return self.opcode in LOAD_OPS

    @property
    def is_store(self) -> bool:
        return self.opcode in STORE_OPS

    @property
    def is_mem(self) -> bool:
        return self.opcode in MEM_OPS

    @property
    def is_arith(self) -> bool:
        return self.opcode in ARITH_OPS


def vlmax(vtype: VType, machine: SimConfig) -> int:
    """Largest legal vl for the given type on the given machine."""
    return (machine.vlen // vtype.sew) * vtype.lmul


def native_chime(machine: SimConfig) -> int:
    """Datapath passes needed to cover one whole register: VLEN/DLEN."""
    return machine.vlen // machine.dlen


def groups_per_operand(vtype: VType, machine: SimConfig) -> int:
    """Element groups a single register-group operand occupies at vl."""
    if vtype.vl == 0:
        return 0
    return -(-(vtype.vl * vtype.sew) // machine.dlen)


def register_groups(reg: int, machine: SimConfig) -> range:
    """All element-group ids belonging to architectural register reg."""
    epr = machine.egs_per_reg
    return range(reg * epr, (reg + 1) * epr)


def _operand_base_regs(inst: VectorInstruction, operand: str) -> list[int]:
    op = inst.opcode
    if operand == "vd":
        if inst.vd is None:
            return []
        if op in SEGMENT_OPS:
            return [inst.vd + f * inst.vtype.lmul for f in range(inst.nf)]
        return [inst.vd]
    if operand == "vs1":
        if op in ARITH_OPS and inst.vs1 is not None:
            return [inst.vs1]
        return []
    if operand == "vs2":
        if inst.vs2 is None:
            return []
        if op in ARITH_OPS or op in INDEXED_OPS:
            return [inst.vs2]
        return []
    raise ValueError(f"unknown operand {operand!r}")


def element_groups_of(inst: VectorInstruction, operand: str, machine: SimConfig) -> frozenset[int]:
    """Element-group ids the named operand actually touches at its vl.

    Only the first ceil(vl*sew/DLEN) groups of each register group are
    touched; a segmented operand unions the groups of all nf fields.
    vl=0 touches nothing.
    """
    count = groups_per_operand(inst.vtype, machine)
    if count == 0:
        return frozenset()
    epr = machine.egs_per_reg
    out = set()
    for base in _operand_base_regs(inst, operand):
        start = base * epr
        out.update(range(start, start + count))
    return frozenset(out)


def validate_instruction(inst: VectorInstruction, machine: SimConfig) -> None:
    """Reject geometrically impossible instructions with a diagnostic."""
    vt = inst.vtype
    op = inst.opcode
    if op is Opcode.VSETVLI:
        if inst.imm is None or inst.imm < 0:
            raise ValueError("vsetvli needs a non-negative requested vl")
        return
    if vt.vl > vlmax(vt, machine):
        raise ValueError(f"vl {vt.vl} exceeds VLMAX {vlmax(vt, machine)} for e{vt.sew}/m{vt.lmul}")
    regs = []
    for operand in ("vd", "vs1", "vs2"):
        regs.extend(_operand_base_regs(inst, operand))
    for reg in regs:
        if reg % vt.lmul != 0:
            raise ValueError(f"register v{reg} not aligned to group size m{vt.lmul}")
        if not 0 <= reg < machine.num_arch_regs:
            raise ValueError(f"register v{reg} out of range")
        if reg + vt.lmul > machine.num_arch_regs:
            raise ValueError(f"group v{reg}..v{reg + vt.lmul - 1} spills past the register file")
    if op in SEGMENT_OPS:
        if not 1 <= inst.nf <= 8 or inst.nf * vt.lmul > 8:
            raise ValueError(f"segment field count nf={inst.nf} illegal at m{vt.lmul}")
        if inst.vd is not None and inst.vd + inst.nf * vt.lmul > machine.num_arch_regs:
            raise ValueError("segment fields spill past the register file")
    if op in MEM_OPS:
        if inst.scalar_base is None:
            raise ValueError(f"{op.mnemonic} needs a base address")
        if inst.scalar_base % vt.esz != 0:
            raise ValueError(f"base {inst.scalar_base:#x} not aligned to {vt.esz}-byte elements")
        if op in STRIDED_OPS:
            if inst.stride is None:
                raise ValueError(f"{op.mnemonic} needs a stride")
            if inst.stride % vt.esz != 0:
                raise ValueError(f"stride {inst.stride} not aligned to {vt.esz}-byte elements")
    if op in ARITH_OPS:
        if inst.vd is None or inst.vs2 is None:
            raise ValueError(f"{op.mnemonic} needs vd and vs2")
        if inst.vs1 is None and inst.imm is None:
            raise ValueError(f"{op.mnemonic} needs either vs1 or a scalar operand")
        if inst.vs1 is not None and inst.imm is not None:
            raise ValueError(f"{op.mnemonic} cannot take both vs1 and a scalar operand")
    if op in INDEXED_OPS and inst.vs2 is None:
        raise ValueError(f"{op.mnemonic} needs an index register")
    if op is Opcode.VLXE and inst.vd == inst.vs2:
        # the destination's pending write would gate reads of its own
        # index rows forever; group alignment makes base equality the
        # only possible overlap
        raise ValueError("indexed load destination overlaps its index register")
