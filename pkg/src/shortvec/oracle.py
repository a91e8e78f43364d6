"""In-order functional reference model.

Executes programs instruction by instruction with no timing at all:
a 32xVLEN-bit register file, a sparse byte memory, modular integer
arithmetic at SEW, and tail-undisturbed writes. The cycle-level engine
must land on bit-identical architectural state, so this model is kept
deliberately plain.

Element traps are precise at element granularity: elements strictly
earlier in the instruction's memory-order stream keep their effects,
the faulting element and everything younger never happen.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import SimConfig
from .isa import (
    ACC_OPS,
    Opcode,
    VectorInstruction,
)
from .memimg import ByteMap
from .program import Program, resolve


@dataclass(frozen=True)
class Trap:
    """A page fault raised by one element of one instruction."""

    seq_id: int
    element: int
    addr: int


class ArchState:
    def __init__(self, machine: SimConfig, data: ByteMap | None = None):
        self.machine = machine
        regbytes = machine.vlen // 8
        self.vrf = [bytearray(regbytes) for _ in range(machine.num_arch_regs)]
        self.mem = data.clone() if data is not None else ByteMap()
        self.vtype = None

    def group_read(self, base_reg: int, nbytes: int) -> bytes:
        """First nbytes of the register group starting at base_reg."""
        regbytes = self.machine.vlen // 8
        nregs = -(-nbytes // regbytes)
        blob = b"".join(bytes(self.vrf[base_reg + i]) for i in range(nregs))
        return blob[:nbytes]

    def group_write(self, base_reg: int, offset: int, data: bytes) -> None:
        """Write data at byte offset within the group; tail stays as it was."""
        regbytes = self.machine.vlen // 8
        pos = offset
        done = 0
        while done < len(data):
            reg = base_reg + pos // regbytes
            at = pos % regbytes
            take = min(regbytes - at, len(data) - done)
            self.vrf[reg][at:at + take] = data[done:done + take]
            pos += take
            done += take


@dataclass
class OracleResult:
    state: ArchState
    trap: Trap | None = None
    executed: int = 0  # instructions fully or partially executed


def unpack_lanes(blob: bytes, esz: int, count: int) -> list[int]:
    return [int.from_bytes(blob[i * esz:(i + 1) * esz], "little") for i in range(count)]


def pack_lanes(vals: list[int], esz: int) -> bytes:
    mask = (1 << (esz * 8)) - 1
    return b"".join((v & mask).to_bytes(esz, "little") for v in vals)


def _mem_stream(inst: VectorInstruction, state: ArchState):
    """Yield (stream_index, addr, group_base, elem_slot) in memory order."""
    vt = inst.vtype
    esz = vt.esz
    base = inst.scalar_base
    op = inst.opcode
    if op in (Opcode.VLE, Opcode.VSE):
        for i in range(vt.vl):
            yield i, base + i * esz, inst.vd, i
    elif op in (Opcode.VLSE, Opcode.VSSE):
        for i in range(vt.vl):
            yield i, base + i * inst.stride, inst.vd, i
    elif op in (Opcode.VLXE, Opcode.VSXE):
        idx = unpack_lanes(state.group_read(inst.vs2, vt.vl * esz), esz, vt.vl)
        for i in range(vt.vl):
            addr = base + idx[i]
            if addr % esz != 0:
                raise ValueError(f"indexed element {i} address {addr:#x} not {esz}-byte aligned")
            yield i, addr, inst.vd, i
    elif op in (Opcode.VLSEG, Opcode.VSSEG):
        k = 0
        for i in range(vt.vl):
            for f in range(inst.nf):
                yield k, base + (i * inst.nf + f) * esz, inst.vd + f * vt.lmul, i
                k += 1
    else:
        raise ValueError(f"not a memory opcode: {op}")


def exec_one(state: ArchState, inst: VectorInstruction,
             fault_pages: frozenset[int] = frozenset()) -> Trap | None:
    """Apply one resolved instruction to state; returns a Trap instead of
    finishing if an element lands on a faulting page."""
    op = inst.opcode
    vt = inst.vtype
    if op is Opcode.VSETVLI:
        state.vtype = vt
        return None
    if vt.vl == 0:
        return None
    esz = vt.esz

    if inst.is_arith:
        n = vt.vl
        vs2 = unpack_lanes(state.group_read(inst.vs2, n * esz), esz, n)
        if inst.vs1 is not None:
            vs1 = unpack_lanes(state.group_read(inst.vs1, n * esz), esz, n)
        else:
            vs1 = [inst.imm] * n
        if op is Opcode.VADD:
            out = [a + b for a, b in zip(vs1, vs2)]
        elif op is Opcode.VMUL:
            out = [a * b for a, b in zip(vs1, vs2)]
        elif op in ACC_OPS:
            acc = unpack_lanes(state.group_read(inst.vd, n * esz), esz, n)
            out = [c + a * b for c, a, b in zip(acc, vs1, vs2)]
        else:
            raise ValueError(f"unhandled arithmetic opcode {op}")
        state.group_write(inst.vd, 0, pack_lanes(out, esz))
        return None

    page_bytes = state.machine.page_bytes
    if inst.is_load:
        for k, addr, group, slot in _mem_stream(inst, state):
            if (addr // page_bytes) in fault_pages:
                return Trap(seq_id=inst.seq_id, element=k, addr=addr)
            state.group_write(group, slot * esz, state.mem.read(addr, esz))
        return None
    if inst.is_store:
        for k, addr, group, slot in _mem_stream(inst, state):
            if (addr // page_bytes) in fault_pages:
                return Trap(seq_id=inst.seq_id, element=k, addr=addr)
            state.mem.write(addr, state.group_read(group, (slot + 1) * esz)[slot * esz:])
        return None
    raise ValueError(f"unhandled opcode {op}")


def exec_program(program: Program, machine: SimConfig,
                 fault_pages: frozenset[int] = frozenset()) -> OracleResult:
    state = ArchState(machine, program.data)
    executed = 0
    for inst in resolve(program, machine):
        trap = exec_one(state, inst, fault_pages)
        executed += 1
        if trap is not None:
            return OracleResult(state=state, trap=trap, executed=executed)
    return OracleResult(state=state, executed=executed)


def dump_arch(vrf: list[bytearray], mem: ByteMap) -> str:
    """Deterministic text dump of non-zero registers and touched memory."""
    lines = ["[registers]"]
    for r, reg in enumerate(vrf):
        if any(reg):
            lines.append(f"v{r}: {bytes(reg).hex()}")
    lines.append("[memory]")
    dump = mem.dump_hex()
    if dump:
        lines.append(dump.rstrip("\n"))
    return "\n".join(lines) + "\n"
