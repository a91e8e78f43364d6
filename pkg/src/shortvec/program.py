"""Program representation: assembly text, kernel generators, stripmining.

The assembly grammar is one instruction per line, `#` to end of line for
comments, operands comma-separated, addresses in hex, and vtype changes
expressed only through `vsetvli <avl>, e<sew>, m<lmul>`. A bare integer
where a source register could appear is a scalar operand.

Requested vector lengths are kept as written; clamping against VLMAX is
machine-dependent and happens in resolve(). Kernel generators emit one
vsetvli per stripmine chunk with the remaining element count, so the
clamp is what produces the stripmine pattern.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace

from .config import SimConfig
from .isa import (
    ARITH_OPS,
    INDEXED_OPS,
    MNEMONIC_TO_OPCODE,
    SEGMENT_OPS,
    STRIDED_OPS,
    Opcode,
    VType,
    VectorInstruction,
    validate_instruction,
    vlmax,
)
from .memimg import ByteMap

KERNEL_NAMES = ("axpy", "memcpy", "gemm_tile", "transpose", "gather", "stream_load")


@dataclass
class Program:
    insts: list[VectorInstruction] = field(default_factory=list)
    data: ByteMap = field(default_factory=ByteMap)
    name: str = ""
    meta: dict = field(default_factory=dict)


class ProgramError(ValueError):
    pass


_REG_RE = re.compile(r"^v(\d+)$")


def _parse_int(tok: str, lineno: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise ProgramError(f"line {lineno}: expected an integer, got {tok!r}") from None


def _parse_reg(tok: str, lineno: int) -> int:
    m = _REG_RE.match(tok)
    if not m:
        raise ProgramError(f"line {lineno}: expected a register like v8, got {tok!r}")
    return int(m.group(1))


def parse(text: str) -> Program:
    """Parse assembly text into a Program.

    seq_ids number the instructions that will occupy the backend window;
    vsetvli never enters the backend and carries no seq_id.
    """
    insts: list[VectorInstruction] = []
    vtype: VType | None = None
    seq_id = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mnemonic, _, rest = line.partition(" ")
        opcode = MNEMONIC_TO_OPCODE.get(mnemonic.lower())
        if opcode is None:
            raise ProgramError(f"line {lineno}: unknown opcode {mnemonic!r}")
        ops = [tok.strip() for tok in rest.split(",")] if rest.strip() else []

        if opcode is Opcode.VSETVLI:
            if len(ops) != 3 or not ops[1].startswith("e") or not ops[2].startswith("m"):
                raise ProgramError(f"line {lineno}: expected vsetvli <avl>, e<sew>, m<lmul>")
            avl = _parse_int(ops[0], lineno)
            sew = _parse_int(ops[1][1:], lineno)
            lmul = _parse_int(ops[2][1:], lineno)
            vtype = VType(sew=sew, lmul=lmul, vl=avl)
            insts.append(VectorInstruction(opcode=opcode, vtype=vtype, imm=avl))
            continue

        if vtype is None:
            raise ProgramError(f"line {lineno}: vector instruction before any vsetvli")

        inst = _parse_operands(opcode, ops, vtype, lineno)
        insts.append(inst.with_seq_id(seq_id))
        seq_id += 1
    return Program(insts=insts)


def _parse_operands(opcode: Opcode, ops: list[str], vtype: VType, lineno: int) -> VectorInstruction:
    def need(n):
        if len(ops) != n:
            raise ProgramError(f"line {lineno}: {opcode.mnemonic} takes {n} operands, got {len(ops)}")

    if opcode in ARITH_OPS:
        need(3)
        vd = _parse_reg(ops[0], lineno)
        vs2 = _parse_reg(ops[2], lineno)
        if _REG_RE.match(ops[1]):
            return VectorInstruction(opcode=opcode, vtype=vtype, vd=vd,
                                     vs1=_parse_reg(ops[1], lineno), vs2=vs2)
        return VectorInstruction(opcode=opcode, vtype=vtype, vd=vd,
                                 imm=_parse_int(ops[1], lineno), vs2=vs2)
    if opcode in (Opcode.VLE, Opcode.VSE):
        need(2)
        return VectorInstruction(opcode=opcode, vtype=vtype,
                                 vd=_parse_reg(ops[0], lineno),
                                 scalar_base=_parse_int(ops[1], lineno))
    if opcode in STRIDED_OPS:
        need(3)
        return VectorInstruction(opcode=opcode, vtype=vtype,
                                 vd=_parse_reg(ops[0], lineno),
                                 scalar_base=_parse_int(ops[1], lineno),
                                 stride=_parse_int(ops[2], lineno))
    if opcode in INDEXED_OPS:
        need(3)
        return VectorInstruction(opcode=opcode, vtype=vtype,
                                 vd=_parse_reg(ops[0], lineno),
                                 scalar_base=_parse_int(ops[1], lineno),
                                 vs2=_parse_reg(ops[2], lineno))
    if opcode in SEGMENT_OPS:
        need(3)
        return VectorInstruction(opcode=opcode, vtype=vtype,
                                 vd=_parse_reg(ops[0], lineno),
                                 scalar_base=_parse_int(ops[1], lineno),
                                 nf=_parse_int(ops[2], lineno))
    raise ProgramError(f"line {lineno}: cannot parse {opcode.mnemonic}")


def render_inst(inst: VectorInstruction) -> str:
    op = inst.opcode
    if op is Opcode.VSETVLI:
        return f"vsetvli {inst.imm}, e{inst.vtype.sew}, m{inst.vtype.lmul}"
    if op in ARITH_OPS:
        src1 = f"v{inst.vs1}" if inst.vs1 is not None else str(inst.imm)
        return f"{op.mnemonic} v{inst.vd}, {src1}, v{inst.vs2}"
    if op in (Opcode.VLE, Opcode.VSE):
        return f"{op.mnemonic} v{inst.vd}, {inst.scalar_base:#x}"
    if op in STRIDED_OPS:
        return f"{op.mnemonic} v{inst.vd}, {inst.scalar_base:#x}, {inst.stride}"
    if op in INDEXED_OPS:
        return f"{op.mnemonic} v{inst.vd}, {inst.scalar_base:#x}, v{inst.vs2}"
    if op in SEGMENT_OPS:
        return f"{op.mnemonic} v{inst.vd}, {inst.scalar_base:#x}, {inst.nf}"
    raise ProgramError(f"cannot render {op}")


def render(program: Program) -> str:
    return "\n".join(render_inst(inst) for inst in program.insts) + "\n"


def disasm(inst: VectorInstruction) -> str:
    """Short register-operand form used in scoreboard snapshots."""
    op = inst.opcode
    tag = f"{op.mnemonic}.{inst.vtype.lmul}"
    if op in ARITH_OPS:
        src1 = f"v{inst.vs1}" if inst.vs1 is not None else str(inst.imm)
        return f"{tag} v{inst.vd}, {src1}, v{inst.vs2}"
    if op in INDEXED_OPS:
        return f"{tag} v{inst.vd}, v{inst.vs2}"
    return f"{tag} v{inst.vd}"


def resolve(program: Program, machine: SimConfig) -> list[VectorInstruction]:
    """Bind a program to a machine: clamp every vl to VLMAX and validate.

    Returns the full instruction list (vsetvli included) with each
    instruction carrying its effective vtype snapshot.
    """
    out: list[VectorInstruction] = []
    vtype: VType | None = None
    for inst in program.insts:
        if inst.opcode is Opcode.VSETVLI:
            limit = vlmax(inst.vtype, machine)
            vtype = VType(sew=inst.vtype.sew, lmul=inst.vtype.lmul, vl=min(inst.imm, limit))
            if machine.dlen < vtype.sew:
                raise ProgramError(f"SEW {vtype.sew} wider than the {machine.dlen}-bit datapath")
            out.append(replace(inst, vtype=vtype))
            continue
        if vtype is None:
            raise ProgramError("vector instruction before any vsetvli")
        bound = inst.with_vtype(vtype)
        validate_instruction(bound, machine)
        out.append(bound)
    return out


def stripmine(total_elements: int, vtype: VType, machine: SimConfig) -> list[tuple[int, int]]:
    """Chunk a vector of total_elements into (offset, vl) pieces of at most VLMAX."""
    if total_elements < 0:
        raise ProgramError(f"negative element count {total_elements}")
    limit = vlmax(vtype, machine)
    chunks = []
    offset = 0
    while offset < total_elements:
        vl = min(total_elements - offset, limit)
        chunks.append((offset, vl))
        offset += vl
    return chunks


def parse_size(size: str | int | tuple) -> tuple[int, ...]:
    if isinstance(size, int):
        return (size,)
    if isinstance(size, tuple):
        return tuple(int(x) for x in size)
    return tuple(int(part, 0) for part in str(size).lower().split("x"))


class _Gen:
    """Shared plumbing for kernel generators: text assembly plus data image."""

    def __init__(self, vtype: VType, machine: SimConfig, seed: int):
        self.lines: list[str] = []
        self.data = ByteMap()
        self.vtype = vtype
        self.machine = machine
        self.rng = random.Random(seed)
        self.meta: dict = {}
        self._next_region = 0x10000

    def region(self, name: str, nbytes: int) -> int:
        """Carve a page-aligned address range and remember it in meta."""
        page = self.machine.page_bytes
        base = self._next_region
        self._next_region += -(-max(nbytes, 1) // page) * page
        self.meta[name] = base
        return base

    def fill_random(self, base: int, nbytes: int) -> None:
        self.data.write(base, self.rng.randbytes(nbytes))

    def emit(self, line: str) -> None:
        self.lines.append(line)

    def set_vl(self, avl: int) -> int:
        vt = self.vtype
        self.emit(f"vsetvli {avl}, e{vt.sew}, m{vt.lmul}")
        return min(avl, vlmax(vt, self.machine))

    def chunks(self, total: int) -> list[tuple[int, int]]:
        return stripmine(total, self.vtype, self.machine)

    def finish(self, name: str) -> Program:
        prog = parse("\n".join(self.lines) + "\n")
        prog.data = self.data
        prog.name = name
        prog.meta = dict(self.meta, vtype=self.vtype)
        return prog


def _gen_axpy(g: _Gen, n: int) -> None:
    esz = g.vtype.esz
    x = g.region("x", n * esz)
    y = g.region("y", n * esz)
    g.fill_random(x, n * esz)
    g.fill_random(y, n * esz)
    a = g.rng.randrange(1, 1 << g.vtype.sew)
    g.meta["a"] = a
    g.meta["n"] = n
    for off, vl in g.chunks(n):
        g.set_vl(n - off)
        g.emit(f"vle v0, {x + off * esz:#x}")
        g.emit(f"vle v8, {y + off * esz:#x}")
        g.emit(f"vmacc v8, {a}, v0")
        g.emit(f"vse v8, {y + off * esz:#x}")


def _gen_memcpy(g: _Gen, n: int) -> None:
    esz = g.vtype.esz
    src = g.region("src", n * esz)
    dst = g.region("dst", n * esz)
    g.fill_random(src, n * esz)
    g.meta["n"] = n
    for off, vl in g.chunks(n):
        g.set_vl(n - off)
        g.emit(f"vle v0, {src + off * esz:#x}")
        g.emit(f"vse v0, {dst + off * esz:#x}")


def _gen_gemm_tile(g: _Gen, m: int, n: int, k: int) -> None:
    # C[m,n] += A[m,k] * B[k,n]; A values ride as scalar operands of vmacc
    esz = g.vtype.esz
    b = g.region("b", k * n * esz)
    c = g.region("c", m * n * esz)
    g.fill_random(b, k * n * esz)
    g.fill_random(c, m * n * esz)
    a_vals = [[g.rng.randrange(0, 1 << g.vtype.sew) for _ in range(k)] for _ in range(m)]
    g.meta.update(m=m, n=n, k=k, a_vals=a_vals)
    vb, vc = 0, 8
    for off, vl in g.chunks(n):
        g.set_vl(n - off)
        for i in range(m):
            g.emit(f"vle v{vc}, {c + (i * n + off) * esz:#x}")
            for kk in range(k):
                g.emit(f"vle v{vb}, {b + (kk * n + off) * esz:#x}")
                g.emit(f"vmacc v{vc}, {a_vals[i][kk]}, v{vb}")
            g.emit(f"vse v{vc}, {c + (i * n + off) * esz:#x}")


def _gen_transpose(g: _Gen, rows: int, cols: int) -> None:
    # out[c,r] = in[r,c]; strided stores walk the output column
    esz = g.vtype.esz
    src = g.region("src", rows * cols * esz)
    dst = g.region("dst", rows * cols * esz)
    g.fill_random(src, rows * cols * esz)
    g.meta.update(rows=rows, cols=cols)
    for i in range(rows):
        for off, vl in g.chunks(cols):
            g.set_vl(cols - off)
            g.emit(f"vle v0, {src + (i * cols + off) * esz:#x}")
            g.emit(f"vsse v0, {dst + (off * rows + i) * esz:#x}, {rows * esz}")


def _gen_gather(g: _Gen, n: int) -> None:
    esz = g.vtype.esz
    sew = g.vtype.sew
    table_elems = min(max(n, 64), (1 << sew) // esz)
    table = g.region("table", table_elems * esz)
    idx = g.region("idx", n * esz)
    out = g.region("out", n * esz)
    g.fill_random(table, table_elems * esz)
    offsets = [g.rng.randrange(table_elems) * esz for _ in range(n)]
    g.data.write(idx, b"".join(off.to_bytes(esz, "little") for off in offsets))
    g.meta.update(n=n, offsets=offsets)
    for off, vl in g.chunks(n):
        g.set_vl(n - off)
        g.emit(f"vle v0, {idx + off * esz:#x}")
        g.emit(f"vlxe v8, {table:#x}, v0")
        g.emit(f"vse v8, {out + off * esz:#x}")


def _gen_stream_load(g: _Gen, n: int) -> None:
    esz = g.vtype.esz
    src = g.region("src", n * esz)
    g.fill_random(src, n * esz)
    g.meta["n"] = n
    dests = (0, 8, 16, 24)
    for i, (off, vl) in enumerate(g.chunks(n)):
        g.set_vl(n - off)
        g.emit(f"vle v{dests[i % 4]}, {src + off * esz:#x}")


def gen_kernel(name: str, size, vtype: VType, machine: SimConfig, seed: int = 0) -> Program:
    """Generate a named kernel as a concrete, stripmined program.

    size is an int or an "MxN"/"MxNxK" string as the kernel's shape needs.
    Data regions are seeded deterministically from `seed`.
    """
    dims = parse_size(size)
    g = _Gen(vtype, machine, seed)
    if name == "axpy":
        _gen_axpy(g, *dims)
    elif name == "memcpy":
        _gen_memcpy(g, *dims)
    elif name == "gemm_tile":
        if len(dims) == 1:
            dims = (dims[0],) * 3
        _gen_gemm_tile(g, *dims)
    elif name == "transpose":
        if len(dims) == 1:
            dims = (dims[0],) * 2
        _gen_transpose(g, *dims)
    elif name == "gather":
        _gen_gather(g, *dims)
    elif name == "stream_load":
        _gen_stream_load(g, *dims)
    else:
        raise ProgramError(f"unknown kernel {name!r}; have {', '.join(KERNEL_NAMES)}")
    return g.finish(name)
