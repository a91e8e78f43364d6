"""Pre-commit frontend: address checks, page cracking, precise traps.

Memory instructions are committed to the backend only together with
known-good physical address work, so the backend never has to roll back:

* unit-stride accesses take the pipelined route: the whole byte range is
  computed up front, split at page boundaries, and each single-page
  piece costs one TLB-port cycle, so the common single-page case
  dispatches without stalling anything;
* strided and indexed accesses take the iterative route: one element per
  cycle plus one TLB-port cycle per distinct page touched, blocking
  younger instructions while it runs. Index values are fetched from the
  backend register file and wait for any pending writes to the group
  they live in.

A page fault is raised before the faulting piece or element dispatches.
Pieces already dispatched stay dispatched (their effects are the
pre-trap state); nothing younger ever enters the backend. A strided
store with stride equal to the element size is recognized as unit-stride
and takes the pipelined route.

vsetvli is resolved entirely up here and costs no backend cycle at all.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import SimConfig
from .isa import INDEXED_OPS, SEGMENT_OPS, STRIDED_OPS, Opcode, VectorInstruction
from .oracle import Trap


@dataclass(frozen=True, slots=True)
class DispatchOp:
    """One committed piece of a memory access, bound for the LSU.

    Elements are numbered in the instruction's memory-stream order
    (record-major for segmented ops). A pipelined piece covers a
    contiguous [addr, addr+nbytes) range holding elements
    [elem0, elem0+nelems); an iterative piece is a single element.
    """

    inst: VectorInstruction
    elem0: int
    nelems: int
    addr: int
    nbytes: int


def mem_elem_count(inst: VectorInstruction) -> int:
    """Elements in the instruction's memory stream (fields count separately)."""
    if inst.opcode in SEGMENT_OPS:
        return inst.vtype.vl * inst.nf
    return inst.vtype.vl


def mem_elem_size(inst: VectorInstruction) -> int:
    return inst.vtype.esz


def is_unit_route(inst: VectorInstruction) -> bool:
    op = inst.opcode
    if op in (Opcode.VLE, Opcode.VSE) or op in SEGMENT_OPS:
        return True
    if op in STRIDED_OPS and inst.stride == inst.vtype.esz:
        return True
    return False


def element_addrs(inst: VectorInstruction, indices: list[int] | None = None) -> list[int]:
    """Memory-stream element addresses in stream order."""
    esz = inst.vtype.esz
    base = inst.scalar_base
    op = inst.opcode
    if op in (Opcode.VLE, Opcode.VSE):
        return [base + i * esz for i in range(inst.vtype.vl)]
    if op in SEGMENT_OPS:
        return [base + k * esz for k in range(inst.vtype.vl * inst.nf)]
    if op in STRIDED_OPS:
        return [base + i * inst.stride for i in range(inst.vtype.vl)]
    if op in INDEXED_OPS:
        if indices is None:
            raise ValueError("indexed access needs index values")
        out = []
        for i, off in enumerate(indices[:inst.vtype.vl]):
            addr = base + off
            if addr % esz != 0:
                raise ValueError(f"indexed element {i} address {addr:#x} "
                                 f"not {esz}-byte aligned")
            out.append(addr)
        return out
    raise ValueError(f"not a memory opcode: {op}")


def bound_of(inst: VectorInstruction, indices: list[int] | None = None) -> tuple[int, int]:
    """Half-open byte range [lo, hi) the access can touch."""
    if inst.vtype.vl == 0:
        return inst.scalar_base, inst.scalar_base
    addrs = element_addrs(inst, indices)
    esz = inst.vtype.esz
    return min(addrs), max(addrs) + esz


def crack_pages(inst: VectorInstruction, machine: SimConfig) -> list[DispatchOp]:
    """Split a unit-route access into single-page DispatchOps."""
    total = mem_elem_count(inst)
    if total == 0:
        return [DispatchOp(inst=inst, elem0=0, nelems=0,
                           addr=inst.scalar_base, nbytes=0)]
    esz = inst.vtype.esz
    lo, hi = bound_of(inst)
    page = machine.page_bytes
    ops = []
    cursor = lo
    while cursor < hi:
        edge = min((cursor // page + 1) * page, hi)
        e0 = (cursor - lo) // esz
        e1 = (edge - lo) // esz
        ops.append(DispatchOp(inst=inst, elem0=e0, nelems=e1 - e0,
                              addr=cursor, nbytes=edge - cursor))
        cursor = edge
    return ops


@dataclass
class StepResult:
    backend_inst: VectorInstruction | None = None
    lsu_op: DispatchOp | None = None
    trap: Trap | None = None
    trap_done_elems: int = 0  # elements dispatched before the trap
    stall: str | None = None  # dispatch_full | index_wait | tlb | None
    setvl: VectorInstruction | None = None


class _UnitPlan:
    __slots__ = ("inst", "ops", "idx", "backend_sent")

    def __init__(self, inst, machine):
        self.inst = inst
        self.ops = crack_pages(inst, machine)
        self.idx = 0
        self.backend_sent = False


class _IterPlan:
    __slots__ = ("inst", "idx", "pages_checked", "backend_sent", "indices")

    def __init__(self, inst):
        self.inst = inst
        self.idx = 0
        self.pages_checked: set[int] = set()
        self.backend_sent = False
        self.indices: list[int] | None = None  # indexed ops: filled lazily


class Frontend:
    """Walks the resolved instruction list, one dispatch slot per cycle."""

    def __init__(self, machine: SimConfig, insts: list[VectorInstruction],
                 fault_pages: frozenset[int] = frozenset()):
        self.machine = machine
        self.insts = insts
        self.fault_pages = fault_pages
        self.pos = 0
        self.plan: _UnitPlan | _IterPlan | None = None
        self.trapped: Trap | None = None

    @property
    def done(self) -> bool:
        return self.trapped is None and self.plan is None and self.pos >= len(self.insts)

    def step(self, ctx) -> StepResult:
        """Advance one cycle. ctx supplies backend/LSU acceptance and
        index-register access:

        can_accept(inst) -> bool, eg_write_pending(eg_id) -> bool,
        read_reg_bytes(reg, offset, nbytes) -> bytes.
        """
        res = StepResult()
        if self.trapped is not None:
            return res

        if self.plan is None:
            # vsetvli costs nothing: fold any run of them into this cycle
            while self.pos < len(self.insts) and self.insts[self.pos].opcode is Opcode.VSETVLI:
                res.setvl = self.insts[self.pos]
                self.pos += 1
            if self.pos >= len(self.insts):
                return res
            inst = self.insts[self.pos]
            if not ctx.can_accept(inst):
                res.stall = "dispatch_full"
                return res
            if not inst.is_mem:
                self.pos += 1
                res.backend_inst = inst
                return res
            if is_unit_route(inst):
                self.plan = _UnitPlan(inst, self.machine)
            else:
                self.plan = _IterPlan(inst)
            self.pos += 1

        if isinstance(self.plan, _UnitPlan):
            return self._step_unit(res)
        return self._step_iterative(res, ctx)

    def _finish_plan(self):
        self.plan = None

    def _raise_trap(self, res: StepResult, elem: int, addr: int, done_elems: int):
        self.trapped = Trap(seq_id=self.plan.inst.seq_id, element=elem, addr=addr)
        res.trap = self.trapped
        res.trap_done_elems = done_elems
        self.plan = None

    def _step_unit(self, res: StepResult) -> StepResult:
        plan = self.plan
        op = plan.ops[plan.idx]
        if op.nbytes > 0:  # vl=0 pieces skip the TLB entirely
            page = op.addr // self.machine.page_bytes
            if page in self.fault_pages:
                self._raise_trap(res, op.elem0, op.addr, done_elems=op.elem0)
                return res
        if not plan.backend_sent:
            res.backend_inst = plan.inst
            plan.backend_sent = True
        res.lsu_op = op
        plan.idx += 1
        if plan.idx == len(plan.ops):
            self._finish_plan()
        return res

    def _step_iterative(self, res: StepResult, ctx) -> StepResult:
        plan = self.plan
        inst = plan.inst
        esz = inst.vtype.esz
        total = mem_elem_count(inst)
        if total == 0:
            if not plan.backend_sent:
                res.backend_inst = inst
            res.lsu_op = DispatchOp(inst=inst, elem0=0, nelems=0,
                                    addr=inst.scalar_base, nbytes=0)
            self._finish_plan()
            return res

        i = plan.idx
        if inst.opcode in INDEXED_OPS:
            if plan.indices is None:
                plan.indices = [None] * total
            if plan.indices[i] is None:
                reg_bytes = self.machine.vlen // 8
                byte_off = i * esz
                eg = inst.vs2 * self.machine.egs_per_reg + (byte_off * 8) // self.machine.dlen
                if ctx.eg_write_pending(eg):
                    res.stall = "index_wait"
                    return res
                reg = inst.vs2 + byte_off // reg_bytes
                raw = ctx.read_reg_bytes(reg, byte_off % reg_bytes, esz)
                plan.indices[i] = int.from_bytes(raw, "little")
            addr = inst.scalar_base + plan.indices[i]
            if addr % esz != 0:
                raise ValueError(f"indexed element {i} address {addr:#x} "
                                 f"not {esz}-byte aligned")
        else:
            addr = inst.scalar_base + i * inst.stride

        page = addr // self.machine.page_bytes
        if page not in plan.pages_checked:
            plan.pages_checked.add(page)
            if page in self.fault_pages:
                self._raise_trap(res, i, addr, done_elems=i)
            else:
                res.stall = "tlb"
            return res

        if not plan.backend_sent:
            res.backend_inst = inst
            plan.backend_sent = True
        res.lsu_op = DispatchOp(inst=inst, elem0=i, nelems=1, addr=addr, nbytes=esz)
        plan.idx += 1
        if plan.idx == total:
            self._finish_plan()
        return res
