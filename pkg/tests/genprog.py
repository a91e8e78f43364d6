"""Randomized hazard-dense programs for differential testing.

Shared by the engine tests and the acceptance gate. Programs are built
instruction-object first (no text round trip) the same way the parser
would: provisional vtype on every instruction, seq_ids in dispatch
order, resolve() doing the final clamp and validation.

Every generated program is fault-free by construction: bases, strides
and index values are element-aligned and confined to a data window, so
any timing-model divergence shows up as a state mismatch, not a trap.
"""

import random

from shortvec.config import SimConfig
from shortvec.isa import Opcode, VType, VectorInstruction, vlmax
from shortvec.memimg import ByteMap
from shortvec.program import Program

DATA_BASE = 0x2000
DATA_SPAN = 0x1000
IDX_BASE = 0x8000            # index vectors live here and are never stored to

_ANCHORS = (0x000, 0x100, 0x200, 0x300)

_SMALL = SimConfig(vlen=128, dlen=64, num_arch_regs=8, vrf_banks=2,
                   mem_banks=2, mem_base_latency=2)

# Twelve machine shapes: both feature toggles in all four combinations,
# degenerate queue depths, port starvation, chime lengths 1 to 4, and a
# congested memory system. All small enough to fuzz by the thousand.
FUZZ_CONFIGS = (
    _SMALL,
    _SMALL.replace(dae=False),
    _SMALL.replace(ooo=False),
    _SMALL.replace(dae=False, ooo=False),
    _SMALL.replace(iq_depth=0),
    _SMALL.replace(no_bypass=True, iq_depth=1),
    _SMALL.replace(dispatch_q_depth=0, dispatch_ipc=2),
    SimConfig(vlen=256, dlen=64, num_arch_regs=8, num_arith_seqs=1,
              vrf_banks=2, mem_banks=2),
    SimConfig(vlen=128, dlen=128, num_arch_regs=8, dedicated_load_wport=True,
              bank_queue_depth=2),
    _SMALL.replace(vrf_banks=1),
    _SMALL.replace(fu_add=1, fu_mul=5, fu_mac=4, fu_fma=6,
                   inflight_loads=2, inflight_stores=2,
                   load_dq_depth=1, store_dq_depth=1, bank_queue_depth=1),
    _SMALL.replace(rw_turnaround=True, mem_base_latency=7, inject_latency=5,
                   num_arith_seqs=3, iq_depth=2),
)

_LENGTHS = (3, 5, 8, 12, 16, 24, 32, 48, 64)
_LENGTH_WEIGHTS = (15, 20, 20, 15, 12, 8, 5, 3, 2)

_ARITH = (Opcode.VADD, Opcode.VMUL, Opcode.VMACC, Opcode.VFMA_OPAQUE)


class _Builder:
    def __init__(self, seed: int, machine: SimConfig, hot_regs: int):
        self.rng = random.Random(seed)
        self.machine = machine
        self.hot = min(hot_regs, machine.num_arch_regs)
        self.img = ByteMap()
        self.img.write(DATA_BASE, self.rng.randbytes(DATA_SPAN))
        self.insts: list[VectorInstruction] = []
        self.seq = 0
        self.idx_cursor = IDX_BASE
        self.vtype: VType | None = None
        self.vl = 0

    def pick_reg(self, exclude: int | None = None) -> int:
        lmul = self.vtype.lmul
        bases = [r for r in range(0, self.hot, lmul) if r != exclude]
        return self.rng.choice(bases)

    def emit(self, inst: VectorInstruction) -> None:
        self.insts.append(inst.with_seq_id(self.seq))
        self.seq += 1

    def set_vtype(self) -> None:
        rng = self.rng
        sew = rng.choice((8, 16, 32, 64))
        lmul = rng.choice((1, 1, 2, 2, 4))
        if lmul >= self.hot:
            lmul = self.hot // 2
        limit = vlmax(VType(sew=sew, lmul=lmul, vl=0), self.machine)
        roll = rng.random()
        if roll < 0.05:
            avl = 0
        elif roll < 0.15:
            avl = rng.randint(limit, 2 * limit)   # clamps to VLMAX
        else:
            avl = rng.randint(1, limit)
        self.vtype = VType(sew=sew, lmul=lmul, vl=avl)
        self.vl = min(avl, limit)
        self.insts.append(VectorInstruction(opcode=Opcode.VSETVLI,
                                            vtype=self.vtype, imm=avl))

    def base_for(self, lo: int, hi: int) -> int:
        """Pick an element-aligned base so [base+lo, base+hi) stays in
        the data window, biased toward a few anchors for overlap."""
        esz = self.vtype.esz
        span_lo = DATA_BASE - lo
        span_hi = DATA_BASE + DATA_SPAN - hi
        raw = DATA_BASE + self.rng.choice(_ANCHORS) + self.rng.randint(-0x40, 0x40)
        raw = max(span_lo, min(raw, span_hi))
        return raw - raw % esz

    def arith(self) -> None:
        rng = self.rng
        op = rng.choice(_ARITH)
        vd = self.pick_reg()
        vs2 = self.pick_reg()
        if rng.random() < 0.25:
            self.emit(VectorInstruction(opcode=op, vtype=self.vtype, vd=vd,
                                        vs2=vs2, imm=rng.randint(-128, 127)))
        else:
            self.emit(VectorInstruction(opcode=op, vtype=self.vtype, vd=vd,
                                        vs2=vs2, vs1=self.pick_reg()))

    def unit(self, store: bool) -> None:
        esz = self.vtype.esz
        base = self.base_for(0, max(self.vl * esz, esz))
        op = Opcode.VSE if store else Opcode.VLE
        self.emit(VectorInstruction(opcode=op, vtype=self.vtype,
                                    vd=self.pick_reg(), scalar_base=base))

    def strided(self, store: bool) -> None:
        esz = self.vtype.esz
        stride = esz * self.rng.choice((-2, -1, 0, 1, 2, 3))
        last = max(self.vl - 1, 0) * stride
        lo, hi = min(0, last), max(0, last) + esz
        op = Opcode.VSSE if store else Opcode.VLSE
        self.emit(VectorInstruction(opcode=op, vtype=self.vtype,
                                    vd=self.pick_reg(), stride=stride,
                                    scalar_base=self.base_for(lo, hi)))

    def indexed(self, store: bool) -> None:
        if self.budget - len(self.insts) < 2:
            return self.unit(store)
        rng = self.rng
        esz = self.vtype.esz
        vd = self.pick_reg()
        vidx = self.pick_reg(exclude=vd if not store else None)
        n = max(self.vl, 1)
        offs = [rng.randrange(0, DATA_SPAN - esz + 1, esz) for _ in range(n)]
        # cap at SEW reach for narrow elements; multiples of esz survive
        limit = 1 << min(esz * 8, 16)
        offs = [o % min(DATA_SPAN - esz + 1, limit) for o in offs]
        offs = [o - o % esz for o in offs]
        addr = self.idx_cursor
        for i, off in enumerate(offs):
            self.img.write(addr + i * esz, off.to_bytes(esz, "little"))
        self.idx_cursor += (n * esz + 7) // 8 * 8
        self.emit(VectorInstruction(opcode=Opcode.VLE, vtype=self.vtype,
                                    vd=vidx, scalar_base=addr))
        op = Opcode.VSXE if store else Opcode.VLXE
        self.emit(VectorInstruction(opcode=op, vtype=self.vtype, vd=vd,
                                    vs2=vidx, scalar_base=DATA_BASE))

    def segment(self, store: bool) -> None:
        lmul = self.vtype.lmul
        max_nf = self.hot // lmul - 1
        if max_nf < 2:
            return self.unit(store)
        nf = self.rng.randint(2, min(4, max_nf))
        vd = self.rng.randrange(0, (self.hot // lmul - nf) * lmul + 1, lmul)
        esz = self.vtype.esz
        extent = max(self.vl * nf * esz, esz)
        op = Opcode.VSSEG if store else Opcode.VLSEG
        self.emit(VectorInstruction(opcode=op, vtype=self.vtype, vd=vd, nf=nf,
                                    scalar_base=self.base_for(0, extent)))

    def build(self, n_insts: int, name: str) -> Program:
        rng = self.rng
        self.budget = n_insts
        self.set_vtype()
        while len(self.insts) < n_insts:
            roll = rng.random()
            if roll < 0.40:
                self.arith()
            elif roll < 0.52:
                self.unit(store=False)
            elif roll < 0.64:
                self.unit(store=True)
            elif roll < 0.72:
                self.strided(store=rng.random() < 0.5)
            elif roll < 0.80:
                self.indexed(store=rng.random() < 0.5)
            elif roll < 0.88:
                self.segment(store=rng.random() < 0.5)
            else:
                self.set_vtype()
        return Program(insts=self.insts, data=self.img, name=name)


def gen_program(seed: int, machine: SimConfig, hot_regs: int = 8,
                n_insts: int | None = None) -> Program:
    rng = random.Random(seed ^ 0x5EED)
    if n_insts is None:
        n_insts = rng.choices(_LENGTHS, weights=_LENGTH_WEIGHTS, k=1)[0]
    return _Builder(seed, machine, hot_regs).build(n_insts, f"fuzz-{seed}")
