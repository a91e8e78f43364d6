import random

from hypothesis import given, settings
from hypothesis import strategies as st

from shortvec.config import SimConfig
from shortvec.isa import Opcode, VType, VectorInstruction, element_groups_of
from shortvec.program import parse, resolve
from shortvec.scoreboard import (
    AgeAllocator,
    EntryKind,
    WindowEntry,
    coarse_from_inst,
    compose_older,
    hazard,
    ids_from_mask,
    mask_from_ids,
    operand_mask,
    parse_bits,
    render_bits,
    render_entry,
)

TABLE2_PROGRAM = """\
vsetvli 8, e32, m2
vadd v0, v0, v2
vle v2, 0x1000
vadd v0, v0, v2
vle v2, 0x1000
vadd v0, v0, v2
"""


def table2_machine():
    return SimConfig(vlen=128, dlen=64, num_arch_regs=4, mem_base_latency=3)


def table2_insts():
    return [i for i in resolve(parse(TABLE2_PROGRAM), table2_machine())
            if i.opcode is not Opcode.VSETVLI]


# ---------------------------------------------------------------- rendering

def test_render_bits_msb_first():
    assert render_bits(0b00001100, 8) == "8'b00001100"
    assert render_bits(0, 8) == "8'b00000000"
    assert render_bits(0b11110000, 8) == "8'b11110000"
    assert parse_bits("8'b00001100") == 0b00001100


def test_mask_set_round_trip():
    ids = frozenset({0, 3, 17})
    assert ids_from_mask(mask_from_ids(ids)) == ids


# ------------------------------------------------------------ coarse masks

def test_coarse_table2_rows():
    machine = table2_machine()
    insts = table2_insts()
    vadd_prsb, vadd_pwsb = coarse_from_inst(insts[0], machine)
    assert render_bits(vadd_prsb, 8) == "8'b11111111"
    assert render_bits(vadd_pwsb, 8) == "8'b00001111"
    vle_prsb, vle_pwsb = coarse_from_inst(insts[1], machine)
    assert render_bits(vle_prsb, 8) == "8'b00000000"
    assert render_bits(vle_pwsb, 8) == "8'b11110000"


def test_store_claims_reads_only():
    machine = SimConfig(vlen=256, dlen=128)
    inst = VectorInstruction(opcode=Opcode.VSE, vtype=VType(sew=32, lmul=2, vl=16),
                             vd=4, scalar_base=0x1000)
    prsb, pwsb = coarse_from_inst(inst, machine)
    assert pwsb == 0
    assert ids_from_mask(prsb) == element_groups_of(inst, "vd", machine)


def test_indexed_load_claims_no_backend_reads():
    machine = SimConfig(vlen=256, dlen=128)
    inst = VectorInstruction(opcode=Opcode.VLXE, vtype=VType(sew=32, lmul=1, vl=4),
                             vd=8, vs2=2, scalar_base=0x1000)
    prsb, pwsb = coarse_from_inst(inst, machine)
    assert prsb == 0
    assert ids_from_mask(pwsb) == element_groups_of(inst, "vd", machine)


@given(
    op=st.sampled_from([Opcode.VADD, Opcode.VMACC, Opcode.VLE, Opcode.VSE, Opcode.VLSEG]),
    vd=st.integers(min_value=0, max_value=3),
    vs1=st.integers(min_value=0, max_value=7),
    vs2=st.integers(min_value=0, max_value=7),
    vl=st.integers(min_value=0, max_value=16),
)
@settings(max_examples=300)
def test_operand_mask_agrees_with_element_groups(op, vd, vs1, vs2, vl):
    machine = SimConfig(vlen=256, dlen=64)
    vt = VType(sew=32, lmul=2, vl=min(vl, 16))
    kw = {}
    if op in (Opcode.VADD, Opcode.VMACC):
        kw = dict(vd=vd * 2, vs1=vs1, vs2=vs2)
    elif op is Opcode.VLSEG:
        kw = dict(vd=vd * 2, scalar_base=0, nf=2)
    else:
        kw = dict(vd=vd * 2, scalar_base=0)
    inst = VectorInstruction(opcode=op, vtype=vt, **kw)
    for operand in ("vd", "vs1", "vs2"):
        assert ids_from_mask(operand_mask(inst, operand, machine)) == \
            element_groups_of(inst, operand, machine)


# -------------------------------------------------------------- compose/OR

def _entry(age, prsb, pwsb, kind=EntryKind.COARSE):
    return WindowEntry(age=age, prsb=prsb, pwsb=pwsb, kind=kind)


def test_compose_older_table2():
    # I0 mid-flight pwsb and I1 pwsb OR to 11101100 as seen by I2
    window = [
        _entry(0, 0, parse_bits("8'b00001100")),
        _entry(1, 0, parse_bits("8'b11100000")),
        _entry(2, parse_bits("8'b11111111"), parse_bits("8'b00001111")),
    ]
    prsb, pwsb = compose_older(window, me=2)
    assert render_bits(pwsb, 8) == "8'b11101100"
    assert prsb == 0


def test_compose_older_includes_reads():
    window = [
        _entry(2, parse_bits("8'b11111111"), parse_bits("8'b00001111")),
        _entry(4, parse_bits("8'b11111111"), parse_bits("8'b00001111")),
    ]
    prsb, _ = compose_older(window, me=4)
    assert render_bits(prsb, 8) == "8'b11111111"


def test_compose_excludes_self_and_younger():
    window = [_entry(5, 0b1, 0b10), _entry(6, 0b100, 0b1000)]
    assert compose_older(window, me=5) == (0, 0)


def test_fu_inflight_composes_regardless_of_age():
    window = [_entry(9, 0, 0b100, EntryKind.FU_INFLIGHT)]
    _, pwsb = compose_older(window, me=3)
    assert pwsb == 0b100


@given(st.data())
@settings(max_examples=200)
def test_compose_older_is_or_of_older(data):
    n = data.draw(st.integers(min_value=0, max_value=8))
    window = []
    for age in range(n):
        window.append(_entry(
            age,
            data.draw(st.integers(min_value=0, max_value=255)),
            data.draw(st.integers(min_value=0, max_value=255)),
        ))
    me = data.draw(st.integers(min_value=0, max_value=8))
    prsb, pwsb = compose_older(window, me)
    want_prsb = 0
    want_pwsb = 0
    for e in window:
        if e.age < me:
            want_prsb |= e.prsb
            want_pwsb |= e.pwsb
    assert (prsb, pwsb) == (want_prsb, want_pwsb)


# ----------------------------------------------------------------- hazards

def test_hazard_verdicts():
    assert hazard({0}, set(), mask_from_ids(set()), mask_from_ids({0})) == "raw"
    assert hazard(set(), {5}, mask_from_ids({5}), 0) == "war"
    assert hazard(set(), {3}, 0, mask_from_ids({3})) == "waw"
    assert hazard({1}, {2}, 0, 0) == "clear"


def test_hazard_priority_raw_over_waw_over_war():
    # same group both read and written, older has it pending both ways
    assert hazard({0}, {0}, mask_from_ids({0}), mask_from_ids({0})) == "raw"
    assert hazard(set(), {0}, mask_from_ids({0}), mask_from_ids({0})) == "waw"


def test_table2_chaining_check_is_clear():
    # I2's first micro-op reads {eg0, eg4}, writes {eg0}; older pending
    # writes are I0's remaining {2,3} and I1's remaining {5,6,7}
    older_pwsb = parse_bits("8'b11101100")
    assert hazard({0, 4}, {0}, 0, older_pwsb) == "clear"


@given(
    reads=st.integers(min_value=0, max_value=255),
    writes=st.integers(min_value=0, max_value=255),
    older_prsb=st.integers(min_value=0, max_value=255),
    older_pwsb=st.integers(min_value=0, max_value=255),
)
def test_hazard_clear_iff_no_overlap(reads, writes, older_prsb, older_pwsb):
    verdict = hazard(reads, writes, older_prsb, older_pwsb)
    overlap = (reads & older_pwsb) | (writes & older_pwsb) | (writes & older_prsb)
    assert (verdict == "clear") == (overlap == 0)


# ---------------------------------------------------------------- age tags

def test_age_allocator_monotone_and_freed():
    ages = AgeAllocator()
    a = ages.alloc()
    b = ages.alloc()
    assert b > a
    assert ages.live == {a, b}
    ages.free(a)
    assert ages.live == {b}
    c = ages.alloc()
    assert c > b  # freed tags are never reused


# ---------------------------------------------- brute-force window agreement

@given(seed=st.integers(min_value=0, max_value=100_000))
@settings(max_examples=150)
def test_window_or_matches_bruteforce_dependency_scan(seed):
    """The fan-in-reduced hazard check must agree with checking the
    micro-op against every older entry one at a time."""
    rng = random.Random(seed)
    window = [
        _entry(age, rng.getrandbits(8), rng.getrandbits(8))
        for age in range(rng.randrange(1, 10))
    ]
    me = rng.randrange(0, 10)
    reads = rng.getrandbits(8)
    writes = rng.getrandbits(8)
    prsb, pwsb = compose_older(window, me)
    fast = hazard(reads, writes, prsb, pwsb)
    slow = "clear"
    order = {"clear": 0, "war": 1, "waw": 2, "raw": 3}
    for e in window:
        if e.age >= me:
            continue
        v = hazard(reads, writes, e.prsb, e.pwsb)
        if order[v] > order[slow]:
            slow = v
    assert fast == slow


def test_render_entry_format():
    line = render_entry("vadd.2 v0, v0, v2", 0, 0, parse_bits("8'b00001100"), 8)
    assert line == "vadd.2 v0, v0, v2, 0, PRSb=8'b00000000, PWSb=8'b00001100"
