"""Decoupled load/store unit.

Memory work runs ahead of (or behind) the execute backend on purpose.
Dispatched accesses land here as address pieces while the backend sees
the same instruction through its issue queue; the two sides meet at the
register file.

Loads: address generation walks the dispatch queue in order, one memory
request per cycle, slicing each piece at line boundaries. Response data
is scattered into per-row fill buffers; a row whose bytes have all
arrived is handed to the load sequencer, which writes it back in
schedule order. A gate keeps the access side from running further ahead
than the backend's queues could ever cover: a new load may not start
address generation while that many loads are already addressed but not
yet consumed. With the decoupling disabled, requests are only issued
for the load currently resident in the load sequencer, one outstanding
beat at a time.

Stores: the store sequencer pushes data rows into a small staging
buffer (nf rows deep, so one full record block fits); address
generation drains complete blocks as line-sized writes, or single
elements for strided and indexed stores.

Ordering between the paths is kept by ranges, not by serializing: a
load request holds while any older store overlapping its bytes has
writes still to issue, and a store drain holds while any older
overlapping load has reads still to issue. Non-overlapping accesses
pass each other freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import SimConfig
from .frontend import DispatchOp, mem_elem_count
from .isa import SEGMENT_OPS, VectorInstruction
from .memsys import Memsys


@dataclass
class _RowBuf:
    data: bytearray
    mask: bytearray
    got: int = 0
    need: int = 0


class _Entry:
    __slots__ = ("inst", "age", "ops", "dispatched", "final_elems", "lo", "hi",
                 "agen_started", "agen_op_idx", "agen_byte_off", "agen_done",
                 "outstanding", "rows", "rows_consumed", "retired",
                 "buffer", "emit_k", "emit_byte")

    def __init__(self, inst: VectorInstruction, age: int):
        self.inst = inst
        self.age = age
        self.ops: list[DispatchOp] = []
        self.dispatched = 0          # stream elements received from the frontend
        self.final_elems: int | None = None
        self.lo = None               # running byte-range envelope
        self.hi = None
        self.agen_started = False
        self.agen_op_idx = 0
        self.agen_byte_off = 0
        self.agen_done = False
        self.outstanding = 0         # load responses not yet merged
        self.rows: dict[tuple[int, int], _RowBuf] = {}
        self.rows_consumed = 0
        self.retired = False
        self.buffer: dict[tuple[int, int], bytes] = {}   # store data rows
        self.emit_k = 0              # next stream element to drain (stores)
        self.emit_byte = 0           # byte cursor within the current block

    @property
    def total_elems(self) -> int:
        if self.final_elems is not None:
            return self.final_elems
        return mem_elem_count(self.inst)

    def overlaps(self, lo: int, hi: int) -> bool:
        return self.lo is not None and lo < self.hi and self.lo < hi


class LSU:
    def __init__(self, cfg: SimConfig, memsys: Memsys):
        self.cfg = cfg
        self.mem = memsys
        self.loads: list[_Entry] = []    # dispatch order, retired pruned
        self.stores: list[_Entry] = []
        self.row_bytes = cfg.dlen // 8
        self.runahead_bound = cfg.load_dq_depth + cfg.iq_depth

    # -- geometry helpers ---------------------------------------------------

    def _nf(self, inst) -> int:
        return inst.nf if inst.opcode in SEGMENT_OPS else 1

    def _slot(self, inst, k: int) -> tuple[int, int, int]:
        """Stream element k -> (field, row, byte offset in row)."""
        nf = self._nf(inst)
        i, f = divmod(k, nf)
        off = i * inst.vtype.esz
        return f, off // self.row_bytes, off % self.row_bytes

    def _row_need(self, entry: _Entry, f: int, r: int) -> int:
        """Bytes of row (f, r) the final element stream will fill."""
        esz = entry.inst.vtype.esz
        nf = self._nf(entry.inst)
        total = entry.total_elems
        need = 0
        rpr = self.row_bytes // esz
        for slot in range(rpr):
            i = r * rpr + slot
            if i * nf + f < total:
                need += esz
        return need

    # -- dispatch side ------------------------------------------------------

    def _pool(self, inst) -> tuple[list[_Entry], int, int]:
        if inst.is_load:
            return self.loads, self.cfg.load_dq_depth, self.cfg.inflight_loads
        return self.stores, self.cfg.store_dq_depth, self.cfg.inflight_stores

    def can_accept(self, inst: VectorInstruction) -> bool:
        pool, dq_depth, inflight = self._pool(inst)
        dq_used = sum(1 for e in pool if not e.agen_done)
        return dq_used < dq_depth and len(pool) < inflight

    def dispatch(self, inst: VectorInstruction, age: int) -> None:
        pool, _, _ = self._pool(inst)
        pool.append(_Entry(inst, age))

    def _entry_of(self, inst) -> _Entry:
        pool = self.loads if inst.is_load else self.stores
        for e in pool:
            if e.inst is inst:
                return e
        raise KeyError(f"no LSU entry for seq_id {inst.seq_id}")

    def push_op(self, op: DispatchOp) -> None:
        e = self._entry_of(op.inst)
        e.ops.append(op)
        e.dispatched += op.nelems
        if op.nbytes > 0:
            if e.lo is None:
                e.lo, e.hi = op.addr, op.addr + op.nbytes
            else:
                e.lo = min(e.lo, op.addr)
                e.hi = max(e.hi, op.addr + op.nbytes)
        if e.dispatched >= mem_elem_count(op.inst):
            self.finalize(op.inst, e.dispatched)

    def finalize(self, inst: VectorInstruction, total_elems: int) -> None:
        e = self._entry_of(inst)
        e.final_elems = total_elems
        if e.inst.is_load:
            self._refresh_ready(e)

    # -- load response merge --------------------------------------------------

    def take_responses(self, now: int) -> None:
        for resp in self.mem.pop_responses("load", now):
            entry, k0, n = resp.meta
            entry.outstanding -= 1
            esz = entry.inst.vtype.esz
            for j in range(n):
                f, r, at = self._slot(entry.inst, k0 + j)
                row = entry.rows.get((f, r))
                if row is None:
                    row = _RowBuf(data=bytearray(self.row_bytes),
                                  mask=bytearray(self.row_bytes))
                    entry.rows[(f, r)] = row
                chunk = resp.data[j * esz:(j + 1) * esz]
                row.data[at:at + esz] = chunk
                for b in range(at, at + esz):
                    row.mask[b] = 1
                row.got += esz
        self.mem.pop_responses("store", now)  # write acks carry nothing

    def _refresh_ready(self, e: _Entry) -> None:
        pass  # readiness is computed on demand in load_row_ready

    def load_row_ready(self, inst: VectorInstruction, f: int, r: int) -> bool:
        e = self._entry_of(inst)
        need = self._row_need(e, f, r)
        if need == 0:
            return e.final_elems is not None
        row = e.rows.get((f, r))
        return row is not None and row.got >= need

    def pop_load_row(self, inst: VectorInstruction, f: int, r: int) -> tuple[bytes, bytes]:
        e = self._entry_of(inst)
        row = e.rows.pop((f, r), None)
        e.rows_consumed += 1
        if row is None:
            return bytes(self.row_bytes), bytes(self.row_bytes)
        return bytes(row.data), bytes(row.mask)

    def retire_load(self, inst: VectorInstruction) -> None:
        e = self._entry_of(inst)
        e.retired = True
        self.loads.remove(e)

    # -- store data side ------------------------------------------------------

    def can_push_data(self, inst: VectorInstruction) -> bool:
        e = self._entry_of(inst)
        return len(e.buffer) < self._nf(inst)

    def push_data(self, inst: VectorInstruction, f: int, r: int, data: bytes) -> None:
        e = self._entry_of(inst)
        e.buffer[(f, r)] = bytes(data)

    def store_drained(self, inst: VectorInstruction) -> bool:
        pool = self.stores
        for e in pool:
            if e.inst is inst:
                return False
        return True

    # -- address generation (one request per path per cycle) -------------------

    def do_agen(self, now: int, dae: bool, resident_load: VectorInstruction | None) -> None:
        self._agen_store(now)
        self._agen_load(now, dae, resident_load)

    def _line_clip(self, addr: int, hi: int) -> int:
        line = self.cfg.line_bytes
        return min(hi, (addr // line + 1) * line)

    def _agen_load(self, now: int, dae: bool, resident_load) -> None:
        e = next((x for x in self.loads if not x.agen_done), None)
        if e is None:
            return
        if not e.agen_started:
            if e.total_elems == 0 and e.final_elems is not None:
                e.agen_started = True
                e.agen_done = True
                return
            runahead = sum(1 for x in self.loads if x.agen_started)
            if dae:
                if runahead >= self.runahead_bound:
                    return
            else:
                if resident_load is not e.inst:
                    return
            if not e.ops:
                return
            e.agen_started = True
        if not dae:
            # coupled mode: addresses only for the instruction the load
            # sequencer is working on, pipelined normally within it
            if resident_load is not e.inst:
                return
        if e.agen_op_idx >= len(e.ops):
            if e.final_elems is not None:
                e.agen_done = True
            return
        op = e.ops[e.agen_op_idx]
        if op.nbytes == 0:
            e.agen_op_idx += 1
            if e.agen_op_idx >= len(e.ops) and e.final_elems is not None:
                e.agen_done = True
            return
        addr = op.addr + e.agen_byte_off
        end = self._line_clip(addr, op.addr + op.nbytes)
        nbytes = end - addr
        for s in self.stores:
            if s.age < e.age and s.overlaps(addr, end):
                return  # older store still draining over these bytes
        esz = op.inst.vtype.esz
        k0 = op.elem0 + e.agen_byte_off // esz
        n = nbytes // esz
        if not self.mem.try_request("load", "read", addr, nbytes, now,
                                    meta=(e, k0, n)):
            return
        e.outstanding += 1
        e.agen_byte_off += nbytes
        if e.agen_byte_off >= op.nbytes:
            e.agen_op_idx += 1
            e.agen_byte_off = 0
            if e.agen_op_idx >= len(e.ops) and e.final_elems is not None:
                e.agen_done = True

    # Store draining works in record blocks: block r is every field's row r,
    # a contiguous span of memory for unit-stride and segmented stores.

    def _store_block_span(self, e: _Entry) -> tuple[int, int] | None:
        """Stream-element range [k0, k1) of the block holding emit_k."""
        total = e.total_elems
        if e.emit_k >= total:
            return None
        esz = e.inst.vtype.esz
        nf = self._nf(e.inst)
        per_block = (self.row_bytes // esz) * nf
        b = e.emit_k // per_block
        return b * per_block, min((b + 1) * per_block, total)

    def _store_bytes_ready(self, e: _Entry, k0: int, k1: int) -> bool:
        if k1 > e.dispatched and e.final_elems is None:
            return False
        for k in range(k0, min(k1, e.dispatched)):
            f, r, _ = self._slot(e.inst, k)
            if (f, r) not in e.buffer:
                return False
        return True

    def _gather_store_bytes(self, e: _Entry, k0: int, k1: int) -> bytes:
        esz = e.inst.vtype.esz
        out = bytearray()
        for k in range(k0, k1):
            f, r, at = self._slot(e.inst, k)
            out += e.buffer[(f, r)][at:at + esz]
        return bytes(out)

    def _free_block_rows(self, e: _Entry, k0: int, k1: int) -> None:
        for k in range(k0, k1):
            f, r, _ = self._slot(e.inst, k)
            e.buffer.pop((f, r), None)

    def _agen_store(self, now: int) -> None:
        e = next((x for x in self.stores if not x.agen_done), None)
        if e is None:
            return
        total = e.total_elems
        if e.final_elems is not None and total == 0:
            e.agen_done = True
            self.stores.remove(e)
            return
        if e.inst.opcode.mnemonic in ("vse", "vsseg") or \
                (e.inst.stride is not None and e.inst.stride == e.inst.vtype.esz):
            self._drain_unit(e, now)
        else:
            self._drain_elementwise(e, now)

    def _drain_unit(self, e: _Entry, now: int) -> None:
        span = self._store_block_span(e)
        if span is None:
            if e.final_elems is not None:
                e.agen_done = True
                self.stores.remove(e)
            return
        k0, k1 = span
        if not self._store_bytes_ready(e, k0, k1):
            return
        k1 = min(k1, e.total_elems)
        esz = e.inst.vtype.esz
        base = e.inst.scalar_base
        addr = base + k0 * esz + e.emit_byte
        span_end = base + k1 * esz
        end = self._line_clip(addr, span_end)
        if self._load_blocks_store(e, addr, end):
            return
        data = self._gather_store_bytes(e, k0, k1)
        off = addr - (base + k0 * esz)
        if not self.mem.try_request("store", "write", addr, end - addr, now,
                                    data=data[off:off + (end - addr)],
                                    meta=(e, 0, 0)):
            return
        e.emit_byte = end - (base + k0 * esz)
        if addr + (end - addr) >= span_end:
            self._free_block_rows(e, k0, k1)
            e.emit_k = k1
            e.emit_byte = 0
            if e.emit_k >= e.total_elems and e.final_elems is not None:
                e.agen_done = True
                self.stores.remove(e)

    def _drain_elementwise(self, e: _Entry, now: int) -> None:
        k = e.emit_k
        if k >= e.total_elems:
            if e.final_elems is not None:
                e.agen_done = True
                self.stores.remove(e)
            return
        if k >= len(e.ops):
            return  # address piece not dispatched yet
        op = e.ops[k]
        f, r, at = self._slot(e.inst, k)
        if (f, r) not in e.buffer:
            return
        esz = e.inst.vtype.esz
        if self._load_blocks_store(e, op.addr, op.addr + esz):
            return
        data = e.buffer[(f, r)][at:at + esz]
        if not self.mem.try_request("store", "write", op.addr, esz, now,
                                    data=data, meta=(e, 0, 0)):
            return
        e.emit_k += 1
        rpr = self.row_bytes // esz
        if (k + 1) % rpr == 0 or k + 1 >= e.total_elems:
            e.buffer.pop((f, r), None)
        if e.emit_k >= e.total_elems and e.final_elems is not None:
            e.agen_done = True
            self.stores.remove(e)

    def _load_blocks_store(self, store: _Entry, lo: int, hi: int) -> bool:
        for l in self.loads:
            if l.age < store.age and not l.agen_done and l.overlaps(lo, hi):
                return True
        return False

    # -- global state -----------------------------------------------------------

    @property
    def busy(self) -> bool:
        return bool(self.loads or self.stores)

    def load_runahead_count(self) -> int:
        return sum(1 for x in self.loads if x.agen_started)
