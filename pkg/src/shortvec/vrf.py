"""Banked vector register file with per-cycle port accounting.

Storage is one row per element group, striped across banks by low group
bits (bank = group % vrf_banks). Each bank has a fixed number of read
ports and write ports per cycle.

Read grants are all-or-nothing: a micro-op either gets ports for every
source row it names or issues nothing this cycle. The engine asks in
age order, oldest first, so an older op is never starved by a younger
one. Write ports are booked at issue time for the cycle the result will
come back; a load that loses the port race simply asks again next cycle
(its data sits in the fill buffer meanwhile). With dedicated_load_wport
set, loads get their own port per bank and never race arithmetic.

Writes staged during a cycle become visible to reads in the next cycle;
reads always observe the committed state at the start of the cycle.
Index fetches by the frontend use a scalar-width sideband path and are
not counted against the vector ports.
"""

from __future__ import annotations

from collections import Counter

from .config import SimConfig


class RegisterFile:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.row_bytes = cfg.dlen // 8
        self.rows = [bytearray(self.row_bytes) for _ in range(cfg.total_egs)]
        self._reads_used: Counter[int] = Counter()
        self._write_res: dict[int, Counter] = {}
        self._write_res_load: dict[int, Counter] = {}
        self._staged: list[tuple[int, bytes, bytes | None]] = []

    def bank_of(self, eg: int) -> int:
        return eg % self.cfg.vrf_banks

    # -- committed-state access ------------------------------------------

    def read_row(self, eg: int) -> bytes:
        return bytes(self.rows[eg])

    def read_reg_bytes(self, reg: int, offset: int, nbytes: int) -> bytes:
        """Committed bytes [offset, offset+nbytes) of one architectural register."""
        epr = self.cfg.egs_per_reg
        out = bytearray()
        pos = offset
        while nbytes > 0:
            row = reg * epr + pos // self.row_bytes
            at = pos % self.row_bytes
            take = min(nbytes, self.row_bytes - at)
            out += self.rows[row][at:at + take]
            pos += take
            nbytes -= take
        return bytes(out)

    def get_reg(self, reg: int) -> bytes:
        epr = self.cfg.egs_per_reg
        return b"".join(bytes(self.rows[reg * epr + g]) for g in range(epr))

    def set_reg(self, reg: int, data: bytes) -> None:
        if len(data) != self.cfg.vlen // 8:
            raise ValueError("register image has wrong length")
        epr = self.cfg.egs_per_reg
        for g in range(epr):
            lo = g * self.row_bytes
            self.rows[reg * epr + g][:] = data[lo:lo + self.row_bytes]

    # -- per-cycle port protocol -----------------------------------------

    def begin_cycle(self, now: int) -> None:
        self._reads_used.clear()
        for table in (self._write_res, self._write_res_load):
            for cyc in [c for c in table if c < now]:
                del table[cyc]

    def try_reads(self, egs) -> bool:
        """Claim read ports for every row in egs, or none of them."""
        need = Counter(self.bank_of(eg) for eg in set(egs))
        limit = self.cfg.read_ports_per_bank
        if any(self._reads_used[b] + n > limit for b, n in need.items()):
            return False
        self._reads_used.update(need)
        return True

    def try_reserve_write(self, eg: int, wb_cycle: int, is_load: bool = False) -> bool:
        """Book a write port on eg's bank for the given cycle."""
        if is_load and self.cfg.dedicated_load_wport:
            table, limit = self._write_res_load, 1
        else:
            table, limit = self._write_res, self.cfg.write_ports_per_bank
        used = table.setdefault(wb_cycle, Counter())
        bank = self.bank_of(eg)
        if used[bank] >= limit:
            return False
        used[bank] += 1
        return True

    def release_write(self, eg: int, wb_cycle: int, is_load: bool = False) -> None:
        """Undo a reservation when the rest of the issue fell through."""
        table = self._write_res_load if is_load and self.cfg.dedicated_load_wport else self._write_res
        table[wb_cycle][self.bank_of(eg)] -= 1

    # -- write staging -----------------------------------------------------

    def stage_write(self, eg: int, data: bytes, mask: bytes | None = None) -> None:
        """Queue a row write to commit at the end of this cycle.

        mask, when given, is one byte per row byte; zero bytes leave the
        old value in place (tail-undisturbed and partial fills).
        """
        if len(data) != self.row_bytes:
            raise ValueError("row write has wrong length")
        self._staged.append((eg, bytes(data), None if mask is None else bytes(mask)))

    def apply_staged(self) -> list[int]:
        """Commit staged writes; returns the written group ids."""
        touched = [eg for eg, _, _ in self._staged]
        if len(set(touched)) != len(touched):
            raise AssertionError(f"two same-cycle writes to one group: {touched}")
        for eg, data, mask in self._staged:
            row = self.rows[eg]
            if mask is None:
                row[:] = data
            else:
                for i, m in enumerate(mask):
                    if m:
                        row[i] = data[i]
        self._staged.clear()
        return touched
