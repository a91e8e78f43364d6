"""Banked memory behind the load/store unit.

Lines of DLEN/8 bytes interleave across banks. Each bank services its
FIFO at a fixed byte rate sized so the aggregate bandwidth is one line
per cycle, and every request completes a fixed base latency after its
service slot starts. An optional injection delay adds pipeline distance
between the LSU and the banks without consuming queue space, which is
how latency-tolerance experiments dial up the round trip.

Requests never cross a line. Writes take effect in acceptance order and
reads sample the backing store in that same order, which matches service
order because same-line requests always meet in one bank's FIFO. Each
requester path gets its responses strictly in request order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any

from .config import SimConfig
from .memimg import ByteMap


@dataclass(slots=True)
class MemResponse:
    tag: int
    kind: str  # read|write
    addr: int
    data: bytes | None
    meta: Any


@dataclass(slots=True)
class _Pending:
    completion: int
    resp: MemResponse


class Memsys:
    def __init__(self, cfg: SimConfig, backing: ByteMap):
        self.cfg = cfg
        self.backing = backing
        self._bank_next_free = [0] * cfg.mem_banks
        self._bank_last_kind = [""] * cfg.mem_banks
        self._bank_inflight: list[deque[int]] = [deque() for _ in range(cfg.mem_banks)]
        self._path_pending: dict[str, deque[_Pending]] = {}
        self._next_tag: dict[str, int] = {}
        self._outstanding = 0
        self.accepts = 0          # requests taken, for busy accounting
        self.bytes_accepted = 0

    def bank_of(self, addr: int) -> int:
        return (addr // self.cfg.line_bytes) % self.cfg.mem_banks

    def try_request(self, path: str, kind: str, addr: int, nbytes: int, now: int,
                    data: bytes | None = None, meta: Any = None) -> bool:
        """Present one request; False means backpressure, retry later."""
        cfg = self.cfg
        if nbytes < 1 or nbytes > cfg.line_bytes:
            raise ValueError(f"request of {nbytes} bytes exceeds one line")
        if addr // cfg.line_bytes != (addr + nbytes - 1) // cfg.line_bytes:
            raise ValueError(f"request {addr:#x}+{nbytes} crosses a line boundary")
        bank = self.bank_of(addr)
        arrival = now + cfg.inject_latency
        queue = self._bank_inflight[bank]
        while queue and queue[0] <= arrival:
            queue.popleft()
        if len(queue) >= cfg.bank_queue_depth:
            return False

        service_time = -(-nbytes // cfg.bytes_per_bank_cycle)
        start = max(arrival, self._bank_next_free[bank])
        if cfg.rw_turnaround and self._bank_last_kind[bank] not in ("", kind):
            start += 1
        self._bank_last_kind[bank] = kind
        end = start + service_time
        self._bank_next_free[bank] = end
        queue.append(end)
        completion = start + cfg.mem_base_latency

        if kind == "write":
            if data is None or len(data) != nbytes:
                raise ValueError("write request without matching data")
            self.backing.write(addr, data)
            payload = None
        elif kind == "read":
            payload = self.backing.read(addr, nbytes)
        else:
            raise ValueError(f"unknown request kind {kind!r}")

        tag = self._next_tag.get(path, 0)
        self._next_tag[path] = tag + 1
        pend = self._path_pending.setdefault(path, deque())
        pend.append(_Pending(completion, MemResponse(tag, kind, addr, payload, meta)))
        self._outstanding += 1
        self.accepts += 1
        self.bytes_accepted += nbytes
        return True

    def pop_responses(self, path: str, now: int) -> list[MemResponse]:
        """Responses due by `now`, in request order; later ones stay queued."""
        out = []
        pend = self._path_pending.get(path)
        while pend and pend[0].completion <= now:
            out.append(pend.popleft().resp)
            self._outstanding -= 1
        return out

    @property
    def outstanding(self) -> int:
        return self._outstanding

    def next_event(self) -> int | None:
        """Earliest pending completion, for idle-skip logic."""
        times = [p[0].completion for p in self._path_pending.values() if p]
        return min(times) if times else None
