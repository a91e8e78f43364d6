"""Sparse byte-addressed memory image.

Used both as the oracle's memory and as the backing store behind the
timing model, so the two sides share one definition of what memory holds.
Unwritten bytes read as zero. Images round-trip through a flat hex text
format (one line per 16-byte row, `hexaddr: hexbytes`, zero rows elided).
"""

from __future__ import annotations

_PAGE = 256
_ROW = 16


class ByteMap:
    def __init__(self):
        self._pages: dict[int, bytearray] = {}

    def clone(self) -> "ByteMap":
        out = ByteMap()
        out._pages = {base: bytearray(page) for base, page in self._pages.items()}
        return out

    def write(self, addr: int, data: bytes) -> None:
        if addr < 0:
            raise ValueError(f"negative address {addr:#x}")
        pos = addr
        off = 0
        n = len(data)
        pages = self._pages
        while off < n:
            base = pos & ~(_PAGE - 1)
            page = pages.get(base)
            if page is None:
                page = pages[base] = bytearray(_PAGE)
            start = pos - base
            take = min(_PAGE - start, n - off)
            page[start:start + take] = data[off:off + take]
            pos += take
            off += take

    def read(self, addr: int, n: int) -> bytes:
        if addr < 0:
            raise ValueError(f"negative address {addr:#x}")
        out = bytearray(n)
        pos = addr
        off = 0
        pages = self._pages
        while off < n:
            base = pos & ~(_PAGE - 1)
            start = pos - base
            take = min(_PAGE - start, n - off)
            page = pages.get(base)
            if page is not None:
                out[off:off + take] = page[start:start + take]
            pos += take
            off += take
        return bytes(out)

    def nonzero(self) -> dict[int, int]:
        """Address -> byte for every nonzero byte; canonical comparison form."""
        out = {}
        for base in sorted(self._pages):
            page = self._pages[base]
            for i, b in enumerate(page):
                if b:
                    out[base + i] = b
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, ByteMap):
            return NotImplemented
        return self.nonzero() == other.nonzero()

    def dump_hex(self) -> str:
        rows = []
        nz = self.nonzero()
        seen_rows = sorted({addr & ~(_ROW - 1) for addr in nz})
        for row in seen_rows:
            rows.append(f"{row:08x}: {self.read(row, _ROW).hex()}")
        return "\n".join(rows) + ("\n" if rows else "")

    @classmethod
    def load_hex(cls, text: str) -> "ByteMap":
        img = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            addr_part, _, data_part = line.partition(":")
            if not data_part:
                raise ValueError(f"line {lineno}: expected 'addr: hexbytes'")
            img.write(int(addr_part, 16), bytes.fromhex(data_part.strip()))
        return img
