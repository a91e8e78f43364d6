"""Machine configuration shared by every model layer.

A single frozen dataclass describes the machine: vector geometry, register
file banking, sequencer topology, load/store unit queues, and the memory
system behind it. Everything downstream (oracle, backend, LSU, memory)
takes one of these rather than loose parameters.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass


FEATURE_PRESETS = {
    # (dae, ooo)
    "base": (False, False),
    "dae": (True, False),
    "ooo": (False, True),
    "full": (True, True),
}

CONFIG_PATH_ENV = "SHORTVEC_CONFIG"


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class SimConfig:
    """Immutable machine description.

    vlen/dlen are in bits. dlen is both the datapath width and the width
    of one register-file row (one element group), so vlen/dlen element
    groups make up each architectural register.
    """

    vlen: int = 512
    dlen: int = 256
    num_arch_regs: int = 32

    # backend topology
    num_arith_seqs: int = 2
    iq_depth: int = 4
    dispatch_q_depth: int = 4
    dispatch_ipc: int = 1
    no_bypass: bool = False

    # register file
    vrf_banks: int = 4
    read_ports_per_bank: int = 3
    write_ports_per_bank: int = 1
    dedicated_load_wport: bool = False

    # functional unit write-back delays, in cycles after micro-op issue
    fu_add: int = 2
    fu_mul: int = 3
    fu_mac: int = 3
    fu_fma: int = 4

    # feature toggles
    dae: bool = True
    ooo: bool = True

    # load/store unit
    load_dq_depth: int = 4
    store_dq_depth: int = 4
    inflight_loads: int = 8
    inflight_stores: int = 8

    # memory system
    mem_banks: int = 4
    mem_base_latency: int = 4
    inject_latency: int = 0
    bank_queue_depth: int = 8
    rw_turnaround: bool = False

    # frontend
    page_bytes: int = 4096

    def __post_init__(self):
        if not _is_pow2(self.vlen) or not _is_pow2(self.dlen):
            raise ValueError(f"VLEN and DLEN must be powers of two, got {self.vlen}/{self.dlen}")
        if self.dlen > self.vlen:
            raise ValueError(f"DLEN ({self.dlen}) cannot exceed VLEN ({self.vlen})")
        if self.vlen % self.dlen != 0:
            raise ValueError(f"DLEN ({self.dlen}) must divide VLEN ({self.vlen})")
        if self.dlen < 64:
            raise ValueError(f"DLEN must be at least 64 bits, got {self.dlen}")
        if self.num_arch_regs < 4 or not _is_pow2(self.num_arch_regs):
            raise ValueError(f"num_arch_regs must be a power of two >= 4, got {self.num_arch_regs}")
        if self.num_arith_seqs < 1:
            raise ValueError("need at least one arithmetic sequencer")
        if self.iq_depth < 0 or self.dispatch_q_depth < 0:
            raise ValueError("queue depths cannot be negative")
        if self.dispatch_ipc < 1:
            raise ValueError("dispatch_ipc must be at least 1")
        if self.vrf_banks < 1 or not _is_pow2(self.vrf_banks) or self.vrf_banks > self.total_egs:
            raise ValueError(f"vrf_banks must be a power of two dividing {self.total_egs} element groups")
        if self.read_ports_per_bank < 3:
            # a three-source multiply-accumulate can stripe all its reads
            # into one bank; grants are all-or-nothing, so fewer ports
            # would wedge the oldest instruction forever
            raise ValueError("read_ports_per_bank must be at least 3")
        if self.write_ports_per_bank < 1:
            raise ValueError("register file needs at least one write port per bank")
        for name in ("fu_add", "fu_mul", "fu_mac", "fu_fma"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1 cycle")
        if self.mem_banks < 1 or not _is_pow2(self.mem_banks):
            raise ValueError(f"mem_banks must be a power of two >= 1, got {self.mem_banks}")
        if self.mem_base_latency < 1:
            raise ValueError("mem_base_latency must be at least 1")
        if self.inject_latency < 0:
            raise ValueError("inject_latency cannot be negative")
        if self.bank_queue_depth < 1:
            raise ValueError("bank_queue_depth must be at least 1")
        if not _is_pow2(self.page_bytes) or self.page_bytes < self.line_bytes:
            raise ValueError(f"page_bytes must be a power of two >= one line ({self.line_bytes})")
        if self.inflight_loads < 1 or self.inflight_stores < 1:
            raise ValueError("in-flight queues need at least one entry")

    @property
    def egs_per_reg(self) -> int:
        return self.vlen // self.dlen

    @property
    def total_egs(self) -> int:
        return self.num_arch_regs * self.egs_per_reg

    @property
    def native_chime(self) -> int:
        """Cycles one datapath pass over a whole register takes: VLEN/DLEN."""
        return self.vlen // self.dlen

    @property
    def line_bytes(self) -> int:
        """Memory interleave granule; one request moves at most this much."""
        return self.dlen // 8

    @property
    def bytes_per_bank_cycle(self) -> int:
        # aggregate bandwidth pinned to DLEN bits per cycle across all banks
        return max(1, self.line_bytes // self.mem_banks)

    @property
    def paths(self) -> tuple[str, ...]:
        """Issue path names in fixed evaluation order."""
        return ("load", "store") + tuple(f"arith{i}" for i in range(self.num_arith_seqs))

    def wb_delay(self, opcode) -> int:
        """Write-back delay in cycles for a micro-op of the given opcode."""
        name = getattr(opcode, "name", str(opcode))
        if name in ("VADD",):
            return self.fu_add
        if name in ("VMUL",):
            return self.fu_mul
        if name in ("VMACC",):
            return self.fu_mac
        if name in ("VFMA_OPAQUE",):
            return self.fu_fma
        return 0  # loads write as data arrives

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _coerce(field: dataclasses.Field, raw: str):
    if field.type in ("bool", bool):
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ValueError(f"bad boolean for {field.name}: {raw!r}")
        return _BOOL_WORDS[word]
    return int(raw, 0)


def parse_config_text(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse flat key=value lines into a SimConfig.

    '#' starts a comment, blank lines are skipped, unknown keys raise.
    Values on top of `base` (or the defaults).
    """
    fields = {f.name: f for f in dataclasses.fields(SimConfig)}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in fields:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        overrides[key] = _coerce(fields[key], raw.strip())
    cfg = base or SimConfig()
    return cfg.replace(**overrides) if overrides else cfg


def load_config(path: str | None = None, overrides: dict | None = None) -> SimConfig:
    """Build a SimConfig from an optional file plus explicit overrides.

    Resolution order: defaults, then $SHORTVEC_CONFIG if set, then `path`,
    then `overrides` (strongest).
    """
    cfg = SimConfig()
    env_path = os.environ.get(CONFIG_PATH_ENV)
    if env_path:
        with open(env_path) as fh:
            cfg = parse_config_text(fh.read(), cfg)
    if path:
        with open(path) as fh:
            cfg = parse_config_text(fh.read(), cfg)
    if overrides:
        fields = {f.name: f for f in dataclasses.fields(SimConfig)}
        coerced = {}
        for key, val in overrides.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            coerced[key] = _coerce(fields[key], val) if isinstance(val, str) else val
        cfg = cfg.replace(**coerced)
    return cfg
