"""Design-space sweeps: cross-product runs with a stable CSV schema.

A sweep is a small declaration: which config fields to vary and over
what values, which kernels to run at each point, and which data seeds.
Rows come back in declaration order (outer axis slowest, seeds fastest)
no matter how the points were executed, and each row carries a percent
speedup against the previous value of every axis so the classic
"relative % improvement" tables fall straight out of the CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .config import SimConfig
from .engine import STALL_CAUSES, run
from .isa import VType
from .program import KERNEL_NAMES, gen_kernel

_CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(SimConfig))

_RUN_FIELDS = ("kernel", "size", "sew", "lmul", "seed", "cycles",
               "element_ops", "bytes_moved", "compute_util", "mem_util",
               "util")

_STALL_FIELDS = tuple(f"stall_pct_{cause}" for cause in STALL_CAUSES)


@dataclass(frozen=True)
class SweepSpec:
    """One sweep declaration.

    axes: ordered (config field, values) pairs, outermost first.
    kernels: kernel names run at every point.
    size/sew/lmul: workload shape, fixed across the sweep.
    seeds: data seeds; each adds a repetition of every (point, kernel).
    """

    axes: tuple[tuple[str, tuple], ...] = ()
    kernels: tuple[str, ...] = ("axpy",)
    size: int | str = 1024
    sew: int = 32
    lmul: int = 1
    seeds: tuple[int, ...] = (0,)
    cap: int = 1024

    def __post_init__(self):
        for name, values in self.axes:
            if name not in _CONFIG_FIELDS:
                raise ValueError(f"unknown config field {name!r} in sweep axis")
            if not values:
                raise ValueError(f"axis {name!r} has no values")
        for kernel in self.kernels:
            if kernel not in KERNEL_NAMES:
                raise ValueError(f"unknown kernel {kernel!r}; have {', '.join(KERNEL_NAMES)}")
        if not self.kernels:
            raise ValueError("sweep needs at least one kernel")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")
        if self.total_runs > self.cap:
            raise ValueError(
                f"sweep would launch {self.total_runs} runs, over the cap of "
                f"{self.cap}; shrink an axis or raise the cap")

    @property
    def total_runs(self) -> int:
        n = len(self.kernels) * len(self.seeds)
        for _, values in self.axes:
            n *= len(values)
        return n

    def points(self):
        """Yield (value indices, {field: value}) in declaration order."""
        names = [name for name, _ in self.axes]
        pools = [values for _, values in self.axes]
        for idxs in itertools.product(*(range(len(p)) for p in pools)):
            yield idxs, {n: p[i] for n, p, i in zip(names, pools, idxs)}


def metrics_row(machine: SimConfig, res, kernel, size, sew, lmul, seed) -> dict:
    """One schema-stable CSV row for a finished run."""
    row = {name: getattr(machine, name) for name in _CONFIG_FIELDS}
    row.update(kernel=kernel, size=size, sew=sew, lmul=lmul, seed=seed,
               cycles=res.cycles,
               element_ops=res.metrics.element_ops,
               bytes_moved=res.metrics.bytes_moved,
               compute_util=f"{res.compute_util:.6f}",
               mem_util=f"{res.mem_util:.6f}",
               util=f"{res.util:.6f}")
    for cause in STALL_CAUSES:
        pct = 100.0 * res.metrics.stall_cycles.get(cause, 0) / res.cycles
        row[f"stall_pct_{cause}"] = f"{pct:.3f}"
    return row


def _run_point(args) -> dict:
    cfg_kw, kernel, size, sew, lmul, seed = args
    machine = SimConfig(**cfg_kw)
    vt = VType(sew=sew, lmul=lmul, vl=0)
    prog = gen_kernel(kernel, size, vt, machine, seed=seed)
    res = run(prog, machine)
    return metrics_row(machine, res, kernel, size, sew, lmul, seed)


def run_sweep(spec: SweepSpec, base: SimConfig | None = None,
              jobs: int = 1) -> list[dict]:
    """Execute every point and return rows in declaration order.

    Rows gain one pct_speedup_vs_prev_<axis> column per axis: percent
    performance change against the row at the previous value of that
    axis with everything else held equal; blank at each axis's first
    value. jobs > 1 fans points out to worker processes; ordering is
    unaffected.
    """
    base = base or SimConfig()
    base_kw = {name: getattr(base, name) for name in _CONFIG_FIELDS}

    tasks = []
    keys = []
    for idxs, overrides in spec.points():
        cfg_kw = dict(base_kw)
        cfg_kw.update(overrides)
        for kernel in spec.kernels:
            for seed in spec.seeds:
                tasks.append((cfg_kw, kernel, spec.size, spec.sew,
                              spec.lmul, seed))
                keys.append((idxs, kernel, seed))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, tasks))
    else:
        rows = [_run_point(t) for t in tasks]

    by_key = {k: r for k, r in zip(keys, rows)}
    for (idxs, kernel, seed), row in zip(keys, rows):
        for ax, (name, _) in enumerate(spec.axes):
            col = f"pct_speedup_vs_prev_{name}"
            if idxs[ax] == 0:
                row[col] = ""
                continue
            prev_idxs = idxs[:ax] + (idxs[ax] - 1,) + idxs[ax + 1:]
            prev = by_key[(prev_idxs, kernel, seed)]
            gain = 100.0 * (prev["cycles"] / row["cycles"] - 1.0)
            row[col] = f"{gain:.3f}"
    return rows


def csv_header(spec: SweepSpec | None = None) -> list[str]:
    cols = list(_CONFIG_FIELDS) + list(_RUN_FIELDS) + list(_STALL_FIELDS)
    if spec is not None:
        cols += [f"pct_speedup_vs_prev_{name}" for name, _ in spec.axes]
    return cols


def to_csv(rows: list[dict], spec: SweepSpec | None = None) -> str:
    """Render rows with the fixed column set; byte-stable for equal inputs."""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=csv_header(spec),
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return out.getvalue()
