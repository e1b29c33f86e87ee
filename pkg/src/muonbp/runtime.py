"""Simulated model-parallel runtime with communication, FLOP and wall-time ledgers."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from muonbp.linalg import block_dual_norm, nuclear_norm
from muonbp.optim import MomentumState, OptimizerConfig, muonbp_step
from muonbp.sharding import BlockPartition, ShardLayout, gather, induced_partition, scatter

CSV_COLUMNS = (
    "step",
    "mode",
    "loss",
    "grad_dual_op",
    "grad_dual_block",
    "update_op_norm",
    "comm_bytes_cum",
    "gather_events_cum",
    "ns_flops_cum",
    "wall_model_s_cum",
)

ACCOUNTING = ("cluster", "ring")


def ns_flops(shape, K: int, blocked: BlockPartition | None = None) -> int:
    """Exact Newton-Schulz FLOPs: ``2mn + 2K(2nm^2 + m^3)`` with ``m = min`` side.

    With a partition the count is summed over all blocks, each block oriented
    on its own smaller side.
    """
    m, n = (int(d) for d in shape)
    if m < 1 or n < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    if blocked is not None:
        return sum(ns_flops(s, K) for s in blocked.block_shapes())
    m, n = min(m, n), max(m, n)
    return 2 * m * n + 2 * K * (2 * n * m * m + m**3)


def ns_iteration_flops(shape, blocked: BlockPartition | None = None) -> int:
    """FLOPs of a single Newton-Schulz iteration, ``2(2nm^2 + m^3)``."""
    if blocked is not None:
        return sum(ns_iteration_flops(s) for s in blocked.block_shapes())
    m, n = sorted(int(d) for d in shape)
    return 2 * (2 * n * m * m + m**3)


def ns_speedup(shape, layout: ShardLayout) -> float:
    """Per-iteration FLOP ratio of full over blockwise orthogonalization."""
    part = induced_partition(layout, shape)
    return ns_iteration_flops(shape) / ns_iteration_flops(shape, part)


@dataclass(frozen=True)
class CatalogRow:
    approach: str
    sharded: frozenset
    how: str
    unsharded_in_fb: bool


def layout_catalog() -> dict:
    """Which of parameters (P), gradients (G), optimizer states (O) each approach shards."""
    rows = [
        CatalogRow("No parallelism", frozenset(), "---", False),
        CatalogRow("Tensor Parallelism", frozenset("PGO"), "(any dim)", False),
        CatalogRow("FSDP2 (dim-0)", frozenset("PGO"), "dim-0", True),
        CatalogRow("ZeRO-1", frozenset("O"), "layer", True),
        CatalogRow("ZeRO-2", frozenset("GO"), "layer", True),
        CatalogRow("FSDP/ZeRO-3", frozenset("PGO"), "layer", True),
        CatalogRow("PP", frozenset("PGO"), "layer", False),
    ]
    return {row.approach: row for row in rows}


def catalog_row_for(layout: ShardLayout) -> CatalogRow:
    table = layout_catalog()
    if layout.kind == "none":
        return table["No parallelism"]
    if layout.kind == "dim0":
        return table["FSDP2 (dim-0)"]
    return table["Tensor Parallelism"]


@dataclass(frozen=True)
class CommEvent:
    step: int
    tensor: str
    kind: str
    elements: int
    bytes: int


@dataclass
class CommLedger:
    bytes_per_element: int = 4
    accounting: str = "cluster"
    events: list = field(default_factory=list)
    total_bytes: int = 0
    total_collectives: int = 0

    def __post_init__(self):
        if self.accounting not in ACCOUNTING:
            raise ValueError(f"accounting must be one of {ACCOUNTING}, got {self.accounting!r}")
        if self.bytes_per_element < 1:
            raise ValueError("bytes_per_element must be >= 1")

    def payload_elements(self, shape, world_size: int) -> int:
        """Elements moved by one gather (or one scatter) of a ``shape`` tensor."""
        mn = int(shape[0]) * int(shape[1])
        if self.accounting == "cluster":
            return mn * (world_size - 1)
        return mn * (world_size - 1) // world_size

    def record(self, step: int, tensor: str, kind: str, elements: int) -> CommEvent:
        event = CommEvent(step, tensor, kind, elements, elements * self.bytes_per_element)
        self.events.append(event)
        self.total_bytes += event.bytes
        self.total_collectives += 1
        return event

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)

    def replay(self) -> tuple:
        """Recompute (total bytes, collective count) from the event list."""
        return sum(e.bytes for e in self.events), len(self.events)


@dataclass
class FlopLedger:
    ns_per_step: list = field(default_factory=list)
    momentum_per_step: list = field(default_factory=list)

    def record(self, ns: int, momentum: int):
        self.ns_per_step.append(ns)
        self.momentum_per_step.append(momentum)

    @property
    def ns_total(self) -> int:
        return sum(self.ns_per_step)

    @property
    def momentum_total(self) -> int:
        return sum(self.momentum_per_step)


@dataclass(frozen=True)
class WallModel:
    """Per-step time = slowest device's compute + bytes / bandwidth + latency per collective."""

    flops_per_second: float = 1e12
    bytes_per_second: float = 1e11
    latency_s: float = 1e-5

    def step_time(self, device_flops, comm_bytes: int, collectives: int) -> float:
        compute = max(device_flops) / self.flops_per_second if device_flops else 0.0
        comm = comm_bytes / self.bytes_per_second if comm_bytes else 0.0
        return compute + comm + self.latency_s * collectives


def step_cost(shapes: dict, cfg: OptimizerConfig, full: bool, ledger: CommLedger, wall: WallModel):
    """Modeled cost of one optimizer step over all tensors.

    Returns (ns flops, momentum flops, comm elements per tensor, wall seconds).
    On full steps tensor k is orthogonalized on device ``k % W``.
    """
    layout = cfg.layout
    W = layout.world_size
    K = cfg.ns.iterations
    device_flops = [0] * W
    ns_total = mom_total = 0
    comm_bytes = collectives = 0
    per_tensor = {}
    for k, (name, shape) in enumerate(sorted(shapes.items())):
        part = induced_partition(layout, shape)
        for d, s in enumerate(part.block_shapes()):
            device_flops[d] += 2 * s[0] * s[1]
        mom_total += 2 * shape[0] * shape[1]
        if full:
            f = ns_flops(shape, K)
            device_flops[k % W] += f
            ns_total += f
            elements = ledger.payload_elements(shape, W)
            per_tensor[name] = elements
            comm_bytes += 2 * elements * ledger.bytes_per_element
            collectives += 2
        else:
            for d, s in enumerate(part.block_shapes()):
                f = ns_flops(s, K)
                device_flops[d] += f
                ns_total += f
    return ns_total, mom_total, per_tensor, wall.step_time(device_flops, comm_bytes, collectives)


def _period_str(period):
    return "inf" if math.isinf(period) else int(period)


def config_echo(cfg: OptimizerConfig) -> dict:
    return {
        "momentum": cfg.momentum,
        "eta_full": cfg.eta_full,
        "eta_block": cfg.eta_block,
        "period": _period_str(cfg.period),
        "ns": asdict(cfg.ns),
        "rms_beta": cfg.rms_beta,
        "layout": str(cfg.layout),
        "backend": cfg.backend,
        "weight_decay": cfg.weight_decay,
        "schedule": cfg.schedule,
        "horizon": cfg.horizon,
    }


@dataclass
class RunRecord:
    rows: list
    comm: CommLedger
    flops: FlopLedger
    wall: WallModel
    config: dict
    seed: int
    steps: int
    final_loss: float
    final_params: dict = field(repr=False)
    diverged_at: int | None = None
    reports: list = field(default_factory=list, repr=False)

    def column(self, name):
        return [row[name] for row in self.rows]

    @property
    def min_grad_dual_op(self) -> float:
        return min(self.column("grad_dual_op"))

    @property
    def wall_total(self) -> float:
        return self.rows[-1]["wall_model_s_cum"] if self.rows else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "steps": self.steps,
            "diverged_at": self.diverged_at,
            "final_loss": self.final_loss,
            "rows": self.rows,
            "comm": {
                "bytes_per_element": self.comm.bytes_per_element,
                "accounting": self.comm.accounting,
                "total_bytes": self.comm.total_bytes,
                "total_collectives": self.comm.total_collectives,
                "events": [asdict(e) for e in self.comm.events],
            },
            "flops": {
                "ns_per_step": self.flops.ns_per_step,
                "momentum_per_step": self.flops.momentum_per_step,
                "ns_total": self.flops.ns_total,
                "momentum_total": self.flops.momentum_total,
            },
            "wall": asdict(self.wall),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run(problem, cfg: OptimizerConfig, steps: int, seed: int = 0, bytes_per_element: int = 4,
        accounting: str = "cluster", wall: WallModel | None = None, config_extra=None) -> RunRecord:
    """Execute ``steps`` MuonBP steps of ``problem`` on a virtual cluster.

    Row t records the loss and exact-gradient dual norms at ``X_t``, the
    operator norm of the step-t update, and ledger totals after step t.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    wall = wall or WallModel()
    rng = np.random.default_rng(seed)
    layout = cfg.layout
    ledger = CommLedger(bytes_per_element, accounting)
    flop_ledger = FlopLedger()
    shapes = {k: tuple(v.shape) for k, v in problem.x0.items()}
    names = sorted(shapes)
    parts = {k: induced_partition(layout, shapes[k]) for k in names}
    params = {k: scatter(problem.x0[k], layout) for k in names}
    states = {k: MomentumState.zeros(shapes[k], layout) for k in names}

    rows, reports = [], []
    gathers = 0
    wall_cum = 0.0
    diverged_at = None
    full_params = {k: gather(params[k]) for k in names}
    for t in range(steps):
        loss = problem.objective(full_params)
        exact = problem.gradient(full_params)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in exact.values()):
            diverged_at = t
            break
        grad = problem.stochastic_gradient(full_params, rng) if problem.stochastic else exact

        full = cfg.is_full_step(t)
        ns_f, mom_f, per_tensor, dt = step_cost(shapes, cfg, full, ledger, wall)
        step_reports = {}
        try:
            new_params = {}
            for k in names:
                new_params[k], step_reports[k] = muonbp_step(
                    states[k], scatter(grad[k], layout), cfg, params[k])
        except FloatingPointError:
            diverged_at = t
            break
        params = new_params
        for k in names:
            rep = step_reports[k]
            rep.momentum_flops = 2 * shapes[k][0] * shapes[k][1]
            if full:
                elements = per_tensor[k]
                ledger.record(t, k, "gather", elements)
                ledger.record(t, k, "scatter", elements)
                rep.comm_elements = 2 * elements
                rep.comm_bytes = 2 * elements * bytes_per_element
                rep.ns_flops = ns_flops(shapes[k], cfg.ns.iterations)
            else:
                rep.ns_flops = ns_flops(shapes[k], cfg.ns.iterations, parts[k])
        if full:
            gathers += len(names)
        flop_ledger.record(ns_f, mom_f)
        wall_cum += dt
        reports.append(step_reports)
        rows.append({
            "step": t,
            "mode": "full" if full else "block",
            "loss": float(loss),
            "grad_dual_op": float(sum(nuclear_norm(exact[k]) for k in names)),
            "grad_dual_block": float(sum(block_dual_norm(exact[k], parts[k]) for k in names)),
            "update_op_norm": float(max(step_reports[k].update_op_norm for k in names)),
            "comm_bytes_cum": ledger.total_bytes,
            "gather_events_cum": gathers,
            "ns_flops_cum": flop_ledger.ns_total,
            "wall_model_s_cum": wall_cum,
        })
        full_params = {k: gather(params[k]) for k in names}

    final_loss = problem.objective(full_params)
    echo = config_echo(cfg)
    echo.update({"bytes_per_element": bytes_per_element, "accounting": accounting,
                 "wall": asdict(wall)})
    if config_extra:
        echo.update(config_extra)
    return RunRecord(rows, ledger, flop_ledger, wall, echo, seed, steps, float(final_loss),
                     full_params, diverged_at, reports)
