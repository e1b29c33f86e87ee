"""Command-line front end: ``muonbp {verify,run,sweep,costmodel}``.

Exit status is 0 on success, 1 when a checked property fails and 2 for
usage or configuration errors. Relative output directories are resolved
against ``$MUONBP_OUTPUT_ROOT`` when set.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from muonbp._validation import check_period
from muonbp.config import ConfigError, ExperimentConfig
from muonbp.linalg import NSConfig
from muonbp.optim import OptimizerConfig
from muonbp.runtime import (
    CommLedger,
    WallModel,
    catalog_row_for,
    ns_flops,
    ns_speedup,
    run,
    step_cost,
)
from muonbp.sharding import ShardLayout, induced_partition
from muonbp.svgplot import line_chart
from muonbp.theory import optimal_stepsizes
from muonbp.verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SWEEP_COLUMNS = ("P", "final_loss", "min_grad_dual_op", "comm_bytes_total", "wall_model_s_total",
                 "wall_to_target_s", "best")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def atomic_write(path: Path, text: str):
    """Write ``text`` to ``path`` via a temp file in the same directory and a rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise UsageError(f"cannot write to {path.parent}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _period_label(p):
    return "inf" if math.isinf(p) else str(int(p))


def parse_periods(text: str):
    try:
        periods = [check_period(tok.strip()) for tok in text.split(",") if tok.strip()]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad --periods {text!r}: {exc}") from None
    if not periods:
        raise UsageError("--periods needs at least one value")
    return periods


def parse_shape(text: str):
    try:
        shape = tuple(int(v) for v in text.replace("x", ",").split(","))
    except ValueError:
        raise UsageError(f"bad --shape {text!r}; expected e.g. 16384,53248") from None
    if len(shape) != 2 or min(shape) < 1:
        raise UsageError(f"bad --shape {text!r}; expected two positive integers")
    return shape


# -- verify ------------------------------------------------------------------
def cmd_verify(args, out) -> int:
    results = run_suite(args.suite, samples=args.samples, seed=args.seed,
                        corrupt_witness=args.self_test)
    if args.self_test:
        print("self-test: dual witness negated; the duality suite is expected to fail", file=out)
    for r in results:
        print(r.line(), file=out)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=out)
    return EXIT_FAIL if failed else EXIT_OK


# -- run ---------------------------------------------------------------------
def _load(path) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(path)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def execute(cfg: ExperimentConfig, opt: OptimizerConfig):
    problem = cfg.build_problem()
    return run(problem, opt, cfg.steps, seed=cfg.seed, bytes_per_element=cfg.bytes_per_element,
               accounting=cfg.accounting, wall=cfg.wall_model(),
               config_extra={"label": cfg.label, "steps": cfg.steps})


def record_json(record, cfg: ExperimentConfig) -> str:
    doc = record.to_dict()
    doc["label"] = cfg.label
    doc["config_text"] = cfg.dumps()
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_record(record, cfg: ExperimentConfig, outdir: Path, svg: bool = False):
    atomic_write(outdir / "run.csv", record.to_csv())
    atomic_write(outdir / "run.json", record_json(record, cfg))
    if svg:
        steps = record.column("step")
        atomic_write(outdir / "loss.svg", line_chart({cfg.label: (steps, record.column("loss"))},
                                                     title=cfg.label, ylabel="loss", logy=True))


def _outdir(cfg: ExperimentConfig, override):
    if override:
        cfg.outdir = override
    return cfg.resolved_outdir()


def cmd_run(args, out) -> int:
    cfg = _load(args.config)
    outdir = _outdir(cfg, args.outdir)
    record = execute(cfg, cfg.optimizer_config())
    write_record(record, cfg, outdir, svg=args.svg)
    status = "diverged at step %d" % record.diverged_at if record.diverged_at is not None else "ok"
    print(f"{cfg.label}: {len(record.rows)} steps, final loss {record.final_loss:.6g}, "
          f"comm {record.comm.total_bytes} bytes, {status}", file=out)
    print(f"wrote {outdir / 'run.csv'} and {outdir / 'run.json'}", file=out)
    return EXIT_OK


# -- sweep -------------------------------------------------------------------
def sweep_overrides(cfg: ExperimentConfig, period, optimal: bool) -> dict:
    over = {"period": period}
    if optimal:
        problem = cfg.build_problem()
        if problem.L_op is None or problem.L_B is None:
            raise UsageError("--optimal-stepsizes needs a problem with analytic L_op and L_B")
        opt = optimal_stepsizes(problem.L_op, problem.L_B, problem.delta0, cfg.steps, period)
        over.update(eta_full=opt.eta_full, eta_block=opt.eta_block)
    return over


def _sweep_one(job):
    text, period, over = job
    cfg = ExperimentConfig.parse(text)
    return period, execute(cfg, cfg.optimizer_config(**over))


def wall_to_target(record, target: float) -> float:
    """Modeled wall time until the first iterate whose gradient dual norm is <= target."""
    prev = 0.0
    for row in record.rows:
        if row["grad_dual_op"] <= target:
            return prev
        prev = row["wall_model_s_cum"]
    return math.inf


def sweep_table(results, target=None):
    """Summary rows for ``[(period, record), ...]``; marks the fastest to ``target``."""
    if target is None:
        target = max(r.min_grad_dual_op for _, r in results)
    rows = []
    for period, rec in results:
        rows.append({
            "P": _period_label(period),
            "final_loss": rec.final_loss,
            "min_grad_dual_op": rec.min_grad_dual_op,
            "comm_bytes_total": rec.comm.total_bytes,
            "wall_model_s_total": rec.wall_total,
            "wall_to_target_s": wall_to_target(rec, target),
        })
    best = min(range(len(rows)), key=lambda i: rows[i]["wall_to_target_s"])
    for i, row in enumerate(rows):
        row["best"] = "*" if i == best and math.isfinite(row["wall_to_target_s"]) else ""
    return rows, target


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(args, out) -> int:
    cfg = _load(args.config)
    periods = parse_periods(args.periods)
    outdir = _outdir(cfg, args.outdir)
    text = cfg.dumps()
    jobs = []
    for p in periods:
        over = sweep_overrides(cfg, p, args.optimal_stepsizes)
        try:
            cfg.optimizer_config(**over)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"period {_period_label(p)}: {exc}") from None
        jobs.append((text, p, over))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]

    for period, rec in results:
        sub = ExperimentConfig.parse(text)
        sub.optimizer.update({"period": period})
        sub.label = f"{cfg.label}-P{_period_label(period)}"
        write_record(rec, sub, outdir / f"P{_period_label(period)}")
    rows, target = sweep_table(results, args.target)
    atomic_write(outdir / "sweep.csv", sweep_csv(rows))
    if args.svg:
        series = {f"P={_period_label(p)}": (r.column("step"), r.column("grad_dual_op")) for p, r in results}
        atomic_write(outdir / "sweep.svg", line_chart(series, title=cfg.label, ylabel="grad dual norm",
                                                      logy=True))
    print(f"target gradient dual norm {target:.6g}", file=out)
    print(sweep_csv(rows), end="", file=out)
    print(f"wrote {outdir / 'sweep.csv'}", file=out)
    return EXIT_OK


# -- costmodel ---------------------------------------------------------------
def costmodel_report(shape, layout: ShardLayout, K: int, period, wall: WallModel,
                     bytes_per_element: int = 4, accounting: str = "cluster") -> dict:
    part = induced_partition(layout, shape)
    full = ns_flops(shape, K)
    blocked = ns_flops(shape, K, part)
    opt = OptimizerConfig(period=period, layout=layout, ns=NSConfig(iterations=K))
    shapes = {"W": tuple(shape)}
    ledger = CommLedger(bytes_per_element, accounting)
    *_, per_full, wall_full = step_cost(shapes, opt, True, ledger, wall)
    *_, _, wall_block = step_cost(shapes, opt, False, ledger, wall)
    full_bytes = 2 * per_full["W"] * bytes_per_element
    if math.isinf(period):
        amortized, wall_bp = 0.0, wall_block
    else:
        amortized = full_bytes / period
        wall_bp = (wall_full + (period - 1) * wall_block) / period
    row = catalog_row_for(layout)
    return {
        "shape": list(shape),
        "layout": str(layout),
        "K": K,
        "P": _period_label(period),
        "ns_flops_full": full,
        "ns_flops_blocked": blocked,
        "speedup": ns_speedup(shape, layout),
        "comm_bytes_full_step": full_bytes,
        "comm_bytes_block_step": 0,
        "comm_bytes_amortized": amortized,
        "wall_s_muon": wall_full,
        "wall_s_blockmuon": wall_block,
        "wall_s_muonbp": wall_bp,
        "catalog": {"approach": row.approach, "sharded": "".join(sorted(row.sharded, key="PGO".index)),
                    "how": row.how, "unsharded_in_fwd_bwd": row.unsharded_in_fb},
    }


def cmd_costmodel(args, out) -> int:
    shape = parse_shape(args.shape)
    try:
        layout = ShardLayout.parse(args.layout)
        period = check_period(args.P)
        wall = WallModel(args.flops_per_second, args.bytes_per_second, args.latency)
        report = costmodel_report(shape, layout, args.K, period, wall, args.bytes_per_element,
                                  args.accounting)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if args.json:
        print(json.dumps(report, indent=2), file=out)
        return EXIT_OK
    cat = report["catalog"]
    lines = [
        f"shape {shape[0]}x{shape[1]}  layout {report['layout']}  K={args.K}  P={report['P']}",
        f"NS FLOPs full      {report['ns_flops_full']}",
        f"NS FLOPs blocked   {report['ns_flops_blocked']}",
        f"speedup            {report['speedup']:.4f}",
        f"comm bytes/step    full {report['comm_bytes_full_step']}  block 0",
        f"comm bytes amortized per step  {report['comm_bytes_amortized']:.6g}",
        f"wall s/step        Muon {report['wall_s_muon']:.6g}  BlockMuon {report['wall_s_blockmuon']:.6g}"
        f"  MuonBP {report['wall_s_muonbp']:.6g}",
        f"catalog            {cat['approach']}: shards {cat['sharded'] or '-'} by {cat['how']}, "
        f"unsharded in fwd/bwd: {'yes' if cat['unsharded_in_fwd_bwd'] else 'no'}",
    ]
    print("\n".join(lines), file=out)
    return EXIT_OK


# -- entry point -------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="muonbp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run norm, duality, Newton-Schulz and bound property suites")
    v.add_argument("--suite", default="all", choices=SUITES + ("all",))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=200)
    v.add_argument("--self-test", action="store_true",
                   help="inject a negated dual witness; the duality suite must fail")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--outdir", help="override the config's output directory")
    r.add_argument("--svg", action="store_true", help="also write a loss chart")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run one config over several periods")
    s.add_argument("config")
    s.add_argument("--periods", default="1,2,5,10,inf")
    s.add_argument("--optimal-stepsizes", action="store_true",
                   help="use the per-period optimal stepsize pair (analytic problems only)")
    s.add_argument("--target", type=float, help="gradient dual norm target for the wall-time marker")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--outdir")
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("costmodel", help="FLOP, communication and wall-time report for one tensor")
    c.add_argument("--shape", required=True, help="rows,cols")
    c.add_argument("--layout", required=True, help='e.g. "column_parallel(8)"')
    c.add_argument("--K", type=int, default=5, help="Newton-Schulz iterations")
    c.add_argument("--P", default="5", help="period (integer or inf)")
    c.add_argument("--flops-per-second", type=float, default=1e12)
    c.add_argument("--bytes-per-second", type=float, default=1e11)
    c.add_argument("--latency", type=float, default=1e-5)
    c.add_argument("--bytes-per-element", type=int, default=4)
    c.add_argument("--accounting", choices=("cluster", "ring"), default="cluster")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_costmodel)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
