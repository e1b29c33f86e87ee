"""Experiment configuration files.

A config is an INI-style ``key = value`` file with sections::

    [experiment]
    label = muonbp-p5
    steps = 100
    seed = 0
    outdir = runs/p5

    [problem]
    name = block_quadratic
    shape = 8, 32
    layout = column_parallel(4)

    [optimizer]
    period = 5
    eta_full = 0.05
    ...

``period = inf`` selects BlockMuon. Relative ``outdir`` values are resolved
against ``$MUONBP_OUTPUT_ROOT`` when it is set.
"""
from __future__ import annotations

import ast
import configparser
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from muonbp.linalg import NSConfig
from muonbp.optim import OptimizerConfig
from muonbp.runtime import WallModel
from muonbp.sharding import ShardLayout
from muonbp.testbed import BlockQuadratic, MLPProblem

OUTPUT_ROOT_ENV = "MUONBP_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Raised for unparseable or invalid experiment configs."""


def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("none", "off", ""):
        return None
    if text.lower() == "inf":
        return math.inf
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text
    return tuple(value) if isinstance(value, list) else value


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    label: str = "run"
    steps: int = 100
    seed: int = 0
    outdir: str = "runs/run"
    problem: dict = field(default_factory=lambda: {"name": "block_quadratic", "shape": (8, 32)})
    optimizer: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    # -- text format -----------------------------------------------------
    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        known = {"experiment", "problem", "optimizer", "runtime"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ConfigError(f"unknown section(s): {sorted(unknown)}")
        exp = {k: _parse_value(v) for k, v in cp["experiment"].items()} if cp.has_section("experiment") else {}
        cfg = cls(
            label=str(exp.pop("label", "run")),
            steps=int(exp.pop("steps", 100)),
            seed=int(exp.pop("seed", 0)),
            outdir=str(exp.pop("outdir", "runs/run")),
        )
        if exp:
            raise ConfigError(f"unknown [experiment] key(s): {sorted(exp)}")
        for section in ("problem", "optimizer", "runtime"):
            if cp.has_section(section):
                setattr(cfg, section, {k: _parse_value(v) for k, v in cp[section].items()})
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        try:
            return cls.parse(text)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {"label": self.label, "steps": str(self.steps), "seed": str(self.seed),
                            "outdir": self.outdir}
        for section in ("problem", "optimizer", "runtime"):
            values = getattr(self, section)
            if values or section == "problem":
                cp[section] = {k: _format_value(v) for k, v in values.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # -- builders --------------------------------------------------------
    def validate(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        try:
            self.build_problem()
            self.optimizer_config()
            self.wall_model()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @property
    def layout(self) -> ShardLayout:
        text = self.optimizer.get("layout", self.problem.get("layout"))
        if text is None:
            return ShardLayout.none()
        return text if isinstance(text, ShardLayout) else ShardLayout.parse(str(text))

    def build_problem(self):
        params = dict(self.problem)
        name = params.pop("name", "block_quadratic")
        if name == "block_quadratic":
            layout = params.pop("layout", None)
            shape = tuple(params.pop("shape", (8, 32)))
            partition = params.pop("partition", None)
            if partition is None:
                partition = ShardLayout.parse(layout).grid_shape if layout else self.layout.grid_shape
            params.setdefault("seed", self.seed)
            return BlockQuadratic(shape, partition=tuple(partition), **params)
        if name == "mlp":
            params.pop("layout", None)
            params.setdefault("seed", self.seed)
            return MLPProblem(**params)
        raise ConfigError(f"unknown problem {name!r}; expected block_quadratic or mlp")

    def optimizer_config(self, **overrides) -> OptimizerConfig:
        o = dict(self.optimizer)
        o.update(overrides)
        ns = NSConfig(
            iterations=int(o.pop("ns_iterations", 5)),
            coeff_a=float(o.pop("ns_a", 2.0)),
            coeff_b=float(o.pop("ns_b", -1.5)),
            coeff_c=float(o.pop("ns_c", 0.5)),
            epsilon=float(o.pop("ns_epsilon", 1e-7)),
        )
        o.pop("layout", None)
        if o.get("schedule") == "linear":
            o.setdefault("horizon", self.steps)
        allowed = {"momentum", "eta_full", "eta_block", "period", "rms_beta", "backend",
                   "weight_decay", "schedule", "horizon"}
        unknown = set(o) - allowed
        if unknown:
            raise ConfigError(f"unknown [optimizer] key(s): {sorted(unknown)}")
        return OptimizerConfig(ns=ns, layout=self.layout, **o)

    def wall_model(self) -> WallModel:
        r = self.runtime
        return WallModel(
            flops_per_second=float(r.get("flops_per_second", 1e12)),
            bytes_per_second=float(r.get("bytes_per_second", 1e11)),
            latency_s=float(r.get("latency_s", 1e-5)),
        )

    @property
    def bytes_per_element(self) -> int:
        return int(self.runtime.get("bytes_per_element", 4))

    @property
    def accounting(self) -> str:
        return str(self.runtime.get("accounting", "cluster"))

    def resolved_outdir(self) -> Path:
        out = Path(self.outdir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out
