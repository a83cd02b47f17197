"""YAML run configuration with line-precise validation errors.

Example::

    model: {name: sdim, V: 1.0}
    temperatures: [0.5, 1.0, 1.5, 2.0]
    q: [1, 2]
    tau_max: 2
    geometry: brick
    kind: psa
    optimizer: {n_batch: 30}
    seed: 0
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .models import HamiltonianSpec, model_from_dict
from .network import DEFAULT_L, DEFAULT_WINDOW
from .optimize import OptimizerConfig
from .sampler import NoiseModel, SamplerConfig


class ConfigError(ValueError):
    pass


def _positions(node, path=(), out=None) -> dict:
    """Line number (1-based) of every key and value, by key path."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _positions(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _positions(v, path + (i,), out)
    return out


@dataclass
class CorrelatorConfig:
    basis: str = "Z"
    max_distance: int = 4


@dataclass
class OracleConfig:
    L: int = 14
    temperatures: list[float] = field(default_factory=lambda: [round(0.2 * k, 10) for k in range(1, 16)])


@dataclass
class RunConfig:
    model: dict
    temperatures: list[float]
    q: list[int]
    tau_max: int = 1
    geometry: str = "ladder"
    kind: list[str] = field(default_factory=lambda: ["psa"])
    mode: str = "angles"
    evaluation: str = "infinite"
    L: int = DEFAULT_L
    window: tuple[int, int] = DEFAULT_WINDOW
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    correlators: CorrelatorConfig | None = None
    oracle: OracleConfig = field(default_factory=OracleConfig)
    run: str | None = None
    out: str = "runs"
    seed: int = 0

    @property
    def hamiltonian(self) -> HamiltonianSpec:
        return model_from_dict(self.model)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


_SECTIONS = {
    "optimizer": (OptimizerConfig, {"n_batch", "randomness", "randomness_scale", "gtol", "max_evals",
                                    "gradient", "fd_step", "jobs", "carry_forward"}),
    "sampler": (SamplerConfig, {"shots", "burn_in", "window", "use_ancilla"}),
    "noise": (NoiseModel, {"eps_1q", "eps_2q", "enabled"}),
    "correlators": (CorrelatorConfig, {"basis", "max_distance"}),
    "oracle": (OracleConfig, {"L", "temperatures"}),
}
_TOP = {"model", "temperatures", "q", "tau_max", "geometry", "kind", "mode", "evaluation", "L", "window",
        "run", "out", "seed"} | set(_SECTIONS)


class _Checker:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines

    def fail(self, path, msg):
        line = None
        for k in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:k]))
            if line is not None:
                break
        where = f"{self.source}:{line}" if line else self.source
        dotted = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{where}: {dotted}: {msg}")

    def number(self, value, path, lo=None, hi=None, integer=False):
        ok = isinstance(value, int) if integer else isinstance(value, (int, float))
        if isinstance(value, bool) or not ok or not math.isfinite(value):
            self.fail(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
        if lo is not None and value < lo:
            self.fail(path, f"must be >= {lo}, got {value}")
        if hi is not None and value > hi:
            self.fail(path, f"must be <= {hi}, got {value}")
        return int(value) if integer else float(value)

    def choice(self, value, path, options):
        if value not in options:
            self.fail(path, f"must be one of {sorted(options)}, got {value!r}")
        return value

    def listed(self, value, path):
        return list(value) if isinstance(value, list) else [value]

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for k in value:
            if k not in allowed:
                self.fail(tuple(path) + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{source}{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        raise ConfigError(f"{source}: empty configuration")
    chk = _Checker(source, _positions(node))
    chk.mapping(raw, (), _TOP)
    for key in ("model", "temperatures", "q"):
        if key not in raw:
            chk.fail((), f"missing required key {key!r}")

    model = raw["model"]
    if isinstance(model, str):
        model = {"name": model}
    chk.mapping(model, ("model",), {"name", "V"})
    if "name" not in model:
        chk.fail(("model",), "missing model name")
    if "V" in model:
        chk.number(model["V"], ("model", "V"))
    model = {"model": model["name"], **({"V": float(model["V"])} if "V" in model else {})}
    try:
        model_from_dict(model)
    except (ValueError, KeyError) as exc:
        chk.fail(("model",), str(exc))

    temps = [chk.number(t, ("temperatures", i), lo=0.0) for i, t in enumerate(chk.listed(raw["temperatures"], ()))]
    if not temps:
        chk.fail(("temperatures",), "needs at least one temperature")
    qs = [chk.number(v, ("q", i), lo=0, hi=8, integer=True) for i, v in enumerate(chk.listed(raw["q"], ()))]
    cfg = RunConfig(model=dict(model), temperatures=temps, q=qs)
    if "tau_max" in raw:
        cfg.tau_max = chk.number(raw["tau_max"], ("tau_max",), lo=1, integer=True)
    if "geometry" in raw:
        cfg.geometry = chk.choice(raw["geometry"], ("geometry",), {"ladder", "brick"})
    if "kind" in raw:
        cfg.kind = [chk.choice(k, ("kind", i), {"psa", "csa"}) for i, k in enumerate(chk.listed(raw["kind"], ()))]
    if "mode" in raw:
        cfg.mode = chk.choice(raw["mode"], ("mode",), {"angles", "raw"})
    if "evaluation" in raw:
        cfg.evaluation = chk.choice(raw["evaluation"], ("evaluation",), {"infinite", "finite"})
    if "L" in raw:
        cfg.L = chk.number(raw["L"], ("L",), lo=4, integer=True)
    if "window" in raw:
        w = raw["window"]
        if not isinstance(w, list) or len(w) != 2:
            chk.fail(("window",), "expected [first, last]")
        lo = chk.number(w[0], ("window", 0), lo=1, integer=True)
        hi = chk.number(w[1], ("window", 1), lo=lo, integer=True)
        cfg.window = (lo, hi)
    if cfg.evaluation == "finite" and cfg.window[1] > cfg.L - cfg.hamiltonian.max_range + 1:
        chk.fail(("window",), f"window {list(cfg.window)} does not fit in L={cfg.L}")
    if "seed" in raw:
        cfg.seed = chk.number(raw["seed"], ("seed",), lo=0, integer=True)
    if "out" in raw:
        cfg.out = str(raw["out"])
    if "run" in raw:
        cfg.run = str(raw["run"])

    for name, (cls, allowed) in _SECTIONS.items():
        if name not in raw:
            continue
        section = chk.mapping(raw[name] or {}, (name,), allowed)
        if name == "optimizer" and "gradient" in section:
            chk.choice(section["gradient"], (name, "gradient"), {"exact", "fd"})
        if name == "correlators" and "basis" in section:
            chk.choice(section["basis"], (name, "basis"), {"X", "Y", "Z"})
        try:
            setattr(cfg, name, cls(**section))
        except (TypeError, ValueError) as exc:
            chk.fail((name,), str(exc))
    cfg.optimizer.seed = cfg.seed
    cfg.sampler = SamplerConfig(**{**asdict(cfg.sampler), "seed": cfg.seed})
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{p}: no such config file")
    return parse_config(p.read_text(), str(p))
