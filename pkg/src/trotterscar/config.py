"""Run configuration: one experiment per TOML file, validated before anything runs.

Layout::

    seed = 0
    out = "runs/heisenberg"

    [model]
    name = "heisenberg"
    L = 8
    h_x = 0.5            # model parameters sit beside name and L

    [simulation]
    order = 2
    dt = 0.01
    t_max = 20.0
    stride = 10          # keep every stride-th Trotter step
    sites = [7]          # tracked Bloch sites; empty means site L-1
    baseline = 100       # Haar-random product states in the ensemble

    [state]              # initial state for `simulate`
    kind = "haar"        # haar | neel | zero | product | ladder | params
    theta = []           # product only
    phi = []             # product only
    path = ""            # params only: JSON written by `optimize`

    [loss]
    l1 = 1.0
    l2 = 1e-5
    T_l = 10.0

    [optimizer]
    iters = 2000
    lr0 = 0.05
    lr_min = 1e-4
    restarts = 8
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

from .formulas import schedule_for_order, steps_for_time
from .models import MODEL_DEFAULTS
from .variational import LossConfig, OptimizerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STATE_KINDS = ("haar", "neel", "zero", "product", "ladder", "params")
MAX_L = 14


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


@dataclass(frozen=True)
class StateSpec:
    kind: str = "haar"
    theta: tuple[float, ...] = ()
    phi: tuple[float, ...] = ()
    path: str = ""


@dataclass(frozen=True)
class OptimizerSettings:
    iters: int = 2000
    lr0: float = 0.05
    lr_min: float = 1e-4
    restarts: int = 8


@dataclass(frozen=True)
class RunConfig:
    model: str = "heisenberg"
    L: int = 8
    params: dict = field(default_factory=dict)
    order: int = 2
    dt: float = 0.01
    t_max: float = 20.0
    stride: int = 10
    sites: tuple[int, ...] = ()
    baseline: int = 100
    state: StateSpec = StateSpec()
    l1: float = 1.0
    l2: float = 1e-5
    T_l: float = 10.0
    optimizer: OptimizerSettings = OptimizerSettings()
    seed: int = 0
    out: str = "run"

    @property
    def model_params(self) -> dict:
        return {**MODEL_DEFAULTS[self.model], **self.params}

    @property
    def tracked_sites(self) -> tuple[int, ...]:
        return self.sites or (self.L - 1,)

    @property
    def n_steps(self) -> int:
        return steps_for_time(self.t_max, self.dt)

    def loss_config(self) -> LossConfig:
        """Loss settings; T_l must be on the dt grid, which only optimization needs."""
        try:
            return LossConfig(l1=self.l1, l2=self.l2, T_l=self.T_l, dt=self.dt, schedule_order=self.order)
        except ValueError as exc:
            raise ConfigError(f"[loss] T_l: {exc}") from exc

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(seed=self.seed, **dataclasses.asdict(self.optimizer))

    def to_dict(self) -> dict:
        state = {"kind": self.state.kind}
        if self.state.kind == "product":
            state.update(theta=list(self.state.theta), phi=list(self.state.phi))
        if self.state.kind == "params":
            state["path"] = self.state.path
        return {
            "seed": self.seed,
            "out": self.out,
            "model": {"name": self.model, "L": self.L, **self.params},
            "simulation": {
                "order": self.order,
                "dt": self.dt,
                "t_max": self.t_max,
                "stride": self.stride,
                "sites": list(self.sites),
                "baseline": self.baseline,
            },
            "state": state,
            "loss": {"l1": self.l1, "l2": self.l2, "T_l": self.T_l},
            "optimizer": dataclasses.asdict(self.optimizer),
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def replace(self, **changes) -> RunConfig:
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self, text: str | None = None) -> None:
        def fail(section, key, msg):
            raise ConfigError(_located(text, section, key, msg))

        if self.model not in MODEL_DEFAULTS:
            fail("model", "name", f"unknown model {self.model!r}; choose from {sorted(MODEL_DEFAULTS)}")
        for key in self.params:
            if key not in MODEL_DEFAULTS[self.model]:
                fail("model", key, f"unknown parameter {key!r} for model {self.model}")
        min_L = 3 if self.model == "pxp" else 2
        if not min_L <= self.L <= MAX_L:
            fail("model", "L", f"L must lie in [{min_L}, {MAX_L}], got {self.L}")
        try:
            schedule_for_order(self.order)
        except ValueError as exc:
            fail("simulation", "order", str(exc))
        if self.dt <= 0:
            fail("simulation", "dt", "dt must be positive")
        if self.t_max < 0:
            fail("simulation", "t_max", "t_max must be non-negative")
        try:
            steps_for_time(self.t_max, self.dt)
        except ValueError:
            fail("simulation", "t_max", f"t_max={self.t_max} is not a multiple of dt={self.dt}")
        if self.stride < 1:
            fail("simulation", "stride", "stride must be at least 1")
        if any(not 1 <= s <= self.L for s in self.sites):
            fail("simulation", "sites", f"tracked sites must lie in [1, {self.L}]")
        if self.baseline < 0:
            fail("simulation", "baseline", "baseline size must be non-negative")
        if self.state.kind not in STATE_KINDS:
            fail("state", "kind", f"unknown state kind {self.state.kind!r}; choose from {list(STATE_KINDS)}")
        if self.state.kind == "product" and not (len(self.state.theta) == len(self.state.phi) == self.L):
            fail("state", "theta", f"product state needs theta and phi of length {self.L}")
        if self.state.kind == "params" and not self.state.path:
            fail("state", "path", "state kind 'params' needs a path")
        if self.l1 < 0 or self.l2 < 0:
            fail("loss", "l1" if self.l1 < 0 else "l2", "loss weights must be non-negative")
        if self.T_l <= 0:
            fail("loss", "T_l", "T_l must be positive")
        try:
            self.optimizer_config()
        except ValueError as exc:
            key = next((k for k in ("iters", "restarts") if k in str(exc)), "lr0")
            fail("optimizer", key, str(exc))
        if self.seed < 0:
            fail(None, "seed", "seed must be non-negative")


_SECTIONS = {
    None: {"seed": int, "out": str},
    "model": {"name": str, "L": int},
    "simulation": {"order": int, "dt": float, "t_max": float, "stride": int, "sites": list, "baseline": int},
    "state": {"kind": str, "theta": list, "phi": list, "path": str},
    "loss": {"l1": float, "l2": float, "T_l": float},
    "optimizer": {"iters": int, "lr0": float, "lr_min": float, "restarts": int},
}


def _line_of(text: str | None, section: str | None, key: str) -> int | None:
    if not text:
        return None
    current = None
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for n, line in enumerate(text.splitlines(), 1):
        header = re.match(r"^\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
        elif current == section and pattern.match(line):
            return n
    return None


def _located(text, section, key, msg) -> str:
    n = _line_of(text, section, key)
    where = f"[{section}] {key}" if section else key
    return f"line {n}: {where}: {msg}" if n else f"{where}: {msg}"


def _coerce(value, kind, text, section, key):
    ok = not isinstance(value, bool) and isinstance(value, int if kind is float else kind)
    if not (ok or isinstance(value, kind) and not isinstance(value, bool)):
        raise ConfigError(_located(text, section, key, f"expected {kind.__name__}, got {type(value).__name__}"))
    return float(value) if kind is float else value


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    top = {}
    sections = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in _SECTIONS:
                raise ConfigError(_located_section(text, key))
            sections[key] = value
        else:
            top[key] = value

    def read(section, table):
        schema = _SECTIONS[section]
        out, extra = {}, {}
        for key, value in table.items():
            if key in schema:
                out[key] = _coerce(value, schema[key], text, section, key)
            else:
                extra[key] = value
        return out, extra

    values, extra = read(None, top)
    if extra:
        key = next(iter(extra))
        raise ConfigError(_located(text, None, key, "unknown key"))
    kw: dict = dict(values)

    model, params = read("model", sections.get("model", {}))
    kw.update(model={"name": "heisenberg"} | model)
    name = kw["model"].get("name", "heisenberg")
    for key, value in params.items():
        if name in MODEL_DEFAULTS and key not in MODEL_DEFAULTS[name]:
            raise ConfigError(_located(text, "model", key, f"unknown parameter for model {name}"))
        params[key] = _coerce(value, float, text, "model", key)

    for section in ("simulation", "state", "loss", "optimizer"):
        table, extra = read(section, sections.get(section, {}))
        if extra:
            key = next(iter(extra))
            raise ConfigError(_located(text, section, key, "unknown key"))
        kw[section] = table

    sim = kw.pop("simulation")
    for key in ("theta", "phi"):
        if key in kw["state"]:
            kw["state"][key] = tuple(_coerce(v, float, text, "state", key) for v in kw["state"][key])
    if "sites" in sim:
        sim["sites"] = tuple(_coerce(v, int, text, "simulation", "sites") for v in sim["sites"])
    m = kw.pop("model")
    cfg = RunConfig(
        model=m["name"],
        L=m.get("L", RunConfig.L),
        params=params,
        state=StateSpec(**kw.pop("state")),
        optimizer=OptimizerSettings(**kw.pop("optimizer")),
        **sim,
        **kw.pop("loss"),
        **kw,
    )
    cfg.validate(text)
    return cfg


def _located_section(text, name) -> str:
    for n, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*\[{re.escape(name)}\]", line):
            return f"line {n}: unknown section [{name}]"
    return f"unknown section [{name}]"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(cfg.to_toml())
