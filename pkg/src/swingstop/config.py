"""Line-based run configuration: "key = value", '#' starts a comment.

Defaults are explicit and recorded in the run log returned alongside
the parsed config, so a run is fully reproducible from the file alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _as_bool(raw: str, key: str, lineno: int) -> bool:
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"line {lineno}: {key} expects a boolean, got {raw!r}")


# key -> (attribute, type tag, default); None default means key is required
KEYS: dict[str, tuple[str, str, object]] = {
    "run.mode": ("mode", "choice:discrete,continuous", "discrete"),
    "run.seed": ("seed", "int", 12345),
    "run.out": ("out", "str", "out"),
    "driver.kind": ("driver_kind", "choice:zero,linear,sup_kappa,inf_kappa,smooth_inf", "zero"),
    "driver.kappa": ("kappa", "float", 0.5),
    "driver.a": ("a", "float", 0.0),
    "driver.epsilon": ("epsilon", "float", 0.1),
    "horizon.T": ("horizon", "float", None),
    "lattice.steps": ("steps", "int", 256),
    "model.x0": ("x0", "float", 1.0),
    "model.b": ("b", "float", 0.0),
    "model.sigma": ("sigma", "float", 0.2),
    "payoff.kind": ("payoff_kind", "choice:call,put,linear,table", "call"),
    "payoff.strike": ("strike", "float", 1.0),
    "payoff.terminal_zero": ("terminal_zero", "bool", None),  # defaults by run.mode
    "payoff.table_path": ("table_path", "str", ""),
    "rights.L": ("n_rights", "int", 1),
    "rights.delta": ("delta", "float", 0.0),
    "pde.xmin": ("pde_xmin", "float", 0.0),  # 0 means derive from the model
    "pde.xmax": ("pde_xmax", "float", 0.0),
    "pde.space_nodes": ("pde_space_nodes", "int", 200),
    "pde.time_steps": ("pde_time_steps", "int", 200),
    "pde.quadrature_order": ("pde_quadrature_order", "int", 64),
    "pde.obstacle_variant": ("pde_obstacle_variant", "choice:direct,paper_printed", "direct"),
}


@dataclass
class RunConfig:
    mode: str = "discrete"
    seed: int = 12345
    out: str = "out"
    driver_kind: str = "zero"
    kappa: float = 0.5
    a: float = 0.0
    epsilon: float = 0.1
    horizon: float = 1.0
    steps: int = 256
    x0: float = 1.0
    b: float = 0.0
    sigma: float = 0.2
    payoff_kind: str = "call"
    strike: float = 1.0
    terminal_zero: bool = False
    table_path: str = ""
    n_rights: int = 1
    delta: float = 0.0
    pde_xmin: float = 0.0
    pde_xmax: float = 0.0
    pde_space_nodes: int = 200
    pde_time_steps: int = 200
    pde_quadrature_order: int = 64
    pde_obstacle_variant: str = "direct"
    log: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def delta_steps(self) -> int:
        return int(round(self.delta / self.dt))


def _convert(key: str, raw: str, tag: str, lineno: int):
    if tag == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} expects an integer, got {raw!r}") from None
    if tag == "float":
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} expects a number, got {raw!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"line {lineno}: {key} must be finite, got {raw!r}")
        return v
    if tag == "bool":
        return _as_bool(raw, key, lineno)
    if tag == "str":
        return raw
    if tag.startswith("choice:"):
        options = tag.split(":", 1)[1].split(",")
        if raw not in options:
            raise ConfigError(f"line {lineno}: {key} must be one of {options}, got {raw!r}")
        return raw
    raise AssertionError(f"bad type tag {tag}")


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration.

    Errors carry the offending line number; cross-field constraints are
    checked after defaults are applied:  (L-1)*delta <= T,
    kappa*sqrt(T/steps) < 1 for drivers that use kappa, and the
    refraction period must land exactly on the step grid.
    """
    seen: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        attr, tag, _default = KEYS[key]
        seen[key] = (_convert(key, val, tag, lineno), lineno)

    missing = [k for k, (_a, _t, default) in KEYS.items()
               if default is None and k not in seen and k != "payoff.terminal_zero"]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(sorted(missing))}")

    cfg = RunConfig()
    log: list[str] = []
    for key, (attr, tag, default) in KEYS.items():
        if key in seen:
            setattr(cfg, attr, seen[key][0])
            log.append(f"set      {key} = {seen[key][0]}")
        elif key == "payoff.terminal_zero":
            mode = seen.get("run.mode", ("discrete", 0))[0]
            value = mode == "continuous"
            setattr(cfg, attr, value)
            log.append(f"default  {key} = {value} (from run.mode)")
        elif default is not None:
            setattr(cfg, attr, default)
            log.append(f"default  {key} = {default}")
    cfg.log = log

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.horizon <= 0.0:
        raise ConfigError(f"horizon.T must be positive, got {cfg.horizon}")
    if cfg.steps < 1:
        raise ConfigError(f"lattice.steps must be >= 1, got {cfg.steps}")
    if cfg.n_rights < 1:
        raise ConfigError(f"rights.L must be >= 1, got {cfg.n_rights}")
    if cfg.delta < 0.0:
        raise ConfigError(f"rights.delta must be >= 0, got {cfg.delta}")
    if (cfg.n_rights - 1) * cfg.delta > cfg.horizon:
        raise ConfigError(
            f"(L-1)*delta = {(cfg.n_rights - 1) * cfg.delta} exceeds horizon {cfg.horizon}"
        )
    if cfg.x0 <= 0.0 or cfg.sigma <= 0.0:
        raise ConfigError("model.x0 and model.sigma must be positive")
    ds = cfg.delta / cfg.dt
    if abs(ds - round(ds)) > 1e-9 or abs(round(ds) * cfg.dt - cfg.delta) > 1e-12 * max(1.0, cfg.horizon):
        raise ConfigError(
            f"rights.delta = {cfg.delta} does not align with the grid "
            f"(dt = {cfg.dt}); refusing to round silently"
        )
    if cfg.driver_kind in ("sup_kappa", "inf_kappa", "smooth_inf"):
        if cfg.kappa * math.sqrt(cfg.dt) >= 1.0:
            raise ConfigError(
                f"kappa*sqrt(dt) = {cfg.kappa * math.sqrt(cfg.dt)} >= 1; "
                "increase lattice.steps or lower driver.kappa"
            )
    if cfg.driver_kind == "linear" and abs(cfg.a) * math.sqrt(cfg.dt) >= 1.0:
        raise ConfigError("'|a|*sqrt(dt) >= 1' for the linear driver")
    if cfg.driver_kind == "smooth_inf" and cfg.epsilon <= 0.0:
        raise ConfigError(f"driver.epsilon must be > 0, got {cfg.epsilon}")
    if cfg.payoff_kind == "table" and not cfg.table_path:
        raise ConfigError("payoff.kind = table requires payoff.table_path")
    if cfg.pde_space_nodes < 50 or cfg.pde_time_steps < 50:
        raise ConfigError("pde.space_nodes and pde.time_steps must both be >= 50")
    if cfg.pde_quadrature_order < 2:
        raise ConfigError("pde.quadrature_order must be >= 2")


def fmt17(x: float) -> str:
    """Decimal text with 17 significant digits (round-trips binary64)."""
    return f"{x:.17g}"
