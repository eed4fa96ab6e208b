"""Flat ``key=value`` run configuration."""
from __future__ import annotations

import shlex
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .solver import Scheme


class ConfigError(ValueError):
    pass


MODES = ("convergence", "spinodal", "single")
DT_RULES = ("h^{k+1}", "h^{k+3}", "h", "h^2")
SOURCE_MODES = ("consistent", "continuous")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "convergence"
    k: int = 0
    scheme: Scheme = Scheme.FULLY_IMPLICIT
    eps: float = 1.0
    T: float = 1.0
    dt: Optional[float] = None
    dt_rule: Optional[str] = "h^{k+1}"
    levels: tuple = (4, 8, 16, 32, 64)
    newton_atol: float = 1e-10
    newton_maxit: int = 30
    quad_bump: int = 0
    out: str = "out"
    seed: int = 0
    snapshot_every: int = 0
    sources: str = "consistent"
    plots: bool = True

    def as_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Scheme):
                v = v.value
            elif isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "none"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @property
    def n(self) -> int:
        """Mesh subdivisions for single-level modes."""
        return self.levels[0]


MODE_DEFAULTS = {
    "convergence": {},
    "single": {"levels": (16,)},
    # demo values chosen for visible coarsening in a few minutes, not from a study
    "spinodal": {"eps": 0.05, "levels": (64,), "k": 1, "dt": 1e-4, "dt_rule": None,
                 "T": 0.05, "scheme": Scheme.CONVEX_SPLITTING, "snapshot_every": 100},
}


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"not an integer: {v!r}")
    return int(f)


def _levels(v):
    out = tuple(_int(x) for x in str(v).replace(";", ",").split(",") if x.strip())
    if not out:
        raise ValueError("empty level list")
    return out


def _dt_rule(v):
    s = str(v).replace(" ", "").replace("(", "{").replace(")", "}")
    if s.lower() == "none":
        return None
    if s not in DT_RULES:
        raise ValueError(f"unknown dt rule {v!r}; expected one of {', '.join(DT_RULES)}")
    return s


def _dt(v):
    if str(v).strip().lower() == "none":
        return None
    return float(v)


PARSERS = {
    "mode": str, "k": _int, "scheme": Scheme.parse, "eps": float, "T": float, "dt": _dt,
    "dt_rule": _dt_rule, "levels": _levels, "newton_atol": float, "newton_maxit": _int,
    "quad_bump": _int, "out": str, "seed": _int, "snapshot_every": _int,
    "sources": str, "plots": _bool,
}
ALIASES = {"epsilon": "eps", "t": "T", "final_time": "T", "n": "levels", "output": "out",
           "outdir": "out", "dt-rule": "dt_rule", "tol": "newton_atol", "maxit": "newton_maxit"}


def tokenize(text: str) -> list[tuple[str, str]]:
    pairs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for tok in shlex.split(line):
            if "=" not in tok:
                raise ConfigError(f"expected key=value, got {tok!r}")
            key, val = tok.split("=", 1)
            pairs.append((key.strip(), val.strip()))
    return pairs


def parse_config(text: str = "", overrides: Optional[dict] = None) -> RunConfig:
    """Parse ``key=value`` text (whitespace or newline separated) plus
    already-split overrides (e.g. from command-line flags; they win)."""
    raw: dict[str, str] = {}
    for key, val in tokenize(text):
        raw[ALIASES.get(key, key)] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[ALIASES.get(key, key)] = str(val)

    unknown = sorted(set(raw) - set(PARSERS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")

    values = {}
    for key, val in raw.items():
        try:
            values[key] = PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"invalid value for {key}: {exc}") from None

    mode = values.get("mode", RunConfig.mode)
    if mode not in MODES:
        raise ConfigError(f"invalid value for mode: {mode!r}; expected one of {', '.join(MODES)}")

    if values.get("dt") is not None and values.get("dt_rule") is not None:
        raise ConfigError("dt and dt_rule are mutually exclusive")

    base = dict(MODE_DEFAULTS[mode])
    if "dt" in values and values["dt"] is not None:
        base["dt_rule"] = None
    if "dt_rule" in values and values["dt_rule"] is not None:
        base["dt"] = None
    base.update(values)
    cfg = replace(RunConfig(), **base)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    def bad(msg):
        raise ConfigError(msg)

    if cfg.k not in (0, 1, 2):
        bad(f"k must be 0, 1 or 2, got {cfg.k}")
    if not cfg.eps > 0:
        bad(f"eps must be positive, got {cfg.eps}")
    if not cfg.T > 0:
        bad(f"T must be positive, got {cfg.T}")
    if cfg.dt is not None and not cfg.dt > 0:
        bad(f"dt must be positive, got {cfg.dt}")
    if cfg.dt is None and cfg.dt_rule is None:
        bad("either dt or dt_rule must be set")
    if any(n < 1 for n in cfg.levels):
        bad(f"levels must be positive, got {cfg.levels}")
    if any(b <= a for a, b in zip(cfg.levels, cfg.levels[1:])):
        bad(f"levels must be strictly increasing, got {cfg.levels}")
    if not cfg.newton_atol > 0:
        bad("newton_atol must be positive")
    if cfg.newton_maxit < 1:
        bad("newton_maxit must be >= 1")
    if cfg.quad_bump < 0:
        bad("quad_bump must be >= 0")
    if cfg.snapshot_every < 0:
        bad("snapshot_every must be >= 0")
    if cfg.sources not in SOURCE_MODES:
        bad(f"sources must be one of {', '.join(SOURCE_MODES)}, got {cfg.sources!r}")
    if cfg.dt is not None:
        N = round(cfg.T / cfg.dt)
        if N < 1 or abs(N * cfg.dt - cfg.T) > 1e-12 * max(1.0, cfg.T):
            bad(f"T={cfg.T} is not an integer multiple of dt={cfg.dt}")


def config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["scheme"] = cfg.scheme.value
    return d
