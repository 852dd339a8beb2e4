"""Flat ``key = value`` scenario files.

Lines are ``key = value``; ``#`` starts a comment. Every key is typed and
documented in :data:`KEYS` with its unit. Unknown keys, duplicates and
malformed values are rejected with the offending line number.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .kernel import KernelParams

SCENARIOS = ("general_1d", "shear_2d", "nearly_aligned", "metric_check")
PRESETS = ("steady", "smooth", "random", "shear", "nearly_aligned", "expansion", "metric_mode")

# key: (type, unit, help)
KEYS = {
    "scenario": (str, "-", "general_1d | shear_2d | nearly_aligned | metric_check"),
    "dim": (int, "-", "spatial dimension (1 or 2)"),
    "N": (int, "points/axis", "grid points per axis, power of two >= 8"),
    "alpha": (float, "-", "kernel singularity order in (0, 2)"),
    "tau": (float, "-", "topological exponent, 0 = metric kernel"),
    "r0": (float, "length", "kernel support radius"),
    "Lambda": (float, "1/time", "bump plateau height"),
    "kappa": (float, "-", "2D rhombus aperture in (0, 1)"),
    "preset": (str, "-", "initial data: " + ", ".join(PRESETS)),
    "amplitude": (float, "velocity", "velocity amplitude of the preset"),
    "rho_amp": (float, "density", "density variation of the preset"),
    "rho_mean": (float, "density", "background density"),
    "velocity": (float, "velocity", "constant drift velocity (steady preset)"),
    "wavenumber": (int, "1/length", "highest band-limited wavenumber"),
    "epsilon": (float, "velocity", "nearly aligned velocity size, <= 1e-2"),
    "r_scale": (float, "-", "nearly aligned data size: density wavenumber band"),
    "seed": (int, "-", "RNG seed for random data"),
    "cfl": (float, "-", "CFL number in (0, 1]"),
    "t_end": (float, "time", "final time"),
    "max_steps": (int, "steps", "step budget"),
    "dealias": (bool, "-", "2/3-rule dealiasing"),
    "diag_every": (int, "steps", "diagnostics cadence"),
    "m": (int, "-", "Sobolev index of the grand quantity"),
    "vacuum_threshold": (float, "density", "abort when min density falls to this value"),
    "e_residual": (bool, "-", "evaluate the e-equation residual in every record"),
    "checkpoint_dt": (float, "time", "flocking checkpoint interval"),
    "fit_t0": (float, "time", "start of the exponential fit window"),
    "output": (str, "path", "diagnostics CSV"),
    "summary": (str, "path", "key-value summary (default: <output>.summary)"),
}

_BOOL = {"true": True, "on": True, "yes": True, "1": True,
         "false": False, "off": False, "no": False, "0": False}


@dataclass
class ScenarioConfig:
    scenario: str = "general_1d"
    dim: int = 1
    N: int = 128
    alpha: float = 1.0
    tau: float = 1.0
    r0: float = 1.0
    Lambda: float = 1.0
    kappa: float = 0.5
    preset: str = "smooth"
    amplitude: float = 0.5
    rho_amp: float = 0.3
    rho_mean: float = 1.0
    velocity: float = 0.0
    wavenumber: int = 4
    epsilon: float = 1e-3
    r_scale: float = 3.0
    seed: int = 0
    cfl: float = 0.4
    t_end: float = 1.0
    max_steps: int = 1_000_000
    dealias: bool = True
    diag_every: int = 10
    m: int = 3
    vacuum_threshold: float = 1e-8
    e_residual: bool = True
    checkpoint_dt: float = 1.0
    fit_t0: float = 1.0
    output: str = "diagnostics.csv"
    summary: str = ""
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    def kernel_params(self) -> KernelParams:
        return KernelParams(self.alpha, self.tau, self.r0, self.Lambda, self.kappa)

    @property
    def summary_path(self) -> str:
        return self.summary or self.output + ".summary"

    def with_overrides(self, **kw) -> "ScenarioConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        cfg = ScenarioConfig(**data)
        validate(cfg)
        return cfg


def _convert(key: str, raw: str, line: int):
    typ = KEYS[key][0]
    try:
        if typ is bool:
            return _BOOL[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except (KeyError, ValueError):
        raise ConfigError(f"key '{key}' expects {typ.__name__}, got {raw!r}", line=line) from None


def parse_text(text: str) -> ScenarioConfig:
    values, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=no)
        key, val = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key '{key}'", line=no)
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (first set on line {lines[key]})", line=no)
        if not val:
            raise ConfigError(f"key '{key}' has no value", line=no)
        values[key] = _convert(key, val, no)
        lines[key] = no
    cfg = ScenarioConfig(**values, lines=lines)
    validate(cfg)
    return cfg


def load(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text)


def validate(cfg: ScenarioConfig) -> None:
    def fail(key, msg):
        raise ConfigError(msg, line=cfg.lines.get(key))

    if cfg.scenario not in SCENARIOS:
        fail("scenario", f"unknown scenario '{cfg.scenario}' (choose from {', '.join(SCENARIOS)})")
    if cfg.preset not in PRESETS:
        fail("preset", f"unknown preset '{cfg.preset}' (choose from {', '.join(PRESETS)})")
    if cfg.dim not in (1, 2):
        fail("dim", f"dim must be 1 or 2, got {cfg.dim}")
    if cfg.N < 8 or cfg.N & (cfg.N - 1):
        fail("N", f"N must be a power of two >= 8, got {cfg.N}")
    if cfg.scenario == "shear_2d" and cfg.dim != 2:
        fail("dim", "scenario shear_2d requires dim = 2")
    if cfg.scenario in ("general_1d", "nearly_aligned") and cfg.dim != 1:
        fail("dim", f"scenario {cfg.scenario} requires dim = 1")
    if cfg.scenario == "shear_2d" and cfg.preset != "shear":
        fail("preset", "scenario shear_2d requires preset = shear")
    if cfg.preset == "shear" and cfg.scenario != "shear_2d":
        fail("preset", "preset shear is only valid in scenario shear_2d")
    if cfg.scenario == "nearly_aligned" and cfg.preset != "nearly_aligned":
        fail("preset", "scenario nearly_aligned requires preset = nearly_aligned")
    if cfg.scenario == "metric_check" and cfg.tau != 0:
        fail("tau", "scenario metric_check requires tau = 0")
    if cfg.preset == "nearly_aligned" and not 0 < cfg.epsilon <= 1e-2:
        fail("epsilon", f"epsilon must lie in (0, 1e-2], got {cfg.epsilon}")
    if not 0 < cfg.cfl <= 1:
        fail("cfl", "cfl must lie in (0, 1]")
    if not cfg.t_end > 0:
        fail("t_end", "t_end must be positive")
    for key in ("max_steps", "diag_every", "wavenumber"):
        if getattr(cfg, key) < 1:
            fail(key, f"{key} must be >= 1")
    if cfg.m < 0:
        fail("m", "m must be >= 0")
    if not cfg.vacuum_threshold > 0:
        fail("vacuum_threshold", "vacuum_threshold must be positive")
    if not cfg.checkpoint_dt > 0:
        fail("checkpoint_dt", "checkpoint_dt must be positive")
    if not cfg.r_scale >= 1:
        fail("r_scale", "r_scale must be >= 1")
    try:
        cfg.kernel_params()
    except ValueError as exc:
        key = next((k for k in ("alpha", "tau", "r0", "Lambda", "kappa") if k in str(exc)), None)
        fail(key, str(exc))
    dx = 2 * 3.141592653589793 / cfg.N
    if cfg.r0 < 2 * dx:
        fail("r0", f"r0={cfg.r0} below two grid spacings ({2 * dx:.4g}); kernel unresolved")
    if cfg.r0 >= 3.141592653589793:
        fail("r0", "r0 must be smaller than half the torus side")


def render(cfg: ScenarioConfig) -> str:
    """Config text that parses back to ``cfg``."""
    out = []
    for f in fields(cfg):
        if f.name == "lines":
            continue
        v = getattr(cfg, f.name)
        if v == "":
            continue  # optional path left at its default
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
