"""Run files: ``key = value`` settings resolved into a validated RunConfig."""
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import config
from .contours import NORMS, Tiling
from .errors import ConfigError, ParameterDomainError
from .geometry import SURFACE_CONVENTIONS
from .model import QuermassParams, TileBox, Window
from .pressure import DEFAULT_OFFSET_SAMPLES
from .sampler import BoundaryCondition

logger = logging.getLogger(__name__)

BOOLEAN_WORDS = {"true": True, "yes": True, "on": True, "1": True,
                 "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class GridSpec:
    """Activities or reduced activities to visit."""

    kind: str
    values: Tuple[float, ...]

    def s_values(self, beta: float) -> np.ndarray:
        values = np.asarray(self.values, dtype=float)
        return values if self.kind == "s" else values / beta

    def z_values(self, beta: float) -> np.ndarray:
        values = np.asarray(self.values, dtype=float)
        return values if self.kind == "z" else values * beta

    def to_string(self) -> str:
        return f"{self.kind}:" + ",".join(repr(float(v)) for v in self.values)


def parse_grid(text: str) -> GridSpec:
    """Parse ``s:start:stop:count`` or ``z:v1,v2,...`` (either kind, either form)."""
    kind, sep, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    if not sep or kind not in ("s", "z"):
        raise ValueError(f"grid must start with 's:' or 'z:', got '{text}'")
    parts = rest.split(":")
    if len(parts) == 3:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        values = np.linspace(start, stop, count) if count > 1 else np.array([start])
    elif len(parts) == 1:
        values = np.array([float(v) for v in parts[0].split(",") if v.strip()])
    else:
        raise ValueError(f"grid must be '{kind}:start:stop:count' or '{kind}:v1,v2,...'")
    if len(values) == 0:
        raise ValueError("grid is empty")
    if np.any(values <= 0):
        raise ValueError("grid values must be positive")
    return GridSpec(kind, tuple(float(v) for v in values))


def parse_window(text: str) -> Tuple[int, int]:
    """``N`` or ``NxM`` tiles."""
    parts = text.lower().replace("×", "x").split("x")
    if len(parts) == 1:
        n = int(parts[0])
        return n, n
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise ValueError(f"window must be 'N' or 'NxM', got '{text}'")


def _parse_bool(text: str) -> bool:
    try:
        return BOOLEAN_WORDS[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got '{text}'") from None


def _optional(cast):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else cast(text)
    return parse


PARSERS = {
    "theta1": float, "theta2": float, "beta": float, "z": _optional(float), "s": _optional(float),
    "r0": float, "r1": float, "radius_law": str.lower,
    "delta": _optional(float), "l": _optional(int), "window": parse_window,
    "boundary": str.lower, "sweeps": int, "burn_in": int, "thin": int,
    "steps_per_sweep": _optional(int), "grid": _optional(parse_grid), "snapshot_every": int,
    "pressure": _parse_bool, "theta1_delta": _optional(float),
    "correctness_norm": str.lower, "surface_convention": str.lower,
    "tau": _optional(float), "l0": _optional(int), "lmax": int, "size_cap": int,
    "dimer_weight": float, "i_gamma_samples": int, "offset_samples": int,
    "seed": int, "threads": int, "out": str,
}
# run-file key -> RunConfig attribute
ATTRIBUTES = {"r0": "R0", "r1": "R1", "l": "L"}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one command."""

    theta1: float = 0.0
    theta2: float = 0.0
    beta: float = 1.0
    z: Optional[float] = None
    s: Optional[float] = None
    R0: float = 1.0
    R1: float = 1.0
    radius_law: str = "point"
    delta: Optional[float] = None
    L: Optional[int] = None
    window: Tuple[int, int] = (10, 10)
    boundary: str = "free"
    sweeps: int = 1000
    burn_in: int = 100
    thin: int = 1
    steps_per_sweep: Optional[int] = None
    grid: Optional[GridSpec] = None
    snapshot_every: int = 0
    pressure: bool = False
    theta1_delta: Optional[float] = None
    correctness_norm: str = "euclidean"
    surface_convention: str = "boundary"
    tau: Optional[float] = None
    l0: Optional[int] = None
    lmax: int = 8
    size_cap: int = 6
    dimer_weight: float = 0.01
    i_gamma_samples: int = 64
    offset_samples: int = DEFAULT_OFFSET_SAMPLES
    seed: int = config.DEFAULT_SEED
    threads: int = config.DEFAULT_THREADS
    out: str = config.OUTPUT_DIR
    source: str = field(default="<defaults>", compare=False)
    lines: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    # Resolution

    def params(self) -> QuermassParams:
        if self.z is not None and self.s is not None:
            self._fail("give either z or s, not both", "s")
        if self.s is not None:
            z = self.s * self.beta
        elif self.z is not None:
            z = self.z
        else:
            z = 1.0
        try:
            return QuermassParams(self.theta1, self.theta2, self.beta, z, self.R0, self.R1, self.radius_law)
        except ParameterDomainError as e:
            self._fail(str(e), _field_of(str(e)))

    def tiling(self) -> Tiling:
        return Tiling.for_params(self.params(), self.delta, self.L, self.correctness_norm)

    def tile_box(self) -> TileBox:
        return TileBox.centered(*self.window)

    def window_geometry(self) -> Window:
        return self.tiling().window(self.tile_box())

    def boundary_condition(self) -> BoundaryCondition:
        return BoundaryCondition.parse(self.boundary)

    def _fail(self, message: str, key: Optional[str] = None):
        key = key.lower() if key else None
        raise ConfigError(message, self.source, self.lines.get(key) if key else None, key)

    def validate(self) -> "RunConfig":
        """Check every field before any computation starts.

        Raises:
            ConfigError: For malformed or out-of-range settings
            ParameterDomainError: If delta or L break the standing assumptions
        """
        self.params()
        checks = [
            ("sweeps", self.sweeps >= 1, "must be >= 1"),
            ("burn_in", self.burn_in >= 0, "must be >= 0"),
            ("thin", self.thin >= 1, "must be >= 1"),
            ("snapshot_every", self.snapshot_every >= 0, "must be >= 0"),
            ("threads", self.threads >= 1, "must be >= 1"),
            ("window", min(self.window) >= 1, "must hold at least one tile"),
            ("boundary", self.boundary in ("free", "wired0", "wired1"), "must be free, wired0 or wired1"),
            ("correctness_norm", self.correctness_norm in NORMS, f"must be one of {NORMS}"),
            ("surface_convention", self.surface_convention in SURFACE_CONVENTIONS,
             f"must be one of {SURFACE_CONVENTIONS}"),
            ("lmax", self.lmax >= 1, "must be >= 1"),
            ("size_cap", self.size_cap >= 1, "must be >= 1"),
            ("dimer_weight", 0 < self.dimer_weight < 0.25, "must lie in (0, 0.25)"),
            ("i_gamma_samples", self.i_gamma_samples == 0 or self.i_gamma_samples >= 2, "must be 0 or >= 2"),
            ("offset_samples", self.offset_samples >= 2, "must be >= 2"),
            ("steps_per_sweep", self.steps_per_sweep is None or self.steps_per_sweep >= 1, "must be >= 1"),
            ("delta", self.delta is None or self.delta > 0, "must be positive"),
        ]
        for key, ok, message in checks:
            if not ok:
                self._fail(message, key)
        if self.grid is not None and self.grid.kind == "s" and self.beta <= 0:
            self._fail("an s grid needs beta > 0", "grid")
        if self.tau is not None and not math.isfinite(self.tau):
            self._fail("must be finite", "tau")
        self.tiling()
        return self

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None,
                       threads: Optional[int] = None) -> "RunConfig":
        """Command-line flags win over the run file."""
        changes = {k: v for k, v in (("seed", seed), ("out", out), ("threads", threads)) if v is not None}
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("source", "lines")}
        data["window"] = f"{self.window[0]}x{self.window[1]}"
        data["grid"] = self.grid.to_string() if self.grid else None
        return data


def _field_of(message: str) -> Optional[str]:
    for key in ("theta2", "theta1", "beta", "radius_law", "R0", "R1", "z"):
        if message.startswith(key) or f" {key} " in f" {message} ":
            return key.lower()
    return None


def parse_run_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse a run file body.

    Raises:
        ConfigError: With the source, line number and key of the offending entry
    """
    values = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got '{raw.strip()}'", source, number)
        if key not in PARSERS:
            raise ConfigError("unknown key", source, number, key)
        if key in lines:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", source, number, key)
        try:
            values[ATTRIBUTES.get(key, key)] = PARSERS[key](value.strip())
        except ValueError as e:
            raise ConfigError(str(e), source, number, key) from None
        lines[key] = number
    if "z" in values and "s" in values:
        raise ConfigError("give either z or s, not both", source, lines["s"], "s")
    return RunConfig(**values, source=source, lines=lines)


def load_run_config(path: Optional[Union[str, Path]] = None, seed: Optional[int] = None,
                    out: Optional[str] = None, threads: Optional[int] = None) -> RunConfig:
    """Defaults, then the run file, then command-line overrides; validated.

    Raises:
        ConfigError: If the file is missing or invalid
    """
    if path is None:
        run = RunConfig()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError("run file not found", str(path))
        run = parse_run_text(path.read_text(), str(path))
    run = run.with_overrides(seed, out, threads)
    run.validate()
    logger.info(f"Loaded run configuration from {run.source}")
    return run


def run_config_from_dict(data: dict, source: str = "<header>") -> RunConfig:
    """Rebuild a RunConfig from its ``to_dict`` form (as embedded in outputs)."""
    text = "\n".join(f"{key} = {'none' if value is None else value}" for key, value in data.items()
                     if key.lower() in PARSERS or key in ("R0", "R1", "L"))
    return parse_run_text(text, source)
