"""Run configuration: plain-text `key = value` files with strict parsing.

Unknown keys are rejected (no silent defaults for typos); missing keys fall
back to documented defaults.  Lines starting with `#` and blank lines are
ignored; inline `#` comments are allowed after the value.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Raised for malformed config files or invalid parameter values."""


MODES = ("run", "mc", "convergence", "selftest")
PHI0_KINDS = ("constant", "cosine", "droplet")


@dataclass
class RunConfig:
    """All tunable parameters of a simulation run."""

    nx: int = 8
    T_final: float = 0.25
    n_steps: int = 100
    gamma: float = 1.0
    gamma_fs_1: float = 1.0
    gamma_fs_2: float = 2.0
    noise_scale: float = 0.1
    sigma_decay: float = 2.0
    k_max_cap: int = 8
    rho_kind: str = "constant"
    rho0: float = 1.0
    rv_kind: str = "gaussian"
    phi0_kind: str = "cosine"
    phi0_value: float = 0.0
    phi0_center_x: float = 0.5
    phi0_center_y: float = 0.5
    phi0_radius: float = 0.25
    phi0_width: float = 0.1
    paths: int = 4
    levels: int = 4
    seed: int = 1234
    snapshot_stride: int = 0
    out_dir: str = "out"
    mode: str = "run"

    @property
    def tau(self) -> float:
        return self.T_final / self.n_steps

    def validate(self) -> None:
        if self.nx < 1:
            raise ConfigError(f"nx must be >= 1, got {self.nx}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.T_final <= 0:
            raise ConfigError(f"T_final must be positive, got {self.T_final}")
        if self.tau >= 1.0:
            raise ConfigError(f"tau = T_final/n_steps must be < 1, got {self.tau}")
        if self.paths < 1:
            raise ConfigError(f"paths must be >= 1, got {self.paths}")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.snapshot_stride < 0:
            raise ConfigError(f"snapshot_stride must be >= 0, got {self.snapshot_stride}")
        if self.sigma_decay < 2.0:
            raise ConfigError(f"sigma_decay must be >= 2, got {self.sigma_decay}")
        if self.k_max_cap < 0:
            raise ConfigError(f"k_max_cap must be >= 0, got {self.k_max_cap}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.phi0_kind not in PHI0_KINDS:
            raise ConfigError(f"phi0_kind must be one of {PHI0_KINDS}, got {self.phi0_kind!r}")
        if self.rho_kind not in ("constant", "rational"):
            raise ConfigError(f"rho_kind must be constant or rational, got {self.rho_kind!r}")
        if self.rv_kind not in ("gaussian", "rademacher"):
            raise ConfigError(f"rv_kind must be gaussian or rademacher, got {self.rv_kind!r}")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, lineno: int):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: cannot parse {key} = {raw!r}: {exc}") from exc


def parse_config(path: str) -> RunConfig:
    """Parse a config file; unknown keys and malformed lines are errors."""
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            setattr(cfg, key, _convert(key, raw, lineno))
    cfg.validate()
    return cfg


def write_config(cfg: RunConfig, path: str) -> None:
    """Write the config in the same `key = value` format (round-trippable)."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, float):
            lines.append(f"{f.name} = {value:.17g}")
        else:
            lines.append(f"{f.name} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
