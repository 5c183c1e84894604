"""Flat ``key=value`` study configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import default_levels


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based, 0 when not tied to a line."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class StudyConfig:
    beta1: float = 1.0
    beta2: float = 1.0
    a1: float = 0.0
    a2: float = 0.0
    S: float = 1.0
    gamma0: float = 0.25
    levels: list = field(default_factory=lambda: default_levels(5))
    diagonal: str = "NE"
    endpoint_dofs: bool = False
    local_gamma: bool = False
    average: str = "weighted"
    beta_scaled: bool = True
    output: str | None = None
    format: str = "csv"

    def validate(self) -> "StudyConfig":
        for name in ("beta1", "beta2", "a1", "a2", "S", "gamma0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.beta1 <= 0 or self.beta2 <= 0:
            raise ConfigError("beta1 and beta2 must be positive")
        if self.a1 < 0 or self.a2 < 0:
            raise ConfigError("a1 and a2 must be non-negative")
        if not 0.0 <= self.S <= 1.0:
            raise ConfigError("S must lie in [0, 1]")
        if self.gamma0 <= 0:
            raise ConfigError("gamma0 must be positive")
        if not self.levels:
            raise ConfigError("levels must be non-empty")
        for h1, h2 in self.levels:
            _check_cell_size(h1)
            _check_cell_size(h2)
        if self.diagonal not in ("NE", "NW"):
            raise ConfigError("diagonal must be NE or NW")
        if self.average not in ("arithmetic", "weighted"):
            raise ConfigError("average must be arithmetic or weighted")
        if self.format not in ("csv", "markdown", "both"):
            raise ConfigError("format must be csv, markdown or both")
        return self


def _check_cell_size(h: float, line: int = 0) -> None:
    # subdomains are 1/2 wide, so h = 1/n needs n even
    n = 1.0 / h if h > 0 else 0.0
    if h <= 0 or abs(n - round(n)) > 1e-9 * n or round(n) % 2:
        raise ConfigError(f"cell size {h!r} is not of the form 1/n with n even", line)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_h(text: str) -> float:
    return float(Fraction(text.strip()))


def _parse_levels(text: str):
    text = text.strip()
    if ":" not in text:
        count = int(text)
        if count < 1:
            raise ValueError("level count must be positive")
        return default_levels(count)
    pairs = []
    for item in text.split(","):
        left, right = item.split(":")
        pairs.append((_parse_h(left), _parse_h(right)))
    return pairs


_PARSERS = {
    "beta1": float, "beta2": float, "a1": float, "a2": float, "S": float, "gamma0": float,
    "levels": _parse_levels, "diagonal": str.upper, "endpoint_dofs": _parse_bool,
    "local_gamma": _parse_bool, "average": str.lower, "beta_scaled": _parse_bool,
    "output": str, "format": str.lower,
}


def parse_config(source: str) -> StudyConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment.

    ``levels`` is either a count of halvings from ``(1/4, 1/6)`` or an
    explicit list ``h1:h2, h1:h2, ...`` with fractions such as ``1/8:1/12``.
    """
    cfg = StudyConfig()
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            parsed = _PARSERS[key](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})", lineno) from None
        if isinstance(parsed, float) and not math.isfinite(parsed):
            raise ConfigError(f"{key} must be finite", lineno)
        if key == "levels":
            for h1, h2 in parsed:
                _check_cell_size(h1, lineno)
                _check_cell_size(h2, lineno)
        setattr(cfg, key, parsed)
    return cfg.validate()
