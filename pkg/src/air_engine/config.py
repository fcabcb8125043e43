"""Run configuration: one JSON document, overridable from the command line.

The same key set is accepted verbatim by the CLI (``--set key=value``), the
JSON config file, and the HTTP service, so a sweep written against one
surface ports to the others unchanged. ``AIR_THREADS`` overrides the worker
pool size from the environment.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .errors import FormatError, UsageError
from .matrix import Activation

__all__ = ["ReinforcementConfig", "CONFIG_KEYS", "load_config", "parse_override"]

EPSILON_AUTO_FACTOR = 0.1  # "auto" epsilon = 0.1 * mean cost


@dataclass(frozen=True)
class ReinforcementConfig:
    top_q: int = 100
    tau: float = 0.06
    epsilon: float | str = "auto"
    sinkhorn_max_iter: int = 1000
    sinkhorn_tol: float = 1e-6
    layer_gate: tuple[int, int] = (26, 32)
    injection_mode: str = "all_rows"
    injection_activation: str = "silu"
    patch_count: int = 12
    uncertainty_threshold: float | None = None
    cost_space: str = "hidden"
    threads: int = 1
    seed: int = 0

    def validate(self) -> "ReinforcementConfig":
        if self.top_q < 1:
            raise UsageError(f"top_q must be >= 1, got {self.top_q}")
        if not _finite(self.tau):
            raise UsageError(f"tau must be finite, got {self.tau!r}")
        if self.epsilon != "auto":
            if not isinstance(self.epsilon, (int, float)) or not _finite(self.epsilon) or self.epsilon <= 0:
                raise UsageError(f"epsilon must be 'auto' or a positive number, got {self.epsilon!r}")
        if self.sinkhorn_max_iter < 1:
            raise UsageError("sinkhorn_max_iter must be >= 1")
        if not _finite(self.sinkhorn_tol) or self.sinkhorn_tol <= 0:
            raise UsageError("sinkhorn_tol must be positive")
        gate = self.layer_gate
        if len(gate) != 2 or gate[0] > gate[1] or gate[0] < 1:
            raise UsageError(f"layer_gate must be [start, end] with 1 <= start <= end, got {gate!r}")
        if self.injection_mode not in ("all_rows", "retained_rows", "off"):
            raise UsageError(f"injection_mode must be all_rows|retained_rows|off, got {self.injection_mode!r}")
        Activation.parse(self.injection_activation)
        if self.patch_count < 1:
            raise UsageError("patch_count must be >= 1")
        if self.uncertainty_threshold is not None and not _finite(self.uncertainty_threshold):
            raise UsageError("uncertainty_threshold must be finite or null")
        if self.cost_space not in ("hidden", "visual"):
            raise UsageError(f"cost_space must be hidden|visual, got {self.cost_space!r}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_gate"] = list(self.layer_gate)
        return d


CONFIG_KEYS = tuple(ReinforcementConfig.__dataclass_fields__)


def _finite(x) -> bool:
    try:
        return x == x and abs(float(x)) != float("inf")
    except (TypeError, ValueError):
        return False


def _coerce(key: str, value):
    if key == "layer_gate":
        if isinstance(value, str):
            parts = value.replace("-", ":").split(":")
            value = [int(p) for p in parts]
        return (int(value[0]), int(value[1]))
    if key == "epsilon":
        if value == "auto":
            return "auto"
        return float(value)
    if key == "uncertainty_threshold":
        if value is None or value == "none" or value == "null":
            return None
        return float(value)
    if key in ("top_q", "sinkhorn_max_iter", "patch_count", "threads", "seed"):
        return int(value)
    if key in ("tau", "sinkhorn_tol"):
        return float(value)
    return str(value)


def from_mapping(mapping: dict, base: ReinforcementConfig | None = None) -> ReinforcementConfig:
    """Build a config from a key/value mapping, rejecting unknown keys."""
    cfg = base or ReinforcementConfig()
    unknown = sorted(set(mapping) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(
            f"unknown config key(s) {', '.join(unknown)}; valid keys: {', '.join(CONFIG_KEYS)}"
        )
    try:
        coerced = {k: _coerce(k, v) for k, v in mapping.items()}
    except (TypeError, ValueError, IndexError) as exc:
        raise UsageError(f"bad config value: {exc}") from None
    return replace(cfg, **coerced).validate()


def load_config(path=None, overrides: dict | None = None) -> ReinforcementConfig:
    """Load JSON config (optional), apply overrides, then the AIR_THREADS env var."""
    cfg = ReinforcementConfig()
    if path is not None:
        try:
            raw = Path(path).read_text()
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from None
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON in {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise FormatError(f"config {path} must hold a JSON object")
        cfg = from_mapping(doc, cfg)
    if overrides:
        cfg = from_mapping(overrides, cfg)
    env_threads = os.environ.get("AIR_THREADS")
    if env_threads is not None:
        try:
            cfg = replace(cfg, threads=int(env_threads)).validate()
        except ValueError:
            raise UsageError(f"AIR_THREADS must be an integer, got {env_threads!r}") from None
    return cfg


def parse_override(text: str) -> tuple[str, str]:
    """Split a ``key=value`` CLI override."""
    if "=" not in text:
        raise UsageError(f"override must look like key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()
