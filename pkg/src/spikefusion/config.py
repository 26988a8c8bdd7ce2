"""Run configuration: flat ``key = value`` text with ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .alignment import POOL_MODES
from .encoding import GENERATOR_VARIANTS
from .errors import ConfigError
from .fusion import FUSION_KINDS

# file keys that do not match the dataclass attribute name
_KEY_ALIASES = {"lambda": "lam"}


@dataclass
class RunConfig:
    # architecture
    d: int = 1024
    t: int = 2
    generator: str = "repeat-ln"
    alignment: str = "biha"
    fusion: str = "scca"          # or "none" to train dual-stream only
    heads: int = 6
    alpha: float = 0.1
    ssa_scale: float = 0.125
    # neuron defaults
    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    surrogate_alpha: float = 2.0
    comb_tau: float | None = None
    # objective
    lam: float = 0.5
    temperature: float = 0.01
    # optimization
    batch: int = 160
    epochs: int = 35
    lr_encoder: float = 5e-4
    lr_fusion: float = 5e-3
    lr_decay_epochs: int = 15
    lr_decay_factor: float = 0.1
    weight_decay: float = 0.01
    val_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.d < 1 or self.t < 1:
            raise ConfigError(f"d and t must be >= 1 (got d={self.d}, t={self.t})")
        if self.generator not in GENERATOR_VARIANTS:
            raise ConfigError(
                f"unknown generator {self.generator!r}; "
                f"expected one of {GENERATOR_VARIANTS}"
            )
        if self.alignment not in POOL_MODES:
            raise ConfigError(
                f"unknown alignment mode {self.alignment!r}; "
                f"expected one of {POOL_MODES}"
            )
        if self.fusion != "none" and self.fusion not in FUSION_KINDS:
            raise ConfigError(
                f"unknown fusion kind {self.fusion!r}; expected one of "
                f"{FUSION_KINDS + ('none',)}"
            )
        if self.heads < 1:
            raise ConfigError(f"heads must be >= 1, got {self.heads}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.batch < 2:
            raise ConfigError(f"batch must be >= 2, got {self.batch}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_encoder <= 0 or self.lr_fusion <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.tau < 1.0:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.v_th <= self.v_reset:
            raise ConfigError(
                f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})"
            )
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(
                f"val_fraction must be in [0, 1), got {self.val_fraction}"
            )
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            key = "lambda" if f.name == "lam" else f.name
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    """Parse flat key=value config text into a validated RunConfig."""
    field_types = {f.name: f.type for f in fields(RunConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key not in field_types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        updates[key] = _coerce(key, value, field_types[key], lineno)
    return replace(RunConfig(), **updates).validate()


def _coerce(key: str, value: str, ftype: str, lineno: int):
    ftype = str(ftype)
    try:
        if "int" in ftype:
            return int(value)
        if "float" in ftype:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return value


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
