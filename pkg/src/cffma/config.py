"""Model/training configuration and its ``key = value`` text form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .signal import StftConfig

ABLATIONS = {
    "full": {},
    "i": {"use_mscff": False, "use_rhma": False},
    "ii": {"use_rhma": False},
    "iii": {"use_mscff": False, "use_mhsa": False},
    "iv": {"use_mscff": False, "use_scta": False},
    "v": {"use_mscff": False},
}


@dataclass
class ModelConfig:
    ssl_dim: int = 768
    ssl_layers: int = 13
    d_model: int = 512
    n_heads: int = 8
    d_ff: int = 2048
    n_rhma: int = 2
    sca_ratio: int = 8
    stft: StftConfig = field(default_factory=StftConfig)
    use_mscff: bool = True
    use_rhma: bool = True
    use_mhsa: bool = True
    use_scta: bool = True
    input_compression: str = "none"
    identity_mask: bool = False
    lam_mag: float = 1.0
    lam_sisnr: float = 1.0
    lr: float = 5e-4
    lr_floor: float = 0.1
    warmup_steps: int = 500
    steps: int = 1000
    batch: int = 16
    segment_s: float = 2.56
    grad_clip: float = 0.0
    seed: int = 0
    ssl_seed: int = 1234

    def __post_init__(self):
        self.validate()

    @property
    def n_bins(self) -> int:
        return self.stft.n_bins

    def validate(self) -> None:
        for name in ("ssl_dim", "ssl_layers", "d_model", "n_heads", "d_ff", "sca_ratio", "batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_rhma < 0 or self.steps < 0 or self.warmup_steps < 0:
            raise ConfigError("n_rhma, steps and warmup_steps must be >= 0")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % self.sca_ratio:
            raise ConfigError(f"sca_ratio={self.sca_ratio} does not divide d_model={self.d_model}")
        if not self.use_rhma and not (self.use_mhsa and self.use_scta):
            raise ConfigError("use_mhsa/use_scta only apply when use_rhma is enabled")
        if self.input_compression not in ("none", "sqrt"):
            raise ConfigError(f"input_compression must be 'none' or 'sqrt', got {self.input_compression!r}")
        if self.segment_s <= 0 or self.lr <= 0:
            raise ConfigError("segment_s and lr must be positive")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        """Small configuration for tests: D=16, d_model=16, F=9 (16-sample FFT)."""
        base = dict(ssl_dim=16, ssl_layers=4, d_model=16, n_heads=2, d_ff=64, sca_ratio=2,
                    stft=StftConfig(16, 16, 8), warmup_steps=20, steps=300, batch=4)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """Tiny widths with the full 400/400/160 STFT, for training on a laptop CPU."""
        base = dict(stft=StftConfig(), lr=3e-3)
        base.update(overrides)
        return cls.tiny(**base)

    @classmethod
    def ablation(cls, row: str, base: "ModelConfig | None" = None) -> "ModelConfig":
        if row not in ABLATIONS:
            raise ConfigError(f"unknown ablation row {row!r}; choose from {sorted(ABLATIONS)}")
        return (base or cls()).replace(**ABLATIONS[row])

    # -- text form -------------------------------------------------------
    def to_dict(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, StftConfig):
                for sf in fields(StftConfig):
                    out[f"stft.{sf.name}"] = getattr(value, sf.name)
            else:
                out[f.name] = value
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "ModelConfig | None" = None) -> "ModelConfig":
        """Build from string values over ``base``; unknown keys are rejected."""
        base = base or cls()
        current = base.to_dict()
        unknown = sorted(set(values) - set(current))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(current)
        for key, raw in values.items():
            merged[key] = _parse(raw, type(current[key]), key)
        stft = StftConfig(**{k[5:]: v for k, v in merged.items() if k.startswith("stft.")})
        plain = {k: v for k, v in merged.items() if not k.startswith("stft.")}
        return cls(stft=stft, **plain)

    @classmethod
    def from_text(cls, text: str, base: "ModelConfig | None" = None) -> "ModelConfig":
        return cls.from_mapping(parse_kv(text), base)


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw, kind: type, key: str):
    if not isinstance(raw, str):
        return kind(raw)
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
