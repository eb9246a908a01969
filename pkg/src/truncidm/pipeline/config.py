from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..dfa import DFAConfig
from ..encoder import EncoderConfig
from ..errors import ConfigError
from ..tdr import TDRConfig


@dataclass(frozen=True)
class Ablation:
    disable_dfa: bool = False
    disable_tdr: bool = False
    disable_mask: bool = False
    disable_refinement: bool = False

    # disable_refinement switches off both refinement stages
    @property
    def dfa_off(self):
        return self.disable_dfa or self.disable_refinement

    @property
    def tdr_off(self):
        return self.disable_tdr or self.disable_refinement

    @property
    def mask_off(self):
        return self.disable_mask or self.disable_refinement


VARIANTS = {
    "full": Ablation(),
    "no_dfa": Ablation(disable_dfa=True),
    "no_tdr": Ablation(disable_tdr=True),
    "no_mask": Ablation(disable_mask=True),
    "no_refine": Ablation(disable_refinement=True),
}


def variant(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class PipelineConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    dfa: DFAConfig = field(default_factory=DFAConfig)
    tdr: TDRConfig = field(default_factory=TDRConfig)
    ablation: Ablation = field(default_factory=Ablation)
    loss: str = "l1"
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 8
    windows_per_episode: int = 8
    segment_windows: int = 1
    augment_shift: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.loss != "l1":
            raise ConfigError(f"unsupported loss {self.loss!r} (only 'l1')")
        if self.lr < 0 or self.epochs < 0 or self.batch_size < 1 or self.windows_per_episode < 1 \
                or self.segment_windows < 1:
            raise ConfigError("lr/epochs must be non-negative; batch_size, windows_per_episode, segment_windows positive")
        if self.augment_shift < 0:
            raise ConfigError("augment_shift must be non-negative")

    @property
    def window(self):
        return self.tdr.window

    def with_variant(self, name):
        return replace(self, ablation=variant(name))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        subs = {"encoder": EncoderConfig, "dfa": DFAConfig, "tdr": TDRConfig, "ablation": Ablation}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        try:
            for key, typ in subs.items():
                if key in d:
                    sub = {k: tuple(v) if isinstance(v, list) else v for k, v in dict(d[key]).items()}
                    d[key] = typ(**sub)
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def read_config(path):
    """Load a JSON config file holding optional ``world`` and ``pipeline`` sections."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - {"world", "pipeline"}
    if unknown:
        raise ConfigError(f"config file {path}: unknown sections {sorted(unknown)}")
    return raw
