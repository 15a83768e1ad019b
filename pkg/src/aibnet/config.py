"""Configuration containers, the flat ``key = value`` config-file format, and
validation shared by the library and the CLI."""

import dataclasses
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


@dataclass
class ModelConfig:
    # Channel width at scale i (1-based) is base_channels * 2**(i-1).
    base_channels: int = 16
    blocks_per_level: int = 8
    sub_decoders: int = 2
    n_masks: int = 4
    scales: int = 5
    ffn_expansion: int = 2
    decoupler_kernel: int = 3
    enc_blocks_per_level: int = 1
    enable_sfem: bool = True
    enable_hfs: bool = True
    hfs_every_scale: bool = True
    alpha_init: float = 0.8
    # "expand": 1x1 proj widens C -> 5C and each attention part keeps C channels.
    # "narrow": proj stays at C and the five parts get C/5 channels each.
    sfem_split_mode: str = "expand"
    # "exclude": dropped attention scores leave the softmax support entirely.
    # "zero": dropped scores are set to 0 before the softmax.
    mask_mode: str = "exclude"
    # Convolution bias policy: every conv carries a bias except the SFEM output
    # projection, which stays bias-free so a zero attention product maps to an
    # exactly-zero branch output.

    def width(self, scale: int) -> int:
        """Channel count at 1-based scale index."""
        return self.base_channels * 2 ** (scale - 1)


@dataclass
class TrainConfig:
    lr_init: float = 2e-4
    lr_final: float = 1e-7
    schedule: str = "cosine"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch: int = 32
    patch: int = 256
    total_iters: int = 400_000
    # 0 = derive per-stage budgets from total_iters: pretrain_fraction goes to
    # stage 0, the remainder is split equally across the sub-decoder stages.
    iters_per_stage: int = 0
    pretrain_fraction: float = 0.2
    pretrain_iters: int = 0
    stage: int = 0
    seed: int = 0
    precision: str = "float32"
    deterministic: bool = False
    grad_clip: float = 1.0
    ckpt_every: int = 500
    log_every: int = 50
    augment: bool = True


@dataclass
class LossConfig:
    epsilon: float = 1e-3
    delta: float = 0.05
    lambda_f: float = 0.1
    # "mean": per-pixel mean reductions (resolution independent).
    # "global-norm": single norm over the whole residual per sample.
    loss_form: str = "mean"


@dataclass
class Config:
    """Bundle of all three sections, addressed by a flat key namespace."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def sections(self):
        return (self.model, self.train, self.loss)

    def to_dict(self) -> dict:
        out = {}
        for section in self.sections():
            out.update(dataclasses.asdict(section))
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "Config":
        cfg = cls()
        for key, value in values.items():
            set_key(cfg, key, value)
        return cfg


def _coerce(key: str, raw, target_type):
    if isinstance(raw, target_type) and not (target_type is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if target_type is int:
            # accept "4e5" style integers
            val = float(text)
            if val != int(val):
                raise ValueError(text)
            return int(val)
        if target_type is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for '{key}': {raw!r} (expected {target_type.__name__})")


def set_key(cfg: Config, key: str, value) -> None:
    """Assign a flat config key, coercing the value to the field's type."""
    for section in cfg.sections():
        for f in dataclasses.fields(section):
            if f.name == key:
                setattr(section, key, _coerce(key, value, f.type))
                return
    raise ConfigError(f"unknown config key '{key}'")


def load_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` text file into a dict (no coercion)."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def build_config(config_path: str | None = None, overrides: dict | None = None) -> Config:
    """Layer a config file (optional) and explicit overrides over the defaults."""
    cfg = Config()
    if config_path is not None:
        for key, value in load_config_file(config_path).items():
            set_key(cfg, key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            set_key(cfg, key, value)
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    m, t, l = cfg.model, cfg.train, cfg.loss
    if m.base_channels < 1:
        raise ConfigError("base_channels must be >= 1")
    if m.blocks_per_level < 1:
        raise ConfigError("blocks_per_level must be >= 1")
    if m.sub_decoders < 1:
        raise ConfigError("sub_decoders must be >= 1")
    if m.scales != 5:
        raise ConfigError("scales is fixed at 5")
    if m.n_masks < 0:
        raise ConfigError("n_masks must be >= 0")
    if m.ffn_expansion < 1:
        raise ConfigError("ffn_expansion must be >= 1")
    if m.decoupler_kernel < 1 or m.decoupler_kernel % 2 == 0:
        raise ConfigError("decoupler_kernel must be odd and >= 1")
    if m.enc_blocks_per_level < 1:
        raise ConfigError("enc_blocks_per_level must be >= 1")
    if m.sfem_split_mode not in ("expand", "narrow"):
        raise ConfigError("sfem_split_mode must be 'expand' or 'narrow'")
    if m.sfem_split_mode == "narrow" and m.base_channels % 5:
        raise ConfigError("sfem_split_mode 'narrow' needs base_channels divisible by 5")
    if m.mask_mode not in ("exclude", "zero"):
        raise ConfigError("mask_mode must be 'exclude' or 'zero'")
    if not 0.0 <= t.lr_final <= t.lr_init:
        raise ConfigError("need 0 <= lr_final <= lr_init")
    if t.schedule != "cosine":
        raise ConfigError("schedule: only 'cosine' is supported")
    if t.batch < 1 or t.patch < 1 or t.total_iters < 1:
        raise ConfigError("batch, patch and total_iters must be >= 1")
    if t.stage < 0:
        raise ConfigError("stage must be >= 0")
    if t.stage > m.sub_decoders:
        raise ConfigError(f"stage {t.stage} exceeds sub_decoders {m.sub_decoders}")
    if not 0.0 < t.pretrain_fraction < 1.0:
        raise ConfigError("pretrain_fraction must lie in (0, 1)")
    if t.precision not in ("float32", "float64"):
        raise ConfigError("precision must be 'float32' or 'float64'")
    if l.epsilon <= 0:
        raise ConfigError("epsilon must be > 0")
    if l.delta < 0 or l.lambda_f < 0:
        raise ConfigError("delta and lambda_f must be >= 0")
    if l.loss_form not in ("mean", "global-norm"):
        raise ConfigError("loss_form must be 'mean' or 'global-norm'")
