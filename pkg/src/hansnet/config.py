"""Flat `key = value` configuration with a typed key registry.

Config files are plain text: one dotted key per line, `#` starts a
comment, blank lines are ignored. Every key must be registered; unknown
keys are a hard error so typos never pass silently. The same keys are
accepted from the command line as repeated `--set key=value` overrides,
applied after the file.
"""

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .model import ModelConfig
from .phantom import PhantomConfig
from .train import TrainConfig


@dataclass
class DataConfig:
    train_slices: int = 200
    val_slices: int = 40
    test_slices: int = 40
    volumes: int = 8  # phantom-gen output count
    eval_volumes: int = 4  # volumes scored by checkpoint evaluation


@dataclass
class AblateConfig:
    epochs: int = 3


@dataclass
class AppConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    data: DataConfig = field(default_factory=DataConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _cast_bool(raw):
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _cast_floats(raw):
    parts = [p.strip() for p in raw.split(",")]
    return tuple(float(p) for p in parts)


_SECTIONS = {
    "model": (ModelConfig, {"kappa": float, "dropout_p": float, "plasticity_alpha": float}),
    "train": (TrainConfig, {"lr": float, "w_dice": float, "w_bce": float}),
    "phantom": (
        PhantomConfig,
        {
            "min_tumor_radius": float,
            "max_tumor_radius": float,
            "min_noise": float,
            "max_noise": float,
            "spacing": _cast_floats,
        },
    ),
    "data": (DataConfig, {}),
    "ablate": (AblateConfig, {}),
}


def _build_registry():
    reg = {}
    for section, (cls, overrides) in _SECTIONS.items():
        for f in fields(cls):
            caster = overrides.get(f.name)
            if caster is None:
                caster = _cast_bool if f.type in (bool, "bool") else int
            reg[f"{section}.{f.name}"] = caster
    return reg


REGISTRY = _build_registry()


def _apply(pending, key, raw, where):
    if key not in REGISTRY:
        raise ConfigError(f"{where}: unknown config key {key!r}")
    try:
        value = REGISTRY[key](raw)
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key}: {e}") from None
    section, name = key.split(".", 1)
    pending.setdefault(section, {})[name] = value


def parse_config_text(text, source="<config>"):
    """Key -> value sections from config-file text."""
    pending = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = body.split("=", 1)
        key, raw = key.strip(), raw.strip()
        if not key or not raw:
            raise ConfigError(f"{source}:{lineno}: empty key or value in {line!r}")
        _apply(pending, key, raw, f"{source}:{lineno}")
    return pending


def load_config(path=None, sets=()):
    """AppConfig from an optional file plus `--set key=value` overrides."""
    pending = {}
    if path is not None:
        with open(path) as fh:
            text = fh.read()
        pending = parse_config_text(text, source=str(path))
    for i, item in enumerate(sets):
        if "=" not in item:
            raise ConfigError(f"--set #{i + 1}: expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _apply(pending, key.strip(), raw.strip(), f"--set {key.strip()}")

    kwargs = {}
    for section, (cls, _over) in _SECTIONS.items():
        try:
            kwargs[section] = cls(**pending.get(section, {}))
        except ConfigError as e:
            raise ConfigError(f"{section}: {e}") from None
    cfg = AppConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    m, p, d = cfg.model, cfg.phantom, cfg.data
    if m.base_channels < 1:
        raise ConfigError(f"model.base_channels must be positive, got {m.base_channels}")
    if m.use_ata and (4 * m.base_channels) % 8:
        raise ConfigError(
            "attention needs the deepest channel count divisible by 8; "
            f"model.base_channels={m.base_channels} gives {4 * m.base_channels}"
        )
    if m.use_wdm and m.base_channels % 4:
        raise ConfigError(
            "frequency decomposition needs channels divisible by 4; "
            f"got model.base_channels={m.base_channels}"
        )
    if not 0.0 <= m.dropout_p < 1.0:
        raise ConfigError(f"model.dropout_p must be in [0, 1), got {m.dropout_p}")
    if m.mc_passes < 1:
        raise ConfigError(f"model.mc_passes must be at least 1, got {m.mc_passes}")
    if m.pe_levels < 0:
        raise ConfigError(f"model.pe_levels must be non-negative, got {m.pe_levels}")
    if m.inr_hidden < 1:
        raise ConfigError(f"model.inr_hidden must be positive, got {m.inr_hidden}")
    if m.kappa >= 0 and not m.learnable_curvature:
        raise ConfigError(f"model.kappa must be negative, got {m.kappa}")

    if p.size < 8 or p.size % 8:
        raise ConfigError(f"phantom.size must be a positive multiple of 8, got {p.size}")
    if p.min_depth < 1 or p.max_depth < p.min_depth:
        raise ConfigError(f"bad phantom depth range [{p.min_depth}, {p.max_depth}]")
    if p.max_tumors < 0:
        raise ConfigError(f"phantom.max_tumors must be non-negative, got {p.max_tumors}")
    if not 0 < p.min_tumor_radius <= p.max_tumor_radius:
        raise ConfigError(
            f"bad lesion radius range [{p.min_tumor_radius}, {p.max_tumor_radius}]"
        )
    if not 0 <= p.min_noise <= p.max_noise:
        raise ConfigError(f"bad noise range [{p.min_noise}, {p.max_noise}]")
    if len(p.spacing) != 3 or any(s <= 0 for s in p.spacing):
        raise ConfigError(f"phantom.spacing needs three positive values, got {p.spacing}")

    if d.train_slices < 1 or d.val_slices < 1 or d.test_slices < 0:
        raise ConfigError(
            f"bad split sizes {d.train_slices}/{d.val_slices}/{d.test_slices}"
        )
    if d.volumes < 1 or d.eval_volumes < 1:
        raise ConfigError(
            f"data.volumes and data.eval_volumes must be positive, "
            f"got {d.volumes}, {d.eval_volumes}"
        )
    if cfg.ablate.epochs < 1:
        raise ConfigError(f"ablate.epochs must be at least 1, got {cfg.ablate.epochs}")
