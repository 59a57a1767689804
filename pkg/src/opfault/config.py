"""Flat key=value config files.

Every GanConfig and DetectorConfig field is reachable under a "gan." or
"detector." prefix; pipeline-level options live under "pipeline.". Values
are coerced to the type of the field's default. Lines starting with # and
blank lines are ignored.

    gan.max_iters=40
    gan.lambda_weight=100.0
    detector.epochs=50
    pipeline.checkpoint_mode=loss
"""

from __future__ import annotations

from dataclasses import fields, replace

from .detector import DetectorConfig
from .gan import GanConfig

PIPELINE_KEYS = {"checkpoint_mode": str, "fraction": float}


def parse_kv_text(text: str) -> dict:
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line {ln}: {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"malformed config line {ln}: empty key")
        if key in out:
            raise ValueError(f"duplicate config key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(value: str, like, key: str):
    if isinstance(like, bool):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {value!r}")
    try:
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
        if isinstance(like, tuple):
            return tuple(type(like[0])(v) for v in value.split(",") if v != "")
    except (ValueError, TypeError):
        raise ValueError(f"config key {key!r}: cannot parse {value!r} "
                         f"as {type(like).__name__}") from None
    return value


def _apply(cfg, prefix: str, kv: dict, used: set):
    defaults = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    updates = {}
    for key, value in kv.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in defaults:
            raise ValueError(f"unknown config key {key!r}")
        updates[name] = _coerce(value, defaults[name], key)
        used.add(key)
    return replace(cfg, **updates) if updates else cfg


def build_configs(kv: dict, gan_cfg: GanConfig | None = None,
                  det_cfg: DetectorConfig | None = None):
    """(GanConfig, DetectorConfig, pipeline options) from parsed key=value
    pairs; unknown keys are errors so typos cannot silently fall back to
    defaults."""
    used: set = set()
    gan_cfg = _apply(gan_cfg or GanConfig(), "gan", kv, used)
    det_cfg = _apply(det_cfg or DetectorConfig(), "detector", kv, used)
    pipeline = {}
    for key, value in kv.items():
        if key.startswith("pipeline."):
            name = key[len("pipeline."):]
            if name not in PIPELINE_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            pipeline[name] = _coerce(value, PIPELINE_KEYS[name](), key)
            used.add(key)
    unknown = sorted(set(kv) - used)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return gan_cfg.validate(), det_cfg.validate(), pipeline


def load_config(path: str, gan_cfg: GanConfig | None = None,
                det_cfg: DetectorConfig | None = None):
    with open(path) as f:
        return build_configs(parse_kv_text(f.read()), gan_cfg, det_cfg)
