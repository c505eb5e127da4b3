"""Pipeline configuration: TOML file + command-line overrides.

The file is sectioned ([divider], [client], ...); unknown sections or
keys are rejected so typos fail loudly. Command-line overrides arrive as
dotted keys with string values and are coerced to the target field type.
Secrets never live in the file: the client reads its API key from the
environment variable named by client.api_key_env.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping, Optional, get_args, get_origin, get_type_hints

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .client import ClientConfig
from .divider import DividerParams
from .errors import ConfigError
from .evaluation import EmbedderConfig
from .prompts import PROMPT_VARIANTS
from .rendering import RendererConfig

DEFAULT_SEED = 2026


@dataclass(frozen=True)
class OcrConfig:
    regions_path: str = ""
    merge_gap: int = 20

    def __post_init__(self):
        if self.merge_gap < 0:
            raise ConfigError("ocr.merge_gap must be >= 0")


@dataclass(frozen=True)
class PromptConfig:
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in PROMPT_VARIANTS:
            raise ConfigError(f"prompt.variant must be one of {PROMPT_VARIANTS}, got {self.variant!r}")


@dataclass(frozen=True)
class PipelineConfig:
    divider: DividerParams
    ocr: OcrConfig
    client: ClientConfig
    prompt: PromptConfig
    renderer: RendererConfig
    embedder: EmbedderConfig
    seed: int = DEFAULT_SEED
    output_dir: str = "runs"

    def snapshot(self) -> dict:
        """Plain nested dict of every setting, for reports and digests."""
        return {
            "divider": asdict(self.divider),
            "ocr": asdict(self.ocr),
            "client": asdict(self.client),
            "prompt": asdict(self.prompt),
            "renderer": asdict(self.renderer),
            "embedder": asdict(self.embedder),
            "pipeline": {"seed": self.seed, "output_dir": self.output_dir},
        }


_SECTION_TYPES = {
    "divider": DividerParams,
    "ocr": OcrConfig,
    "client": ClientConfig,
    "prompt": PromptConfig,
    "renderer": RendererConfig,
    "embedder": EmbedderConfig,
}

_PIPELINE_KEYS = {"seed": int, "output_dir": str}

_TRUE_WORDS = {"true", "1", "yes", "on"}
_FALSE_WORDS = {"false", "0", "no", "off"}


def _coerce(value, hint, dotted_key: str):
    if get_origin(hint) is not None:  # Optional[T]
        args = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        hint = args[0]
    if hint is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            word = value.strip().lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
        raise ConfigError(f"{dotted_key} expects a boolean, got {value!r}")
    if hint is int:
        if isinstance(value, bool):
            raise ConfigError(f"{dotted_key} expects an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        raise ConfigError(f"{dotted_key} expects an integer, got {value!r}")
    if hint is float:
        if isinstance(value, bool):
            raise ConfigError(f"{dotted_key} expects a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{dotted_key} expects a number, got {value!r}")
    if hint is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{dotted_key} expects a string, got {value!r}")
    return value


def _build_section(name: str, cls, values: Mapping):
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {
        key: _coerce(value, hints[key], f"{name}.{key}") for key, value in values.items()
    }
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid [{name}] configuration: {exc}") from exc


def load_config(
    path: Optional[str] = None, overrides: Optional[Mapping[str, object]] = None
) -> PipelineConfig:
    """Build a validated PipelineConfig from a TOML file plus overrides.

    `overrides` maps dotted keys ("client.backend") to values; string
    values are coerced to the target field type. Both the file and the
    overrides are optional.
    """
    data: dict = {}
    if path:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"config file not found: {file_path}")
        try:
            data = tomllib.loads(file_path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}") from exc

    unknown_sections = set(data) - set(_SECTION_TYPES) - {"pipeline"}
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown_sections))}")
    for section, content in data.items():
        if not isinstance(content, dict):
            raise ConfigError(f"top-level key {section!r} must be a section (table)")

    merged: dict = {section: dict(content) for section, content in data.items()}
    for dotted_key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted_key.partition(".")
        if not key or (section not in _SECTION_TYPES and section != "pipeline"):
            raise ConfigError(f"unknown override key: {dotted_key}")
        merged.setdefault(section, {})[key] = value

    pipeline_values = merged.pop("pipeline", {})
    unknown = set(pipeline_values) - set(_PIPELINE_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in [pipeline]: {', '.join(sorted(unknown))}")
    seed = _coerce(pipeline_values.get("seed", DEFAULT_SEED), int, "pipeline.seed")
    output_dir = _coerce(pipeline_values.get("output_dir", "runs"), str, "pipeline.output_dir")

    sections = {
        name: _build_section(name, cls, merged.get(name, {}))
        for name, cls in _SECTION_TYPES.items()
    }
    return PipelineConfig(seed=seed, output_dir=output_dir, **sections)
