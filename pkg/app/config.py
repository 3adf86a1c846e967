import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from .errors import ConfigError

LOG_LEVEL = os.getenv("VGS_LOG_LEVEL", "INFO").upper()
RUN_ROOT = os.getenv("VGS_RUN_ROOT", "runs")
CHECKPOINT_PATH = os.getenv("VGS_CHECKPOINT", "")
CORPUS_DIR = os.getenv("VGS_CORPUS_DIR", "")
MAX_DECODE_LEN = int(os.getenv("VGS_MAX_DECODE_LEN", "20"))
DECODE_TIMEOUT = float(os.getenv("VGS_DECODE_TIMEOUT", "30"))
REQUIRE_API_KEY = os.getenv("VGS_REQUIRE_API_KEY", "false").lower() == "true"
API_KEY = os.getenv("VGS_API_KEY", "")

M = TypeVar("M", bound=BaseModel)


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or LOG_LEVEL),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


def _coerce(raw: str) -> Any:
    text = raw.strip()
    if text.lower() in {"true", "yes", "on"}:
        return True
    if text.lower() in {"false", "no", "off"}:
        return False
    if text.lower() in {"none", "null", ""}:
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def load_kv_file(path: str) -> Dict[str, Any]:
    """Read ``key = value`` lines; ``#`` starts a comment. Keys may use dashes."""
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc}") from exc
    out: Dict[str, Any] = {}
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("config", f"{p}:{lineno}: expected key = value")
        key, value = body.split("=", 1)
        out[key.strip().replace("-", "_")] = _coerce(value)
    return out


def merge_settings(*layers: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    """Later layers win; ``None`` values never override."""
    merged: Dict[str, Any] = {}
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if value is not None:
                merged[key] = value
    return merged


def build_model_from(cls: Type[M], settings: Mapping[str, Any], prefix: str = "") -> M:
    """Instantiate ``cls`` from the settings it knows about, mapping pydantic
    validation failures onto :class:`ConfigError`."""
    fields = cls.model_fields
    picked: Dict[str, Any] = {}
    for key, value in settings.items():
        name = key[len(prefix):] if prefix and key.startswith(prefix) else key
        if name in fields:
            picked[name] = value
    try:
        return cls(**picked)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first.get("loc", ())) or cls.__name__
        raise ConfigError(loc, first.get("msg", "invalid value")) from exc
