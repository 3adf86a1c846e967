"""UTF-8 line-record (JSONL) helpers shared by the corpus, trainer and metrics."""
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Union

from pydantic import BaseModel

from ..errors import FormatError

PathLike = Union[str, Path]


def dumps_record(obj: Union[BaseModel, Dict[str, Any]]) -> str:
    payload = obj.model_dump(mode="json") if isinstance(obj, BaseModel) else obj
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_records(path: PathLike, rows: Iterable[Union[BaseModel, Dict[str, Any]]]) -> int:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dumps_record(row))
            fh.write("\n")
            n += 1
    return n


def iter_records(path: PathLike) -> Iterator[Dict[str, Any]]:
    p = Path(path)
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{p}:{lineno}: {exc.msg}") from exc


def read_records(path: PathLike) -> List[Dict[str, Any]]:
    return list(iter_records(path))
