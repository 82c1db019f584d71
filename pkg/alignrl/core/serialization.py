"""
Line-delimited structured-text containers.

Every artifact (datasets, environment specs, checkpoints, rollout traces)
is one JSON header object on the first line followed by one JSON record per
line. Floats are written with ``repr`` precision, which round-trips
IEEE-754 doubles bit-exactly.
"""
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Tuple, Union

from alignrl.core.exceptions import ArtifactIOError, DatasetParseError, NumericError

PathLike = Union[str, Path]


def dumps_record(record: Dict[str, Any]) -> str:
    """Serialize one record to a single line."""
    # NaN and inf are rejected
    return json.dumps(record, separators=(",", ":"), sort_keys=True, allow_nan=False)


def write_records(path: PathLike, header: Dict[str, Any], records: Iterable[Dict[str, Any]]) -> None:
    """
    Write a header and records to ``path``.

    Raises:
        ArtifactIOError: If the file cannot be written
    """
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            handle.write(dumps_record(header))
            handle.write("\n")
            for record in records:
                handle.write(dumps_record(record))
                handle.write("\n")
    except OSError as exc:
        raise ArtifactIOError(f"Cannot write {path}: {exc.strerror}", path=str(path)) from exc
    except ValueError as exc:
        raise NumericError("non-finite value in record", path=str(path)) from exc


def _read_lines(path: Path) -> List[str]:
    try:
        with path.open("r", encoding="utf-8") as handle:
            return handle.read().splitlines()
    except FileNotFoundError as exc:
        raise ArtifactIOError("File not found", path=str(path)) from exc
    except OSError as exc:
        raise ArtifactIOError(f"Cannot read file ({exc.strerror})", path=str(path)) from exc


def read_records(path: PathLike) -> Tuple[Dict[str, Any], Iterator[Tuple[int, Dict[str, Any]]]]:
    """
    Read a container.

    Returns:
        The parsed header and an iterator of ``(record_index, record)`` pairs,
        record indices counting from 0 after the header.

    Raises:
        ArtifactIOError: If the file is missing or unreadable
        DatasetParseError: If the header or a record is not a JSON object
    """
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise DatasetParseError(f"{path} is empty, expected a header record")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"header of {path} is not valid JSON ({exc.msg})") from exc
    if not isinstance(header, dict):
        raise DatasetParseError(f"header of {path} is not an object")

    def _iter() -> Iterator[Tuple[int, Dict[str, Any]]]:
        for index, line in enumerate(lines[1:]):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(
                    f"line {index + 2} of {path} is not valid JSON ({exc.msg})",
                    record_index=index,
                ) from exc
            if not isinstance(record, dict):
                raise DatasetParseError(f"line {index + 2} of {path} is not an object", record_index=index)
            yield index, record

    return header, _iter()
