"""Schema-stable CSV emission and parsing for result rows."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence, TypeVar

from pydantic import BaseModel, ValidationError

from climber.errors import ConfigurationError

RowT = TypeVar("RowT", bound=BaseModel)


def _format(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def rows_to_csv(rows: Sequence[BaseModel], schema: type[BaseModel]) -> str:
    """Columns follow the schema's field order; floats use ``repr`` so reruns are byte-identical."""
    columns = list(schema.model_fields)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format(getattr(row, name)) for name in columns])
    return buffer.getvalue()


def write_rows(path: str | Path, rows: Sequence[BaseModel], schema: type[BaseModel]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, schema), encoding="utf-8")
    return path


def read_rows(path: str | Path, schema: type[RowT]) -> list[RowT]:
    """Parse a CSV written by :func:`write_rows` back into ``schema`` rows."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    expected = list(schema.model_fields)
    if reader.fieldnames != expected:
        raise ConfigurationError(f"{path}: columns {reader.fieldnames} do not match {expected}")
    rows = []
    for line_no, record in enumerate(reader, start=2):
        try:
            rows.append(schema.model_validate({k: (None if v == "" else v) for k, v in record.items()}))
        except ValidationError as exc:
            raise ConfigurationError(f"{path}:{line_no}: {exc}") from exc
    return rows
