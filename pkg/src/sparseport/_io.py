"""Small file helpers shared by the loaders, writers and the CLI."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence


class DataError(ValueError):
    """Raised when an input file or table violates its schema."""


def fmt_float(x: float) -> str:
    # repr round-trips exactly through float()
    return repr(float(x))


def fmt_date(d: date) -> str:
    return d.isoformat()


def parse_date(text: str) -> date:
    return date.fromisoformat(text.strip())


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    write_atomic(path, csv_text(header, rows))


def read_csv(path: str | os.PathLike, header: Sequence[str]):
    """Yield ``(line_number, row_dict)`` for each data row, checking the header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DataError(f"{path.name} line 1: missing header") from None
        got = [h.strip() for h in got]
        if got != list(header):
            raise DataError(f"{path.name} line 1: expected header {','.join(header)!r}, got {','.join(got)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path.name} line {lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, dict(zip(header, row))


class FieldParser:
    """Parses fields of one row, turning failures into located errors."""

    def __init__(self, filename: str, lineno: int, row: dict[str, str]):
        self.filename = filename
        self.lineno = lineno
        self.row = row

    def error(self, column: str, message: str) -> DataError:
        return DataError(f"{self.filename} line {self.lineno}, column {column!r}: {message}")

    def str(self, column: str, allow_empty: bool = False) -> str:
        value = self.row[column].strip()
        if not value and not allow_empty:
            raise self.error(column, "empty value")
        return value

    def float(self, column: str) -> float:
        text = self.row[column].strip()
        try:
            return float(text)
        except ValueError:
            raise self.error(column, f"not a number: {text!r}") from None

    def int(self, column: str) -> int:
        text = self.row[column].strip()
        try:
            return int(text)
        except ValueError:
            raise self.error(column, f"not an integer: {text!r}") from None

    def bool(self, column: str) -> bool:
        text = self.row[column].strip()
        if text not in ("0", "1"):
            raise self.error(column, f"expected 0 or 1, got {text!r}")
        return text == "1"

    def date(self, column: str) -> date:
        text = self.row[column].strip()
        try:
            return parse_date(text)
        except ValueError:
            raise self.error(column, f"not an ISO-8601 date: {text!r}") from None
