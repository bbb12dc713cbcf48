"""Result tables: CSV emission and plot-data extraction."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

HEADER = ("experiment", "quantity", "param", "value", "band", "bound", "pass")


class UnknownQuantityError(KeyError):
    pass


def fmt(x) -> str:
    """17 significant digits, locale independent; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass
class Row:
    experiment: str
    quantity: str
    param: float | None
    value: float | None
    band: float | None = None
    bound: float | None = None
    passed: bool = True

    def cells(self):
        return (self.experiment, self.quantity, fmt(self.param), fmt(self.value),
                fmt(self.band), fmt(self.bound), fmt(bool(self.passed)))


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, *args, **kwargs) -> Row:
        row = Row(*args, **kwargs)
        self.rows.append(row)
        return row

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def quantities(self):
        return sorted({r.quantity for r in self.rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        return path

    @classmethod
    def read(cls, path) -> "ResultTable":
        def num(s):
            return None if s == "" else float(s)

        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != HEADER:
                raise ValueError(f"unexpected header {header}")
            for cells in reader:
                e, q, p, v, b, bd, ok = cells
                table.rows.append(Row(e, q, num(p), num(v), num(b), num(bd), ok == "true"))
        return table


def emit_plot_data(table: ResultTable, quantity: str, path=None) -> str:
    """Whitespace-separated ``param value [bound]`` columns sorted by ``param``."""
    rows = [r for r in table.rows if r.quantity == quantity and r.param is not None]
    if not rows:
        raise UnknownQuantityError(
            f"no rows for quantity {quantity!r}; available: {', '.join(table.quantities())}"
        )
    rows.sort(key=lambda r: r.param)
    with_bound = all(r.bound is not None for r in rows)
    lines = []
    for r in rows:
        cols = [fmt(r.param), fmt(r.value)]
        if with_bound:
            cols.append(fmt(r.bound))
        lines.append(" ".join(cols))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text
