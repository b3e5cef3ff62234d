"""MetricsTrace records and their CSV form.

CSV layout::

    event,sim_time_s,comm_units,accuracy
    0,0,0,1
    ...
    # key=value        (metadata footer, sorted by key)

Floats are written with 17 significant digits so traces round-trip exactly
and diff cleanly.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

HEADER = "event,sim_time_s,comm_units,accuracy"


def fmt(v: float) -> str:
    return f"{v:.17g}"


@dataclass
class MetricsTrace:
    records: list[tuple[int, float, int, float]] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def append(self, event: int, sim_time: float, comm_units: int, accuracy: float) -> None:
        self.records.append((int(event), float(sim_time), int(comm_units), float(accuracy)))

    @property
    def last(self) -> tuple[int, float, int, float]:
        return self.records[-1]

    def first_crossing(self, threshold: float) -> tuple[int, float, int] | None:
        """``(event, sim_time, comm_units)`` of the first record with accuracy <= threshold."""
        for ev, t, c, acc in self.records:
            if acc <= threshold:
                return ev, t, c
        return None

    def to_csv_text(self) -> str:
        lines = [HEADER]
        lines += [f"{ev},{fmt(t)},{c},{fmt(a)}" for ev, t, c, a in self.records]
        lines += [f"# {k}={self.metadata[k]}" for k in sorted(self.metadata)]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        write_atomic(path, self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> MetricsTrace:
        lines = text.splitlines()
        if not lines or lines[0].strip() != HEADER:
            raise ValueError(f"bad header: expected {HEADER!r}")
        trace = cls()
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise ValueError(f"line {n}: metadata must be '# key=value'")
                trace.metadata[key] = value
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"line {n}: expected 4 columns, got {len(parts)}")
            trace.append(int(parts[0]), float(parts[1]), int(parts[2]), float(parts[3]))
        return trace

    @classmethod
    def read(cls, path) -> MetricsTrace:
        return cls.from_csv_text(Path(path).read_text())


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
