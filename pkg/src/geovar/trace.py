"""Per-step records of a descent run."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

# extras written on rows where the state was remeshed after the descent step
# (curve resampling, level-set reinitialisation); the descent itself is
# judged against the energy before the remesh
PRE_REMESH = "energy_before_remesh"


@dataclass
class TraceRow:
    step: int
    time: float
    energy: float
    max_velocity: float
    extras: dict[str, float] = field(default_factory=dict)


@dataclass
class EvolutionTrace:
    rows: list[TraceRow] = field(default_factory=list)
    status: str = "running"
    stop_step: int | None = None
    snapshots: list[tuple[int, object]] = field(default_factory=list)

    def record(self, step: int, time: float, energy: float, max_velocity: float, **extras) -> TraceRow:
        if self.rows and step <= self.rows[-1].step:
            raise ValueError(f"trace steps must increase ({step} after {self.rows[-1].step})")
        if not np.isfinite(energy):
            raise FloatingPointError(f"non-finite energy at step {step}")
        row = TraceRow(step, float(time), float(energy), float(max_velocity),
                       {k: float(v) for k, v in extras.items()})
        self.rows.append(row)
        return row

    def finish(self, status: str, step: int | None = None):
        self.status = status
        self.stop_step = step if step is not None else (self.rows[-1].step if self.rows else 0)

    def __len__(self):
        return len(self.rows)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        if name in ("step", "time", "energy", "max_velocity"):
            return np.array([getattr(r, name) for r in self.rows])
        return np.array([r.extras.get(name, np.nan) for r in self.rows])

    def descent_violations(self, rtol: float = 1e-12) -> list[int]:
        """Steps whose descent update raised the energy.

        Each row is compared with its predecessor using the energy before any
        remesh on that row, so remeshing is exempt but the descent step that
        preceded it is not.
        """
        bad = []
        for prev, row in zip(self.rows, self.rows[1:]):
            e = row.extras.get(PRE_REMESH, row.energy)
            if e > prev.energy + rtol * max(abs(prev.energy), 1.0):
                bad.append(row.step)
        return bad

    def to_csv(self, path=None) -> str:
        names = sorted({k for r in self.rows for k in r.extras})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time", "energy", "max_velocity", *names])
        for r in self.rows:
            w.writerow([r.step, _fmt(r.time), _fmt(r.energy), _fmt(r.max_velocity),
                        *(_fmt(r.extras[k]) if k in r.extras else "" for k in names)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(x: float) -> str:
    return repr(float(x))
