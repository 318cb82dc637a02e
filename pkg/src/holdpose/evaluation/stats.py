"""Per-phase label counts in the layout of the dataset-statistics table."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import Dataset, Phase, PhaseLabel

TABLE_PHASES = (Phase.GRASP, Phase.POSE, Phase.SHAKE)


@dataclass(frozen=True)
class PhaseRow:
    phase: Phase
    passed: int
    slip: int
    drop: int
    not_present: int
    n_cycles: int

    @property
    def unstable_hundredths(self) -> int:
        """(Slip + Drop) as a percentage of all cycles, truncated to 2 decimals, times 100."""
        return (self.slip + self.drop) * 10000 // self.n_cycles

    @property
    def unstable_percent(self) -> float:
        return self.unstable_hundredths / 100

    def percent_text(self) -> str:
        return f"{self.unstable_hundredths // 100}.{self.unstable_hundredths % 100:02d}%"


def row_from_counts(phase: Phase, passed: int, slip: int, drop: int, n_cycles: int, not_present: int = 0) -> PhaseRow:
    if n_cycles <= 0:
        raise ValueError("statistics need at least one cycle")
    return PhaseRow(Phase(phase), passed, slip, drop, not_present, n_cycles)


@dataclass(frozen=True)
class DatasetStats:
    rows: tuple[PhaseRow, ...]
    n_cycles: int
    n_objects: int

    def row(self, phase: Phase) -> PhaseRow:
        return next(r for r in self.rows if r.phase is Phase(phase))

    def counts(self) -> dict:
        return {r.phase.key: {"Pass": r.passed, "Slip": r.slip, "Drop": r.drop, "NotPresent": r.not_present}
                for r in self.rows}

    def format(self) -> str:
        lines = [f"{'Stage':<8}{'Pass':>7}{'Slip':>7}{'Drop':>7}{'Slip+Drop':>11}"]
        for r in self.rows:
            lines.append(f"{r.phase.name.title():<8}{r.passed:>7}{r.slip:>7}{r.drop:>7}{r.percent_text():>11}")
        lines.append(f"{self.n_cycles} cycles on {self.n_objects} objects")
        return "\n".join(lines)

    def to_csv(self) -> str:
        out = ["stage,pass,slip,drop,not_present,slip_drop_percent"]
        for r in self.rows:
            out.append(f"{r.phase.name.title()},{r.passed},{r.slip},{r.drop},{r.not_present},{r.percent_text()[:-1]}")
        return "\n".join(out) + "\n"


def dataset_statistics(d: Dataset) -> DatasetStats:
    """Counts over every cycle (unfiltered); the percentage column divides by the cycle count."""
    n = len(d)
    if n == 0:
        raise ValueError("dataset is empty")
    rows = []
    for ph in TABLE_PHASES:
        tally = {lab: 0 for lab in PhaseLabel}
        for c in d.cycles:
            tally[c.label(ph)] += 1
        rows.append(row_from_counts(ph, tally[PhaseLabel.PASS], tally[PhaseLabel.SLIP], tally[PhaseLabel.DROP], n,
                                    tally[PhaseLabel.NOT_PRESENT]))
    return DatasetStats(tuple(rows), n, len({c.object_id for c in d.cycles}))
