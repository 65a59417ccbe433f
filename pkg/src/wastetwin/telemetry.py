"""Append-only time-series log with CSV persistence and run manifests.

The log is long-format (one row per channel sample) so channels with
different sample periods coexist without padding. Export/import round-trips
records bit-exactly; values are serialized with 17 significant digits.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

ARTIFACT_VERSION = "0.1.0"

CHANNELS = (
    "temperature",
    "ph",
    "pressure",
    "gas_rate",
    "gas_cumulative",
    "level",
    "rpm",
    "heater_power",
)

QUALITIES = ("ok", "sensor_fault")

CSV_HEADER = ("t_min", "channel", "value", "quality")


class OrderingError(ValueError):
    """Raised when a record's time regresses within its channel."""


class WindowError(ValueError):
    """Raised for an inverted read window."""


class CsvParseError(ValueError):
    """Raised for a malformed CSV row; message names the line number."""


class SchemaError(ValueError):
    """Raised for an unknown channel or quality value."""


@dataclass(frozen=True, slots=True)
class TelemetryRecord:
    t_min: float
    channel: str
    value: float
    quality: str = "ok"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise SchemaError(f"unknown channel {self.channel!r}")
        if self.quality not in QUALITIES:
            raise SchemaError(f"unknown quality {self.quality!r}")


class TelemetryRun:
    """Single-writer append-only record log for one simulation run."""

    def __init__(self, run_id: str = "run"):
        self.run_id = run_id
        self._records: list[TelemetryRecord] = []
        self._last_t: dict[str, float] = {}

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[TelemetryRecord, ...]:
        return tuple(self._records)

    def append(self, record: TelemetryRecord) -> None:
        last = self._last_t.get(record.channel)
        if last is not None and record.t_min < last:
            raise OrderingError(
                f"t={record.t_min} precedes last t={last} on channel {record.channel!r}"
            )
        self._records.append(record)
        self._last_t[record.channel] = record.t_min

    def extend(self, records: Iterable[TelemetryRecord]) -> None:
        for record in records:
            self.append(record)

    def read_window(
        self,
        channels: Sequence[str] | None = None,
        t_from: float = 0.0,
        t_to: float = math.inf,
    ) -> list[TelemetryRecord]:
        """Records with t in the closed interval [t_from, t_to], time-ordered."""
        if t_from > t_to:
            raise WindowError(f"inverted window [{t_from}, {t_to}]")
        if channels is not None:
            wanted = set(channels)
            unknown = wanted - set(CHANNELS)
            if unknown:
                raise SchemaError(f"unknown channels {sorted(unknown)}")
        else:
            wanted = None
        out = [
            r
            for r in self._records
            if t_from <= r.t_min <= t_to and (wanted is None or r.channel in wanted)
        ]
        out.sort(key=lambda r: r.t_min)  # stable: append order breaks ties
        return out

    def values(self, channel: str, t_from: float = 0.0, t_to: float = math.inf):
        """(times, values) arrays for one channel; convenience for analysis."""
        import numpy as np

        recs = self.read_window([channel], t_from, t_to)
        return (
            np.array([r.t_min for r in recs]),
            np.array([r.value for r in recs]),
        )

    def export_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self._records:
                writer.writerow(
                    (format(r.t_min, ".17g"), r.channel, format(r.value, ".17g"), r.quality)
                )


def import_csv(path: str | Path, run_id: str | None = None) -> TelemetryRun:
    path = Path(path)
    run = TelemetryRun(run_id or path.stem)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise CsvParseError(f"line 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CsvParseError(f"line {lineno}: expected 4 fields, got {len(row)}")
            t_raw, channel, value_raw, quality = row
            try:
                t_min = float(t_raw)
                value = float(value_raw)
            except ValueError as exc:
                raise CsvParseError(f"line {lineno}: {exc}") from exc
            if channel not in CHANNELS:
                raise SchemaError(f"line {lineno}: unknown channel {channel!r}")
            if quality not in QUALITIES:
                raise SchemaError(f"line {lineno}: unknown quality {quality!r}")
            run.append(TelemetryRecord(t_min, channel, value, quality))
    return run


def config_digest(config: dict) -> str:
    """Content hash of a resolved config, stable under key reordering."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    seeds: dict[str, int] = field(default_factory=dict)
    config_digest: str = ""
    t_start_min: float = 0.0
    t_end_min: float = 0.0
    artifact_version: str = ARTIFACT_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {
                "run_id": self.run_id,
                "seeds": self.seeds,
                "config_digest": self.config_digest,
                "t_start_min": self.t_start_min,
                "t_end_min": self.t_end_min,
                "artifact_version": self.artifact_version,
            },
            sort_keys=True,
            indent=2,
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def manifest_from_json(text: str) -> RunManifest:
    raw = json.loads(text)
    return RunManifest(
        run_id=raw["run_id"],
        seeds={str(k): int(v) for k, v in raw["seeds"].items()},
        config_digest=raw["config_digest"],
        t_start_min=float(raw["t_start_min"]),
        t_end_min=float(raw["t_end_min"]),
        artifact_version=raw["artifact_version"],
    )
