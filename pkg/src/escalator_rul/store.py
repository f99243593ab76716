"""Partitioned CSV/JSONL store for raw and derived data.

Layout under the store root::

    raw_energy/{escalator}/{service_date}.csv
    raw_vibration/{escalator}/{point}/{local_date}.jsonl
    derived_daily/{escalator}.csv
    derived_at/{escalator}.csv
    quarters/{yyyyQq}.csv
    rul/{yyyyQq}.csv
    models/{name}.json
    bands.json, fleet.json, manifest.json

Writers hold ``.lock`` and replace files atomically.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from filelock import FileLock

from .domain import (
    LOCAL_TZ,
    MINUTES_PER_DAY,
    EscalatorMeta,
    FreqClass,
    Quarter,
    default_fleet,
    dump_fleet,
    load_fleet,
    parse_utc_iso,
    service_date_of,
    to_utc_iso,
)
from .energy import DailyFeatures, EnergyMinute, ServiceDayProfile
from .health import LhiModel, QuarterFeatures
from .vibration import AtRecord, BandSelection, SpectrumRecord, Status

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENERGY_COLUMNS = ["escalator_id", "timestamp_utc", "e_imp_wh", "e_exp_wh"]
ENERGY_OPTIONAL = ["current_a", "voltage_v"]
SPECTRUM_FIELDS = ["escalator_id", "point_id", "timestamp_utc", "bin_hz", "magnitudes"]
DAILY_COLUMNS = [
    "escalator_id", "service_date", "working_min", "fixed_loss_wh_min", "variable_loss_wh",
    "passengers", "corrective_events", "preventive_events", "missing_fraction",
]
AT_COLUMNS = ["escalator_id", "point_id", "timestamp_utc", "at_g", "status"]
QUARTER_COLUMNS = [
    "escalator_id", "year", "quarter", "actual_age",
    "working_time_raw", "passenger_load_raw", "fixed_loss_residual_raw", "at_area_raw", "fault_count_raw",
    "working_hours", "passenger_load", "at_areas", "fixed_loss_residual", "fault_counts",
    "lhi", "days_used", "days_excluded",
]
RUL_COLUMNS = [
    "escalator_id", "year", "quarter", "actual_age", "years_till_35", "rul", "lhi",
    "working_hours", "passenger_load", "at_areas", "fixed_loss_residual", "fault_counts",
]
PARTITIONS = ("raw_energy", "raw_vibration", "derived_daily", "derived_at", "quarters", "rul")


class StoreError(Exception):
    pass


def fnum(x: float) -> str:
    """Lossless, deterministic float text."""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


@dataclass
class IngestReport:
    files: int = 0
    rows: int = 0
    skipped: int = 0
    rejected: int = 0
    rejected_files: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.rejected == 0 and self.rejected_files == 0

    def to_json(self) -> dict:
        return {
            "files": self.files,
            "rows": self.rows,
            "skipped": self.skipped,
            "rejected": self.rejected,
            "rejected_files": self.rejected_files,
        }


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_text(header: list[str], rows: Iterable[Iterable[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _count_rows(path: Path) -> int:
    with open(path) as fh:
        n = sum(1 for line in fh if line.strip())
    return n - 1 if path.suffix == ".csv" else n


class Store:
    def __init__(self, root: str | Path, tz=LOCAL_TZ):
        self.root = Path(root)
        self.tz = tz
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".lock"))
        if not self.manifest_path.exists():
            with self._lock:
                if not self.manifest_path.exists():
                    self._save_manifest(
                        {
                            "schema_version": SCHEMA_VERSION,
                            "created_utc": to_utc_iso(datetime.now(timezone.utc)),
                            "local_utc_offset_hours": tz.utcoffset(None).total_seconds() / 3600,
                            "ingestions": [],
                            "row_counts": {},
                        }
                    )
        version = self.manifest()["schema_version"]
        if version != SCHEMA_VERSION:
            raise StoreError(f"store schema version {version} unsupported (expected {SCHEMA_VERSION})")

    # -- manifest ---------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text())

    def _save_manifest(self, m: dict) -> None:
        m["row_counts"] = dict(sorted(m.get("row_counts", {}).items()))
        _atomic_write(self.manifest_path, json.dumps(m, indent=2) + "\n")

    def _write_partition(self, path: Path, text: str, manifest: dict) -> None:
        _atomic_write(path, text)
        rel = path.relative_to(self.root).as_posix()
        manifest["row_counts"][rel] = _count_rows(path)

    def _write_tracked(self, path: Path, text: str) -> None:
        with self._lock:
            m = self.manifest()
            self._write_partition(path, text, m)
            self._save_manifest(m)

    # -- fleet ------------------------------------------------------------

    def fleet(self) -> list[EscalatorMeta]:
        path = self.root / "fleet.json"
        return load_fleet(path) if path.exists() else default_fleet()

    def fleet_by_id(self) -> dict[int, EscalatorMeta]:
        return {m.id: m for m in self.fleet()}

    def escalators(self, partition: str) -> list[int]:
        base = self.root / partition
        if not base.exists():
            return []
        if partition in ("raw_energy", "raw_vibration"):
            return sorted(int(p.name) for p in base.iterdir() if p.is_dir())
        return sorted(int(p.stem) for p in base.glob("*.csv"))

    # -- ingestion --------------------------------------------------------

    def ingest(self, raw_dir: str | Path) -> IngestReport:
        raw = Path(raw_dir)
        report = IngestReport()
        energy: dict[Path, dict[str, tuple]] = {}
        spectra: dict[Path, dict[str, str]] = {}

        files = sorted(p for p in raw.rglob("*") if p.is_file() and "truth" not in p.relative_to(raw).parts)
        for path in files:
            if path.suffix == ".csv":
                report.files += 1
                self._read_energy_or_spectrum_csv(path, report, energy, spectra)
            elif path.suffix == ".jsonl":
                report.files += 1
                with open(path) as fh:
                    for lineno, line in enumerate(fh, 1):
                        if line.strip():
                            self._accept_spectrum(line.strip(), f"{path}:{lineno}", report, spectra)

        with self._lock:
            m = self.manifest()
            fleet_src = raw / "fleet.json"
            if fleet_src.exists():
                text = dump_fleet(load_fleet(fleet_src))
                dest = self.root / "fleet.json"
                if not dest.exists() or dest.read_text() != text:
                    _atomic_write(dest, text)
            for dest, rows in sorted(energy.items()):
                self._merge_energy(dest, rows, report, m)
            for dest, rows in sorted(spectra.items()):
                self._merge_spectra(dest, rows, report, m)
            m["ingestions"].append(
                {
                    "source": str(raw),
                    "files": report.files,
                    "rows": report.rows,
                    "rejected": report.rejected,
                }
            )
            self._save_manifest(m)
        return report

    def _reject(self, report: IngestReport, where: str, why: str) -> None:
        report.rejected += 1
        msg = f"{where}: {why}"
        report.errors.append(msg)
        log.warning("rejected row %s", msg)

    def _read_energy_or_spectrum_csv(self, path, report, energy, spectra) -> None:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header == SPECTRUM_FIELDS:
                for lineno, row in enumerate(reader, 2):
                    if not row:
                        continue
                    try:
                        d = dict(zip(SPECTRUM_FIELDS, row))
                        d["magnitudes"] = [float(v) for v in d["magnitudes"].split(";")]
                        line = json.dumps(
                            {
                                "escalator_id": int(d["escalator_id"]),
                                "point_id": int(d["point_id"]),
                                "timestamp_utc": d["timestamp_utc"],
                                "bin_hz": float(d["bin_hz"]),
                                "magnitudes": d["magnitudes"],
                            }
                        )
                    except (ValueError, KeyError) as exc:
                        self._reject(report, f"{path}:{lineno}", f"unparseable spectrum ({exc})")
                        continue
                    self._accept_spectrum(line, f"{path}:{lineno}", report, spectra)
                return
            if header[:4] != ENERGY_COLUMNS or any(h not in ENERGY_OPTIONAL for h in header[4:]):
                report.rejected_files += 1
                report.errors.append(f"{path}: unexpected header {header}")
                log.error("rejected file %s: unexpected header %s", path, header)
                return
            last: datetime | None = None
            dests: dict[tuple[int, date], Path] = {}
            for lineno, row in enumerate(reader, 2):
                if not row:
                    continue
                where = f"{path}:{lineno}"
                if len(row) != len(header):
                    self._reject(report, where, f"expected {len(header)} fields, got {len(row)}")
                    continue
                try:
                    esc = int(row[0])
                    ts = parse_utc_iso(row[1])
                    imp, exp = float(row[2]), float(row[3])
                    extras = [float(v) if v.strip() else None for v in row[4:]]
                except ValueError as exc:
                    self._reject(report, where, f"unparseable value ({exc})")
                    continue
                if not (imp >= 0 and exp >= 0) or not (math.isfinite(imp) and math.isfinite(exp)):
                    self._reject(report, where, "negative or non-finite energy")
                    continue
                if ts.second or ts.microsecond:
                    self._reject(report, where, "timestamp not on a minute boundary")
                    continue
                if last is not None and ts <= last:
                    self._reject(report, where, "timestamp not strictly increasing")
                    continue
                last = ts
                sd = service_date_of(ts, self.tz)
                dest = dests.get((esc, sd))
                if dest is None:
                    dest = dests[(esc, sd)] = self.root / "raw_energy" / str(esc) / f"{sd.isoformat()}.csv"
                key = to_utc_iso(ts)
                cells = (str(esc), key, fnum(imp), fnum(exp), *("" if e is None else fnum(e) for e in extras))
                cells = cells + ("",) * (6 - len(cells))
                bucket = energy.setdefault(dest, {})
                if key in bucket:
                    if bucket[key][0] != cells:
                        self._reject(report, where, f"duplicate escalator-minute {esc} {key}")
                    else:
                        report.skipped += 1
                    continue
                bucket[key] = (cells, where)

    def _accept_spectrum(self, line: str, where: str, report: IngestReport, spectra) -> None:
        try:
            d = json.loads(line)
            spec = SpectrumRecord(
                int(d["escalator_id"]),
                int(d["point_id"]),
                parse_utc_iso(d["timestamp_utc"]),
                float(d["bin_hz"]),
                np.asarray(d["magnitudes"], dtype=float),
            )
        except (ValueError, KeyError, TypeError) as exc:
            self._reject(report, where, f"invalid spectrum ({exc})")
            return
        if not 1 <= spec.point_id <= 8:
            self._reject(report, where, f"point id {spec.point_id} outside 1..8")
            return
        span = spec.bin_hz * spec.magnitudes.size
        if abs(span - 12800.0) > spec.bin_hz + 1e-6:
            self._reject(report, where, f"spectrum spans {span:.1f} Hz, expected 12800")
            return
        local_day = spec.timestamp.astimezone(self.tz).date()
        dest = self.root / "raw_vibration" / str(spec.escalator_id) / str(spec.point_id) / f"{local_day}.jsonl"
        key = to_utc_iso(spec.timestamp)
        canon = json.dumps(
            {
                "escalator_id": spec.escalator_id,
                "point_id": spec.point_id,
                "timestamp_utc": key,
                "bin_hz": spec.bin_hz,
                "magnitudes": [float(v) for v in d["magnitudes"]],
            },
            separators=(",", ":"),
        )
        bucket = spectra.setdefault(dest, {})
        if key in bucket:
            if bucket[key][0] != canon:
                self._reject(report, where, f"duplicate spectrum {spec.escalator_id}/{spec.point_id} {key}")
            else:
                report.skipped += 1
            return
        bucket[key] = (canon, where)

    def _merge_energy(self, dest: Path, rows: dict, report: IngestReport, manifest: dict) -> None:
        existing: dict[str, tuple] = {}
        if dest.exists():
            with open(dest, newline="") as fh:
                r = csv.reader(fh)
                next(r)
                for row in r:
                    existing[row[1]] = tuple(row)
        added = 0
        for key, (cells, where) in rows.items():
            old = existing.get(key)
            if old is None:
                existing[key] = cells
                added += 1
            elif old == cells:
                report.skipped += 1
            else:
                self._reject(report, where, f"duplicate escalator-minute {cells[0]} {key}")
        if added:
            report.rows += added
            text = _csv_text(ENERGY_COLUMNS + ENERGY_OPTIONAL, (existing[k] for k in sorted(existing)))
            self._write_partition(dest, text, manifest)

    def _merge_spectra(self, dest: Path, rows: dict, report: IngestReport, manifest: dict) -> None:
        existing: dict[str, str] = {}
        if dest.exists():
            for line in dest.read_text().splitlines():
                if line:
                    existing[json.loads(line)["timestamp_utc"]] = line
        added = 0
        for key, (canon, where) in rows.items():
            old = existing.get(key)
            if old is None:
                existing[key] = canon
                added += 1
            elif old == canon:
                report.skipped += 1
            else:
                self._reject(report, where, f"duplicate spectrum at {key}")
        if added:
            report.rows += added
            self._write_partition(dest, "".join(existing[k] + "\n" for k in sorted(existing)), manifest)

    # -- queries ----------------------------------------------------------

    def _day_files(self, base: Path, date_range: tuple[date, date] | None) -> list[Path]:
        if not base.exists():
            return []
        out = []
        for p in sorted(base.iterdir()):
            d = date.fromisoformat(p.stem)
            if date_range is None or date_range[0] <= d <= date_range[1]:
                out.append(p)
        return out

    def query(self, partition: str, escalator: int, date_range: tuple[date, date] | None = None) -> Iterator:
        """Ordered records of one escalator whose (service/local) date is in ``date_range``."""
        if partition not in PARTITIONS:
            raise StoreError(f"unknown partition {partition!r}")
        if escalator not in self.fleet_by_id() and escalator not in self.escalators(partition):
            raise StoreError(f"unknown escalator {escalator}")
        if partition == "raw_energy":
            return self._query_energy(escalator, date_range)
        if partition == "raw_vibration":
            return self._query_spectra(escalator, date_range)
        if partition == "derived_daily":
            return iter(
                d for d in self.read_daily(escalator)
                if date_range is None or date_range[0] <= d.service_date <= date_range[1]
            )
        if partition == "derived_at":
            return iter(
                r for r in self.read_at(escalator)
                if date_range is None or date_range[0] <= r.timestamp.astimezone(self.tz).date() <= date_range[1]
            )
        raise StoreError(f"partition {partition!r} is not keyed by escalator")

    def _query_energy(self, escalator: int, date_range) -> Iterator[EnergyMinute]:
        for path in self._day_files(self.root / "raw_energy" / str(escalator), date_range):
            with open(path, newline="") as fh:
                r = csv.reader(fh)
                next(r)
                for row in r:
                    yield EnergyMinute(
                        int(row[0]),
                        parse_utc_iso(row[1]),
                        float(row[2]),
                        float(row[3]),
                        float(row[4]) if row[4] else None,
                        float(row[5]) if row[5] else None,
                    )

    def _query_spectra(self, escalator: int, date_range) -> Iterator[SpectrumRecord]:
        base = self.root / "raw_vibration" / str(escalator)
        paths = []
        if base.exists():
            for point_dir in sorted(base.iterdir(), key=lambda p: int(p.name)):
                paths.extend(self._day_files(point_dir, date_range))
        recs = []
        for path in paths:
            for line in path.read_text().splitlines():
                if line:
                    recs.append(spectrum_from_json(json.loads(line)))
        recs.sort(key=lambda s: (s.timestamp, s.point_id))
        return iter(recs)

    def profiles(self, escalator: int, date_range=None) -> list[ServiceDayProfile]:
        """Service-day profiles straight from the energy partitions (NaN = missing minute)."""
        out = []
        for path in self._day_files(self.root / "raw_energy" / str(escalator), date_range):
            sd = date.fromisoformat(path.stem)
            arr = np.full(MINUTES_PER_DAY, np.nan)
            start = datetime.combine(sd, datetime.min.time(), self.tz).timestamp() + 4 * 3600
            with open(path, newline="") as fh:
                r = csv.reader(fh)
                next(r)
                for row in r:
                    slot = int(round((parse_utc_iso(row[1]).timestamp() - start) / 60))
                    arr[slot] = float(row[2]) + float(row[3])
            out.append(ServiceDayProfile(escalator, sd, arr, self.tz))
        return out

    def energy_dates(self, escalator: int) -> list[date]:
        return [date.fromisoformat(p.stem) for p in self._day_files(self.root / "raw_energy" / str(escalator), None)]

    # -- derived data -----------------------------------------------------

    def write_daily(self, features: Iterable[DailyFeatures]) -> None:
        """Upsert daily features, one file per escalator."""
        by_esc: dict[int, list[DailyFeatures]] = {}
        for f in features:
            by_esc.setdefault(f.escalator_id, []).append(f)
        for esc, new in sorted(by_esc.items()):
            rows = {d.service_date: d for d in self.read_daily(esc)}
            rows.update({d.service_date: d for d in new})
            text = _csv_text(
                DAILY_COLUMNS,
                (
                    [str(d.escalator_id), d.service_date.isoformat(), str(d.working_min),
                     fnum(d.fixed_loss_wh_min), fnum(d.variable_loss_wh), fnum(d.passengers),
                     str(d.corrective_events), str(d.preventive_events), fnum(d.missing_fraction)]
                    for _, d in sorted(rows.items())
                ),
            )
            self._write_tracked(self.root / "derived_daily" / f"{esc}.csv", text)

    def read_daily(self, escalator: int) -> list[DailyFeatures]:
        path = self.root / "derived_daily" / f"{escalator}.csv"
        if not path.exists():
            return []
        with open(path, newline="") as fh:
            return [
                DailyFeatures(
                    escalator_id=int(r["escalator_id"]),
                    service_date=date.fromisoformat(r["service_date"]),
                    working_min=int(r["working_min"]),
                    fixed_loss_wh_min=float(r["fixed_loss_wh_min"]),
                    variable_loss_wh=float(r["variable_loss_wh"]),
                    passengers=float(r["passengers"]),
                    corrective_events=int(r["corrective_events"]),
                    preventive_events=int(r["preventive_events"]),
                    missing_fraction=float(r["missing_fraction"]),
                )
                for r in csv.DictReader(fh)
            ]

    def write_at(self, records: Iterable[AtRecord]) -> None:
        """Upsert reduced A_t records keyed by (point, timestamp)."""
        by_esc: dict[int, list[AtRecord]] = {}
        for r in records:
            by_esc.setdefault(r.escalator_id, []).append(r)
        for esc, new in sorted(by_esc.items()):
            rows = {(r.timestamp, r.point_id): r for r in self.read_at(esc)}
            rows.update({(r.timestamp, r.point_id): r for r in new})
            text = _csv_text(
                AT_COLUMNS,
                (
                    [str(r.escalator_id), str(r.point_id), to_utc_iso(r.timestamp), fnum(r.at_value), r.status.value]
                    for _, r in sorted(rows.items())
                ),
            )
            self._write_tracked(self.root / "derived_at" / f"{esc}.csv", text)

    def read_at(self, escalator: int) -> list[AtRecord]:
        path = self.root / "derived_at" / f"{escalator}.csv"
        if not path.exists():
            return []
        with open(path, newline="") as fh:
            return [
                AtRecord(
                    int(r["escalator_id"]),
                    int(r["point_id"]),
                    parse_utc_iso(r["timestamp_utc"]),
                    float(r["at_g"]),
                    Status(r["status"]),
                )
                for r in csv.DictReader(fh)
            ]

    def write_quarter(self, quarter: Quarter, features: Iterable[QuarterFeatures]) -> Path:
        rows = []
        for f in sorted(features, key=lambda f: f.escalator_id):
            t, p, l, n, c = f.normalized
            rows.append(
                [str(f.escalator_id), str(quarter.year), str(quarter.quarter), fnum(f.age_years_at_quarter),
                 fnum(f.working_time_raw), fnum(f.passenger_load_raw), fnum(f.fixed_loss_residual_raw),
                 fnum(f.exceedance_area_raw), str(f.fault_count_raw),
                 fnum(t), fnum(p), fnum(n), fnum(l), fnum(c), fnum(f.lhi),
                 str(f.days_used), str(f.days_excluded)]
            )
        path = self.root / "quarters" / f"{quarter}.csv"
        self._write_tracked(path, _csv_text(QUARTER_COLUMNS, rows))
        return path

    def read_quarter(self, quarter: Quarter) -> list[dict[str, str]]:
        path = self.root / "quarters" / f"{quarter}.csv"
        if not path.exists():
            raise StoreError(f"no quarterly features for {quarter}; run `features --quarter {quarter}` first")
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))

    def quarters(self) -> list[Quarter]:
        base = self.root / "quarters"
        return sorted(Quarter.parse(p.stem) for p in base.glob("*.csv")) if base.exists() else []

    def write_rul(self, quarter: Quarter, text: str) -> Path:
        path = self.root / "rul" / f"{quarter}.csv"
        self._write_tracked(path, text)
        return path

    def read_rul(self, quarter: Quarter) -> list[dict[str, str]]:
        path = self.root / "rul" / f"{quarter}.csv"
        if not path.exists():
            return []
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))

    def rul_quarters(self) -> list[Quarter]:
        base = self.root / "rul"
        return sorted(Quarter.parse(p.stem) for p in base.glob("*.csv")) if base.exists() else []

    def save_bands(self, selections: dict[FreqClass, BandSelection]) -> Path:
        path = self.root / "bands.json"
        payload = {fc.value: sel.to_json() for fc, sel in sorted(selections.items(), key=lambda kv: kv[0].value)}
        with self._lock:
            _atomic_write(path, json.dumps(payload, indent=2) + "\n")
        return path

    def load_bands(self) -> dict[FreqClass, BandSelection] | None:
        path = self.root / "bands.json"
        if not path.exists():
            return None
        return {FreqClass(k): BandSelection.from_json(v) for k, v in json.loads(path.read_text()).items()}

    def save_model(self, path: str | Path, model: LhiModel) -> Path:
        path = self.resolve(path)
        with self._lock:
            _atomic_write(path, json.dumps(model.to_json(), indent=2) + "\n")
        return path

    def resolve(self, path: str | Path) -> Path:
        """Relative paths live under the store root."""
        p = Path(path)
        return p if p.is_absolute() else self.root / p

    # -- verification -----------------------------------------------------

    def verify(self) -> list[str]:
        """Recount every partition file against the manifest; return the mismatches."""
        problems = []
        recorded = self.manifest().get("row_counts", {})
        actual = {}
        for part in PARTITIONS:
            base = self.root / part
            if base.exists():
                for p in sorted(base.rglob("*")):
                    if p.is_file() and not p.name.startswith("."):
                        actual[p.relative_to(self.root).as_posix()] = _count_rows(p)
        for rel in sorted(set(recorded) | set(actual)):
            if rel not in actual:
                problems.append(f"{rel}: listed in manifest but missing")
            elif rel not in recorded:
                problems.append(f"{rel}: present but not in manifest")
            elif recorded[rel] != actual[rel]:
                problems.append(f"{rel}: manifest says {recorded[rel]} rows, file has {actual[rel]}")
        return problems


def spectrum_from_json(d: dict) -> SpectrumRecord:
    return SpectrumRecord(
        int(d["escalator_id"]),
        int(d["point_id"]),
        parse_utc_iso(d["timestamp_utc"]),
        float(d["bin_hz"]),
        np.asarray(d["magnitudes"], dtype=float),
    )
