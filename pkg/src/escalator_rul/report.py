"""Static HTML report with inline SVG charts, rendered from store contents only."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import date
from enum import Enum
from html import escape
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import SENSOR_POINTS, Quarter, default_thresholds
from .health import LhiModel
from .rul import shifted_curve
from .store import Store
from .vibration import Status, exceedance_curve

log = logging.getLogger(__name__)


class Sheet(str, Enum):
    OVERVIEW = "Overview"
    ENERGY = "Energy"
    VIBRATION = "Vibration"
    RUL = "Rul"


@dataclass(frozen=True)
class ReportSpec:
    escalators: tuple[int, ...]
    period_from: date
    period_to: date
    sheets: tuple[Sheet, ...] = tuple(Sheet)

    def __post_init__(self):
        if self.period_to < self.period_from:
            raise ValueError("report period is empty")
        if not self.sheets:
            raise ValueError("report needs at least one sheet")

    @classmethod
    def from_json(cls, d: dict) -> "ReportSpec":
        period = d["period"]
        sheets = d.get("sheets") or [s.value for s in Sheet]
        lookup = {s.value.lower(): s for s in Sheet}
        try:
            parsed = tuple(lookup[str(s).lower()] for s in sheets)
        except KeyError as exc:
            raise ValueError(f"unknown sheet {exc.args[0]!r}") from None
        return cls(
            escalators=tuple(int(e) for e in d.get("escalators", ())),
            period_from=date.fromisoformat(period["from"]),
            period_to=date.fromisoformat(period["to"]),
            sheets=parsed,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ReportSpec":
        return cls.from_json(json.loads(Path(path).read_text()))

    def contains(self, day: date) -> bool:
        return self.period_from <= day <= self.period_to


# -- SVG primitives ---------------------------------------------------------

W, H = 640, 240
PAD_L, PAD_R, PAD_T, PAD_B = 56, 12, 14, 28
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _n(x: float) -> str:
    return f"{x:.2f}"


@dataclass(frozen=True)
class Series:
    name: str
    xs: Sequence[float]
    ys: Sequence[float]
    color: str = COLORS[0]
    markers: Sequence[str] = ()  # per-point css class, drawn as circles when given


@dataclass(frozen=True)
class HLine:
    y: float
    label: str
    css: str


class _Axes:
    def __init__(self, xs: Iterable[float], ys: Iterable[float]):
        xs, ys = list(xs), list(ys)
        self.x0, self.x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
        self.y0, self.y1 = (min(0.0, min(ys)), max(ys)) if ys else (0.0, 1.0)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.y1 += 0.05 * (self.y1 - self.y0)

    def px(self, x: float) -> float:
        return PAD_L + (x - self.x0) / (self.x1 - self.x0) * (W - PAD_L - PAD_R)

    def py(self, y: float) -> float:
        return H - PAD_B - (y - self.y0) / (self.y1 - self.y0) * (H - PAD_T - PAD_B)


def svg_chart(
    series: Sequence[Series],
    *,
    hlines: Sequence[HLine] = (),
    annotations: Sequence[tuple[float, float, str]] = (),
    x_label: str = "",
    y_label: str = "",
    x_ticks: Sequence[tuple[float, str]] = (),
) -> str:
    """Line chart; horizontal reference lines are always inside the y-range."""
    all_x = [x for s in series for x in s.xs] + [a[0] for a in annotations]
    all_y = [y for s in series for y in s.ys] + [h.y for h in hlines] + [a[1] for a in annotations]
    ax = _Axes(all_x, all_y)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}">']
    out.append(
        f'<line class="axis" x1="{PAD_L}" y1="{H - PAD_B}" x2="{W - PAD_R}" y2="{H - PAD_B}"/>'
        f'<line class="axis" x1="{PAD_L}" y1="{PAD_T}" x2="{PAD_L}" y2="{H - PAD_B}"/>'
    )
    for v in np.linspace(ax.y0, ax.y1, 5):
        out.append(f'<text class="tick" x="{PAD_L - 4}" y="{_n(ax.py(v) + 3)}" text-anchor="end">{v:.3g}</text>')
    if not x_ticks:
        x_ticks = [(v, f"{v:.3g}") for v in np.linspace(ax.x0, ax.x1, 5)]
    for v, label in x_ticks:
        out.append(f'<text class="tick" x="{_n(ax.px(v))}" y="{H - PAD_B + 14}" text-anchor="middle">{escape(label)}</text>')
    if x_label:
        out.append(f'<text class="label" x="{W - PAD_R}" y="{H - 2}" text-anchor="end">{escape(x_label)}</text>')
    if y_label:
        out.append(f'<text class="label" x="4" y="{PAD_T - 2}">{escape(y_label)}</text>')
    for h in hlines:
        y = _n(ax.py(h.y))
        out.append(
            f'<line class="{h.css}" x1="{PAD_L}" y1="{y}" x2="{W - PAD_R}" y2="{y}" data-value="{h.y}"/>'
            f'<text class="{h.css}-label" x="{W - PAD_R - 2}" y="{_n(ax.py(h.y) - 3)}" text-anchor="end">{escape(h.label)}</text>'
        )
    for s in series:
        pts = " ".join(f"{_n(ax.px(x))},{_n(ax.py(y))}" for x, y in zip(s.xs, s.ys))
        if pts:
            out.append(
                f'<polyline fill="none" stroke="{s.color}" stroke-width="1.2" points="{pts}">'
                f"<title>{escape(s.name)}</title></polyline>"
            )
        for x, y, css in zip(s.xs, s.ys, s.markers):
            out.append(f'<circle class="{css}" cx="{_n(ax.px(x))}" cy="{_n(ax.py(y))}" r="2.5"/>')
    for x, y, text in annotations:
        out.append(
            f'<circle class="anchor" cx="{_n(ax.px(x))}" cy="{_n(ax.py(y))}" r="3.5"/>'
            f'<text class="annot" x="{_n(ax.px(x) + 6)}" y="{_n(ax.py(y) - 6)}">{escape(text)}</text>'
        )
    if len(series) > 1:
        for k, s in enumerate(series):
            out.append(
                f'<text class="legend" x="{PAD_L + 8 + 110 * (k % 5)}" y="{PAD_T + 10 + 12 * (k // 5)}" '
                f'fill="{s.color}">{escape(s.name)}</text>'
            )
    out.append("</svg>")
    return "".join(out)


def _no_data(title: str, why: str) -> str:
    return f'<div class="panel nodata"><h3>{escape(title)}</h3><p>no data: {escape(why)}</p></div>'


def _panel(title: str, body: str) -> str:
    return f'<div class="panel"><h3>{escape(title)}</h3>{body}</div>'


def _date_ticks(days: Sequence[date]) -> list[tuple[float, str]]:
    if not days:
        return []
    picks = sorted({days[0], days[len(days) // 2], days[-1]})
    return [(float(d.toordinal()), d.isoformat()) for d in picks]


# -- sheets -----------------------------------------------------------------

CSS = """
body{font-family:sans-serif;margin:16px;color:#222}
section{margin-bottom:28px}
.panel{border:1px solid #ccc;padding:8px;margin:8px 0}
.nodata{background:#f6f6f6;color:#777}
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px;text-align:right}
.axis{stroke:#333}.tick,.label,.legend,.annot{font-size:10px}
.alert-line{stroke:#e6a100;stroke-dasharray:4 3}.alarm-line{stroke:#d00;stroke-dasharray:4 3}
.alert-line-label{fill:#e6a100;font-size:10px}.alarm-line-label{fill:#d00;font-size:10px}
.end-line{stroke:#555;stroke-dasharray:2 2}.end-line-label{fill:#555;font-size:10px}
.pt{fill:#1f77b4}.pt.alert{fill:#e6a100}.pt.alarm{fill:#d00}.anchor{fill:#000}
""".strip()


class _Ctx:
    def __init__(self, store: Store, spec: ReportSpec):
        self.store = store
        self.spec = spec
        fleet = store.fleet_by_id() if (store.root / "fleet.json").exists() else {}
        self.fleet = fleet
        wanted = spec.escalators or tuple(sorted(fleet))
        self.escalators = tuple(e for e in wanted)

    def daily(self, esc: int):
        return [d for d in self.store.read_daily(esc) if self.spec.contains(d.service_date)]

    def at(self, esc: int):
        tz = self.store.tz
        return [r for r in self.store.read_at(esc) if self.spec.contains(r.timestamp.astimezone(tz).date())]


def _overview(ctx: _Ctx) -> str:
    rows = []
    for esc in ctx.escalators:
        meta = ctx.fleet.get(esc)
        recs = ctx.at(esc)
        n_alert = sum(r.status is Status.ALERT for r in recs)
        n_alarm = sum(r.status is Status.ALARM for r in recs)
        days = ctx.daily(esc)
        if meta is None and not recs and not days:
            continue
        rows.append(
            "<tr>"
            f"<td>{esc}</td>"
            f"<td>{escape(meta.direction.value) if meta else ''}</td>"
            f"<td>{meta.rise_m if meta else ''}</td>"
            f"<td>{len(days)}</td><td>{len(recs)}</td>"
            f'<td class="alert-count">{n_alert}</td><td class="alarm-count">{n_alarm}</td>'
            "</tr>"
        )
    if not rows:
        return _no_data("Fleet overview", "no escalators or derived data in the selected period")
    head = "<tr><th>escalator</th><th>direction</th><th>rise (m)</th><th>days</th><th>A_t records</th><th>alerts</th><th>alarms</th></tr>"
    return _panel("Fleet overview", f"<table>{head}{''.join(rows)}</table>")


def _energy(ctx: _Ctx) -> str:
    metrics = (
        ("Daily working time", "working minutes", lambda d: float(d.working_min)),
        ("Daily passenger count", "passengers", lambda d: d.passengers),
        ("Daily fixed loss", "Wh/min", lambda d: d.fixed_loss_wh_min),
    )
    per_esc = {esc: [d for d in ctx.daily(esc) if not d.flagged] for esc in ctx.escalators}
    per_esc = {e: v for e, v in per_esc.items() if v}
    if not per_esc:
        return _no_data("Energy", "no daily energy features in the selected period")
    all_days = sorted({d.service_date for v in per_esc.values() for d in v})
    panels = []
    for title, unit, get in metrics:
        series = []
        for k, (esc, days) in enumerate(sorted(per_esc.items())):
            pts = [(float(d.service_date.toordinal()), get(d)) for d in days if np.isfinite(get(d))]
            series.append(Series(f"#{esc}", [p[0] for p in pts], [p[1] for p in pts], COLORS[k % len(COLORS)]))
        panels.append(_panel(title, svg_chart(series, y_label=unit, x_ticks=_date_ticks(all_days))))
    return "".join(panels)


def _vibration(ctx: _Ctx) -> str:
    thresholds = default_thresholds()
    panels = []
    for esc in ctx.escalators:
        recs = ctx.at(esc)
        if not recs:
            continue
        for point in SENSOR_POINTS:
            pts = sorted((r for r in recs if r.point_id == point.point_id), key=lambda r: r.timestamp)
            if not pts:
                continue
            row = thresholds[point.location]
            lines = (HLine(row.alert_g, f"alert {row.alert_g}", "alert-line"), HLine(row.alarm_g, f"alarm {row.alarm_g}", "alarm-line"))
            xs = [r.timestamp.timestamp() / 86400.0 for r in pts]
            ys = [r.at_value for r in pts]
            marks = [f"pt {r.status.value.lower()}" for r in pts]
            n_alert = sum(r.status is Status.ALERT for r in pts)
            n_alarm = sum(r.status is Status.ALARM for r in pts)
            days = sorted({r.timestamp.astimezone(ctx.store.tz).date() for r in pts})
            ticks = [(float(d.toordinal() - 719163), d.isoformat()) for d in (days[0], days[-1])]
            series_chart = svg_chart(
                [Series(f"A_t point {point.point_id}", xs, ys, markers=marks)],
                hlines=lines, y_label="A_t (g)", x_ticks=ticks,
            )
            taus = np.linspace(0.0, max(max(ys), row.alarm_g) * 1.05, 101)
            curve = exceedance_curve(ys, taus)
            exc_chart = svg_chart(
                [Series("exceedance", taus.tolist(), curve.tolist())],
                hlines=(), x_label="A_t threshold (g)", y_label="P(A_t > tau)",
            )
            title = f"Escalator {esc} point {point.point_id} ({point.location.value}, {point.freq_class.value})"
            counts = (
                f'<p>records: {len(pts)}, alerts: <span class="alert-count">{n_alert}</span>, '
                f'alarms: <span class="alarm-count">{n_alarm}</span></p>'
            )
            panels.append(_panel(title, counts + series_chart + exc_chart))
    if not panels:
        return _no_data("Vibration", "no A_t records in the selected period")
    return "".join(panels)


def _rul_quarter(ctx: _Ctx) -> Quarter | None:
    quarters = [q for q in ctx.store.rul_quarters() if q.start <= ctx.spec.period_to and q.end >= ctx.spec.period_from]
    return quarters[-1] if quarters else None


def _rul(ctx: _Ctx) -> str:
    q = _rul_quarter(ctx)
    if q is None:
        return _no_data("Remaining useful life", "no RUL table overlaps the selected period")
    model_path = ctx.store.resolve(f"models/rul_{q}.json")
    if not model_path.exists():
        return _no_data("Remaining useful life", f"no model recorded for {q}")
    model = LhiModel.load(model_path)
    wanted = set(ctx.escalators)
    panels = []
    for row in ctx.store.read_rul(q):
        esc = int(row["escalator_id"])
        if wanted and esc not in wanted:
            continue
        y, age = float(row["lhi"]), float(row["actual_age"])
        t_max = max(model.t_end_years, age + float(row["rul"]), 0.0) + 2.0
        ages = np.linspace(0.0, t_max, 121)
        ref = [(t, float(model(t))) for t in ages if model(t) <= model.y_end] + [(model.t_end_years, model.y_end)]
        shifted = shifted_curve(y, age, model, ages.tolist())
        chart = svg_chart(
            [
                Series("reference", [p[0] for p in ref], [p[1] for p in ref], COLORS[0]),
                Series("shifted", [p[0] for p in shifted], [p[1] for p in shifted], COLORS[1]),
            ],
            hlines=(HLine(model.y_end, f"end of life {model.y_end:.4f}", "end-line"),),
            annotations=((age, y, f"RUL {row['rul']} years"),),
            x_label="age (years)", y_label="LHI",
        )
        body = (
            f'<p>quarter {q}: actual age {escape(row["actual_age"])}, LHI {escape(row["lhi"])}, '
            f'RUL <span class="rul">{escape(row["rul"])}</span> years</p>' + chart
        )
        panels.append(_panel(f"Escalator {esc}", body))
    if not panels:
        return _no_data("Remaining useful life", f"no selected escalators in the {q} RUL table")
    return "".join(panels)


RENDERERS = {Sheet.OVERVIEW: _overview, Sheet.ENERGY: _energy, Sheet.VIBRATION: _vibration, Sheet.RUL: _rul}


def render_report(spec: ReportSpec, store: Store) -> str:
    """Self-contained HTML; identical store contents and spec give identical bytes."""
    ctx = _Ctx(store, spec)
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        "<title>Escalator condition report</title>",
        f"<style>{CSS}</style></head><body>",
        "<h1>Escalator condition report</h1>",
        f"<p>period {spec.period_from.isoformat()} to {spec.period_to.isoformat()}; "
        f"escalators {', '.join(map(str, ctx.escalators)) or 'none'}</p>",
    ]
    for sheet in spec.sheets:
        body = RENDERERS[sheet](ctx)
        if "nodata" in body and 'class="panel"' not in body:
            log.warning("%s sheet has no data", sheet.value)
        parts.append(f'<section id="{sheet.value.lower()}"><h2>{sheet.value}</h2>{body}</section>')
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"


def count_no_data(html: str) -> int:
    return html.count('class="panel nodata"')
