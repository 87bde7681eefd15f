"""Comparison table of heralded single-photon sources.

Rows for this source come from :class:`EstimateReport` objects; literature
rows are read from a CSV file (``data/table1_literature.csv`` by default).
Where a literature row marks its p = 0.1 rate as ``calculated`` the value is
recomputed from R^H and p with :func:`estimators.scale_herald_rate`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources

from .errors import HeraldedError
from .estimators import EFFICIENCY_SYSTEMATIC, scale_herald_rate

LITERATURE_COLUMNS = ("source", "year", "process", "sync", "bandwidth_nm", "pump_mW", "p",
                      "p_unit", "RH_kHz", "RH_p01_kHz", "RH_p01_kind", "eta_H")
NOT_REPORTED = "NR"
DASH = "-"
HEADER = ("Source", "Year", "Process", "Sync", "dl^H [nm]", "P_pump [mW]", "p",
          "R^H [kHz]", "R^H_p=0.1 [kHz]", "eta^H [%]")

# reports within this relative distance of p = 0.1 count as measured there
MEASURED_AT_P01 = 0.1


class TableError(HeraldedError, ValueError):
    pass


def round_half_up(x, digits=0):
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def format_rate(khz):
    """Rates below 1000 kHz as integers, larger ones as ``m·10^e``."""
    if khz is None or not math.isfinite(khz):
        return DASH
    if khz < 1000:
        return f"{round_half_up(khz):.0f}"
    e = int(math.floor(math.log10(khz)))
    m = round_half_up(khz / 10 ** e, 1)
    if m >= 10:
        m, e = m / 10, e + 1
    text = f"{m:.1f}".rstrip("0").rstrip(".")
    return f"{text}·10^{e}"


def format_p(p):
    return DASH if p is None else f"{p:.1g}"


@dataclass(frozen=True)
class LiteratureRow:
    source: str
    year: str
    process: str
    sync: str
    bandwidth_nm: str
    pump_mW: str
    p: str
    p_unit: str
    RH_kHz: str
    RH_p01_kHz: str
    RH_p01_kind: str
    eta_H: str

    def p_value(self):
        return None if self.p == NOT_REPORTED else float(self.p)

    def rh_value(self):
        return None if self.RH_kHz == NOT_REPORTED else float(self.RH_kHz)

    def scaled_rate(self):
        """R^H at p = 0.1 in kHz, or None where p or R^H is not reported."""
        if self.RH_p01_kind != "calculated":
            return None if self.RH_p01_kHz in (DASH, "") else float(self.RH_p01_kHz)
        p, rh = self.p_value(), self.rh_value()
        if p is None or rh is None:
            return None
        return scale_herald_rate(rh, p)

    def cells(self):
        p = self.p if self.p == NOT_REPORTED else self.p + ("/ns" if self.p_unit == "ns" else "")
        return (self.source, self.year, self.process, self.sync, self.bandwidth_nm,
                self.pump_mW, p, self.RH_kHz, format_rate(self.scaled_rate()), self.eta_H)


def load_literature(path=None):
    if path is None:
        ref = resources.files("heralded") / "data" / "table1_literature.csv"
        text = ref.read_text()
    else:
        with open(path, newline="") as fh:
            text = fh.read()
    reader = csv.DictReader(text.splitlines())
    missing = [c for c in LITERATURE_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise TableError(f"literature table missing column(s): {', '.join(missing)}")
    rows = []
    for i, rec in enumerate(reader, start=2):
        if any(rec[c] is None or rec[c].strip() == "" for c in LITERATURE_COLUMNS
               if c != "RH_p01_kHz"):
            raise TableError(f"literature table line {i}: empty field")
        rows.append(LiteratureRow(**{c: rec[c].strip() for c in LITERATURE_COLUMNS}))
    return rows


def report_cells(report, year="2012", process="SPDC", sync="SYNC"):
    """Table cells for one estimate report of this source."""
    p = report.p_from_rates
    rh = None if report.herald_rate is None else report.herald_rate / 1e3
    scaled = ""
    if rh is not None and p is not None and abs(p / 0.1 - 1) < MEASURED_AT_P01:
        scaled = format_rate(rh) + " *"
    eta = report.heralding_efficiency
    if eta is None:
        eta_text = DASH
    else:
        sigma = math.hypot(report.heralding_efficiency_sigma or 0.0, EFFICIENCY_SYSTEMATIC * eta)
        eta_text = f"{round_half_up(100 * eta):.0f}±{round_half_up(100 * sigma):.0f}"
    bw = DASH if report.bandwidth_nm is None else f"{round_half_up(report.bandwidth_nm):.0f}"
    power = DASH if report.pump_power is None else f"{report.pump_power * 1e3:.2g}"
    return ("This work", year, process, sync, bw, power, format_p(p), format_rate(rh),
            scaled, eta_text)


def table_one(reports, literature=None):
    """Render the comparison table as plain text.

    ``literature`` is a list of :class:`LiteratureRow` (default: the bundled
    file). Rows appear in input order: reports first, then literature.
    """
    if literature is None:
        literature = load_literature()
    rows = [report_cells(r) for r in reports] + [row.cells() for row in literature]
    widths = [max(len(str(r[k])) for r in [HEADER] + rows) for k in range(len(HEADER))]

    def line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [line(HEADER), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    out.append("")
    out.append("NR: not reported. *: measured at p = 0.1; other p = 0.1 rates are "
               "R^H * 0.1 / p.")
    return "\n".join(out) + "\n"
