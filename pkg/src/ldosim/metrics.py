"""Waveform and response measurements plus the regulator figure-of-merit
arithmetic: excursions, settling, response time, FOM, current efficiency,
quiescent-current reduction and PSR band margins.

dB convention: responses are stored as signed dB where negative means
attenuation, so a "40 dB attenuation" requirement reads ``<= -40 dB``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ac import FrequencyResponse
from .transient import TransientTrace


@dataclass
class MetricsReport:
    undershoot_v: float
    overshoot_v: float
    settling_time_s: float | None
    response_time_s: float
    fom_s: float
    current_efficiency: float
    psr_worst_db_low: float
    psr_worst_db_wide: float
    iq_reduction_factor: float

    def rows(self):
        """(metric, value, unit) rows; values at 6 significant digits."""
        settle = self.settling_time_s
        return [
            ("undershoot", self.undershoot_v, "V"),
            ("overshoot", self.overshoot_v, "V"),
            ("settling_time", settle if settle is not None else math.nan, "s"),
            ("response_time", self.response_time_s, "s"),
            ("fom", self.fom_s, "s"),
            ("current_efficiency", self.current_efficiency, "fraction"),
            ("psr_worst_low_band", self.psr_worst_db_low, "dB"),
            ("psr_worst_wide_band", self.psr_worst_db_wide, "dB"),
            ("iq_reduction", self.iq_reduction_factor, "ratio"),
        ]


def excursions(trace: TransientTrace, output_label: str,
               target_v: float) -> tuple[float, float]:
    """(undershoot, overshoot) of the labelled node against the target."""
    v = trace.voltage(output_label)
    return (max(0.0, target_v - float(np.min(v))),
            max(0.0, float(np.max(v)) - target_v))


def settling_time(trace: TransientTrace, output_label: str, target_v: float,
                  band_frac: float = 0.01, from_time_s: float = 0.0):
    """Time from ``from_time_s`` until the output stays inside the band.

    The band is ``band_frac * target_v`` around the target.  Returns None
    when the trace never settles (distinct from an error).  The entry time
    is interpolated on the last band crossing for sub-sample resolution.
    """
    if not (0.0 < band_frac <= 0.1):
        raise ValueError("band_frac must be in (0, 0.1]")
    t = trace.times_s
    if not (t[0] <= from_time_s <= t[-1]):
        raise ValueError("from_time_s outside the trace")
    v = trace.voltage(output_label)
    sel = t >= from_time_s
    t = t[sel]
    v = v[sel]
    band = band_frac * target_v
    err = np.abs(v - target_v)
    outside = err > band
    if not outside.any():
        return 0.0
    last_out = int(np.where(outside)[0][-1])
    if last_out == len(t) - 1:
        return None
    # interpolate the band entry between the last outside sample and the next
    e0, e1 = err[last_out], err[last_out + 1]
    t0, t1 = t[last_out], t[last_out + 1]
    frac = (e0 - band) / (e0 - e1) if e1 != e0 else 1.0
    return float(t0 + frac * (t1 - t0) - from_time_s)


def response_time(c_load_f: float, delta_vout_v: float,
                  i_load_max_a: float) -> float:
    """Effective response speed: load capacitance times the output excursion
    over the maximum load current."""
    if c_load_f <= 0.0 or i_load_max_a <= 0.0:
        raise ValueError("c_load_f and i_load_max_a must be positive")
    if delta_vout_v < 0.0:
        raise ValueError("delta_vout_v must be >= 0")
    if delta_vout_v == 0.0:
        return 0.0
    return c_load_f * delta_vout_v / i_load_max_a


def fom(response_time_s: float, iq_a: float, i_load_max_a: float) -> float:
    """Speed-per-quiescent-current figure of merit; lower is better."""
    if response_time_s <= 0.0 or i_load_max_a <= 0.0:
        raise ValueError("response_time_s and i_load_max_a must be positive")
    if iq_a < 0.0:
        raise ValueError("iq_a must be >= 0")
    return response_time_s * iq_a / i_load_max_a


def current_efficiency(i_load_a: float, iq_a: float) -> float:
    """Load current over total drawn current."""
    if iq_a <= 0.0:
        raise ValueError("iq_a must be > 0")
    if i_load_a < 0.0:
        raise ValueError("i_load_a must be >= 0")
    return i_load_a / (i_load_a + iq_a)


def iq_reduction(iq_conventional_a: float, iq_dual_a: float) -> float:
    """Quiescent-current ratio of an always-high baseline to the dual-range
    scheme."""
    if iq_conventional_a <= 0.0 or iq_dual_a <= 0.0:
        raise ValueError("quiescent currents must be positive")
    return iq_conventional_a / iq_dual_a


def _band_worst_db(freqs, mag_db, lo_hz, hi_hz):
    if lo_hz < freqs[0] or hi_hz > freqs[-1]:
        raise ValueError("band outside the swept range")
    lx = np.log10(freqs)
    inside = (freqs >= lo_hz) & (freqs <= hi_hz)
    candidates = list(mag_db[inside])
    for edge in (lo_hz, hi_hz):
        candidates.append(float(np.interp(math.log10(edge), lx, mag_db)))
    return float(max(candidates))


def psr_margins(response: FrequencyResponse,
                band_low_hz: tuple = (1e3, 1e4),
                band_wide_hz: tuple = (1e3, 1e7)) -> tuple[float, float]:
    """Worst (largest) rejection in dB over the low and wide bands.

    Band edges are included via log-frequency interpolation even when they
    fall between grid points.
    """
    mag_db = response.mag_db()
    worst_low = _band_worst_db(response.freqs_hz, mag_db, *band_low_hz)
    worst_wide = _band_worst_db(response.freqs_hz, mag_db, *band_wide_hz)
    return worst_low, worst_wide


def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,value,unit\n")
        for name, value, unit in report.rows():
            fh.write(f"{name},{value:.5e},{unit}\n")


def format_metrics_table(report: MetricsReport) -> str:
    rows = report.rows()
    name_w = max(len(r[0]) for r in rows)
    lines = [f"{'metric':<{name_w}}  {'value':>13}  unit"]
    for name, value, unit in rows:
        lines.append(f"{name:<{name_w}}  {value:>13.6g}  {unit}")
    return "\n".join(lines) + "\n"
