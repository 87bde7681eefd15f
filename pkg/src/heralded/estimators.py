"""Source characterisation formulas.

Heralding efficiency, twin-arm transmission, pairs per pulse from count rates
or from the side/main peak ratio, conditional g2 (first-order closed form and
a Monte Carlo HBT count), and rescaling of herald rates to p = 0.1.

Count rates are passed in Hz together with the integration time, from which
Poisson errors are derived.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import EstimateError
from .montecarlo import chunk_rng

# Relative calibration uncertainty of detector efficiencies.
EFFICIENCY_SYSTEMATIC = 0.10

REPORT_SCHEMA = "heralded.estimate-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class Estimate:
    value: float
    stat: float = 0.0  # 1 sigma statistical
    sys: float = 0.0  # 1 sigma systematic

    @property
    def sigma(self):
        return math.hypot(self.stat, self.sys)

    def __float__(self):
        return float(self.value)


def _poisson_rel(rate, duration):
    counts = rate * duration
    return 1.0 / math.sqrt(counts) if counts > 0 else math.inf


def heralding_efficiency(coincidence_rate, herald_rate, eta_idler, duration=1.0,
                         coincidence_sigma=None, eta_rel_sys=EFFICIENCY_SYSTEMATIC):
    """eta_H = C / (S_810 * eta_1550).

    ``coincidence_rate`` and ``herald_rate`` are accidental- and
    dark-corrected rates (Hz). ``coincidence_sigma`` overrides the plain
    Poisson error on C (e.g. after side-peak subtraction), in Hz.
    """
    if herald_rate <= 0:
        raise EstimateError("heralding efficiency undefined for zero herald rate")
    if eta_idler <= 0:
        raise EstimateError("idler detector efficiency must be > 0")
    value = coincidence_rate / (herald_rate * eta_idler)
    if coincidence_rate > 0:
        rel_c = (coincidence_sigma / coincidence_rate if coincidence_sigma is not None
                 else _poisson_rel(coincidence_rate, duration))
    else:
        rel_c = 0.0
    rel_s = _poisson_rel(herald_rate, duration)
    stat = abs(value) * math.hypot(rel_c, rel_s)
    return Estimate(value, stat, abs(value) * eta_rel_sys)


def twin_transmission(coincidence_rate, idler_rate, eta_signal, duration=1.0,
                      coincidence_sigma=None, eta_rel_sys=EFFICIENCY_SYSTEMATIC):
    """t_810 = C' / (S_1550 * eta_810), idler detector gated but not triggered."""
    if idler_rate <= 0:
        raise EstimateError("twin transmission undefined for zero idler rate")
    if eta_signal <= 0:
        raise EstimateError("signal detector efficiency must be > 0")
    value = coincidence_rate / (idler_rate * eta_signal)
    if coincidence_rate > 0:
        rel_c = (coincidence_sigma / coincidence_rate if coincidence_sigma is not None
                 else _poisson_rel(coincidence_rate, duration))
    else:
        rel_c = 0.0
    stat = abs(value) * math.hypot(rel_c, _poisson_rel(idler_rate, duration))
    return Estimate(value, stat, abs(value) * eta_rel_sys)


def pairs_per_pulse_from_rates(herald_rate, rep_rate, t_signal, eta_signal,
                               duration=1.0, modes=None):
    """p = S_810 / (R_rep * t_810 * eta_810).

    ``herald_rate`` must already be dead-time and dark corrected. With
    ``modes`` given (``math.inf`` for Poisson) the herald click probability
    per pulse, 1 - (1 + p*eta_b/N)^-N, is inverted exactly instead; both
    agree to first order in p.
    """
    denom = rep_rate * t_signal * eta_signal
    if denom <= 0:
        raise EstimateError("rep rate, transmission and efficiency must be > 0")
    if modes is None:
        value = herald_rate / denom
        deriv = 1.0 / denom
    else:
        eta_b = t_signal * eta_signal
        click = herald_rate / rep_rate
        if not 0 <= click < 1:
            raise EstimateError(f"herald probability per pulse {click} outside [0, 1)")
        if math.isinf(modes):
            value = -math.log1p(-click) / eta_b
            deriv = 1.0 / ((1 - click) * eta_b * rep_rate)
        else:
            value = modes * ((1 - click) ** (-1.0 / modes) - 1) / eta_b
            deriv = (1 - click) ** (-1.0 / modes - 1) / (eta_b * rep_rate)
    stat = deriv * math.sqrt(max(herald_rate, 0.0) * duration) / duration
    return Estimate(value, stat)


def pairs_per_pulse_from_sidepeaks(pa, dark_floor=0.0):
    """p from the side/main integral ratio r: p = r / (1 - r).

    Inverts r = p / (1 + p); for small p this is p ~ r. ``dark_floor`` is an
    expected number of dark-count coincidences per window, removed from both
    the side and main integrals before taking the ratio (0 keeps the raw
    ratio).
    """
    main = pa.main.counts - dark_floor
    side = pa.accidental - dark_floor
    if main <= 0:
        raise EstimateError("empty main peak")
    side = max(side, 0.0)
    r = side / main
    if r >= 1:
        raise EstimateError(f"side/main ratio {r:.3f} >= 1: inconsistent histogram")
    value = r / (1 - r)
    n_acc = pa.n_accidental
    var_side = pa.accidental / n_acc
    if side > 0:
        rel = math.sqrt(var_side / side ** 2 + pa.main.counts / main ** 2)
    else:
        rel = 0.0
    sigma_r = r * rel if side > 0 else math.sqrt(max(var_side, 1.0)) / main
    return Estimate(value, sigma_r / (1 - r) ** 2)


def g2_analytic(p, modes, eta_b):
    """First-order conditional g2: (1 + 1/N) * (2 - eta_b) * p.

    Valid for p << 1 (use p < 0.2); ``modes=math.inf`` is the fully
    multimode limit f_N = 1.
    """
    if modes < 1:
        raise ValueError("mode number must be >= 1")
    if not 0 <= eta_b <= 1:
        raise ValueError("eta_b must be in [0, 1]")
    return (1.0 + 1.0 / modes) * (2.0 - eta_b) * p


@dataclass(frozen=True)
class G2Result:
    value: float
    sigma: float
    heralds: int  # conditioning events (pulses when unconditioned)
    singles_1: int
    singles_2: int
    doubles: int


def g2_montecarlo(config, splitter_ratio=0.5, conditioned=True,
                  heralded_transmission=1.0, eta_b=None):
    """HBT estimate of g2 on the idler arm, optionally conditioned on a herald.

    The idler photons are split with ``splitter_ratio`` onto two ideal click
    detectors; g2 = N_12 * N_h / (N_1 * N_2) counted over herald windows
    (over all pulses when ``conditioned`` is False). ``eta_b`` defaults to
    t_810 * eta_810 of ``config``. Only pulses with at least one pair are
    drawn, since every other pulse contributes to none of the counts.
    """
    stats = config.pair_statistics
    if eta_b is None:
        eta_b = config.signal.transmission * config.signal_detector.efficiency
    table = stats.table()
    q = 1.0 - table[0]
    cdf = np.cumsum(table[1:]) / q if q > 0 else None
    h = n1 = n2 = n12 = 0
    for i in range(config.n_chunks):
        rng = chunk_rng(config.seed, i)
        count = min(config.chunk_size, config.n_slices - i * config.chunk_size)
        m = int(rng.binomial(count, q)) if q > 0 else 0
        if not m:
            continue
        n = 1 + np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), len(cdf) - 1)
        herald = rng.binomial(n, eta_b) > 0 if conditioned else np.ones(m, dtype=bool)
        k = rng.binomial(n, heralded_transmission)
        k1 = rng.binomial(k, splitter_ratio)
        c1 = (k1 > 0) & herald
        c2 = ((k - k1) > 0) & herald
        h += int(herald.sum())
        n1 += int(c1.sum())
        n2 += int(c2.sum())
        n12 += int((c1 & c2).sum())
    if not conditioned:
        h = config.n_slices
    if h == 0:
        raise EstimateError("no herald events")
    if n1 == 0 or n2 == 0:
        raise EstimateError("no clicks on one of the HBT detectors")
    value = n12 * h / (n1 * n2)
    # dominated by the double-click count
    rel = math.sqrt(1.0 / n12 + 1.0 / n1 + 1.0 / n2) if n12 else math.inf
    return G2Result(value, value * rel if n12 else math.inf, h, n1, n2, n12)


def scale_herald_rate(rate, p, target=0.1):
    """Herald rate linearly rescaled to ``target`` pairs per pulse.

    No dead-time correction is applied.
    """
    if p <= 0:
        raise EstimateError("cannot rescale a herald rate measured at p = 0")
    return rate * target / p


@dataclass
class EstimateReport:
    """Outcome of one characterisation run.

    Uncertainties are 1 sigma statistical; ``None`` marks quantities that
    were not measured.
    """

    name: str
    heralding_efficiency: float | None = None
    heralding_efficiency_sigma: float | None = None
    t_810: float | None = None
    t_810_sigma: float | None = None
    p_from_rates: float | None = None
    p_from_rates_sigma: float | None = None
    p_from_sidepeaks: float | None = None
    p_from_sidepeaks_sigma: float | None = None
    g2_analytic: float | None = None
    g2_montecarlo: float | None = None
    g2_montecarlo_sigma: float | None = None
    herald_rate: float | None = None  # Hz, as measured
    herald_rate_sigma: float | None = None
    herald_rate_at_p01: float | None = None  # Hz
    coincidence_rate: float | None = None  # Hz, net triggered coincidences
    coincidence_rate_sigma: float | None = None
    pump_power: float | None = None  # W
    bandwidth_nm: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        data = {"schema": REPORT_SCHEMA, "version": REPORT_VERSION}
        data.update(asdict(self))
        return data

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False,
                          default=_json_default)
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data):
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not an estimate report: schema {data.get('schema')!r}")
        if data.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {data.get('version')!r}")
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")
