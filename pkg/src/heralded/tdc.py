"""Software TDC: start-stop cross-correlation histograms and peak integration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .errors import ConfigError


@dataclass
class Histogram:
    """Counts of t_b - t_a over [-range_ps, range_ps) in bins of ``bin_width``."""

    bin_width: int
    range_ps: int
    counts: np.ndarray  # int64
    n_a: int
    n_b: int

    @property
    def edges(self):
        return np.arange(-self.range_ps, self.range_ps + 1, self.bin_width, dtype=np.int64)

    @property
    def centers(self):
        return self.edges[:-1] + self.bin_width / 2

    def __add__(self, other):
        if (self.bin_width, self.range_ps) != (other.bin_width, other.range_ps):
            raise ValueError("cannot merge histograms with different binning")
        return Histogram(self.bin_width, self.range_ps, self.counts + other.counts,
                         self.n_a + other.n_a, self.n_b + other.n_b)

    def mirrored(self):
        """Histogram of t_a - t_b."""
        return Histogram(self.bin_width, self.range_ps, self.counts[::-1].copy(),
                         self.n_b, self.n_a)

    def rebin(self, factor):
        if len(self.counts) % factor:
            raise ValueError(f"{len(self.counts)} bins not divisible by {factor}")
        return Histogram(self.bin_width * factor, self.range_ps,
                         self.counts.reshape(-1, factor).sum(axis=1), self.n_a, self.n_b)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("bin_center_ps,counts\n")
            for x, n in zip(self.centers, self.counts):
                fh.write(f"{x:.1f},{int(n)}\n")


@numba.njit(cache=True)
def _fill(a, b, lo, width, nbins, counts):
    nb = len(b)
    j0 = 0
    span = width * nbins
    for i in range(len(a)):
        start = a[i] + lo
        while j0 < nb and b[j0] < start:
            j0 += 1
        j = j0
        while j < nb and b[j] - start < span:
            counts[(b[j] - start) // width] += 1
            j += 1


def _as_sorted(x, name):
    t = np.asarray(getattr(x, "timestamps", x), dtype=np.int64)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError(f"{name} is not time-sorted")
    return t


def correlate(stream_a, stream_b, bin_width=100, range_ps=10_000):
    """Histogram of b - a time differences within +-range_ps.

    Two-pointer sweep over both sorted streams; cost is linear in the stream
    lengths plus the number of pairs inside the range.
    """
    bin_width = int(bin_width)
    range_ps = int(range_ps)
    if bin_width <= 0:
        raise ValueError("bin width must be > 0")
    if range_ps <= 0 or (2 * range_ps) % bin_width:
        raise ValueError("bin width must divide the full range 2*range_ps")
    a = _as_sorted(stream_a, "stream_a")
    b = _as_sorted(stream_b, "stream_b")
    nbins = 2 * range_ps // bin_width
    counts = np.zeros(nbins, dtype=np.int64)
    _fill(a, b, -range_ps, bin_width, nbins, counts)
    return Histogram(bin_width, range_ps, counts, len(a), len(b))


@dataclass
class PeakWindow:
    offset: int  # peak index k, window centred at centre + k*period
    low: float
    high: float
    counts: int


@dataclass
class PeakAnalysis:
    main: PeakWindow
    sides: list
    accidental: float  # estimate for the main window
    period: float
    half_width: float
    n_accidental: int = 1  # side windows averaged into ``accidental``

    @property
    def side_counts(self):
        return np.array([w.counts for w in self.sides], dtype=np.int64)

    def side(self, k):
        for w in self.sides:
            if w.offset == k:
                return w
        raise KeyError(k)

    def to_json(self, path=None):
        data = {
            "period_ps": self.period,
            "half_width_ps": self.half_width,
            "main": asdict(self.main),
            "sides": [asdict(w) for w in self.sides],
            "accidental": self.accidental,
            "n_accidental": self.n_accidental,
        }
        text = json.dumps(data, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text + "\n")
        return text


def analyze_peaks(h, period_ps, half_width_ps, n_side=1, centre_ps=0.0,
                  single_side=False):
    """Integrate the main peak and ``n_side`` side peaks on each side.

    A bin belongs to a window when its centre lies in
    [centre - half_width, centre + half_width]. The accidental estimate for
    the main window is the mean of all side-peak integrals, or only the +1
    peak with ``single_side=True``.
    """
    if 2 * half_width_ps >= period_ps:
        raise ConfigError(
            f"windows of half-width {half_width_ps} ps overlap at period {period_ps} ps")
    reach = n_side * period_ps + half_width_ps
    if abs(centre_ps) + reach > h.range_ps:
        raise ConfigError(
            f"histogram range +-{h.range_ps} ps does not cover {n_side} side peaks")
    x = h.centers

    def window(k):
        c = centre_ps + k * period_ps
        lo, hi = c - half_width_ps, c + half_width_ps
        sel = (x >= lo) & (x <= hi)
        return PeakWindow(k, lo, hi, int(h.counts[sel].sum()))

    main = window(0)
    sides = [window(k) for k in range(-n_side, n_side + 1) if k != 0]
    if single_side:
        acc, n_acc = float(window(1).counts), 1
    else:
        acc = float(np.mean([w.counts for w in sides])) if sides else 0.0
        n_acc = max(len(sides), 1)
    return PeakAnalysis(main, sides, acc, float(period_ps), float(half_width_ps), n_acc)


@dataclass(frozen=True)
class NetCoincidences:
    value: float
    sigma: float
    raw: int
    accidental: float
    clipped: bool


def net_coincidences(pa):
    """Main-peak integral minus the accidental estimate, floored at zero."""
    if not pa.sides:
        raise ValueError("need at least one side peak")
    raw = pa.main.counts
    acc = pa.accidental
    net = raw - acc
    # Poisson errors: main window plus the mean of n_accidental side windows
    sigma = float(np.sqrt(raw + acc / pa.n_accidental))
    return NetCoincidences(max(net, 0.0), sigma, raw, acc, net < 0)


def default_half_width(jitter_a, jitter_b):
    """3 sigma of the combined Gaussian jitter, in ps."""
    return 3.0 * float(np.hypot(jitter_a, jitter_b)) * 1e12
