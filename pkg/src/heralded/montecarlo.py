"""Discrete-event Monte Carlo of a pulsed or CW photon-pair source.

Pairs are drawn per pump pulse (or as a Poisson process in CW mode), each
photon independently survives its channel and is detected with the detector
efficiency. Dark counts, timing jitter, gating and non-paralyzable dead time
are then applied to produce time-sorted click streams for the two detectors.

The run is split into chunks of consecutive pulses. Every chunk owns an RNG
stream derived with :func:`chunk_seed`, so the candidate events of a chunk do
not depend on which worker produced them. Everything that couples chunks
(dead time, triggered gates) happens afterwards in one sequential merge, which
makes the output bitwise independent of the number of workers.
"""

from __future__ import annotations

import hashlib
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats as sps

from .errors import ConfigError

PHOTON = 0
DARK = 1

SIGNAL_CHANNEL = 0
IDLER_CHANNEL = 1

# Every timestamp is shifted by this offset so that jittered clicks of the
# first pulse stay positive.
TIME_ORIGIN_PS = 100_000

TOPOLOGIES = ("triggered", "internal", "free")
DETECTOR_KINDS = ("free-running", "gated")

_TAIL = 1e-16


@dataclass(frozen=True)
class PumpSpec:
    """Pump laser.

    ``kappa`` converts average power to pairs per pulse per watt (pulsed) or
    pairs per ns per watt (CW). In CW mode ``rep_rate`` is only the clock
    that defines time slices and internal gates.
    """

    mode: str = "pulsed"
    rep_rate: float = 430e6
    power: float = 0.0
    kappa: float | None = None
    pulse_duration: float = 8e-12
    wavelength_nm: float = 532.0

    def __post_init__(self):
        if self.mode not in ("pulsed", "cw"):
            raise ConfigError(f"pump mode must be 'pulsed' or 'cw', got {self.mode!r}")
        if not self.rep_rate > 0:
            raise ConfigError(f"rep_rate must be > 0, got {self.rep_rate}")
        if self.power < 0:
            raise ConfigError(f"pump power must be >= 0, got {self.power}")
        if self.kappa is not None and self.kappa < 0:
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if self.mode == "pulsed" and not self.pulse_duration > 0:
            raise ConfigError("pulsed pump needs pulse_duration > 0")

    @property
    def period(self):
        return 1.0 / self.rep_rate

    def pair_mean(self):
        if self.kappa is None:
            raise ConfigError("pump has no power-to-pair coefficient kappa")
        return self.kappa * self.power


@dataclass(frozen=True)
class PairStatistics:
    """Mean pairs per pulse (per ns in CW) and number of thermal modes.

    ``modes=math.inf`` selects Poissonian statistics.
    """

    mean: float
    modes: float = math.inf

    def __post_init__(self):
        if not self.mean >= 0:
            raise ConfigError(f"pair mean must be >= 0, got {self.mean}")
        if not self.modes >= 1:
            raise ConfigError(f"mode number must be >= 1, got {self.modes}")

    @property
    def f_n(self):
        return 1.0 + 1.0 / self.modes

    @property
    def variance(self):
        return self.mean * (1.0 + self.mean / self.modes)

    def _dist(self):
        if math.isinf(self.modes):
            return sps.poisson(self.mean)
        return sps.nbinom(self.modes, 1.0 / (1.0 + self.mean / self.modes))

    def pmf(self, n):
        return self._dist().pmf(n)

    def table(self):
        """pmf[0..n_max] with the tail beyond n_max below 1e-16."""
        if self.mean == 0:
            return np.array([1.0])
        dist = self._dist()
        n_max = int(dist.isf(_TAIL)) + 2
        return dist.pmf(np.arange(n_max + 1))


@dataclass(frozen=True)
class ChannelSpec:
    label: str
    transmission: float
    delay: float = 0.0  # s
    wavelength_nm: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.transmission <= 1.0:
            raise ConfigError(
                f"{self.label}: transmission must be in [0, 1], got {self.transmission}")


@dataclass(frozen=True)
class DetectorSpec:
    """Click detector.

    Free-running detectors use ``dark_rate`` (Hz); gated detectors use
    ``dark_prob_per_ns`` scaled by the gate width.
    """

    kind: str = "free-running"
    efficiency: float = 1.0
    dark_rate: float = 0.0
    dark_prob_per_ns: float = 0.0
    dead_time: float = 0.0
    gate_width: float = 2e-9
    jitter: float = 150e-12

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ConfigError(f"detector kind must be one of {DETECTOR_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError(f"detector efficiency must be in [0, 1], got {self.efficiency}")
        if self.dead_time < 0:
            raise ConfigError(f"dead_time must be >= 0, got {self.dead_time}")
        if self.kind == "gated" and not self.gate_width > 0:
            raise ConfigError("gated detector needs gate_width > 0")
        if self.dark_rate < 0 or self.dark_prob_per_ns < 0:
            raise ConfigError("dark counts must be >= 0")
        if self.jitter < 0:
            raise ConfigError("jitter must be >= 0")

    @property
    def gate_dark_probability(self):
        return min(1.0, self.dark_prob_per_ns * self.gate_width * 1e9)


@dataclass(frozen=True)
class ExperimentConfig:
    """Source, two channels, two detectors and the measurement topology.

    Topologies: ``triggered`` gates the idler detector on every accepted
    signal click; ``internal`` gates it every ``gate_divider`` clock periods;
    ``free`` runs both detectors free.
    """

    pump: PumpSpec
    signal: ChannelSpec
    idler: ChannelSpec
    signal_detector: DetectorSpec
    idler_detector: DetectorSpec
    statistics: PairStatistics | None = None
    topology: str = "triggered"
    gate_divider: int = 1
    gate_delay: float | None = None
    duration: float = 1.0
    seed: int = 0
    chunk_size: int = 1 << 22

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"run duration must be > 0, got {self.duration}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.gate_divider < 1:
            raise ConfigError("gate_divider must be >= 1")
        if self.signal_detector.kind != "free-running":
            raise ConfigError(
                "the herald (signal) detector must be free-running; "
                "gated heralds are not supported")
        if self.topology == "triggered" and self.idler_detector.kind != "gated":
            raise ConfigError("triggered topology needs a gated idler detector")
        if self.topology == "internal" and self.idler_detector.kind != "gated":
            raise ConfigError("internal gating needs a gated idler detector")
        if self.topology == "free" and self.idler_detector.kind != "free-running":
            raise ConfigError("free topology needs a free-running idler detector")
        if self.idler_detector.kind == "gated" and self.topology == "internal":
            period = self.gate_divider * self.pump.period
            if self.idler_detector.gate_width >= period:
                raise ConfigError("internal gate width must be shorter than the gate period")
        self.pair_statistics  # raises when neither statistics nor kappa are set

    @property
    def pair_statistics(self):
        if self.statistics is not None:
            return self.statistics
        return PairStatistics(self.pump.pair_mean())

    @property
    def n_slices(self):
        return int(round(self.duration * self.pump.rep_rate))

    @property
    def n_chunks(self):
        return -(-self.n_slices // self.chunk_size)

    @property
    def effective_gate_delay(self):
        if self.gate_delay is not None:
            return self.gate_delay
        return self.idler.delay - self.signal.delay

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class EventStream:
    """Time-sorted clicks of one detector.

    ``origin`` and ``pulse`` are diagnostic tags (photon/dark, generating
    pulse or -1); estimators only look at ``timestamps``.
    """

    channel: int
    timestamps: np.ndarray  # int64, ps
    origin: np.ndarray  # uint8
    pulse: np.ndarray  # int64
    duration: float  # s

    def __len__(self):
        return len(self.timestamps)

    @property
    def rate(self):
        return len(self) / self.duration

    def count(self, origin):
        return int(np.count_nonzero(self.origin == origin))


@dataclass
class TruthRecord:
    """Generated-pair bookkeeping for oracle tests.

    ``pair_histogram[n]`` counts pulses with n pairs over the whole run. The
    per-pulse arrays only cover pulses that produced at least one detection
    candidate (in CW mode each entry is one pair).
    """

    n_slices: int
    pair_histogram: np.ndarray
    pulse_index: np.ndarray
    pairs: np.ndarray
    both_detectable: np.ndarray
    gates: int = 0
    true_coincidences: int = 0

    @property
    def total_pairs(self):
        return int(np.dot(np.arange(len(self.pair_histogram)), self.pair_histogram))


@dataclass
class SimulationResult:
    config: ExperimentConfig
    signal: EventStream
    idler: EventStream
    truth: TruthRecord


def chunk_seed(master_seed, chunk_index):
    """64-bit seed for one chunk: first 8 bytes of BLAKE2b(master || index).

    Both inputs are packed as unsigned 64-bit little-endian integers.
    """
    data = struct.pack("<QQ", master_seed & 0xFFFFFFFFFFFFFFFF, chunk_index)
    digest = hashlib.blake2b(data, digest_size=8, person=b"hsp-chunk").digest()
    return int.from_bytes(digest, "little")


def chunk_rng(master_seed, chunk_index):
    return np.random.Generator(np.random.PCG64(chunk_seed(master_seed, chunk_index)))


def draw_pair_count(stats, rng, size=None):
    """Pairs in one pulse: N-mode thermal (negative binomial) or Poisson."""
    if stats.mean == 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    if math.isinf(stats.modes):
        return rng.poisson(stats.mean, size)
    return rng.negative_binomial(stats.modes, 1.0 / (1.0 + stats.mean / stats.modes), size)


def deadtime_fit(true_rate, measured_rate):
    """Non-paralyzable dead time that maps ``true_rate`` to ``measured_rate``."""
    if not 0 < measured_rate < true_rate:
        raise ValueError(
            f"need 0 < measured rate < true rate, got {measured_rate} and {true_rate}")
    return 1.0 / measured_rate - 1.0 / true_rate


def nonparalyzable_rate(true_rate, dead_time):
    return true_rate / (1.0 + true_rate * dead_time)


def deadtime_correct(measured_rate, dead_time):
    """Invert the non-paralyzable model."""
    loss = measured_rate * dead_time
    if loss >= 1:
        raise ValueError("measured rate saturates the dead-time model")
    return measured_rate / (1.0 - loss)


def _sparse_positions(rng, q, count):
    """Sorted indices in [0, count) hit with probability q, via geometric gaps."""
    if q <= 0 or count == 0:
        return np.empty(0, dtype=np.int64)
    if q >= 1:
        return np.arange(count, dtype=np.int64)
    parts = []
    pos = -1
    while True:
        est = int(q * (count - pos) * 1.1) + 16
        cs = pos + np.cumsum(rng.geometric(q, est))
        parts.append(cs[cs < count])
        if cs[-1] >= count:
            break
        pos = int(cs[-1])
    return np.concatenate(parts).astype(np.int64)


def _jitter(rng, t, sigma_ps):
    if sigma_ps > 0 and len(t):
        return t + rng.normal(0.0, sigma_ps, len(t))
    return t


def _simulate_chunk(config, index):
    """Candidate events of one chunk. Pure function of (config, index)."""
    rng = chunk_rng(config.seed, index)
    stats = config.pair_statistics
    slice_ps = 1e12 / config.pump.rep_rate
    first = index * config.chunk_size
    count = min(config.chunk_size, config.n_slices - first)
    sdet, idet = config.signal_detector, config.idler_detector
    a = config.signal.transmission * sdet.efficiency
    b = config.idler.transmission * idet.efficiency
    s_delay = config.signal.delay * 1e12
    i_delay = config.idler.delay * 1e12

    if config.pump.mode == "pulsed":
        table = stats.table()
        q = 1.0 - table[0]
        local = _sparse_positions(rng, q, count)
        m = len(local)
        if m:
            cdf = np.cumsum(table[1:]) / max(q, 1e-300)
            n = 1 + np.searchsorted(cdf, rng.random(m), side="right")
            n = np.minimum(n, len(table) - 1)
        else:
            n = np.empty(0, dtype=np.int64)
        pulse = first + local
        t_pair = TIME_ORIGIN_PS + pulse * slice_ps
        hist = np.bincount(n, minlength=1).astype(np.int64)
        hist[0] = count - m
    else:
        rate_ps = stats.mean * 1e-3  # pairs per ps
        span = count * slice_ps
        m = rng.poisson(rate_ps * span)
        t_local = np.sort(rng.random(m)) * span
        n = np.ones(m, dtype=np.int64)
        pulse = (np.int64(index) << 32) + np.arange(m, dtype=np.int64)
        t_pair = TIME_ORIGIN_PS + first * slice_ps + t_local
        hist = np.array([0, m], dtype=np.int64)

    # per-pair outcomes: both detected, signal only, idler only
    n_both = rng.binomial(n, a * b)
    rest = n - n_both
    p_s_only = a * (1 - b) / (1 - a * b) if a * b < 1 else 0.0
    n_s = rng.binomial(rest, p_s_only)
    n_i = rng.binomial(rest - n_s, b)
    sig_hit = (n_both + n_s) > 0
    idl_hit = (n_both + n_i) > 0

    sig_t = _jitter(rng, t_pair[sig_hit] + s_delay, sdet.jitter * 1e12)
    sig_pulse = pulse[sig_hit]
    idl_t = _jitter(rng, t_pair[idl_hit] + i_delay, idet.jitter * 1e12)
    idl_pulse = pulse[idl_hit]

    t0 = TIME_ORIGIN_PS + first * slice_ps
    span = count * slice_ps
    n_dark = rng.poisson(sdet.dark_rate * span * 1e-12) if sdet.dark_rate else 0
    sig_dark = t0 + rng.random(n_dark) * span
    sig_times = np.concatenate([sig_t, sig_dark])
    sig_origin = np.concatenate([np.zeros(len(sig_t), np.uint8), np.ones(n_dark, np.uint8)])
    sig_pulses = np.concatenate([sig_pulse, np.full(n_dark, -1, np.int64)])

    out = {}
    if config.topology == "triggered":
        # one dark-count draw per potential gate, i.e. per signal candidate
        pd = idet.gate_dark_probability
        has_dark = rng.random(len(sig_times)) < pd
        offset = np.full(len(sig_times), np.nan)
        offset[has_dark] = rng.random(int(has_dark.sum())) * idet.gate_width * 1e12
        out["gate_dark_offset"] = offset
        idl_times, idl_origin, idl_pulses = idl_t, np.zeros(len(idl_t), np.uint8), idl_pulse
        gate_index = None
        gates = 0
    elif config.topology == "internal":
        gate_ps = config.gate_divider * slice_ps
        width = idet.gate_width * 1e12
        centre0 = TIME_ORIGIN_PS + i_delay
        g = np.rint((idl_t - centre0) / gate_ps).astype(np.int64)
        inside = (np.abs(idl_t - (centre0 + g * gate_ps)) < width / 2) & (g >= 0)
        g_first = -(-first // config.gate_divider)
        g_last = -(-(first + count) // config.gate_divider)
        gates = max(0, g_last - g_first)
        dark_g = g_first + _sparse_positions(rng, idet.gate_dark_probability, gates)
        dark_t = centre0 + dark_g * gate_ps - width / 2 + rng.random(len(dark_g)) * width
        idl_times = np.concatenate([idl_t[inside], dark_t])
        idl_origin = np.concatenate([np.zeros(int(inside.sum()), np.uint8),
                                     np.ones(len(dark_g), np.uint8)])
        idl_pulses = np.concatenate([idl_pulse[inside], np.full(len(dark_g), -1, np.int64)])
        gate_index = np.concatenate([g[inside], dark_g])
    else:
        nd = rng.poisson(idet.dark_rate * span * 1e-12) if idet.dark_rate else 0
        dark_t = t0 + rng.random(nd) * span
        idl_times = np.concatenate([idl_t, dark_t])
        idl_origin = np.concatenate([np.zeros(len(idl_t), np.uint8), np.ones(nd, np.uint8)])
        idl_pulses = np.concatenate([idl_pulse, np.full(nd, -1, np.int64)])
        gate_index = None
        gates = 0

    any_hit = sig_hit | idl_hit
    out.update(
        sig_t=np.rint(sig_times).astype(np.int64),
        sig_origin=sig_origin,
        sig_pulse=sig_pulses,
        idl_t=np.rint(idl_times).astype(np.int64),
        idl_origin=idl_origin,
        idl_pulse=idl_pulses,
        idl_gate=gate_index,
        gates=gates,
        hist=hist,
        truth_pulse=pulse[any_hit],
        truth_n=n[any_hit].astype(np.uint16),
        truth_both=n_both[any_hit].astype(np.uint16),
    )
    return out


def _chunk_task(args):
    return _simulate_chunk(*args)


@numba.njit(cache=True)
def _deadtime_mask(t, dead):
    n = len(t)
    keep = np.zeros(n, dtype=np.bool_)
    gap = max(dead, 1)
    last = 0
    have = False
    for i in range(n):
        if not have or t[i] - last >= gap:
            keep[i] = True
            last = t[i]
            have = True
    return keep


@numba.njit(cache=True)
def _triggered_clicks(gate_open, width, dark_offset, cand_t, dead):
    """Walk the gates in time order and return (click_time, candidate_idx).

    ``candidate_idx`` is -1 for dark clicks and -2 for gates without a click.
    """
    n = len(gate_open)
    click = np.zeros(n, dtype=np.int64)
    which = np.full(n, -2, dtype=np.int64)
    gap = max(dead, 1)
    j = 0
    nc = len(cand_t)
    have = False
    last = 0
    for i in range(n):
        start = gate_open[i]
        if have and last + gap > start:
            start = last + gap
        end = gate_open[i] + width
        if start >= end:
            continue
        while j < nc and cand_t[j] < start:
            j += 1
        best = end
        src = -2
        if j < nc and cand_t[j] < end:
            best = cand_t[j]
            src = j
        if not np.isnan(dark_offset[i]):
            td = gate_open[i] + np.int64(dark_offset[i])
            if td >= start and td < best:
                best = td
                src = -1
        if src != -2:
            click[i] = best
            which[i] = src
            last = best
            have = True
    return click, which


def _concat(chunks, key, dtype):
    parts = [c[key] for c in chunks]
    return np.concatenate(parts) if parts else np.empty(0, dtype=dtype)


def simulate_run(config, workers=1):
    """Simulate a full run; output is independent of ``workers``."""
    n_chunks = config.n_chunks
    tasks = [(config, i) for i in range(n_chunks)]
    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_task, tasks, chunksize=1))
    else:
        chunks = [_simulate_chunk(*t) for t in tasks]
    return _merge(config, chunks)


def _merge(config, chunks):
    sdet, idet = config.signal_detector, config.idler_detector

    sig_t = _concat(chunks, "sig_t", np.int64)
    order = np.argsort(sig_t, kind="stable")
    keep = _deadtime_mask(sig_t[order], int(round(sdet.dead_time * 1e12)))
    sel = order[keep]
    signal = EventStream(SIGNAL_CHANNEL, sig_t[sel], _concat(chunks, "sig_origin", np.uint8)[sel],
                         _concat(chunks, "sig_pulse", np.int64)[sel], config.duration)

    idl_t = _concat(chunks, "idl_t", np.int64)
    idl_origin = _concat(chunks, "idl_origin", np.uint8)
    idl_pulse = _concat(chunks, "idl_pulse", np.int64)
    order = np.argsort(idl_t, kind="stable")
    idl_t, idl_origin, idl_pulse = idl_t[order], idl_origin[order], idl_pulse[order]
    dead_ps = int(round(idet.dead_time * 1e12))
    gates = sum(c["gates"] for c in chunks)

    if config.topology == "triggered":
        offsets = _concat(chunks, "gate_dark_offset", np.float64)[sel]
        photon = idl_origin == PHOTON
        cand_t, cand_pulse = idl_t[photon], idl_pulse[photon]
        width = int(round(idet.gate_width * 1e12))
        gate_open = signal.timestamps + int(round(config.effective_gate_delay * 1e12)) - width // 2
        click, which = _triggered_clicks(gate_open, width, offsets, cand_t, dead_ps)
        fired = which != -2
        src = which[fired]
        idler = EventStream(IDLER_CHANNEL, click[fired],
                            np.where(src >= 0, PHOTON, DARK).astype(np.uint8),
                            np.where(src >= 0, cand_pulse[np.maximum(src, 0)], -1),
                            config.duration)
        gates = len(gate_open)
    else:
        if config.topology == "internal":
            g = _concat(chunks, "idl_gate", np.int64)[order]
            first = np.ones(len(g), dtype=bool)
            first[1:] = g[1:] != g[:-1]
            idl_t, idl_origin, idl_pulse = idl_t[first], idl_origin[first], idl_pulse[first]
        keep = _deadtime_mask(idl_t, dead_ps)
        idler = EventStream(IDLER_CHANNEL, idl_t[keep], idl_origin[keep], idl_pulse[keep],
                            config.duration)

    width = max(len(c["hist"]) for c in chunks) if chunks else 1
    hist = np.zeros(width, dtype=np.int64)
    for c in chunks:
        hist[:len(c["hist"])] += c["hist"]
    t_pulse = _concat(chunks, "truth_pulse", np.int64)
    t_n = _concat(chunks, "truth_n", np.uint16)
    t_both = _concat(chunks, "truth_both", np.uint16)
    truth = TruthRecord(config.n_slices, hist, t_pulse, t_n, t_both, gates=gates)
    truth.true_coincidences = _true_coincidences(signal, idler, truth)
    return SimulationResult(config, signal, idler, truth)


def _true_coincidences(signal, idler, truth):
    sp = signal.pulse[signal.origin == PHOTON]
    ip = idler.pulse[idler.origin == PHOTON]
    common = np.intersect1d(sp, ip)
    if not len(common):
        return 0
    order = np.argsort(truth.pulse_index, kind="stable")
    pos = np.searchsorted(truth.pulse_index, common, sorter=order)
    return int(np.count_nonzero(truth.both_detectable[order[pos]] > 0))
