"""Scenario execution: simulate, correlate, estimate, write outputs."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dispersion, estimators, spectrum, tdc, timetags
from .errors import HeraldedError
from .montecarlo import chunk_seed, deadtime_correct, simulate_run
from .scenario import scenario_to_ini

# Event CSVs are only written below this many records.
CSV_EVENT_LIMIT = 1_000_000

TWIN_STREAM = 1 << 63


class PipelineError(HeraldedError):
    def __init__(self, scenario, stage, cause):
        self.scenario = scenario
        self.stage = stage
        self.cause = cause
        super().__init__(f"scenario {scenario}, stage {stage}: {cause}")


@dataclass
class RunManifest:
    version: str
    scenario: str
    seed: int
    config_hash: str
    wall_clock_s: float
    outputs: dict = field(default_factory=dict)  # analysis -> [file names]

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def files(self):
        return [f for names in self.outputs.values() for f in names]


@dataclass
class Measurement:
    """One simulated acquisition reduced to histogram and peak integrals."""

    sim: object
    histogram: tdc.Histogram
    peaks: tdc.PeakAnalysis
    net: tdc.NetCoincidences


def measure(scenario, config, workers=1):
    sim = simulate_run(config, workers=workers)
    s = scenario.tdc
    h = tdc.correlate(sim.signal, sim.idler, s.bin_width, s.range_ps)
    half = s.half_width
    if half is None:
        half = tdc.default_half_width(config.signal_detector.jitter, config.idler_detector.jitter)
    centre = (config.idler.delay - config.signal.delay) * 1e12
    pa = tdc.analyze_peaks(h, config.pump.period * 1e12, half, s.side_peaks, centre,
                           s.single_side)
    return Measurement(sim, h, pa, tdc.net_coincidences(pa))


def twin_config(scenario):
    c = scenario.config
    return c.replace(topology="internal", gate_divider=scenario.twin_gate_divider,
                     duration=scenario.twin_duration or c.duration,
                     seed=chunk_seed(c.seed, TWIN_STREAM))


def _corrected_herald_rate(sim):
    det = sim.config.signal_detector
    rate = sim.signal.rate
    if det.dead_time:
        rate = deadtime_correct(rate, det.dead_time)
    return max(rate - det.dark_rate, 0.0)


def _idler_dark_rate(sim):
    det = sim.config.idler_detector
    if det.kind == "gated":
        return sim.truth.gates * det.gate_dark_probability / sim.config.duration
    return det.dark_rate


def _dark_floor(sim, peaks):
    """Expected idler-dark coincidences per TDC window in a non-triggered run.

    Dark clicks are uniform over the gate, so only the part of the gate
    covered by the coincidence window counts.
    """
    det = sim.config.idler_detector
    n_sig = len(sim.signal)
    window = 2 * peaks.half_width * 1e-12
    if det.kind == "gated":
        frac = min(window / det.gate_width, 1.0)
        return n_sig * det.gate_dark_probability * frac / sim.config.gate_divider
    return n_sig * det.dark_rate * window


def estimate(scenario, main, twin=None, calibration=None):
    """Build the estimate report from the main (and optional twin) measurement."""
    config = scenario.config
    sim = main.sim
    dur = config.duration
    sdet, idet = config.signal_detector, config.idler_detector
    report = estimators.EstimateReport(scenario.name, pump_power=config.pump.power or None)
    extras = report.extras

    herald = sim.signal.rate
    report.herald_rate = herald
    report.herald_rate_sigma = math.sqrt(len(sim.signal)) / dur
    herald_net = max(herald - sdet.dark_rate, 0.0)

    if config.topology == "triggered":
        c_rate = main.net.value / dur
        report.coincidence_rate = c_rate
        report.coincidence_rate_sigma = main.net.sigma / dur
        eta_h = estimators.heralding_efficiency(c_rate, herald_net, idet.efficiency, dur,
                                                main.net.sigma / dur)
        report.heralding_efficiency = eta_h.value
        report.heralding_efficiency_sigma = eta_h.stat
        extras["heralding_efficiency_systematic"] = eta_h.sys

    t810, t810_sigma, t810_source = config.signal.transmission, 0.0, "configured"
    if twin is not None:
        tsim = twin.sim
        tdur = tsim.config.duration
        s1550 = max(tsim.idler.rate - _idler_dark_rate(tsim), 0.0)
        t = estimators.twin_transmission(twin.net.value / tdur, s1550, sdet.efficiency, tdur,
                                         twin.net.sigma / tdur)
        t810, t810_sigma, t810_source = t.value, t.stat, "twin-measurement"
        extras["twin_idler_rate"] = tsim.idler.rate
        extras["twin_coincidence_rate"] = twin.net.value / tdur
        side = estimators.pairs_per_pulse_from_sidepeaks(twin.peaks, _dark_floor(tsim, twin.peaks))
        report.p_from_sidepeaks = side.value
        report.p_from_sidepeaks_sigma = side.stat
    elif config.topology != "triggered":
        side = estimators.pairs_per_pulse_from_sidepeaks(main.peaks, _dark_floor(sim, main.peaks))
        report.p_from_sidepeaks = side.value
        report.p_from_sidepeaks_sigma = side.stat

    if calibration is not None:
        if calibration.t_810 is not None:
            t810, t810_sigma = calibration.t_810, calibration.t_810_sigma or 0.0
            t810_source = f"calibration:{calibration.name}"
        if calibration.heralding_efficiency is not None:
            extras["heralding_efficiency_this_run"] = report.heralding_efficiency
            report.heralding_efficiency = calibration.heralding_efficiency
            report.heralding_efficiency_sigma = calibration.heralding_efficiency_sigma
            extras["heralding_efficiency_source"] = f"calibration:{calibration.name}"
    report.t_810 = t810
    report.t_810_sigma = t810_sigma
    extras["t_810_source"] = t810_source

    if config.pump.mode == "pulsed" and t810 > 0:
        s_corr = _corrected_herald_rate(sim)
        extras["herald_rate_corrected"] = s_corr
        p = estimators.pairs_per_pulse_from_rates(s_corr, config.pump.rep_rate, t810,
                                                  sdet.efficiency, dur)
        rel_t = t810_sigma / t810
        report.p_from_rates = p.value
        report.p_from_rates_sigma = math.hypot(p.stat, p.value * rel_t)
        modes = config.pair_statistics.modes
        report.g2_analytic = estimators.g2_analytic(p.value, modes, t810 * sdet.efficiency)
        if p.value > 0:
            report.herald_rate_at_p01 = estimators.scale_herald_rate(herald, p.value)
    return report


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def run(scenario, out_root=".", workers=1, reports=None):
    """Execute every requested analysis of ``scenario`` and write its outputs.

    ``reports`` maps already-run scenario names to their reports; it is used
    for ``calibration`` references and updated with this scenario's report.
    """
    t_start = time.perf_counter()
    reports = {} if reports is None else reports
    out = Path(out_root) / scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    config = scenario.config
    wanted = set(scenario.analyses)
    fmt = set(scenario.outputs)
    files = {}

    def emit(analysis, name):
        files.setdefault(analysis, []).append(name)

    _write(out / "config.ini", scenario_to_ini(scenario))
    emit("config", "config.ini")
    stage = "setup"
    try:
        report = estimators.EstimateReport(scenario.name)
        if "dispersion" in wanted:
            stage = "dispersion"
            rows = dispersion.dispersion_table(
                config.pump.wavelength_nm, config.signal.wavelength_nm,
                config.idler.wavelength_nm, scenario.crystal.temperature,
                scenario.crystal.length, config.pump.pulse_duration)
            text = "quantity,value,unit\n" + "".join(f"{q},{v:.6g},{u}\n" for q, v, u in rows)
            _write(out / "dispersion.csv", text)
            emit("dispersion", "dispersion.csv")

        if wanted & {"estimates", "histogram"}:
            stage = "simulate"
            main = measure(scenario, config, workers)
            twin = None
            if scenario.twin_measurement and "estimates" in wanted:
                stage = "twin-measurement"
                twin = measure(scenario, twin_config(scenario), workers)
            if "histogram" in wanted:
                stage = "histogram"
                if "csv" in fmt:
                    main.histogram.to_csv(out / "histogram.csv")
                    emit("histogram", "histogram.csv")
                if "json" in fmt:
                    main.peaks.to_json(out / "peaks.json")
                    emit("histogram", "peaks.json")
                if "ttbin" in fmt:
                    timetags.write_binary(out / "events.ttbin", main.sim.signal, main.sim.idler)
                    emit("histogram", "events.ttbin")
                n_events = len(main.sim.signal) + len(main.sim.idler)
                if "csv" in fmt and n_events <= CSV_EVENT_LIMIT:
                    timetags.write_csv(out / "events.csv", main.sim.signal, main.sim.idler)
                    emit("histogram", "events.csv")
            if "estimates" in wanted:
                stage = "estimates"
                calib = None
                if scenario.calibration:
                    if scenario.calibration not in reports:
                        raise ValueError(
                            f"calibration scenario {scenario.calibration!r} has not been run")
                    calib = reports[scenario.calibration]
                est = estimate(scenario, main, twin, calib)
                est.extras.update(report.extras)
                report = est

        if "g2-hbt" in wanted:
            stage = "g2-hbt"
            g2cfg = config.replace(duration=scenario.g2_duration or config.duration)
            g2 = estimators.g2_montecarlo(g2cfg)
            report.g2_montecarlo = g2.value
            report.g2_montecarlo_sigma = g2.sigma
            if report.g2_analytic is None:
                st = config.pair_statistics
                report.g2_analytic = estimators.g2_analytic(
                    st.mean, st.modes, config.signal.transmission * config.signal_detector.efficiency)

        if "spectrum" in wanted:
            stage = "spectrum"
            ms = compute_spectrum(scenario)
            report.bandwidth_nm = ms.fwhm_nm
            if "csv" in fmt:
                ms.to_csv(out / "spectrum.csv")
                emit("spectrum", "spectrum.csv")

        if "json" in fmt and wanted & {"estimates", "g2-hbt", "spectrum"}:
            report.to_json(out / "report.json")
            emit("report", "report.json")
    except HeraldedError as exc:
        raise PipelineError(scenario.name, stage, exc) from exc
    except (ValueError, ArithmeticError) as exc:
        raise PipelineError(scenario.name, stage, exc) from exc

    reports[scenario.name] = report
    manifest = RunManifest(__version__, scenario.name, config.seed, scenario.hash(),
                           time.perf_counter() - t_start, files)
    manifest.to_json(out / "manifest.json")
    return manifest


def compute_spectrum(scenario):
    config = scenario.config
    pump = spectrum.PumpEnvelope(config.pump.mode, config.pump.wavelength_nm,
                                 config.pump.pulse_duration, scenario.chirp)
    grid = spectrum.default_grid(scenario.crystal, pump, config.signal.wavelength_nm,
                                 config.idler.wavelength_nm, points=scenario.spectrum_points)
    js = spectrum.joint_spectrum(scenario.crystal, pump, grid, config.signal.wavelength_nm,
                                 config.idler.wavelength_nm, exact=scenario.spectrum_exact)
    return spectrum.marginal_idler_spectrum(js)


def run_batch(scenarios, out_root=".", workers=1):
    """Run scenarios in file order so calibration references resolve."""
    reports = {}
    return [run(s, out_root, workers, reports) for s in scenarios], reports
