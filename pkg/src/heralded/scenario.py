"""Declarative scenario files.

A scenario file is INI text as read by :mod:`configparser` (no
interpolation, ``#`` and ``;`` comments, ``=`` or ``:`` separators). Every
top-level section ``[NAME]`` declares one scenario; its subsections are
written ``[NAME.pump]``, ``[NAME.signal]``, ``[NAME.idler]``,
``[NAME.signal_detector]``, ``[NAME.idler_detector]``, ``[NAME.crystal]``,
``[NAME.tdc]`` and ``[NAME.spectrum]``. Every key is optional except
``analyses``; defaults reproduce the 430 MHz / 532 nm source. Lists are
comma separated, booleans use ``yes``/``no``, the mode number accepts
``inf``. SI units throughout except where the key name says otherwise
(``*_nm``, TDC keys in ps, crystal temperature in degC).

Unknown sections or keys are rejected so that a typo never silently falls
back to a default.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dispersion import CrystalSpec
from .errors import ConfigError
from .montecarlo import (ChannelSpec, DetectorSpec, ExperimentConfig, PairStatistics, PumpSpec,
                         deadtime_fit)

ANALYSES = ("estimates", "histogram", "spectrum", "dispersion", "g2-hbt")
FORMATS = ("json", "csv", "ttbin")


class ScenarioParseError(ConfigError):
    pass


def _float(s):
    return float(s)


def _opt_float(s):
    return None if s.strip() in ("", "none") else float(s)


def _int(s):
    return int(float(s)) if "e" in s.lower() else int(s)


def _bool(s):
    v = s.strip().lower()
    if v in ("yes", "true", "on", "1"):
        return True
    if v in ("no", "false", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s):
    return [x.strip() for x in s.split(",") if x.strip()]


def _floats(s):
    v = s.strip()
    return None if v in ("", "none") else [float(x) for x in _list(v)]


def _modes(s):
    v = s.strip().lower()
    return math.inf if v in ("inf", "infinity") else float(v)


def _str(s):
    return s.strip()


# section -> key -> (parser, default)
SCHEMA = {
    "": {
        "analyses": (_list, None),
        "outputs": (_list, "json, csv"),
        "seed": (_int, "0"),
        "duration": (_float, "1.0"),
        "topology": (_str, "triggered"),
        "gate_divider": (_int, "1"),
        "gate_delay": (_opt_float, ""),
        "chunk_size": (_int, str(1 << 22)),
        "pairs_per_pulse": (_opt_float, ""),
        "modes": (_modes, "inf"),
        "twin_measurement": (_bool, "no"),
        "twin_duration": (_opt_float, ""),
        "twin_gate_divider": (_int, "1"),
        "calibration": (_str, ""),
        "g2_duration": (_opt_float, ""),
        "output_dir": (_str, ""),
    },
    "pump": {
        "mode": (_str, "pulsed"),
        "wavelength_nm": (_float, "532.0"),
        "rep_rate": (_float, "430e6"),
        "pulse_duration": (_float, "8e-12"),
        "power": (_float, "0.0"),
        "kappa": (_opt_float, ""),
        "chirp": (_float, "0.0"),
    },
    "signal": {
        "wavelength_nm": (_float, "810.0"),
        "transmission": (_float, "1.0"),
        "delay": (_float, "0.0"),
    },
    "idler": {
        "wavelength_nm": (_float, "1550.0"),
        "transmission": (_float, "1.0"),
        "delay": (_float, "0.0"),
    },
    "signal_detector": {
        "kind": (_str, "free-running"),
        "efficiency": (_float, "0.5"),
        "dark_rate": (_float, "5.0"),
        "dark_prob_per_ns": (_float, "0.0"),
        "dead_time": (_float, "0.0"),
        "dead_time_fit": (_floats, ""),
        "gate_width": (_float, "2e-9"),
        "jitter": (_float, "150e-12"),
    },
    "idler_detector": {
        "kind": (_str, "gated"),
        "efficiency": (_float, "0.1"),
        "dark_rate": (_float, "0.0"),
        "dark_prob_per_ns": (_float, "8e-6"),
        "dead_time": (_float, "0.0"),
        "dead_time_fit": (_floats, ""),
        "gate_width": (_float, "2e-9"),
        "jitter": (_float, "150e-12"),
    },
    "crystal": {
        "length": (_float, "0.01"),
        "temperature": (_float, "180.0"),
        "poling_period": (_opt_float, ""),
        "label": (_str, ""),
    },
    "tdc": {
        "bin_width": (_int, "100"),
        "range": (_int, "12000"),
        "half_width": (_opt_float, ""),
        "side_peaks": (_int, "3"),
        "single_side": (_bool, "no"),
    },
    "spectrum": {
        "points": (_int, "512"),
        "exact": (_bool, "no"),
    },
}


@dataclass(frozen=True)
class TdcSettings:
    bin_width: int = 100
    range_ps: int = 12000
    half_width: float | None = None
    side_peaks: int = 3
    single_side: bool = False


@dataclass
class Scenario:
    name: str
    config: ExperimentConfig
    crystal: CrystalSpec
    analyses: list
    outputs: list
    output_dir: str
    tdc: TdcSettings = TdcSettings()
    twin_measurement: bool = False
    twin_duration: float | None = None
    twin_gate_divider: int = 1
    calibration: str = ""
    g2_duration: float | None = None
    chirp: float = 0.0
    spectrum_points: int = 512
    spectrum_exact: bool = False
    values: dict = field(default_factory=dict, repr=False)  # parsed, defaults filled

    def hash(self):
        return config_hash(self.values)


def config_hash(values):
    """SHA-256 of the canonical JSON of the parsed, default-filled values."""
    text = json.dumps(values, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(text.encode()).hexdigest()


def _parser():
    p = configparser.ConfigParser(interpolation=None, default_section="\x00defaults")
    p.optionxform = str
    return p


def parse_scenarios(text, source="<string>"):
    parser = _parser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioParseError(f"{source}: parse error: {exc}") from None
    names = [s for s in parser.sections() if "." not in s]
    if not names:
        raise ConfigError(f"{source}: no scenarios")
    for sec in parser.sections():
        base, _, sub = sec.partition(".")
        if base not in names:
            raise ConfigError(f"{source}: section [{sec}] has no parent scenario [{base}]")
        if sub and sub not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
    return [_build(parser, name, source) for name in names]


def load_scenarios(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    return parse_scenarios(text, source=str(path))


def _values(parser, name, source):
    values = {}
    for sub, keys in SCHEMA.items():
        sec = name if not sub else f"{name}.{sub}"
        given = dict(parser[sec]) if parser.has_section(sec) else {}
        unknown = set(given) - set(keys)
        if unknown:
            raise ConfigError(f"{source}: [{sec}] unknown key(s) {sorted(unknown)}")
        out = {}
        for key, (conv, default) in keys.items():
            raw = given.get(key, default)
            if raw is None:
                raise ConfigError(f"{source}: [{sec}] missing required key '{key}'")
            try:
                out[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: [{sec}] {key} = {raw!r}: {exc}") from None
        values[sub or "scenario"] = out
    return values


def _check(cond, name, field_name, constraint):
    if not cond:
        raise ConfigError(f"scenario {name}: {field_name}: {constraint}")


def _build(parser, name, source):
    v = _values(parser, name, source)
    top = v["scenario"]
    _check(top["analyses"], name, "analyses", "must list at least one analysis")
    for a in top["analyses"]:
        _check(a in ANALYSES, name, "analyses", f"{a!r} not one of {ANALYSES}")
    for f in top["outputs"]:
        _check(f in FORMATS, name, "outputs", f"{f!r} not one of {FORMATS}")
    for ch in ("signal", "idler"):
        t = v[ch]["transmission"]
        _check(0 <= t <= 1, name, f"{ch}.transmission", f"must be in [0, 1], got {t}")
    for det in ("signal_detector", "idler_detector"):
        e = v[det]["efficiency"]
        _check(0 <= e <= 1, name, f"{det}.efficiency", f"must be in [0, 1], got {e}")
        fit = v[det]["dead_time_fit"]
        if fit is not None:
            _check(len(fit) == 2, name, f"{det}.dead_time_fit",
                   "needs two rates: true, measured")
            _check(v[det]["dead_time"] == 0, name, f"{det}.dead_time",
                   "give either dead_time or dead_time_fit, not both")
    if top["pairs_per_pulse"] is None:
        _check(v["pump"]["kappa"] is not None, name, "pairs_per_pulse",
               "required unless pump.kappa is given")

    try:
        pump_v = v["pump"]
        pump = PumpSpec(pump_v["mode"], pump_v["rep_rate"], pump_v["power"], pump_v["kappa"],
                        pump_v["pulse_duration"], pump_v["wavelength_nm"])
        stats = None
        if top["pairs_per_pulse"] is not None:
            stats = PairStatistics(top["pairs_per_pulse"], top["modes"])
        elif pump.kappa is not None:
            stats = PairStatistics(pump.pair_mean(), top["modes"])

        def channel(ch):
            c = v[ch]
            return ChannelSpec(f"{ch}-{c['wavelength_nm']:g}", c["transmission"], c["delay"],
                               c["wavelength_nm"])

        def detector(det):
            d = v[det]
            dead = d["dead_time"]
            if d["dead_time_fit"] is not None:
                dead = deadtime_fit(*d["dead_time_fit"])
            return DetectorSpec(d["kind"], d["efficiency"], d["dark_rate"], d["dark_prob_per_ns"],
                                dead, d["gate_width"], d["jitter"])

        config = ExperimentConfig(
            pump, channel("signal"), channel("idler"), detector("signal_detector"),
            detector("idler_detector"), stats, top["topology"], top["gate_divider"],
            top["gate_delay"], top["duration"], top["seed"], top["chunk_size"])
        cr = v["crystal"]
        crystal = CrystalSpec(cr["length"], cr["temperature"], cr["poling_period"], cr["label"])
        td = v["tdc"]
        tdc = TdcSettings(td["bin_width"], td["range"], td["half_width"], td["side_peaks"],
                          td["single_side"])
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"scenario {name}: {exc}") from None

    return Scenario(
        name=name, config=config, crystal=crystal, analyses=top["analyses"],
        outputs=top["outputs"], output_dir=top["output_dir"] or name, tdc=tdc,
        twin_measurement=top["twin_measurement"], twin_duration=top["twin_duration"],
        twin_gate_divider=top["twin_gate_divider"], calibration=top["calibration"],
        g2_duration=top["g2_duration"], chirp=v["pump"]["chirp"],
        spectrum_points=v["spectrum"]["points"], spectrum_exact=v["spectrum"]["exact"],
        values=v)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    if isinstance(x, list):
        return ", ".join(_fmt(i) for i in x)
    return str(x)


def scenario_to_ini(scenario):
    """Effective configuration with every default filled in, as INI text."""
    lines = []
    for sub in SCHEMA:
        sec = scenario.name if not sub else f"{scenario.name}.{sub}"
        lines.append(f"[{sec}]")
        for key, val in scenario.values[sub or "scenario"].items():
            lines.append(f"{key} = {_fmt(val)}")
        lines.append("")
    return "\n".join(lines)


def with_seed(scenario, seed):
    """Copy of ``scenario`` with a different master seed (hash updated)."""
    values = {k: dict(v) for k, v in scenario.values.items()}
    values["scenario"]["seed"] = int(seed)
    return replace(scenario, config=scenario.config.replace(seed=int(seed)), values=values)
