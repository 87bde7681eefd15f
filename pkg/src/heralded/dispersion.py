"""Dispersion of the PPLN crystal.

Extraordinary-index Sellmeier model of congruent lithium niobate, group
indices, pump/daughter walk-off, effective interaction length and
first-order quasi-phase-matching period.

Units follow the coefficient table: wavelengths in micrometres for the index
functions, temperature in degrees Celsius. The crystal-level helpers take
wavelengths in nanometres, matching how the source is usually described
(532 nm pump, 810/1550 nm daughters).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.constants import c

from .errors import ConfigError, DomainError, NoSolutionError

WAVELENGTH_RANGE_UM = (0.4, 2.0)
TEMPERATURE_RANGE_C = (20.0, 250.0)

# Central-difference step for the finite-difference group index (um). Steps
# h and h/2 agree with each other and with the analytic form to 1e-7.
FD_STEP_UM = 1e-4

# Largest pump-wavelength shift (nm) accepted as energy conserving.
ENERGY_TOLERANCE_NM = 0.5


def _read_table(text):
    coeffs = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        name, value, unit = line.split()
        coeffs[name] = (float(value), unit)
    return coeffs


@lru_cache(maxsize=None)
def load_coefficients():
    """Return ``{name: (value, unit)}`` from the bundled coefficient table."""
    text = resources.files("heralded").joinpath(
        "data/lnb_extraordinary_sellmeier.txt").read_text()
    return _read_table(text)


@dataclass(frozen=True)
class SellmeierModel:
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    b1: float
    b2: float
    b3: float
    b4: float
    t_ref: float
    t_offset: float

    @classmethod
    def congruent_ln(cls):
        return cls(**{k: v for k, (v, _) in load_coefficients().items()})

    def _f(self, temp):
        return (temp - self.t_ref) * (temp + self.t_offset)

    def n_squared(self, lam, temp):
        f = self._f(temp)
        l2 = lam * lam
        uv = self.a3 + self.b3 * f
        return (self.a1 + self.b1 * f
                + (self.a2 + self.b2 * f) / (l2 - uv * uv)
                + (self.a4 + self.b4 * f) / (l2 - self.a5 ** 2)
                - self.a6 * l2)

    def d_n_squared(self, lam, temp):
        """Analytic derivative of n^2 with respect to wavelength (um^-1)."""
        f = self._f(temp)
        l2 = lam * lam
        uv = self.a3 + self.b3 * f
        return (-2 * lam * (self.a2 + self.b2 * f) / (l2 - uv * uv) ** 2
                - 2 * lam * (self.a4 + self.b4 * f) / (l2 - self.a5 ** 2) ** 2
                - 2 * self.a6 * lam)

    def index(self, lam, temp):
        return np.sqrt(self.n_squared(lam, temp))

    def group_index(self, lam, temp):
        n = self.index(lam, temp)
        return n - lam * self.d_n_squared(lam, temp) / (2 * n)


@lru_cache(maxsize=None)
def default_model():
    return SellmeierModel.congruent_ln()


def _check_domain(lam_um, temp_c):
    lam = np.asarray(lam_um, dtype=float)
    lo, hi = WAVELENGTH_RANGE_UM
    if np.any(~np.isfinite(lam)) or np.any(lam < lo) or np.any(lam > hi):
        raise DomainError("wavelength_um", lam_um, WAVELENGTH_RANGE_UM)
    t = np.asarray(temp_c, dtype=float)
    lo, hi = TEMPERATURE_RANGE_C
    if np.any(~np.isfinite(t)) or np.any(t < lo) or np.any(t > hi):
        raise DomainError("temperature_c", temp_c, TEMPERATURE_RANGE_C)
    return lam, t


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


def refractive_index(wavelength_um, temperature_c, model=None):
    """Extraordinary index n_e of congruent LiNbO3."""
    lam, t = _check_domain(wavelength_um, temperature_c)
    model = model or default_model()
    return _scalarize(model.index(lam, t))


def group_index(wavelength_um, temperature_c, method="analytic",
                step_um=FD_STEP_UM, model=None):
    """Group index n_g = n - lam * dn/dlam.

    ``method="analytic"`` differentiates the Sellmeier form in closed form;
    ``method="central"`` uses a central difference with ``step_um``
    (default 1e-4 um, truncation error O(h^2)).
    """
    lam, t = _check_domain(wavelength_um, temperature_c)
    model = model or default_model()
    if method == "analytic":
        return _scalarize(model.group_index(lam, t))
    if method == "central":
        h = step_um
        dn = (model.index(lam + h, t) - model.index(lam - h, t)) / (2 * h)
        return _scalarize(model.index(lam, t) - lam * dn)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class CrystalSpec:
    """Bulk QPM crystal. Lengths in metres."""

    length: float
    temperature: float = 180.0
    poling_period: float | None = None
    label: str = ""

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError(f"crystal length must be > 0, got {self.length}")
        if self.poling_period is not None and not self.poling_period > 0:
            raise ConfigError(
                f"poling period must be > 0, got {self.poling_period}")


@dataclass(frozen=True)
class PhaseMatch:
    passed: bool
    residual: float  # 1/lam_p - 1/lam_s - 1/lam_i, nm^-1
    pump_equivalent_nm: float
    shift_nm: float


def phase_match_check(pump_nm, signal_nm, idler_nm,
                      tolerance_nm=ENERGY_TOLERANCE_NM):
    """Energy-conservation check 1/lam_p = 1/lam_s + 1/lam_i.

    Passes when the pump wavelength implied by the daughters is within
    ``tolerance_nm`` of the given pump wavelength.
    """
    if min(pump_nm, signal_nm, idler_nm) <= 0:
        raise ValueError("wavelengths must be positive")
    residual = 1.0 / pump_nm - 1.0 / signal_nm - 1.0 / idler_nm
    equiv = 1.0 / (1.0 / signal_nm + 1.0 / idler_nm)
    shift = abs(pump_nm - equiv)
    return PhaseMatch(shift < tolerance_nm, residual, equiv, shift)


@dataclass(frozen=True)
class WalkoffResult:
    group_index_pump: float
    group_index_signal: float
    group_index_idler: float
    walkoff_signal: float  # s/m
    walkoff_idler: float  # s/m
    walkoff_mean: float  # s/m
    effective_length: float  # m
    length: float  # m

    def total_delay(self):
        """Pump-daughter delays accumulated over the full crystal (s)."""
        return (self.walkoff_signal * self.length,
                self.walkoff_idler * self.length)


def walkoff(crystal, pump_nm=532.0, signal_nm=810.0, idler_nm=1550.0,
            coherence_time=8e-12):
    """Group-velocity walk-off of signal and idler relative to the pump.

    The effective length is the hard cutoff ``min(L, T_coh / tau_mean)``:
    the crystal length over which the mean daughter walk-off stays within
    the pump coherence time.
    """
    pm = phase_match_check(pump_nm, signal_nm, idler_nm)
    if not pm.passed:
        raise ConfigError(
            f"wavelengths {pump_nm}/{signal_nm}/{idler_nm} nm violate energy "
            f"conservation (pump shift {pm.shift_nm:.3f} nm)")
    temp = crystal.temperature
    ng_p = group_index(pump_nm * 1e-3, temp)
    ng_s = group_index(signal_nm * 1e-3, temp)
    ng_i = group_index(idler_nm * 1e-3, temp)
    tau_s = (ng_p - ng_s) / c
    tau_i = (ng_p - ng_i) / c
    tau_mean = 0.5 * (tau_s + tau_i)
    if tau_mean > 0 and coherence_time is not None:
        l_eff = min(crystal.length, coherence_time / tau_mean)
    else:
        l_eff = crystal.length
    return WalkoffResult(ng_p, ng_s, ng_i, tau_s, tau_i, tau_mean, l_eff,
                         crystal.length)


def wavevector_mismatch(pump_nm, signal_nm, idler_nm, temperature_c):
    """k_p - k_s - k_i in rad/um (no grating term)."""
    def k(lam_nm):
        lam_um = np.asarray(lam_nm, dtype=float) * 1e-3
        return 2 * np.pi * refractive_index(lam_um, temperature_c) / lam_um
    return k(pump_nm) - k(signal_nm) - k(idler_nm)


def qpm_poling_period(pump_nm, signal_nm, idler_nm, temperature_c):
    """First-order QPM period (um) closing k_p - k_s - k_i - 2*pi/period = 0."""
    pm = phase_match_check(pump_nm, signal_nm, idler_nm)
    if not pm.passed:
        raise ConfigError(
            f"wavelengths {pump_nm}/{signal_nm}/{idler_nm} nm violate energy "
            "conservation")
    dk = wavevector_mismatch(pump_nm, signal_nm, idler_nm, temperature_c)
    if not dk > 0:
        raise NoSolutionError(f"non-positive phase mismatch {dk} rad/um")
    return float(2 * np.pi / dk)


def dispersion_table(pump_nm, signal_nm, idler_nm, temperature_c, length_m,
                     coherence_time=8e-12):
    """Rows of (quantity, value, unit) summarising the crystal dispersion."""
    crystal = CrystalSpec(length_m, temperature_c)
    w = walkoff(crystal, pump_nm, signal_nm, idler_nm, coherence_time)
    period = qpm_poling_period(pump_nm, signal_nm, idler_nm, temperature_c)
    ps_per_cm = 1e12 * 1e-2
    return [
        ("n_pump", refractive_index(pump_nm * 1e-3, temperature_c), "1"),
        ("n_signal", refractive_index(signal_nm * 1e-3, temperature_c), "1"),
        ("n_idler", refractive_index(idler_nm * 1e-3, temperature_c), "1"),
        ("ng_pump", w.group_index_pump, "1"),
        ("ng_signal", w.group_index_signal, "1"),
        ("ng_idler", w.group_index_idler, "1"),
        ("walkoff_signal", w.walkoff_signal * ps_per_cm, "ps/cm"),
        ("walkoff_idler", w.walkoff_idler * ps_per_cm, "ps/cm"),
        ("walkoff_mean", w.walkoff_mean * ps_per_cm, "ps/cm"),
        ("effective_length", w.effective_length * 1e2, "cm"),
        ("poling_period", period, "um"),
    ]
