"""Joint spectral amplitude of the pair and marginal spectrum of the idler.

The phase mismatch is expanded to first order in the signal/idler detunings
around perfect quasi-phase matching,

    dk = tau_s * nu_s + tau_i * nu_i,   tau_x = (n_g,pump - n_g,x) / c,

so the pump-daughter walk-off is the only dispersive input. With a pulsed
pump the kernel uses the effective length from :func:`dispersion.walkoff`
instead of the crystal length. ``exact=True`` evaluates the full Sellmeier
mismatch on every grid point instead, as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c

from . import dispersion
from .errors import ConfigError, GridError

MIN_POINTS = 64

# sinc^2(x) = 1/2 at x = SINC2_HALF
SINC2_HALF = 1.3915573782515103


@dataclass(frozen=True)
class PumpEnvelope:
    """Spectral envelope of the pump.

    Pulsed envelopes are Gaussian with intensity FWHM ``duration`` in time;
    ``chirp`` widens the spectrum by sqrt(1 + chirp^2) at fixed duration.
    """

    mode: str = "pulsed"
    center_nm: float = 532.0
    duration: float = 8e-12
    chirp: float = 0.0

    def __post_init__(self):
        if self.mode not in ("pulsed", "cw"):
            raise ConfigError(f"pump mode must be 'pulsed' or 'cw', got {self.mode!r}")
        if self.mode == "pulsed" and not self.duration > 0:
            raise ConfigError("pulsed pump needs duration > 0")

    @property
    def sigma(self):
        """Width of |alpha|^2 = exp(-(nu/sigma)^2) in rad/s; 0 for CW."""
        if self.mode == "cw":
            return 0.0
        return 2 * math.sqrt(math.log(2)) / self.duration * math.sqrt(1 + self.chirp ** 2)

    @property
    def bandwidth(self):
        """Intensity FWHM in rad/s."""
        return 2 * math.sqrt(math.log(2)) * self.sigma

    def amplitude(self, nu):
        if self.mode == "cw":
            raise ValueError("a CW envelope is a delta; handled on the grid")
        s2 = self.sigma ** 2
        return np.exp(-nu ** 2 / (2 * s2) + 1j * self.chirp * nu ** 2 / (2 * s2))


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform detuning grid shared by both axes, symmetric about zero (rad/s)."""

    points: int
    half_span: float

    def __post_init__(self):
        if self.points < MIN_POINTS:
            raise GridError(f"grid needs at least {MIN_POINTS} points per axis, got {self.points}")
        if not self.half_span > 0:
            raise GridError("grid half-span must be > 0")

    @property
    def detuning(self):
        return np.linspace(-self.half_span, self.half_span, self.points)

    @property
    def step(self):
        return 2 * self.half_span / (self.points - 1)


@dataclass
class JointSpectrum:
    signal_detuning: np.ndarray  # rad/s
    idler_detuning: np.ndarray  # rad/s
    signal_center: float  # rad/s
    idler_center: float  # rad/s
    amplitude: np.ndarray  # [signal, idler], peak |amplitude| = 1
    length: float  # m, length used in the phase-matching kernel

    @property
    def intensity(self):
        return np.abs(self.amplitude) ** 2

    def total_intensity(self):
        ds = np.diff(self.signal_detuning).mean() if len(self.signal_detuning) > 1 else 1.0
        di = np.diff(self.idler_detuning).mean() if len(self.idler_detuning) > 1 else 1.0
        return float(self.intensity.sum() * ds * di)


@dataclass
class MarginalSpectrum:
    wavelength_nm: np.ndarray  # ascending
    intensity: np.ndarray  # peak-normalised
    fwhm_nm: float

    @property
    def peak_index(self):
        # argmax returns the first maximum, i.e. the lowest wavelength
        return int(np.argmax(self.intensity))

    def centroid_nm(self):
        return float(np.sum(self.wavelength_nm * self.intensity) / np.sum(self.intensity))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("wavelength_nm,intensity\n")
            for x, y in zip(self.wavelength_nm, self.intensity):
                fh.write(f"{x:.6f},{y:.8e}\n")


def _omega(nm):
    return 2 * math.pi * c / (nm * 1e-9)


def kernel_length(crystal, pump, signal_nm, idler_nm, coherence_time=None):
    """Crystal length for CW, effective length for a pulsed pump."""
    if pump.mode == "cw":
        return crystal.length
    t_coh = pump.duration if coherence_time is None else coherence_time
    w = dispersion.walkoff(crystal, pump.center_nm, signal_nm, idler_nm, t_coh)
    return w.effective_length


def sinc2_fwhm(delay_per_length, length):
    """FWHM (rad/s) of sinc^2(delay_per_length * nu * length / 2) in nu."""
    return 4 * SINC2_HALF / (abs(delay_per_length) * length)


def default_grid(crystal, pump, signal_nm=810.0, idler_nm=1550.0, points=512,
                 coverage=5.0, coherence_time=None):
    """Grid spanning ``coverage`` nominal FWHMs of the idler marginal each side."""
    w = dispersion.walkoff(crystal, pump.center_nm, signal_nm, idler_nm)
    length = kernel_length(crystal, pump, signal_nm, idler_nm, coherence_time)
    width = sinc2_fwhm(w.walkoff_idler - w.walkoff_signal, length)
    if pump.mode == "pulsed":
        width += pump.bandwidth
    return SpectralGrid(points, coverage * width)


def joint_spectrum(crystal, pump, grid=None, signal_nm=810.0, idler_nm=1550.0,
                   exact=False, coherence_time=None):
    """JSA alpha(nu_s + nu_i) * sinc(dk * L / 2) on a detuning grid."""
    grid = grid or default_grid(crystal, pump, signal_nm, idler_nm,
                                coherence_time=coherence_time)
    nu = grid.detuning
    length = kernel_length(crystal, pump, signal_nm, idler_nm, coherence_time)
    ns, ni = np.meshgrid(nu, nu, indexing="ij")
    if exact:
        dk = _exact_mismatch(crystal, pump.center_nm, signal_nm, idler_nm, ns, ni)
    else:
        w = dispersion.walkoff(crystal, pump.center_nm, signal_nm, idler_nm)
        dk = w.walkoff_signal * ns + w.walkoff_idler * ni
    phase = np.sinc(dk * length / 2 / np.pi)
    total = ns + ni
    if pump.mode == "cw":
        alpha = (np.abs(total) <= 0.5 * grid.step * (1 + 1e-9)).astype(float)
    else:
        alpha = pump.amplitude(total)
    amp = alpha * phase
    peak = np.abs(amp).max()
    if not peak > 0:
        raise GridError("joint spectrum vanishes on the grid")
    return JointSpectrum(nu, nu.copy(), _omega(signal_nm), _omega(idler_nm), amp / peak, length)


def _exact_mismatch(crystal, pump_nm, signal_nm, idler_nm, ns, ni):
    """k_p - k_s - k_i - K_grating (rad/m) from the full Sellmeier model."""
    temp = crystal.temperature

    def k(omega):
        lam_um = 2 * math.pi * c / omega * 1e6
        return dispersion.refractive_index(lam_um, temp) * omega / c

    wp, ws, wi = _omega(pump_nm), _omega(signal_nm), _omega(idler_nm)
    if crystal.poling_period is not None:
        grating = 2 * math.pi / crystal.poling_period
    else:
        grating = float(k(np.array(wp)) - k(np.array(ws)) - k(np.array(wi)))
    return k(wp + ns + ni) - k(ws + ns) - k(wi + ni) - grating


def _marginal(detuning, center, weights):
    omega = center + detuning
    lam_nm = 2 * math.pi * c / omega * 1e9
    # density per unit wavelength: |d omega / d lambda| = omega^2 / (2 pi c)
    dens = weights * omega ** 2
    order = np.argsort(lam_nm)
    lam_nm, dens = lam_nm[order], dens[order]
    peak = dens.max()
    if not peak > 0:
        raise GridError("marginal spectrum is identically zero")
    dens = dens / peak
    return MarginalSpectrum(lam_nm, dens, fwhm(lam_nm, dens))


def marginal_idler_spectrum(js):
    """Idler spectrum sum_s |A|^2 on an ascending wavelength axis."""
    return _marginal(js.idler_detuning, js.idler_center, js.intensity.sum(axis=0))


def marginal_signal_spectrum(js):
    return _marginal(js.signal_detuning, js.signal_center, js.intensity.sum(axis=1))


def fwhm(x, y=None):
    """Full width at half maximum by linear interpolation.

    Accepts a :class:`MarginalSpectrum` or sampled ``x, y``. The outermost
    half-maximum crossings are used, so plateaus and multi-lobed curves give
    the full extent above half maximum. Raises :class:`GridError` when the
    curve does not fall below half maximum on both sides.
    """
    if y is None:
        x, y = x.wavelength_nm, x.intensity
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    half = 0.5 * y.max()
    above = np.flatnonzero(y >= half)
    i0, i1 = above[0], above[-1]
    if i0 == 0 or i1 == len(y) - 1:
        raise GridError("half maximum not bracketed: spectrum clipped by the grid edge")
    left = x[i0 - 1] + (half - y[i0 - 1]) * (x[i0] - x[i0 - 1]) / (y[i0] - y[i0 - 1])
    right = x[i1] + (half - y[i1]) * (x[i1 + 1] - x[i1]) / (y[i1 + 1] - y[i1])
    return float(right - left)


def idler_fwhm(crystal, pump, points=512, **kw):
    """Marginal idler FWHM (nm) on the default grid."""
    js = joint_spectrum(crystal, pump, default_grid(crystal, pump, points=points), **kw)
    return marginal_idler_spectrum(js).fwhm_nm
