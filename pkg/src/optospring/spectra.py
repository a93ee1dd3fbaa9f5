"""Noise spectrum synthesis and estimation.

All spectra are one-sided over ordinary frequency: integrating a spectrum
over its Hz grid gives the variance of the underlying process.  Square-root
expressions elsewhere in the package are amplitude spectral densities of
these one-sided spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import welch as _scipy_welch

from .errors import (FitError, InstabilityError, InsufficientDataError,
                     SingularResponseError, SpectrumBandError, ValidationError)
from .model import HBAR, K_B, C_LIGHT, MirrorParams, NoiseEnv, SystemConfig
from .response import ComplexResponse

TWO_PI = 2.0 * math.pi

# Fraction of a Lorentzian living within +-3 half-widths of its center;
# band-limited integrals are divided by this so a clean peak integrates to
# its full area.
LORENTZIAN_3SIGMA_FRACTION = 2.0 / math.pi * math.atan(3.0)

SPECTRUM_KINDS = ("displacement", "voltage", "frequency-noise")


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density on an ordinary-frequency grid."""

    grid: np.ndarray    # Hz, strictly increasing
    values: np.ndarray  # units per `unit`
    kind: str           # displacement | voltage | frequency-noise
    unit: str = "m^2/Hz"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if self.kind not in SPECTRUM_KINDS:
            raise ValidationError(f"kind in {SPECTRUM_KINDS}", "kind", self.kind)
        if grid.size != values.size or grid.size < 2:
            raise ValidationError("grid and values have equal length >= 2",
                                  "grid", grid.size)
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid strictly increasing", "grid", None)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("values >= 0 and finite", "values", None)

    def variance(self) -> float:
        """Integral over the grid; equals the process variance."""
        return float(np.trapezoid(self.values, self.grid))


@dataclass(frozen=True)
class ModeTemperature:
    """Spectral-peak temperature T_eff = m*omega_eff^2*<x^2>/k_B."""

    t_eff: float            # K
    mean_square_x: float    # m^2
    omega_eff: float        # rad/s
    integration_band: tuple[float, float]  # Hz


def build_frequency_grid(f_min: float = 0.1, f_max: float = 1e5,
                         n_base: int = 4096,
                         peaks: tuple[tuple[float, float], ...] = ()) -> np.ndarray:
    """Log-spaced master grid with each (f_peak, gamma) resonance resolved.

    A narrow mechanical peak (half-width gamma/(4*pi) in Hz) gets a dense
    linear core out to 10 half-widths and log-spaced wings beyond, so
    trapezoid integrals over the grid capture the peak area to well below
    a percent.
    """
    pieces = [np.geomspace(f_min, f_max, n_base)]
    for f_peak, gamma in peaks:
        if f_peak <= 0:
            continue
        w = max(abs(gamma), 1e-6) / (4.0 * math.pi)  # |chi|^2 half-width in Hz
        core = np.linspace(f_peak - 10 * w, f_peak + 10 * w, 801)
        u_max = max(0.5 * f_peak, 2000 * w)
        wings = np.geomspace(10 * w, u_max, 240)
        pieces += [core, f_peak + wings, f_peak - wings]
    grid = np.concatenate(pieces)
    grid = np.unique(grid[(grid >= f_min) & (grid <= f_max)])
    return grid


def thermal_spectrum(temperature: float, mirror: MirrorParams,
                     chi_eff: ComplexResponse) -> Spectrum:
    """Fluctuation-dissipation displacement noise, 4*kB*T*gamma*m*|chi_eff|^2."""
    if temperature < 0:
        raise ValidationError("T >= 0", "temperature", temperature)
    s = 4.0 * K_B * temperature * mirror.gamma0 * mirror.mass \
        * np.abs(chi_eff.values) ** 2
    return Spectrum(grid=chi_eff.grid / TWO_PI, values=s, kind="displacement")


def freqnoise_spectrum(noise: NoiseEnv, config: SystemConfig,
                       chi_eff: ComplexResponse, chi1, chi2, chi_fb) -> Spectrum:
    """Displacement noise driven by laser frequency fluctuations.

    sqrt(S_x) = sqrt(S_phidot) * |chi_eff / (chi1*(1 + zeta2*chi2*chi_fb)*g)|
    with S_phidot in Hz^2/Hz and g the frequency-pull coefficient.
    """
    f_hz = chi_eff.grid / TWO_PI
    cav = config.cavity
    if cav.g_pull <= 0:
        raise SingularResponseError(
            "frequency-noise transduction needs a nonzero pull coefficient g")
    bracket = np.asarray(chi1) * (1.0 + cav.zeta2 * np.asarray(chi2)
                                  * np.asarray(chi_fb))
    bad = np.abs(bracket) == 0.0
    if np.any(bad):
        raise SingularResponseError(
            f"chi1*(1 + zeta2*chi2*chi_fb) = 0 at f = {f_hz[bad][0]:.6g} Hz")
    transfer = np.abs(chi_eff.values / (bracket * cav.g_pull)) ** 2
    return Spectrum(grid=f_hz, values=noise.sphidot(f_hz) * transfer,
                    kind="displacement")


def calibration_factor(config: SystemConfig, omega_eff: float,
                       eta: float | None = None) -> float:
    """Displacement-to-voltage amplitude factor for the reflection readout.

    sqrt(S_V) = sqrt(S_x) * (2*pi*c*m1 / (finesse*zeta1))
                * (1 - kappa_in/kappa) * omega_eff^2 * eta
    """
    cav = config.cavity
    if cav.zeta1 <= 0:
        raise ValidationError("zeta1 > 0", "zeta1", cav.zeta1)
    if cav.finesse <= 0:
        raise ValidationError("finesse > 0", "finesse", cav.finesse)
    if eta is None:
        eta = config.detector_eta
    return (TWO_PI * C_LIGHT * config.mirror1.mass / (cav.finesse * cav.zeta1)
            * (1.0 - cav.kappa_in_ratio) * omega_eff**2 * eta)


def displacement_to_voltage(s_x: Spectrum, config: SystemConfig,
                            omega_eff: float, eta: float | None = None) -> Spectrum:
    factor = calibration_factor(config, omega_eff, eta)
    return Spectrum(grid=s_x.grid, values=s_x.values * factor**2,
                    kind="voltage", unit="V^2/Hz")


def voltage_to_displacement(s_v: Spectrum, config: SystemConfig,
                            omega_eff: float, eta: float | None = None) -> Spectrum:
    factor = calibration_factor(config, omega_eff, eta)
    return Spectrum(grid=s_v.grid, values=s_v.values / factor**2,
                    kind="displacement", unit="m^2/Hz")


def welch_psd(series, dt: float, segment_length: int | None = None,
              overlap: int | None = None, kind: str = "displacement") -> Spectrum:
    """One-sided Welch estimate (Hann window, mean removed per segment)."""
    x = np.asarray(series, dtype=float)
    if segment_length is None:
        segment_length = max(256, x.size // 8)
    if x.size < 2 * segment_length:
        raise InsufficientDataError(
            f"need at least 2 segments of {segment_length}, got {x.size} samples")
    if overlap is None:
        overlap = segment_length // 2
    unit = {"displacement": "m^2/Hz", "voltage": "V^2/Hz",
            "frequency-noise": "Hz^2/Hz"}[kind]
    f, p = _scipy_welch(x, fs=1.0 / dt, window="hann", nperseg=segment_length,
                        noverlap=overlap, detrend="constant")
    # drop the DC bin so the grid stays strictly positive / log-plottable
    return Spectrum(grid=f[1:], values=p[1:], kind=kind, unit=unit)


def _lorentzian(f, s0, f0, width):
    return s0 / (1.0 + ((f - f0) / width) ** 2)


def fit_peak_width(spectrum: Spectrum, f_guess: float, width_guess: float
                   ) -> tuple[float, float, float]:
    """Least-squares Lorentzian fit around a peak; returns (s0, f0, half-width).

    The fit window is clipped to [f_guess/2, 2*f_guess] so other spectral
    structure (the heavy-mirror line the servo imprints at low frequency,
    the trap-noise shoulder) cannot capture the fit of a broad peak.
    """
    f, s = spectrum.grid, spectrum.values
    sel = (np.abs(f - f_guess) <= 8.0 * width_guess) \
        & (f >= 0.5 * f_guess) & (f <= 2.0 * f_guess)
    if sel.sum() < 5:
        raise InsufficientDataError(
            f"only {int(sel.sum())} grid points within 8 half-widths of "
            f"{f_guess:.6g} Hz; refine the grid")
    p0 = (float(np.interp(f_guess, f, s)), f_guess, width_guess)
    try:
        popt, _ = curve_fit(_lorentzian, f[sel], s[sel], p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"Lorentzian peak fit failed near {f_guess:.6g} Hz: "
                       f"{exc}") from exc
    s0, f0, width = popt
    if s0 <= 0 or width <= 0:
        raise FitError(f"Lorentzian fit returned non-physical parameters {popt}")
    if not 0.5 * f_guess <= f0 <= 2.0 * f_guess:
        raise FitError(f"Lorentzian fit wandered to {f0:.6g} Hz, away from "
                       f"the expected peak at {f_guess:.6g} Hz")
    return float(s0), float(f0), abs(float(width))


def mode_temperature(s_x: Spectrum, omega_eff: float, gamma_eff: float,
                     mirror: MirrorParams) -> ModeTemperature:
    """Integrate a spectral peak within 3 fitted half-widths.

    The band is [f0 - 3*sigma, f0 + 3*sigma] with sigma the half-width of a
    least-squares Lorentzian fit; the band integral is scaled by the known
    in-band fraction (2/pi)*atan(3) so a clean Lorentzian reports its full
    area.  T_eff = m*omega_eff^2*<x^2>/k_B.
    """
    f_eff = omega_eff / TWO_PI
    width_guess = max(abs(gamma_eff), 1e-9) / (4.0 * math.pi)
    _, f0, sigma = fit_peak_width(s_x, f_eff, width_guess)
    lo, hi = f0 - 3.0 * sigma, f0 + 3.0 * sigma
    if lo < s_x.grid[0] or hi > s_x.grid[-1]:
        raise SpectrumBandError(
            f"band [{lo:.6g}, {hi:.6g}] Hz falls outside the grid "
            f"[{s_x.grid[0]:.6g}, {s_x.grid[-1]:.6g}] Hz")
    sel = (s_x.grid >= lo) & (s_x.grid <= hi)
    band_grid = np.concatenate(([lo], s_x.grid[sel], [hi]))
    band_vals = np.interp(band_grid, s_x.grid, s_x.values)
    mean_square = float(np.trapezoid(band_vals, band_grid)) / LORENTZIAN_3SIGMA_FRACTION
    t_eff = mirror.mass * omega_eff**2 * mean_square / K_B
    return ModeTemperature(t_eff=t_eff, mean_square_x=mean_square,
                           omega_eff=omega_eff, integration_band=(lo, hi))


def occupations(config: SystemConfig, noise: NoiseEnv, mode,
                s_x_freq: Spectrum) -> tuple[float, float, float]:
    """Occupation numbers (n_th_prime, n_freq, n_th_bare) of the trapped mode.

    n_th_prime = kB*T*gamma1 / (hbar*omega_eff*gamma_eff) is the thermal
    occupancy the trap relaxes to; n_freq = m1*omega_eff*<x^2>_freq/hbar is
    the occupancy fed by trap noise; n_th_bare = kB*T/(hbar*omega1) is the
    high-temperature bath occupancy of the bare pendulum.
    """
    if mode.gamma_eff <= 0 or mode.omega_eff <= 0:
        raise InstabilityError(
            f"occupations undefined for an unstable (undamped) mode "
            f"(omega_eff = {mode.omega_eff:.6g}, gamma_eff = {mode.gamma_eff:.6g})")
    m1 = config.mirror1
    t = noise.temperature
    n_th_bare = K_B * t / (HBAR * m1.omega0)
    n_th_prime = K_B * t * m1.gamma0 / (HBAR * mode.omega_eff * mode.gamma_eff)
    n_freq = m1.mass * mode.omega_eff * s_x_freq.variance() / HBAR
    return float(n_th_prime), float(n_freq), float(n_th_bare)


def write_spectrum_csv(path, spectrum: Spectrum, comment: str = ""):
    """Columns: f_Hz, value, unit; header comments carry kind/normalization."""
    lines = [f"# kind: {spectrum.kind}",
             "# normalization: one-sided; integral over f_Hz equals variance"]
    if comment:
        lines.append(f"# {comment}")
    lines.append("f_Hz,value,unit")
    for f, v in zip(spectrum.grid, spectrum.values):
        lines.append(f"{float(f)!r},{float(v)!r},{spectrum.unit}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n")


def read_spectrum_csv(path) -> Spectrum:
    kind = "displacement"
    grid, values, unit = [], [], "m^2/Hz"
    for line in Path(path).read_text().splitlines():
        if line.startswith("# kind:"):
            kind = line.split(":", 1)[1].strip()
            continue
        if line.startswith("#") or line.startswith("f_Hz") or not line.strip():
            continue
        f, v, unit = line.split(",")
        grid.append(float(f))
        values.append(float(v))
    return Spectrum(grid=np.array(grid), values=np.array(values),
                    kind=kind, unit=unit)
