"""Frequency-domain linear model of the trap-plus-feedback loop.

The loop couples three signals: the light mirror displacement x1, the heavy
(actuated) mirror displacement x2, and the cavity length change
``dl = zeta1*x1 + zeta2*x2``.  The optical spring pushes back on the light
mirror through dl, and the servo pushes on the heavy mirror through dl.
Solving that signal flow for x1/F gives the effective susceptibility

    chi_eff = chi1 * (1 + zeta2*chi2*chi_fb)
              / (1 + zeta1^2*chi1*k_opt + zeta2*chi2*chi_fb)

whose denominator zeros are the closed-loop poles.  Fourier convention is
exp(+i*omega*t); a pole s = -gamma/2 + i*omega_eff is damped when
Re(s) < 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (AmbiguousBranchWarning, NoConvergenceError,
                     SingularResponseError, ValidationError)
from .model import HBAR, CavityParams, MirrorParams, ServoParams, SystemConfig
from .model import intracavity_photons

# Relative magnitude below which a response denominator counts as singular.
DENOM_EPS = 1e-12

# Pole candidates closer than this (relative) are reported as ambiguous.
BRANCH_TOL = 0.01


@dataclass(frozen=True)
class ComplexResponse:
    """A complex transfer quantity sampled on an angular-frequency grid."""

    grid: np.ndarray     # rad/s, strictly increasing
    values: np.ndarray   # complex

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.size < 2 or grid.size != values.size:
            raise ValidationError("grid and values have equal length >= 2",
                                  "grid", grid.size)
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid strictly increasing", "grid", None)
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise ValidationError("no NaN/Inf entries", "values", None)


@dataclass(frozen=True)
class EffectiveMode:
    """Trapped-mode frequency/damping extracted from the closed-loop poles."""

    omega_eff: float   # rad/s
    gamma_eff: float   # rad/s, positive = damped
    stable: bool       # every closed-loop pole has Re < 0
    pole: complex      # s = -gamma_eff/2 + i*omega_eff

    def __post_init__(self):
        if self.omega_eff < 0:
            raise ValidationError("omega_eff >= 0", "omega_eff", self.omega_eff)


def mech_susceptibility(mirror: MirrorParams, omega):
    """Bare mechanical susceptibility x/F with velocity damping, m/N."""
    w = np.asarray(omega, dtype=float)
    chi = 1.0 / (mirror.mass * (mirror.omega0**2 - w**2 + 1j * mirror.gamma0 * w))
    return chi if chi.shape else complex(chi)


def optical_spring(cavity: CavityParams, omega):
    """Detuned-cavity radiation-pressure spring constant, complex N/m.

    k_opt = 2*hbar*g^2*n_cav(Delta) * Delta / ((kappa + i*omega)^2 + Delta^2).
    Real part stiffens; for Delta > 0 the imaginary part is negative at
    positive frequency (anti-damping).
    """
    w = np.asarray(omega, dtype=float)
    n_cav = intracavity_photons(cavity)
    denom = (cavity.kappa + 1j * w) ** 2 + cavity.detuning**2
    scale = cavity.kappa**2 + cavity.detuning**2
    if np.any(np.abs(denom) < DENOM_EPS * scale):
        raise SingularResponseError(
            f"optical spring denominator below {DENOM_EPS} * (kappa^2 + Delta^2)")
    k = 2.0 * HBAR * cavity.g_pull**2 * n_cav * cavity.detuning / denom
    return k if k.shape else complex(k)


def adiabatic_spring(cavity: CavityParams) -> tuple[float, float]:
    """Low-frequency expansion of the spring: k_opt(w) ~ k0 * (1 - i*c1*w).

    Returns (k0, c1) with k0 in N/m and c1 = 2*kappa/(kappa^2 + Delta^2) in
    seconds.  Valid for omega << sqrt(kappa^2 + Delta^2), i.e. everywhere in
    the trapped-mode band of a MHz-linewidth cavity.
    """
    n_cav = intracavity_photons(cavity)
    s2 = cavity.kappa**2 + cavity.detuning**2
    k0 = 2.0 * HBAR * cavity.g_pull**2 * n_cav * cavity.detuning / s2
    c1 = 2.0 * cavity.kappa / s2
    return k0, c1


def servo_response(servo: ServoParams, omega, engaged: bool = True):
    """Loop response of the feedback chain, i*omega*g_el times the sections.

    With ``engaged=False`` the differentiator gain is replaced by the
    residual ``off_gain`` (0 when the off gain is left for the dynamics
    layer to resolve).
    """
    w = np.asarray(omega, dtype=float)
    gain = servo.g_el if engaged else (servo.off_gain or 0.0)
    out = 1j * w * gain
    for section in servo.sections:
        out = out * section.response(w)
    return out if np.asarray(out).shape else complex(out)


def effective_susceptibility(chi1, chi2, k_opt, chi_fb, zeta1, zeta2, omega=None):
    """Closed-loop susceptibility of the light mirror, m/N.

    Reduces to chi1 when both the spring and the servo are off.
    """
    denom = 1.0 + zeta1**2 * np.asarray(chi1) * np.asarray(k_opt) \
        + zeta2 * np.asarray(chi2) * np.asarray(chi_fb)
    bad = np.abs(denom) < DENOM_EPS
    if np.any(bad):
        where = "" if omega is None else f" at omega = {np.asarray(omega)[bad]} rad/s"
        raise SingularResponseError(
            f"closed-loop denominator ~ 0{where}: |D| = {np.abs(denom).min():.3e}")
    out = np.asarray(chi1) * (1.0 + zeta2 * np.asarray(chi2) * np.asarray(chi_fb)) / denom
    return out if out.shape else complex(out)


def open_loop_gain(config: SystemConfig, omega, engaged: bool = True):
    """Servo open-loop gain zeta2*chi2*chi_fb / (1 + zeta1^2*chi1*k_opt)."""
    cav = config.cavity
    chi1 = mech_susceptibility(config.mirror1, omega)
    chi2 = mech_susceptibility(config.mirror2, omega)
    k_opt = optical_spring(cav, omega)
    denom = 1.0 + cav.zeta1**2 * np.asarray(chi1) * np.asarray(k_opt)
    if np.any(np.abs(denom) < DENOM_EPS):
        raise SingularResponseError("1 + zeta1^2*chi1*k_opt ~ 0")
    out = cav.zeta2 * np.asarray(chi2) * np.asarray(
        servo_response(config.servo, omega, engaged)) / denom
    return out if out.shape else complex(out)


def feedback_from_open_loop(config: SystemConfig, omega, loop_values):
    """Invert a measured/synthetic open-loop gain back to chi_fb."""
    cav = config.cavity
    chi1 = mech_susceptibility(config.mirror1, omega)
    chi2 = mech_susceptibility(config.mirror2, omega)
    k_opt = optical_spring(cav, omega)
    denom = 1.0 + cav.zeta1**2 * np.asarray(chi1) * np.asarray(k_opt)
    base = cav.zeta2 * np.asarray(chi2)
    if np.any(np.abs(base) < 1e-300):
        raise SingularResponseError("zeta2*chi2 ~ 0, cannot invert loop gain")
    return np.asarray(loop_values) * denom / base


def closed_loop_response(config: SystemConfig, omega_grid, engaged: bool = True
                         ) -> ComplexResponse:
    """chi_eff evaluated on an angular-frequency grid."""
    w = np.asarray(omega_grid, dtype=float)
    cav = config.cavity
    chi_eff = effective_susceptibility(
        mech_susceptibility(config.mirror1, w),
        mech_susceptibility(config.mirror2, w),
        optical_spring(cav, w),
        servo_response(config.servo, w, engaged),
        cav.zeta1, cav.zeta2, omega=w)
    return ComplexResponse(grid=w, values=chi_eff)


# --------------------------------------------------------------------------
# closed-loop poles
# --------------------------------------------------------------------------

def _characteristic_roots(config: SystemConfig, gel: float) -> np.ndarray:
    """Roots (in complex omega, exp(+i w t)) of the closed-loop quartic.

    The denominator of chi_eff is cleared of both bare susceptibilities and
    the spring is used in its adiabatic first-order form, which turns the
    characteristic function into a polynomial:

      m1*m2*X1*X2 + zeta1^2*k0*(1 - i*c1*w)*m2*X2 + i*w*gel*zeta2*m1*X1 = 0,

    with Xj = omega_j^2 - w^2 + i*gamma_j*w.
    """
    m1, m2, cav = config.mirror1, config.mirror2, config.cavity
    k0, c1 = adiabatic_spring(cav)
    x1 = np.array([-1.0, 1j * m1.gamma0, m1.omega0**2])  # X1 coefficients, w^2..w^0
    x2 = np.array([-1.0, 1j * m2.gamma0, m2.omega0**2])
    poly = m1.mass * m2.mass * np.polymul(x1, x2)
    spring = cav.zeta1**2 * k0 * m2.mass * np.polymul([-1j * c1, 1.0], x2)
    servo = gel * cav.zeta2 * m1.mass * np.polymul([1j, 0.0], x1)
    poly = np.polyadd(poly, np.polyadd(spring, servo))
    return np.roots(poly)


def _characteristic_exact(config: SystemConfig, gel: float, w: complex):
    """Characteristic function with the full rational spring and the full
    servo chain (filter sections included, by analytic continuation)."""
    m1, m2, cav = config.mirror1, config.mirror2, config.cavity
    n_cav = intracavity_photons(cav)
    x1 = m1.omega0**2 - w**2 + 1j * m1.gamma0 * w
    x2 = m2.omega0**2 - w**2 + 1j * m2.gamma0 * w
    denom = (cav.kappa + 1j * w) ** 2 + cav.detuning**2
    k_opt = 2.0 * HBAR * cav.g_pull**2 * n_cav * cav.detuning / denom
    chi_fb = 1j * w * gel
    for section in config.servo.sections:
        chi_fb = chi_fb * section.response(w)
    return (m1.mass * m2.mass * x1 * x2
            + cav.zeta1**2 * k_opt * m2.mass * x2
            + chi_fb * cav.zeta2 * m1.mass * x1)


def _polish_root(config: SystemConfig, gel: float, w0: complex) -> tuple[complex, list]:
    """Newton-polish a quartic root against the exact characteristic.

    The derivative is a central difference, accurate to O(h^2) for the
    analytic characteristic and agnostic to the servo chain's form.
    """
    w = w0
    trace = [w]
    scale = max(abs(w0), config.mirror1.omega0)
    for _ in range(60):
        f = _characteristic_exact(config, gel, w)
        h = 1e-7 * max(abs(w), scale)
        df = (_characteristic_exact(config, gel, w + h)
              - _characteristic_exact(config, gel, w - h)) / (2.0 * h)
        if df == 0:
            raise NoConvergenceError("zero derivative while polishing pole", trace)
        step = f / df
        w = w - step
        trace.append(w)
        if not np.isfinite(w.real) or not np.isfinite(w.imag) or abs(w) > 1e4 * scale:
            raise NoConvergenceError("pole polishing diverged", trace)
        if abs(step) <= 1e-12 * max(abs(w), scale):
            return w, trace
    raise NoConvergenceError("pole polishing did not converge in 60 steps", trace)


def extract_mode(config: SystemConfig, gel: float | None = None) -> EffectiveMode:
    """Locate the trapped-mode pole and classify overall stability.

    The trapped branch is the root whose frequency is nearest the rigid-trap
    estimate sqrt(omega1^2 + zeta1^2*k0/m1); when two candidates sit within
    1% of each other the larger frequency wins and an AmbiguousBranchWarning
    is emitted.  Quartic roots are polished on the exact rational
    characteristic function; a polish that moves the root by more than 1%
    also warns.
    """
    if gel is None:
        gel = config.servo.g_el
    m1, cav = config.mirror1, config.cavity
    k0, _ = adiabatic_spring(cav)
    guess = math.sqrt(max(m1.omega0**2 + cav.zeta1**2 * k0 / m1.mass, 0.0))

    roots = _characteristic_roots(config, gel)
    # each physical mode appears as (w, -conj(w)); keep the Re >= 0 copies
    keep = roots[roots.real >= -1e-9 * max(guess, 1.0)]
    if keep.size == 0:
        keep = roots
    om = np.abs(keep.real)
    order = np.argsort(np.abs(om - guess))
    best = keep[order[0]]
    if order.size > 1:
        second = keep[order[1]]
        a, b = abs(best.real), abs(second.real)
        if abs(a - b) <= BRANCH_TOL * max(a, b, 1e-300):
            warnings.warn(
                f"two pole candidates within {BRANCH_TOL:.0%} "
                f"(|w| = {a:.6g} and {b:.6g} rad/s); picking the larger",
                AmbiguousBranchWarning, stacklevel=2)
            if b > a:
                best = second

    polished, _ = _polish_root(config, gel, best)
    if abs(polished - best) > BRANCH_TOL * max(abs(best), 1e-300):
        warnings.warn(
            f"polished pole moved by more than {BRANCH_TOL:.0%} "
            f"({best:.6g} -> {polished:.6g})", AmbiguousBranchWarning, stacklevel=2)
    if polished.real < 0:
        polished = -polished.conjugate()

    omega_eff = float(abs(polished.real))
    gamma_eff = float(2.0 * polished.imag)
    stable = bool(np.all(roots.imag > 0))  # exp(+iwt): Im > 0 means decay
    pole = complex(1j * polished)  # s-plane: Re(s) = -gamma/2, Im(s) = omega
    return EffectiveMode(omega_eff=omega_eff, gamma_eff=gamma_eff,
                         stable=stable, pole=pole)


def cancellation_gain(config: SystemConfig, omega_eff: float) -> float:
    """Differentiator gain m2*omega_eff^2/kappa that nominally offsets the
    spring's anti-damping (exact at Delta = kappa for a rigid trap)."""
    if config.cavity.kappa <= 0:
        raise ValidationError("kappa > 0", "kappa", config.cavity.kappa)
    return config.mirror2.mass * omega_eff**2 / config.cavity.kappa


@dataclass(frozen=True)
class StabilityMap:
    """extract_mode evaluated on a (detuning, gain) grid."""

    deltas: np.ndarray        # rad/s
    gels: np.ndarray          # N*s/m
    omega_eff: np.ndarray     # rad/s, shape (n_delta, n_gel)
    gamma_eff: np.ndarray     # rad/s
    stable: np.ndarray        # bool
    converged: np.ndarray     # bool; False marks per-cell pole failures

    def mode_at(self, i: int, j: int) -> EffectiveMode:
        if not self.converged[i, j]:
            raise NoConvergenceError(f"map cell ({i}, {j}) did not converge", [])
        ge = self.gamma_eff[i, j]
        return EffectiveMode(omega_eff=float(self.omega_eff[i, j]),
                             gamma_eff=float(ge),
                             stable=bool(self.stable[i, j]),
                             pole=complex(-ge / 2.0, self.omega_eff[i, j]))


def stability_map(config: SystemConfig, delta_values, gel_values) -> StabilityMap:
    """Evaluate the trapped mode over a detuning x gain grid.

    Failed cells are flagged in ``converged`` and the map is still returned.
    """
    deltas = np.atleast_1d(np.asarray(delta_values, dtype=float))
    gels = np.atleast_1d(np.asarray(gel_values, dtype=float))
    if deltas.size == 0 or gels.size == 0:
        raise ValidationError("ranges nonempty", "delta_values/gel_values", None)
    shape = (deltas.size, gels.size)
    w = np.full(shape, np.nan)
    g = np.full(shape, np.nan)
    st = np.zeros(shape, dtype=bool)
    ok = np.zeros(shape, dtype=bool)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AmbiguousBranchWarning)
        for i, d in enumerate(deltas):
            cfg = config.with_detuning(float(d))
            for j, ge in enumerate(gels):
                try:
                    mode = extract_mode(cfg, gel=float(ge))
                except NoConvergenceError:
                    continue
                w[i, j] = mode.omega_eff
                g[i, j] = mode.gamma_eff
                st[i, j] = mode.stable
                ok[i, j] = True
    return StabilityMap(deltas=deltas, gels=gels, omega_eff=w, gamma_eff=g,
                        stable=st, converged=ok)


# --------------------------------------------------------------------------
# CSV emitters
# --------------------------------------------------------------------------

def _write_text(path, text: str):
    from pathlib import Path

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def fmt(value) -> str:
    """Shortest round-trip decimal form of a scalar, for CSV cells."""
    return repr(float(value))


def write_response_csv(path, response: ComplexResponse, comment: str = ""):
    """Columns: f_Hz, re, im, mag, phase_deg."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("f_Hz,re,im,mag,phase_deg")
    f_hz = response.grid / (2.0 * math.pi)
    for f, v in zip(f_hz, response.values):
        phase = math.degrees(math.atan2(v.imag, v.real))
        lines.append(f"{fmt(f)},{fmt(v.real)},{fmt(v.imag)},{fmt(abs(v))},"
                     f"{fmt(phase)}")
    _write_text(path, "\n".join(lines) + "\n")


def write_map_csv(path, smap: StabilityMap, comment: str = ""):
    """Columns: delta_Hz, gel, f_eff_Hz, gamma_eff_Hz, stable."""
    two_pi = 2.0 * math.pi
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("delta_Hz,gel,f_eff_Hz,gamma_eff_Hz,stable")
    for i, d in enumerate(smap.deltas):
        for j, ge in enumerate(smap.gels):
            if smap.converged[i, j]:
                lines.append(f"{fmt(d / two_pi)},{fmt(ge)},"
                             f"{fmt(smap.omega_eff[i, j] / two_pi)},"
                             f"{fmt(smap.gamma_eff[i, j] / two_pi)},"
                             f"{int(smap.stable[i, j])}")
            else:
                lines.append(f"{fmt(d / two_pi)},{fmt(ge)},nan,nan,0")
    _write_text(path, "\n".join(lines) + "\n")
