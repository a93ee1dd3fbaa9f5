"""Quantum-coherence condition and the feasibility budget for optical dilution.

The budget answers: for a prospective trap (mass, trapped frequency, laser
frequency-noise level, cavity length, suspension quality factor, bath
temperature), how many coherent oscillations fit before one phonon of
excitation?  Both contributions are recomputed from the heating-rate law; no
fitted coefficients are baked in.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .errors import ValidationError
from .model import HBAR, K_B, NoiseEnv, SystemConfig

TWO_PI = 2.0 * math.pi

# Laser frequency used for the frequency-pull coefficient when the budget is
# given only a cavity length (1064-nm-class source, ~300 THz).
DEFAULT_OMEGA_LASER = TWO_PI * 300e12


@dataclass(frozen=True)
class CoherenceBudget:
    """Decoherence budget 1/n_osc split into bath and trap-noise shares."""

    inv_n_osc_thermal: float
    inv_n_osc_trap: float
    n_osc: float
    condition_margin: float   # S_phidot(w_eff) * w_eff / g0^2; < 1 is coherent
    g0: float                 # single-photon coupling, rad/s

    def __post_init__(self):
        total = self.inv_n_osc_thermal + self.inv_n_osc_trap
        if total > 0 and not math.isclose(self.n_osc, 1.0 / total,
                                          rel_tol=1e-12):
            raise ValidationError("n_osc = 1/(inv_thermal + inv_trap)",
                                  "n_osc", self.n_osc)

    @property
    def satisfied(self) -> bool:
        """Strict: a margin of exactly 1 does not qualify."""
        return self.condition_margin < 1.0

    def to_json(self) -> str:
        payload = asdict(self)
        payload["satisfied"] = self.satisfied
        return json.dumps(payload, indent=2, sort_keys=True)

    def verdict_line(self) -> str:
        verdict = "achievable" if (self.satisfied and self.n_osc > 1.0) else \
            ("coherent but n_osc <= 1" if self.satisfied else "not achievable")
        return (f"n_osc = {self.n_osc:.3g} "
                f"(thermal 1/n_osc = {self.inv_n_osc_thermal:.3g}, "
                f"trap 1/n_osc = {self.inv_n_osc_trap:.3g}, "
                f"margin = {self.condition_margin:.3g}): {verdict}")


def single_photon_coupling(config: SystemConfig, omega_eff: float) -> float:
    """g0 = g * x_zpf with x_zpf = sqrt(hbar / (2*m1*omega_eff)), rad/s.

    The zero-point amplitude is taken at the trapped frequency: coherence of
    the trapped oscillator is what the condition governs.
    """
    if omega_eff <= 0:
        raise ValidationError("omega_eff > 0", "omega_eff", omega_eff)
    x_zpf = math.sqrt(HBAR / (2.0 * config.mirror1.mass * omega_eff))
    return config.cavity.g_pull * x_zpf


def check_condition(noise: NoiseEnv, g0: float, omega_eff: float
                    ) -> tuple[bool, float]:
    """Is S_phidot(omega_eff) < g0^2/omega_eff?  Returns (satisfied, margin)."""
    if omega_eff <= 0:
        raise ValidationError("omega_eff > 0", "omega_eff", omega_eff)
    sphi = noise.sphidot(omega_eff / TWO_PI)
    if g0 == 0.0:
        # 0 < 0 is false: a lossless-coupling boundary case counts as failed
        margin = math.inf if sphi > 0 else 1.0
    else:
        margin = sphi * omega_eff / g0**2
    return margin < 1.0, margin


def feasibility_budget(m1: float, omega_eff: float,
                       noise_amp_at_omega_eff: float, length: float,
                       q1: float, omega1: float, temperature: float,
                       omega_laser: float = DEFAULT_OMEGA_LASER
                       ) -> CoherenceBudget:
    """Build the 1/n_osc budget from first principles.

    Arguments: mirror mass (kg), trapped angular frequency (rad/s), laser
    frequency-noise amplitude at the trapped frequency (Hz/sqrt(Hz)), cavity
    round-trip length (m), suspension quality factor, bare angular frequency
    (rad/s), bath temperature (K).

    Each term is rate/f_eff with the heating-rate law evaluated directly:
    thermal rate kB*T*gamma1/(hbar*omega_eff) and trap rate
    m1*omega_eff^3*S_phidot/(hbar*g^2) with g = omega_laser/L.
    """
    for name, val in (("m1", m1), ("omega_eff", omega_eff), ("L", length),
                      ("Q1", q1), ("omega1", omega1)):
        if val <= 0:
            raise ValidationError(f"{name} > 0", name, val)
    if temperature < 0:
        raise ValidationError("T >= 0", "temperature", temperature)
    if noise_amp_at_omega_eff < 0:
        raise ValidationError("noise amp >= 0", "noise_amp_at_omega_eff",
                              noise_amp_at_omega_eff)

    gamma1 = omega1 / q1
    g = omega_laser / length
    f_eff = omega_eff / TWO_PI
    sphi = noise_amp_at_omega_eff**2

    rate_thermal = K_B * temperature * gamma1 / (HBAR * omega_eff)
    rate_trap = m1 * omega_eff**3 * sphi / (HBAR * g**2)
    inv_thermal = rate_thermal / f_eff
    inv_trap = rate_trap / f_eff

    x_zpf = math.sqrt(HBAR / (2.0 * m1 * omega_eff))
    g0 = g * x_zpf
    margin = sphi * omega_eff / g0**2
    total = inv_thermal + inv_trap
    n_osc = 1.0 / total if total > 0 else math.inf
    return CoherenceBudget(inv_n_osc_thermal=float(inv_thermal),
                           inv_n_osc_trap=float(inv_trap), n_osc=float(n_osc),
                           condition_margin=float(margin), g0=float(g0))
