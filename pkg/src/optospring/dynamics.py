"""Time-domain stochastic simulation of the trapped mirror.

The heavy mirror and the cavity field are adiabatically eliminated (they are
fast and stiff compared with the trapped mode), which reduces the loop to a
single degree of freedom with piecewise-constant coefficients:

    m1*xdd = -m1*(omega1^2 + zeta1^2*k0/m1)*x
             - m1*(gamma1 - gamma_opt + zeta2*g_el(t)/m2)*xd
             + F_th(t) + F_trap(t)

where k0 is the static optical spring, gamma_opt = zeta1^2*k0*c1/m1 is the
spring's anti-damping rate, g_el(t) follows the square-wave servo schedule,
F_th is white thermal force noise (one-sided PSD 4*kB*T*gamma1*m1), and
F_trap is the laser-frequency-noise force shaped by a first-order filter so
its one-sided PSD matches 4*m1^2*omega_ref^4*S_phidot(f)/g^2 around the
trapped resonance.

Within each servo phase the system (x, v, F_trap) is a linear SDE with
constant coefficients, so each step applies the exact one-step Gaussian map
(transition matrix and process-noise covariance from the Van Loan block
exponential).  That makes the integrator unconditionally stable, exactly
energy-conserving in the noise-free limit, and exact for the stationary
statistics at any step size; dt only sets the sampling resolution.

Every trajectory draws from its own counter-based RNG stream derived from
(master_seed, trajectory index), in fixed blocks of 4096 steps, so results
are bit-identical no matter how trajectories are batched or threaded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit

from .errors import (FitError, InstabilityError, InsufficientDataError,
                     ValidationError)
from .model import HBAR, K_B, NoiseEnv, SystemConfig
from .response import EffectiveMode, adiabatic_spring, cancellation_gain, extract_mode

TWO_PI = 2.0 * math.pi

# Steps per RNG draw block; fixed so chunking never changes a stream.
DRAW_BLOCK = 4096

# Trap-noise shaping-filter corner sits this far below the trapped resonance
# (keeps the synthesized force PSD within 5% of the 1/f^2 target from
# omega_ref/10 up through the resonance).
OU_CORNER_DIVISOR = 50.0

# Runaway guard: |x| beyond this many thermal RMS aborts the run.
BLOWUP_FACTOR = 1e6


@dataclass(frozen=True)
class SimPlan:
    """Monte Carlo protocol: step size, duration, ensemble size, seeding.

    ``duration`` counts from the first cooling switch-off and must cover at
    least one full switch period.  ``dt=None`` resolves to 1/(200*f_eff).
    ``initial_state`` (x0, v0) skips the cooled burn-in; otherwise each
    trajectory equilibrates for ``burn_in`` seconds (default: 10 times the
    slower of the cooled damping time and the trap-noise filter correlation
    time) before the first switch-off.
    """

    duration: float
    n_trajectories: int
    master_seed: int
    dt: float | None = None
    record_stride: int = 10
    initial_state: tuple[float, float] | None = None
    burn_in: float | None = None

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValidationError("n_trajectories >= 1",
                                  "n_trajectories", self.n_trajectories)
        if self.duration <= 0:
            raise ValidationError("duration > 0", "duration", self.duration)
        if self.record_stride < 1:
            raise ValidationError("record_stride >= 1",
                                  "record_stride", self.record_stride)
        if self.dt is not None and self.dt <= 0:
            raise ValidationError("dt > 0", "dt", self.dt)


@dataclass(frozen=True)
class EnsembleResult:
    """Aligned rethermalization segments and the fitted decoherence rate."""

    time_grid: np.ndarray          # s, t = 0 at switch-off
    mean_phonon: np.ndarray        # <n(t)> over all segments
    per_trajectory_n0: np.ndarray  # phonon number at each segment start
    fitted_rate: float             # phonons/s, initial-slope fit
    fitted_rate_err: float
    fitted_gamma_eff: float        # rad/s, from the exponential fit
    n_osc: float                   # omega_ref / (2*pi*fitted_rate)
    omega_ref: float               # rad/s, servo-off trapped frequency
    n_segments: int
    fit_intercept: float


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    slope_err: float
    intercept: float
    window: float   # s


@dataclass(frozen=True)
class ScanRow:
    delta: float            # rad/s
    omega_eff: float        # rad/s (nan on failure)
    rate_measured: float
    rate_measured_err: float
    rate_predicted: float
    n_osc: float
    ok: bool
    error: str = ""


# --------------------------------------------------------------------------
# reduced model coefficients and the exact one-step map
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedModel:
    """Single-degree-of-freedom coefficients for both servo phases."""

    mass: float
    omega_trap_sq: float    # rad^2/s^2, spring included
    omega_ref: float        # rad/s, phonon reference (servo-off trap)
    gamma_on: float         # rad/s
    gamma_off: float
    off_gain: float         # resolved N*s/m
    s_f_thermal: float      # one-sided thermal force PSD, N^2/Hz
    ou_corner: float        # rad/s
    ou_force_var: float     # stationary trap-noise force variance, N^2


def reduced_model(config: SystemConfig, noise: NoiseEnv) -> ReducedModel:
    """Adiabatic single-mode reduction of the closed loop."""
    m1, m2, cav, servo = (config.mirror1, config.mirror2,
                          config.cavity, config.servo)
    k0, c1 = adiabatic_spring(cav)
    omega_trap_sq = m1.omega0**2 + cav.zeta1**2 * k0 / m1.mass
    if omega_trap_sq <= 0:
        raise InstabilityError(
            f"optical spring inverts the trap (omega_trap^2 = {omega_trap_sq:.4g})")
    omega_ref = math.sqrt(omega_trap_sq)
    gamma_opt = cav.zeta1**2 * k0 * c1 / m1.mass
    off_gain = servo.off_gain
    if off_gain is None:
        off_gain = cancellation_gain(config, omega_ref)
    gamma_on = m1.gamma0 - gamma_opt + cav.zeta2 * servo.g_el / m2.mass
    gamma_off = m1.gamma0 - gamma_opt + cav.zeta2 * off_gain / m2.mass

    s_f_thermal = 4.0 * K_B * noise.temperature * m1.gamma0 * m1.mass
    ou_corner = omega_ref / OU_CORNER_DIVISOR
    f_ref = omega_ref / TWO_PI
    sphi_at_ref = noise.sphidot(f_ref)  # Hz^2/Hz
    if sphi_at_ref > 0 and cav.g_pull <= 0:
        raise ValidationError("g_pull > 0 when frequency noise is present",
                              "g_pull", cav.g_pull)
    if sphi_at_ref == 0.0:
        ou_force_var = 0.0
    else:
        # match the 1/f^2 force target 4*m1^2*w_ref^4*S_phidot(f)/g^2 at
        # high f: an OU force with S(f) = 4*<F^2>*w_c/(w_c^2+w^2) needs
        # <F^2> = m1^2*w_ref^4*(2*pi)^2*S_phidot(f_ref)*f_ref^2/(g^2*w_c).
        ou_force_var = (m1.mass**2 * omega_ref**4 * (TWO_PI**2)
                        * sphi_at_ref * f_ref**2 / (cav.g_pull**2 * ou_corner))
    return ReducedModel(mass=m1.mass, omega_trap_sq=omega_trap_sq,
                        omega_ref=omega_ref, gamma_on=gamma_on,
                        gamma_off=gamma_off, off_gain=off_gain,
                        s_f_thermal=s_f_thermal, ou_corner=ou_corner,
                        ou_force_var=ou_force_var)


class PhaseMap:
    """Exact one-step Gaussian map z -> Phi z + C xi for one servo phase.

    State z = (x, v, F_trap).  Phi = expm(A dt); the step-noise covariance
    comes from the Van Loan block exponential and is factored once.
    """

    def __init__(self, mass: float, omega_sq: float, gamma: float,
                 s_f_thermal: float, ou_corner: float, ou_force_var: float,
                 dt: float):
        a = np.array([[0.0, 1.0, 0.0],
                      [-omega_sq, -gamma, 1.0 / mass],
                      [0.0, 0.0, -ou_corner]])
        s_th = math.sqrt(s_f_thermal / 2.0) / mass       # <F F'> = (S/2) delta
        s_ou = math.sqrt(2.0 * ou_corner * ou_force_var)
        lmat = np.diag([0.0, s_th, s_ou])
        block = np.zeros((6, 6))
        block[:3, :3] = a
        block[:3, 3:] = lmat @ lmat.T
        block[3:, 3:] = -a.T
        eb = expm(block * dt)
        self.phi = eb[:3, :3]
        sigma = eb[:3, 3:] @ self.phi.T
        sigma = 0.5 * (sigma + sigma.T)
        if s_th == 0.0 and s_ou == 0.0:
            self.noise = None
        else:
            evals, evecs = np.linalg.eigh(sigma)
            self.noise = evecs * np.sqrt(np.clip(evals, 0.0, None))
        self.dt = dt

    def advance(self, z: tuple, xi_block: np.ndarray | None) -> tuple:
        """Advance a state (x, v, F) of (B,) arrays by one step.

        The 3x3 maps are expanded into elementwise operations with a fixed
        association order, so a trajectory's numbers do not depend on how
        many others share the batch (BLAS would not guarantee that).
        """
        p = self.phi
        z0 = p[0, 0] * z[0] + p[0, 1] * z[1] + p[0, 2] * z[2]
        z1 = p[1, 0] * z[0] + p[1, 1] * z[1] + p[1, 2] * z[2]
        z2 = p[2, 0] * z[0] + p[2, 1] * z[1] + p[2, 2] * z[2]
        if self.noise is not None and xi_block is not None:
            n = self.noise
            z0 += (n[0, 0] * xi_block[0] + n[0, 1] * xi_block[1]
                   + n[0, 2] * xi_block[2])
            z1 += (n[1, 0] * xi_block[0] + n[1, 1] * xi_block[1]
                   + n[1, 2] * xi_block[2])
            z2 += (n[2, 0] * xi_block[0] + n[2, 1] * xi_block[1]
                   + n[2, 2] * xi_block[2])
        return z0, z1, z2


def _trajectory_generators(master_seed: int, indices) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(int(i),))))
        for i in indices]


class _BlockDraws:
    """Per-trajectory standard normals consumed in fixed blocks of DRAW_BLOCK
    steps, so a trajectory's stream is identical in any batch."""

    def __init__(self, gens: list[np.random.Generator], active: bool):
        self.gens = gens
        self.active = active
        self.buf = None
        self.pos = DRAW_BLOCK

    def next_step(self) -> np.ndarray | None:
        if not self.active:
            return None
        if self.pos >= DRAW_BLOCK:
            # (block, 3) per trajectory keeps draws step-ordered
            self.buf = np.stack(
                [g.standard_normal((DRAW_BLOCK, 3)) for g in self.gens], axis=2)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


def _phase_steps(config: SystemConfig, dt: float) -> int:
    half_period = 0.5 / config.servo.switch_frequency
    return max(1, int(round(half_period / dt)))


def _run_batch(config: SystemConfig, noise: NoiseEnv, plan: SimPlan,
               indices, record_full: bool = False):
    """Simulate the switch protocol for the given trajectory indices.

    Returns (time_off, n_off[B, periods, R], full) where ``full`` is the
    (t, x, v, n) timeline when requested (single-trajectory use).
    """
    model = reduced_model(config, noise)
    dt = plan.dt if plan.dt is not None else 1.0 / (200.0 * model.omega_ref / TWO_PI)
    if dt * model.omega_ref >= 0.1:
        raise ValidationError("dt * omega_eff < 0.1", "dt", dt)
    steps_half = _phase_steps(config, dt)
    period = 1.0 / config.servo.switch_frequency
    if plan.duration < period * (1.0 - 1e-9):
        raise ValidationError("duration covers >= 1 full switch period",
                              "duration", plan.duration)
    n_periods = max(1, int(round(plan.duration / period)))

    if plan.initial_state is None and model.gamma_on <= 0:
        raise InstabilityError(
            f"cooled phase is not damped (gamma_on = {model.gamma_on:.4g} rad/s); "
            "cannot prepare the initial state")

    common = dict(mass=model.mass, omega_sq=model.omega_trap_sq,
                  s_f_thermal=model.s_f_thermal, ou_corner=model.ou_corner,
                  ou_force_var=model.ou_force_var, dt=dt)
    map_on = PhaseMap(gamma=model.gamma_on, **common)
    map_off = PhaseMap(gamma=model.gamma_off, **common)
    has_noise = map_on.noise is not None

    b = len(indices)
    gens = _trajectory_generators(plan.master_seed, indices)
    draws = _BlockDraws(gens, active=has_noise)

    z = (np.zeros(b), np.zeros(b), np.zeros(b))
    if plan.initial_state is not None:
        z = (np.full(b, float(plan.initial_state[0])),
             np.full(b, float(plan.initial_state[1])),
             np.zeros(b))
        burn_steps = 0
    else:
        t_burn = plan.burn_in
        if t_burn is None:
            # the shaped trap-noise force equilibrates on 1/ou_corner, which
            # is far slower than the cooled mechanical relaxation; both must
            # be stationary before the first switch-off
            t_burn = 10.0 * max(1.0 / model.gamma_on,
                                1.0 / model.ou_corner if model.ou_force_var > 0
                                else 0.0)
        burn_steps = int(math.ceil(t_burn / dt))

    # runaway guard scale: thermal RMS of the trapped mode at the bath
    # temperature, with the zero-point amplitude as a floor for cold runs
    x_scale = max(
        math.sqrt(K_B * noise.temperature / (model.mass * model.omega_trap_sq)),
        math.sqrt(HBAR / (2.0 * model.mass * model.omega_ref)))
    if plan.initial_state is not None:
        x_scale = max(x_scale, abs(plan.initial_state[0]),
                      abs(plan.initial_state[1]) / model.omega_ref)

    def check_blowup(step_label):
        if np.any(np.abs(z[0]) > BLOWUP_FACTOR * x_scale):
            worst = int(np.argmax(np.abs(z[0])))
            raise InstabilityError(
                f"|x| exceeded {BLOWUP_FACTOR:.0e} x thermal RMS during "
                f"{step_label} (trajectory {indices[worst]}, "
                f"x = {z[0][worst]:.3e} m)")

    def phonon(zz):
        e = 0.5 * model.mass * (zz[1] ** 2 + model.omega_trap_sq * zz[0] ** 2)
        return e / (HBAR * model.omega_ref) - 0.5

    for k in range(burn_steps):
        z = map_on.advance(z, draws.next_step())
        if k % DRAW_BLOCK == 0:
            check_blowup("burn-in")

    stride = plan.record_stride
    n_rec = (steps_half + stride - 1) // stride
    time_off = dt * stride * np.arange(n_rec)
    n_off = np.empty((b, n_periods, n_rec))

    full_t, full_x, full_v = [], [], []

    def record_full_state(t_now):
        full_t.append(t_now)
        full_x.append(z[0].copy())
        full_v.append(z[1].copy())

    t0 = 0.0
    for p in range(n_periods):
        for k in range(steps_half):
            if k % stride == 0:
                n_off[:, p, k // stride] = phonon(z)
                if record_full:
                    record_full_state(t0 + k * dt)
            z = map_off.advance(z, draws.next_step())
            if k % DRAW_BLOCK == DRAW_BLOCK - 1:
                check_blowup("relaxation")
        t0 += steps_half * dt
        if p < n_periods - 1:
            for k in range(steps_half):
                if record_full and k % stride == 0:
                    record_full_state(t0 + k * dt)
                z = map_on.advance(z, draws.next_step())
                if k % DRAW_BLOCK == DRAW_BLOCK - 1:
                    check_blowup("re-cooling")
            t0 += steps_half * dt

    full = None
    if record_full:
        t = np.asarray(full_t)
        x = np.asarray(full_x)[:, 0]
        v = np.asarray(full_v)[:, 0]
        n = (0.5 * model.mass * (v**2 + model.omega_trap_sq * x**2)
             / (HBAR * model.omega_ref) - 0.5)
        full = (t, x, v, n)
    return time_off, n_off, full, model


def simulate_trajectory(config: SystemConfig, noise: NoiseEnv, plan: SimPlan,
                        index: int):
    """One trajectory of the switch protocol; returns (t, x, v, n).

    t = 0 is the first switch-off.  The same index inside run_ensemble
    produces bit-identical numbers.
    """
    _, _, full, _ = _run_batch(config, noise, plan, [index], record_full=True)
    return full


def fit_decoherence_rate(result: EnsembleResult) -> SlopeFit:
    """Ordinary least squares on the initial-slope window of <n(t)>.

    The window is the first 5% of the relaxation record or the first 50
    points, whichever is longer.
    """
    t, n = result.time_grid, result.mean_phonon
    window = max(0.05 * t[-1], t[min(49, t.size - 1)])
    sel = t <= window * (1.0 + 1e-12)
    if sel.sum() < 10:
        raise InsufficientDataError(
            f"only {int(sel.sum())} mean-phonon points in the initial-slope "
            f"window ({window:.4g} s); need >= 10")
    tt, nn = t[sel], n[sel]
    span = tt - tt.mean()
    denom = float(np.dot(span, span))
    slope = float(np.dot(span, nn) / denom)
    intercept = float(nn.mean() - slope * tt.mean())
    resid = nn - (intercept + slope * tt)
    dof = max(tt.size - 2, 1)
    stderr = math.sqrt(float(np.dot(resid, resid)) / dof / denom)
    return SlopeFit(slope=slope, slope_err=stderr, intercept=intercept,
                    window=float(window))


def _fit_exponential(t: np.ndarray, n: np.ndarray) -> tuple[float, float, float]:
    """Fit n(t) = n_inf + (n0 - n_inf) exp(-gamma t); returns (n0, n_inf, gamma)."""

    def model(tt, n0, n_inf, gamma):
        return n_inf + (n0 - n_inf) * np.exp(-gamma * tt)

    slope0 = (n[-1] - n[0]) / max(t[-1], 1e-12)
    p0 = (float(n[0]), float(n[0] + 2.0 * slope0 * t[-1]), 1.0 / max(t[-1], 1e-12))
    try:
        popt, _ = curve_fit(model, t, n, p0=p0, maxfev=40000)
    except RuntimeError as exc:
        resid = np.abs(n - model(t, *p0))
        raise FitError(
            f"exponential relaxation fit failed: {exc}; p0 = {p0}, "
            f"max residual at p0 = {resid.max():.4g}") from exc
    return float(popt[0]), float(popt[1]), float(popt[2])


def run_ensemble(config: SystemConfig, noise: NoiseEnv, plan: SimPlan,
                 threads: int = 1) -> EnsembleResult:
    """Simulate the ensemble, align switch-off epochs, fit the heating rate.

    Segments come from ``n_trajectories`` independent runs times however
    many switch periods fit into ``duration``, so one long switched run
    (n_trajectories=1, duration of many periods) and a fresh-start ensemble
    are both available.  Trajectories are independent work units; with
    ``threads > 1`` they are distributed over a pool and reassembled by
    index, so the result is bit-identical to the single-threaded run.
    """
    indices = list(range(plan.n_trajectories))
    if threads <= 1 or plan.n_trajectories == 1:
        time_off, n_off, _, model = _run_batch(config, noise, plan, indices)
    else:
        groups = [indices[i::threads] for i in range(threads)]
        groups = [g for g in groups if g]
        with ThreadPoolExecutor(max_workers=len(groups)) as pool:
            parts = list(pool.map(
                lambda g: (g, _run_batch(config, noise, plan, g)), groups))
        _, (time_off, first_n, _, model) = parts[0]
        n_off = np.empty((plan.n_trajectories,) + first_n.shape[1:])
        for g, (_, part_n, _, _) in parts:
            for row, idx in enumerate(g):
                n_off[idx] = part_n[row]

    segments = n_off.reshape(-1, n_off.shape[-1])
    mean_phonon = segments.mean(axis=0)
    result = EnsembleResult(
        time_grid=time_off, mean_phonon=mean_phonon,
        per_trajectory_n0=segments[:, 0].copy(),
        fitted_rate=math.nan, fitted_rate_err=math.nan,
        fitted_gamma_eff=math.nan,
        n_osc=math.nan, omega_ref=model.omega_ref,
        n_segments=segments.shape[0], fit_intercept=math.nan)
    slope = fit_decoherence_rate(result)
    _, _, gamma_fit = _fit_exponential(time_off, mean_phonon)
    n_osc = model.omega_ref / (TWO_PI * slope.slope) if slope.slope > 0 else math.inf
    return replace(result, fitted_rate=slope.slope,
                   fitted_rate_err=slope.slope_err,
                   fitted_gamma_eff=gamma_fit, n_osc=n_osc,
                   fit_intercept=slope.intercept)


def predicted_rate(config: SystemConfig, noise: NoiseEnv,
                   mode: EffectiveMode) -> tuple[float, float, float]:
    """Initial heating rate d<n>/dt of the trapped mode, phonons/s.

    Returns (total, thermal_term, trap_term): the bath contribution
    kB*T*gamma1/(hbar*omega_eff) plus the trap-noise contribution
    m1*omega_eff^3*S_phidot(omega_eff)/(hbar*g^2).
    """
    if mode.omega_eff <= 0:
        raise ValidationError("omega_eff > 0", "omega_eff", mode.omega_eff)
    m1, cav = config.mirror1, config.cavity
    thermal = K_B * noise.temperature * m1.gamma0 / (HBAR * mode.omega_eff)
    sphi = noise.sphidot(mode.omega_eff / TWO_PI)
    if sphi == 0.0:
        trap = 0.0
    elif cav.g_pull <= 0:
        raise ValidationError("g_pull > 0 when frequency noise is present",
                              "g_pull", cav.g_pull)
    else:
        trap = m1.mass * mode.omega_eff**3 * sphi / (HBAR * cav.g_pull**2)
    return thermal + trap, thermal, trap


def off_state_mode(config: SystemConfig, noise: NoiseEnv) -> EffectiveMode:
    """Closed-loop mode with the servo parked at its resolved off gain."""
    model = reduced_model(config, noise)
    return extract_mode(config, gel=model.off_gain)


def detuning_scan(config: SystemConfig, noise: NoiseEnv, plan: SimPlan,
                  delta_values, threads: int = 1) -> list[ScanRow]:
    """Full measure-and-predict pipeline per detuning; failures are recorded
    per row and the scan continues."""
    rows = []
    for delta in np.atleast_1d(np.asarray(delta_values, dtype=float)):
        cfg = config.with_detuning(float(delta))
        try:
            mode_off = off_state_mode(cfg, noise)
            total_pred, _, _ = predicted_rate(cfg, noise, mode_off)
            result = run_ensemble(cfg, noise, plan, threads=threads)
            n_osc = mode_off.omega_eff / (TWO_PI * result.fitted_rate) \
                if result.fitted_rate > 0 else math.inf
            rows.append(ScanRow(
                delta=float(delta), omega_eff=mode_off.omega_eff,
                rate_measured=result.fitted_rate,
                rate_measured_err=result.fitted_rate_err,
                rate_predicted=total_pred, n_osc=n_osc, ok=True))
        except Exception as exc:  # per-cell failure, keep scanning
            rows.append(ScanRow(
                delta=float(delta), omega_eff=math.nan,
                rate_measured=math.nan, rate_measured_err=math.nan,
                rate_predicted=math.nan, n_osc=math.nan, ok=False,
                error=f"{type(exc).__name__}: {exc}"))
    return rows


# --------------------------------------------------------------------------
# CSV emitters
# --------------------------------------------------------------------------

def write_ensemble_csv(path, result: EnsembleResult, comment: str = ""):
    """Columns: t_s, mean_n."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"# segments: {result.n_segments}, "
                 f"f_ref_Hz: {float(result.omega_ref / TWO_PI)!r}")
    lines.append("t_s,mean_n")
    for t, n in zip(result.time_grid, result.mean_phonon):
        lines.append(f"{float(t)!r},{float(n)!r}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n")


def write_scan_csv(path, rows: list[ScanRow], comment: str = ""):
    """Columns: delta_Hz, f_eff_Hz, rate_measured, rate_predicted, rate_err, n_osc."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("delta_Hz,f_eff_Hz,rate_measured,rate_predicted,rate_err,n_osc")
    for r in rows:
        cells = (r.delta / TWO_PI, r.omega_eff / TWO_PI, r.rate_measured,
                 r.rate_predicted, r.rate_measured_err, r.n_osc)
        lines.append(",".join(repr(float(c)) for c in cells))
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n")
