"""Two-level pulse protocols over Monte-Carlo ensembles of motion and noise.

Rotating-frame convention: H/hbar = -(delta/2) sigma_z
+ (Omega/2)(cos phi_L sigma_x + sin phi_L sigma_y) with
sigma_z = |3P2><3P2| - |3P0><3P0|, so a constant segment rotates the Bloch
vector by Omega_eff t about (Omega cos phi_L, Omega sin phi_L,
-delta)/Omega_eff, Omega_eff = sqrt(Omega^2 + delta^2).

The drive is referenced to the transition of the motional ground state in
the trap: delta_ref = 2 pi dU_center + sum_i dOmega_i / 2 for the Fock
model (just 2 pi dU_center for the classical model), so a cold atom in a
magic trap sits exactly on resonance and thermal occupation produces the
residual per-shot detunings. Shot-to-shot noise (one motional sample, one
Rabi amplitude, one field angle, one detuning offset per trial) is frozen
within a shot. Ramsey's second pi/2 pulse carries phi_L = -2 pi f_fr t_R,
the phase-reset convention that writes a synthetic fringe at f_fr; the echo
inserts a pi pulse about +y between two half periods of free evolution.

SPAM convention: unprepared population stays in the dark manifold and
contributes zero signal; readout infidelity scales multiplicatively. The
observed population is therefore eta_prep * F_read * P_ideal with no
additive offset.

Per-trial randomness derives from SeedSequence(master_seed, spawn_key=
(trial,)); draw order within a trial is fixed (motional sample, detuning
offset, then the second detuning set if the protocol uses one, then Rabi
factor, then angle jitter), so results are reproducible bit-for-bit and
independent of how trials would be partitioned across workers. Trial
accumulation is a fixed-order block sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import analysis
from .atomstark import differential_shift_from_projection
from .focalfield import sample_at
from .params import FieldEnvironment, NoiseModel
from .trapmodel import (TrapCharacterization, classical_sample,
                        detuning_for_sample, fock_sample,
                        sample_fock_thermal, sample_position_classical)

# trial block size for the vectorized evolution (memory / determinism unit)
_TRIAL_BLOCK = 512


@dataclass(frozen=True)
class QubitState:
    """Two-level amplitudes (c_3P0, c_3P2)."""

    c_p0: complex
    c_p2: complex

    def __post_init__(self) -> None:
        norm = abs(self.c_p0) ** 2 + abs(self.c_p2) ** 2
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"state norm {norm} is not 1")

    @property
    def p32(self) -> float:
        return abs(self.c_p2) ** 2


@dataclass(frozen=True)
class PulseSegment:
    """Constant-parameter drive segment; Omega = 0 is free evolution."""

    duration_s: float
    omega_rad_s: float
    delta_rad_s: float
    phi_l_rad: float

    def __post_init__(self) -> None:
        if self.duration_s < 0:
            raise ValueError("segment duration must be >= 0")
        if self.omega_rad_s < 0:
            raise ValueError("Rabi frequency must be >= 0")


def _segment_apply(a, b, omega, delta, phi_l, duration):
    """Propagate amplitudes through one constant segment (broadcasting)."""
    omega = np.asarray(omega, dtype=float)
    delta = np.asarray(delta, dtype=float)
    duration = np.asarray(duration, dtype=float)
    om_eff = np.hypot(omega, delta)
    half = 0.5 * om_eff * duration
    cos_h = np.cos(half)
    # sin(half)/om_eff without the 0/0 at om_eff -> 0
    sdur = 0.5 * duration * np.sinc(half / math.pi)
    u00 = cos_h - 1j * delta * sdur
    u11 = cos_h + 1j * delta * sdur
    coupling = -1j * omega * sdur
    phase = np.exp(-1j * np.asarray(phi_l, dtype=float))
    u01 = coupling * phase
    u10 = coupling * np.conj(phase)
    return u00 * a + u01 * b, u10 * a + u11 * b


def evolve_segment(state: QubitState, seg: PulseSegment) -> QubitState:
    """Exact rotating-frame propagator for one constant segment."""
    a, b = _segment_apply(state.c_p0, state.c_p2, seg.omega_rad_s,
                          seg.delta_rad_s, seg.phi_l_rad, seg.duration_s)
    return QubitState(complex(a), complex(b))


def apply_spam(p_ideal, noise: NoiseModel):
    """Observed population: eta_prep * F_read * P_ideal (dark-manifold
    convention, zero additive offset)."""
    p = np.asarray(p_ideal, dtype=float)
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError("ideal populations must lie in [0, 1]")
    out = noise.spam_scale * np.clip(p, 0.0, 1.0)
    return float(out) if np.ndim(p_ideal) == 0 else out


@dataclass(frozen=True)
class TraceResult:
    """Ensemble-averaged protocol trace."""

    t_s: np.ndarray
    p32_mean: np.ndarray
    p32_sem: np.ndarray
    trials: int
    master_seed: int

    def __post_init__(self) -> None:
        if np.any(self.p32_mean < -1e-12) or np.any(self.p32_mean > 1 + 1e-12):
            raise ValueError("mean populations must lie in [0, 1]")
        if np.any(self.p32_sem < 0):
            raise ValueError("standard errors must be >= 0")


def write_trace_csv(trace: TraceResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "p32_mean", "p32_sem"])
        for t, m, s in zip(trace.t_s, trace.p32_mean, trace.p32_sem):
            w.writerow([f"{t:.12e}", f"{m:.9e}", f"{s:.9e}"])


def read_trace_csv(path) -> TraceResult:
    """Read a trace CSV; trial count and seed are not stored in the file
    and come back as 0."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"expected 3 columns t_s,p32_mean,p32_sem in {path}")
    return TraceResult(t_s=data[:, 0], p32_mean=data[:, 1],
                       p32_sem=data[:, 2], trials=0, master_seed=0)


def drive_reference_rad_s(trap: TrapCharacterization,
                          motional_model: str = "fock") -> float:
    """Detuning of the drive lock point: the T -> 0 line of the trapped
    atom relative to free space."""
    base = 2.0 * math.pi * trap.du_center_hz
    if motional_model == "fock":
        return base + 0.5 * float(np.sum(trap.delta_omega_rad_s))
    if motional_model == "classical":
        return base
    raise ValueError(f"unknown motional model {motional_model!r}")


def _trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(trial,))))


def _draw_trials(trap, temperature_K, noise, trials, master_seed,
                 motional_model, detuning_sets=1):
    """Per-trial shot-static draws.

    Returns (deltas[sets, trials], omega_factor[trials],
    phi_dev_deg[trials]); deltas are already referenced to the drive lock
    point and include the per-set detuning offset draw.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    d_ref = drive_reference_rad_s(trap, motional_model)
    deltas = np.empty((detuning_sets, trials))
    om_f = np.empty(trials)
    phi_dev = np.empty(trials)
    for k in range(trials):
        rng = _trial_rng(master_seed, k)
        for s in range(detuning_sets):
            if motional_model == "fock":
                n = [sample_fock_thermal(temperature_K, om, rng)
                     for om in trap.omega_p0_rad_s]
                sample = fock_sample(n)
            else:
                pos = sample_position_classical(
                    temperature_K, trap.omega_p0_rad_s, rng)
                sample = classical_sample(pos)
            deltas[s, k] = (detuning_for_sample(sample, trap) - d_ref
                            + rng.normal(0.0, noise.detuning_offset_std))
        # |.|: an amplitude sign flip is a pi phase shift, unobservable
        # from the ground state; keeps the Omega >= 0 invariant
        om_f[k] = abs(rng.normal(1.0, noise.rabi_frac_std))
        phi_dev[k] = rng.normal(0.0, noise.phi_jitter_std_deg)
    return deltas, om_f, phi_dev


def _phi_noise_delta_rad_s(field, env: FieldEnvironment, table,
                           phi_dev_deg: np.ndarray) -> np.ndarray:
    """Per-trial detuning from field-angle jitter, evaluated exactly at the
    trap center."""
    s = sample_at(field, 0.0, 0.0, 0.0)
    lam = env.tweezer.wavelength_nm

    def du_at(phi_deg):
        phi = np.radians(phi_deg)
        u3num = (s.epsilon[0] * np.cos(phi) + s.epsilon[1] * np.sin(phi))
        return differential_shift_from_projection(
            table, lam, np.abs(u3num) ** 2, s.e0sq)

    du_nom = du_at(env.field.phi_deg)
    return 2.0 * math.pi * (du_at(env.field.phi_deg + phi_dev_deg) - du_nom)


def _require_phi_context(noise, field, env, table) -> None:
    if noise.phi_jitter_std_deg > 0 and (field is None or env is None
                                         or table is None):
        raise ValueError(
            "phi_jitter_std_deg > 0 needs the field context (field, env, "
            "table) to map angle jitter onto shifts; pass them or use "
            "simulate_t2_vs_phinoise")


def _accumulate(p_block, acc):
    # blockwise Welford/Chan merge: exact zero variance for identical
    # trials, unlike sum/sum-of-squares cancellation
    nb = p_block.shape[0]
    bm = p_block.mean(axis=0)
    bm2 = ((p_block - bm) ** 2).sum(axis=0)
    n0 = acc[0]
    if n0 == 0:
        acc[0], acc[1], acc[2] = nb, bm, bm2
        return
    n = n0 + nb
    d = bm - acc[1]
    acc[1] = acc[1] + d * (nb / n)
    acc[2] = acc[2] + bm2 + d * d * (n0 * nb / n)
    acc[0] = n


def _finish_trace(t_grid, acc, trials, master_seed) -> TraceResult:
    mean = acc[1]
    if trials > 1:
        sem = np.sqrt(acc[2] / (trials - 1) / trials)
    else:
        sem = np.zeros_like(mean)
    return TraceResult(t_s=np.asarray(t_grid, dtype=float),
                       p32_mean=np.clip(mean, 0.0, 1.0), p32_sem=sem,
                       trials=trials, master_seed=master_seed)


def simulate_rabi(trap, temperature_K, noise: NoiseModel, omega_rad_s,
                  t_grid_s, trials: int, master_seed: int,
                  motional_model: str = "fock",
                  field=None, env=None, table=None) -> TraceResult:
    """Continuous drive from 3P0: per trial a motional sample sets the
    detuning, the Rabi amplitude jitters shot to shot, and P(3P2)(t) is
    averaged; SPAM is applied to the ensemble."""
    _require_phi_context(noise, field, env, table)
    t = np.asarray(t_grid_s, dtype=float)
    deltas, om_f, phi_dev = _draw_trials(trap, temperature_K, noise, trials,
                                         master_seed, motional_model)
    delta = deltas[0]
    if noise.phi_jitter_std_deg > 0:
        delta = delta + _phi_noise_delta_rad_s(field, env, table, phi_dev)
    omegas = omega_rad_s * om_f
    acc = [0, None, None]
    for i0 in range(0, trials, _TRIAL_BLOCK):
        sl = slice(i0, min(i0 + _TRIAL_BLOCK, trials))
        _, b = _segment_apply(1.0, 0.0, omegas[sl, None], delta[sl, None],
                              0.0, t[None, :])
        p = apply_spam(np.clip(np.abs(b) ** 2, 0.0, 1.0), noise)
        _accumulate(p, acc)
    return _finish_trace(t, acc, trials, master_seed)


def _pulse_params(omega_nominal, omega_trial, delta_trial, angle,
                  instantaneous):
    """(omega, delta, duration) arrays for a pulse of the given nominal
    rotation angle."""
    if instantaneous:
        return 1.0, 0.0, angle
    return omega_trial, delta_trial, angle / omega_nominal


def simulate_ramsey(trap, temperature_K, noise: NoiseModel, omega_rad_s,
                    f_fringe_hz, t_r_grid_s, trials: int, master_seed: int,
                    motional_model: str = "fock",
                    instantaneous_pulses: bool = False,
                    field=None, env=None, table=None) -> TraceResult:
    """pi/2 -- free(t_R) -- pi/2 with the second pulse at
    phi_L = -2 pi f_fr t_R. Pulse durations are pi/(2 Omega_nominal); the
    per-trial Rabi amplitude and detuning act during the pulses unless
    ``instantaneous_pulses`` (oracle mode) is set."""
    _require_phi_context(noise, field, env, table)
    t_r = np.asarray(t_r_grid_s, dtype=float)
    deltas, om_f, phi_dev = _draw_trials(trap, temperature_K, noise, trials,
                                         master_seed, motional_model)
    delta = deltas[0]
    if noise.phi_jitter_std_deg > 0:
        delta = delta + _phi_noise_delta_rad_s(field, env, table, phi_dev)
    omegas = omega_rad_s * om_f
    phi2 = -2.0 * math.pi * f_fringe_hz * t_r
    acc = [0, None, None]
    for i0 in range(0, trials, _TRIAL_BLOCK):
        sl = slice(i0, min(i0 + _TRIAL_BLOCK, trials))
        om = omegas[sl, None]
        de = delta[sl, None]
        p_om, p_de, p_t = _pulse_params(omega_rad_s, om, de, math.pi / 2,
                                        instantaneous_pulses)
        a, b = _segment_apply(1.0, 0.0, p_om, p_de, 0.0, p_t)
        a, b = _segment_apply(a, b, 0.0, de, 0.0, t_r[None, :])
        a, b = _segment_apply(a, b, p_om, p_de, phi2[None, :], p_t)
        p = apply_spam(np.clip(np.abs(b) ** 2, 0.0, 1.0), noise)
        _accumulate(p, acc)
    return _finish_trace(t_r, acc, trials, master_seed)


def simulate_echo(trap, temperature_K, noise: NoiseModel, omega_rad_s,
                  f_fringe_hz, t_grid_s, trials: int, master_seed: int,
                  motional_model: str = "fock",
                  instantaneous_pulses: bool = False,
                  fluctuating_detuning: bool = False,
                  field=None, env=None, table=None) -> TraceResult:
    """pi/2 -- t/2 -- pi(+y) -- t/2 -- pi/2(phi_L = -2 pi f_fr t).

    Shot-static detunings refocus exactly. With ``fluctuating_detuning``
    the motional sample and detuning offset are redrawn for the second
    half (and the closing pulses), modeling a correlation time shorter
    than the sequence."""
    _require_phi_context(noise, field, env, table)
    t = np.asarray(t_grid_s, dtype=float)
    n_sets = 2 if fluctuating_detuning else 1
    deltas, om_f, phi_dev = _draw_trials(trap, temperature_K, noise, trials,
                                         master_seed, motional_model,
                                         detuning_sets=n_sets)
    delta1 = deltas[0]
    delta2 = deltas[1] if fluctuating_detuning else deltas[0]
    if noise.phi_jitter_std_deg > 0:
        dphi = _phi_noise_delta_rad_s(field, env, table, phi_dev)
        delta1 = delta1 + dphi
        delta2 = delta2 + dphi
    omegas = omega_rad_s * om_f
    phi2 = -2.0 * math.pi * f_fringe_hz * t
    acc = [0, None, None]
    for i0 in range(0, trials, _TRIAL_BLOCK):
        sl = slice(i0, min(i0 + _TRIAL_BLOCK, trials))
        om = omegas[sl, None]
        de1 = delta1[sl, None]
        de2 = delta2[sl, None]
        h_om, h_de, h_t = _pulse_params(omega_rad_s, om, de1, math.pi / 2,
                                        instantaneous_pulses)
        a, b = _segment_apply(1.0, 0.0, h_om, h_de, 0.0, h_t)
        a, b = _segment_apply(a, b, 0.0, de1, 0.0, 0.5 * t[None, :])
        pi_om, pi_de, pi_t = _pulse_params(omega_rad_s, om, de2, math.pi,
                                           instantaneous_pulses)
        a, b = _segment_apply(a, b, pi_om, pi_de, math.pi / 2, pi_t)
        a, b = _segment_apply(a, b, 0.0, de2, 0.0, 0.5 * t[None, :])
        f_om, f_de, f_t = _pulse_params(omega_rad_s, om, de2, math.pi / 2,
                                        instantaneous_pulses)
        a, b = _segment_apply(a, b, f_om, f_de, phi2[None, :], f_t)
        p = apply_spam(np.clip(np.abs(b) ** 2, 0.0, 1.0), noise)
        _accumulate(p, acc)
    return _finish_trace(t, acc, trials, master_seed)


def ramsey_burst_grid(t2_guess_s: float, f_fringe_hz: float,
                      n_windows: int = 9, points_per_window: int = 28,
                      window_periods: float = 5.0,
                      span_factor: float = 2.5) -> np.ndarray:
    """Free-evolution grid of fringe-sampling bursts.

    Bursts of ``points_per_window`` points, each ``window_periods`` fringe
    periods long, are placed at window-aligned positions from 0 out to
    ``span_factor * t2_guess_s`` so that contrast extraction with the same
    ``window_periods`` puts one burst per window.

    With a trusted prior, ``span_factor`` near 1.5 keeps the fit on the
    decay itself; motional-ladder envelopes level off past the decay (a
    finite weight sits in the motional ground state) and sampling that
    shoulder biases a Gaussian envelope fit upward."""
    if t2_guess_s <= 0 or f_fringe_hz <= 0:
        raise ValueError("t2 guess and fringe frequency must be positive")
    if n_windows < 2 or points_per_window < 6:
        raise ValueError("need >= 2 windows and >= 6 points per window")
    width = window_periods / f_fringe_hz
    span = span_factor * t2_guess_s
    if span < n_windows * width:
        # T2 so short that the windows tile the span contiguously
        starts = np.arange(n_windows) * width
    else:
        raw = np.linspace(0.0, span - width, n_windows)
        starts = np.round(raw / width) * width
    offsets = (np.arange(points_per_window) / points_per_window) * width
    return (starts[:, None] + offsets[None, :]).ravel()


@dataclass(frozen=True)
class PhiNoisePoint:
    """Fitted coherence time at one field-angle noise amplitude."""

    delta_phi_deg: float
    t2_s: float
    t2_err_s: float
    db_x_G: float

    def to_json_dict(self) -> dict:
        return {"delta_phi_deg": self.delta_phi_deg, "t2_s": self.t2_s,
                "t2_err_s": self.t2_err_s, "db_x_G": self.db_x_G}


def simulate_t2_vs_phinoise(field, env: FieldEnvironment, table, trap,
                            temperature_K, noise: NoiseModel, omega_rad_s,
                            f_fringe_hz, t_r_grid_s, delta_phi_grid_deg,
                            trials: int, master_seed: int,
                            motional_model: str = "fock",
                            window_periods: float = 5.0) \
        -> list[PhiNoisePoint]:
    """Ramsey T2 versus Gaussian field-angle noise around the working angle.

    Per grid value the per-trial angle is drawn Gaussian around
    ``env.field.phi_deg`` (normally the magic angle), the angle's exact
    center-shift enters the detuning, and T2 comes from a Gaussian envelope
    fit to windowed contrasts. ``db_x_G`` reports the transverse-field
    amplitude |B| tan(delta_phi) that such angle noise corresponds to."""
    points = []
    for k, dphi in enumerate(delta_phi_grid_deg):
        noise_k = replace(noise, phi_jitter_std_deg=float(dphi))
        seed_k = int(np.random.SeedSequence(
            entropy=master_seed, spawn_key=(10_000 + k,)).generate_state(1)[0])
        trace = simulate_ramsey(trap, temperature_K, noise_k, omega_rad_s,
                                f_fringe_hz, t_r_grid_s, trials, seed_k,
                                motional_model=motional_model,
                                field=field, env=env, table=table)
        contrasts = analysis.extract_contrast(trace.t_s, trace.p32_mean,
                                              f_fringe_hz,
                                              window_periods=window_periods)
        fit = analysis.fit_t2_envelope([c.t_s for c in contrasts],
                                        [c.contrast for c in contrasts])
        points.append(PhiNoisePoint(
            delta_phi_deg=float(dphi), t2_s=fit.t2_s, t2_err_s=fit.t2_err_s,
            db_x_G=env.field.magnitude_G
            * math.tan(math.radians(float(dphi)))))
    return points
