"""Trace fitting and dephasing-time estimation.

Fringe fits use the model A sin(2 pi f t + phi0) + c. With f fixed the
problem is linear and solved exactly; with f free, the sum of squared
residuals is scanned over a dense frequency grid (each evaluation is the
exact linear solve) and the minimum refined by golden section. Contrast is
twice the fitted amplitude on the 0-1 population scale. Coherence times come
from a Gaussian envelope C0 exp(-t^2 / 2 T2^2) fitted by damped least
squares with analytic Jacobians. The thermal dephasing estimate converts the
position-averaged spread of a differential shift map into the 1/e time of
the equivalent Gaussian decay, 1 / (2 pi sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import K_B, MASS_SR88
from .errors import (FitFailed, GridTooCoarse, NoDecayObserved,
                     WindowTooShort)

# Free-frequency scan: grid points per 1/span of frequency resolution, and
# the golden-section convergence target relative to the peak frequency.
_SCAN_OVERSAMPLE = 4
_GOLDEN_RTOL = 1e-12
_MAX_SCAN_POINTS = 1 << 21

# Damped least squares: iteration cap and relative-step convergence.
_LM_MAX_ITER = 200
_LM_STEP_RTOL = 1e-10


@dataclass(frozen=True)
class SinusoidFit:
    """Least-squares sinusoid A sin(2 pi f t + phi0) + c.

    Amplitude is non-negative (sign absorbed into the phase).
    ``well_resolved`` is True when the residual RMS is below the amplitude;
    callers that need a trustworthy fringe should check it.
    """

    amplitude: float
    freq_hz: float
    phase_rad: float
    offset: float
    amplitude_err: float
    freq_err_hz: float | None
    phase_err_rad: float
    offset_err: float
    rms: float

    @property
    def well_resolved(self) -> bool:
        return self.rms < self.amplitude

    def to_json_dict(self) -> dict:
        return {
            "model": "sinusoid",
            "amplitude": self.amplitude,
            "freq_hz": self.freq_hz,
            "phase_rad": self.phase_rad,
            "offset": self.offset,
            "amplitude_err": self.amplitude_err,
            "freq_err_hz": self.freq_err_hz,
            "phase_err_rad": self.phase_err_rad,
            "offset_err": self.offset_err,
            "rms": self.rms,
        }


@dataclass(frozen=True)
class EnvelopeFit:
    """Gaussian contrast envelope C0 exp(-t^2 / 2 T2^2)."""

    t2_s: float
    c0: float
    t2_err_s: float
    c0_err: float
    rms: float

    def to_json_dict(self) -> dict:
        return {
            "model": "gaussian_envelope",
            "t2_s": self.t2_s,
            "c0": self.c0,
            "t2_err_s": self.t2_err_s,
            "c0_err": self.c0_err,
            "rms": self.rms,
        }


def _linear_sinusoid_solve(t: np.ndarray, y: np.ndarray, freq_hz: float):
    """Exact LS solve in (A sin, A cos, c) at fixed frequency."""
    theta = 2.0 * math.pi * freq_hz * t
    design = np.column_stack([np.sin(theta), np.cos(theta),
                              np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return coef, design, float(resid @ resid)


def _sinusoid_fit_from_coef(t, y, freq_hz, coef, design, ssr,
                            freq_err_hz) -> SinusoidFit:
    n = t.size
    a_s, a_c, c = (float(v) for v in coef)
    amp = math.hypot(a_s, a_c)
    phase = math.atan2(a_c, a_s) if amp > 0 else 0.0
    dof = max(n - (3 if freq_err_hz is None else 4), 1)
    sigma_sq = ssr / dof
    try:
        cov = sigma_sq * np.linalg.inv(design.T @ design)
    except np.linalg.LinAlgError:
        raise FitFailed("sinusoid design matrix is singular") from None
    var_s, var_c, var_off = np.diag(cov)
    cov_sc = cov[0, 1]
    if amp > 0:
        # delta method through (a_s, a_c) -> (A, phi0)
        amp_err = math.sqrt(max(
            (a_s / amp) ** 2 * var_s + (a_c / amp) ** 2 * var_c
            + 2 * (a_s * a_c / amp ** 2) * cov_sc, 0.0))
        phase_err = math.sqrt(max(
            (a_c / amp ** 2) ** 2 * var_s + (a_s / amp ** 2) ** 2 * var_c
            - 2 * (a_s * a_c / amp ** 4) * cov_sc, 0.0))
    else:
        amp_err = math.sqrt(max(var_s, var_c))
        phase_err = math.pi
    return SinusoidFit(amplitude=amp, freq_hz=float(freq_hz),
                       phase_rad=phase, offset=c,
                       amplitude_err=amp_err, freq_err_hz=freq_err_hz,
                       phase_err_rad=phase_err,
                       offset_err=float(math.sqrt(var_off)),
                       rms=math.sqrt(ssr / n))


def _scan_frequency(t: np.ndarray, y: np.ndarray) -> float:
    """SSR minimum over frequency: dense exact-solve scan, then golden."""
    span = float(t.max() - t.min())
    dts = np.diff(np.sort(t))
    dt_min = float(dts[dts > 0].min())
    f_lo = 1.0 / span
    f_hi = 0.5 / dt_min
    if f_hi <= f_lo:
        raise FitFailed("time grid cannot resolve any full fringe period")
    step = 1.0 / (span * _SCAN_OVERSAMPLE)
    n_f = int((f_hi - f_lo) / step) + 1
    if n_f > _MAX_SCAN_POINTS:
        n_f = _MAX_SCAN_POINTS
        step = (f_hi - f_lo) / n_f
    freqs = f_lo + step * np.arange(n_f)

    y0 = y - y.mean()
    best_ssr = np.empty(n_f)
    # chunked normal-equation solve of the 3-parameter problem per frequency
    chunk = 2048
    ones = np.ones_like(t)
    for i0 in range(0, n_f, chunk):
        fs = freqs[i0:i0 + chunk, None]
        theta = 2.0 * math.pi * fs * t[None, :]
        s, c = np.sin(theta), np.cos(theta)
        g = np.empty((fs.size, 3, 3))
        g[:, 0, 0] = np.sum(s * s, axis=1)
        g[:, 0, 1] = g[:, 1, 0] = np.sum(s * c, axis=1)
        g[:, 0, 2] = g[:, 2, 0] = s.sum(axis=1)
        g[:, 1, 1] = np.sum(c * c, axis=1)
        g[:, 1, 2] = g[:, 2, 1] = c.sum(axis=1)
        g[:, 2, 2] = t.size
        b = np.stack([s @ y0, c @ y0, np.full(fs.size, y0 @ ones)], axis=1)
        try:
            coef = np.linalg.solve(g, b[..., None])[..., 0]
        except np.linalg.LinAlgError:
            coef = np.stack([np.linalg.lstsq(gi, bi, rcond=None)[0]
                             for gi, bi in zip(g, b)])
        # SSR = y.y - b.coef for the projection onto the design space
        best_ssr[i0:i0 + chunk] = y0 @ y0 - np.sum(b * coef, axis=1)
    k = int(np.argmin(best_ssr))

    def ssr_at(f):
        return _linear_sinusoid_solve(t, y, f)[2]

    lo = freqs[max(k - 1, 0)]
    hi = freqs[min(k + 1, n_f - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = ssr_at(x1), ssr_at(x2)
    for _ in range(200):
        if hi - lo <= _GOLDEN_RTOL * hi:
            break
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = ssr_at(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = ssr_at(x2)
    return float(0.5 * (lo + hi))


def fit_sinusoid(t, y, fixed_freq_hz: float | None = None) -> SinusoidFit:
    """Least-squares sinusoid fit; exact linear solve when f is fixed.

    Free-frequency fits need >= 6 points spanning at least one period and
    raise :class:`FitFailed` when no fringe stands above the residual noise.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitFailed("t and y must be 1-d arrays of equal length")
    if fixed_freq_hz is not None:
        if t.size < 3:
            raise FitFailed("need >= 3 points for a fixed-frequency fit")
        coef, design, ssr = _linear_sinusoid_solve(t, y, fixed_freq_hz)
        return _sinusoid_fit_from_coef(t, y, fixed_freq_hz, coef, design,
                                       ssr, freq_err_hz=None)
    if t.size < 6:
        raise FitFailed("need >= 6 points for a free-frequency fit")
    if t.max() == t.min():
        raise FitFailed("degenerate time grid")
    f_hat = _scan_frequency(t, y)
    # a minimum pinned to the one-period-per-span floor means no full
    # oscillation is visible in the data
    if f_hat * (t.max() - t.min()) < 1.0 + 1e-6:
        raise FitFailed("data span less than one full period of the "
                        "best-fit frequency")
    coef, design, ssr = _linear_sinusoid_solve(t, y, f_hat)
    # frequency uncertainty from the local curvature of SSR(f)
    df = max(1e-4 / (t.max() - t.min()), abs(f_hat) * 1e-9)
    ssr_p = _linear_sinusoid_solve(t, y, f_hat + df)[2]
    ssr_m = _linear_sinusoid_solve(t, y, f_hat - df)[2]
    curv = (ssr_p - 2 * ssr + ssr_m) / df ** 2
    sigma_sq = ssr / max(t.size - 4, 1)
    freq_err = math.sqrt(2 * sigma_sq / curv) if curv > 0 else math.inf
    fit = _sinusoid_fit_from_coef(t, y, f_hat, coef, design, ssr,
                                  freq_err_hz=freq_err)
    if not fit.well_resolved:
        raise FitFailed("no fringe resolved above the residual noise "
                        f"(amplitude {fit.amplitude:.3g}, rms {fit.rms:.3g})")
    return fit


@dataclass(frozen=True)
class ContrastPoint:
    """Fringe contrast in one time window (2A on the population scale)."""

    t_s: float
    contrast: float
    contrast_err: float


def extract_contrast(t, y, fringe_hz: float, window_periods: float = 5.0,
                     normalize: str = "none") -> list[ContrastPoint]:
    """Windowed fixed-frequency contrast extraction.

    The trace is cut into consecutive windows of ``window_periods`` fringe
    periods; each window holding >= 6 points gets an exact linear fit and
    contributes (mean time, 2A). ``normalize``: "none" for absolute
    contrast, "first" to scale by the first window.
    """
    if window_periods < 1.0:
        raise WindowTooShort(f"window of {window_periods} fringe periods; "
                             "need at least one full period")
    if fringe_hz <= 0:
        raise ValueError("fringe frequency must be positive")
    if normalize not in ("none", "first"):
        raise ValueError("normalize must be 'none' or 'first'")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    width = window_periods / fringe_hz
    t0 = float(t.min())
    idx = np.floor((t - t0) / width).astype(int)
    # a point landing exactly on the final edge joins the last full window
    last = max(int(np.ceil((float(t.max()) - t0) / width)) - 1, 0)
    idx = np.minimum(idx, last)
    points: list[ContrastPoint] = []
    for k in range(int(idx.max()) + 1):
        mask = idx == k
        if mask.sum() < 6:
            continue
        fit = fit_sinusoid(t[mask], y[mask], fixed_freq_hz=fringe_hz)
        points.append(ContrastPoint(t_s=float(t[mask].mean()),
                                    contrast=2.0 * fit.amplitude,
                                    contrast_err=2.0 * fit.amplitude_err))
    if not points:
        raise WindowTooShort("no window holds enough points to fit")
    if normalize == "first":
        scale = points[0].contrast
        if scale <= 0:
            raise FitFailed("first-window contrast is zero; cannot "
                            "normalize")
        points = [ContrastPoint(p.t_s, p.contrast / scale,
                                p.contrast_err / scale) for p in points]
    return points


def fit_t2_envelope(t_s, contrast) -> EnvelopeFit:
    """Fit C(t) = C0 exp(-t^2 / 2 T2^2) by damped least squares.

    Initialized from the log-linear transform of the positive contrasts.
    Raises :class:`NoDecayObserved` (carrying a lower bound on T2) when the
    data show no decay over the scanned span, :class:`FitFailed` when
    underdetermined or not converged.
    """
    t = np.asarray(t_s, dtype=float)
    c = np.asarray(contrast, dtype=float)
    if t.shape != c.shape or t.ndim != 1:
        raise FitFailed("t and contrast must be 1-d arrays of equal length")
    if t.size < 4:
        raise FitFailed("need >= 4 contrast points")
    t_max = float(np.abs(t).max())
    if t_max == 0:
        raise FitFailed("degenerate time grid")

    # init: ln C = ln C0 - beta t^2 on the positive points
    pos = c > 0
    if pos.sum() < 2:
        raise FitFailed("not enough positive contrasts to initialize")
    coef = np.polynomial.polynomial.polyfit(t[pos] ** 2, np.log(c[pos]), 1)
    c0 = math.exp(coef[0])
    beta = -float(coef[1])
    if beta <= 0:
        raise NoDecayObserved(
            "log-linear slope is non-negative: no decay over the span",
            t2_lower_bound_s=t_max)
    beta = min(beta, 700.0 / t_max ** 2)   # keep exp(-beta t^2) above underflow

    lam = 1e-3
    theta = np.array([c0, beta])
    converged = False
    for _ in range(_LM_MAX_ITER):
        c0, beta = theta
        model = c0 * np.exp(-beta * t ** 2)
        r = model - c
        ssr = float(r @ r)
        jac = np.column_stack([model / c0, -t ** 2 * model])
        g = jac.T @ jac
        rhs = -jac.T @ r
        for _damp in range(50):
            try:
                step = np.linalg.solve(g + lam * np.diag(np.diag(g)), rhs)
            except np.linalg.LinAlgError:
                raise FitFailed("normal equations singular in envelope "
                                "fit") from None
            trial = theta + step
            if trial[0] <= 0:
                lam *= 10
                continue
            mt = trial[0] * np.exp(-trial[1] * t ** 2)
            ssr_t = float((mt - c) @ (mt - c))
            if ssr_t <= ssr:
                theta = trial
                lam = max(lam / 10, 1e-12)
                break
            lam *= 10
        else:
            raise FitFailed("damping exhausted in envelope fit")
        if np.all(np.abs(step) <= _LM_STEP_RTOL * np.abs(theta)):
            converged = True
            break
    if not converged:
        raise FitFailed("envelope fit did not converge in "
                        f"{_LM_MAX_ITER} iterations")

    c0, beta = theta
    if beta <= 0 or 1.0 - math.exp(-beta * t_max ** 2) < 0.02:
        raise NoDecayObserved(
            "predicted decay over the span is below 2%",
            t2_lower_bound_s=t_max)
    t2 = 1.0 / math.sqrt(2.0 * beta)
    model = c0 * np.exp(-beta * t ** 2)
    r = model - c
    ssr = float(r @ r)
    jac = np.column_stack([model / c0, -t ** 2 * model])
    sigma_sq = ssr / max(t.size - 2, 1)
    try:
        cov = sigma_sq * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        raise FitFailed("singular curvature at the envelope optimum") \
            from None
    beta_err = math.sqrt(max(cov[1, 1], 0.0))
    c0_err = math.sqrt(max(cov[0, 0], 0.0))
    t2_err = beta_err * (2.0 * beta) ** -1.5
    if not 0.0 < c0 <= 1.2:
        raise FitFailed(f"fitted initial contrast {c0:.3g} outside (0, 1.2]"
                        "; input is not on the population scale")
    return EnvelopeFit(t2_s=t2, c0=float(c0), t2_err_s=float(t2_err),
                       c0_err=float(c0_err), rms=math.sqrt(ssr / t.size))


def thermal_dephasing_estimate(shift_map, trap,
                               temperature_K: float) -> float:
    """1/e Gaussian-dephasing time from a thermal average of a shift map.

    Weights each map cell by the classical thermal position distribution of
    the ground qubit state (sigma_i = sqrt(kB T / m) / omega_i, transverse
    axes) and returns 1 / (2 pi sigma_dU). A map with no spread (or T = 0)
    gives an unbounded timescale, reported as ``inf``.
    """
    if temperature_K < 0:
        raise ValueError("temperature must be >= 0")
    if temperature_K == 0.0:
        return math.inf
    om = np.asarray(trap.omega_p0_rad_s, dtype=float)
    sig_x = math.sqrt(K_B * temperature_K / MASS_SR88) / om[0]
    sig_y = math.sqrt(K_B * temperature_K / MASS_SR88) / om[1]
    x = np.asarray(shift_map.x_m, dtype=float)
    y = np.asarray(shift_map.y_m, dtype=float)
    dx = float(np.min(np.diff(x)))
    dy = float(np.min(np.diff(y)))
    if sig_x < 3 * dx or sig_y < 3 * dy:
        raise GridTooCoarse(
            f"thermal cloud (sigma {sig_x * 1e9:.1f} x {sig_y * 1e9:.1f} nm)"
            f" under 3 grid steps ({dx * 1e9:.1f} x {dy * 1e9:.1f} nm)")
    xx, yy = np.meshgrid(x, y, indexing="xy")
    w = np.exp(-xx ** 2 / (2 * sig_x ** 2) - yy ** 2 / (2 * sig_y ** 2))
    w /= w.sum()
    du = np.asarray(shift_map.du_hz, dtype=float)
    mean = float(np.sum(w * du))
    var = float(np.sum(w * (du - mean) ** 2))
    if var == 0.0:
        return math.inf
    return 1.0 / (2.0 * math.pi * math.sqrt(var))
