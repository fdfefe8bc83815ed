"""Detection-chain models: heterodyne phase measurement with amplifier
noise, analytic precision formulas, and the destructive MCP channel.
"""

from __future__ import annotations

import numpy as np

from .params import McpModel, NoiseChain, ProbeConfig
from .transmission import ComplexTrace, WindowConfigError


class SnrValidityError(ValueError):
    """SNR too small for the Gaussian phase-noise limit."""


def snr(n_c, kappa_out, tau_i, n_noise):
    """Power SNR of the heterodyne detection, R = n_c kappa_out tau_i / n_noise.

    kappa_out is an angular rate (rad/s), consistent with kappa elsewhere.
    """
    if kappa_out <= 0 or tau_i <= 0 or n_noise <= 0:
        raise ValueError("kappa_out, tau_i and n_noise must be positive")
    return np.asarray(n_c, dtype=float) * kappa_out * tau_i / n_noise


def phase_precision(r):
    """Single-measurement phase precision 1/sqrt(R), radians.

    Valid only for R >> 1; R <= 10 is rejected.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 10.0):
        raise SnrValidityError("phase_precision requires R > 10")
    out = 1.0 / np.sqrt(r)
    return out if out.ndim else float(out)


def phase_change_precision(r, chi, kappa, alpha):
    """Precision of the phase change including the reference measurement.

    sigma_dphi = sqrt((1 + (2 chi/kappa)^2 + 1/alpha) / R), radians.
    """
    sigma = phase_precision(r)
    return sigma * np.sqrt(1.0 + (2.0 * np.asarray(chi) / kappa) ** 2 + 1.0 / alpha)


def atom_number_precision(kappa, g, n_noise, kappa_out, tau_i, alpha, n_c, n_crit):
    """Single-transition analytic atom-number precision.

    sigma_N = (kappa/g) sqrt(beta n_noise / (2 kappa_out tau_i))
              * sqrt(1 + n_crit/n_c),  beta = 1 + 1/alpha.
    """
    n_c = np.asarray(n_c, dtype=float)
    if np.any(n_c == 0):
        raise ZeroDivisionError("n_c = 0 in atom_number_precision")
    beta = 1.0 + 1.0 / alpha
    out = (kappa / g) * np.sqrt(beta * n_noise / (2.0 * kappa_out * tau_i)) * np.sqrt(
        1.0 + n_crit / n_c
    )
    return out if out.ndim else float(out)


def _window_slice(times, window):
    sel = (times >= window[0]) & (times <= window[1])
    if not np.any(sel):
        raise WindowConfigError(f"window {window} contains no samples")
    return sel


def _noisy_window_phase(values, sigma_q, rng):
    noisy = values + sigma_q * (
        rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
    )
    return float(np.angle(np.mean(noisy)))


def simulate_phase_shot(
    true_trace: ComplexTrace,
    probe: ProbeConfig,
    noise: NoiseChain,
    rng,
    kappa_out: float,
    signal_window=None,
    reference_window=None,
    transit_end=None,
):
    """One stochastic phase-change measurement, in degrees.

    Additive complex Gaussian noise per sample, with per-quadrature variance
    chosen so the window-averaged phase variance of a unit-amplitude signal
    equals 1/R_S/N; the additive character automatically produces the
    (2 chi/kappa)^2 power penalty of a pulled resonance.  Independent
    digitizer phase noise (std = digitizer_phase_floor) is added once, and
    the reference-window phase (length alpha * tau_i, after atom exit) is
    subtracted.
    """
    times = true_trace.times
    dt = true_trace.dt
    if signal_window is None:
        i = int(np.argmax(np.abs(np.unwrap(true_trace.phase) - true_trace.phase[-1])))
        signal_window = (times[i] - probe.tau_i / 2.0, times[i] + probe.tau_i / 2.0)
    if reference_window is None:
        reference_window = (times[-1] - probe.alpha * probe.tau_i, times[-1])
    if transit_end is not None and reference_window[0] < transit_end:
        raise WindowConfigError("reference window overlaps the atom transit")
    if reference_window[0] < signal_window[1]:
        raise WindowConfigError("reference window overlaps the signal window")

    # per-sample per-quadrature noise std: window average of n = tau/dt
    # samples then has phase variance n_noise/(n_c kappa_out n dt) = 1/R
    sigma_q = np.sqrt(noise.n_noise / (probe.n_c * kappa_out * dt))

    values = true_trace.values
    phi_sig = _noisy_window_phase(values[_window_slice(times, signal_window)], sigma_q, rng)
    phi_ref = _noisy_window_phase(values[_window_slice(times, reference_window)], sigma_q, rng)
    dphi = phi_sig - phi_ref
    if noise.digitizer_phase_floor > 0:
        dphi += noise.digitizer_phase_floor * rng.standard_normal()
    return float(np.degrees(dphi))


def simulate_phase_shot_batch(
    dphi_true_rad,
    amp_signal,
    probe: ProbeConfig,
    noise: NoiseChain,
    rng,
    kappa_out: float,
):
    """Vectorized equivalent of :func:`simulate_phase_shot` for campaigns.

    Draws the window-averaged phases directly from their Gaussian limits:
    signal phase std = 1/(|A| sqrt(R)), reference std = 1/sqrt(alpha R),
    plus the digitizer floor.  Returns measured phase changes in degrees.
    """
    dphi_true_rad = np.asarray(dphi_true_rad, dtype=float)
    amp_signal = np.broadcast_to(np.asarray(amp_signal, dtype=float), dphi_true_rad.shape)
    r = float(snr(probe.n_c, kappa_out, probe.tau_i, noise.n_noise))
    sigma_sig = 1.0 / (amp_signal * np.sqrt(r))
    sigma_ref = 1.0 / np.sqrt(probe.alpha * r)
    out = dphi_true_rad + sigma_sig * rng.standard_normal(dphi_true_rad.shape)
    out = out - sigma_ref * rng.standard_normal(dphi_true_rad.shape)
    if noise.digitizer_phase_floor > 0:
        out = out + noise.digitizer_phase_floor * rng.standard_normal(dphi_true_rad.shape)
    return np.degrees(out)


def _gain_sum(counts, sigma_a_rel, rng):
    """Sum of `counts` i.i.d. avalanche gains (gamma, mean 1, rel std sigma)."""
    counts = np.asarray(counts)
    if sigma_a_rel == 0:
        return counts.astype(float)
    shape = counts / sigma_a_rel ** 2
    out = np.zeros(np.shape(counts), dtype=float)
    pos = counts > 0
    if np.any(pos):
        out = np.where(
            pos, rng.gamma(np.where(pos, shape, 1.0)) * sigma_a_rel ** 2, 0.0
        )
    return out


def mcp_signal(n_s, n_p, model: McpModel, rng):
    """Stochastic MCP window signals (S1, S2) in V ns for one cloud.

    Each atom is detected with probability eta; each detected atom
    contributes an avalanche gain of mean 1/eta (gamma distributed with
    relative std sigma_a_rel), scaled by the single-atom signal, by
    alpha_p for p atoms, and split into window 2 by beta_s or beta_p.
    Expectations: S1 = s1_atom (N_s + alpha_p N_p),
    S2 = s1_atom (beta_s N_s + alpha_p beta_p N_p).
    """
    n_s = np.asarray(n_s)
    n_p = np.asarray(n_p)
    if np.any(n_s < 0) or np.any(n_p < 0):
        raise ValueError("atom counts must be nonnegative")
    ks = rng.binomial(np.rint(n_s).astype(np.int64), model.eta)
    kp = rng.binomial(np.rint(n_p).astype(np.int64), model.eta)
    gs = _gain_sum(ks, model.sigma_a_rel, rng)
    gp = _gain_sum(kp, model.sigma_a_rel, rng)
    scale = model.s1_atom / model.eta
    s1 = scale * (gs + model.alpha_p * gp)
    s2 = scale * (model.beta_s * gs + model.alpha_p * model.beta_p * gp)
    if np.ndim(n_s) == 0 and np.ndim(n_p) == 0:
        return float(s1), float(s2)
    return s1, s2


def p_fraction_from_ratio(s_r, model: McpModel, band_tolerance=0.05):
    """Preparation-time p fraction from the window ratio S_r = S2/S1.

    Inverts the two-window model including the s/p decay imbalance over
    the microwave-to-detection delay.  Values outside the physical band
    [beta_p, beta_s] (widened by ``band_tolerance`` relative) are clipped
    and flagged instead of rejected, since single-shot noise can push S_r
    out of band.  Returns (p_fraction, clipped_flag).
    """
    s_r = np.asarray(s_r, dtype=float)
    lo = model.beta_p * (1.0 - band_tolerance)
    hi = model.beta_s * (1.0 + band_tolerance)
    clipped = (s_r < lo) | (s_r > hi)
    s = np.clip(s_r, model.beta_p, model.beta_s)
    d = model.decay_correction
    with np.errstate(divide="ignore"):
        ratio = (model.beta_p - s) / (s - model.beta_s)
    p = np.where(
        s >= model.beta_s,
        0.0,
        np.where(s <= model.beta_p, 1.0, 1.0 / (1.0 + model.alpha_p * ratio * d)),
    )
    if s_r.ndim == 0:
        return float(p), bool(clipped)
    return p, clipped


def mcp_relative_precision(n_atoms, eta, sigma_a_rel):
    """Relative atom-number precision of the ionization channel.

    sqrt((sigma_a_rel^2/eta + 1/eta - 1) / N); exact for the binomial
    thinning + gamma gain model of :func:`mcp_signal`.
    """
    n_atoms = np.asarray(n_atoms, dtype=float)
    out = np.sqrt((sigma_a_rel ** 2 / eta + 1.0 / eta - 1.0) / n_atoms)
    return out if out.ndim else float(out)
