"""Fit tasks built on the least-squares engine: trace fit for the atom
number, entry-time fit, power-dependence fit, MCP Rabi calibration and
the spectroscopy population fit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fitting import FitResult, least_squares_fit, multi_start_fit, RankDeficiencyError
from .params import CavitySpec, EnsembleState, McpModel, TransitionSet
from .transmission import simulate_flythrough


class UnidentifiableError(ValueError):
    """The data cannot constrain the requested parameters."""


@dataclass
class SpectroscopyModel:
    """Parameters of the intra-cavity spectroscopy joint model."""

    omega_i_plus: float
    omega_i_minus: float
    delta_i_plus: float = 0.0
    delta_i_minus: float = 0.0
    dt_i: float = 0.3e-6
    p_plus: float = 0.61
    p_minus: float = 0.20
    prep_rabi: float = 0.0
    prep_dt: float = 0.4e-6

    def __post_init__(self):
        if not (0 <= self.p_plus <= 1 and 0 <= self.p_minus <= 1):
            raise ValueError("sublevel fractions must lie in [0, 1]")
        if self.p_plus + self.p_minus > 1 + 1e-12:
            raise ValueError("p_plus + p_minus must not exceed 1")
        if self.dt_i <= 0 or self.prep_dt <= 0:
            raise ValueError("pulse durations must be positive")


def spectroscopy_transfer(omega_i, delta_i, dt_i):
    """Two-level transfer probability of a square pulse.

    [O^2/(O^2 + D^2)] sin^2(dt/2 sqrt(O^2 + D^2)); bounded by the Rabi
    envelope O^2/(O^2 + D^2).
    """
    if dt_i <= 0:
        raise ValueError("dt_i must be positive")
    omega = np.asarray(omega_i, dtype=float)
    delta = np.asarray(delta_i, dtype=float)
    w2 = omega ** 2 + delta ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(
            w2 > 0,
            omega ** 2 / np.where(w2 > 0, w2, 1.0) * np.sin(0.5 * dt_i * np.sqrt(w2)) ** 2,
            0.0,
        )
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# trace fits


def _interp_model_phase(params, times, ensemble, cavity, transitions, delta_m, kappa, **kw):
    ens = replace(
        ensemble,
        n_atoms=params.get("n_atoms", ensemble.n_atoms),
        entry_time=params.get("entry_time", ensemble.entry_time),
    )
    trace, dphi = simulate_flythrough(ens, cavity, transitions, delta_m, kappa, **kw)
    return trace, dphi


def fit_entry_time(
    times,
    dphi_deg,
    ensemble: EnsembleState,
    cavity: CavitySpec,
    transitions: TransitionSet,
    delta_m: float,
    kappa: float,
    sigma_deg=None,
    **model_kw,
) -> FitResult:
    """Preliminary single-parameter fit of the time origin of the transit.

    All other parameters are held at their configured values.  Raises
    :class:`UnidentifiableError` for a flat trace.
    """
    times = np.asarray(times, dtype=float)
    dphi_deg = np.asarray(dphi_deg, dtype=float)

    def model(params, _x):
        trace, dphi = _interp_model_phase(
            params, times, ensemble, cavity, transitions, delta_m, kappa, **model_kw
        )
        return np.interp(times, trace.times, dphi)

    data = (times, dphi_deg) if sigma_deg is None else (times, dphi_deg, sigma_deg)
    try:
        return least_squares_fit(model, data, {"entry_time": ensemble.entry_time})
    except RankDeficiencyError as exc:
        raise UnidentifiableError("flat trace: entry time unidentifiable") from exc


def fit_atom_number(
    traces,
    ensemble: EnsembleState,
    cavity: CavitySpec,
    transitions: TransitionSet,
    kappa: float,
    init_n: float = None,
    **model_kw,
) -> FitResult:
    """Joint amplitude+phase fit of the fly-through model with N free.

    ``traces`` is a list of dicts with keys delta_m, times, amplitude,
    phase (radians, referenced model output: unwrapped transmission
    phase), and optional sigma_amp / sigma_phase.
    """
    y_parts, s_parts = [], []
    for tr in traces:
        n = len(tr["times"])
        y_parts += [np.asarray(tr["amplitude"], dtype=float),
                    np.asarray(tr["phase"], dtype=float)]
        s_parts += [np.full(n, tr.get("sigma_amp", 1.0)),
                    np.full(n, tr.get("sigma_phase", 1.0))]
    y = np.concatenate(y_parts)
    sig = np.concatenate(s_parts)

    def model(params, _x):
        out = []
        for tr in traces:
            trace, _ = _interp_model_phase(
                params, None, ensemble, cavity, transitions, tr["delta_m"], kappa,
                **model_kw,
            )
            t = np.asarray(tr["times"], dtype=float)
            out.append(np.interp(t, trace.times, trace.amplitude))
            out.append(np.interp(t, trace.times, np.unwrap(trace.phase)))
        return np.concatenate(out)

    init = {"n_atoms": float(init_n if init_n is not None else ensemble.n_atoms)}
    try:
        return least_squares_fit(
            model, (None, y, sig), init, bounds={"n_atoms": (0.0, np.inf)}
        )
    except RankDeficiencyError as exc:
        raise UnidentifiableError("traces carry no atom-number information") from exc


# ---------------------------------------------------------------------------
# power dependence


def init_n_crit_from_half_signal(n_c, dphi_deg):
    """Initial n_crit from the photon number where the signal halves.

    |dphi| drops to half its low-power value at n_c = 3 n_crit.
    """
    n_c = np.asarray(n_c, dtype=float)
    mag = np.abs(np.asarray(dphi_deg, dtype=float))
    order = np.argsort(n_c)
    n_c, mag = n_c[order], mag[order]
    half = 0.5 * mag[0]
    above = mag >= half
    if np.all(above):
        return float(n_c[-1])  # no decay visible; caller beware
    i = int(np.argmax(~above))
    n_half = np.interp(half, mag[[i, i - 1]], n_c[[i, i - 1]])
    return float(n_half / 3.0)


def fit_power_dependence(datasets, kappa: float) -> FitResult:
    """Global fit of dphi(n_c) = -arctan[2 chi0_j / (kappa sqrt(1+n_c/n_crit))].

    One shared n_crit, one chi0 per dataset.  ``datasets`` is a list of
    dicts with keys n_c, dphi_deg and optional sigma_deg.
    """
    for ds in datasets:
        if len(np.unique(ds["n_c"])) < 2:
            raise UnidentifiableError("single-power dataset cannot constrain n_crit")

    y = np.concatenate([np.asarray(ds["dphi_deg"], dtype=float) for ds in datasets])
    sig = np.concatenate([
        np.full(len(ds["n_c"]), ds.get("sigma_deg", 1.0)) for ds in datasets
    ])

    def model(params, _x):
        out = []
        for j, ds in enumerate(datasets):
            chi = params[f"chi0_{j}"] / np.sqrt(
                1.0 + np.asarray(ds["n_c"], dtype=float) / params["n_crit"]
            )
            out.append(np.degrees(-np.arctan(2.0 * chi / kappa)))
        return np.concatenate(out)

    ref = max(datasets, key=lambda ds: np.max(np.abs(ds["dphi_deg"])))
    init = {"n_crit": init_n_crit_from_half_signal(ref["n_c"], ref["dphi_deg"])}
    bounds = {"n_crit": (1.0, np.inf)}
    for j, ds in enumerate(datasets):
        i0 = int(np.argmin(ds["n_c"]))
        init[f"chi0_{j}"] = -np.tan(np.radians(ds["dphi_deg"][i0])) * kappa / 2.0
    return least_squares_fit(model, (None, y, sig), init, bounds=bounds)


# ---------------------------------------------------------------------------
# MCP Rabi calibration


def rabi_calibration_model(theta, amp, alpha_p, beta_s, beta_p, decay_correction):
    """Supp-window model of the normalized MCP signals vs pulse area.

    Returns (S1_norm, S2_norm, S_r); the decay imbalance multiplies the
    p-state weight.
    """
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2.0) ** 2
    s = np.sin(theta / 2.0) ** 2
    pw = alpha_p * decay_correction * s
    s1 = amp * (c + pw)
    s2 = amp * (beta_s * c + beta_p * pw) / beta_s
    sr = (beta_s * c + beta_p * pw) / (c + pw)
    return s1, s2, sr


def fit_rabi_calibration(theta, s1, s2, sr, mcp: McpModel, sigma=None) -> FitResult:
    """Joint fit of S1, S2 and S_r versus pulse area for the window
    coefficients (alpha_p, beta_s, beta_p) plus a shared amplitude and an
    area-scale calibration.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.max() - theta.min() < 2.0 * np.pi:
        raise UnidentifiableError("data must span at least one Rabi period")
    d = mcp.decay_correction
    y = np.concatenate([s1, s2, sr])
    sig = np.ones_like(y) if sigma is None else np.concatenate([sigma, sigma, sigma])

    def model(params, _x):
        a, b, c = rabi_calibration_model(
            params["area_scale"] * theta,
            params["amp"], params["alpha_p"], params["beta_s"], params["beta_p"], d,
        )
        return np.concatenate([a, b, c])

    init = {
        "amp": float(np.asarray(s1)[0]),
        "area_scale": 1.0,
        "alpha_p": 0.9,
        "beta_s": float(np.clip(np.asarray(sr)[0], 0.05, 0.95)),
        "beta_p": float(np.clip(np.min(sr), 0.05, 0.95)),
    }
    bounds = {
        "alpha_p": (1e-3, 1.0),
        "beta_s": (1e-3, 1.0),
        "beta_p": (1e-3, 1.0),
        "area_scale": (0.5, 2.0),
        "amp": (0.0, np.inf),
    }
    return least_squares_fit(model, (None, y, sig), init, bounds=bounds)


# ---------------------------------------------------------------------------
# spectroscopy


def _decayed_p_fraction(p_prep, interval, tau_s, tau_p):
    s = (1.0 - p_prep) * np.exp(-interval / tau_s)
    p = p_prep * np.exp(-interval / tau_p)
    return p / (s + p)


def spectroscopy_spectrum(
    freqs,
    prep_ratio,
    p_plus,
    p_minus,
    omega_i_plus,
    omega_i_minus,
    f_plus,
    f_minus,
    prep_dt=0.4e-6,
    dt_i=0.3e-6,
    decay_interval=0.0,
    tau_s=57.2e-6,
    tau_p=102.6e-6,
):
    """P_p after the spectroscopy pulse vs its frequency, for a given
    preparation Rabi ratio Omega/Omega_pi.

    Combines the preparation transfer sin^2(dt Omega / 2), decay between
    the pulses, the sublevel fractions inside the cavity, and the per-line
    spectroscopy transfer.
    """
    freqs = np.asarray(freqs, dtype=float)
    omega_prep = prep_ratio * np.pi / prep_dt
    p_prep = np.sin(prep_dt * omega_prep / 2.0) ** 2
    p_frac = _decayed_p_fraction(p_prep, decay_interval, tau_s, tau_p)
    s = 1.0 - p_frac
    pp = p_frac * p_plus
    pm = p_frac * p_minus
    p0 = p_frac * (1.0 - p_plus - p_minus)
    t_plus = spectroscopy_transfer(omega_i_plus, 2.0 * np.pi * (freqs - f_plus), dt_i)
    t_minus = spectroscopy_transfer(omega_i_minus, 2.0 * np.pi * (freqs - f_minus), dt_i)
    return p0 + pp * (1.0 - t_plus) + pm * (1.0 - t_minus) + s * (t_plus + t_minus)


def find_line_centers(freqs, spectrum, n_lines=2):
    """Largest local maxima with parabolic refinement; initializer for the
    spectroscopy fit."""
    freqs = np.asarray(freqs, dtype=float)
    y = np.asarray(spectrum, dtype=float)
    interior = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    if interior.size < n_lines:
        raise UnidentifiableError("not enough spectral peaks found")
    best = interior[np.argsort(y[interior])[::-1][:n_lines]]
    centers = []
    for i in sorted(best):
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2 * y1 + y2
        off = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        centers.append(freqs[i] + off * (freqs[1] - freqs[0]))
    return centers


def fit_spectroscopy(
    freqs,
    spectra,
    prep_ratios,
    prep_dt=0.4e-6,
    dt_i=0.3e-6,
    decay_interval=0.0,
    tau_s=57.2e-6,
    tau_p=102.6e-6,
    sigma=None,
    seeds=8,
) -> FitResult:
    """Joint fit of a ladder of spectra for the sublevel populations.

    ``spectra`` is a list of P_p arrays over ``freqs``, one per
    preparation amplitude in ``prep_ratios`` (Omega/Omega_pi, must include
    a 0 baseline).  The two intracavity Rabi frequencies are independent
    parameters.  Multi-start with up to ``seeds`` perturbed inits.
    """
    prep_ratios = list(prep_ratios)
    if 0.0 not in prep_ratios:
        raise UnidentifiableError("a zero-preparation baseline spectrum is required")
    if len(prep_ratios) < 2:
        raise UnidentifiableError("need at least two preparation amplitudes")
    freqs = np.asarray(freqs, dtype=float)
    y = np.concatenate([np.asarray(sp, dtype=float) for sp in spectra])
    sig = np.ones_like(y) if sigma is None else np.full_like(y, sigma)

    base = spectra[prep_ratios.index(0.0)]
    f_minus0, f_plus0 = sorted(find_line_centers(freqs, base, 2))

    def model(params, _x):
        out = [
            spectroscopy_spectrum(
                freqs, r,
                params["p_plus"], params["p_minus"],
                params["omega_i_plus"], params["omega_i_minus"],
                params["f_plus"], params["f_minus"],
                prep_dt=prep_dt, dt_i=dt_i, decay_interval=decay_interval,
                tau_s=tau_s, tau_p=tau_p,
            )
            for r in prep_ratios
        ]
        return np.concatenate(out)

    span = freqs[-1] - freqs[0]
    init = {
        "p_plus": 0.5,
        "p_minus": 0.25,
        "omega_i_plus": 0.8 * np.pi / dt_i,
        "omega_i_minus": 0.8 * np.pi / dt_i,
        "f_plus": f_plus0,
        "f_minus": f_minus0,
    }
    bounds = {
        "p_plus": (0.0, 1.0),
        "p_minus": (0.0, 1.0),
        "omega_i_plus": (1e-3 * np.pi / dt_i, 4.0 * np.pi / dt_i),
        "omega_i_minus": (1e-3 * np.pi / dt_i, 4.0 * np.pi / dt_i),
        "f_plus": (f_plus0 - 0.2 * span, f_plus0 + 0.2 * span),
        "f_minus": (f_minus0 - 0.2 * span, f_minus0 + 0.2 * span),
    }
    spreads = {"p_plus": 0.3, "p_minus": 0.3, "omega_i_plus": 0.2, "omega_i_minus": 0.2}
    return multi_start_fit(model, (None, y, sig), init, spreads, bounds=bounds, seeds=seeds)


# ---------------------------------------------------------------------------
# superposition-state prediction


def predict_superposition_phase(
    prep_rabi_ratio,
    ensemble: EnsembleState,
    cavity: CavitySpec,
    transitions: TransitionSet,
    kappa: float,
    p_plus: float = 1.0,
    p_minus: float = 0.0,
    delta_m: float = 0.0,
    t_eval_offset: float = None,
    **model_kw,
):
    """Phase change at t_max for an ensemble prepared with Rabi ratio
    Omega/Omega_pi.

    The transferred p population is distributed over the sublevels with
    fractions (p_plus, p_minus, remainder to m_l = 0): a pure p,+1 map is
    (1, 0).  Sinusoidal in the Rabi ratio.
    """
    p_prep = np.sin(np.pi * prep_rabi_ratio / 2.0) ** 2
    ens = replace(
        ensemble,
        p_s=1.0 - p_prep,
        p_p_plus=p_prep * p_plus,
        p_p_minus=p_prep * p_minus,
        p_p_zero=p_prep * (1.0 - p_plus - p_minus),
    )
    trace, dphi = simulate_flythrough(ens, cavity, transitions, delta_m, kappa, **model_kw)
    transit = cavity.length_z / ens.velocity
    if t_eval_offset is None:
        t_eval_offset = 2.0 / kappa
    t_eval = ens.entry_time + transit / 2.0 + t_eval_offset
    return float(np.interp(t_eval, trace.times, dphi))
