"""Static cavity-atom physics: coupling profile, dispersive shift and
its power dependence, critical photon number and measurement backaction.
"""

from __future__ import annotations

import numpy as np

from .params import CavitySpec, EnsembleState, DispersiveValidityError


class SingularityError(ZeroDivisionError):
    pass


def mode_amplitude(z, cavity: CavitySpec):
    """Normalized field amplitude |sin(p pi z / L)| along the beam axis.

    Vanishes at both walls, reaches 1 at the antinodes.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z > cavity.length_z):
        raise ValueError("z outside cavity [0, length_z]")
    out = np.abs(np.sin(cavity.mode_antinodes * np.pi * z / cavity.length_z))
    return out if out.ndim else float(out)


def coupling(z, cavity: CavitySpec):
    """Single-atom coupling g(z) = g_max * |mode| * sqrt(mode_correction), rad/s."""
    g = cavity.g_max * mode_amplitude(z, cavity) * np.sqrt(cavity.mode_correction)
    return g


def dispersive_shift(ensemble: EnsembleState, g, delta_plus, delta_minus):
    """Two-transition dispersive shift of the cavity frequency, rad/s.

    chi = g^2 N [(P_p+1 - P_s)/Delta_+1 + (P_p-1 - P_s)/Delta_-1]

    The m_l = 0 sublevel is uncoupled and contributes nothing.  Detunings
    smaller than 10 g sqrt(N) are rejected: the formula is a second-order
    expansion in g sqrt(N)/Delta.
    """
    g = np.asarray(g, dtype=float)
    dp = np.asarray(delta_plus, dtype=float)
    dm = np.asarray(delta_minus, dtype=float)
    if np.any(dp == 0) or np.any(dm == 0):
        raise SingularityError("zero detuning in dispersive_shift")
    lim = 10.0 * np.max(g) * np.sqrt(max(ensemble.n_atoms, 1.0))
    if np.any(np.abs(dp) <= lim) or np.any(np.abs(dm) <= lim):
        raise DispersiveValidityError(
            "detunings violate |Delta| > 10 g sqrt(N); dispersive expansion invalid"
        )
    chi = g ** 2 * ensemble.n_atoms * (
        (ensemble.p_p_plus - ensemble.p_s) / dp
        + (ensemble.p_p_minus - ensemble.p_s) / dm
    )
    return chi if np.ndim(chi) else float(chi)


def power_dependent_shift(chi0, n_c, n_crit):
    """Dispersive shift reduced by the probe power: chi0 / sqrt(1 + n_c/n_crit)."""
    if np.any(np.asarray(n_c) < 0):
        raise ValueError("n_c must be >= 0")
    if n_crit <= 0:
        raise ValueError("n_crit must be positive")
    return chi0 / np.sqrt(1.0 + np.asarray(n_c, dtype=float) / n_crit)


def critical_photon_number(g, delta):
    """n_crit = Delta^2 / (4 g^2), threshold of the dispersive approximation."""
    if np.any(np.asarray(g) == 0):
        raise SingularityError("g = 0 in critical_photon_number")
    return np.asarray(delta, dtype=float) ** 2 / (4.0 * np.asarray(g, dtype=float) ** 2)


def excited_fraction(n_c, n_crit):
    """Residual atomic excitation of the cavity-dressed eigenstate.

    P_e = sin^2(arctan(sqrt((n_c + 1)/n_crit))); strictly increasing in n_c.
    """
    if n_crit <= 0:
        raise ValueError("n_crit must be positive")
    x = (np.asarray(n_c, dtype=float) + 1.0) / n_crit
    # sin^2(arctan(sqrt(x))) = x / (1 + x)
    return x / (1.0 + x)
