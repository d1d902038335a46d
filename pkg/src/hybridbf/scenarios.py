"""Random scenarios that are feasible by construction.

A random reference beamformer is scaled to half the power budget; the
SINR and lower beampattern thresholds are set to a fraction of what it
achieves, so it is a strictly feasible point of the resulting problem.
"""
from __future__ import annotations

import numpy as np

from .em_model import ArrayGeometry, Scenario, build_synthetic_admittances, default_directions
from .errors import DegenerateModelError
from .metrics import direction_gains, effective_channels, radiated_power, sinrs

__all__ = ["synthetic_scenario", "random_beamformer"]


def random_beamformer(rng, N, K):
    return (rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))) / np.sqrt(2.0)


def synthetic_scenario(
    L=16,
    N=2,
    M=2,
    D=2,
    seed=0,
    coupling_scale=0.3,
    r0=0.0,
    p_max=1.0,
    snr=100.0,
    gamma_frac=0.5,
    beta_lo_frac=0.5,
    beta_max_factor=20.0,
    directions=None,
):
    """Build a feasible scenario on a half-wavelength planar array.

    Parameters
    ----------
    snr : float
        Noise power is ``mean_m |h_m b_m|^2 / snr`` at the reference point.
    gamma_frac, beta_lo_frac : float
        Thresholds as fractions of the reference SINR / gains.
    beta_max_factor : float
        ``beta_max`` as a multiple of the largest reference gain; ``inf``
        disables the upper beampattern constraint.
    """
    geometry = ArrayGeometry.upa(L, N, M)
    seq = np.random.SeedSequence(seed)
    adm_seed, ref_seed = seq.spawn(2)
    for attempt in range(16):
        try:
            adm = build_synthetic_admittances(geometry, np.random.default_rng(adm_seed).integers(2**63) + attempt,
                                              coupling_scale, r0=r0)
            break
        except DegenerateModelError:
            continue
    else:
        raise DegenerateModelError("Y_s + Y_ss", "no well-conditioned model in 16 attempts")
    dirs = default_directions(D) if directions is None else np.asarray(directions, float)
    D = dirs.shape[0]
    base = Scenario(geometry, adm, dirs, np.zeros(D), np.inf, np.ones(M), 1.0, p_max, r0)

    rng = np.random.default_rng(ref_seed)
    B0 = random_beamformer(rng, N, M + N)
    B0 *= np.sqrt(0.5 * p_max / radiated_power(base, B0))
    ch = effective_channels(base)
    signal = np.abs(np.einsum("mn,nm->m", ch.h, B0[:, :M])) ** 2
    noise = float(np.mean(signal)) / snr
    base = base.replace(noise_power=noise)
    gam = sinrs(base, ch, B0)
    gains = direction_gains(base, B0)
    beta_max = float(beta_max_factor * gains.max()) if np.isfinite(beta_max_factor) else np.inf
    return base.replace(
        gamma_min=gamma_frac * gam,
        beta_lo=beta_lo_frac * gains,
        beta_max=beta_max,
    )
