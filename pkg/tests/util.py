import numpy as np

import abkernel
from abkernel import spectrum


def reference_config(alpha=0.5, b0=1.0):
    return spectrum.FieldConfig(alpha, b0)


def random_state(cfg, modes, seed=1):
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=modes.shape) + 1j * rng.normal(size=modes.shape)
    return spectrum.StateCoeffs(cfg, modes, coeffs)


def single_mode(cfg, k=0, m=0, modes=None):
    modes = spectrum.ModeSet(-2, 2, 2) if modes is None else modes
    return abkernel.StateCoeffs.single(cfg, modes, spectrum.ModeIndex(k, m))


def eigenfunction_grid(cfg, k, m, r, theta, normalized=True):
    """
    Returns V_{k,m} on the broadcast (r, theta) grid, built from the
    polynomial definition rather than the normalized profiles.
    """
    a = cfg.alpha_k(k)
    poly = np.vectorize(abkernel.pkm_poly)
    r = np.asarray(r, dtype=float)
    values = r**a * np.exp(-cfg.b0 * r**2 / 4) * poly(a, m, cfg.b0 * r**2 / 2)
    if normalized:
        values = values / np.sqrt(spectrum.mode_norm_sq(cfg, spectrum.ModeIndex(k, m)))
    return values * np.exp(1j * k * np.asarray(theta))
