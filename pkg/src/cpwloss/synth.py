"""Synthetic measurement generators with known ground truth.

Each generator returns (data object(s), truth dict). The truth dict
holds exactly the parameters that produced the data, so round-trip
tests can compare fits against it. Every stochastic generator takes
an integer seed; the same seed reproduces the same samples bit for
bit.
"""

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from . import dataio
from .circlefit import default_frequencies, notch_model, synthesize_notch
from .errors import DataError
from .tlsloss import chip_power_watt, eval_tls_model
from scipy.constants import hbar


def loaded_q(delta_i, qc_mag, phi):
    """Loaded Q from internal loss and the coupling term."""
    inv_ql = delta_i + np.cos(phi) / qc_mag
    if inv_ql <= 0:
        raise DataError("negative loaded Q from the given loss and coupling")
    return float(1.0 / inv_ql)


def solve_photon_number(p_chip_w, fr, qc_mag, phi,
                        delta_tls, n_c, beta, delta_hp):
    """Self-consistent mean photon number at fixed chip power.

    <n> depends on Ql, Ql depends on the TLS loss, and the loss
    depends on <n>; the fixed point n = coef * Ql(delta(n))^2 is
    bracketed by n=0 and the fully saturated limit and found with a
    root solve.
    """
    if p_chip_w <= 0:
        raise DataError("chip power must be positive")
    omega = 2.0 * np.pi * fr
    coef = (2.0 / (hbar * omega ** 2)) * p_chip_w / qc_mag

    def g(n):
        delta = eval_tls_model(n, delta_tls, n_c, beta, delta_hp)
        return n - coef * loaded_q(delta, qc_mag, phi) ** 2

    n_hi = coef * loaded_q(delta_hp, qc_mag, phi) ** 2 + 1.0
    return float(brentq(g, 0.0, n_hi, xtol=1e-18, rtol=8.9e-16, maxiter=200))


def synthesize_power_series(fr=5.2e9, qc_mag=2.0e5, phi=0.02,
                            delta_tls=4.0e-6, n_c=10.0, beta=0.35,
                            delta_hp=4.0e-7,
                            powers_dbm=None, attenuation_db=60.0,
                            a=1.0, alpha=0.0, tau=30e-9,
                            noise_sigma=0.0, seed=1234,
                            resonator_id="R0", chip_id="SYN",
                            npoints=1001):
    """One resonator swept at several powers, following the TLS model.

    At each applied power the photon number and loaded Q are solved
    self-consistently before the sweep is synthesized, so the files
    describe a resonator whose Qi really follows the saturation
    curve. Returns (sweeps, truth).
    """
    if powers_dbm is None:
        powers_dbm = np.arange(-95.0, -95.0 + 5.0 * 12, 5.0)
    powers_dbm = [float(p) for p in powers_dbm]
    sweeps = []
    truth_points = []
    for k, p_dbm in enumerate(powers_dbm):
        p_chip = chip_power_watt(p_dbm, attenuation_db)
        n = solve_photon_number(p_chip, fr, qc_mag, phi,
                                delta_tls, n_c, beta, delta_hp)
        delta = float(eval_tls_model(n, delta_tls, n_c, beta, delta_hp))
        ql = loaded_q(delta, qc_mag, phi)
        freqs = default_frequencies(fr, ql, npoints=npoints)
        sweep = synthesize_notch(
            fr, ql, qc_mag, phi, a=a, alpha=alpha, tau=tau,
            frequencies=freqs, noise_sigma=noise_sigma,
            seed=None if noise_sigma == 0 else seed + k,
            power_dbm=p_dbm, attenuation_db=attenuation_db,
            resonator_id=resonator_id, chip_id=chip_id,
        )
        sweeps.append(sweep)
        truth_points.append({"power_dbm": p_dbm, "n_photon": n,
                             "delta": delta, "Ql": ql, "Qi": 1.0 / delta})
    truth = {
        "kind": "power_series",
        "fr": fr, "Qc_mag": qc_mag, "phi": phi,
        "delta_tls": delta_tls, "n_c": n_c, "beta": beta,
        "delta_hp": delta_hp, "delta_lp": delta_tls + delta_hp,
        "attenuation_db": attenuation_db,
        "a": a, "alpha": alpha, "tau": tau,
        "noise_sigma": noise_sigma, "seed": seed,
        "resonator_id": resonator_id,
        "points": truth_points,
    }
    return sweeps, truth


def default_feedline_resonators(n_res=9, f_start=4.0e9, spacing=200e6):
    """A comb of notch resonators with varied Q and coupling."""
    resonators = []
    for k in range(n_res):
        resonators.append({
            "fr": f_start + k * spacing,
            "Ql": 2.0e4 * (1.0 + 0.08 * k),
            "Qc_mag": 2.0e4 * (1.0 + 0.08 * k) / (0.5 + 0.03 * k),
            "phi": 0.05 * ((k % 3) - 1),
            "resonator_id": f"R{k}",
        })
    return resonators


def synthesize_feedline(resonators=None, f_lo=None, f_hi=None,
                        npoints=72001, a=1.0, alpha=0.3, tau=40e-9,
                        noise_sigma=0.0, seed=4321, chip_id="SYN"):
    """Wideband transmission past several notch resonators.

    The trace is the product of the individual notch dips under one
    shared amplitude, phase offset, and cable delay. Returns
    (sweep, truth).
    """
    if resonators is None:
        resonators = default_feedline_resonators()
    if not resonators:
        raise DataError("feedline needs at least one resonator")
    frs = np.array([r["fr"] for r in resonators])
    margin = 0.1 * (frs.max() - frs.min() + 200e6)
    if f_lo is None:
        f_lo = frs.min() - margin
    if f_hi is None:
        f_hi = frs.max() + margin
    f = np.linspace(f_lo, f_hi, npoints)
    z = np.ones_like(f, dtype=complex)
    for r in resonators:
        dip = notch_model(f, r["fr"], r["Ql"], r["Qc_mag"], r["phi"],
                          a=1.0, alpha=0.0, tau=0.0)
        z = z * dip
    z = z * a * np.exp(1j * (alpha - 2.0 * np.pi * f * tau))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        z = z + noise_sigma * (rng.standard_normal(f.size)
                               + 1j * rng.standard_normal(f.size))
    sweep = dataio.ComplexSweep(
        frequency_hz=f, s21=z, chip_id=chip_id,
        header={"kind": "feedline"},
    )
    truth = {
        "kind": "feedline",
        "resonators": [dict(r) for r in resonators],
        "a": a, "alpha": alpha, "tau": tau,
        "noise_sigma": noise_sigma, "seed": seed,
    }
    return sweep, truth


def synthesize_rt(tc=4.7, width=0.2, r_normal=25.0, rrr=4.0,
                  t_min=2.0, noise_sigma=0.0, seed=77):
    """Resistance vs temperature with a logistic superconducting step.

    The normal-state branch rises as a cubic from r_normal at the
    transition to rrr*r_normal at 300 K, and the step is a logistic
    whose 10-90 width equals the requested width. Returns
    (sweep, truth).
    """
    if not 0 < t_min < tc < 300.0:
        raise DataError("need 0 < t_min < tc < 300 K")
    if width <= 0 or r_normal <= 0 or rrr <= 0:
        raise DataError("width, r_normal, and rrr must be positive")
    t = np.unique(np.concatenate([
        np.linspace(t_min, tc + 3.0, 561),
        np.linspace(tc + 3.0, 300.0, 240),
    ]))
    w_s = width / (2.0 * np.log(9.0))
    r_norm_branch = r_normal * (1.0 + (rrr - 1.0)
                                * (np.clip(t - tc, 0.0, None) / (300.0 - tc)) ** 3)
    r = r_norm_branch * expit((t - tc) / w_s)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        r = r + noise_sigma * r_normal * rng.standard_normal(t.size)
        r = np.clip(r, 0.0, None)
    sweep = dataio.RtSweep(temperature_k=t, resistance_ohm=r,
                           header={"kind": "rt"})
    truth = {"kind": "rt", "tc": tc, "width": width, "r_normal": r_normal,
             "rrr": rrr, "r_300k": r_normal * rrr,
             "noise_sigma": noise_sigma, "seed": seed}
    return sweep, truth


def synthesize_xrd(peaks=None, baseline=(50.0, 0.0),
                   two_theta_lo=30.0, two_theta_hi=50.0, step=0.01,
                   noise_sigma=0.0, seed=99):
    """Diffraction counts with pseudo-Voigt peaks on a linear baseline.

    peaks is a sequence of (center_deg, fwhm_deg, amplitude, eta).
    Returns (scan, truth).
    """
    if peaks is None:
        peaks = [(36.9, 0.4, 500.0, 0.3)]
    x = np.arange(two_theta_lo, two_theta_hi + 0.5 * step, step)
    counts = baseline[0] + baseline[1] * x
    for center, fwhm, amplitude, eta in peaks:
        if fwhm <= 0 or amplitude < 0 or not 0.0 <= eta <= 1.0:
            raise DataError(f"bad peak parameters "
                            f"({center}, {fwhm}, {amplitude}, {eta})")
        u = x - center
        gauss = np.exp(-4.0 * np.log(2.0) * u ** 2 / fwhm ** 2)
        lorentz = 1.0 / (1.0 + 4.0 * u ** 2 / fwhm ** 2)
        counts = counts + amplitude * (eta * lorentz + (1.0 - eta) * gauss)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        counts = counts + noise_sigma * rng.standard_normal(x.size)
    counts = np.clip(counts, 0.0, None)
    scan = dataio.XrdScan(two_theta_deg=x, counts=counts,
                          header={"kind": "xrd"})
    truth = {
        "kind": "xrd",
        "peaks": [{"center": c, "fwhm": w, "amplitude": A, "eta": e}
                  for c, w, A, e in peaks],
        "baseline_intercept": baseline[0], "baseline_slope": baseline[1],
        "noise_sigma": noise_sigma, "seed": seed,
    }
    return scan, truth
