"""Notch-type resonator model and the S21 circle-fit pipeline.

The model for a quarter-wave resonator side-coupled to a feedline is

    S21(f) = a*e^{i*alpha}*e^{-2i*pi*f*tau}
             * [1 - (Ql/|Qc|)*e^{i*phi} / (1 + 2i*Ql*(f/fr - 1))]

with environment amplitude a, phase alpha and cable delay tau, loaded
quality factor Ql, coupling magnitude |Qc| and impedance-mismatch angle
phi. fit_resonance() extracts all seven parameters by the classic
staged procedure: delay removal, algebraic circle fit, phase-vs-
frequency fit, off-resonant-point calibration, then one simultaneous
Levenberg-Marquardt refinement whose Jacobian provides the errors.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .dataio import ComplexSweep
from .errors import DataError, FitError

TWO_PI = 2.0 * np.pi


def notch_model(f, fr, Ql, Qc_mag, phi, a=1.0, alpha=0.0, tau=0.0):
    """Complex S21 of a notch resonator in its environment."""
    f = np.asarray(f, dtype=float)
    env = a * np.exp(1j * alpha) * np.exp(-1j * TWO_PI * f * tau)
    dip = (Ql / Qc_mag) * np.exp(1j * phi) / (1.0 + 2j * Ql * (f / fr - 1.0))
    return env * (1.0 - dip)


def default_frequencies(fr, Ql, span_linewidths=10.0, npoints=1001):
    """Symmetric frequency grid around fr covering span_linewidths*fr/Ql."""
    half = 0.5 * span_linewidths * fr / Ql
    return np.linspace(fr - half, fr + half, npoints)


def synthesize_notch(fr, Ql, Qc_mag, phi=0.0, a=1.0, alpha=0.0, tau=0.0,
                     frequencies=None, noise_sigma=0.0, seed=None,
                     **sweep_fields):
    """Generate a ComplexSweep from known model parameters.

    Additive complex Gaussian noise of std noise_sigma per quadrature is
    drawn from a generator seeded with `seed`, so sweeps are exactly
    reproducible. Extra keyword fields (power_dbm, resonator_id, ...)
    are passed through to the ComplexSweep.
    """
    for name, value in (("fr", fr), ("Ql", Ql), ("Qc_mag", Qc_mag), ("a", a)):
        if not value > 0:
            raise DataError(f"{name} must be positive, got {value!r}")
    if noise_sigma < 0:
        raise DataError("noise_sigma must be >= 0")
    if frequencies is None:
        frequencies = default_frequencies(fr, Ql)
    frequencies = np.asarray(frequencies, dtype=float)
    if frequencies.size == 0:
        raise DataError("empty frequency grid")
    z = notch_model(frequencies, fr, Ql, Qc_mag, phi, a, alpha, tau)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        z = z + noise_sigma * (rng.standard_normal(z.size)
                               + 1j * rng.standard_normal(z.size))
    return ComplexSweep(frequency_hz=frequencies, s21=z, **sweep_fields)


def fit_circle(points):
    """Algebraic least-squares circle through complex points (Taubin method).

    Returns (center, radius). The Taubin constraint normalizes the
    algebraic residual by its gradient, which keeps the fit nearly
    unbiased on partial arcs. Raises FitError on collinear or
    coincident points.
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 3:
        raise DataError(f"circle fit needs >= 3 points, got {z.size}")
    x = z.real
    y = z.imag
    xm = x.mean()
    ym = y.mean()
    u = x - xm
    v = y - ym
    q = u * u + v * v
    qm = q.mean()
    if qm <= 0.0:
        raise FitError("degenerate points: all coincident")
    scale = 2.0 * np.sqrt(qm)
    design = np.column_stack([(q - qm) / scale, u, v])
    _, svals, vt = np.linalg.svd(design, full_matrices=False)
    a0, b0, c0 = vt[int(np.argmin(svals))]
    if abs(a0) < 1e-12:
        raise FitError("collinear or degenerate points: no finite circle fits")
    a1 = a0 / scale
    d1 = -qm * a1
    cx = -b0 / (2.0 * a1) + xm
    cy = -c0 / (2.0 * a1) + ym
    radius = np.sqrt(b0 * b0 + c0 * c0 - 4.0 * a1 * d1) / (2.0 * abs(a1))
    return complex(cx, cy), float(radius)


def _phase_increments(z):
    return np.angle(z[1:] * np.conj(z[:-1]))


def _wing_slices(n, fraction=0.2):
    k = max(2, int(round(n * fraction)))
    return slice(0, k), slice(n - k, n)


def estimate_delay(sweep):
    """Cable delay in seconds.

    First guess: linear fits to the unwrapped phase of the outer 20% of
    points on each side of the trace (averaged), which see mostly the
    e^{-2i*pi*f*tau} winding. Refined by minimizing the radial scatter
    of the delay-corrected trace about its fitted circle, which is zero
    at the true delay for ideal data.
    """
    f = sweep.frequency_hz
    z = sweep.s21
    n = f.size
    left, right = _wing_slices(n)

    slopes = []
    for sl in (left, right):
        inc = _phase_increments(z[sl])
        if np.any(np.abs(inc) >= 0.99 * np.pi):
            raise FitError("phase unwrap failure: adjacent off-resonant points "
                           "step by ~pi; the sweep undersamples the delay winding")
        phase = np.concatenate([[0.0], np.cumsum(inc)])
        slopes.append(np.polyfit(f[sl], phase, 1)[0])
    tau0 = -0.5 * (slopes[0] + slopes[1]) / TWO_PI

    # refine: the delay-corrected trace of an ideal notch lies exactly on
    # a circle, so radial deviation is a sharp objective in tau. Work in
    # units of 1/span so the optimizer sees O(1) curvature.
    span = f[-1] - f[0]

    def radial_misfit(p):
        zc = z * np.exp(1j * TWO_PI * f * (p[0] / span))
        try:
            center, radius = fit_circle(zc)
        except FitError:
            return np.full(n, 1e3)
        return np.abs(zc - center) - radius

    res = least_squares(radial_misfit, x0=[tau0 * span],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    if res.status <= 0:
        raise FitError(f"delay refinement did not converge: {res.message}")
    return float(res.x[0] / span)


def _smooth5(values):
    kernel = np.ones(5) / 5.0
    return np.convolve(values, kernel, mode="same")


def _initial_guesses(f, zc):
    """(fr, Ql, off-resonant point) guesses from a delay-corrected trace."""
    n = f.size
    # locate the deepest dip first (ties in multi-dip windows break to the
    # deepest), then place fr at the sharpest S21 motion near it
    i_dip = int(np.argmin(_smooth5(np.abs(zc))))
    lo = max(0, i_dip - n // 8)
    hi = min(n - 1, i_dip + n // 8)
    df = np.diff(f)
    speed = _smooth5(np.abs(np.diff(zc)) / df)
    f_mid = 0.5 * (f[1:] + f[:-1])
    fr0 = float(f_mid[lo:hi][np.argmax(speed[lo:hi])])

    left, right = _wing_slices(f.size)
    p_off = 0.5 * (zc[left].mean() + zc[right].mean())

    # FWHM of the magnitude dip, relative to the off-resonant level
    mag = np.abs(zc)
    depth = abs(p_off) - mag.min()
    ql0 = None
    if depth > 0:
        half_level = abs(p_off) - 0.5 * depth
        below = mag < half_level
        if np.any(below):
            idx = np.nonzero(below)[0]
            width = f[idx[-1]] - f[idx[0]]
            if width > 0:
                ql0 = fr0 / width
    if ql0 is None:
        ql0 = 10.0 * fr0 / (f[-1] - f[0])
    return fr0, ql0, p_off


def _phase_model(f, theta0, Ql, fr):
    return theta0 + 2.0 * np.arctan(2.0 * Ql * (1.0 - f / fr))


def _fit_phase(f, w, fr0, ql0):
    """Fit theta(f) = theta0 + 2*arctan(2*Ql*(1 - f/fr)) to centered data."""
    inc = _phase_increments(w)
    theta = np.angle(w[0]) + np.concatenate([[0.0], np.cumsum(inc)])
    theta0_0 = 0.5 * (theta[0] + theta[-1])
    scales = np.array([1.0, ql0, fr0])

    def stage(free, p_init):
        p_init = np.asarray(p_init, dtype=float)

        def resid(q):
            p = p_init.copy()
            p[free] = q * scales[free]
            return _phase_model(f, p[0], p[1], p[2]) - theta

        sol = least_squares(resid, p_init[free] / scales[free],
                            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=800)
        out = p_init.copy()
        out[free] = sol.x * scales[free]
        return out

    p = np.array([theta0_0, ql0, fr0])
    p = stage([0, 2], p)          # center frequency and offset first
    p = stage([0, 1], p)          # then the width
    p = stage([0, 1, 2], p)       # then everything together
    theta0, ql, fr = p
    if ql <= 0 or not f[0] <= fr <= f[-1]:
        raise FitError("phase fit failed: resonance outside the sweep or Ql <= 0")
    return theta0, ql, fr


def _wrap_angle(angle):
    return (angle + np.pi) % TWO_PI - np.pi


def _noise_floor(z):
    # adjacent-point differences are insensitive to the resonance shape;
    # |diff| of white complex noise is Rayleigh with median 1.665*sigma
    med = np.median(np.abs(np.diff(z)))
    return float(med) / 1.665


@dataclass(frozen=True)
class ResonanceFit:
    """Extracted notch-model parameters with per-parameter errors.

    sigma maps parameter name -> standard error from the Jacobian at
    the optimum (Qi's error includes the Ql/Qc/phi covariances).
    rms_residual is per quadrature, comparable to the noise std.
    """

    fr: float
    Ql: float
    Qc_mag: float
    phi: float
    Qi: float
    a: float
    alpha: float
    tau: float
    rms_residual: float
    sigma: dict
    n_points: int = 0

    def as_dict(self):
        return {
            "fr": self.fr,
            "Ql": self.Ql,
            "Qc_mag": self.Qc_mag,
            "phi": self.phi,
            "Qi": self.Qi,
            "a": self.a,
            "alpha": self.alpha,
            "tau": self.tau,
            "rms_residual": self.rms_residual,
            "sigma": dict(self.sigma),
            "n_points": self.n_points,
        }


def fit_resonance(sweep):
    """Fit the notch model to one sweep.

    Pipeline: estimate_delay -> circle fit of the delay-corrected trace
    -> arctan phase fit -> off-resonant-point calibration giving
    (a, alpha, phi, |Qc|) -> simultaneous least-squares refinement of
    all seven parameters. Raises FitError when no dip stands above the
    noise floor or the refinement does not converge.
    """
    f = sweep.frequency_hz
    z = sweep.s21

    tau0 = estimate_delay(sweep)
    zc = z * np.exp(1j * TWO_PI * f * tau0)

    noise = _noise_floor(z)
    try:
        center, radius = fit_circle(zc)
    except FitError as exc:
        raise FitError(f"no dip found: {exc}") from None
    if 2.0 * radius < 5.0 * noise:
        raise FitError(f"no dip found: circle diameter {2 * radius:.3g} is "
                       f"below the noise floor ({noise:.3g} per quadrature)")

    fr0, ql0, p_off = _initial_guesses(f, zc)
    theta0, ql_g, fr_g = _fit_phase(f, zc - center, fr0, ql0)

    beta = _wrap_angle(theta0 - np.pi)
    p_offres = center + radius * np.exp(1j * beta)
    a_g = abs(p_offres)
    alpha_g = np.angle(p_offres)
    if a_g <= 0:
        raise FitError("background calibration failed: off-resonant point at origin")
    phi_g = _wrap_angle(beta - alpha_g)
    qc_g = ql_g / (2.0 * radius / a_g)

    p0 = np.array([fr_g, ql_g, qc_g, phi_g, a_g, alpha_g, tau0])
    refined, cov, rms = _refine(f, z, p0)
    fr_f, ql_f, qc_f, phi_f, a_f, alpha_f, tau_f = refined

    inv_qi = 1.0 / ql_f - np.cos(phi_f) / qc_f
    if ql_f <= 0 or qc_f <= 0 or inv_qi <= 0:
        raise FitError(f"unphysical fit: Ql={ql_f:.4g}, Qc_mag={qc_f:.4g}, "
                       f"1/Qi={inv_qi:.4g}")
    if not f[0] <= fr_f <= f[-1]:
        raise FitError(f"fitted resonance {fr_f:.6g} Hz lies outside the sweep")
    if abs(phi_f) >= np.pi / 2:
        raise FitError(f"fitted impedance-mismatch angle phi={phi_f:.3f} rad "
                       f"is outside (-pi/2, pi/2); not a notch-type response")
    qi = 1.0 / inv_qi

    span_lw = (f[-1] - f[0]) * ql_f / fr_f
    if span_lw < 3.0:
        warnings.warn(f"sweep spans only {span_lw:.2f} linewidths around the dip; "
                      f"background calibration may be biased", stacklevel=2)

    names = ("fr", "Ql", "Qc_mag", "phi", "a", "alpha", "tau")
    sigma = {n: float(np.sqrt(cov[i, i])) for i, n in enumerate(names)}
    # propagate Qi error including Ql/Qc/phi covariances
    g = np.zeros(7)
    g[1] = qi ** 2 / ql_f ** 2
    g[2] = -qi ** 2 * np.cos(phi_f) / qc_f ** 2
    g[3] = -qi ** 2 * np.sin(phi_f) / qc_f
    sigma["Qi"] = float(np.sqrt(max(g @ cov @ g, 0.0)))

    return ResonanceFit(
        fr=float(fr_f), Ql=float(ql_f), Qc_mag=float(qc_f),
        phi=float(phi_f), Qi=float(qi), a=float(a_f),
        alpha=float(alpha_f), tau=float(tau_f),
        rms_residual=rms, sigma=sigma, n_points=int(f.size),
    )


def _refine(f, z, p0):
    """Simultaneous Levenberg-Marquardt refinement of all 7 parameters."""
    span = f[-1] - f[0]
    scales = np.array([abs(p0[0]), abs(p0[1]), abs(p0[2]), 1.0,
                       abs(p0[4]), 1.0, 1.0 / span])

    def residuals(q):
        p = q * scales
        model = notch_model(f, p[0], p[1], p[2], p[3], p[4], p[5], p[6])
        diff = model - z
        return np.concatenate([diff.real, diff.imag])

    res = least_squares(residuals, p0 / scales, method="lm",
                        xtol=1e-10, ftol=1e-14, gtol=1e-14,
                        max_nfev=200 * 8)
    if res.status <= 0:
        raise FitError(f"refinement did not converge within 200 iterations: "
                       f"{res.message}")
    p = res.x * scales

    # canonical parameter ranges: a > 0 (sign absorbed into alpha), angles wrapped
    if p[4] < 0:
        p[4] = -p[4]
        p[5] = p[5] + np.pi
    p[3] = _wrap_angle(p[3])
    p[5] = _wrap_angle(p[5])

    m = res.fun.size
    dof = m - 7
    s2 = 2.0 * res.cost / dof if dof > 0 else 0.0
    jtj = res.jac.T @ res.jac
    try:
        cov_q = np.linalg.inv(jtj) * s2
    except np.linalg.LinAlgError:
        cov_q = np.linalg.pinv(jtj) * s2
    cov = cov_q * np.outer(scales, scales)
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    return p, cov, rms
