"""Special functions and Mellin-Barnes contour quadrature.

Everything here works on the parameter patterns that occur in the HARQ-IR
outage analysis: the per-round Mellin factor ``E[(1 + X)^t]`` written as a
Fox H-function, the Meijer G-function that carries the asymptotic coding
gain, and the Abate-Whitt inverse Laplace transform used to turn a product
of Mellin factors into an outage probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, ContourPlacementError, ConvergenceError, PoleError

__all__ = [
    "ContourConfig",
    "AbateWhittConfig",
    "ln_gamma_complex",
    "upper_incomplete_gamma",
    "vertical_line_integral",
    "fox_h_kernel",
    "mellin_factor",
    "meijer_g_asymptotic",
    "abate_whitt_invert",
]

# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS_C = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class ContourConfig:
    """Numerical settings for vertical-line Mellin-Barnes integrals.

    ``truncation_height`` is the initial half-length of the integration
    window on the imaginary axis; it is doubled automatically while the
    integrand at the window edge is still significant.  ``abscissa_offset``
    is the margin kept between the contour and the nearest pole when an
    abscissa is chosen on the left of a strip.
    """

    truncation_height: float = 60.0
    rel_tol: float = 1e-12
    abs_tol: float = 1e-30
    max_nodes: int = 1 << 16
    abscissa_offset: float = 0.25

    def __post_init__(self):
        if not self.truncation_height > 0:
            raise ConfigError("truncation_height must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("rel_tol and abs_tol must be positive")
        if self.max_nodes < 64:
            raise ConfigError("max_nodes must be at least 64")
        if not self.abscissa_offset > 0:
            raise ConfigError("abscissa_offset must be positive")


@dataclass(frozen=True)
class AbateWhittConfig:
    """Abate-Whitt EULER parameters.

    ``A`` controls the discretisation error, which is bounded by
    ``exp(-A) / (1 - exp(-A))``; ``M`` Euler terms are averaged over the
    partial sums of order ``Q .. Q + M``.  ``tol`` is the largest accepted
    change between the Euler averages of order ``M - 1`` and ``M``.
    """

    A: float = 18.0
    M: int = 11
    Q: int = 15
    tol: float = 1e-6

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigError("A must be positive")
        if self.M < 1 or self.Q < 0:
            raise ConfigError("M must be >= 1 and Q >= 0")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")

    @property
    def discretization_bound(self) -> float:
        e = math.exp(-self.A)
        return e / (1.0 - e)


def _lanczos_log(z):
    # valid for Re z >= 0.5
    zm = z - 1.0
    x = np.full(zm.shape, _LANCZOS_C[0], dtype=complex)
    for i in range(1, len(_LANCZOS_C)):
        x = x + _LANCZOS_C[i] / (zm + i)
    t = zm + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (zm + 0.5) * np.log(t) - t + np.log(x)


def ln_gamma_complex(z):
    """Principal branch of ``log Gamma(z)`` for complex ``z``.

    Uses the Lanczos approximation on ``Re z >= 0.5`` and the upward
    recurrence ``log Gamma(z) = log Gamma(z + n) - sum log(z + k)`` on the
    left half-plane, which keeps the principal branch (unlike the
    reflection formula, whose ``log sin`` term jumps between sheets).

    Raises
    ------
    PoleError
        If any element is a non-positive integer.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    pole = (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))
    if np.any(pole):
        raise PoleError(f"Gamma has a pole at {z[pole][0].real:g}")

    out = np.empty(z.shape, dtype=complex)
    right = z.real >= 0.5
    if np.any(right):
        out[right] = _lanczos_log(z[right])
    if not np.all(right):
        zl = z[~right]
        n = np.ceil(0.5 - zl.real).astype(int)
        acc = np.zeros(zl.shape, dtype=complex)
        for k in range(int(n.max())):
            m = n > k
            acc[m] += np.log(zl[m] + k)
        out[~right] = _lanczos_log(zl + n) - acc
    return out[0] if scalar else out


def upper_incomplete_gamma(a: float, x):
    """Non-regularised upper incomplete gamma ``Gamma(a, x)``.

    ``a`` may be zero or negative; those values are reached from
    ``Gamma(a + n, x)`` with ``0 < a + n <= 1`` (or from ``E1`` when ``a`` is
    a non-positive integer) through the downward recurrence
    ``Gamma(a, x) = (Gamma(a + 1, x) - x**a * exp(-x)) / a``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ConfigError("upper_incomplete_gamma requires x >= 0")
    a = float(a)
    # orders within rounding of an integer would make a + n round to 1
    if abs(a - round(a)) <= 1e-13 * max(1.0, abs(a)):
        a = float(round(a))
    if a > 0:
        with np.errstate(divide="ignore"):
            out = np.exp(np.log(special.gammaincc(a, x)) + special.gammaln(a))
        return out if out.ndim else float(out)
    if np.any(x == 0):
        raise ConfigError("Gamma(a, 0) diverges for a <= 0")
    n = int(math.ceil(-a))
    if a == -n:
        value = special.exp1(x)
        a0 = 0.0
    else:
        a0 = a + n
        value = special.gammaincc(a0, x) * special.gamma(a0)
    with np.errstate(over="ignore", under="ignore"):
        for step in range(n):
            ak = a0 - (step + 1)
            value = (value - x**ak * np.exp(-x)) / ak
    value = np.asarray(value, dtype=float)
    return value if value.ndim else float(value)


def _panel_nodes(lo, hi, n_panels):
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return y, w


def vertical_line_integral(log_integrand, c, cfg: ContourConfig | None = None):
    """``(1 / 2 pi i) * integral of exp(log_integrand(s)) ds`` on ``Re s = c``.

    ``c`` may be an array; ``log_integrand`` receives ``s`` of shape
    ``c.shape + (n,)`` and must return the log of the integrand with the
    same shape.  Composite 16-point Gauss-Legendre panels on a symmetric
    window are refined by doubling until two successive estimates agree to
    ``rel_tol`` (or ``abs_tol``); the window is widened while its edges
    still carry non-negligible mass.
    """
    cfg = cfg or ContourConfig()
    c = np.asarray(c, dtype=float)
    H = cfg.truncation_height
    n_panels = max(8, int(math.ceil(H)))
    prev = None
    while True:
        if n_panels * _GL_NODES.size > cfg.max_nodes:
            raise ConvergenceError(
                f"contour quadrature did not converge within {cfg.max_nodes} nodes"
            )
        y, w = _panel_nodes(-H, H, n_panels)
        vals = np.exp(log_integrand(c[..., None] + 1j * y))
        est = (vals @ w) / (2.0 * math.pi)
        # cancellation floor: roundoff cannot beat eps times the L1 mass
        floor = 64.0 * np.finfo(float).eps * (np.abs(vals) @ w) / (2.0 * math.pi)
        scale = np.maximum(np.abs(est), cfg.abs_tol)
        edge = np.maximum(np.abs(vals[..., :16]).max(axis=-1), np.abs(vals[..., -16:]).max(axis=-1))
        if np.any(edge * H > cfg.rel_tol * scale):
            # window too short: widen and keep the panel width
            H *= 2.0
            n_panels *= 2
            prev = None
            continue
        if prev is not None:
            diff = np.abs(est - prev)
            if np.all(diff <= np.maximum(np.maximum(cfg.abs_tol, floor), cfg.rel_tol * np.abs(est))):
                return est
        prev = est
        n_panels *= 2


def _pointing_terms(chan):
    from .channel import pointing_derived

    pd = pointing_derived(chan)
    return pd.phi, pd.s0


def _fox_log_integrand(t, rho_k, link, chan, with_norm):
    """Log of the inner Mellin-Barnes integrand for the per-round factor.

    With ``with_norm`` the ``1 / Gamma(-t)`` normalisation is folded in, so
    the integral returns ``H / Gamma(-t)`` without overflowing for large
    ``|Im t|``.
    """
    from .channel import path_gain

    phi, s0 = _pointing_terms(chan)
    alpha, mu, hf = chan.alpha, chan.mu, chan.hhat_f
    hl = path_gain(link)
    log_base = (
        -0.5 * math.log(rho_k * hl * hl) + math.log(mu) / alpha - math.log(hf * s0)
    )
    t = np.asarray(t, dtype=complex)
    norm = ln_gamma_complex(-t) if with_norm else np.zeros_like(t)

    def log_g(s):
        tt = t[..., None]
        # Gamma(phi - s) / Gamma(1 + phi - s) collapses to 1 / (phi - s)
        return (
            ln_gamma_complex(s / 2.0)
            + ln_gamma_complex(-tt - s / 2.0)
            + ln_gamma_complex(mu - s / alpha)
            - np.log(phi - s)
            + s * log_base
            - norm[..., None]
        )

    lim = np.minimum(min(phi, mu * alpha), -2.0 * t.real)
    if np.any(lim <= 0):
        raise ContourPlacementError(
            "Mellin strip (0, min(phi, mu*alpha, -2 Re t)) is empty; need Re t < 0"
        )
    return log_g, 0.5 * lim


def fox_h_kernel(t, rho_k: float, link, chan, cfg: ContourConfig | None = None):
    """Fox H-function factor of round ``k`` in the exact outage integral.

    ``t`` is the exponent in ``E[(1 + rho_k |h_l|^2 |h_pf|^2)^t]`` and must
    have ``Re t < 0``.  The value returned is

        H(t) = 1/(2 pi i) * int Gamma(s/2) Gamma(-t - s/2) Gamma(mu - s/alpha)
               * Gamma(phi - s) / Gamma(1 + phi - s) * z**(-s) ds

    with ``z = (rho_k |h_l|^2)^(1/2) * (mu / (hhat_f S0)^alpha)^(-1/alpha)``,
    integrated on the midpoint of the strip ``0 < Re s < min(phi, mu alpha,
    -2 Re t)``.  The per-round Mellin factor is
    ``phi / (2 Gamma(mu) Gamma(-t)) * H(t)``; see :func:`mellin_factor`.
    """
    cfg = cfg or ContourConfig()
    t_arr = np.asarray(t, dtype=complex)
    log_g, c = _fox_log_integrand(t_arr, rho_k, link, chan, with_norm=False)
    return vertical_line_integral(log_g, c, cfg)


def mellin_factor(t, rho_k: float, link, chan, cfg: ContourConfig | None = None):
    """``E[(1 + rho_k |h_l|^2 |h_pf|^2)^t]`` for ``Re t < 0`` via the Fox H kernel."""
    cfg = cfg or ContourConfig()
    phi, _ = _pointing_terms(chan)
    t_arr = np.asarray(t, dtype=complex)
    log_g, c = _fox_log_integrand(t_arr, rho_k, link, chan, with_norm=True)
    val = vertical_line_integral(log_g, c, cfg)
    return phi / (2.0 * special.gamma(chan.mu)) * val


def _meijer_log_kernel(K, delta):
    """Log of ``Gamma(delta+1)^K Gamma(s-delta)^K / (s Gamma(s)^K)`` for ``Im s >= 0``.

    Left of ``Re s = 1/2`` the gamma ratio is reflected,

        Gamma(s-delta)/Gamma(s) = sin(pi s)/sin(pi (s-delta)) * Gamma(1-s)/Gamma(1+delta-s),

    with the sine ratio written in ``q = exp(2 pi i s)`` so that it stays
    bounded far up the contour.  Only ``exp`` of the result is used, so the
    branch of the logarithm is immaterial.
    """
    lg = K * special.gammaln(delta + 1.0)
    rot = np.exp(-2j * math.pi * delta)

    def log_g(s):
        s = np.asarray(s, dtype=complex)
        out = np.empty_like(s)
        right = s.real >= 0.5
        sr = s[right]
        out[right] = K * (ln_gamma_complex(sr - delta) - ln_gamma_complex(sr))
        sl = s[~right]
        q = np.exp(2j * math.pi * sl)
        out[~right] = K * (
            -1j * math.pi * delta + np.log1p(-q) - np.log1p(-q * rot)
            + ln_gamma_complex(1.0 - sl) - ln_gamma_complex(1.0 + delta - sl)
        )
        return lg + out - np.log(s)

    return log_g


def meijer_g_asymptotic(K: int, delta: float, x: float, cfg: ContourConfig | None = None) -> float:
    """``G_K(x) = Gamma(delta + 1)^K * G^{0,K}_{K,K}(x | 1+delta, ...; 0, 1, ..., 1)``.

    This is the Mellin-Barnes integral

        1/(2 pi i) * int x^s Gamma(delta + 1)^K Gamma(s - delta)^K
                     / (s Gamma(s)^K) ds,      Re s > delta,

    i.e. an inverse Laplace transform in ``u = log x``.  On a vertical line
    the integrand decays only like ``|s|^-(K delta + 1)``; since ``x > 1`` the
    path is bent into the left half-plane along the parabola
    ``s = c + (i tau - b tau^2) / u``, where ``x^s`` contributes the Gaussian
    factor ``exp(-b tau^2)``.  No poles lie between the line and the
    parabola.  ``G_K(x)`` equals the measure, under the weight
    ``prod delta * y_k**(delta - 1)``, of ``{prod (1 + y_k) < x}``.
    """
    cfg = cfg or ContourConfig()
    if int(K) != K or K < 1:
        raise ConfigError("K must be a positive integer")
    if not delta > 0:
        raise ConfigError("delta must be positive")
    if not x > 1:
        raise ConfigError("meijer_g_asymptotic requires x > 1")
    u = math.log(x)
    log_g = _meijer_log_kernel(int(K), delta)
    # saddle of x^s (s - delta)^-(K delta + 1) on the real axis
    nu = K * delta + 1.0
    c = delta + nu / u
    # keep the parabola at least one unit above the first pole it passes
    b = min(0.25, nu / u**2)
    shift = c * u + float(log_g(np.array([c + 0j]))[0].real)
    T = math.sqrt((-math.log(cfg.rel_tol) + 20.0) / b)

    def integrand(tau):
        s = c + (1j * tau - b * tau * tau) / u
        ds = (1j - 2.0 * b * tau) / u
        return np.exp(s * u + log_g(s) - shift) * ds

    n_panels = max(8, int(math.ceil(T)))
    prev = None
    while n_panels * _GL_NODES.size <= cfg.max_nodes:
        tau, w = _panel_nodes(0.0, T, n_panels)
        vals = integrand(tau)
        est = float(np.imag(vals @ w)) / math.pi
        floor = 64.0 * np.finfo(float).eps * float(np.abs(vals) @ w)
        if prev is not None and abs(est - prev) <= max(cfg.abs_tol, floor, cfg.rel_tol * abs(est)):
            return est * math.exp(shift)
        prev = est
        n_panels *= 2
    raise ConvergenceError(f"Meijer-G contour quadrature did not converge within {cfg.max_nodes} nodes")


def abate_whitt_invert(transform, w: float, cfg: AbateWhittConfig | None = None):
    """Abate-Whitt EULER inversion of a Laplace transform at ``w > 0``.

    ``transform`` maps an array of complex abscissae to the transform
    values.  Returns ``(value, delta)`` where ``delta`` is the change
    between Euler averages of order ``M - 1`` and ``M``.
    """
    cfg = cfg or AbateWhittConfig()
    if not w > 0:
        raise ConfigError("inversion point must be positive")
    N = cfg.Q + cfg.M
    n = np.arange(N + 1)
    nodes = (cfg.A + 2j * math.pi * n) / (2.0 * w)
    vals = np.real(transform(nodes))
    terms = vals * np.where(n % 2 == 0, 1.0, -1.0)
    terms[0] *= 0.5
    partial = math.exp(cfg.A / 2.0) / w * np.cumsum(terms)

    def euler(m):
        coef = special.comb(m, np.arange(m + 1)) / 2.0**m
        return float(coef @ partial[cfg.Q:cfg.Q + m + 1])

    value = euler(cfg.M)
    return value, abs(value - euler(cfg.M - 1))
