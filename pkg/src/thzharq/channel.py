"""THz path gain, pointing-error geometry and the composite fading law.

The composite channel ``|h_pf| = h_p * h_f`` combines a pointing-error
factor ``h_p = S0 * U**(1/phi)`` (``U`` uniform) with alpha-mu fading
``h_f``, whose ``alpha``-th power is Gamma distributed with shape ``mu``
and mean ``hhat_f**alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import special

from .errors import ConfigError
from .specfun import upper_incomplete_gamma

SPEED_OF_LIGHT = 299_792_458.0

# Measured molecular absorption coefficients [1/m], keyed by
# (frequency_hz, temperature_k, relative_humidity, pressure_pa).
ABSORPTION_PRESETS: dict[tuple[float, float, float, float], float] = {}


def register_absorption(frequency_hz, temperature_k, humidity, pressure_pa, kappa):
    if kappa < 0:
        raise ConfigError("absorption coefficient must be non-negative")
    ABSORPTION_PRESETS[(float(frequency_hz), float(temperature_k), float(humidity),
                        float(pressure_pa))] = float(kappa)


def absorption_coefficient(frequency_hz, temperature_k=296.0, humidity=0.5,
                           pressure_pa=101325.0, default=0.0):
    """Look up a registered absorption coefficient, falling back to ``default``."""
    key = (float(frequency_hz), float(temperature_k), float(humidity), float(pressure_pa))
    return ABSORPTION_PRESETS.get(key, default)


@dataclass(frozen=True)
class LinkParams:
    frequency_hz: float = 275e9
    distance_m: float = 20.0
    gain_tx_dbi: float = 55.0
    gain_rx_dbi: float = 55.0
    absorption_coeff_per_m: float = 0.0
    noise_power_w: float = 1.0
    # environment metadata; kappa is supplied directly
    temperature_k: float = 296.0
    humidity: float = 0.5
    pressure_pa: float = 101325.0

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ConfigError("frequency_hz must be positive")
        if not self.distance_m > 0:
            raise ConfigError("distance_m must be positive")
        if not self.absorption_coeff_per_m >= 0:
            raise ConfigError("absorption_coeff_per_m must be non-negative")
        if not self.noise_power_w > 0:
            raise ConfigError("noise_power_w must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class ChannelParams:
    alpha: float = 2.0
    mu: float = 1.0
    hhat_f: float = 1.0
    antenna_radius_m: float = 1.0
    beam_waist_m: float = 1.0
    jitter_sigma: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "mu", "hhat_f", "antenna_radius_m", "beam_waist_m", "jitter_sigma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class PointingDerived:
    phi: float
    s0: float
    w_e: float
    zeta: float


def path_gain(link: LinkParams) -> float:
    """Deterministic gain ``c sqrt(Gt Gr) / (4 pi f d) * exp(-kappa d / 2)``."""
    g = 10.0 ** ((link.gain_tx_dbi + link.gain_rx_dbi) / 20.0)
    return (
        SPEED_OF_LIGHT * g / (4.0 * math.pi * link.frequency_hz * link.distance_m)
        * math.exp(-0.5 * link.absorption_coeff_per_m * link.distance_m)
    )


def pointing_derived(chan: ChannelParams) -> PointingDerived:
    zeta = math.sqrt(math.pi) * chan.antenna_radius_m / (math.sqrt(2.0) * chan.beam_waist_m)
    ez = math.erf(zeta)
    s0 = ez * ez
    # w_e^2 = sqrt(pi) w^2 erf(zeta) / (2 zeta exp(-zeta^2))
    we2 = math.sqrt(math.pi) * chan.beam_waist_m**2 * ez * math.exp(zeta * zeta) / (2.0 * zeta)
    phi = we2 / (4.0 * chan.jitter_sigma**2)
    if not (phi > 0 and 0 < s0 < 1 and math.isfinite(we2)):
        raise ConfigError(f"degenerate pointing geometry (phi={phi}, S0={s0})")
    return PointingDerived(phi=phi, s0=s0, w_e=math.sqrt(we2), zeta=zeta)


def composite_pdf(x, chan: ChannelParams):
    """Density of ``|h_pf|``."""
    pd = pointing_derived(chan)
    a, mu, hf = chan.alpha, chan.mu, chan.hhat_f
    x = np.asarray(x, dtype=float)
    scale = pd.s0 * hf
    z = mu * (x / scale) ** a
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_pref = (math.log(pd.phi) + (pd.phi / a) * math.log(mu) - pd.phi * math.log(scale)
                    - special.gammaln(mu))
        tail = upper_incomplete_gamma(mu - pd.phi / a, np.where(z > 0, z, 1.0))
        out = np.exp(log_pref + (pd.phi - 1.0) * np.log(x)) * tail
    out = np.where(x > 0, out, 0.0)
    return out if out.ndim else float(out)


def composite_cdf(x, chan: ChannelParams):
    """``Pr{|h_pf| <= x}``.

    Integrating the density by parts gives, with
    ``z = mu (x / (S0 hhat_f))**alpha``,

        F(x) = P(mu, z) + z**(phi/alpha) * Gamma(mu - phi/alpha, z) / Gamma(mu),

    where ``P`` is the regularised lower incomplete gamma function.
    """
    pd = pointing_derived(chan)
    a, mu, hf = chan.alpha, chan.mu, chan.hhat_f
    x = np.asarray(x, dtype=float)
    z = mu * (np.maximum(x, 0.0) / (pd.s0 * hf)) ** a
    zp = np.where(z > 0, z, 1.0)
    with np.errstate(under="ignore", over="ignore"):
        second = np.exp((pd.phi / a) * np.log(zp) - special.gammaln(mu)) \
            * upper_incomplete_gamma(mu - pd.phi / a, zp)
        out = special.gammainc(mu, z) + np.where(z > 0, second, 0.0)
    out = np.clip(np.where(np.isfinite(z), out, 1.0), 0.0, 1.0)
    return out if out.ndim else float(out)


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the sub-stream ``(seed, *stream)``.

    Philox keyed by a SeedSequence: chunk ``j`` of stream ``s`` always gets
    the same numbers regardless of how chunks are spread over workers.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


def draw_composite(rng: np.random.Generator, chan: ChannelParams, size, pd=None):
    pd = pd or pointing_derived(chan)
    g = rng.gamma(chan.mu, chan.hhat_f**chan.alpha / chan.mu, size=size)
    u = rng.random(size=size)
    return pd.s0 * u ** (1.0 / pd.phi) * g ** (1.0 / chan.alpha)


def sample_composite(chan: ChannelParams, n: int, seed: int, chunk: int = 1 << 16):
    """``n`` i.i.d. draws of ``|h_pf|``, deterministic in ``seed``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    pd = pointing_derived(chan)
    out = np.empty(n)
    for j, start in enumerate(range(0, n, chunk)):
        stop = min(n, start + chunk)
        out[start:stop] = draw_composite(rng_for(seed, 0, j), chan, stop - start, pd)
    return out
