"""Exact and asymptotic outage of HARQ-aided THz links.

The exact HARQ-IR outage is the CDF of ``W = sum_k log(1 + X_k)`` at
``R ln 2``, where ``X_k = rho_k |h_l|^2 |h_pf,k|^2``.  Its Laplace transform
is ``(1/s) prod_k E[(1 + X_k)^(-s)]``; each factor is a Fox H-function
evaluated by contour quadrature and the transform is inverted with the
Abate-Whitt EULER rule.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special

from .channel import ChannelParams, LinkParams, path_gain, pointing_derived
from .errors import ConfigError, ConvergenceError
from .specfun import (
    AbateWhittConfig,
    ContourConfig,
    abate_whitt_invert,
    meijer_g_asymptotic,
    mellin_factor,
)

# number of exact-outage results pulled back into [0, 1]
CLAMP_EVENTS: Counter = Counter()

BOUNDARY_TOL = 1e-9


class Scheme(str, enum.Enum):
    TYPE_I = "TypeI"
    CC = "CC"
    IR = "IR"


@dataclass(frozen=True)
class HarqConfig:
    scheme: Scheme = Scheme.IR
    k_max: int = 3
    rate_bps_hz: float = 2.0
    snr_ref_db: float = 20.0
    power_factors: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigError("k_max must be a positive integer")
        object.__setattr__(self, "k_max", int(self.k_max))
        if not self.rate_bps_hz >= 0:
            raise ConfigError("rate must be non-negative")
        q = self.power_factors
        q = (1.0,) * self.k_max if q is None else tuple(float(v) for v in q)
        if len(q) != self.k_max or any(not v > 0 for v in q):
            raise ConfigError("power_factors must hold k_max positive values")
        object.__setattr__(self, "power_factors", q)

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_ref_db / 10.0)

    @property
    def rhos(self) -> np.ndarray:
        return np.asarray(self.power_factors) * self.snr_linear

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        if "k_max" in kw and "power_factors" not in kw:
            k = int(kw["k_max"])
            q = list(self.power_factors)
            d["power_factors"] = tuple((q + [q[-1]] * k)[:k])
        return HarqConfig(**d)

    def truncated(self, k: int) -> "HarqConfig":
        """Same link with only the first ``k`` rounds."""
        return self.replace(k_max=k, power_factors=self.power_factors[:k])

    def to_dict(self):
        d = asdict(self)
        d["scheme"] = self.scheme.value
        d["power_factors"] = list(self.power_factors)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("power_factors") is not None:
            d["power_factors"] = tuple(d["power_factors"])
        return cls(**d)


@dataclass(frozen=True)
class AsymptoticBreakdown:
    impact_factor_a: float
    power_factor: float
    coding_gain: float
    diversity: float
    outage: float


def diversity_order(chan: ChannelParams, k_max: int, hops: int = 1) -> float:
    """``(K - L + 1) * min(phi, alpha mu) / 2``."""
    if hops < 1:
        raise ConfigError("hops must be >= 1")
    if k_max < hops:
        raise ConfigError("k_max must be >= hops")
    pd = pointing_derived(chan)
    return (k_max - hops + 1) * min(pd.phi, chan.alpha * chan.mu) / 2.0


def ir_laplace_transform(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                         cc: ContourConfig | None = None):
    """Laplace transform ``s -> (1/s) prod_k E[(1 + X_k)^(-s)]`` of the CDF of ``W``."""
    cc = cc or ContourConfig()

    def transform(s):
        s = np.asarray(s, dtype=complex)
        cache = {}
        out = 1.0 / s
        for rho in cfg.rhos:
            key = float(rho)
            if key not in cache:
                cache[key] = mellin_factor(-s, key, link, chan, cc)
            out = out * cache[key]
        return out

    return transform


def outage_exact_ir(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                    aw: AbateWhittConfig | None = None,
                    cc: ContourConfig | None = None) -> float:
    """HARQ-IR outage ``Pr{prod_k (1 + X_k) < 2^R}`` after ``cfg.k_max`` rounds."""
    aw = aw or AbateWhittConfig()
    if not cfg.rate_bps_hz > 0:
        raise ConfigError("exact outage requires rate > 0")
    w = cfg.rate_bps_hz * math.log(2.0)
    value, delta = abate_whitt_invert(ir_laplace_transform(cfg, link, chan, cc), w, aw)
    if not math.isfinite(value) or delta > aw.tol:
        raise ConvergenceError(
            f"Euler summation unsettled: last correction {delta:.3g} > tol {aw.tol:.3g}"
        )
    if value < 0.0 or value > 1.0:
        CLAMP_EVENTS["exact_ir"] += 1
        warnings.warn(f"exact outage {value:.3e} clamped to [0, 1]", RuntimeWarning,
                      stacklevel=2)
        value = min(1.0, max(0.0, value))
    return value


def outage_exact_ir_curve(cfg: HarqConfig, link, chan, k_values, aw=None, cc=None):
    """Exact outage after ``k`` rounds for every ``k`` in ``k_values``."""
    return np.array([outage_exact_ir(cfg.truncated(k), link, chan, aw, cc) for k in k_values])


def _small_value_coefficient(chan: ChannelParams):
    """``(delta, a)`` with ``Pr{|h_pf|^2 < y} ~ a * y**delta`` as ``y -> 0``."""
    pd = pointing_derived(chan)
    phi, a_, mu, hf = pd.phi, chan.alpha, chan.mu, chan.hhat_f
    am = a_ * mu
    if abs(am - phi) < BOUNDARY_TOL:
        raise ConfigError("alpha*mu == phi is excluded from the asymptotic analysis")
    if am > phi:
        coef = mu ** (phi / a_) * special.gamma(mu - phi / a_) / ((hf * pd.s0) ** phi * special.gamma(mu))
        return phi / 2.0, coef
    coef = phi * mu ** (mu - 1.0) / ((phi - am) * (hf * pd.s0) ** am * special.gamma(mu))
    return am / 2.0, coef


def outage_asymptotic(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                      cc: ContourConfig | None = None) -> AsymptoticBreakdown:
    """High-SNR outage ``A * L(P) * C(R)**(-D)`` for Type-I, CC or IR.

    ``A`` and ``L(P)`` use the transmit powers ``P_k = rho_k * N0``; the
    noise power enters ``A`` as ``N0**delta`` so that the product depends on
    the SNRs only.
    """
    if not cfg.rate_bps_hz > 0:
        raise ConfigError("asymptotic outage requires rate > 0")
    delta, coef = _small_value_coefficient(chan)
    K = cfg.k_max
    hl = path_gain(link)
    n0 = link.noise_power_w
    A = (coef * n0**delta / hl ** (2.0 * delta)) ** K
    powers = cfg.rhos * n0
    L = float(np.exp(-delta * np.sum(np.log(powers))))
    D = K * delta
    x = 2.0 ** cfg.rate_bps_hz
    if cfg.scheme is Scheme.TYPE_I:
        C = 1.0 / (x - 1.0)
    elif cfg.scheme is Scheme.CC:
        C = special.gamma(delta + 1.0) ** (-K / D) * special.gamma(D + 1.0) ** (1.0 / D) / (x - 1.0)
    else:
        C = meijer_g_asymptotic(K, delta, x, cc) ** (-1.0 / D)
    return AsymptoticBreakdown(
        impact_factor_a=A, power_factor=L, coding_gain=C, diversity=D,
        outage=A * L * C ** (-D),
    )
