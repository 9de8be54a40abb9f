"""Seeded Monte Carlo estimates of outage, LTAT and multi-hop delivery.

Trials run in fixed-size chunks; chunk ``j`` of stream ``s`` draws from
``rng_for(seed, s, j)``, so results never depend on how chunks are
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, LinkParams, draw_composite, path_gain, pointing_derived, rng_for
from .errors import ConfigError
from .multihop import _hop_params
from .outage import HarqConfig, Scheme

CHUNK = 1 << 16

# stream ids keep single-hop and per-hop draws independent
_STREAM_SINGLE = 1
_STREAM_HOP = 100


@dataclass(frozen=True)
class SimResult:
    estimate: float
    std_error: float
    trials: int
    seed: int
    # per-round outage estimates p_1..p_K when available
    per_round: tuple | None = None


def _chunks(trials: int, chunk: int):
    for j, start in enumerate(range(0, trials, chunk)):
        yield j, min(chunk, trials - start)


def round_snrs(rng, cfg: HarqConfig, link: LinkParams, chan: ChannelParams, n: int, pd=None):
    """``(n, K)`` instantaneous SNRs ``rho_k |h_l|^2 |h_pf,k|^2``."""
    h = draw_composite(rng, chan, (n, cfg.k_max), pd)
    return cfg.rhos[None, :] * path_gain(link) ** 2 * h * h


def accumulated_information(snr: np.ndarray, scheme: Scheme) -> np.ndarray:
    """Mutual information after each round, shape like ``snr``."""
    scheme = Scheme(scheme)
    if scheme is Scheme.IR:
        return np.cumsum(np.log2(1.0 + snr), axis=-1)
    if scheme is Scheme.CC:
        return np.log2(1.0 + np.cumsum(snr, axis=-1))
    return np.log2(1.0 + np.maximum.accumulate(snr, axis=-1))


def _binomial(count, trials, seed, per_round=None):
    p = count / trials
    return SimResult(estimate=float(p), std_error=math.sqrt(p * (1.0 - p) / trials),
                     trials=int(trials), seed=int(seed),
                     per_round=None if per_round is None else tuple(float(v) for v in per_round))


def _check(trials):
    if int(trials) != trials or trials < 1:
        raise ConfigError("trials must be a positive integer")


def outage_indicators(cfg, link, chan, trials, seed, schemes=tuple(Scheme), chunk=CHUNK):
    """Yield per-chunk ``{scheme: (n, K) bool}`` outage flags from shared channel draws."""
    _check(trials)
    pd = pointing_derived(chan)
    for j, n in _chunks(trials, chunk):
        snr = round_snrs(rng_for(seed, _STREAM_SINGLE, j), cfg, link, chan, n, pd)
        yield {s: accumulated_information(snr, s) < cfg.rate_bps_hz for s in map(Scheme, schemes)}


def simulate_outage_all(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                        trials: int, seed: int, chunk: int = CHUNK) -> dict:
    """Outage of every scheme from one shared set of channel draws."""
    counts = {s: np.zeros(cfg.k_max) for s in Scheme}
    for flags in outage_indicators(cfg, link, chan, trials, seed, chunk=chunk):
        for s, f in flags.items():
            counts[s] += f.sum(axis=0)
    return {s.value: _binomial(c[-1], trials, seed, c / trials) for s, c in counts.items()}


def simulate_outage(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                    trials: int, seed: int, chunk: int = CHUNK) -> SimResult:
    """Fraction of trials whose accumulated information after ``K`` rounds is below ``R``.

    The draws are the same for every scheme, so results for different
    ``cfg.scheme`` at equal seeds are ordered trial by trial.
    """
    counts = np.zeros(cfg.k_max)
    for flags in outage_indicators(cfg, link, chan, trials, seed, (cfg.scheme,), chunk):
        counts += flags[cfg.scheme].sum(axis=0)
    return _binomial(counts[-1], trials, seed, counts / trials)


def _ratio_result(rate, delivered, rounds, trials, seed):
    """``R sum(delivered) / sum(rounds)`` with a delta-method standard error."""
    d = np.asarray(delivered, dtype=float)
    r = np.asarray(rounds, dtype=float)
    ratio = d.sum() / r.sum()
    resid = d - ratio * r
    se = math.sqrt(max(resid.var(), 0.0) / trials) / r.mean() if trials > 1 else 0.0
    return SimResult(estimate=float(rate * ratio), std_error=float(rate * se),
                     trials=int(trials), seed=int(seed))


def simulate_ltat(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                  trials: int, seed: int, chunk: int = CHUNK) -> SimResult:
    """Renewal-reward LTAT over ``trials`` messages.

    Each message ends at the first round whose accumulated information reaches
    ``R`` or after ``K`` rounds; the estimate is ``R`` times delivered
    messages over consumed rounds.
    """
    if cfg.rate_bps_hz == 0:
        _check(trials)
        return SimResult(0.0, 0.0, int(trials), int(seed))
    delivered, rounds = [], []
    for flags in outage_indicators(cfg, link, chan, trials, seed, (cfg.scheme,), chunk):
        f = flags[cfg.scheme]
        # outage flags are non-increasing along rounds
        rounds.append(np.minimum(1 + f[:, :-1].sum(axis=1), cfg.k_max))
        delivered.append(~f[:, -1])
    return _ratio_result(cfg.rate_bps_hz, np.concatenate(delivered), np.concatenate(rounds),
                         trials, seed)


def multihop_cycles(topology, cfg: HarqConfig, link, chan, trials: int, seed: int,
                    chunk: int = CHUNK):
    """Per-message ``(delivered, rounds_used)`` for an ``L``-hop decode-and-forward chain.

    Hop ``l`` is blocked for the whole message with probability ``1 - P_N^l``;
    otherwise it needs ``kappa_l`` rounds, the first round whose accumulated
    information reaches ``R``.  The message is delivered iff no hop is
    blocked and ``sum kappa_l <= K``; rounds used are ``min(sum kappa_l, K)``.
    """
    _check(trials)
    L, K = topology.hops, cfg.k_max
    if K < L:
        raise ConfigError(f"k_max={K} is smaller than hop count {L}")
    links, chans = _hop_params(topology, link, chan)
    p_n = topology.non_blocking()
    pds = [pointing_derived(c) for c in chans]
    delivered, used = [], []
    for j, n in _chunks(trials, chunk):
        total = np.zeros(n)
        for l in range(L):
            rng = rng_for(seed, _STREAM_HOP + l, j)
            blocked = rng.random(n) >= p_n[l]
            snr = round_snrs(rng, cfg, links[l], chans[l], n, pds[l])
            ok = accumulated_information(snr, cfg.scheme) >= cfg.rate_bps_hz
            kappa = np.where(ok.any(axis=1), ok.argmax(axis=1) + 1.0, np.inf)
            total += np.where(blocked, np.inf, kappa)
        delivered.append(total <= K)
        used.append(np.minimum(total, K))
    return np.concatenate(delivered), np.concatenate(used)


def simulate_multihop(topology, cfg: HarqConfig, link, chan, trials: int, seed: int,
                      chunk: int = CHUNK) -> SimResult:
    """Multi-hop outage probability; per-round entries are the outages for budgets ``L..K``."""
    delivered, used = multihop_cycles(topology, cfg, link, chan, trials, seed, chunk)
    L = topology.hops
    # with budget k the message fails iff it needs more than k rounds
    per = [np.count_nonzero(~delivered | (used > k)) for k in range(L, cfg.k_max + 1)]
    return _binomial(np.count_nonzero(~delivered), trials, seed, np.array(per) / trials)


def simulate_ltat_multihop(topology, cfg: HarqConfig, link, chan, trials: int, seed: int,
                           chunk: int = CHUNK) -> SimResult:
    delivered, used = multihop_cycles(topology, cfg, link, chan, trials, seed, chunk)
    if cfg.rate_bps_hz == 0:
        return SimResult(0.0, 0.0, int(trials), int(seed))
    return _ratio_result(cfg.rate_bps_hz, delivered, used, trials, seed)
