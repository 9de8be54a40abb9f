"""Blockage-aware single/multi-hop outage and long-term average throughput."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelParams, LinkParams
from .errors import ConfigError
from .outage import HarqConfig, outage_exact_ir

MAX_ROUNDS = 32


@dataclass(frozen=True)
class BlockageParams:
    density_per_m2: float = 0.0
    body_radius_m: float = 0.2
    body_height_m: float = 1.7
    bs_height_m: float = 9.0
    user_height_m: float = 1.0

    def __post_init__(self):
        if not self.density_per_m2 >= 0:
            raise ConfigError("blockage density must be non-negative")
        if not self.body_radius_m > 0:
            raise ConfigError("body radius must be positive")
        if not self.bs_height_m > self.body_height_m > self.user_height_m > 0:
            raise ConfigError("heights must satisfy bs > body > user > 0")

    @property
    def beta(self) -> float:
        return (2.0 * self.density_per_m2 * self.body_radius_m
                * (self.body_height_m - self.user_height_m)
                / (self.bs_height_m - self.user_height_m))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def non_blocking_prob(b: BlockageParams, d: float) -> float:
    """``exp(-beta d)``."""
    if not d > 0:
        raise ConfigError("distance must be positive")
    return math.exp(-b.beta * d)


@dataclass(frozen=True)
class HopTopology:
    hops: int = 1
    distances_m: tuple = (20.0,)
    # one BlockageParams shared by every hop, or one per hop
    blockage: BlockageParams | tuple = field(default_factory=BlockageParams)

    def __post_init__(self):
        if int(self.hops) != self.hops or self.hops < 1:
            raise ConfigError("hops must be a positive integer")
        d = tuple(float(v) for v in self.distances_m)
        if len(d) != self.hops or any(not v > 0 for v in d):
            raise ConfigError("distances_m must hold `hops` positive values")
        object.__setattr__(self, "distances_m", d)
        b = self.blockage
        if isinstance(b, (list, tuple)):
            b = tuple(v if isinstance(v, BlockageParams) else BlockageParams(**v) for v in b)
            if len(b) != self.hops:
                raise ConfigError("per-hop blockage list must have `hops` entries")
        elif isinstance(b, dict):
            b = BlockageParams(**b)
        object.__setattr__(self, "blockage", b)

    @classmethod
    def split(cls, total_distance_m: float, hops: int, blockage: BlockageParams | None = None):
        """Equal split of one link into ``hops`` hops."""
        return cls(hops=hops, distances_m=(total_distance_m / hops,) * hops,
                   blockage=blockage or BlockageParams())

    def hop_blockage(self, l: int) -> BlockageParams:
        return self.blockage[l] if isinstance(self.blockage, tuple) else self.blockage

    def non_blocking(self) -> np.ndarray:
        return np.array([non_blocking_prob(self.hop_blockage(l), d)
                         for l, d in enumerate(self.distances_m)])

    def hop_links(self, link: LinkParams) -> list[LinkParams]:
        return [dataclasses.replace(link, distance_m=d) for d in self.distances_m]

    def to_dict(self):
        b = self.blockage
        return {
            "hops": self.hops,
            "distances_m": list(self.distances_m),
            "blockage": [v.to_dict() for v in b] if isinstance(b, tuple) else b.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        b = d.get("blockage", {})
        d["blockage"] = tuple(BlockageParams(**v) for v in b) if isinstance(b, list) else BlockageParams(**b)
        return cls(**d)


def _check_budget(k_max: int, hops: int):
    if k_max < hops:
        raise ConfigError(f"k_max={k_max} is smaller than hop count {hops}")
    if k_max > MAX_ROUNDS:
        raise ConfigError(f"k_max above {MAX_ROUNDS} is not supported")


def compositions(total: int, parts: int):
    """All tuples of ``parts`` positive integers summing to ``total`` (stars and bars)."""
    for bars in combinations(range(1, total), parts - 1):
        edges = (0, *bars, total)
        yield tuple(edges[i + 1] - edges[i] for i in range(parts))


def hop_outage_table(cfg: HarqConfig, links: Sequence[LinkParams],
                     chans: Sequence[ChannelParams],
                     outage_fn: Callable | None = None) -> np.ndarray:
    """``table[l, k]`` = outage of hop ``l`` after ``k`` rounds without blockage; column 0 is 1.

    Hops with identical link and channel parameters share one evaluation.
    """
    outage_fn = outage_fn or outage_exact_ir
    K = cfg.k_max
    table = np.ones((len(links), K + 1))
    cache = {}
    for l, (link, chan) in enumerate(zip(links, chans)):
        key = (link, chan)
        if key not in cache:
            cache[key] = [outage_fn(cfg.truncated(k), link, chan) for k in range(1, K + 1)]
        table[l, 1:] = cache[key]
    return table


def _broadcast(value, n):
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ConfigError("per-hop parameter list has the wrong length")
        return list(value)
    return [value] * n


def outage_multihop_from_table(table: np.ndarray, p_n: np.ndarray, k_max: int) -> float:
    """Composition sum ``1 - sum prod_l P_N^l (p_{kappa-1} - p_kappa)`` over ``L <= sum kappa <= K``."""
    hops = table.shape[0]
    _check_budget(k_max, hops)
    succ = table[:, :-1] - table[:, 1:]  # succ[l, kappa-1]
    total = 0.0
    for k in range(hops, k_max + 1):
        for kap in compositions(k, hops):
            total += math.prod(succ[l, kap[l] - 1] for l in range(hops))
    return float(min(1.0, max(0.0, 1.0 - np.prod(p_n) * total)))


def outage_multihop_first_failure(table: np.ndarray, p_n: np.ndarray, k_max: int) -> float:
    """Outage as a sum over the first hop that fails.

    Term ``n`` covers hops ``1..n-1`` delivering with ``kappa_1..kappa_{n-1}``
    rounds and hop ``n`` failing (blocked, or undecoded) with the
    ``kappa_n >= 0`` rounds left over; zero rounds left means certain failure.
    """
    hops = table.shape[0]
    _check_budget(k_max, hops)
    succ = table[:, :-1] - table[:, 1:]
    out = 0.0
    for n in range(hops):
        if n == 0:
            out += 1.0 - p_n[0] * (1.0 - table[0, k_max])
            continue
        head = float(np.prod(p_n[:n]))
        for used in range(n, k_max + 1):
            fail = 1.0 - p_n[n] * (1.0 - table[n, k_max - used])
            for kap in compositions(used, n):
                out += head * math.prod(succ[l, kap[l] - 1] for l in range(n)) * fail
    return float(min(1.0, max(0.0, out)))


def outage_single_hop_blockage(cfg: HarqConfig, link: LinkParams, chan: ChannelParams,
                               b: BlockageParams, outage_fn: Callable | None = None) -> float:
    """``P_B + P_N p_out,K``."""
    outage_fn = outage_fn or outage_exact_ir
    p_n = non_blocking_prob(b, link.distance_m)
    return (1.0 - p_n) + p_n * outage_fn(cfg, link, chan)


def outage_multihop(topology: HopTopology, cfg: HarqConfig, link, chan,
                    outage_fn: Callable | None = None) -> float:
    """Multi-hop outage after ``cfg.k_max`` rounds shared dynamically across hops.

    ``link`` and ``chan`` are either single objects or per-hop lists; a
    single ``LinkParams`` is re-used with each hop's own distance.
    """
    _check_budget(cfg.k_max, topology.hops)
    links, chans = _hop_params(topology, link, chan)
    table = hop_outage_table(cfg, links, chans, outage_fn)
    return outage_multihop_from_table(table, topology.non_blocking(), cfg.k_max)


def multihop_outage_curve(topology: HopTopology, cfg: HarqConfig, link, chan,
                          outage_fn: Callable | None = None) -> np.ndarray:
    """Multi-hop outage for every budget ``k = L..K`` from a single per-hop table."""
    _check_budget(cfg.k_max, topology.hops)
    links, chans = _hop_params(topology, link, chan)
    table = hop_outage_table(cfg, links, chans, outage_fn)
    p_n = topology.non_blocking()
    return np.array([outage_multihop_from_table(table, p_n, k)
                     for k in range(topology.hops, cfg.k_max + 1)])


def _hop_params(topology, link, chan):
    if isinstance(link, LinkParams):
        links = topology.hop_links(link)
    else:
        links = _broadcast(link, topology.hops)
    return links, _broadcast(chan, topology.hops)


def _check_outages(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ConfigError("outage array must be a non-empty vector")
    if np.any((p < 0) | (p > 1)):
        raise ConfigError("outage values must lie in [0, 1]")
    if np.any(np.diff(p) > 1e-12):
        raise ConfigError("outage values must be non-increasing in the round index")
    return p


def ltat(cfg: HarqConfig, outages) -> float:
    """``R (1 - p_K) / (1 + sum_{k<K} p_k)`` from per-round outages ``p_1..p_K``."""
    p = _check_outages(outages)
    if p.size != cfg.k_max:
        raise ConfigError("need one outage value per round")
    return cfg.rate_bps_hz * (1.0 - p[-1]) / (1.0 + p[:-1].sum())


def average_rounds_multihop(hops: int, outages) -> float:
    """``L + sum_{k=L}^{K-1} p_k`` for outages ``p_L..p_K``."""
    p = _check_outages(outages)
    return hops + p[:-1].sum()


def ltat_multihop(topology: HopTopology, cfg: HarqConfig, outages) -> float:
    """``R (1 - p_K) / (L + sum_{k=L}^{K-1} p_k)`` for outages ``p_L..p_K`` of the chain."""
    p = _check_outages(outages)
    _check_budget(cfg.k_max, topology.hops)
    if p.size != cfg.k_max - topology.hops + 1:
        raise ConfigError("need outages for k = L..K")
    return cfg.rate_bps_hz * (1.0 - p[-1]) / average_rounds_multihop(topology.hops, p)


def ltat_blockage_limit(topology: HopTopology, cfg: HarqConfig) -> float:
    """High-SNR LTAT ``R / (K (P_N^-L - 1) + L)`` with equal per-hop ``P_N``."""
    p_n = float(np.prod(topology.non_blocking()))
    return cfg.rate_bps_hz / (cfg.k_max * (1.0 / p_n - 1.0) + topology.hops)
