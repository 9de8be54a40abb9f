"""Rate selection maximizing LTAT under an outage ceiling.

The objective is ``T(R) = R (1 - p_K(R)) / (1 + sum_{k<K} p_k(R))`` subject to
``p_K(R) <= epsilon``.  With the asymptotic outage model the problem is a
concave-over-convex fraction and is solved by Dinkelbach iterations; any
other outage model (surrogate, exact) goes through a dense grid followed by
golden-section refinement.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import ChannelParams, LinkParams, composite_cdf, path_gain
from .errors import ConfigError, ConvergenceError, InfeasibleError
from .outage import HarqConfig, outage_asymptotic

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TIE_TOL = 1e-9


class Method(str, enum.Enum):
    ASYMPTOTIC = "asymptotic"
    SURROGATE = "surrogate"


@dataclass(frozen=True)
class RateProblem:
    cfg: HarqConfig
    epsilon: float
    rate_bounds: tuple = (0.01, 5.0)
    method: Method = Method.ASYMPTOTIC

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        lo, hi = map(float, self.rate_bounds)
        if not 0 < lo < hi:
            raise ConfigError("rate bounds must satisfy 0 < r_lo < r_hi")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        object.__setattr__(self, "rate_bounds", (lo, hi))


@dataclass(frozen=True)
class RateResult:
    rate: float
    ltat: float
    outage: float
    method: str
    iterations: int = 0
    evaluations: int = 0
    lambdas: tuple = field(default=())
    rate_cap: float | None = None

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["lambdas"] = list(self.lambdas)
        return d


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                       max_iter: int = 200):
    """Maximizer of a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x), evaluations)``."""
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    n = 2
    while b - a > tol and n < max_iter:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        n += 1
    fa, fb = f(a), f(b)
    n += 2
    best = max(((f1, x1), (f2, x2), (fa, a), (fb, b)), key=lambda t: (t[0], -t[1]))
    return best[1], best[0], n


def grid_then_golden(f, a, b, points=64, tol=1e-10):
    """Global-ish maximizer: coarse grid, then golden section around the best cell.

    Among grid points within ``TIE_TOL`` of the best value the smallest is
    kept, so flat optima resolve to the smallest argument.
    """
    xs = np.linspace(a, b, points)
    vals = np.array([f(x) for x in xs])
    i = int(np.flatnonzero(vals >= vals.max() - TIE_TOL)[0])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, points - 1)]
    x, fx, n = golden_section_max(f, lo, hi, tol)
    if fx < vals[i] + TIE_TOL:
        return float(xs[i]), float(vals[i]), points + n
    return x, fx, points + n


def _ltat_from(rate, p_list):
    p = [min(1.0, max(0.0, v)) for v in p_list]
    return rate * (1.0 - p[-1]) / (1.0 + sum(p[:-1]))


def largest_feasible_rate(p_final: Callable[[float], float], lo: float, hi: float,
                          epsilon: float, tol: float = 1e-12) -> float:
    """Largest ``R`` in ``[lo, hi]`` with ``p_final(R) <= epsilon`` for increasing ``p_final``."""
    if p_final(lo) > epsilon:
        raise InfeasibleError(
            f"outage {p_final(lo):.3e} at the lowest rate {lo} already exceeds {epsilon}"
        )
    if p_final(hi) <= epsilon:
        return hi
    a, b = lo, hi
    while b - a > tol * max(1.0, b):
        m = 0.5 * (a + b)
        if p_final(m) <= epsilon:
            a = m
        else:
            b = m
    return a


def asymptotic_outages(cfg: HarqConfig, link, chan, rate: float) -> list[float]:
    """Asymptotic ``p_1..p_K`` at ``rate``."""
    c = cfg.replace(rate_bps_hz=rate)
    return [outage_asymptotic(c.truncated(k), link, chan).outage for k in range(1, cfg.k_max + 1)]


def optimal_rate_asymptotic(p: RateProblem, link: LinkParams, chan: ChannelParams,
                            tol: float = 1e-8, max_iter: int = 50) -> RateResult:
    """Dinkelbach iterations for ``max N(R) / D(R)`` with the asymptotic outage model.

    ``N(R) = R (1 - p_K(R))`` and ``D(R) = 1 + sum_{k<K} p_k(R)``; each step
    maximizes ``N - lambda D`` on ``[r_lo, r_cap]``, where ``r_cap`` is the
    largest rate meeting the outage ceiling.
    """
    cfg = p.cfg
    lo, hi = p.rate_bounds

    def p_final(r):
        return outage_asymptotic(cfg.replace(rate_bps_hz=r), link, chan).outage

    cap = largest_feasible_rate(p_final, lo, hi, p.epsilon)
    cache = {}

    def nd(r):
        if r not in cache:
            ps = [min(1.0, v) for v in asymptotic_outages(cfg, link, chan, r)]
            cache[r] = (r * (1.0 - ps[-1]), 1.0 + sum(ps[:-1]))
        return cache[r]

    lam = 0.0
    lambdas = [lam]
    evals = 0
    for it in range(1, max_iter + 1):
        r, _, n = grid_then_golden(lambda x: nd(x)[0] - lam * nd(x)[1], lo, cap)
        evals += n
        num, den = nd(r)
        new = num / den
        lambdas.append(new)
        if abs(new - lam) <= tol:
            return RateResult(rate=r, ltat=new, outage=p_final(r), method=Method.ASYMPTOTIC.value,
                              iterations=it, evaluations=evals, lambdas=tuple(lambdas),
                              rate_cap=cap)
        lam = new
    raise ConvergenceError(f"Dinkelbach did not converge in {max_iter} iterations")


def optimal_rate_numeric(p: RateProblem, outage_fn: Callable[[int, np.ndarray], np.ndarray],
                         points: int = 2001, method: str = "numeric") -> RateResult:
    """Grid-plus-golden maximization of LTAT for an arbitrary outage model.

    ``outage_fn(k, rates)`` returns the outage after ``k`` rounds for an
    array of rates.  Feasibility ``p_K(R) <= epsilon`` is checked pointwise,
    so the model need not be monotone in ``R``.
    """
    cfg = p.cfg
    K = cfg.k_max
    lo, hi = p.rate_bounds
    grid = np.linspace(lo, hi, points)

    def curves(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return [np.clip(np.asarray(outage_fn(k, r), dtype=float), 0.0, 1.0) for k in range(1, K + 1)]

    def ltat_vec(r, ps):
        return r * (1.0 - ps[-1]) / (1.0 + sum(ps[:-1]))

    ps = curves(grid)
    feas = ps[-1] <= p.epsilon
    if not feas.any():
        raise InfeasibleError(f"no rate in [{lo}, {hi}] meets outage ceiling {p.epsilon}")
    vals = np.where(feas, ltat_vec(grid, ps), -np.inf)
    best = vals.max()
    i = int(np.flatnonzero(vals >= best - TIE_TOL)[0])
    evals = points

    def obj(r):
        q = curves(r)
        if q[-1][0] > p.epsilon:
            return -math.inf
        return float(ltat_vec(np.array([r]), q)[0])

    a, b = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    r, fr, n = golden_section_max(obj, a, b, tol=1e-9)
    evals += n
    if not (fr > vals[i] + TIE_TOL):
        r, fr = float(grid[i]), float(vals[i])
    return RateResult(rate=float(r), ltat=float(fr), outage=float(curves(r)[-1][0]),
                      method=method, evaluations=evals)


def single_round_outage(rates, snr_db: float, link: LinkParams, chan: ChannelParams):
    """Exact one-round outage ``F(sqrt((2^R - 1) / (rho |h_l|^2)))``."""
    rho = 10.0 ** (snr_db / 10.0)
    y = (np.exp2(np.asarray(rates, dtype=float)) - 1.0) / (rho * path_gain(link) ** 2)
    return composite_cdf(np.sqrt(y), chan)


def optimal_rate_surrogate(p: RateProblem, model, snr_db: float | None = None,
                           beam_waist: float = 3.0, link: LinkParams | None = None,
                           chan: ChannelParams | None = None, points: int = 2001) -> RateResult:
    """Optimal rate with outages from the trained surrogate.

    Rounds ``k >= 2`` query the surrogate with ``k_max = k``; round one is
    outside its training range and uses the exact single-round outage.
    """
    from .surrogate import predict_outage

    snr_db = p.cfg.snr_ref_db if snr_db is None else snr_db
    link = link or LinkParams()
    chan = dataclasses.replace(chan or ChannelParams(), beam_waist_m=beam_waist)

    def outage_fn(k, rates):
        if k == 1:
            return single_round_outage(rates, snr_db, link, chan)
        x = np.column_stack([np.full(rates.size, snr_db), rates, np.full(rates.size, float(k)),
                             np.full(rates.size, beam_waist)])
        return predict_outage(model, x)

    return optimal_rate_numeric(p, outage_fn, points, Method.SURROGATE.value)


def brute_force_rate(p: RateProblem, link, chan, points: int = 2000):
    """Exhaustive grid scan of the asymptotic objective; returns ``(rate, ltat, spacing)``."""
    lo, hi = p.rate_bounds
    grid = np.linspace(lo, hi, points)
    best = (-math.inf, None)
    for r in grid:
        ps = asymptotic_outages(p.cfg, link, chan, float(r))
        if ps[-1] > p.epsilon:
            continue
        v = _ltat_from(float(r), ps)
        if v > best[0] + TIE_TOL:
            best = (v, float(r))
    if best[1] is None:
        raise InfeasibleError("no grid rate meets the outage ceiling")
    return best[1], best[0], (hi - lo) / (points - 1)
