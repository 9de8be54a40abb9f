"""Acceptance criteria, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line, repeated in the
terminal summary.  Three criteria cannot be met as stated; they are asserted
literally and marked ``xfail(strict=True)`` with the reason.
"""

import dataclasses
import math
import time
import warnings

import numpy as np
import pytest
from scipy import optimize

from thzharq.channel import ChannelParams, LinkParams
from thzharq.montecarlo import outage_indicators, simulate_outage
from thzharq.multihop import (
    BlockageParams,
    HopTopology,
    hop_outage_table,
    ltat,
    ltat_blockage_limit,
    ltat_multihop,
    multihop_outage_curve,
    outage_multihop,
    outage_multihop_first_failure,
    outage_multihop_from_table,
)
from thzharq.optimizer import (
    RateProblem,
    brute_force_rate,
    optimal_rate_asymptotic,
    optimal_rate_surrogate,
)
from thzharq.outage import HarqConfig, Scheme, diversity_order, outage_asymptotic, outage_exact_ir
from thzharq.surrogate import TrainConfig, generate_dataset, train

from oracles import closed_form_single_round, nested_quadrature_outage

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

LINK = LinkParams()
PRESETS = {"w=1": ChannelParams(beam_waist_m=1.0), "w=3": ChannelParams(beam_waist_m=3.0)}


def _quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*args, **kw)


def _snr_for_single_round_outage(target, chan):
    f = lambda s: math.log(closed_form_single_round(HarqConfig(k_max=1, snr_ref_db=s), LINK, chan)) \
        - math.log(target)
    return optimize.brentq(f, -40.0, 200.0, xtol=1e-8)


def _exact_ltat(cfg, link, chan):
    ps = [outage_exact_ir(cfg.truncated(k), link, chan) for k in range(1, cfg.k_max + 1)]
    return ltat(cfg, np.minimum.accumulate(ps))


def test_criterion_1_single_round_exactness(acceptance):
    t0 = time.perf_counter()
    worst = {}
    for name, chan in PRESETS.items():
        lo = _snr_for_single_round_outage(0.9, chan)
        hi = _snr_for_single_round_outage(1e-6, chan)
        errs = []
        for snr in np.linspace(lo, hi, 20):
            cfg = HarqConfig(k_max=1, snr_ref_db=float(snr))
            errs.append(abs(_quiet(outage_exact_ir, cfg, LINK, chan)
                            - closed_form_single_round(cfg, LINK, chan)))
        worst[name] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and elapsed < 30.0
    acceptance(1, ok, f"max abs error {max(worst.values()):.2e} (w=1 {worst['w=1']:.1e}, "
                      f"w=3 {worst['w=3']:.1e}), {elapsed:.1f} s")
    assert ok


CRITERION_2_POINTS = [
    ("w=1", 2, 0.0, 2.0, None), ("w=1", 2, 20.0, 2.0, None), ("w=1", 2, 40.0, 1.0, None),
    ("w=1", 3, 10.0, 2.0, None), ("w=1", 3, 24.0, 2.0, (0.5, 1.0, 2.0)),
    ("w=3", 2, 10.0, 2.0, None), ("w=3", 2, 30.0, 3.0, None), ("w=3", 2, 15.0, 1.5, (2.0, 0.5)),
    ("w=3", 3, 10.0, 2.0, None), ("w=3", 3, 24.0, 1.0, None),
]


def test_criterion_2_nested_quadrature_oracle(acceptance):
    t0 = time.perf_counter()
    worst, compared = 0.0, 0
    for name, k, snr, rate, q in CRITERION_2_POINTS:
        cfg = HarqConfig(k_max=k, snr_ref_db=snr, rate_bps_hz=rate, power_factors=q)
        exact = _quiet(outage_exact_ir, cfg, LINK, PRESETS[name])
        ref = nested_quadrature_outage(cfg, LINK, PRESETS[name], epsrel=1e-7)
        if ref > 1e-6:
            compared += 1
            worst = max(worst, abs(exact / ref - 1.0))
    elapsed = time.perf_counter() - t0
    ok = compared >= 10 and worst <= 1e-4 and elapsed < 300.0
    acceptance(2, ok, f"{compared} points compared, max rel error {worst:.2e}, {elapsed:.0f} s")
    assert ok


def test_criterion_3_monte_carlo_agreement(acceptance):
    t0 = time.perf_counter()
    # grids stay inside 0 < outage < 1, where the binomial standard error is positive
    grids = {"w=1": (0.0, 10.0, 20.0, 30.0, 40.0), "w=3": (5.0, 10.0, 15.0, 20.0, 25.0)}
    trials = 1_000_000
    worst, n = 0.0, 0
    for name, snrs in grids.items():
        for k in (2, 3, 4):
            for i, snr in enumerate(snrs):
                cfg = HarqConfig(k_max=k, snr_ref_db=snr)
                exact = _quiet(outage_exact_ir, cfg, LINK, PRESETS[name])
                sim = simulate_outage(cfg, LINK, PRESETS[name], trials, seed=1000 + 10 * k + i)
                # standard error under the exact value, or the empirical one if larger
                se = max(sim.std_error, math.sqrt(exact * (1.0 - exact) / trials))
                worst = max(worst, abs(sim.estimate - exact) / se)
                n += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 3.5 and elapsed < 120.0
    acceptance(3, ok, f"{n} comparisons at 1e6 trials, max |z| {worst:.2f}, {elapsed:.0f} s")
    assert ok


def _asymptotic_ratios(chan):
    out = []
    for k in (1, 2, 3):
        for snr in np.arange(0.0, 84.0, 4.0):
            cfg = HarqConfig(k_max=k, snr_ref_db=float(snr))
            exact = _quiet(outage_exact_ir, cfg, LINK, chan)
            if 1e-15 < exact < 1e-4:
                out.append((k, float(snr), outage_asymptotic(cfg, LINK, chan).outage / exact))
    return out


@pytest.mark.xfail(strict=True, reason=(
    "fading-limited preset (alpha*mu < phi): the asymptote's relative error decays like "
    "rho^-((phi - alpha*mu)/2) = rho^-0.27, so the ratio is still about 1.3 where the "
    "exact outage first drops below 1e-4"))
def test_criterion_4_asymptotic_convergence(acceptance):
    summary, ok = [], True
    for name, chan in PRESETS.items():
        ratios = _asymptotic_ratios(chan)
        bad = [r for r in ratios if not 0.9 <= r[2] <= 1.1]
        ok &= not bad
        lo, hi = min(r[2] for r in ratios), max(r[2] for r in ratios)
        summary.append(f"{name}: ratio {lo:.4f}..{hi:.4f} over {len(ratios)} points"
                       + (f", {len(bad)} outside [0.9, 1.1]" if bad else ""))
    acceptance(4, ok, "; ".join(summary))
    assert ok


def test_criterion_4_pointing_limited_regime_holds():
    # the part of criterion 4 that is attainable: w=1 (alpha*mu > phi)
    ratios = _asymptotic_ratios(PRESETS["w=1"])
    assert ratios and all(0.9 <= r[2] <= 1.1 for r in ratios)


def _fitted_slope(fn, snrs):
    p = [fn(s) for s in snrs]
    return float(np.polyfit(np.asarray(snrs) / 10.0, np.log10(p), 1)[0])


def test_criterion_5_diversity_slope(acceptance):
    snrs = np.linspace(40.0, 60.0, 5)
    worst, parts = 0.0, []
    topo = HopTopology.split(LINK.distance_m, 2, BlockageParams(density_per_m2=0.0))
    for name, chan in PRESETS.items():
        for k in (2, 3):
            s = _fitted_slope(lambda x: outage_exact_ir(HarqConfig(k_max=k, snr_ref_db=x), LINK, chan), snrs)
            dev = abs(s / -diversity_order(chan, k) - 1.0)
            worst = max(worst, dev)
            parts.append(f"{name} K={k} {dev:.1%}")
        s = _fitted_slope(lambda x: outage_multihop(topo, HarqConfig(k_max=3, snr_ref_db=x), LINK, chan), snrs)
        dev = abs(s / -diversity_order(chan, 3, hops=2) - 1.0)
        worst = max(worst, dev)
        parts.append(f"{name} L=2,K=3 {dev:.1%}")
    ok = worst <= 0.05
    acceptance(5, ok, "slope deviation " + ", ".join(parts))
    assert ok


def test_criterion_6_scheme_ordering(acceptance):
    violations, checked = 0, 0
    for seed in range(20):
        for k, snr in ((2, 10.0), (3, 20.0), (4, 5.0)):
            cfg = HarqConfig(k_max=k, snr_ref_db=snr)
            counts = {s: 0 for s in Scheme}
            for flags in outage_indicators(cfg, LINK, PRESETS["w=1"], 50_000, seed):
                ir, cc, t1 = flags[Scheme.IR], flags[Scheme.CC], flags[Scheme.TYPE_I]
                violations += int(np.any(ir & ~cc)) + int(np.any(cc & ~t1))
                for s in Scheme:
                    counts[s] += int(flags[s][:, -1].sum())
            checked += 1
            violations += int(not counts[Scheme.TYPE_I] >= counts[Scheme.CC] >= counts[Scheme.IR])
    ok = violations == 0
    acceptance(6, ok, f"{checked} seed/config runs, {violations} ordering violations")
    assert ok


def _multihop_limit_gaps(chan):
    cfg = HarqConfig(k_max=3, snr_ref_db=60.0)
    topo = HopTopology.split(LINK.distance_m, 2, BlockageParams(density_per_m2=0.01))
    floor = 1.0 - float(np.prod(topo.non_blocking()))
    curve = multihop_outage_curve(topo, cfg, LINK, chan)
    gap_outage = abs(curve[-1] - floor)
    gap_ltat = abs(ltat_multihop(topo, cfg, curve) - ltat_blockage_limit(topo, cfg))
    worst_paths = 0.0
    for hops, k in ((2, 3), (2, 5), (3, 5)):
        t = HopTopology.split(LINK.distance_m, hops)
        for snr in (10.0, 30.0):
            c = HarqConfig(k_max=k, snr_ref_db=snr)
            table = hop_outage_table(c, t.hop_links(LINK), [chan] * hops)
            p_n = t.non_blocking()
            worst_paths = max(worst_paths, abs(outage_multihop_from_table(table, p_n, k)
                                               - outage_multihop_first_failure(table, p_n, k)))
    return gap_outage, gap_ltat, worst_paths


def _limits_hold(gaps):
    return gaps[0] <= 1e-3 and gaps[1] <= 1e-3 and gaps[2] <= 1e-10


@pytest.mark.xfail(strict=True, reason=(
    "pointing-limited preset w=1: at 60 dB each 10 m hop still fails its first round with "
    "probability about 0.005, so the LTAT sits 5e-3 below the blockage limit; the 1e-3 band "
    "is reached near 78 dB"))
def test_criterion_7_multihop_limits(acceptance):
    parts, ok = [], True
    for name, chan in PRESETS.items():
        g = _multihop_limit_gaps(chan)
        ok &= _limits_hold(g)
        parts.append(f"{name}: outage floor gap {g[0]:.1e}, LTAT limit gap {g[1]:.1e}, "
                     f"decomposition gap {g[2]:.1e}")
    acceptance(7, ok, "; ".join(parts))
    assert ok


def test_criterion_7_fading_limited_regime_holds():
    # w=3 meets every part of criterion 7; w=1 meets the outage and decomposition parts
    assert _limits_hold(_multihop_limit_gaps(PRESETS["w=3"]))
    g = _multihop_limit_gaps(PRESETS["w=1"])
    assert g[0] <= 1e-3 and g[2] <= 1e-10


@pytest.fixture(scope="module")
def surrogate_run():
    t0 = time.perf_counter()
    ds = generate_dataset(12_500, upsilon=1e-4, sim_trials=100_000, seed=2024)
    t_gen = time.perf_counter() - t0
    model = train(ds, TrainConfig(seed=2024))
    return ds, model, t_gen, time.perf_counter() - t0


def test_criterion_8_surrogate_quality(acceptance, surrogate_run):
    ds, model, t_gen, elapsed = surrogate_run
    mse = model.metadata["mse"]
    spread = max(mse.values()) / min(mse.values())
    ok = mse["test"] <= 0.05 and spread <= 2.0 and elapsed < 900.0
    acceptance(8, ok, f"MSE train {mse['train']:.4f} val {mse['val']:.4f} test {mse['test']:.4f} "
                      f"(max/min {spread:.2f}), {len(ds)} samples "
                      f"({int(np.sum(ds.source == 'asy'))} asymptotic), "
                      f"generation {t_gen:.0f} s, total {elapsed:.0f} s")
    assert ok


def test_criterion_9_rate_optimisation(acceptance, surrogate_run):
    _, model, _, _ = surrogate_run
    chan = PRESETS["w=3"]
    cfg = HarqConfig(k_max=4, snr_ref_db=20.0)
    problems = []
    asym_ltats, max_iter, lam_ok, bf_ok, dominance, worst_margin = [], 0, True, True, True, math.inf
    for eps in np.geomspace(1e-4, 0.3, 10):
        prob = RateProblem(cfg, float(eps))
        a = optimal_rate_asymptotic(prob, LINK, chan)
        max_iter = max(max_iter, a.iterations)
        lam_ok &= bool(np.all(np.diff(a.lambdas) >= -1e-12))
        r_bf, l_bf, spacing = brute_force_rate(prob, LINK, chan, points=2000)
        bf_ok &= abs(a.rate - r_bf) <= spacing and a.ltat >= l_bf - 1e-9
        asym_ltats.append(a.ltat)
        s = optimal_rate_surrogate(RateProblem(cfg, float(eps), method="surrogate"), model,
                                   20.0, 3.0, LINK, chan)
        # both the model's own value and the exact LTAT at the chosen rates
        true_a = _quiet(_exact_ltat, cfg.replace(rate_bps_hz=a.rate), LINK, chan)
        true_s = _quiet(_exact_ltat, cfg.replace(rate_bps_hz=s.rate), LINK, chan)
        margin = min(s.ltat - a.ltat, true_s - true_a)
        worst_margin = min(worst_margin, margin)
        dominance &= margin >= -1e-6
        problems.append((eps, a.ltat, s.ltat))
    monotone = all(b >= a - 1e-9 for a, b in zip(asym_ltats, asym_ltats[1:]))
    ok = max_iter <= 50 and lam_ok and bf_ok and monotone and dominance
    acceptance(9, ok, f"Dinkelbach <= {max_iter} iterations, lambda monotone {lam_ok}, "
                      f"brute-force agreement {bf_ok}, LTAT non-decreasing in eps {monotone}, "
                      f"surrogate minus asymptotic LTAT >= {worst_margin:.3f}")
    assert ok


TABLE_II = {0.0: 0.5792, 24.0: 0.0020, 48.0: 3.06e-6}


def _ir3(snr, link, chan):
    return _quiet(outage_exact_ir, HarqConfig(k_max=3, rate_bps_hz=2.0, snr_ref_db=snr), link, chan)


def _two_sig(a, b):
    return float(f"{a:.2g}") == float(f"{b:.2g}")


@pytest.mark.xfail(strict=True, reason=(
    "conditional criterion: absorption only lowers the gain, and with kappa = 0 the outage at "
    "0 dB is already 0.85 (w=1) or 1.0 (w=3) > 0.5792, so no kappa >= 0 reproduces the anchor"))
def test_criterion_10_table_anchor_kappa(acceptance):
    found = {}
    for name, chan in PRESETS.items():
        p0 = _ir3(0.0, LINK, chan)
        if p0 <= TABLE_II[0.0]:
            f = lambda k: _ir3(0.0, dataclasses.replace(LINK, absorption_coeff_per_m=k), chan) - TABLE_II[0.0]
            kappa = optimize.brentq(f, 0.0, 1.0, xtol=1e-10)
            link = dataclasses.replace(LINK, absorption_coeff_per_m=kappa)
            found[name] = all(_two_sig(_ir3(s, link, chan), v) for s, v in TABLE_II.items() if s > 0)
        else:
            found[name] = None
    ok = any(found.values())
    detail = ", ".join(f"{n}: " + ("no kappa >= 0 (outage at kappa=0 exceeds 0.5792)" if v is None
                                   else ("match" if v else "mismatch")) for n, v in found.items())
    acceptance(10, ok, f"(conditional) {detail}")
    assert ok


def test_criterion_10_gain_calibrated_variant(acceptance):
    # same calibration through the antenna gain, which can raise the link gain
    chan = PRESETS["w=1"]

    def link_for(extra_db):
        return dataclasses.replace(LINK, gain_tx_dbi=LINK.gain_tx_dbi + extra_db / 2,
                                   gain_rx_dbi=LINK.gain_rx_dbi + extra_db / 2)

    extra = optimize.brentq(lambda g: _ir3(0.0, link_for(g), chan) - TABLE_II[0.0], 0.0, 20.0, xtol=1e-8)
    link = link_for(extra)
    vals = {s: _ir3(s, link, chan) for s in TABLE_II}
    ok = all(_two_sig(vals[s], v) for s, v in TABLE_II.items() if s > 0)
    acceptance("10 (variant: +%.2f dB antenna gain, w=1)" % extra, ok,
               ", ".join(f"{s:g} dB {vals[s]:.3g} vs {v:g}" for s, v in TABLE_II.items()))
    assert ok


def test_criterion_11_runtime(acceptance):
    worst = 0.0
    for chan in PRESETS.values():
        for snr in (0.0, 20.0, 40.0):
            t0 = time.perf_counter()
            _quiet(outage_exact_ir, HarqConfig(k_max=4, snr_ref_db=snr), LINK, chan)
            worst = max(worst, time.perf_counter() - t0)
    ok = worst <= 5.0
    acceptance(11, ok, f"slowest K=4 evaluation {worst:.2f} s")
    assert ok
