import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from thzharq.channel import ChannelParams, LinkParams
from thzharq.errors import ConfigError
from thzharq.multihop import (
    BlockageParams,
    HopTopology,
    average_rounds_multihop,
    compositions,
    hop_outage_table,
    ltat,
    ltat_blockage_limit,
    ltat_multihop,
    multihop_outage_curve,
    non_blocking_prob,
    outage_multihop,
    outage_multihop_first_failure,
    outage_multihop_from_table,
    outage_single_hop_blockage,
)
from thzharq.outage import HarqConfig, outage_exact_ir

LINK = LinkParams()


@st.composite
def outage_tables(draw):
    hops = draw(st.integers(1, 3))
    k = draw(st.integers(hops, hops + 4))
    rows = []
    for _ in range(hops):
        vals = draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k))
        rows.append([1.0] + sorted(vals, reverse=True))
    p_n = draw(st.lists(st.floats(0.0, 1.0), min_size=hops, max_size=hops))
    return np.array(rows), np.array(p_n), k


def test_non_blocking_probability():
    b = BlockageParams(density_per_m2=0.01)
    assert b.beta == pytest.approx(2 * 0.01 * 0.2 * 0.7 / 8.0)
    assert non_blocking_prob(b, 10.0) == pytest.approx(math.exp(-b.beta * 10.0))
    assert non_blocking_prob(BlockageParams(), 100.0) == 1.0
    # two 10 m hops at density 0.01 block with probability about 0.007
    assert 1 - HopTopology.split(20.0, 2, b).non_blocking().prod() == pytest.approx(0.007, abs=5e-4)


@pytest.mark.parametrize("kw", [{"density_per_m2": -1.0}, {"body_radius_m": 0.0},
                                {"body_height_m": 0.5}, {"bs_height_m": 1.5}])
def test_blockage_validation(kw):
    with pytest.raises(ConfigError):
        BlockageParams(**kw)


def test_topology_construction_and_round_trip():
    t = HopTopology.split(30.0, 3)
    assert t.distances_m == (10.0, 10.0, 10.0)
    assert [l.distance_m for l in t.hop_links(LINK)] == [10.0] * 3
    per_hop = HopTopology(hops=2, distances_m=(5.0, 15.0),
                          blockage=[{"density_per_m2": 0.0}, {"density_per_m2": 0.02}])
    assert per_hop.non_blocking()[0] == 1.0 and per_hop.non_blocking()[1] < 1.0
    for topo in (t, per_hop):
        assert HopTopology.from_dict(topo.to_dict()) == topo
    for kw in ({"hops": 0, "distances_m": ()}, {"hops": 2, "distances_m": (1.0,)},
               {"hops": 1, "distances_m": (-1.0,)}):
        with pytest.raises(ConfigError):
            HopTopology(**kw)


@given(st.integers(1, 9), st.integers(1, 5))
def test_compositions_count_and_sum(total, parts):
    comps = list(compositions(total, parts))
    assert len(comps) == (special.comb(total - 1, parts - 1, exact=True) if total >= parts else 0)
    assert all(sum(c) == total and min(c) >= 1 for c in comps)
    assert len(set(comps)) == len(comps)


@given(outage_tables())
def test_first_failure_decomposition_equals_composition_sum(args):
    table, p_n, k = args
    a = outage_multihop_from_table(table, p_n, k)
    b = outage_multihop_first_failure(table, p_n, k)
    assert a == pytest.approx(b, abs=1e-12)
    assert 0.0 <= a <= 1.0


@given(outage_tables())
def test_outage_bounded_below_by_blockage(args):
    table, p_n, k = args
    assert outage_multihop_from_table(table, p_n, k) >= 1.0 - p_n.prod() - 1e-12


def test_one_hop_reduces_to_single_hop_with_blockage():
    b = BlockageParams(density_per_m2=0.03)
    cfg = HarqConfig(k_max=3, snr_ref_db=15.0)
    chan = ChannelParams()
    topo = HopTopology(hops=1, distances_m=(20.0,), blockage=b)
    assert outage_multihop(topo, cfg, LINK, chan) == pytest.approx(
        outage_single_hop_blockage(cfg, LINK, chan, b), rel=1e-10)
    p = outage_exact_ir(cfg, LINK, chan)
    pn = non_blocking_prob(b, 20.0)
    assert outage_single_hop_blockage(cfg, LINK, chan, b) == pytest.approx(1 - pn + pn * p)


def test_two_hops_with_deterministic_outages():
    # hop outages 0.5 then 0 after round 2: each hop needs 1 or 2 rounds with prob 1/2
    table = np.array([[1.0, 0.5, 0.0, 0.0], [1.0, 0.5, 0.0, 0.0]])
    # K=3: fail iff both hops need 2 rounds
    assert outage_multihop_from_table(table, np.ones(2), 3) == pytest.approx(0.25)
    assert outage_multihop_from_table(table, np.ones(2), 2) == pytest.approx(0.75)
    assert outage_multihop_from_table(table, np.ones(2), 4) == pytest.approx(0.0)


def test_hop_table_caches_identical_hops():
    calls = []

    def fn(cfg, link, chan):
        calls.append(cfg.k_max)
        return 0.5 ** cfg.k_max

    topo = HopTopology.split(20.0, 3)
    table = hop_outage_table(HarqConfig(k_max=3), topo.hop_links(LINK), [ChannelParams()] * 3, fn)
    assert calls == [1, 2, 3]
    np.testing.assert_allclose(table[:, 0], 1.0)
    np.testing.assert_allclose(table[2], [1.0, 0.5, 0.25, 0.125])


def test_curve_lengths_and_budget_checks():
    topo = HopTopology.split(20.0, 2)
    cfg = HarqConfig(k_max=4, snr_ref_db=20.0)
    curve = multihop_outage_curve(topo, cfg, LINK, ChannelParams())
    assert curve.shape == (3,) and np.all(np.diff(curve) <= 1e-12)
    with pytest.raises(ConfigError):
        outage_multihop(HopTopology.split(20.0, 3), HarqConfig(k_max=2), LINK, ChannelParams())
    with pytest.raises(ConfigError):
        outage_multihop_from_table(np.ones((1, 40)), np.ones(1), 39)


@given(st.floats(0.1, 5.0), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6))
def test_ltat_bounded_by_rate(rate, vals):
    p = sorted(vals, reverse=True)
    cfg = HarqConfig(k_max=len(p), rate_bps_hz=rate)
    v = ltat(cfg, p)
    assert 0.0 <= v <= rate + 1e-12
    assert ltat(cfg, [0.0] * len(p)) == pytest.approx(rate)


def test_ltat_inputs_validated():
    cfg = HarqConfig(k_max=2)
    for bad in ([0.1, 0.2], [0.5], [1.5, 0.2], []):
        with pytest.raises(ConfigError):
            ltat(cfg, bad)


def test_multihop_ltat_limits():
    b = BlockageParams(density_per_m2=0.01)
    topo = HopTopology.split(20.0, 2, b)
    cfg = HarqConfig(k_max=3, rate_bps_hz=2.0)
    assert ltat_multihop(HopTopology.split(20.0, 2), cfg, [0.0, 0.0]) == pytest.approx(1.0)
    assert average_rounds_multihop(2, [0.3, 0.1]) == pytest.approx(2.3)
    # all hops decode at once: only blockage matters
    pn = topo.non_blocking().prod()
    p = [1 - pn, 1 - pn]
    assert ltat_multihop(topo, cfg, p) == pytest.approx(ltat_blockage_limit(topo, cfg), rel=1e-12)
    with pytest.raises(ConfigError):
        ltat_multihop(topo, cfg, [0.1])
