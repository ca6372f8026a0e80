import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecvideo.config import ConfigError, load_config
from mecvideo.scenario import (
    Topology,
    build_hetnet,
    check_path,
    dbm_to_watt,
    enumerate_paths,
    pathloss_db,
    simple_topology,
    spectral_efficiency,
    users_reachable_from_origin,
)

# 34 + 40 log10(250), evaluated with mpmath at 30 digits
PL_250 = 129.9176003468815


def test_pathloss_reference_points():
    assert pathloss_db(1.0) == 34.0
    assert pathloss_db(100.0) == 114.0
    assert pathloss_db(250.0) == pytest.approx(PL_250, abs=1e-12)


def test_pathloss_rejects_short_distance():
    with pytest.raises(ValueError):
        pathloss_db(0.5)


@given(st.floats(1.0, 1e4), st.floats(1.0, 1e4))
def test_pathloss_monotone(a, b):
    lo, hi = sorted((a, b))
    assert pathloss_db(lo) <= pathloss_db(hi)


def test_spectral_efficiency_trivial_ratios():
    assert spectral_efficiency(1.0, 1.0, 1.0) == 1.0
    assert spectral_efficiency(3.0, 1.0, 1.0) == 2.0


def test_spectral_efficiency_mbs_at_100m():
    tx_psd = float(dbm_to_watt(49.0)) / 20e6
    noise = float(dbm_to_watt(-174.0))
    gain = 10 ** (-pathloss_db(100.0) / 10)
    # hand chain: SNR 35.9897 dB -> log2(1 + 10^3.59897)
    assert spectral_efficiency(gain, tx_psd, noise) == pytest.approx(11.95588277, abs=1e-6)


def test_spectral_efficiency_input_checks():
    with pytest.raises(ValueError):
        spectral_efficiency(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        spectral_efficiency(1.0, 0.0, 1.0)


def test_default_hetnet_shape():
    topo = build_hetnet(seed=7)
    kinds = [n.kind for n in topo.nodes]
    assert kinds.count("gateway") == 1
    assert kinds.count("macro-bs") == 1
    assert kinds.count("small-bs") == 15
    assert kinds.count("user") == 15
    caps = {(l.source, l.dest): l.wired_capacity for l in topo.wired_links}
    assert caps["gw0", "mbs0"] == 100e6
    sbs_caps = {c for (a, b), c in caps.items() if b.startswith("sbs")}
    assert sbs_caps == {50e6}
    assert users_reachable_from_origin(topo)
    for u in topo.users:
        assert len([l for l in topo.wireless_links if l.dest == u.id]) == 3


def test_degenerate_star():
    cfg = load_config(counts={"sbs": 0, "users": 1})
    topo = build_hetnet(cfg, seed=1)
    assert len(topo.wireless_links) == 1
    assert topo.wireless_links[0].source == "mbs0"


def test_hetnet_is_deterministic():
    a = json.dumps(build_hetnet(seed=3).to_dict(), sort_keys=True)
    b = json.dumps(build_hetnet(seed=3).to_dict(), sort_keys=True)
    assert a == b
    assert a != json.dumps(build_hetnet(seed=4).to_dict(), sort_keys=True)


def test_topology_round_trip():
    topo = build_hetnet(seed=5)
    again = Topology.from_dict(json.loads(json.dumps(topo.to_dict())))
    assert again.to_dict() == topo.to_dict()


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        load_config(counts={"users": 0})
    with pytest.raises(ConfigError):
        load_config(bandwidth_hz=-1)


def test_chain_single_path():
    topo = simple_topology([("origin", "gw0", 1e9), ("gw0", "mbs0", 1e8)],
                           [("mbs0", "u0", 2.0)], 1e6)
    paths = enumerate_paths(topo, "u0", ["gw0"], k_max=3)
    assert len(paths) == 1
    assert len(paths[0].link_sequence) == 2
    check_path(topo, paths[0])


def test_one_path_per_source():
    topo = simple_topology(
        [("origin", "gw0", 1e9), ("gw0", "mbs0", 1e8), ("mbs0", "sbs0", 1e8)],
        [("mbs0", "u0", 2.0), ("sbs0", "u0", 3.0)], 1e6)
    paths = enumerate_paths(topo, "u0", ["mbs0", "sbs0"], k_max=1)
    assert [p.source_node for p in paths] == ["mbs0", "sbs0"]
    assert paths[0].link_sequence == (3,)
    assert paths[1].link_sequence == (4,)


def test_diamond_ties_broken_by_link_ids():
    topo = simple_topology(
        [("origin", "gw0", 1e9), ("gw0", "mbs0", 1e8), ("gw0", "mbs1", 1e8),
         ("mbs0", "sbs0", 1e8), ("mbs1", "sbs0", 1e8)],
        [("sbs0", "u0", 2.0)], 1e6)
    paths = enumerate_paths(topo, "u0", ["gw0"], k_max=2)
    assert [p.link_sequence for p in paths] == [(1, 3, 5), (2, 4, 5)]
    for p in paths:
        check_path(topo, p)


def test_unreachable_source_reported():
    topo = simple_topology([("origin", "gw0", 1e9), ("gw0", "mbs0", 1e8)],
                           [("mbs0", "u0", 2.0), ("sbs0", "u1", 2.0)], 1e6)
    diag = []
    assert enumerate_paths(topo, "u1", ["mbs0"], diagnostics=diag) == []
    assert diag == [("u1", "mbs0")]


def test_paths_do_not_cross_users():
    topo = build_hetnet(seed=2)
    for u in topo.users[:5]:
        for p in enumerate_paths(topo, u.id, ["origin", "mbs0"], k_max=3):
            check_path(topo, p)
            inner = [topo.links[l].dest for l in p.link_sequence[:-1]]
            assert all(topo.node(n).kind != "user" for n in inner)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_paths_valid_and_sorted(seed):
    topo = build_hetnet(load_config(counts={"sbs": 4, "users": 3}), seed=seed)
    for u in topo.users:
        paths = enumerate_paths(topo, u.id, ["origin"], k_max=3)
        assert paths
        keys = [(len(p.link_sequence), p.link_sequence) for p in paths]
        assert keys == sorted(keys)
        for p in paths:
            check_path(topo, p)


def test_wireless_capacity_is_w_gamma():
    topo = build_hetnet(seed=0)
    link = topo.wireless_links[0]
    assert topo.link_rate_capacity(link.id) == pytest.approx(
        topo.spectrum_bandwidth * link.spectral_efficiency)
    wired = topo.wired_links[0]
    assert topo.link_rate_capacity(wired.id) == wired.wired_capacity
    assert math.isfinite(link.spectral_efficiency)
    assert np.all([l.spectral_efficiency > 0 for l in topo.wireless_links])
