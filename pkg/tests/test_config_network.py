import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slicesim.config import ConfigError, SimConfig, default_config_text, load_config
from slicesim.network import (
    EnumerationCapExceeded, Network, SliceId, check_one_hot, enumerate_associations,
    grid_positions, matrix_to_vector, vector_to_matrix,
)


# ------------------------------------------------------------------ config

def test_empty_document_gives_defaults():
    for src in (None, "", "# nothing here\n"):
        cfg = load_config(src)
        net = Network.from_config(cfg)
        assert net.M == 4
        assert net.slice_users(SliceId.E).size == 5
        assert net.slice_users(SliceId.U).size == 5
        assert net.budgets[SliceId.E].prb_count == 32
        assert net.budgets[SliceId.U].prb_count == 15


def test_table_defaults():
    cfg = SimConfig()
    assert cfg.slices.eMBB.r_min_mbps == 16.0 and cfg.slices.URLLC.r_min_mbps == 3.8
    assert cfg.slices.eMBB.d_max_ms == 10.0 and cfg.slices.URLLC.d_max_ms == 2.0
    assert cfg.slices.eMBB.packet_size_bytes == 1024 and cfg.slices.URLLC.packet_size_bytes == 480
    assert cfg.channel.noise_dbm == -146.424
    assert cfg.channel.pathloss_exponent == 3.5
    assert cfg.agent.gamma == 0.995
    assert cfg.run.iterations * cfg.run.tti_per_step == 30_000


def test_shipped_yaml_equals_model_defaults():
    assert load_config(default_config_text()) == SimConfig()


def test_budget_over_total_bandwidth_rejected():
    with pytest.raises(ConfigError, match="prb_count"):
        load_config("slices:\n  eMBB:\n    prb_count: 60\n")


def test_single_override_changes_only_that_field():
    cfg = load_config("slices:\n  eMBB:\n    r_min_mbps: 20\n")
    base = SimConfig().model_dump()
    got = cfg.model_dump()
    assert got["slices"]["eMBB"]["r_min_mbps"] == 20
    got["slices"]["eMBB"]["r_min_mbps"] = base["slices"]["eMBB"]["r_min_mbps"]
    assert got == base


@pytest.mark.parametrize("doc, path", [
    ("network:\n  oru_cuont: 4\n", "network.oru_cuont"),
    ("slices:\n  URLLC:\n    d_max_ms: -1\n", "slices.URLLC.d_max_ms"),
    ("schema_version: 7\n", "schema_version"),
    ("- a\n- b\n", "<root>"),
])
def test_config_errors_name_the_field(doc, path):
    with pytest.raises(ConfigError) as err:
        load_config(doc)
    assert path in str(err.value) or "schema_version" in str(err.value)


def test_load_from_path(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("run:\n  seed: 9\n")
    assert load_config(p).run.seed == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_digest_tracks_content():
    a = SimConfig()
    assert a.digest() == SimConfig().digest()
    assert a.digest() != a.with_overrides(run={"seed": 1}).digest()


# ---------------------------------------------------------------- network

def test_default_grid_layout():
    assert grid_positions(4, 50.0, (100.0, 100.0)) == [(25, 25), (75, 25), (25, 75), (75, 75)]


def test_enumeration_examples():
    assert enumerate_associations(2, 2).tolist() == [[1, 1], [1, 2], [2, 1], [2, 2]]
    assert enumerate_associations(1, 3).tolist() == [[1], [2], [3]]
    v = enumerate_associations(5, 4)
    assert v.shape == (1024, 5)
    assert len({tuple(r) for r in v.tolist()}) == 1024


def test_enumeration_matches_itertools_order():
    got = [tuple(r) for r in enumerate_associations(3, 3).tolist()]
    assert got == list(itertools.product((1, 2, 3), repeat=3))


def test_enumeration_cap():
    with pytest.raises(EnumerationCapExceeded):
        enumerate_associations(8, 4, cap=50_000)  # 65536 candidates


def test_vector_matrix_examples():
    assert vector_to_matrix([1, 2], 2).tolist() == [[1, 0], [0, 1]]
    assert vector_to_matrix([2, 2], 2).tolist() == [[0, 1], [0, 1]]
    with pytest.raises(ValueError):
        vector_to_matrix([0, 1], 2)
    with pytest.raises(ValueError):
        vector_to_matrix([3], 2)


@pytest.mark.parametrize("K, M", [(k, m) for k in range(1, 5) for m in range(1, 4)])
def test_round_trip_every_vector(K, M):
    for v in enumerate_associations(K, M):
        A = vector_to_matrix(v, M)
        check_one_hot(A)
        assert np.array_equal(matrix_to_vector(A), v)
        assert np.array_equal(vector_to_matrix(matrix_to_vector(A), M), A)


def test_one_hot_violations():
    for bad in ([[1, 1]], [[0, 0]], [[2, 0]], [1, 0]):
        with pytest.raises(ValueError):
            check_one_hot(bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 8), st.integers(0, 8))
def test_slice_sets_partition_users(ke, ku):
    if ke + ku == 0:
        return
    cfg = SimConfig().with_overrides(slices={"eMBB": {**SimConfig().slices.eMBB.model_dump(), "users": ke},
                                             "URLLC": {**SimConfig().slices.URLLC.model_dump(), "users": ku}})
    net = Network.from_config(cfg)
    e, u = net.slice_users(SliceId.E), net.slice_users(SliceId.U)
    assert e.size + u.size == net.K == ke + ku
    assert not set(e) & set(u)
    assert [x.id for x in net.users] == list(range(1, net.K + 1))
