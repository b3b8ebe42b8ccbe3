import itertools
import math

import pytest

from laserlab.distributions import SupportDistribution
from laserlab.laser_engine import (
    EngineConfig,
    LaserEngine,
    SchemaVersionError,
    ValueBound,
    analyze_cw,
    certify_table,
    class_is_realizable,
    classic_bound,
    decimal_str,
    merged_count,
    merged_value,
    refined_bound,
    schonhage_tau,
    table_from_json,
    table_to_json,
)
from laserlab.tensor_core import ClassKey, class_subtensor, matmul_shape

TOY = tuple(sorted(itertools.permutations((0, 1, 2))))
TOY_LV = {t: 0.0 for t in TOY}
EVEN_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def test_decimal_str_roundtrips():
    for x in (0.0, 1.5, math.pi, -2.718281828459045e-7, 1e300):
        assert float(decimal_str(x)) == x


def test_schonhage_strassen_anchor():
    tau = schonhage_tau([(2, 2, 2)], 7.0)
    assert abs(3 * tau - math.log2(7)) < 1e-9


def test_schonhage_multiple_shapes():
    # <3,1,1> + <1,1,3> from rank 5: the classic disjoint-sum example.
    tau = schonhage_tau([(3, 1, 1), (1, 1, 3)], 5.0)
    assert abs(2 * 3 ** tau - 5.0) < 1e-9


def test_schonhage_rejects_bad_rank():
    with pytest.raises(ValueError):
        schonhage_tau([(2, 2, 2)], 2.0)
    with pytest.raises(ValueError):
        schonhage_tau([(2, 2, 2)], 9.0)


def test_class_realizability_t2():
    for trip in itertools.product(range(5), repeat=3):
        if sum(trip) == 4:
            assert class_is_realizable(2, 2, *trip)
    assert not class_is_realizable(0, 1, 0, 1, 1)
    assert class_is_realizable(0, 1, 0, 0, 2)


def test_merged_count_known_values():
    assert merged_count(2, 2, 2, 2) == 6
    assert merged_count(2, 1, 1, 1) == 2
    assert merged_count(3, 1, 1, 1) == 3
    assert merged_count(2, 2, 3, 1) == 4


def test_merged_count_matches_variable_level_tensor():
    # The merged class (I, J, 0) of CW_q^t is <N,1,1> at variable level.
    for (q, t, i, j) in ((2, 2, 2, 2), (2, 2, 3, 1), (3, 2, 2, 2), (2, 2, 4, 0)):
        n = merged_count(q, t, i, j)
        shape = matmul_shape(class_subtensor(q, t, i, j, 0))
        assert shape is not None
        assert sorted(shape, reverse=True) == [n, 1, 1]


def test_merged_value_is_tau_log_n():
    assert math.isclose(merged_value(2, 2, 2, 2, 0.8), 0.8 * math.log(6), rel_tol=1e-14)


def test_refined_and_classic_on_toy():
    alpha = SupportDistribution.uniform(EVEN_PERMS)
    refined = refined_bound(TOY, TOY_LV, alpha, math.log(6))
    classic = classic_bound(TOY, TOY_LV, alpha, math.log(6))
    assert math.isclose(math.exp(refined), 3 / math.sqrt(2), rel_tol=1e-12)
    assert math.isclose(math.exp(classic), 1.5, rel_tol=1e-12)


def test_refined_rejects_beta_below_alpha_entropy():
    alpha = SupportDistribution.uniform(TOY)
    with pytest.raises(ValueError):
        refined_bound(TOY, TOY_LV, alpha, math.log(3))


def test_value_bound_rejects_positive_penalty():
    key = ClassKey.make(2, 1, 0, 1, 1)
    with pytest.raises(ValueError):
        ValueBound(key=key, tau=0.8, log_value=0.1, method="merge", penalty_log=0.5)


FAST = EngineConfig(heuristics_small=(2,), lam_sweep=(0.0,), heuristic_iter_cap=2000)


def test_analyze_cw_t1_beats_leaf_values():
    table = analyze_cw(6, 1, 0.8, config=FAST)
    # The outer bound must beat any single class value.
    leaf_best = max(b.log_value for b in table.entries.values())
    assert table.top.log_value >= leaf_best - 1e-12
    assert table.top.log_value >= math.log(8)  # feasible at tau = 0.8


def test_analyze_cw_rejects_bad_t():
    with pytest.raises(ValueError):
        analyze_cw(2, 3, 0.8)


def test_engine_rejects_bad_tau():
    with pytest.raises(ValueError):
        LaserEngine(2, 0.5)


def test_table_json_roundtrip():
    table = analyze_cw(6, 1, 0.8, config=FAST)
    text = table_to_json(table)
    back = table_from_json(text)
    assert back.q == table.q and back.t == table.t
    assert math.isclose(back.tau, table.tau, rel_tol=0, abs_tol=0)
    assert set(back.entries) == set(table.entries)
    for key, entry in table.entries.items():
        assert back.entries[key].log_value == entry.log_value
    assert back.top.log_value == table.top.log_value
    # Serialization is deterministic.
    assert table_to_json(back) == text


def test_table_json_schema_guard():
    table = analyze_cw(6, 1, 0.8, config=FAST)
    text = table_to_json(table).replace('"schema_version": 1', '"schema_version": 99') \
        .replace('"schema_version":1', '"schema_version":99')
    with pytest.raises(SchemaVersionError):
        table_from_json(text)


def test_certify_fresh_table_passes():
    table = analyze_cw(6, 1, 0.8, config=FAST)
    cert = certify_table(table)
    assert cert.all_passed


def test_certify_catches_tampering():
    table = analyze_cw(6, 1, 0.8, config=FAST)
    text = table_to_json(table)
    tampered = table_from_json(text)
    top = tampered.top
    object.__setattr__(top, "log_value", top.log_value + 1e-3)
    cert = certify_table(tampered)
    assert not cert.all_passed
