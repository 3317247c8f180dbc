from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from yosolab import aggregator as agg
from yosolab import decoder as dec
from yosolab.flops import (
    REFERENCE_AGGREGATOR,
    REFERENCE_ATTENTION,
    AggregatorCostConfig,
    AttentionCostConfig,
    aggregator_inputs,
    aggregator_ratio,
    attention_inputs,
    axis_values,
    contour_grid,
    counted_flops,
    flops_attention,
    flops_cfa,
    flops_ifa,
    report_aggregator,
    report_attention,
    sdca_reduction_ratio,
    write_contour_csv,
)
from yosolab.tensor import Rng

agg_cfgs = st.builds(
    AggregatorCostConfig,
    st.integers(1, 24), st.integers(1, 24), st.integers(1, 24), st.integers(1, 24),
    st.integers(1, 12), st.integers(1, 3).map(lambda k: 8 * k), st.integers(1, 3).map(lambda k: 8 * k),
)
att_cfgs = st.builds(AttentionCostConfig, st.integers(1, 12), st.integers(1, 12), st.sampled_from([1, 3, 5, 7]))


def test_ifa_hand_values():
    assert flops_ifa(AggregatorCostConfig(1, 1, 1, 1, 1, 8, 8)) == 1024
    assert flops_ifa(REFERENCE_AGGREGATOR) == 32_682_016_768


def test_cfa_hand_values():
    assert flops_cfa(AggregatorCostConfig(64, 64, 64, 64, 1, 8, 8)) == 6400
    assert flops_cfa(REFERENCE_AGGREGATOR) == 4_278_190_080


def test_reference_ratio_close_to_measured():
    r = aggregator_ratio(REFERENCE_AGGREGATOR)
    assert r == Fraction(1948, 255)
    assert abs(float(r) - 16.6 / 2.1) / (16.6 / 2.1) <= 0.05


def test_cfa_requires_divisible_extent():
    with pytest.raises(ValueError):
        flops_cfa(AggregatorCostConfig(1, 1, 1, 1, 1, 12, 8))


@given(agg_cfgs)
def test_ifa_positive(cfg):
    assert flops_ifa(cfg) > 0 and flops_cfa(cfg) > 0


def test_attention_reference_counts():
    got = {v: flops_attention(REFERENCE_ATTENTION, v) for v in dec.VARIANTS}
    assert got == {
        "mhca": 31_334_400,
        "dca": 15_360_000,
        "sdca": 5_273_600,
        "pdca": 5_120_000,
        "ddca": 153_600,
    }
    assert got["pdca"] + got["ddca"] == got["sdca"]
    assert abs(got["mhca"] - 31.5e6) / 31.5e6 <= 0.01
    assert abs(got["sdca"] - 5.4e6) / 5.4e6 <= 0.03


def test_unknown_variant():
    with pytest.raises(ValueError):
        flops_attention(REFERENCE_ATTENTION, "conv")


def test_sdca_ratio_reference():
    r = sdca_reduction_ratio(REFERENCE_ATTENTION)
    assert r == Fraction(612, 103)
    assert abs(31.5 / 5.4 - float(r)) / float(r) <= 0.02


@given(st.integers(1, 10**4), st.integers(1, 10**4), st.integers(1, 99))
def test_sdca_ratio_identity(n, d, t):
    cfg = AttentionCostConfig(n, d, t)
    assert Fraction(flops_attention(cfg, "mhca"), flops_attention(cfg, "sdca")) == sdca_reduction_ratio(cfg)


@given(st.integers(1, 500), st.integers(1, 500), st.integers(1, 9))
def test_sdca_ratio_grows_with_d(n, d, t):
    assert sdca_reduction_ratio(AttentionCostConfig(n, d + 1, t)) > sdca_reduction_ratio(AttentionCostConfig(n, d, t))


@given(agg_cfgs, st.sampled_from(["ifa", "cfa"]), st.integers(0, 2**32))
def test_counted_equals_analytic_aggregator(cfg, form, seed):
    rep = report_aggregator(cfg, form, seed=seed)
    assert rep.counted == rep.analytic


@given(att_cfgs, st.sampled_from(dec.VARIANTS), st.integers(0, 2**32))
def test_counted_equals_analytic_attention(cfg, variant, seed):
    rep = report_attention(cfg, variant, seed=seed)
    assert rep.counted == rep.analytic


def test_counted_in_ordered_mode_too():
    cfg = AggregatorCostConfig(3, 2, 4, 1, 2, 8, 16)
    p, w = aggregator_inputs(cfg, "cfa", Rng(0))
    assert counted_flops(agg.aggregate_cfa, p, w) == flops_cfa(cfg)
    acfg = AttentionCostConfig(4, 6, 3)
    q, v, aw = attention_inputs(acfg, "sdca", Rng(1))
    assert counted_flops(dec.attend, q, v, aw) == flops_attention(acfg, "sdca")


def test_mhca_single_token_count():
    d = 8
    cfg = AttentionCostConfig(1, d, 3)
    q, v, w = attention_inputs(cfg, "mhca", Rng(2))
    assert counted_flops(dec.attend, q, v, w) == 4 * d * d + 2 * d


def test_breakdown_kinds():
    rep = report_aggregator(AggregatorCostConfig(2, 2, 2, 2, 3, 8, 8), "cfa")
    assert set(rep.breakdown) == {"mac", "interp", "add"}
    assert rep.breakdown["add"] == 3 * 3 * 64


def test_axis_values():
    assert axis_values(64, 1024, 20)[0] == 64 and axis_values(64, 1024, 20)[-1] == 1024
    assert axis_values(5, 5, 1) == [5]
    with pytest.raises(ValueError):
        axis_values(1, 3, 5)
    with pytest.raises(ValueError):
        axis_values(0, 3, 2)


def _grid(which, xr, yr):
    return {(x, y): r for x, y, r in contour_grid(which, xr, yr)}


def test_cfa_grid_monotone():
    g = _grid("cfa", (64, 1024, 20), (64, 1024, 20))
    xs = sorted({x for x, _ in g})
    ys = sorted({y for _, y in g})
    for y in ys:
        row = [g[(x, y)] for x in xs]
        assert all(b > a for a, b in zip(row, row[1:]))
    for x in xs:
        col = [g[(x, y)] for y in ys]
        assert all(b <= a for a, b in zip(col, col[1:]))
    assert all(r > 1 for r in g.values())


def test_sdca_grid_monotone():
    g = _grid("sdca", (50, 500, 20), (64, 1024, 20))
    xs = sorted({x for x, _ in g})
    ys = sorted({y for _, y in g})
    for y in ys:
        row = [g[(x, y)] for x in xs]
        assert all(b < a for a, b in zip(row, row[1:]))
    for x in xs:
        col = [g[(x, y)] for y in ys]
        assert all(b > a for a, b in zip(col, col[1:]))
    assert all(r > 1 for r in g.values())


def test_single_cell_grid():
    [(x, y, r)] = contour_grid("sdca", (100, 100, 1), (256, 256, 1))
    assert (x, y) == (100, 256) and r == sdca_reduction_ratio(REFERENCE_ATTENTION)
    [(_, _, rc)] = contour_grid("cfa", (256, 256, 1), (256, 256, 1))
    assert rc == aggregator_ratio(AggregatorCostConfig(256, 256, 256, 256, 256, 8, 8))


def test_cfa_ratio_independent_of_extent():
    a = aggregator_ratio(AggregatorCostConfig(16, 16, 16, 16, 8, 8, 8))
    b = aggregator_ratio(AggregatorCostConfig(16, 16, 16, 16, 8, 64, 32))
    assert a == b


def test_contour_csv(tmp_path):
    rows = contour_grid("cfa", (64, 128, 2), (64, 128, 2))
    text = write_contour_csv(rows, tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "x,y,ratio" and len(text) == 5
    with pytest.raises(ValueError):
        contour_grid("ifa", (1, 2, 2), (1, 2, 2))
