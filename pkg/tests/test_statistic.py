import math

import numpy as np
import pytest

from l1indep.data import BlockSpec, DataError, Sample
from l1indep.estimators import Bandwidths, default_kernels, joint_kde, marginal_kde
from l1indep.statistic import (
    SQRT_2_OVER_PI,
    Region,
    TestConfig as _TestConfig,
    a_n_region,
    make_grid,
    normal_quantile,
    normal_sf,
    permutation_calibrate,
    region_mass,
    run_test,
    select_region,
    v_n_region,
)
from l1indep.variance import variance_params

PAIR = BlockSpec((1, 1))
VP2 = variance_params(PAIR)


def _normal(rng, n, dims=(1, 1)):
    spec = BlockSpec(dims)
    return Sample(rng.standard_normal((n, spec.d)), spec)


def _brute_integrals(s, b, region, cells=400):
    """Midpoint rule on a fine 2-D grid straight from the point estimators."""
    xs = [np.linspace(region.lo[k], region.hi[k], cells + 1) for k in range(2)]
    cx = [0.5 * (x[1:] + x[:-1]) for x in xs]
    gx, gy = np.meshgrid(cx[0], cx[1], indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    f = joint_kde(s, b, pts)
    m = marginal_kde(s, b, 1, pts[:, 0]) * marginal_kde(s, b, 2, pts[:, 1])
    vol = np.prod([(region.hi[k] - region.lo[k]) / cells for k in range(2)])
    return float(np.abs(f - m).sum() * vol)


def test_region_uniform_contains_quantile_box(rng):
    x = rng.uniform(0, 1, size=(400, 2))
    s = Sample(x, PAIR)
    b = Bandwidths.uniform(0.1, PAIR)
    r = select_region(s, b, 0.01)
    q_lo = np.quantile(x, 0.005, axis=0) - 0.1
    q_hi = np.quantile(x, 0.995, axis=0) + 0.1
    assert np.all(r.lo <= q_lo) and np.all(r.hi >= q_hi)
    for l in (1, 2):
        lo, hi = r.boxes[l - 1]
        assert region_mass(s, b, l, lo, hi) >= 0.99


def test_region_small_eps_is_full_support(rng):
    s = _normal(rng, 60)
    b = Bandwidths.uniform(0.4, PAIR)
    r = select_region(s, b, 1e-6)
    np.testing.assert_array_equal(r.lo, s.values.min(axis=0) - 0.4)
    np.testing.assert_array_equal(r.hi, s.values.max(axis=0) + 0.4)
    assert region_mass(s, b, 1, r.lo[:1], r.hi[:1]) == 1.0


def test_region_joint_mass_normal_500(rng):
    s = _normal(rng, 500)
    b = Bandwidths.uniform(0.3, PAIR)
    r = select_region(s, b, 0.01)
    xs = [np.linspace(r.lo[k], r.hi[k], 601) for k in range(2)]
    cx = [0.5 * (x[1:] + x[:-1]) for x in xs]
    gx, gy = np.meshgrid(*cx, indexing="ij")
    f = joint_kde(s, b, np.column_stack([gx.ravel(), gy.ravel()]))
    mass = f.sum() * np.diff(xs[0])[0] * np.diff(xs[1])[0]
    assert 0.99 <= mass <= 1.0 + 1e-9


def test_region_joint_mass_three_blocks(rng):
    spec = BlockSpec((1, 1, 1))
    s = Sample(rng.standard_normal((3000, 3)), spec)
    b = Bandwidths.uniform(0.3, spec)
    r = select_region(s, b, 0.03)
    per = np.ones(s.n)
    from l1indep.kernel import cdf_1d

    for k in range(3):
        u = s.values[:, k]
        per *= cdf_1d("uniform", (r.hi[k] - u) / 0.3) - cdf_1d("uniform", (r.lo[k] - u) / 0.3)
    assert per.mean() >= 0.97
    for l in (1, 2, 3):
        assert region_mass(s, b, l, *r.boxes[l - 1]) >= 0.99


def test_region_trims_from_both_tails(rng):
    s = _normal(rng, 2000)
    b = Bandwidths.uniform(0.2, PAIR)
    r = select_region(s, b, 0.05)
    xs = np.sort(s.values, axis=0)
    assert np.all(r.lo > xs[0] - 0.2) and np.all(r.hi < xs[-1] + 0.2)


def test_region_degenerate_coordinate(rng):
    x = rng.standard_normal((20, 2))
    x[:, 1] = 3.0
    with pytest.raises(DataError, match="coordinate 2"):
        select_region(Sample(x, PAIR), Bandwidths.uniform(0.5, PAIR))


@pytest.mark.parametrize("eps", [0.0, 0.5, -0.1])
def test_region_eps_range(rng, eps):
    with pytest.raises(ValueError):
        select_region(_normal(rng, 20), Bandwidths.uniform(0.5, PAIR), eps)


def test_grid_cell_size_and_cover(rng):
    s = _normal(rng, 40, (1, 2))
    b = Bandwidths(np.array([0.3, 0.5, 0.7]), s.spec)
    r = select_region(s, b)
    for gf in (2.0, 4.0, 7.5):
        g = make_grid(r, b, gf)
        for k in range(3):
            assert np.all(g.widths[k] <= b.h[k] / gf * (1 + 1e-12))
            assert g.widths[k].sum() == pytest.approx(r.hi[k] - r.lo[k], rel=1e-12)
            assert g.centers[k][0] - g.widths[k][0] / 2 == pytest.approx(r.lo[k], abs=1e-12)


def test_v_n_matches_direct_quadrature(rng):
    s = _normal(rng, 30)
    b = Bandwidths(np.array([0.8, 0.6]), PAIR)
    r = select_region(s, b)
    fine = make_grid(r, b, 200.0)
    assert v_n_region(s, b, r, fine) == pytest.approx(_brute_integrals(s, b, r, 400), rel=2e-2)


@pytest.mark.xfail(
    strict=True,
    reason="factor-4 midpoint error at n=10 is 2-12% for most instances (60% of 200 seeds exceed 2e-2); "
    "few kernel edges leave the O(cell width) jump errors unaveraged",
)
def test_grid_refinement_n10():
    rng = np.random.default_rng(7)
    s = _normal(rng, 10)
    b = Bandwidths.uniform(0.9, PAIR)
    r = select_region(s, b)
    coarse = v_n_region(s, b, r, make_grid(r, b, 4.0))
    fine = v_n_region(s, b, r, make_grid(r, b, 16.0))
    exact = v_n_region(s, b, r, make_grid(r, b, mode="breakpoints", sample=s))
    assert coarse == pytest.approx(fine, rel=2e-2)
    assert fine == pytest.approx(exact, rel=2e-2)


def test_breakpoint_grid_is_exact_for_uniform_kernels(rng):
    s = _normal(rng, 8)
    b = Bandwidths(np.array([0.7, 1.1]), PAIR)
    r = select_region(s, b)
    exact = v_n_region(s, b, r, make_grid(r, b, mode="breakpoints", sample=s))
    # Jump errors alternate in sign, so convergence is not monotone; check the fine end.
    err = abs(v_n_region(s, b, r, make_grid(r, b, 512.0)) - exact)
    assert err < 5e-4 * exact


def test_midpoint_error_shrinks_on_average():
    errs = {4.0: [], 64.0: []}
    for seed in range(30):
        s = _normal(np.random.default_rng(seed), 30)
        b = Bandwidths.uniform(0.9, PAIR)
        r = select_region(s, b)
        exact = v_n_region(s, b, r, make_grid(r, b, mode="breakpoints", sample=s))
        for gf in errs:
            errs[gf].append(abs(v_n_region(s, b, r, make_grid(r, b, gf)) / exact - 1))
    assert np.mean(errs[64.0]) < np.mean(errs[4.0]) / 5
    assert np.median(errs[4.0]) < 0.05


def test_a_n_refinement_n30(rng):
    s = _normal(rng, 30)
    b = Bandwidths.uniform(0.7, PAIR)
    r = select_region(s, b)
    a4 = a_n_region(s, b, r, make_grid(r, b, 4.0))
    a16 = a_n_region(s, b, r, make_grid(r, b, 16.0))
    assert a4 == pytest.approx(a16, rel=2e-2)


def test_a_n_zero_when_region_misses_data(rng):
    s = _normal(rng, 20)
    b = Bandwidths.uniform(0.5, PAIR)
    r = Region(np.array([50.0, 50.0]), np.array([51.0, 51.0]), (1, 1))
    g = make_grid(r, b)
    assert a_n_region(s, b, r, g) == 0.0 and v_n_region(s, b, r, g) == 0.0


def test_single_observation_has_zero_v_n(rng):
    for dims in [(1, 1), (1, 2)]:
        spec = BlockSpec(dims)
        s = Sample(rng.standard_normal((1, spec.d)), spec)
        b = Bandwidths(rng.uniform(0.5, 1.5, spec.d), spec)
        r = Region(s.values[0] - 1.0, s.values[0] + 1.0, dims)
        assert v_n_region(s, b, r, make_grid(r, b)) == 0.0


def test_region_monotonicity(rng):
    s = _normal(rng, 40)
    b = Bandwidths.uniform(0.6, PAIR)
    big = select_region(s, b, 1e-6)
    small = Region(big.lo / 2, big.hi / 2, (1, 1))
    # A common cell width makes the small-region cells a subset of the big ones.
    gb = make_grid(big, b, 40.0)
    v_big = v_n_region(s, b, big, gb)
    v_small = v_n_region(s, b, small, make_grid(small, b, 40.0))
    assert v_small <= v_big * (1 + 1e-2)


def test_run_test_consistency(rng):
    for seed in range(20):
        s = _normal(np.random.default_rng(seed), 40)
        res = run_test(s, Bandwidths.uniform(0.6, PAIR), VP2, alpha=0.1)
        assert res.v_n >= 0 and res.a_n >= 0
        assert res.t_n == (math.sqrt(res.n) * res.v_n - res.a_n) / res.sigma
        assert res.reject == (res.t_n > res.z_crit) == (res.p_value < res.alpha)
        assert res.p_value == pytest.approx(normal_sf(res.t_n))


def test_run_test_errors(rng):
    s = _normal(rng, 3)
    with pytest.raises(DataError):
        run_test(s, Bandwidths.uniform(0.5, PAIR), VP2)
    with pytest.raises(ValueError):
        run_test(_normal(rng, 10), Bandwidths.uniform(0.5, PAIR), VP2, alpha=1.0)
    with pytest.raises(ValueError):
        _TestConfig(grid_factor=1.0)


def test_row_permutation_bit_identical(rng):
    s = _normal(rng, 60, (1, 2))
    b = Bandwidths(np.array([0.5, 0.8, 0.6]), s.spec)
    vp = variance_params(s.spec)
    a = run_test(s, b, vp)
    t = Sample(s.values[rng.permutation(s.n)], s.spec)
    c = run_test(t, b, vp)
    assert a.to_dict() == c.to_dict()


@pytest.mark.parametrize("dims", [(1, 1), (2, 1)])
def test_block_scaling_invariance(rng, dims):
    s = _normal(rng, 50, dims)
    spec = s.spec
    b = Bandwidths(rng.uniform(0.5, 1.0, spec.d), spec)
    vp = variance_params(spec)
    base = run_test(s, b, vp)
    factors = np.ones(spec.d)
    factors[spec.columns(1)] = 2.0
    scaled = Sample(s.values * factors, spec)
    for region in (base.region.scaled(factors), None):
        res = run_test(scaled, b.scaled(factors), vp, region=region)
        assert res.v_n == pytest.approx(base.v_n, abs=1e-10)
        assert res.a_n == pytest.approx(base.a_n, abs=1e-10)
        assert res.t_n == pytest.approx(base.t_n, abs=1e-10)


def test_triangular_kernel_runs(rng):
    s = _normal(rng, 60)
    ks = default_kernels(PAIR, "triangular")
    cfg = _TestConfig(kernels=ks)
    res = run_test(s, Bandwidths.uniform(0.8, PAIR), variance_params(PAIR, ks), cfg=cfg)
    assert math.isfinite(res.t_n)


def test_normal_helpers():
    assert abs(normal_quantile(0.95) - 1.6448536269514722) <= 1e-10
    assert abs(normal_quantile(0.5)) <= 1e-15
    assert abs(normal_sf(1.959963984540054) - 0.025) <= 1e-10
    assert SQRT_2_OVER_PI == pytest.approx(0.797885, abs=1e-6)


def test_permutation_extreme_statistic():
    # Perfectly dependent data: every permutation is smaller.
    x = np.linspace(-1, 1, 40)
    s = Sample(np.column_stack([x, x]), PAIR)
    b = Bandwidths.uniform(0.2, PAIR)
    r = select_region(s, b)
    p, obs, stats = permutation_calibrate(s, b, r, 99, seed=1, return_stats=True)
    assert np.all(stats < obs) and p == pytest.approx(1 / 100)


def test_permutation_seed_stability(rng):
    s = _normal(rng, 40)
    b = Bandwidths.uniform(0.7, PAIR)
    r = select_region(s, b)
    B = 400
    p1 = permutation_calibrate(s, b, r, B, seed=1)
    p2 = permutation_calibrate(s, b, r, B, seed=2)
    p = 0.5 * (p1 + p2)
    assert abs(p1 - p2) <= 3 * math.sqrt(p * (1 - p) / B)
    assert permutation_calibrate(s, b, r, B, seed=1) == p1
    with pytest.raises(ValueError):
        permutation_calibrate(s, b, r, 50, seed=1)


@pytest.mark.slow
def test_permutation_size_independent_data():
    rejects = 0
    reps = 500
    b = Bandwidths.uniform(0.6, PAIR)
    for rep in range(reps):
        ss = np.random.SeedSequence([2024, rep])
        s = Sample(np.random.default_rng(ss).standard_normal((50, 2)), PAIR)
        r = select_region(s, b)
        rejects += permutation_calibrate(s, b, r, 200, seed=ss.spawn(1)[0]) < 0.05
    assert 0.03 <= rejects / reps <= 0.07
