import math

from walkrep import dynamics, markov, measures, stats


def test_n_zero_returns_observable(z_spec, z_bernoulli):
    f = markov.indicator_observable(dynamics.CylinderSet.from_dict(z_spec, {0: 1}))
    x = dynamics.sample_point(z_bernoulli, 0)
    powers = measures.convolution_powers(z_spec, measures.step_distribution(z_spec), 2)
    assert markov.markov_average(z_bernoulli, f, 0, x, powers) == f.evaluate(x)


def test_rotation_eigenfunction(z_spec):
    sys_r = dynamics.rotation_system(z_spec, seed=2)
    lam = markov.rotation_eigenvalue(sys_r)
    f = markov.cos_observable(0)
    powers = measures.convolution_powers(z_spec, measures.step_distribution(z_spec), 6)
    for draw in range(5):
        x = dynamics.sample_point(sys_r, draw)
        for n in range(1, 7):
            got = markov.markov_average(sys_r, f, n, x, powers)
            assert abs(got - lam**n * f.evaluate(x)) < 1e-10


def test_lattice_rotation_eigenfunction():
    from walkrep import groups

    z2 = groups.GroupSpec("lattice", 2)
    sys_r = dynamics.rotation_system(z2, seed=3)
    lam = markov.rotation_eigenvalue(sys_r, 0)
    f = markov.cos_observable(0)
    powers = measures.convolution_powers(z2, measures.step_distribution(z2), 4)
    x = dynamics.sample_point(sys_r, 0)
    for n in range(1, 5):
        got = markov.markov_average(sys_r, f, n, x, powers)
        assert abs(got - lam**n * f.evaluate(x)) < 1e-10


def test_bernoulli_average_is_convex_combination(z_spec, z_bernoulli):
    f = markov.indicator_observable(dynamics.CylinderSet.from_dict(z_spec, {0: 1}))
    powers = measures.convolution_powers(z_spec, measures.step_distribution(z_spec), 8)
    for draw in range(10):
        x = dynamics.sample_point(z_bernoulli, draw)
        for n in (1, 4, 8):
            v = markov.markov_average(z_bernoulli, f, n, x, powers)
            assert 0.0 <= v <= 1.0


def test_constant_observable_fixed(z_spec, z_bernoulli):
    const = markov.ObservableSpec("indicator", dynamics.CylinderSet.from_dict(z_spec, {}), 1.0, 1.0)
    powers = measures.convolution_powers(z_spec, measures.step_distribution(z_spec), 5)
    x = dynamics.sample_point(z_bernoulli, 0)
    for n in range(6):
        assert abs(markov.markov_average(z_bernoulli, const, n, x, powers) - 1.0) < 1e-12


def test_rotation_decay_ratio(z_spec):
    sys_r = dynamics.rotation_system(z_spec, seed=6)
    f = markov.cos_observable(0)
    rep = markov.convergence_report(sys_r, f, n_max=20, samples=300, seed=0)
    lam = abs(markov.rotation_eigenvalue(sys_r))
    for n in range(1, 21):
        ratio = rep["l2_dev"][n] / rep["l2_dev"][n - 1]
        assert abs(ratio - lam) <= 0.05 * lam
    assert rep["trend_pass"]
    assert rep["aperiodicity_witness"] == 1 / 3


def test_bernoulli_variance_formula(z_spec, z_bernoulli):
    f = markov.indicator_observable(dynamics.CylinderSet.from_dict(z_spec, {0: 1}))
    rep = markov.convergence_report(z_bernoulli, f, n_max=12, samples=2500, seed=1)
    for n in range(1, 13):
        est2 = rep["l2_dev"][n] ** 2
        exact2 = rep["expected_l2"][n] ** 2
        assert abs(est2 - exact2) <= 4.0 * rep["l2_se"][n]
    assert rep["trend_pass"]


def test_exact_l2_formula_against_direct_sum(z_spec):
    powers = measures.convolution_powers(z_spec, measures.step_distribution(z_spec), 12)
    for n in (1, 3, 6):
        direct = math.sqrt(sum(m * m for m in powers[n - 1].masses.values())) / 2.0
        assert abs(markov.bernoulli_indicator_l2(powers, n) - direct) < 1e-14


def test_contraction_and_positivity(z_spec, z_bernoulli):
    f = markov.indicator_observable(dynamics.CylinderSet.from_dict(z_spec, {0: 1, 2: 1}))
    rep = markov.contraction_report(z_bernoulli, f, n_max=6, samples=50)
    assert rep["pass"]
    assert rep["min_value"] >= 0.0


def test_self_adjointness_proxy(z_spec, z_bernoulli):
    # <A f, g> == <f, A g> within Monte-Carlo error for a symmetric step law
    f = markov.indicator_observable(dynamics.CylinderSet.from_dict(z_spec, {0: 1}))
    g = markov.indicator_observable(dynamics.CylinderSet.from_dict(z_spec, {2: 1}))
    powers = measures.convolution_powers(z_spec, measures.step_distribution(z_spec), 1)
    probe = dynamics.bernoulli_system(z_spec, seed=404)
    n = 20_000
    lhs = []
    rhs = []
    for draw in range(n):
        x = dynamics.sample_point(probe, draw)
        lhs.append(markov.markov_average(probe, f, 1, x, powers) * g.evaluate(x))
        rhs.append(f.evaluate(x) * markov.markov_average(probe, g, 1, x, powers))
    m_l, lo_l, hi_l = stats.mean_interval(lhs)
    m_r, lo_r, hi_r = stats.mean_interval(rhs)
    assert abs(m_l - m_r) <= (hi_l - lo_l) / 2 + (hi_r - lo_r) / 2
