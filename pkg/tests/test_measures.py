import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walkrep import groups, measures
from walkrep.errors import DegenerateRestrictionError, DomainError


def test_step_distribution_z(z_spec):
    rho = measures.step_distribution(z_spec)
    assert rho.masses == {-1: 1 / 3, 0: 1 / 3, 1: 1 / 3}
    assert rho.symmetric


def test_step_distribution_f2(f2_spec):
    rho = measures.step_distribution(f2_spec)
    assert len(rho.masses) == 5
    assert all(abs(m - 0.2) < 1e-15 for m in rho.masses.values())
    assert rho.mass((1,)) == rho.mass((-1,)) == 0.2


def test_convolution_examples_z(z_spec):
    rho = measures.step_distribution(z_spec)
    rho2 = measures.convolve(z_spec, rho, rho)
    assert abs(rho2.mass(0) - 1 / 3) < 1e-15  # 3 of 9 pairs sum to 0
    assert abs(rho2.mass(2) - 1 / 9) < 1e-15  # only (1, 1)
    rho3 = measures.convolution_power(z_spec, rho, 3)
    assert abs(rho3.mass(0) - 7 / 27) < 1e-15  # 7 of 27 triples


def test_convolution_examples_f2(f2_spec):
    rho = measures.step_distribution(f2_spec)
    rho2 = measures.convolve(f2_spec, rho, rho)
    assert abs(rho2.mass(()) - 1 / 5) < 1e-15  # 5 of 25 pairs cancel
    support = set(rho2.masses)
    assert support <= set(groups.ball(f2_spec, 2))


def test_convolution_power_support_and_mass(f2_spec):
    rho = measures.step_distribution(f2_spec)
    powers = measures.convolution_powers(f2_spec, rho, 4)
    for n, rn in enumerate(powers, start=1):
        assert set(rn.masses) <= set(groups.ball(f2_spec, n))
        assert abs(rn.total() - 1.0) < 1e-12
        assert rn.check_symmetry()


def test_convolution_associative_random():
    spec = groups.GroupSpec("free", 2)
    rng = np.random.default_rng(5)
    pool = groups.ball(spec, 2)

    def random_measure():
        k = int(rng.integers(1, 6))
        idx = rng.choice(len(pool), size=k, replace=False)
        raw = {pool[int(i)]: float(rng.random()) for i in idx}
        total = sum(raw.values())
        return measures.SparseMeasure(spec, {g: v / total for g, v in raw.items()})

    for _ in range(25):
        a, b, c = random_measure(), random_measure(), random_measure()
        left = measures.convolve(spec, measures.convolve(spec, a, b), c)
        right = measures.convolve(spec, a, measures.convolve(spec, b, c))
        atoms = set(left.masses) | set(right.masses)
        assert all(abs(left.mass(g) - right.mass(g)) < 1e-10 for g in atoms)


def test_weight_params():
    p = measures.WeightParams(q=0.5, n_max=2)
    assert p.p(1) == 0.5 and p.p(2) == 0.25
    assert p.ratio_bound == 2.0
    assert p.tail == 0.25
    with pytest.raises(DomainError):
        measures.WeightParams(q=1.0, n_max=2)


def test_build_weight_hand_example(z_spec):
    w = measures.build_weight(z_spec, measures.WeightParams(q=0.5, n_max=2))
    assert abs(w.weight(0) - 0.25) < 1e-15
    assert w.tail_bound == 0.25
    assert abs(w.stored_mass() - 0.75) < 1e-12
    assert all(w.weight(g) == w.weight(-g) for g in w.support())
    assert all(w.weight(g) > 0 for g in groups.ball(z_spec, 2))


def test_weight_mass_identity(z_weights):
    # total stored mass is 1 - q^n_max exactly
    assert abs(z_weights.stored_mass() + z_weights.tail_bound - 1.0) < 1e-9


def test_monotone_truncation(z_spec):
    w1 = measures.build_weight(z_spec, measures.WeightParams(q=0.5, n_max=6))
    w2 = measures.build_weight(z_spec, measures.WeightParams(q=0.5, n_max=9))
    for g in w1.support():
        assert w2.weight(g) >= w1.weight(g) - 1e-15
        assert w2.weight(g) - w1.weight(g) <= w1.tail_bound + 1e-15


def test_partial_weight_tables(z_weights):
    w = z_weights
    full = w.weight(3)
    partial = w.partial_weight(3, 10)
    assert 0 < partial <= full
    assert w.partial_weight(3, w.params.n_max) == full
    with pytest.raises(DomainError):
        w.partial_weight(0, 99)


@pytest.mark.parametrize("b", [1, 2, 3])
def test_weight_ratio_integers(z_spec, z_weights, b):
    rep = measures.weight_ratio(z_spec, z_weights, b)
    assert rep["bound"] == 6.0**b
    assert rep["pass"]
    assert rep["observed_max"] <= rep["bound"] * (1 + 1e-12)
    assert rep["observed_min"] >= 1.0 / rep["bound"] / (1 + 1e-12)


def test_weight_ratio_identity(z_spec, z_weights):
    rep = measures.weight_ratio(z_spec, z_weights, 0)
    assert rep["bound"] == 1.0
    assert abs(rep["observed_max"] - 1.0) < 1e-12


def test_weight_ratio_f2(f2_spec, f2_weights):
    rep = measures.weight_ratio(f2_spec, f2_weights, (1, 2))  # the word ab
    assert rep["bound"] == 100.0
    assert rep["pass"]


def test_plain_table_ratio_exceeds_bound_at_edge(z_spec, z_weights):
    # the uncorrected single-table ratio genuinely overshoots near the
    # support edge; the certified two-depth comparison is the sound check
    rep = measures.weight_ratio(z_spec, z_weights, 1)
    assert rep["plain_table_max"] > rep["bound"]


def test_restrict_renormalize(z_spec, f2_spec, f2_weights):
    emb = groups.subgroup_embed(z_spec, f2_spec, [(1,)])
    rho_g = measures.restrict_renormalize(f2_weights, emb)
    assert abs(rho_g.total() - 1.0) < 1e-12
    n_max = f2_weights.params.n_max
    assert all(rho_g.mass(n) > 0 for n in range(-n_max, n_max + 1))
    assert rho_g.check_symmetry()


def test_restricted_ratio_certificate(z_spec, f2_spec, f2_weights):
    emb = groups.subgroup_embed(z_spec, f2_spec, [(1,)])
    rep = measures.restricted_ratio_certificate(f2_weights, emb, 1)
    assert rep["bound"] == 10.0  # (2*2+1) * 2 for a single letter
    assert rep["pass"]


def test_degenerate_restriction(z_spec, f2_spec):
    w_small = measures.build_weight(f2_spec, measures.WeightParams(q=0.5, n_max=2))
    # images a^n leave the stored support except near the identity, but the
    # window always contains the identity, so force degeneracy differently:
    emb = groups.subgroup_embed(z_spec, f2_spec, [(1,)])
    table = dict(w_small.table)
    empty = measures.WeightTable(
        spec=f2_spec,
        params=w_small.params,
        powers=w_small.powers,
        table={g: 0.0 for g in table},
        tail_bound=w_small.tail_bound,
    )
    with pytest.raises(DegenerateRestrictionError):
        measures.restrict_renormalize(empty, emb)


def _simulate_walk_z(rng, n, samples):
    steps = rng.integers(-1, 2, size=(samples, n))
    return steps.sum(axis=1)


def test_monte_carlo_cross_check_z(z_spec):
    rng = np.random.default_rng(99)
    samples = 1_000_000
    rho = measures.step_distribution(z_spec)
    powers = measures.convolution_powers(z_spec, rho, 6)
    for n in (2, 4, 6):
        endpoints = _simulate_walk_z(rng, n, samples)
        values, counts = np.unique(endpoints, return_counts=True)
        freq = dict(zip(values.tolist(), (counts / samples).tolist()))
        for g in powers[n - 1].support():
            p = powers[n - 1].mass(g)
            se = math.sqrt(p * (1 - p) / samples)
            assert abs(freq.get(g, 0.0) - p) <= 4 * se + 1e-9


def _simulate_walk_f2(rng, n, samples):
    # letters 0=e, 1=a, 2=A, 3=b, 4=B; reduce with a vectorized stack
    steps = rng.integers(0, 5, size=(samples, n))
    letter = np.array([0, 1, -1, 2, -2])
    words = np.zeros((samples, n), dtype=np.int8)
    length = np.zeros(samples, dtype=np.int64)
    for j in range(n):
        l = letter[steps[:, j]]
        nonzero = l != 0
        top = words[np.arange(samples), np.maximum(length - 1, 0)]
        cancel = nonzero & (length > 0) & (top == -l)
        push = nonzero & ~cancel
        length[cancel] -= 1
        words[np.arange(samples), length * push] = np.where(push, l, words[np.arange(samples), length * push])
        length[push] += 1
    return words, length


def test_monte_carlo_cross_check_f2(f2_spec):
    # fixed representative seed: the 4-sigma-per-atom criterion over ~1500
    # atoms leaves a several-percent chance of a single borderline excursion
    rng = np.random.default_rng(8)
    samples = 1_000_000
    n = 6
    rho = measures.step_distribution(f2_spec)
    powers = measures.convolution_powers(f2_spec, rho, n)
    words, length = _simulate_walk_f2(rng, n, samples)
    # encode reduced words to integers: base-5 digits plus a length prefix
    enc = length.astype(np.int64) * 5**n
    for j in range(n):
        digit = np.where(j < length, words[:, j] + 2, 0)
        enc = enc + digit.astype(np.int64) * 5**j
    values, counts = np.unique(enc, return_counts=True)
    freq = dict(zip(values.tolist(), (counts / samples).tolist()))

    def encode(word):
        e = len(word) * 5**n
        for j, l in enumerate(word):
            e += (l + 2) * 5**j
        return e

    checked = 0
    for g in powers[n - 1].support():
        p = powers[n - 1].mass(g)
        se = math.sqrt(p * (1 - p) / samples)
        assert abs(freq.get(encode(g), 0.0) - p) <= 4 * se + 1e-9
        checked += 1
    assert checked == len(powers[n - 1].masses)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=-6, max_value=6), st.integers(min_value=1, max_value=6))
def test_symmetry_propagates(g, n):
    spec = groups.GroupSpec("integers")
    rho = measures.step_distribution(spec)
    rn = measures.convolution_power(spec, rho, n)
    assert rn.mass(g) == rn.mass(-g)
