import math

import numpy as np
import pytest

from walkrep import dynamics, groups, stats
from walkrep.errors import TowerConstructionError


def test_point_determinism(z_bernoulli):
    x1 = dynamics.sample_point(z_bernoulli, 0)
    x2 = dynamics.sample_point(z_bernoulli, 0)
    assert [x1.read(g) for g in range(-50, 50)] == [x2.read(g) for g in range(-50, 50)]


def test_exact_equivariance(z_bernoulli):
    x = dynamics.sample_point(z_bernoulli, 3)
    for h in (-2, 1, 5):
        xh = dynamics.act(z_bernoulli, h, x)
        assert all(xh.read(g) == x.read(g + h) for g in range(-10, 10))


def test_action_composition(z_bernoulli):
    x = dynamics.sample_point(z_bernoulli, 1)
    a = dynamics.act(z_bernoulli, 2, dynamics.act(z_bernoulli, 3, x))
    b = dynamics.act(z_bernoulli, 5, x)
    assert a.offset == b.offset


def test_draws_agree_at_half_rate(z_bernoulli):
    x = dynamics.sample_point(z_bernoulli, 0)
    y = dynamics.sample_point(z_bernoulli, 1)
    n = 2000
    agree = sum(x.read(g) == y.read(g) for g in range(-n // 2, n // 2))
    lo, hi = stats.wilson_interval(agree, n)
    assert lo < 0.5 < hi or abs(agree / n - 0.5) < 0.05


def test_rotation_points_uniform_and_equivariant(z_spec):
    sys_r = dynamics.rotation_system(z_spec, seed=5)
    from scipy import stats as st

    draws = np.array(
        [dynamics.sample_point(sys_r, i).position()[0] for i in range(10_000)]
    )
    assert st.kstest(draws, "uniform").pvalue > 0.01
    alpha = sys_r.alpha[0]
    x = dynamics.sample_point(sys_r, 0)
    x3 = dynamics.act(sys_r, 3, x)
    assert abs(x3.position()[0] - ((x.position()[0] + 3 * alpha) % 1.0)) < 1e-12


def test_cylinder_measure_and_eval(z_bernoulli, z_spec):
    cyl = dynamics.CylinderSet.from_dict(z_spec, {0: 1})
    assert cyl.measure() == 0.5
    hits = sum(
        cyl.contains(dynamics.sample_point(z_bernoulli, i)) for i in range(4000)
    )
    lo, hi = stats.wilson_interval(hits, 4000)
    assert lo <= 0.5 <= hi
    full = dynamics.CylinderSet.from_dict(z_spec, {})
    assert full.contains(dynamics.sample_point(z_bernoulli, 0))


def test_family_enumeration(z_spec):
    fam = dynamics.SetFamily(z_spec)
    assert fam.descriptor(0).bits == ()  # the full space
    assert fam.descriptor(1).bits == ((0, 0),)
    assert fam.descriptor(2).bits == ((0, 1),)
    # the ruler makes every descriptor recur infinitely often
    rulers = [dynamics.SetFamily.ruler(i) for i in range(1, 17)]
    assert rulers == [0, 1, 0, 2, 0, 1, 0, 3, 0, 1, 0, 2, 0, 1, 0, 4]
    x = dynamics.sample_point(dynamics.bernoulli_system(z_spec, 1), 0)
    # indices with the same ruler value evaluate identically
    assert fam.eval_set(2, x) == fam.eval_set(6, x) == fam.eval_set(10, x)


def test_family_distinct_descriptors(z_spec):
    fam = dynamics.SetFamily(z_spec)
    seen = {fam.descriptor(j).bits for j in range(40)}
    assert len(seen) == 40


def test_tower_disjointness_and_measure(z_bernoulli):
    tower = dynamics.rokhlin_tower(z_bernoulli, 3, 0.1, mc_samples=20_000)
    assert tower.collisions == 0
    assert tower.mu_bn_upper() < 0.05
    assert tower.mc_ci_upper < 0.05
    assert tower.mu_e_lower > 0
    # marker length at least twice the height makes overlaps contradictory
    assert tower.mu_e_lower == tower.mu_pattern


def test_tower_locate_unique(z_bernoulli):
    tower = dynamics.rokhlin_tower(z_bernoulli, 2, 0.2)
    gen = dynamics.conditional_base_sampler(tower, seed=1)
    spec = z_bernoulli.group
    for _ in range(20):
        x = next(gen)
        assert tower.in_base(x)
        assert tower.locate(x) == 0
        moved = dynamics.act(z_bernoulli, 2, x)
        assert tower.locate(moved) == 2


def test_tower_respects_prescribed_base(z_bernoulli, z_spec):
    within = dynamics.CylinderSet.from_dict(z_spec, {-50: 1})
    tower = dynamics.rokhlin_tower(z_bernoulli, 2, 0.2, base_within=within)
    gen = dynamics.conditional_base_sampler(tower, seed=3)
    x = next(gen)
    assert within.contains(x)


def test_tower_infeasible_parameters(z_bernoulli):
    with pytest.raises(TowerConstructionError):
        dynamics.rokhlin_tower(z_bernoulli, 3, 1e-6, max_marker=10)


def test_tower_lattice(z_spec):
    z2 = groups.GroupSpec("lattice", 2)
    sys2 = dynamics.bernoulli_system(z2, seed=12)
    tower = dynamics.rokhlin_tower(sys2, 2, 0.1, mc_samples=3000)
    assert tower.collisions == 0
    assert tower.mu_bn_upper() < 0.05


def test_conditional_sampler_law(z_bernoulli):
    # conditioned points carry the marker; free coordinates stay fair
    tower = dynamics.rokhlin_tower(z_bernoulli, 2, 0.2)
    gen = dynamics.conditional_base_sampler(tower, seed=8)
    far = []
    for _ in range(400):
        x = next(gen)
        far.append(x.read(1000))
    n = len(far)
    se = math.sqrt(0.25 / n)
    assert abs(sum(far) / n - 0.5) <= 4 * se


def test_measure_preservation(z_bernoulli, z_spec):
    cyl = dynamics.CylinderSet.from_dict(z_spec, {0: 1, 3: 0})
    rep = dynamics.measure_preservation_report(z_bernoulli, cyl, 7, samples=20_000)
    assert rep["pass"]


def test_freeness(z_bernoulli):
    rep = dynamics.freeness_report(z_bernoulli, radius=4, points=300)
    assert rep["pass"]


def test_birkhoff_window_sanity(z_bernoulli, z_spec):
    # ball-window averages of a cylinder indicator approach its measure
    cyl = dynamics.CylinderSet.from_dict(z_spec, {0: 1})
    x = dynamics.sample_point(z_bernoulli, 17)
    for n, tol in ((50, 0.2), (400, 0.1)):
        window = [cyl.contains(dynamics.act(z_bernoulli, g, x)) for g in range(-n, n)]
        assert abs(sum(window) / len(window) - 0.5) < tol
