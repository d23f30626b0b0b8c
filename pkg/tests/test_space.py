import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walkrep import groups, measures, space
from walkrep.errors import DomainError


def test_norm_delta_hand_value(z_spec):
    w = measures.build_weight(z_spec, measures.WeightParams(q=0.5, n_max=2))
    assert space.norm(space.delta(w, 0)) == 0.5


def test_norm_zero_vector(z_weights):
    v = space.WeightedVector(z_weights, {})
    assert space.norm(v) == 0.0
    v2 = space.WeightedVector(z_weights, {0: 0.0})
    assert space.norm(v2) == 0.0 and v2.coeffs == {}


def test_norm_homogeneity(z_weights):
    rng = np.random.default_rng(3)
    for _ in range(50):
        support = rng.choice(30, size=5, replace=False) - 15
        v = space.WeightedVector(
            z_weights, {int(g): float(c) for g, c in zip(support, rng.standard_normal(5))}
        )
        assert abs(space.norm(v.scale(2.0)) - 2.0 * space.norm(v)) < 1e-12


def test_norm_outside_support_flagged(z_weights):
    v = space.WeightedVector(z_weights, {10_000: 1.0})
    detail = space.norm_detail(v)
    assert detail["flagged"] and detail["n_outside"] == 1
    assert detail["value"] == math.sqrt(z_weights.tail_bound)


def test_parallelogram_law(z_weights):
    rng = np.random.default_rng(4)
    for _ in range(60):
        def rand_vec():
            idx = rng.choice(40, size=6, replace=False) - 20
            return space.WeightedVector(
                z_weights,
                {int(g): float(c) for g, c in zip(idx, rng.standard_normal(6))},
            )

        u, v = rand_vec(), rand_vec()
        lhs = space.norm(u + v) ** 2 + space.norm(u - v) ** 2
        rhs = 2 * space.norm(u) ** 2 + 2 * space.norm(v) ** 2
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, rhs)


def test_shift_moves_single_atom(z_weights):
    v = space.delta(z_weights, 5)
    moved = space.shift(v, 1)
    assert moved.coeffs == {4: 1.0}


def test_shift_is_representation_f2(f2_weights):
    rng = np.random.default_rng(9)
    spec = f2_weights.spec
    pool = groups.ball(spec, 3)
    a, b = (1,), (2,)
    ab = groups.multiply(spec, a, b)
    for _ in range(40):
        idx = rng.choice(len(pool), size=4, replace=False)
        v = space.WeightedVector(
            f2_weights,
            {pool[int(i)]: float(c) for i, c in zip(idx, rng.standard_normal(4))},
        )
        assert space.shift(space.shift(v, b), a).coeffs == space.shift(v, ab).coeffs


def test_shift_identity_is_noop(z_weights):
    v = space.delta(z_weights, 3)
    assert space.shift(v, 0).coeffs == v.coeffs


def test_single_atom_ratio_identity(z_weights):
    v = space.delta(z_weights, 0)
    lhs = space.norm(space.shift(v, 1)) ** 2 / space.norm(v) ** 2
    rhs = z_weights.weight(-1) / z_weights.weight(0)
    assert abs(lhs - rhs) < 1e-12


def test_operator_norm_certificate_z(z_spec, z_weights):
    rep = space.operator_norm_certificate(z_spec, z_weights, 1, trials=2000, seed=1)
    assert abs(rep["bound"] - math.sqrt(6.0)) < 1e-12
    assert rep["pass"]
    assert rep["observed"] <= rep["bound"] + 1e-9
    assert rep["observed_single_atom"] > 2.0  # the certificate is near-sharp


def test_operator_norm_certificate_f2(f2_spec, f2_weights):
    rep = space.operator_norm_certificate(f2_spec, f2_weights, (1,), trials=1000, seed=1)
    assert abs(rep["bound"] - math.sqrt(10.0)) < 1e-12
    assert rep["pass"]


def test_certificate_rejects_non_generator(z_spec, z_weights):
    with pytest.raises(DomainError):
        space.operator_norm_certificate(z_spec, z_weights, 2, trials=10)


def test_subgroup_norm_certificates(z_spec, f2_spec, f2_weights):
    emb = groups.subgroup_embed(z_spec, f2_spec, [(1,)])
    rep0 = space.subgroup_norm_certificate(f2_weights, emb, 0, trials=200, seed=2)
    assert rep0["bound"] == 1.0 and rep0["observed"] <= 1.0 + 1e-9
    rep1 = space.subgroup_norm_certificate(f2_weights, emb, 1, trials=200, seed=2)
    assert rep1["bound"] == 10.0 and rep1["pass"]
    rep2 = space.subgroup_norm_certificate(f2_weights, emb, 2, trials=200, seed=2)
    assert rep2["bound"] == 100.0 and rep2["pass"]


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=-8, max_value=8), st.integers(min_value=-8, max_value=8))
def test_shift_composition_z(g, h):
    spec = groups.GroupSpec("integers")
    w = measures.build_weight(spec, measures.WeightParams(q=0.5, n_max=10))
    v = space.WeightedVector(w, {0: 1.0, 3: -2.0})
    assert (
        space.shift(space.shift(v, h), g).coeffs
        == space.shift(v, g + h).coeffs
    )
