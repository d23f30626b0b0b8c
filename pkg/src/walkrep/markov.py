"""The random-walk averaging operator and its convergence harness.

``A f(x) = sum_g f(T_g x) rho(g)`` iterates by replacing rho with its
convolution powers.  For the concrete ergodic systems here the invariant
projection of an observable is its known mean, so the harness compares the
sampled sup/L2 deviations from that mean against closed forms where they
exist: the rotation eigenvalue (1 + 2cos(2 pi alpha))/3 per axis, and the
exact independence variance sum_g rho^{*n}(g)^2 / 4 = rho^{*2n}(e)/4 for a
fair-coin cylinder bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics, groups, measures
from .dynamics import DynamicalSystem, PointHandle
from .errors import DomainError
from .measures import SparseMeasure


@dataclass(frozen=True)
class ObservableSpec:
    """A bounded observable: a cylinder indicator or a coordinate cosine."""

    kind: str  # "indicator" | "cos"
    payload: object = None  # CylinderSet for indicators; axis index for cos
    bound: float = 1.0
    mean: float = 0.0

    def evaluate(self, x: PointHandle) -> float:
        if self.kind == "indicator":
            return 1.0 if self.payload.contains(x) else 0.0
        if self.kind == "cos":
            return math.cos(2.0 * math.pi * x.position()[self.payload])
        raise DomainError(f"unknown observable kind {self.kind!r}")


def indicator_observable(cyl: dynamics.CylinderSet) -> ObservableSpec:
    return ObservableSpec("indicator", cyl, bound=1.0, mean=cyl.measure())


def cos_observable(axis: int = 0) -> ObservableSpec:
    return ObservableSpec("cos", axis, bound=1.0, mean=0.0)


def markov_average(
    sys: DynamicalSystem,
    f: ObservableSpec,
    n: int,
    x: PointHandle,
    rho_powers: list[SparseMeasure],
) -> float:
    """(A^n f)(x) as the exact finite sum over the support of rho^{*n}.

    n = 0 returns f(x) (the empty convolution).
    """
    if n == 0:
        return f.evaluate(x)
    if n > len(rho_powers):
        raise DomainError(f"need rho powers up to {n}, have {len(rho_powers)}")
    rho_n = rho_powers[n - 1]
    total = 0.0
    for g in rho_n.support():
        total += f.evaluate(dynamics.act(sys, g, x)) * rho_n.masses[g]
    return total


def rotation_eigenvalue(sys: DynamicalSystem, axis: int = 0) -> float:
    """The averaging eigenvalue of cos(2 pi x_axis) under the lazy step.

    Of the 2d+1 atoms, the identity and the 2(d-1) off-axis generators fix
    the observable and the two on-axis generators contribute 2 cos(2 pi a).
    """
    if sys.kind != "rotation":
        raise DomainError("eigenvalue applies to rotation systems")
    d = sys.group.d
    return (
        2.0 * d - 1.0 + 2.0 * math.cos(2.0 * math.pi * sys.alpha[axis])
    ) / (2.0 * d + 1.0)


def bernoulli_indicator_l2(
    rho_powers: list[SparseMeasure], n: int
) -> float:
    """Exact L2 deviation of a single-bit indicator: sqrt(rho^{*2n}(e)) / 2."""
    if 2 * n > len(rho_powers):
        raise DomainError("need rho powers up to 2n")
    spec = rho_powers[0].spec
    return math.sqrt(rho_powers[2 * n - 1].mass(groups.identity(spec))) / 2.0


def convergence_report(
    sys: DynamicalSystem,
    f: ObservableSpec,
    n_max: int,
    samples: int,
    seed: int = 0,
    final_tolerance: float | None = None,
) -> dict:
    """Per-n sampled deviations |A^n f - mean| with closed-form cross-checks.

    The trend check asks the L2 deviations to be non-increasing within a
    Monte-Carlo envelope; a rate is never assumed.  The report records the
    strict-aperiodicity witness rho(e) > 0.
    """
    spec = sys.group
    rho = measures.step_distribution(spec)
    depth = 2 * n_max if sys.kind == "bernoulli" else n_max
    rho_powers = measures.convolution_powers(spec, rho, depth)
    probe = DynamicalSystem(
        sys.kind, sys.group, dynamics._derived_seed(sys.seed, "jrt", seed), sys.alpha
    )
    points = [dynamics.sample_point(probe, i) for i in range(samples)]
    sup_dev: list[float] = []
    l2_dev: list[float] = []
    se_l2: list[float] = []
    for n in range(n_max + 1):
        devs = np.array(
            [markov_average(sys, f, n, x, rho_powers) - f.mean for x in points]
        )
        sup_dev.append(float(np.abs(devs).max()))
        second = devs * devs
        l2_dev.append(float(math.sqrt(second.mean())))
        se_l2.append(float(second.std(ddof=1) / math.sqrt(samples)))
    expected = None
    if sys.kind == "rotation" and f.kind == "cos":
        lam = rotation_eigenvalue(sys, f.payload)
        base = l2_dev[0]
        expected = [base * abs(lam) ** n for n in range(n_max + 1)]
    elif sys.kind == "bernoulli" and f.kind == "indicator" and len(f.payload.bits) == 1:
        # at n=0 the deviation of a fair bit from its mean is 1/2 exactly
        expected = [0.5] + [
            bernoulli_indicator_l2(rho_powers, n) for n in range(1, n_max + 1)
        ]
    envelope = [se * 4 for se in se_l2]
    trend_ok = all(
        l2_dev[n] <= l2_dev[n - 1] + envelope[n] + envelope[n - 1]
        for n in range(1, n_max + 1)
    )
    tol = final_tolerance
    final_ok = True if tol is None else l2_dev[-1] <= tol
    return {
        "system": sys.to_dict(),
        "observable": f.kind,
        "n_max": n_max,
        "samples": samples,
        "seed": seed,
        "aperiodicity_witness": rho.mass(groups.identity(spec)),
        "sup_dev": sup_dev,
        "l2_dev": l2_dev,
        "l2_se": se_l2,
        "expected_l2": expected,
        "trend_pass": bool(trend_ok),
        "final_tolerance": tol,
        "final_pass": bool(final_ok),
        "pass": bool(trend_ok and final_ok),
    }


def contraction_report(
    sys: DynamicalSystem,
    f: ObservableSpec,
    n_max: int,
    samples: int,
    seed: int = 0,
) -> dict:
    """Sampled sup |A^n f| <= bound, and positivity for nonnegative f."""
    spec = sys.group
    rho_powers = measures.convolution_powers(
        spec, measures.step_distribution(spec), max(n_max, 1)
    )
    probe = DynamicalSystem(
        sys.kind, sys.group, dynamics._derived_seed(sys.seed, "contr", seed), sys.alpha
    )
    worst = 0.0
    min_val = math.inf
    for i in range(samples):
        x = dynamics.sample_point(probe, i)
        for n in range(n_max + 1):
            v = markov_average(sys, f, n, x, rho_powers)
            worst = max(worst, abs(v))
            min_val = min(min_val, v)
    return {
        "sup_abs": worst,
        "min_value": min_val,
        "bound": f.bound,
        "pass": worst <= f.bound + 1e-12,
    }
