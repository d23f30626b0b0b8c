"""Step distributions, sparse convolution, and truncated walk weights.

The weight in force is w(g) = sum_{n>=1} p_n rho^{*n}(g) with p_n geometric,
truncated at depth ``n_max`` and carrying the exact tail mass q^n_max.
Tables retain every convolution power so that certificates can compare
values at matched truncation depths (see ``weight_ratio``): the truncated
one-step comparison

    sum_{n<=M} p_n rho^{*n}(g a)  <=  (2d+1) C  sum_{n<=M+1} p_n rho^{*n}(g)

is an exact inequality for every g, while the naive ratio of a single table
against itself fails near the support edge, where the deeper side of the
translation loses more truncated mass than the shallow side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import groups
from .errors import CapacityError, DegenerateRestrictionError, DomainError
from .groups import GroupSpec

DEFAULT_SUPPORT_CAP = 10**6

MASS_TOL = 1e-12


@dataclass
class SparseMeasure:
    """A finitely supported nonnegative measure; zero masses are dropped."""

    spec: GroupSpec
    masses: dict
    symmetric: bool = False

    def __post_init__(self):
        self.masses = {g: m for g, m in self.masses.items() if m != 0.0}
        for g, m in self.masses.items():
            groups.check_element(self.spec, g)
            if m < 0:
                raise DomainError(f"negative mass {m} at {g}")

    def mass(self, g) -> float:
        return self.masses.get(g, 0.0)

    def total(self) -> float:
        return sum(self.masses[g] for g in self.support())

    def support(self) -> list:
        return sorted(self.masses, key=lambda g: groups.sort_key(self.spec, g))

    def is_probability(self, tol: float = MASS_TOL) -> bool:
        return abs(self.total() - 1.0) <= tol

    def check_symmetry(self) -> bool:
        inv = groups.inverse
        return all(
            self.masses.get(inv(self.spec, g)) == m for g, m in self.masses.items()
        )


def step_distribution(spec: GroupSpec) -> SparseMeasure:
    """Uniform mass 1/(2d+1) on the identity and the symmetric generators."""
    gens = groups.generators(spec)
    mass = 1.0 / (2 * spec.d + 1)
    table = {groups.identity(spec): mass}
    for a in gens:
        table[a] = mass
    return SparseMeasure(spec, table, symmetric=True)


def convolve(
    spec: GroupSpec,
    mu: SparseMeasure,
    nu: SparseMeasure,
    cap: int = DEFAULT_SUPPORT_CAP,
) -> SparseMeasure:
    """(mu*nu)(g) = sum_h mu(g h^-1) nu(h), accumulated in canonical order."""
    if mu.spec != spec or nu.spec != spec:
        raise DomainError("measure specs do not match")
    acc: dict = {}
    mu_support = mu.support()
    nu_support = nu.support()
    multiply = groups.multiply
    for x in mu_support:
        mx = mu.masses[x]
        for y in nu_support:
            g = multiply(spec, x, y)
            acc[g] = acc.get(g, 0.0) + mx * nu.masses[y]
        if len(acc) > cap:
            raise CapacityError(f"convolution support exceeds cap {cap}")
    out = SparseMeasure(spec, acc)
    out.symmetric = out.check_symmetry()
    return out


def _mirror(spec: GroupSpec, measure: SparseMeasure) -> SparseMeasure:
    """Force exact symmetry by copying each value from the canonical side.

    Used for powers of a symmetric measure, whose symmetry is exact in exact
    arithmetic but can drift by an ulp under floating-point summation order.
    """
    fixed: dict = {}
    for g in measure.support():
        gi = groups.inverse(spec, g)
        rep = min(g, gi, key=lambda h: groups.sort_key(spec, h))
        fixed[g] = measure.masses[rep]
    return SparseMeasure(spec, fixed, symmetric=True)


def convolution_powers(
    spec: GroupSpec,
    rho: SparseMeasure,
    n: int,
    cap: int = DEFAULT_SUPPORT_CAP,
) -> list[SparseMeasure]:
    """[rho, rho^{*2}, ..., rho^{*n}]."""
    if n < 1:
        raise DomainError("need n >= 1")
    out = [rho]
    for _ in range(n - 1):
        nxt = convolve(spec, out[-1], rho, cap=cap)
        if rho.symmetric:
            nxt = _mirror(spec, nxt)
        out.append(nxt)
    return out


def convolution_power(
    spec: GroupSpec,
    rho: SparseMeasure,
    n: int,
    cap: int = DEFAULT_SUPPORT_CAP,
) -> SparseMeasure:
    return convolution_powers(spec, rho, n, cap=cap)[-1]


@dataclass(frozen=True)
class WeightParams:
    """Geometric step-mixing weights p_n = (1-q) q^(n-1); ratio C = 1/q."""

    q: float = 0.5
    n_max: int = 12

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise DomainError(f"q must be in (0,1), got {self.q}")
        if self.n_max < 1:
            raise DomainError("n_max must be >= 1")

    def p(self, n: int) -> float:
        return (1.0 - self.q) * self.q ** (n - 1)

    @property
    def ratio_bound(self) -> float:
        """C with p_n / p_{n+1} = C for every n."""
        return 1.0 / self.q

    @property
    def tail(self) -> float:
        return self.q**self.n_max


def default_params(spec: GroupSpec) -> WeightParams:
    """Defaults keep the support comfortably inside the ball cap."""
    if spec.kind == "free":
        return WeightParams(q=0.5, n_max=10)
    if spec.kind in ("integers", "lattice"):
        return WeightParams(q=0.5, n_max=40)
    return WeightParams(q=0.5, n_max=12)


@dataclass
class WeightTable:
    """Truncated weight w(g) = sum_{n<=n_max} p_n rho^{*n}(g).

    ``powers`` retains every convolution power so depth-limited partial
    weights are available; ``tail_bound`` = q^n_max is the exact mass of the
    dropped terms.
    """

    spec: GroupSpec
    params: WeightParams
    powers: tuple
    table: dict
    tail_bound: float
    _partials: dict = field(default_factory=dict, repr=False)

    def weight(self, g) -> float:
        return self.table.get(g, 0.0)

    def support(self) -> list:
        return sorted(self.table, key=lambda g: groups.sort_key(self.spec, g))

    def stored_mass(self) -> float:
        return sum(self.table[g] for g in self.support())

    def partial_table(self, depth: int) -> dict:
        """Weights truncated at ``depth`` <= n_max, cached per depth."""
        if not 0 <= depth <= self.params.n_max:
            raise DomainError(f"depth {depth} outside 0..{self.params.n_max}")
        if depth == self.params.n_max:
            return self.table
        if depth not in self._partials:
            acc: dict = {}
            for n in range(1, depth + 1):
                pn = self.params.p(n)
                rho_n = self.powers[n - 1]
                for g in rho_n.support():
                    acc[g] = acc.get(g, 0.0) + pn * rho_n.masses[g]
            self._partials[depth] = acc
        return self._partials[depth]

    def partial_weight(self, g, depth: int) -> float:
        return self.partial_table(depth).get(g, 0.0)

    def mass_in_ball(self, n: int) -> float:
        inside = set(groups.ball(self.spec, n))
        return sum(self.table[g] for g in self.support() if g in inside)

    def tail_mass_outside_ball(self, n: int) -> float:
        """Conservative bound on the true w-mass outside B_n."""
        return max(0.0, 1.0 - self.mass_in_ball(n)) + self.tail_bound


def build_weight(
    spec: GroupSpec,
    params: WeightParams,
    cap: int = DEFAULT_SUPPORT_CAP,
) -> WeightTable:
    rho = step_distribution(spec)
    powers = convolution_powers(spec, rho, params.n_max, cap=cap)
    table: dict = {}
    for n, rho_n in enumerate(powers, start=1):
        pn = params.p(n)
        for g in rho_n.support():
            table[g] = table.get(g, 0.0) + pn * rho_n.masses[g]
    return WeightTable(
        spec=spec,
        params=params,
        powers=tuple(powers),
        table=table,
        tail_bound=params.tail,
    )


def translation_bound(spec: GroupSpec, params: WeightParams, length: int) -> float:
    """M_b = ((2d+1) C)^|b| for a translation of word length |b|."""
    return ((2 * spec.d + 1) * params.ratio_bound) ** length


def weight_ratio(spec: GroupSpec, w: WeightTable, b) -> dict:
    """Certified two-sided translation bounds for w(g b) against w(g).

    Scans every g in the interior domain B(n_max - |b|).  The certified upper
    ratio compares the numerator truncated at depth n_max - |b| with the full
    denominator, which is the exact truncated form of the one-step translation bound;
    the report also carries the uncertified single-table ratio for reference.
    """
    groups.check_element(spec, b)
    length = groups.word_length(spec, b)
    n_max = w.params.n_max
    if length > n_max - 1 and length > 0:
        raise DomainError(f"|b|={length} leaves no interior domain (n_max={n_max})")
    bound = translation_bound(spec, params=w.params, length=length)
    depth = n_max - length
    domain = groups.ball(spec, depth)
    upper_max = 0.0
    lower_min = math.inf
    plain_max = 0.0
    evaluated = 0
    for g in domain:
        gb = groups.multiply(spec, g, b)
        den = w.weight(g)
        full_gb = w.weight(gb)
        if den > 0.0:
            evaluated += 1
            upper_max = max(upper_max, w.partial_weight(gb, depth) / den)
            if full_gb > 0.0:
                plain_max = max(plain_max, full_gb / den)
        num_g = w.partial_weight(g, depth)
        if full_gb > 0.0 and num_g > 0.0:
            lower_min = min(lower_min, full_gb / num_g)
    if evaluated == 0:
        raise DomainError("empty evaluation domain for weight ratio")
    lower_ok = lower_min is math.inf or lower_min >= 1.0 / bound / (1 + 1e-12)
    return {
        "b": groups.element_str(spec, b),
        "word_length": length,
        "bound": bound,
        "lower_bound": 1.0 / bound,
        "observed_max": upper_max,
        "observed_min": None if lower_min is math.inf else lower_min,
        "plain_table_max": plain_max,
        "numerator_depth": depth,
        "denominator_depth": n_max,
        "domain": f"ball({depth})",
        "n_evaluated": evaluated,
        "pass": bool(upper_max <= bound * (1 + 1e-12) and lower_ok),
    }


def restrict_renormalize(w_amb: WeightTable, emb: groups.Embedding) -> SparseMeasure:
    """Pull the ambient weight back along an embedding and renormalize.

    The result is a probability measure on the subgroup, supported on the
    window of subgroup elements whose images carry stored ambient weight.
    """
    sub = emb.spec_sub
    window = groups.ball(sub, w_amb.params.n_max)
    table: dict = {}
    for h in window:
        val = w_amb.weight(emb.map(h))
        if val > 0.0:
            table[h] = val
    total = sum(table[h] for h in sorted(table, key=lambda g: groups.sort_key(sub, g)))
    if total <= 0.0:
        raise DegenerateRestrictionError("restricted weight has zero mass")
    out = SparseMeasure(sub, {h: v / total for h, v in table.items()})
    out.symmetric = out.check_symmetry()
    return out


def restricted_ratio_certificate(
    w_amb: WeightTable, emb: groups.Embedding, b_sub
) -> dict:
    """Two-sided translation bounds for the restricted measure.

    Checked at the ambient level at matched truncation depths (the common
    normalizer cancels), over the window where both points are stored.
    """
    sub, amb = emb.spec_sub, emb.spec_amb
    groups.check_element(sub, b_sub)
    b_amb = emb.map(b_sub)
    length = groups.word_length(amb, b_amb)
    n_max = w_amb.params.n_max
    depth = n_max - length
    if depth < 0:
        raise DomainError("translation image longer than stored depth")
    bound = translation_bound(amb, w_amb.params, length)
    window = groups.ball(sub, depth)
    upper_max = 0.0
    lower_min = float("inf")
    count = 0
    for h in window:
        img = emb.map(h)
        img_b = groups.multiply(amb, img, b_amb)
        den = w_amb.weight(img)
        if den <= 0.0:
            continue
        count += 1
        upper_max = max(upper_max, w_amb.partial_weight(img_b, depth) / den)
        full_b = w_amb.weight(img_b)
        part_h = w_amb.partial_weight(img, depth)
        if full_b > 0.0 and part_h > 0.0:
            lower_min = min(lower_min, full_b / part_h)
    if count == 0:
        raise DomainError("empty evaluation window for restricted ratios")
    return {
        "b": groups.element_str(sub, b_sub),
        "bound": bound,
        "lower_bound": 1.0 / bound,
        "observed_max": upper_max,
        "observed_min": lower_min,
        "n_evaluated": count,
        "domain": f"subgroup ball({depth})",
        "pass": bool(
            upper_max <= bound * (1 + 1e-12) and lower_min >= 1.0 / bound / (1 + 1e-12)
        ),
    }
