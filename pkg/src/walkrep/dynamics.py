"""Measure-preserving systems, lazy sample points, cylinder families, and
marker towers.

Two system kinds:

* ``bernoulli`` -- the two-sided fair-coin shift indexed by any finitely
  generated roster group.  A sampled point realizes its coordinates lazily
  from a keyed hash, so reads are deterministic, i.i.d. fair bits, and
  exactly equivariant: acting by ``h`` only composes the stored offset.
* ``rotation`` -- products of circle rotations for the integer/lattice
  kinds, with an irrational frequency vector.

Towers are marker events: the base E is "the marker pattern occurs at the
origin and at no nearby offset".  With the marker longer than twice the
tower height the nearby occurrences are impossible by overlap, so the base
measure is an exact cylinder measure and the ball translates of E are
disjoint by construction; both facts are also checked by Monte Carlo.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import groups, stats
from .errors import DomainError, TowerConstructionError
from .groups import GroupSpec

SQRT2_MINUS_1 = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class DynamicalSystem:
    """A Bernoulli shift or an irrational rotation product over a group."""

    kind: str
    group: GroupSpec
    seed: int
    alpha: tuple = ()

    def __post_init__(self):
        if self.kind not in ("bernoulli", "rotation"):
            raise DomainError(f"unknown system kind {self.kind!r}")
        if not self.group.finitely_generated:
            raise DomainError("systems act through finitely generated kinds")
        if self.kind == "rotation":
            if self.group.kind not in ("integers", "lattice"):
                raise DomainError("rotation systems need integer/lattice groups")
            if len(self.alpha) != self.group.d:
                raise DomainError("frequency vector length must equal the rank")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "group": self.group.to_dict(),
            "seed": self.seed,
            "alpha": list(self.alpha),
        }


def bernoulli_system(group: GroupSpec, seed: int) -> DynamicalSystem:
    return DynamicalSystem("bernoulli", group, seed)


def rotation_system(group: GroupSpec, seed: int, alpha=None) -> DynamicalSystem:
    if alpha is None:
        alpha = (SQRT2_MINUS_1,) * group.d
    return DynamicalSystem("rotation", group, seed, tuple(alpha))


class _BernoulliRoot:
    """Shared coordinate source for one sampled point and all its translates."""

    __slots__ = ("spec", "key", "bits", "forced")

    def __init__(self, spec: GroupSpec, key: bytes, forced: dict | None = None):
        self.spec = spec
        self.key = key
        self.bits: dict = {}
        self.forced = forced or {}

    def bit(self, position) -> int:
        cached = self.bits.get(position)
        if cached is not None:
            return cached
        forced = self.forced.get(position)
        if forced is not None:
            self.bits[position] = forced
            return forced
        msg = groups.element_str(self.spec, position).encode()
        digest = hashlib.blake2b(msg, key=self.key, digest_size=1).digest()
        value = digest[0] & 1
        self.bits[position] = value
        return value


@dataclass
class PointHandle:
    """A sampled point together with a group offset.

    Bernoulli reads obey ``read(act(h, x), g) == read(x, g h)`` exactly, since
    both sides hash the same absolute position.
    """

    system: DynamicalSystem
    root: object
    offset: object

    def read(self, g) -> int:
        """Coordinate of the point at position g (Bernoulli only)."""
        if self.system.kind != "bernoulli":
            raise DomainError("coordinate reads are for Bernoulli points")
        pos = groups.multiply(self.system.group, g, self.offset)
        return self.root.bit(pos)

    def position(self) -> tuple:
        """Current torus position (rotation only)."""
        if self.system.kind != "rotation":
            raise DomainError("positions are for rotation points")
        base = self.root
        if self.system.group.kind == "integers":
            off = (self.offset,)
        else:
            off = self.offset
        return tuple(
            (u + n * a) % 1.0 for u, n, a in zip(base, off, self.system.alpha)
        )


def _root_key(sys_seed: int, draw: int) -> bytes:
    return hashlib.blake2b(
        struct.pack("<Qq", sys_seed & (2**64 - 1), draw), digest_size=16
    ).digest()


def sample_point(sys: DynamicalSystem, draw: int) -> PointHandle:
    """The ``draw``-th i.i.d. sample; coordinates realize lazily."""
    if sys.kind == "bernoulli":
        root = _BernoulliRoot(sys.group, _root_key(sys.seed, draw))
        return PointHandle(sys, root, groups.identity(sys.group))
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=sys.seed, spawn_key=(draw,))
    )
    u = tuple(float(x) for x in rng.random(sys.group.d))
    zero = 0 if sys.group.kind == "integers" else groups.identity(sys.group)
    return PointHandle(sys, u, zero)


def act(sys: DynamicalSystem, g, x: PointHandle) -> PointHandle:
    """T_g x; exact composition law act(g, act(h, x)) == act(gh, x)."""
    groups.check_element(sys.group, g)
    return PointHandle(sys, x.root, groups.multiply(sys.group, g, x.offset))


@dataclass(frozen=True)
class CylinderSet:
    """Finite coordinate constraints: position -> required bit."""

    bits: tuple  # sorted tuple of (position, bit)

    @staticmethod
    def from_dict(spec: GroupSpec, constraints: dict) -> "CylinderSet":
        items = sorted(
            constraints.items(), key=lambda kv: groups.sort_key(spec, kv[0])
        )
        return CylinderSet(tuple((g, int(b)) for g, b in items))

    def measure(self) -> float:
        return 0.5 ** len(self.bits)

    def contains(self, x: PointHandle) -> bool:
        return all(x.read(g) == b for g, b in self.bits)

    def constraints(self) -> dict:
        return dict(self.bits)


class SetFamily:
    """Dense-in-spirit enumeration of cylinders with infinite repetition.

    Distinct descriptors are all partial bit assignments on the balls B_k,
    enumerated by increasing k (an assignment appears at the first k whose
    ball contains its support).  Index i >= 1 maps to the descriptor at the
    ruler position r(i) = number of trailing zero bits of i, so every
    descriptor recurs infinitely often.
    """

    def __init__(self, spec: GroupSpec):
        if not spec.finitely_generated:
            raise DomainError("cylinder families need word balls")
        self.spec = spec
        self._descriptors: list[CylinderSet] = []
        self._gen = self._generate()

    def _generate(self):
        spec = self.spec
        for k in itertools.count(0):
            ball_k = groups.ball(spec, k)
            prev = set(groups.ball(spec, k - 1)) if k > 0 else set()
            # base-3 digit per coordinate: unset / 0 / 1
            for digits in itertools.product((None, 0, 1), repeat=len(ball_k)):
                support = {
                    g: b for g, b in zip(ball_k, digits) if b is not None
                }
                if k > 0 and set(support) <= prev:
                    continue  # already enumerated at a smaller k
                yield CylinderSet.from_dict(spec, support)

    def descriptor(self, j: int) -> CylinderSet:
        while len(self._descriptors) <= j:
            self._descriptors.append(next(self._gen))
        return self._descriptors[j]

    @staticmethod
    def ruler(i: int) -> int:
        """Position of the lowest set bit of i (i >= 1)."""
        if i < 1:
            raise DomainError("family indices start at 1")
        return (i & -i).bit_length() - 1

    def set_at(self, i: int) -> CylinderSet:
        return self.descriptor(self.ruler(i))

    def eval_set(self, i: int, x: PointHandle) -> bool:
        return self.set_at(i).contains(x)


def _marker_pattern(spec: GroupSpec, length: int) -> dict:
    """All-ones on a canonical window plus a single 0 cell just past it.

    integers: positions 0..length-1 carry 1, position ``length`` carries 0.
    lattice d: the analogous run along the first axis for each row of a
    side-s block, with s^d cells of 1s and one 0 cell; ``length`` counts the
    1-cells along the first axis (block side).
    """
    if spec.kind == "integers":
        pattern = {i: 1 for i in range(length)}
        pattern[length] = 0
        return pattern
    if spec.kind == "lattice":
        side = length
        cells = itertools.product(range(side), repeat=spec.d)
        pattern = {tuple(c): 1 for c in cells}
        zero_cell = (side,) + (0,) * (spec.d - 1)
        pattern[zero_cell] = 0
        return pattern
    raise DomainError("towers are built for integer/lattice Bernoulli shifts")


@dataclass
class TowerSpec:
    """Marker-based tower base E with exact measure bookkeeping.

    ``pattern`` constrains coordinates at fixed positions; ``exclusion``
    lists the nonzero offsets m for which a marker occurrence at m is
    forbidden.  When every pairwise overlap of the pattern with its
    exclusion translates is contradictory, mu(E) equals the pattern measure
    exactly; otherwise the stored lower bound subtracts the compatible
    overlaps (Bonferroni).
    """

    system: DynamicalSystem
    n: int
    eta: float
    pattern: dict
    exclusion: tuple
    mu_pattern: float
    mu_e_lower: float
    mu_e_upper: float
    mc_samples: int = 0
    mc_hits_bn: int = 0
    mc_ci_upper: float = 1.0
    collisions: int = 0

    @property
    def spec(self) -> GroupSpec:
        return self.system.group

    def mu_bn_upper(self) -> float:
        return len(groups.ball(self.spec, self.n)) * self.mu_e_upper

    def marker_at(self, x: PointHandle, offset) -> bool:
        spec = self.spec
        for p, b in self.pattern.items():
            if x.read(groups.multiply(spec, p, offset)) != b:
                return False
        return True

    def in_base(self, x: PointHandle) -> bool:
        """x in E: marker at the origin, no marker at an excluded offset."""
        if not self.marker_at(x, groups.identity(self.spec)):
            return False
        return all(not self.marker_at(x, m) for m in self.exclusion)

    def locate(self, x: PointHandle):
        """The unique g in B_n with T_{g^-1} x in E, or None."""
        sys = self.system
        for g in groups.ball(self.spec, self.n):
            if self.in_base(act(sys, groups.inverse(self.spec, g), x)):
                return g
        return None

    def to_dict(self) -> dict:
        spec = self.spec
        return {
            "n": self.n,
            "eta": self.eta,
            "pattern": [[groups.element_str(spec, p), b] for p, b in sorted(
                self.pattern.items(), key=lambda kv: groups.sort_key(spec, kv[0])
            )],
            "n_excluded": len(self.exclusion),
            "mu_pattern": self.mu_pattern,
            "mu_e_lower": self.mu_e_lower,
            "mu_e_upper": self.mu_e_upper,
            "mu_bn_upper": self.mu_bn_upper(),
            "mc": {
                "samples": self.mc_samples,
                "hits_bn": self.mc_hits_bn,
                "ci_upper": self.mc_ci_upper,
                "collisions": self.collisions,
            },
        }


def _shifted_pattern(spec: GroupSpec, pattern: dict, offset) -> dict:
    return {groups.multiply(spec, p, offset): b for p, b in pattern.items()}


def _patterns_compatible(a: dict, b: dict) -> bool:
    return all(b.get(p, v) == v for p, v in a.items())


def _pattern_union_size(a: dict, b: dict) -> int:
    return len(set(a) | set(b))


def rokhlin_tower(
    sys: DynamicalSystem,
    n: int,
    eta: float,
    seed: int = 0,
    mc_samples: int = 0,
    rarity_factor: float = 1.0,
    base_within: CylinderSet | None = None,
    max_marker: int = 220,
) -> TowerSpec:
    """A base event E whose B_n translates are disjoint, with mu(B_n E) < eta/2.

    The marker length grows until ``|B_n| * mu(pattern) * rarity_factor``
    drops below eta/2 (rarity_factor > 1 reserves room for later trimming of
    E).  Monte-Carlo estimation of mu(B_n E) and a translate-collision scan
    run when ``mc_samples`` > 0.
    """
    if sys.kind != "bernoulli":
        raise DomainError("towers are built on Bernoulli systems")
    spec = sys.group
    if spec.kind not in ("integers", "lattice"):
        raise DomainError("towers are built for integer/lattice shifts")
    if not 0.0 < eta < 1.0:
        raise DomainError("eta must be in (0,1)")
    ball_n = groups.ball(spec, n)
    target = eta / 2.0 / max(rarity_factor, 1.0)

    length = max(2 * n, 2)
    while True:
        pattern = _marker_pattern(spec, length)
        if base_within is not None:
            merged = dict(base_within.constraints())
            for p, b in pattern.items():
                if merged.get(p, b) != b:
                    raise TowerConstructionError(
                        "marker contradicts the prescribed base cylinder"
                    )
                merged[p] = b
            pattern = merged
        mu_pattern = 0.5 ** len(pattern)
        if len(ball_n) * mu_pattern < target:
            break
        length += 1
        if length > max_marker:
            raise TowerConstructionError(
                f"no marker of length <= {max_marker} reaches "
                f"mu(B_n E) < {target:.3g}; lengthen the cap or relax eta"
            )

    exclusion = tuple(
        m for m in groups.ball(spec, 2 * n) if m != groups.identity(spec)
    )
    # exact measure when every excluded overlap contradicts the pattern
    overlap_loss = 0.0
    for m in exclusion:
        shifted = _shifted_pattern(spec, pattern, m)
        if _patterns_compatible(pattern, shifted):
            overlap_loss += 0.5 ** _pattern_union_size(pattern, shifted)
    mu_e_lower = mu_pattern - overlap_loss
    if mu_e_lower <= 0.0:
        raise TowerConstructionError("marker exclusions exhaust the base event")
    tower = TowerSpec(
        system=sys,
        n=n,
        eta=eta,
        pattern=pattern,
        exclusion=exclusion,
        mu_pattern=mu_pattern,
        mu_e_lower=mu_e_lower,
        mu_e_upper=mu_pattern,
    )
    if mc_samples > 0:
        _tower_monte_carlo(tower, mc_samples, seed)
    return tower


def _tower_monte_carlo(tower: TowerSpec, samples: int, seed: int) -> None:
    sys = tower.system
    spec = tower.spec
    probe = DynamicalSystem(sys.kind, sys.group, _derived_seed(sys.seed, "tower", seed))
    ball_n = groups.ball(spec, tower.n)
    hits = 0
    collisions = 0
    for draw in range(samples):
        x = sample_point(probe, draw)
        located = [
            g
            for g in ball_n
            if tower.in_base(act(probe, groups.inverse(spec, g), x))
        ]
        if located:
            hits += 1
        if len(located) > 1:
            collisions += 1
    tower.mc_samples = samples
    tower.mc_hits_bn = hits
    tower.collisions = collisions
    tower.mc_ci_upper = stats.clopper_pearson(hits, samples)[1]


def _derived_seed(*parts) -> int:
    msg = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def conditional_base_sampler(tower: TowerSpec, seed: int):
    """Yield points distributed as mu( . | E ).

    The marker pattern is forced bit-by-bit (its conditional law), then
    candidate roots are rejected until the exclusion clauses hold; rejection
    touches only free coordinates, so the accepted point follows the
    conditional measure exactly.
    """
    sys = tower.system
    counter = 0
    draw = 0
    while True:
        root = _BernoulliRoot(
            sys.group,
            _root_key(_derived_seed(sys.seed, "cond", seed, counter), draw),
            forced=dict(tower.pattern),
        )
        x = PointHandle(sys, root, groups.identity(sys.group))
        draw += 1
        if draw % 997 == 0:
            counter += 1
        if tower.in_base(x):
            yield x


def measure_preservation_report(
    sys: DynamicalSystem,
    cyl: CylinderSet,
    g,
    samples: int,
    seed: int = 0,
) -> dict:
    """Empirical mu(T_g^{-1} A) vs the exact cylinder measure, with CI."""
    probe = DynamicalSystem(sys.kind, sys.group, _derived_seed(sys.seed, "mp", seed))
    hits = 0
    for draw in range(samples):
        x = sample_point(probe, draw)
        if cyl.contains(act(probe, g, x)):
            hits += 1
    exact = cyl.measure()
    se = math.sqrt(exact * (1 - exact) / samples)
    return {
        "exact": exact,
        "estimate": hits / samples,
        "samples": samples,
        "dev_in_se": abs(hits / samples - exact) / se if se > 0 else 0.0,
        "pass": abs(hits / samples - exact) <= 4 * se + 1e-12,
    }


def freeness_report(
    sys: DynamicalSystem, radius: int, points: int, seed: int = 0
) -> dict:
    """For sampled points and g in B_radius minus e, some coordinate differs."""
    spec = sys.group
    probe = DynamicalSystem(sys.kind, sys.group, _derived_seed(sys.seed, "free", seed))
    witnesses = groups.ball(spec, radius + 2)
    failures = 0
    checked = 0
    for draw in range(points):
        x = sample_point(probe, draw)
        for g in groups.ball(spec, radius):
            if g == groups.identity(spec):
                continue
            checked += 1
            moved = act(probe, g, x)
            if not any(x.read(h) != moved.read(h) for h in witnesses):
                failures += 1
    return {"checked": checked, "failures": failures, "pass": failures == 0}
