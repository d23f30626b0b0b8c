"""Staged construction of a finite-valued function whose orbit map embeds a
Bernoulli system into the weighted sequence space, plus its verification
battery and the doubling-shift baseline.

A model is a list of stages.  Stage j carries a tower patch (erase on
B_N E_j, write the ball center on B_{N0} E_j, zero on the annulus) followed
by a value split (every constancy value u becomes u -+ s, routed by
membership in the j-th enumerated cylinder).  Evaluating the function at a
point walks the stages in order, so a point's value depends on finitely
many coordinates, all of them pinned in the point's bit cache.

Bookkeeping per stage records the two value sets per level, their interval
covers, the separation / exception / hitting / cover-width budgets, and the
per-stage checks.  Conventions chosen where the construction leaves a free
hand (and enforced by the recorded checks):

* stage-1 split offset is the configured ``eps1``, making the first-level
  separation exactly twice ``eps1``;
* later split offsets are an eighth of the previous cover width;
* the recorded separation budget of a new level is the observed minimal
  gap deflated by the stage's (1 + 1/n) factor, so the level-n separation
  condition holds at creation by construction;
* exception budgets halve per level; hitting budgets come from the exact
  marker measure of the stage tower, deflated by (1 + 1/n) and a safety
  factor so the Monte-Carlo lower confidence bound can clear them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, groups, space, stats
from .dynamics import DynamicalSystem, PointHandle, SetFamily, TowerSpec
from .errors import DomainError, StageError
from .groups import GroupSpec
from .measures import WeightTable
from .space import WeightedVector

Z95 = stats.Z95


# ---------------------------------------------------------------------------
# basis balls


@dataclass(frozen=True)
class BallSpec:
    """An open ball with a dyadic finite-support center.

    ``level`` is the dyadic scale m: the support lies in B_m and every
    coefficient is j / 2^m with |j| <= 2^(2m).
    """

    index: int
    level: int
    center: tuple  # sorted tuple of (element, coefficient)
    radius: float

    def center_dict(self) -> dict:
        return dict(self.center)

    def center_vector(self, w: WeightTable) -> WeightedVector:
        return WeightedVector(w, dict(self.center))

    def max_abs(self) -> float:
        return max((abs(c) for _, c in self.center), default=0.0)

    def to_dict(self, spec: GroupSpec) -> dict:
        return {
            "index": self.index,
            "level": self.level,
            "radius": self.radius,
            "center": [[_elem_to_json(spec, g), c] for g, c in self.center],
        }


def _zigzag(t: int) -> int:
    """0, 1, -1, 2, -2, ..."""
    if t == 0:
        return 0
    half, odd = divmod(t + 1, 2)
    return half if odd == 0 else -half


def _center_count(spec: GroupSpec, m: int) -> int:
    radix = 2 * 4**m + 1
    return radix ** len(groups.ball(spec, m))


def _decode_center(spec: GroupSpec, m: int, c: int) -> tuple:
    ball_m = groups.ball(spec, m)
    radix = 2 * 4**m + 1
    coeffs = []
    for g in ball_m:
        c, digit = divmod(c, radix)
        j = _zigzag(digit)
        if j:
            coeffs.append((g, j / 2**m))
    return tuple(coeffs)


def _ball_descriptors(spec: GroupSpec):
    """Diagonal stream of (level m, radius exponent mp, center index c)."""
    for s in itertools.count(0):
        for m in range(s + 1):
            c_cap = min(_center_count(spec, m), s + 1)
            for mp in range(s + 1):
                for c in range(c_cap):
                    if max(m, mp, c) == s:
                        yield (m, mp, c)


def basis_balls(k: int, spec: GroupSpec) -> BallSpec:
    """The k-th ball of the dyadic basis enumeration (k = 0 is (0, radius 1))."""
    if k < 0:
        raise DomainError("ball index must be >= 0")
    for i, (m, mp, c) in enumerate(_ball_descriptors(spec)):
        if i == k:
            return BallSpec(
                index=k,
                level=m,
                center=_decode_center(spec, m, c),
                radius=2.0**-mp,
            )
    raise DomainError("unreachable")  # pragma: no cover


# ---------------------------------------------------------------------------
# model stages


@dataclass
class StagePatch:
    """Erase on B_n E, write the center on B_{n0} E, zero on the annulus."""

    tower: TowerSpec
    xi: dict  # element of B_{n0} -> value
    n0: int
    n: int


@dataclass
class StageSplit:
    """u -> (u - s, u + s); the minus side is taken on the routing set."""

    a_index: int
    offset: float
    split_map: dict  # value -> (u0, u1)


@dataclass
class ModelStage:
    patch: StagePatch
    split: StageSplit | None = None


@dataclass
class StageState:
    """Snapshot recorded after stage n completes."""

    n: int
    ball: BallSpec
    eta: float
    beta: float
    eps: dict
    gamma: dict
    delta: dict
    range_values: tuple
    value_sets: dict  # level -> (tuple minus-side, tuple plus-side)
    covers: dict  # level -> (tuple of (lo,hi), tuple of (lo,hi))
    checks: dict = field(default_factory=dict)

    def to_dict(self, spec: GroupSpec) -> dict:
        return {
            "n": self.n,
            "ball": self.ball.to_dict(spec),
            "eta": self.eta,
            "beta": self.beta,
            "eps": {str(i): v for i, v in self.eps.items()},
            "gamma": {str(i): v for i, v in self.gamma.items()},
            "delta": {str(i): v for i, v in self.delta.items()},
            "range_values": list(self.range_values),
            "value_sets": {
                str(i): [list(v0), list(v1)] for i, (v0, v1) in self.value_sets.items()
            },
            "covers": {
                str(i): [[list(iv) for iv in c0], [list(iv) for iv in c1]]
                for i, (c0, c1) in self.covers.items()
            },
            "checks": self.checks,
        }


@dataclass
class ModelFunction:
    """The staged finite-valued function, evaluable at sampled points."""

    system: DynamicalSystem
    stages: list
    family: SetFamily

    @property
    def spec(self) -> GroupSpec:
        return self.system.group

    def range_values(self) -> tuple:
        """Analytic range after the last stage (values the evaluator can emit)."""
        values = {0.0}
        for st in self.stages:
            values |= set(st.patch.xi.values()) | {0.0}
            if st.split is not None:
                values = {
                    v for u in values for v in st.split.split_map[u]
                }
        return tuple(sorted(values))

    def max_abs(self) -> float:
        return max((abs(v) for v in self.range_values()), default=0.0)

    def to_dict(self) -> dict:
        spec = self.spec
        out = {"system": self.system.to_dict(), "stages": []}
        for st in self.stages:
            d = {
                "tower": st.patch.tower.to_dict(),
                "tower_pattern": [
                    [_elem_to_json(spec, p), b] for p, b in sorted(
                        st.patch.tower.pattern.items(),
                        key=lambda kv: groups.sort_key(spec, kv[0]),
                    )
                ],
                "xi": [
                    [_elem_to_json(spec, g), v] for g, v in sorted(
                        st.patch.xi.items(),
                        key=lambda kv: groups.sort_key(spec, kv[0]),
                    )
                ],
                "n0": st.patch.n0,
                "n": st.patch.n,
                "split": None
                if st.split is None
                else {
                    "a_index": st.split.a_index,
                    "offset": st.split.offset,
                    "map": [
                        [u.hex(), [v[0].hex(), v[1].hex()]]
                        for u, v in sorted(st.split.split_map.items())
                    ],
                },
            }
            out["stages"].append(d)
        return out


def _elem_to_json(spec: GroupSpec, g):
    if spec.kind == "integers":
        return g
    return list(g)


def _elem_from_json(spec: GroupSpec, v):
    if spec.kind == "integers":
        return int(v)
    return tuple(int(c) for c in v)


def model_from_dict(data: dict) -> ModelFunction:
    sysd = data["system"]
    spec = GroupSpec(sysd["group"]["kind"], sysd["group"]["d"])
    system = DynamicalSystem(
        sysd["kind"], spec, sysd["seed"], tuple(sysd.get("alpha", ()))
    )
    stages = []
    for sd in data["stages"]:
        pattern = {
            _elem_from_json(spec, p): int(b) for p, b in sd["tower_pattern"]
        }
        n = sd["n"]
        exclusion = tuple(
            m for m in groups.ball(spec, 2 * n) if m != groups.identity(spec)
        )
        td = sd["tower"]
        tower = TowerSpec(
            system=system,
            n=n,
            eta=td["eta"],
            pattern=pattern,
            exclusion=exclusion,
            mu_pattern=td["mu_pattern"],
            mu_e_lower=td["mu_e_lower"],
            mu_e_upper=td["mu_e_upper"],
        )
        xi = {_elem_from_json(spec, g): float(v) for g, v in sd["xi"]}
        patch = StagePatch(tower=tower, xi=xi, n0=sd["n0"], n=n)
        split = None
        if sd["split"] is not None:
            split = StageSplit(
                a_index=sd["split"]["a_index"],
                offset=sd["split"]["offset"],
                split_map={
                    float.fromhex(u): (
                        float.fromhex(v[0]),
                        float.fromhex(v[1]),
                    )
                    for u, v in sd["split"]["map"]
                },
            )
        stages.append(ModelStage(patch=patch, split=split))
    return ModelFunction(system=system, stages=stages, family=SetFamily(spec))


# ---------------------------------------------------------------------------
# evaluation


class ModelEvaluator:
    """Caching evaluator of a model along the orbit of one sampled point.

    All lookups are keyed by absolute group positions (relative coordinate
    times the handle offset), so translates of the same root share every
    cached bit, marker probe, and function value.  Confine an instance to
    one worker: reads mutate the caches.
    """

    def __init__(self, model: ModelFunction, x: PointHandle):
        if x.system.kind != "bernoulli":
            raise DomainError("model evaluation needs a Bernoulli point")
        self.model = model
        self.spec = model.spec
        self.root = PointHandle(x.system, x.root, groups.identity(model.spec))
        n_stages = len(model.stages)
        self._marker: list[dict] = [dict() for _ in range(n_stages)]
        self._base: list[dict] = [dict() for _ in range(n_stages)]
        self._locate: list[dict] = [dict() for _ in range(n_stages)]
        self._route: list[dict] = [dict() for _ in range(n_stages)]
        self._values: list[dict] = [dict() for _ in range(n_stages + 1)]

    def _marker_at(self, j: int, u) -> bool:
        cache = self._marker[j]
        hit = cache.get(u)
        if hit is None:
            spec = self.spec
            read = self.root.read
            mult = groups.multiply
            hit = all(
                read(mult(spec, p, u)) == b
                for p, b in self.model.stages[j].patch.tower.pattern.items()
            )
            cache[u] = hit
        return hit

    def in_base(self, j: int, u) -> bool:
        """Does T_u x lie in the stage-(j+1) base event E?"""
        cache = self._base[j]
        hit = cache.get(u)
        if hit is None:
            if not self._marker_at(j, u):
                hit = False
            else:
                spec = self.spec
                mult = groups.multiply
                hit = all(
                    not self._marker_at(j, mult(spec, m, u))
                    for m in self.model.stages[j].patch.tower.exclusion
                )
            cache[u] = hit
        return hit

    def locate(self, j: int, position):
        """g in B_N with T_{g^-1} T_position x in E_j, or None."""
        cache = self._locate[j]
        if position in cache:
            return cache[position]
        spec = self.spec
        mult = groups.multiply
        inv = groups.inverse
        found = None
        for g in groups.ball(spec, self.model.stages[j].patch.n):
            if self.in_base(j, mult(spec, inv(spec, g), position)):
                found = g
                break
        cache[position] = found
        return found

    def in_routing_set(self, j: int, position) -> bool:
        cache = self._route[j]
        hit = cache.get(position)
        if hit is None:
            cyl = self.model.family.set_at(self.model.stages[j].split.a_index)
            spec = self.spec
            mult = groups.multiply
            read = self.root.read
            hit = all(read(mult(spec, p, position)) == b for p, b in cyl.bits)
            cache[position] = hit
        return hit

    def f_value(self, position, stage_count: int | None = None) -> float:
        """f_n at the point T_position x (n = stage_count, default all)."""
        k = len(self.model.stages) if stage_count is None else stage_count
        v = 0.0
        start = 0
        for j in range(k, 0, -1):
            hit = self._values[j].get(position)
            if hit is not None:
                v = hit
                start = j
                break
        for j in range(start, k):
            stage = self.model.stages[j]
            g = self.locate(j, position)
            if g is not None:
                v = stage.patch.xi.get(g, 0.0)
            if stage.split is not None:
                minus, plus = stage.split.split_map[v]
                v = minus if self.in_routing_set(j, position) else plus
            self._values[j + 1][position] = v
        return v

    def value_at(self, x: PointHandle, stage_count: int | None = None) -> float:
        if x.root is not self.root.root:
            raise DomainError("evaluator is bound to a different point")
        return self.f_value(x.offset, stage_count=stage_count)

    def in_hit_event(self, i: int, n: int, position=None) -> bool:
        """Membership in E^{(n)}_i: the stage-i base, trimmed of the
        B_{N_i + N_j} neighborhoods of all later patch regions j <= n."""
        spec = self.spec
        if position is None:
            position = groups.identity(spec)
        if not self.in_base(i - 1, position):
            return False
        mult = groups.multiply
        inv = groups.inverse
        n_i = self.model.stages[i - 1].patch.n
        for j in range(i + 1, n + 1):
            n_j = self.model.stages[j - 1].patch.n
            for k in groups.ball(spec, n_i + n_j):
                if self.in_base(j - 1, mult(spec, inv(spec, k), position)):
                    return False
        return True


def phi(
    model_or_eval,
    x: PointHandle,
    n_trunc: int,
    w: WeightTable,
    stage_count: int | None = None,
) -> tuple[WeightedVector, float]:
    """Truncated orbit vector {f(T_g x)}_{g in B_n_trunc} plus its tail bound.

    The tail bound is max|f| * sqrt(true w-mass outside the window), with
    the mass bounded by the stored complement plus the truncation tail.
    """
    ev = (
        model_or_eval
        if isinstance(model_or_eval, ModelEvaluator)
        else ModelEvaluator(model_or_eval, x)
    )
    spec = ev.spec
    mult = groups.multiply
    coeffs = {}
    for g in groups.ball(spec, n_trunc):
        coeffs[g] = ev.f_value(mult(spec, g, x.offset), stage_count=stage_count)
    tail = ev.model.max_abs() * math.sqrt(w.tail_mass_outside_ball(n_trunc))
    return WeightedVector(w, coeffs), tail


# ---------------------------------------------------------------------------
# stage construction


@dataclass(frozen=True)
class BuildConfig:
    """Dials of the staged construction (all seeded and deterministic)."""

    stages: int = 4
    initial_eta: float = 0.5
    eps1: float = 0.1
    gamma1: float = 0.05
    delta_cap: float = 0.01
    beta_init: float = 0.02
    n_trunc: int = 16
    base_samples: int = 160
    check_samples: int = 1500
    seed: int = 0
    max_tower_height: int = 24
    delta_safety: float = 0.9

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "initial_eta": self.initial_eta,
            "eps1": self.eps1,
            "gamma1": self.gamma1,
            "delta_cap": self.delta_cap,
            "beta_init": self.beta_init,
            "n_trunc": self.n_trunc,
            "base_samples": self.base_samples,
            "check_samples": self.check_samples,
            "seed": self.seed,
            "max_tower_height": self.max_tower_height,
            "delta_safety": self.delta_safety,
        }


def compute_eta(history: list[StageState]) -> float:
    """min over i <= n of the four stage budgets, scaled by 1/(2n(n+1))."""
    if not history:
        raise DomainError("eta needs at least one completed stage")
    state = history[-1]
    n = state.n
    worst = math.inf
    for i in range(1, n + 1):
        worst = min(
            worst, state.eps[i], state.gamma[i], state.delta[i], _beta_at(history, i)
        )
    return worst / (2 * n * (n + 1))


def _beta_at(history: list[StageState], i: int) -> float:
    return history[i - 1].beta


def _tail_height(
    w: WeightTable, max_abs: float, radius: float, n0: int, cap_height: int
) -> int:
    """Smallest tower height N with max|f| sqrt(tail outside B_N) < radius/2,
    found by doubling from just above the center support."""
    n = max(2 * n0, 2)
    while n <= cap_height:
        tail = w.tail_mass_outside_ball(n)
        if max_abs * math.sqrt(tail) < radius / 2.0:
            return n
        n *= 2
    raise StageError(
        f"tail criterion unsatisfiable: need height > {cap_height} "
        f"for radius {radius} and sup |f| = {max_abs}"
    )


def hit_ball(
    model: ModelFunction,
    history: list[StageState],
    ball: BallSpec,
    w: WeightTable,
    config: BuildConfig,
    quartic_budget: float,
) -> tuple[ModelStage, TowerSpec, float]:
    """Patch the model so the next ball is hit with positive probability.

    Returns the new (patch-only) stage, its tower, and the eta in force.
    The marker is lengthened until both the tower mass target eta/2 and the
    remaining quartic-norm budget hold.
    """
    sys = model.system
    spec = model.spec
    eta = config.initial_eta if not history else compute_eta(history)
    xi = ball.center_dict()
    max_abs = max(model.max_abs(), ball.max_abs())
    n = _tail_height(
        w, max(max_abs, 1e-9), ball.radius, ball.level, config.max_tower_height
    )
    prev_heights = [st.patch.n for st in model.stages]
    blow = max(
        [len(groups.ball(spec, n_i + n)) for n_i in prev_heights]
        + [len(groups.ball(spec, n))]
    )
    rarity = blow / len(groups.ball(spec, n))
    # shrink the base until the quartic budget survives the patch
    patch_sup = max(ball.max_abs(), 0.0)
    factor = 1.0
    while True:
        tower = dynamics.rokhlin_tower(
            sys, n, eta, rarity_factor=rarity * factor
        )
        patch_quartic = tower.mu_bn_upper() * patch_sup**4
        if quartic_budget + patch_quartic < 0.5:
            break
        factor *= 4.0
        if factor > 2**80:
            raise StageError("cannot keep the quartic norm below 1")
    stage = ModelStage(
        patch=StagePatch(tower=tower, xi=xi, n0=ball.level, n=n), split=None
    )
    return stage, tower, eta


def verify_patch(
    model: ModelFunction,
    stage_index: int,
    ball: BallSpec,
    w: WeightTable,
    config: BuildConfig,
    samples: int | None = None,
) -> dict:
    """On conditional draws from E: the window matches the center exactly and
    the full truncated distance stays below half the radius."""
    stage = model.stages[stage_index]
    tower = stage.patch.tower
    spec = model.spec
    draws = samples or config.base_samples
    gen = dynamics.conditional_base_sampler(tower, seed=config.seed + stage_index)
    mismatches = 0
    worst = 0.0
    n_eval = 0
    for _ in range(draws):
        x = next(gen)
        ev = ModelEvaluator(model, x)
        if not ev.in_base(stage_index, groups.identity(spec)):
            continue
        n_eval += 1
        vec, tail = phi(ev, x, stage.patch.n, w, stage_count=stage_index + 1)
        center = ball.center_dict()
        dist2 = 0.0
        for g in groups.ball(spec, stage.patch.n):
            diff = vec.coeffs.get(g, 0.0) - center.get(g, 0.0)
            if stage.split is None and diff != 0.0:
                mismatches += 1
            dist2 += diff * diff * w.weight(g)
        worst = max(worst, math.sqrt(dist2) + tail)
    return {
        "draws": n_eval,
        "window_mismatches": mismatches,
        "worst_distance": worst,
        "radius": ball.radius,
        "pass": bool(mismatches == 0 and worst < ball.radius / 2.0 and n_eval > 0),
    }


def split_values(
    model: ModelFunction,
    history: list[StageState],
    stage_index: int,
    config: BuildConfig,
) -> StageSplit:
    """Split every current value u into u -+ s routed by the next cylinder.

    s is an eighth of the previous cover width (the configured separation
    at stage 1), keeping the offspring inside the interiors of the previous
    covers; all new points must be distinct or the stage fails.
    """
    n_new = stage_index + 1
    if n_new == 1:
        s = config.eps1
    else:
        s = _beta_at(history, n_new - 1) / 8.0
    values = model.range_values()  # range of the patched model f-hat
    split_map = {u: (u - s, u + s) for u in values}
    offspring = [v for pair in split_map.values() for v in pair]
    if len(set(offspring)) != len(offspring):
        raise StageError(
            f"value split collides at offset {s}: gaps {sorted(values)}"
        )
    return StageSplit(a_index=n_new, offset=s, split_map=split_map)


def _update_bookkeeping(
    history: list[StageState],
    stage_index: int,
    split: StageSplit,
    patched_values: tuple,
    tower: TowerSpec,
    ball: BallSpec,
    eta: float,
    config: BuildConfig,
) -> StageState:
    """Derive the stage-(n+1) value sets, covers, and budgets; verify the
    exact separation and nesting conditions on the recorded finite sets."""
    n_new = stage_index + 1
    s = split.offset
    value_sets: dict = {}
    eps: dict = {}
    gamma: dict = {}
    delta: dict = {}
    prev = history[-1] if history else None
    if prev is not None:
        for i, (v0, v1) in prev.value_sets.items():
            moved0 = tuple(sorted({x for u in v0 for x in split.split_map[u]}))
            moved1 = tuple(sorted({x for u in v1 for x in split.split_map[u]}))
            value_sets[i] = (moved0, moved1)
            eps[i] = prev.eps[i]
            gamma[i] = prev.gamma[i]
            delta[i] = prev.delta[i]
    new0 = tuple(sorted(split.split_map[u][0] for u in patched_values))
    new1 = tuple(sorted(split.split_map[u][1] for u in patched_values))
    value_sets[n_new] = (new0, new1)
    gap_new = _set_distance(new0, new1)
    if gap_new <= 0:
        raise StageError("new level separation vanished")
    eps[n_new] = gap_new / (1.0 + 1.0 / n_new)
    gamma[n_new] = config.gamma1 * 0.5 ** (n_new - 1)
    delta[n_new] = min(
        config.delta_cap,
        config.delta_safety * tower.mu_e_lower / (1.0 + 1.0 / n_new),
    )
    # covers: width beta_new around every point, constrained by separation
    # (condition 2), shrinkage (nesting), and the configured initial width
    slack = math.inf
    for i, (v0, v1) in value_sets.items():
        d = _set_distance(v0, v1)
        if d - eps[i] * (1.0 + 1.0 / (n_new + 1)) < 0:
            raise StageError(f"separation at level {i} broken: {d}")
        slack = min(slack, d - eps[i] * (1.0 + 1.0 / (n_new + 1)))
    beta = min(config.beta_init, slack / 2.0)
    if prev is not None:
        beta = min(beta, 0.75 * prev.beta)
    if beta <= 0:
        raise StageError("no positive cover width remains")
    covers = {
        i: (
            tuple((u - beta / 2.0, u + beta / 2.0) for u in v0),
            tuple((u - beta / 2.0, u + beta / 2.0) for u in v1),
        )
        for i, (v0, v1) in value_sets.items()
    }
    state = StageState(
        n=n_new,
        ball=ball,
        eta=eta,
        beta=beta,
        eps=eps,
        gamma=gamma,
        delta=delta,
        range_values=tuple(
            sorted(x for u in patched_values for x in split.split_map[u])
        ),
        value_sets=value_sets,
        covers=covers,
    )
    state.checks["separation"] = _check_separation(state)
    state.checks["nesting"] = _check_nesting(prev, state, split)
    return state


def _set_distance(a, b) -> float:
    return min(abs(x - y) for x in a for y in b)


def _interval_sets_distance(a, b) -> float:
    d = math.inf
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            if hi1 < lo2:
                d = min(d, lo2 - hi1)
            elif hi2 < lo1:
                d = min(d, lo1 - hi2)
            else:
                return 0.0
    return d


def _check_separation(state: StageState) -> dict:
    """Conditions 1_n and 2_n on the recorded finite sets, plus disjointness
    of the two interval systems at every level."""
    n = state.n
    ok = True
    detail = {}
    for i, (v0, v1) in state.value_sets.items():
        d_vals = _set_distance(v0, v1)
        d_cov = _interval_sets_distance(*state.covers[i])
        lvl_ok = (
            d_vals >= state.eps[i] * (1.0 + 1.0 / n)
            and d_cov >= state.eps[i] * (1.0 + 1.0 / (n + 1))
            and d_cov > 0.0
        )
        detail[str(i)] = {
            "value_gap": d_vals,
            "cover_gap": d_cov,
            "required_values": state.eps[i] * (1.0 + 1.0 / n),
            "required_covers": state.eps[i] * (1.0 + 1.0 / (n + 1)),
            "pass": bool(lvl_ok),
        }
        ok = ok and lvl_ok
    return {"levels": detail, "pass": bool(ok)}


def _check_nesting(
    prev: StageState | None, state: StageState, split: StageSplit
) -> dict:
    """Every new cover interval sits inside its parent's previous cover."""
    if prev is None:
        return {"pass": True, "checked": 0}
    checked = 0
    ok = True
    for i, (c0, c1) in state.covers.items():
        if i not in prev.covers:
            continue
        for side, intervals in ((0, c0), (1, c1)):
            old = prev.covers[i][side]
            old_points = prev.value_sets[i][side]
            parent_interval = dict(zip(old_points, old))
            for (lo, hi), point in zip(
                intervals, state.value_sets[i][side]
            ):
                parent = _parent_value(point, split)
                plo, phi_ = parent_interval[parent]
                checked += 1
                if not (plo <= lo and hi <= phi_):
                    ok = False
    return {"pass": bool(ok), "checked": checked}


def _parent_value(point: float, split: StageSplit) -> float:
    for u, (a, b) in split.split_map.items():
        if point == a or point == b:
            return u
    raise StageError(f"value {point} has no split parent")


def build_model(
    sys: DynamicalSystem,
    w: WeightTable,
    config: BuildConfig,
) -> tuple[ModelFunction, list[StageState]]:
    """Alternate ball patches and value splits for the configured stages.

    Every stage records its checks; a failed exact check aborts with the
    full history attached to the exception.
    """
    if config.stages < 1:
        raise DomainError("need at least one stage")
    model = ModelFunction(system=sys, stages=[], family=SetFamily(sys.group))
    history: list[StageState] = []
    quartic = 0.0
    drift = 0.0
    for idx in range(config.stages):
        ball = basis_balls(idx, sys.group)
        stage, tower, eta = hit_ball(model, history, ball, w, config, quartic)
        model.stages.append(stage)
        patch_report = verify_patch(model, idx, ball, w, config)
        if not patch_report["pass"]:
            raise StageError(f"patch verification failed at stage {idx + 1}: {patch_report}")
        patched_values = model.range_values()
        split = split_values(model, history, idx, config)
        stage.split = split
        drift += split.offset
        quartic += tower.mu_bn_upper() * (ball.max_abs() + drift) ** 4
        state = _update_bookkeeping(
            history, idx, split, patched_values, tower, ball, eta, config
        )
        state.checks["patch"] = patch_report
        if not state.checks["separation"]["pass"]:
            raise StageError(f"separation check failed at stage {idx + 1}")
        if not state.checks["nesting"]["pass"]:
            raise StageError(f"nesting check failed at stage {idx + 1}")
        history.append(state)
    run_stage_checks(model, history, w, config)
    return model, history


def run_stage_checks(
    model: ModelFunction,
    history: list[StageState],
    w: WeightTable,
    config: BuildConfig,
) -> None:
    """Monte-Carlo checks 3_n, 4_n, 5_n recorded into the final stage state."""
    sys = model.system
    n = len(history)
    state = history[-1]
    probe = DynamicalSystem(
        sys.kind, sys.group, dynamics._derived_seed(sys.seed, "checks", config.seed)
    )
    samples = config.check_samples
    points = [dynamics.sample_point(probe, i) for i in range(samples)]
    evaluators = [ModelEvaluator(model, x) for x in points]
    values = [ev.f_value(groups.identity(model.spec)) for ev in evaluators]
    # 1_n range containment on samples (exact float membership)
    range_set = set(state.range_values)
    in_range = all(v in range_set for v in values)
    state.checks["range"] = {"samples": samples, "pass": bool(in_range)}
    # 3_n exceptions per level
    exc_detail = {}
    ok3 = True
    for i in range(1, n + 1):
        v0 = set(state.value_sets[i][0])
        v1 = set(state.value_sets[i][1])
        budget = state.gamma[i] * (1.0 - 1.0 / n)
        exceptions = 0
        for ev, v in zip(evaluators, values):
            member = ev.in_routing_set(i - 1, groups.identity(model.spec))
            if member and v not in v0:
                exceptions += 1
            elif not member and v not in v1:
                exceptions += 1
        ci = stats.clopper_pearson(exceptions, samples)
        lvl_ok = exceptions == 0 if budget <= 0.0 else ci[1] <= budget
        exc_detail[str(i)] = {
            "exceptions": exceptions,
            "budget": budget,
            "ci_upper": ci[1],
            "pass": bool(lvl_ok),
        }
        ok3 = ok3 and lvl_ok
    state.checks["exceptions"] = {"levels": exc_detail, "pass": bool(ok3)}
    # 4_n hitting events, via conditional draws from each tower base
    hit_detail = {}
    ok4 = True
    for i in range(1, n + 1):
        tower = model.stages[i - 1].patch.tower
        ball = history[i - 1].ball
        gen = dynamics.conditional_base_sampler(tower, seed=config.seed + 1000 + i)
        survive = 0
        in_ball = 0
        draws = config.base_samples
        for _ in range(draws):
            x = next(gen)
            ev = ModelEvaluator(model, x)
            if not ev.in_hit_event(i, n):
                continue
            survive += 1
            vec, tail = phi(ev, x, config.n_trunc, w)
            dist = space.norm(vec - ball.center_vector(w))
            if dist + tail < ball.radius:
                in_ball += 1
        ci = stats.clopper_pearson(in_ball, draws)
        mass_lower = tower.mu_e_lower * ci[0]
        required = state.delta[i] * (1.0 + 1.0 / n)
        lvl_ok = mass_lower >= required
        hit_detail[str(i)] = {
            "draws": draws,
            "survived": survive,
            "in_ball": in_ball,
            "mass_lower": mass_lower,
            "required": required,
            "pass": bool(lvl_ok),
        }
        ok4 = ok4 and lvl_ok
    state.checks["hitting"] = {"levels": hit_detail, "pass": bool(ok4)}
    # 5_n quartic norm, estimated for every stage prefix
    drift = sum(st.split.offset for st in model.stages if st.split is not None)
    analytic = drift**4
    for st, hs in zip(model.stages, history):
        analytic += st.patch.tower.mu_bn_upper() * (hs.ball.max_abs() + drift) ** 4
    per_stage = {}
    ok5 = analytic < 1.0
    for k in range(1, n + 1):
        stage_vals = (
            values
            if k == n
            else [ev.f_value(groups.identity(model.spec), stage_count=k) for ev in evaluators]
        )
        fourth = np.array(stage_vals, dtype=float) ** 4
        est = float(fourth.mean())
        se = float(fourth.std(ddof=1) / math.sqrt(samples))
        norm4 = (est + Z95 * se) ** 0.25
        per_stage[str(k)] = {"estimate": est**0.25, "ci_upper": norm4}
        ok5 = ok5 and norm4 < 1.0
    state.checks["quartic"] = {
        "per_stage": per_stage,
        "estimate": per_stage[str(n)]["estimate"],
        "ci_upper": per_stage[str(n)]["ci_upper"],
        "analytic_bound": analytic**0.25,
        "pass": bool(ok5),
    }


# ---------------------------------------------------------------------------
# verification battery


def equivariance_check(
    model: ModelFunction,
    w: WeightTable,
    samples: int,
    h,
    n_trunc: int,
    seed: int = 0,
) -> dict:
    """Exact coefficient equality of phi(T_h x) and S_h phi(x) on the common
    truncation ball; both sides are evaluated through independent caches."""
    sys = model.system
    spec = model.spec
    groups.check_element(spec, h)
    probe = DynamicalSystem(
        sys.kind, sys.group, dynamics._derived_seed(sys.seed, "equiv", seed)
    )
    h_len = groups.word_length(spec, h)
    common = groups.ball(spec, n_trunc - h_len)
    mismatches = 0
    compared = 0
    for draw in range(samples):
        x = dynamics.sample_point(probe, draw)
        left_ev = ModelEvaluator(model, x)
        right_ev = ModelEvaluator(model, x)
        xh = dynamics.act(probe, h, x)
        left, _ = phi(left_ev, xh, n_trunc - h_len, w)
        right_full, _ = phi(right_ev, x, n_trunc, w)
        right = space.shift(right_full, h)
        for g in common:
            compared += 1
            if left.coeffs.get(g, 0.0) != right.coeffs.get(g, 0.0):
                mismatches += 1
    return {
        "h": groups.element_str(spec, h),
        "samples": samples,
        "common_ball": n_trunc - h_len,
        "compared": compared,
        "mismatches": mismatches,
        "pass": mismatches == 0,
    }


def support_and_iso_check(
    model: ModelFunction,
    history: list[StageState],
    w: WeightTable,
    samples: int,
    config: BuildConfig,
    seed: int = 0,
) -> dict:
    """Frequencies of hitting each stage ball, the symmetric-difference
    budgets for the cover preimages, and disjointness of the recorded
    interval systems.

    A hitting budget too rare for crude sampling is certified instead by
    stratified draws from the stage tower base: the exact base measure times
    the conditional hit rate lower-bounds the hit frequency.
    """
    sys = model.system
    spec = model.spec
    n = len(history)
    state = history[-1]
    probe = DynamicalSystem(
        sys.kind, sys.group, dynamics._derived_seed(sys.seed, "iso", seed)
    )
    points = [dynamics.sample_point(probe, i) for i in range(samples)]
    evaluators = [ModelEvaluator(model, x) for x in points]
    values = [ev.f_value(groups.identity(spec)) for ev in evaluators]
    phis = []
    for ev, x in zip(evaluators, points):
        vec, tail = phi(ev, x, config.n_trunc, w)
        phis.append((vec, tail))
    detail = {}
    overall = True
    for i in range(1, n + 1):
        ball = history[i - 1].ball
        center = ball.center_vector(w)
        hits = 0
        indeterminate = 0
        for vec, tail in phis:
            dist = space.norm(vec - center)
            if dist + tail < ball.radius:
                hits += 1
            elif dist <= ball.radius:
                indeterminate += 1
        ci = stats.clopper_pearson(hits, samples)
        hit_ok = ci[0] >= state.delta[i]
        hit_method = "direct"
        conditional_lower = None
        if not hit_ok:
            conditional_lower = _conditional_hit_mass(
                model, history, i, w, config, seed
            )
            hit_ok = conditional_lower >= state.delta[i]
            hit_method = "stratified"
        # symmetric difference of the minus-side cover preimage against A_i
        cover0 = state.covers[i][0]
        sym = 0
        for ev, v in zip(evaluators, values):
            in_cover = any(lo <= v <= hi for lo, hi in cover0)
            member = ev.in_routing_set(i - 1, groups.identity(spec))
            if in_cover != member:
                sym += 1
        ci_sym = stats.clopper_pearson(sym, samples)
        sym_ok = ci_sym[1] < state.gamma[i]
        disjoint = _interval_sets_distance(*state.covers[i]) > 0.0
        detail[str(i)] = {
            "hit_freq": hits / samples,
            "hit_ci_lower": ci[0],
            "hit_method": hit_method,
            "stratified_lower": conditional_lower,
            "delta": state.delta[i],
            "indeterminate": indeterminate,
            "hit_pass": bool(hit_ok),
            "symdiff_freq": sym / samples,
            "symdiff_ci_upper": ci_sym[1],
            "gamma": state.gamma[i],
            "symdiff_pass": bool(sym_ok),
            "covers_disjoint": bool(disjoint),
        }
        overall = overall and hit_ok and sym_ok and disjoint
    return {"samples": samples, "levels": detail, "pass": bool(overall)}


def _conditional_hit_mass(
    model: ModelFunction,
    history: list[StageState],
    i: int,
    w: WeightTable,
    config: BuildConfig,
    seed: int,
) -> float:
    """95% lower bound on mu(phi in U_i) via draws conditioned on the
    stage-i tower base (exact base measure times conditional hit rate)."""
    tower = model.stages[i - 1].patch.tower
    ball = history[i - 1].ball
    center = ball.center_vector(w)
    n = len(history)
    gen = dynamics.conditional_base_sampler(tower, seed=seed + 5000 + i)
    draws = config.base_samples
    in_ball = 0
    for _ in range(draws):
        x = next(gen)
        ev = ModelEvaluator(model, x)
        if not ev.in_hit_event(i, n):
            continue
        vec, tail = phi(ev, x, config.n_trunc, w)
        if space.norm(vec - center) + tail < ball.radius:
            in_ball += 1
    return tower.mu_e_lower * stats.clopper_pearson(in_ball, draws)[0]


def orbit_frequency(
    v: WeightedVector,
    a,
    ball: BallSpec,
    n_steps: int,
    w: WeightTable,
    evaluator: ModelEvaluator | None = None,
    x: PointHandle | None = None,
    n_trunc: int | None = None,
    phi_tail: float = 0.0,
) -> dict:
    """Visit frequency of the shift orbit of v to the given ball.

    With a model evaluator, each step re-evaluates the orbit vector in a
    fresh window around the translated point (the two orbits agree by exact
    equivariance); without one, the given vector is shifted literally and
    membership outside the guard band is flagged indeterminate.
    """
    spec = w.spec
    center = ball.center_vector(w)
    hits = 0
    indeterminate = 0
    series = []
    if evaluator is not None:
        if x is None or n_trunc is None:
            raise DomainError("evaluator mode needs the point and a window")
        sys_ = evaluator.root.system
        current = x
        for step in range(n_steps):
            vec, tail = phi(evaluator, current, n_trunc, w)
            dist = space.norm(vec - center)
            if dist + tail < ball.radius:
                hits += 1
                series.append(1.0)
            else:
                series.append(0.0)
                if dist <= ball.radius:
                    indeterminate += 1
            current = dynamics.act(sys_, a, current)
    else:
        current = v
        for step in range(n_steps):
            detail = space.norm_detail(current - center)
            lower = detail["stored_part"]
            upper = math.sqrt(detail["value"] ** 2 + phi_tail**2)
            if upper < ball.radius:
                hits += 1
                series.append(1.0)
            else:
                series.append(0.0)
                if lower <= ball.radius:
                    indeterminate += 1
            current = space.shift(current, a)
    freq = hits / n_steps
    se = stats.batch_means_se(series)
    return {
        "a": groups.element_str(spec, a),
        "n_steps": n_steps,
        "frequency": freq,
        "hits": hits,
        "indeterminate": indeterminate,
        "se_batch": se,
        "ci_lower": max(0.0, freq - Z95 * se),
        "ci_upper": min(1.0, freq + Z95 * se),
        "series": series,
    }


# ---------------------------------------------------------------------------
# doubling-shift baseline


def doubling_shift_baseline(
    steps: int = 30,
    n_points: int = 1000,
    seed: int = 0,
    alpha: float = dynamics.SQRT2_MINUS_1,
) -> dict:
    """The doubling shift (T u)_k = 2 u_{k+1} on blocks of l2, intertwined
    with a circle rotation through the planar embedding z -> (cos, sin).

    Checks the conjugacy identity per coordinate over sampled points and the
    geometric norm identity ||(2^-k phi0(f^k z))_k||^2 = (1 - 4^-steps)/3.
    """
    rng = np.random.default_rng(seed)
    zs = rng.random(n_points)

    def phi0(z: float) -> tuple:
        return (math.cos(2.0 * math.pi * z), math.sin(2.0 * math.pi * z))

    def embed(z: float) -> list:
        return [
            tuple(c / 2.0**k for c in phi0((z + k * alpha) % 1.0))
            for k in range(1, steps + 1)
        ]

    worst = 0.0
    worst_norm = 0.0
    expected_norm2 = (1.0 - 4.0**-steps) / 3.0
    for z in zs:
        u = embed(float(z))
        fu = embed((float(z) + alpha) % 1.0)
        # (T u)_k = 2 u_{k+1} must equal phi(f z)_k for k = 1..steps-1
        for k in range(steps - 1):
            for c in range(2):
                worst = max(worst, abs(2.0 * u[k + 1][c] - fu[k][c]))
        norm2 = sum(c * c for blk in u for c in blk)
        worst_norm = max(worst_norm, abs(norm2 - expected_norm2))
    return {
        "steps": steps,
        "points": n_points,
        "alpha": alpha,
        "max_conjugacy_error": worst,
        "max_norm_identity_error": worst_norm,
        "tail_bound": 2.0**-steps,
        "pass": bool(worst < 1e-12 and worst_norm < 1e-12),
    }
