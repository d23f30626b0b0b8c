"""Concrete groups: canonical encodings, arithmetic, and word-metric balls.

Supported kinds and their element encodings:

* ``integers``    -- int
* ``lattice``     -- tuple of d ints (l1 word metric)
* ``free``        -- reduced word as tuple of nonzero ints in {-d..-1,1..d},
                     letter k > 0 is the k-th generator, -k its inverse
* ``heisenberg``  -- integer triple (x, y, z), the upper-triangular model
* ``z2sum``       -- sorted tuple of distinct positive ints (bit support);
                     locally finite, not finitely generated

All operations are pure functions of immutable values, so they are safe to
call from any number of workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .errors import CapacityError, DomainError, EmbeddingError, EncodingError

DEFAULT_BALL_CAP = 10**6

FG_KINDS = ("integers", "lattice", "free", "heisenberg")
KINDS = FG_KINDS + ("z2sum",)

# Roster caps: the lattice and free kinds are only exercised at small rank.
MAX_LATTICE_D = 3
MAX_FREE_D = 2

_FREE_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class GroupSpec:
    """A concrete group from the fixed roster, with generator rank ``d``."""

    kind: str
    d: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EncodingError(f"unknown group kind {self.kind!r}")
        if self.kind == "integers" and self.d != 1:
            raise EncodingError("integers has d=1")
        if self.kind == "lattice" and not 1 <= self.d <= MAX_LATTICE_D:
            raise EncodingError(f"lattice rank must be in 1..{MAX_LATTICE_D}")
        if self.kind == "free" and not 1 <= self.d <= MAX_FREE_D:
            raise EncodingError(f"free rank must be in 1..{MAX_FREE_D}")
        if self.kind == "heisenberg" and self.d != 2:
            raise EncodingError("heisenberg has generator rank 2")
        if self.kind == "z2sum" and self.d != 0:
            raise EncodingError("z2sum carries no generator rank (use d=0)")

    @property
    def finitely_generated(self) -> bool:
        return self.kind in FG_KINDS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d}


def identity(spec: GroupSpec):
    if spec.kind == "integers":
        return 0
    if spec.kind == "lattice":
        return (0,) * spec.d
    if spec.kind == "free":
        return ()
    if spec.kind == "heisenberg":
        return (0, 0, 0)
    return ()


def check_element(spec: GroupSpec, g) -> None:
    """Raise EncodingError unless ``g`` is a canonical encoding for ``spec``."""
    if spec.kind == "integers":
        if not isinstance(g, int) or isinstance(g, bool):
            raise EncodingError(f"integers element must be int, got {g!r}")
        return
    if spec.kind == "lattice":
        if (
            not isinstance(g, tuple)
            or len(g) != spec.d
            or not all(isinstance(c, int) and not isinstance(c, bool) for c in g)
        ):
            raise EncodingError(f"lattice element must be a {spec.d}-tuple of ints")
        return
    if spec.kind == "free":
        if not isinstance(g, tuple):
            raise EncodingError("free element must be a tuple of letters")
        for c in g:
            if not isinstance(c, int) or c == 0 or abs(c) > spec.d:
                raise EncodingError(f"letter {c!r} outside rank-{spec.d} alphabet")
        for a, b in zip(g, g[1:]):
            if a == -b:
                raise EncodingError(f"word {g!r} is not reduced")
        return
    if spec.kind == "heisenberg":
        if (
            not isinstance(g, tuple)
            or len(g) != 3
            or not all(isinstance(c, int) and not isinstance(c, bool) for c in g)
        ):
            raise EncodingError("heisenberg element must be an integer triple")
        return
    # z2sum
    if not isinstance(g, tuple) or not all(
        isinstance(c, int) and c >= 1 for c in g
    ):
        raise EncodingError("z2sum element must be a tuple of positive bit indices")
    if list(g) != sorted(set(g)):
        raise EncodingError(f"z2sum support {g!r} must be sorted and distinct")


def canonicalize(spec: GroupSpec, g):
    """Return the canonical form of ``g``; idempotent on valid encodings."""
    if spec.kind == "free" and isinstance(g, (tuple, list)):
        word: list[int] = []
        for c in g:
            if not isinstance(c, int) or c == 0 or abs(c) > spec.d:
                raise EncodingError(f"letter {c!r} outside rank-{spec.d} alphabet")
            if word and word[-1] == -c:
                word.pop()
            else:
                word.append(c)
        return tuple(word)
    if spec.kind == "z2sum" and isinstance(g, (tuple, list, frozenset, set)):
        return tuple(sorted(set(g)))
    check_element(spec, g)
    return g


def multiply(spec: GroupSpec, a, b):
    """Product ``ab`` in canonical encoding."""
    check_element(spec, a)
    check_element(spec, b)
    if spec.kind == "integers":
        return a + b
    if spec.kind == "lattice":
        return tuple(x + y for x, y in zip(a, b))
    if spec.kind == "free":
        word = list(a)
        for c in b:
            if word and word[-1] == -c:
                word.pop()
            else:
                word.append(c)
        return tuple(word)
    if spec.kind == "heisenberg":
        x, y, z = a
        u, v, w = b
        return (x + u, y + v, z + w + x * v)
    # z2sum: symmetric difference of bit supports
    return tuple(sorted(set(a) ^ set(b)))


def inverse(spec: GroupSpec, a):
    check_element(spec, a)
    if spec.kind == "integers":
        return -a
    if spec.kind == "lattice":
        return tuple(-x for x in a)
    if spec.kind == "free":
        return tuple(-c for c in reversed(a))
    if spec.kind == "heisenberg":
        x, y, z = a
        return (-x, -y, x * y - z)
    return a  # every element of z2sum is an involution


def generators(spec: GroupSpec) -> list:
    """The symmetric generator set, listed a1, a1^-1, a2, a2^-1, ..."""
    if not spec.finitely_generated:
        raise EncodingError(f"{spec.kind} has no finite generator set")
    if spec.kind == "integers":
        return [1, -1]
    if spec.kind == "lattice":
        gens = []
        for i in range(spec.d):
            e = [0] * spec.d
            e[i] = 1
            gens.append(tuple(e))
            e2 = [0] * spec.d
            e2[i] = -1
            gens.append(tuple(e2))
        return gens
    if spec.kind == "free":
        gens = []
        for i in range(1, spec.d + 1):
            gens.append((i,))
            gens.append((-i,))
        return gens
    # heisenberg: x and y and their inverses
    return [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]


def sort_key(spec: GroupSpec, g):
    """A total order on elements; used to make summations bit-stable."""
    if spec.kind == "integers":
        return (abs(g), g)
    if spec.kind == "lattice":
        return (sum(abs(c) for c in g), g)
    if spec.kind == "free":
        return (len(g), g)
    if spec.kind == "heisenberg":
        return (abs(g[0]) + abs(g[1]) + abs(g[2]), g)
    return (len(g), g)


def element_str(spec: GroupSpec, g) -> str:
    """Canonical printable form, injective per spec; used for CSV and hashing."""
    if spec.kind == "integers":
        return str(g)
    if spec.kind in ("lattice", "heisenberg"):
        return "(" + ",".join(str(c) for c in g) + ")"
    if spec.kind == "free":
        if not g:
            return "e"
        # lowercase letter = generator, uppercase = inverse
        return "".join(
            _FREE_LETTERS[abs(c) - 1].upper() if c < 0 else _FREE_LETTERS[c - 1]
            for c in g
        )
    if not g:
        return "e"
    return "{" + ",".join(str(c) for c in g) + "}"


def ball(spec: GroupSpec, n: int, cap: int = DEFAULT_BALL_CAP) -> list:
    """All elements of word length <= n, in canonical (sort_key) order.

    Raises CapacityError if the ball would exceed ``cap`` elements.
    """
    if n < 0:
        raise DomainError(f"ball radius must be >= 0, got {n}")
    if not spec.finitely_generated:
        raise EncodingError(f"{spec.kind} supports no word-metric balls")
    if spec.kind == "integers":
        _check_cap(2 * n + 1, cap)
        return list(range(-n, n + 1))
    if spec.kind == "lattice":
        out = []
        for point in _l1_points(spec.d, n):
            out.append(point)
            _check_cap(len(out), cap)
        out.sort(key=lambda g: sort_key(spec, g))
        return out
    if spec.kind == "free":
        _check_cap(free_ball_size(spec.d, n), cap)
        words = [()]
        frontier = [()]
        for _ in range(n):
            nxt = []
            for w in frontier:
                last = w[-1] if w else 0
                for c in itertools.chain(
                    range(1, spec.d + 1), range(-spec.d, 0)
                ):
                    if c != -last:
                        nxt.append(w + (c,))
            words.extend(nxt)
            frontier = nxt
        words.sort(key=lambda g: sort_key(spec, g))
        return words
    # heisenberg: breadth-first search over the 4 generators
    gens = generators(spec)
    seen = {identity(spec)}
    frontier = [identity(spec)]
    for _ in range(n):
        nxt = []
        for g in frontier:
            for a in gens:
                h = multiply(spec, g, a)
                if h not in seen:
                    seen.add(h)
                    _check_cap(len(seen), cap)
                    nxt.append(h)
        frontier = nxt
    out = sorted(seen, key=lambda g: sort_key(spec, g))
    return out


def _check_cap(size: int, cap: int) -> None:
    if size > cap:
        raise CapacityError(f"ball/support size {size} exceeds cap {cap}")


def _l1_points(d: int, n: int) -> Iterable[tuple]:
    if d == 1:
        for x in range(-n, n + 1):
            yield (x,)
        return
    for x in range(-n, n + 1):
        for rest in _l1_points(d - 1, n - abs(x)):
            yield (x,) + rest


def ball_size(spec: GroupSpec, n: int) -> int:
    """Closed-form |B_n| where one exists (integers, lattice d<=3, free)."""
    if spec.kind == "integers":
        return 2 * n + 1
    if spec.kind == "lattice":
        if spec.d == 1:
            return 2 * n + 1
        if spec.d == 2:
            return 2 * n * n + 2 * n + 1
        if spec.d == 3:
            return ((2 * n + 1) * (2 * n * n + 2 * n + 3)) // 3
    if spec.kind == "free":
        return free_ball_size(spec.d, n)
    raise EncodingError(f"no closed-form ball size for {spec.kind}")


def free_ball_size(d: int, n: int) -> int:
    if d == 1:
        return 2 * n + 1
    total = 1
    width = 2 * d
    for _ in range(n):
        total += width
        width *= 2 * d - 1
    return total


def word_length(spec: GroupSpec, g, cap: int = DEFAULT_BALL_CAP) -> int:
    """Word length of ``g`` in the symmetric generators."""
    check_element(spec, g)
    if spec.kind == "integers":
        return abs(g)
    if spec.kind == "lattice":
        return sum(abs(c) for c in g)
    if spec.kind == "free":
        return len(g)
    if spec.kind == "heisenberg":
        # BFS from the identity; fine at desk scale where |g| is small
        if g == (0, 0, 0):
            return 0
        gens = generators(spec)
        seen = {identity(spec)}
        frontier = [identity(spec)]
        dist = 0
        while frontier:
            dist += 1
            nxt = []
            for h in frontier:
                for a in gens:
                    k = multiply(spec, h, a)
                    if k == g:
                        return dist
                    if k not in seen:
                        seen.add(k)
                        _check_cap(len(seen), cap)
                        nxt.append(k)
            frontier = nxt
        raise EncodingError("unreachable element")  # pragma: no cover
    raise EncodingError("z2sum has no word metric here")


def power(spec: GroupSpec, g, n: int):
    """g**n by repeated squaring."""
    if n < 0:
        return power(spec, inverse(spec, g), -n)
    acc = identity(spec)
    base = g
    while n:
        if n & 1:
            acc = multiply(spec, acc, base)
        base = multiply(spec, base, base)
        n >>= 1
    return acc


class Embedding:
    """A homomorphism of one roster group into another, given on generators.

    Only kinds whose elements decompose canonically into generator words are
    accepted as the domain (integers, lattice, free).
    """

    def __init__(self, spec_sub: GroupSpec, spec_amb: GroupSpec, images: list):
        if spec_sub.kind not in ("integers", "lattice", "free"):
            raise EmbeddingError(f"cannot decompose {spec_sub.kind} elements")
        if len(images) != spec_sub.d and not (
            spec_sub.kind == "integers" and len(images) == 1
        ):
            raise EmbeddingError("need one image per generator")
        for im in images:
            check_element(spec_amb, im)
        self.spec_sub = spec_sub
        self.spec_amb = spec_amb
        self.images = list(images)

    def map(self, g):
        sub, amb = self.spec_sub, self.spec_amb
        check_element(sub, g)
        if sub.kind == "integers":
            return power(amb, self.images[0], g)
        if sub.kind == "lattice":
            out = identity(amb)
            for i, c in enumerate(g):
                out = multiply(amb, out, power(amb, self.images[i], c))
            return out
        out = identity(amb)
        for letter in g:
            im = self.images[abs(letter) - 1]
            if letter < 0:
                im = inverse(amb, im)
            out = multiply(amb, out, im)
        return out


def subgroup_embed(
    spec_sub: GroupSpec,
    spec_amb: GroupSpec,
    images: list,
    check_radius: int = 3,
    checks: int = 64,
    seed: int = 0,
) -> Embedding:
    """Build an Embedding and spot-check the homomorphism law on random pairs."""
    import numpy as np

    emb = Embedding(spec_sub, spec_amb, images)
    rng = np.random.default_rng(seed)
    pool = ball(spec_sub, check_radius)
    for _ in range(checks):
        a = pool[int(rng.integers(len(pool)))]
        b = pool[int(rng.integers(len(pool)))]
        lhs = emb.map(multiply(spec_sub, a, b))
        rhs = multiply(spec_amb, emb.map(a), emb.map(b))
        if lhs != rhs:
            raise EmbeddingError(
                f"images are not homomorphic: f({a}*{b}) != f({a})f({b})"
            )
    return emb

