"""Stratified families of compactified spaces over a critical poset.

A family bundles, for every comparable pair (p, q), a compact polytopal
space together with a chain-indexed decomposition into strata and, for
every triple p > r > q, a product embedding of the (p, r) and (r, q)
spaces onto a boundary face of the (p, q) space.  The family is *input
data*: this module validates it and generates concrete instances (cube
families, and families imported from numerically computed moduli data),
it never derives the smooth structures itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import json

import numpy as np

from .errors import InputError, UnsupportedDimensionError
from .poset import Chain, CriticalPoint, CriticalPoset, concat_chains, enumerate_chains
from .spaces import (
    BoxPiece,
    CorneredSpace,
    StratumPatch,
    Wall,
    box_space,
    circle_space,
    point_space,
)

Point = tuple[int, np.ndarray]  # (piece index, box coordinates)


# ---------------------------------------------------------------------
# strata
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class PatchSpec:
    """One box-level patch of a chain stratum.

    ``wall_of`` assigns to each interior point of the chain the pinned
    wall realizing it; its values are exactly the pinned walls.
    """

    piece: int
    wall_of: tuple[tuple[str, Wall], ...]

    @property
    def walls(self) -> frozenset[Wall]:
        return frozenset(w for _, w in self.wall_of)

    def wall(self, point_id: str) -> Wall:
        for pid, w in self.wall_of:
            if pid == point_id:
                return w
        raise InputError(f"{point_id!r} not pinned in this patch")


@dataclass(frozen=True)
class ChainStratum:
    chain: Chain
    patches: tuple[PatchSpec, ...]

    def __post_init__(self):
        for patch in self.patches:
            pinned = {pid for pid, _ in patch.wall_of}
            if pinned != set(self.chain.interior):
                raise InputError(
                    f"patch pins {pinned} but chain interior is "
                    f"{self.chain.interior}"
                )


# ---------------------------------------------------------------------
# product embeddings
# ---------------------------------------------------------------------


class PairEmbedding:
    """Smooth embedding M(p,r)-bar x M(r,q)-bar -> M(p,q)-bar.

    Subclasses implement ``forward`` and ``inverse`` on (piece, coords)
    points.  ``is_affine`` marks embeddings whose coordinate action is a
    slot insertion, enabling exact vectorized paths downstream.
    """

    is_affine = False

    def forward(self, left: Point, right: Point) -> Point:
        raise NotImplementedError

    def inverse(self, point: Point) -> tuple[Point, Point]:
        raise NotImplementedError

    def jacobian(self, left: Point, right: Point, step: float = 1e-6) -> np.ndarray:
        """Central finite-difference Jacobian in box coordinates."""
        lp, lc = left
        rp, rc = right
        nl, nr = len(lc), len(rc)

        def f(vec):
            return self.forward((lp, vec[:nl]), (rp, vec[nl:]))[1]

        base = np.concatenate([lc, rc])
        cols = []
        for i in range(nl + nr):
            e = np.zeros(nl + nr)
            e[i] = step
            cols.append((f(base + e) - f(base - e)) / (2 * step))
        if not cols:
            return np.zeros((len(self.forward(left, right)[1]), 0))
        return np.stack(cols, axis=1)


class SlotEmbedding(PairEmbedding):
    """Coordinate insertion (u, v) -> (u, 0, v) for single-piece boxes.

    ``flip_axes`` optionally reverses the given left-factor axes
    (u -> 1 - u); this deliberately breaks the stratum correspondence
    and exists to exercise the validator.
    """

    is_affine = True

    def __init__(self, left_dim: int, right_dim: int, flip_axes=()):
        self.left_dim = left_dim
        self.right_dim = right_dim
        self.flip_axes = tuple(flip_axes)
        if any(a < 0 or a >= left_dim for a in self.flip_axes):
            raise InputError(
                f"flip axes {self.flip_axes} out of range for a "
                f"{left_dim}-dimensional left factor"
            )
        if self.flip_axes:
            self.is_affine = False

    @property
    def junction_slot(self) -> int:
        return self.left_dim

    def _flip(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        for a in self.flip_axes:
            u[..., a] = 1.0 - u[..., a]
        return u

    def forward(self, left: Point, right: Point) -> Point:
        (_, u), (_, v) = left, right
        u = self._flip(u)
        return 0, np.concatenate([u, [0.0], v])

    def forward_many(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        U = self._flip(U)
        zero = np.zeros((len(U), 1))
        return np.concatenate([U, zero, V], axis=1)

    def inverse(self, point: Point) -> tuple[Point, Point]:
        _, w = point
        if abs(w[self.junction_slot]) > 1e-9:
            raise InputError("point is not on the junction face")
        u = self._flip(w[: self.left_dim])
        v = np.array(w[self.left_dim + 1 :], dtype=float)
        return (0, u), (0, v)


class PointPairEmbedding(PairEmbedding):
    """Embedding of a product of two 0-dimensional spaces.

    Each pair of factor pieces is sent to one designated boundary point
    of the target space, given as (target piece, wall).
    """

    is_affine = True

    def __init__(self, target: CorneredSpace, piece_map):
        self.target = target
        self.piece_map = dict(piece_map)  # (left piece, right piece) -> (piece, Wall)

    def forward(self, left: Point, right: Point) -> Point:
        key = (left[0], right[0])
        if key not in self.piece_map:
            raise InputError(f"no target for factor pieces {key}")
        piece, wall = self.piece_map[key]
        coords = np.array(
            [self.target.pieces[piece].wall_value(wall)], dtype=float
        ) if self.target.dim == 1 else np.zeros(self.target.dim)
        return piece, coords

    def inverse(self, point: Point) -> tuple[Point, Point]:
        piece, coords = point
        for (li, ri), (tp, wall) in self.piece_map.items():
            if tp == piece and abs(
                self.target.pieces[tp].wall_offset(coords, wall)
            ) <= 1e-9:
                return (li, np.zeros(0)), (ri, np.zeros(0))
        raise InputError("point is not an embedded product point")


class Diffeo:
    """A diffeomorphism of a box given by a forward map and its inverse."""

    def __init__(self, forward, inverse=None, dim=None):
        self._forward = forward
        self._inverse = inverse
        self.dim = dim

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self._forward(np.asarray(w, dtype=float))

    def inverse(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self._inverse is not None:
            return self._inverse(w)
        return self._newton_inverse(w)

    def _newton_inverse(self, target, tol=1e-13, max_iter=60):
        x = np.array(target, dtype=float)
        for _ in range(max_iter):
            r = self(x) - target
            if np.max(np.abs(r)) < tol:
                return x
            jac = self._fd_jacobian(x)
            x = x - np.linalg.solve(jac, r)
        raise InputError("diffeo inversion did not converge")

    def _fd_jacobian(self, x, step=1e-7):
        n = len(x)
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            cols.append((self(x + e) - self(x - e)) / (2 * step))
        return np.stack(cols, axis=1)


def shear_diffeo(dim: int, strength: float = 0.2, axis: int = 0,
                 driver: int | None = None) -> Diffeo:
    """A wall-preserving shear of [0,1]^dim: moves ``axis`` by an amount
    vanishing on all coordinate walls of that axis."""
    if dim < 2:
        raise InputError("shear needs dimension >= 2")
    b = driver if driver is not None else (axis + 1) % dim

    def fwd(w):
        out = np.array(w, dtype=float)
        out[..., axis] = w[..., axis] + strength * w[..., axis] * (
            1.0 - w[..., axis]
        ) * w[..., b]
        return out

    return Diffeo(fwd, dim=dim)


def stretch_diffeo(dim: int, strength: float = 0.3) -> Diffeo:
    """Componentwise t -> t + s*t*(1-t) on [0,1]^dim.

    Fixes the walls {0} and {1} of every axis but is nonlinear across
    each face, so it breaks affine collar compatibility on junction
    faces (unlike a shear, which is the identity there).  The inverse is
    the closed-form root of the per-coordinate quadratic.
    """
    s = float(strength)
    if not 0 < s < 1:
        raise InputError("stretch strength must lie in (0, 1)")

    def fwd(w):
        w = np.asarray(w, dtype=float)
        return w + s * w * (1.0 - w)

    def inv(y):
        y = np.asarray(y, dtype=float)
        return ((1 + s) - np.sqrt((1 + s) ** 2 - 4 * s * y)) / (2 * s)

    return Diffeo(fwd, inverse=inv, dim=dim)


class ComposedEmbedding(PairEmbedding):
    """A base embedding post-composed with a diffeo of the target box."""

    def __init__(self, base: PairEmbedding, target_map: Diffeo):
        self.base = base
        self.target_map = target_map

    def forward(self, left: Point, right: Point) -> Point:
        piece, w = self.base.forward(left, right)
        return piece, self.target_map(w)

    def inverse(self, point: Point) -> tuple[Point, Point]:
        piece, w = point
        return self.base.inverse((piece, self.target_map.inverse(w)))


# ---------------------------------------------------------------------
# the family
# ---------------------------------------------------------------------


class StratifiedFamily:
    def __init__(
        self,
        poset: CriticalPoset,
        spaces: dict,
        strata: dict,
        embeddings: dict,
        name: str = "",
    ):
        self.poset = poset
        self.spaces = dict(spaces)
        self.strata = {s.chain: s for s in strata.values()} if isinstance(
            strata, dict
        ) else {s.chain: s for s in strata}
        self.embeddings = dict(embeddings)
        self.name = name
        self._by_patch: dict = {}
        for stratum in self.strata.values():
            pair = stratum.chain.pair
            for patch in stratum.patches:
                key = (pair, patch.piece, patch.walls)
                if key in self._by_patch:
                    raise InputError(
                        f"patch {key} claimed by two chains: "
                        f"{self._by_patch[key].chain} and {stratum.chain}"
                    )
                self._by_patch[key] = (stratum.chain, patch)

    # -- lookups -------------------------------------------------------

    def pairs(self) -> list[tuple[str, str]]:
        return sorted(self.spaces)

    def triples(self) -> list[tuple[str, str, str]]:
        return sorted(self.embeddings)

    def space(self, p: str, q: str) -> CorneredSpace:
        try:
            return self.spaces[(p, q)]
        except KeyError:
            raise InputError(f"no space for pair ({p!r}, {q!r})") from None

    def chains(self, p: str, q: str) -> list[Chain]:
        return enumerate_chains(self.poset, p, q)

    def stratum(self, chain: Chain) -> ChainStratum:
        try:
            return self.strata[chain]
        except KeyError:
            raise InputError(f"no stratum for {chain}") from None

    def embedding(self, p: str, r: str, q: str) -> PairEmbedding:
        try:
            return self.embeddings[(p, r, q)]
        except KeyError:
            raise InputError(f"no embedding for ({p!r},{r!r},{q!r})") from None

    def classify(self, pair, point) -> Chain | None:
        """The chain whose stratum contains the point, if any."""
        space = self.space(*pair)
        piece, coords = space.piece_of(point)
        walls = space.pieces[piece].walls_at(coords)
        hit = self._by_patch.get((pair, piece, walls))
        return hit[0] if hit else None

    def patch_for(self, chain: Chain, piece: int) -> PatchSpec | None:
        for patch in self.stratum(chain).patches:
            if patch.piece == piece:
                return patch
        return None

    def contains_in_stratum(self, chain: Chain, point) -> bool:
        return self.classify(chain.pair, point) == chain

    # -- sampling ------------------------------------------------------

    def sample_patch(
        self, chain: Chain, patch: PatchSpec, count: int, rng, margin: float = 1e-3
    ) -> np.ndarray:
        """Random box coordinates in the open part of one stratum patch."""
        space = self.space(*chain.pair)
        piece = space.pieces[patch.piece]
        lo = np.asarray(piece.lower)
        hi = np.asarray(piece.upper)
        span = hi - lo
        coords = lo + span * rng.uniform(margin, 1 - margin, size=(count, piece.dim))
        for w in patch.walls:
            coords[:, w.axis] = piece.wall_value(w)
        return coords

    def sample_stratum(self, chain: Chain, count: int, rng, margin: float = 1e-3):
        """Random points of a chain stratum, cycling over its patches."""
        stratum = self.stratum(chain)
        if not stratum.patches:
            return []
        out = []
        per = -(-count // len(stratum.patches))
        for patch in stratum.patches:
            for coords in self.sample_patch(chain, patch, per, rng, margin):
                out.append((patch.piece, coords))
        return out[:count]

    # -- factorization through an embedding ----------------------------

    def factor(self, chain: Chain, junction: str, point: Point):
        """Split a stratum point at one of its interior points.

        Returns ((left chain, left point), (right chain, right point))
        with the factors lying in the expected sub-strata.
        """
        if junction not in chain.interior:
            raise InputError(f"{junction!r} is not interior to {chain}")
        i = chain.points.index(junction)
        left_chain = Chain(chain.points[: i + 1])
        right_chain = Chain(chain.points[i:])
        emb = self.embedding(chain.head, junction, chain.tail)
        left, right = emb.inverse(point)
        return (left_chain, left), (right_chain, right)

    def distance(self, pair, a: Point, b: Point) -> float:
        """Euclidean distance in the reference chart; +inf across pieces."""
        if a[0] != b[0]:
            return np.inf
        space = self.space(*pair)
        wa = space.charts[a[0]].to_ambient(a[1])
        wb = space.charts[b[0]].to_ambient(b[1])
        return float(np.linalg.norm(wa - wb))


# ---------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------


@dataclass
class CheckRecord:
    name: str
    subject: str
    passed: bool
    residual: float = 0.0
    witness: str = ""


@dataclass
class FamilyReport:
    records: list[CheckRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, name, subject, passed, residual=0.0, witness=""):
        self.records.append(CheckRecord(name, subject, passed, residual, witness))

    def failures(self) -> list[CheckRecord]:
        return [r for r in self.records if not r.passed]

    def first_failure(self) -> CheckRecord | None:
        fails = self.failures()
        return fails[0] if fails else None


def validate_family(
    family: StratifiedFamily, samples: int = 64, rng=None, tol: float = 1e-9
) -> FamilyReport:
    """Check the structural and sampled invariants of a family.

    Covers: the chain strata partition each space's recorded corner
    patches with matching depth; product embeddings are injective, full
    rank, stratum-correct; and embeddings cohere on triple products.
    """
    rng = np.random.default_rng(rng)
    report = FamilyReport()

    for p, q in family.pairs():
        _check_partition(family, p, q, samples, rng, report)
    for p, r, q in family.triples():
        _check_embedding(family, p, r, q, samples, rng, tol, report)
    _check_coherence(family, samples, rng, tol, report)
    return report


def _check_partition(family, p, q, samples, rng, report):
    space = family.space(p, q)
    subject = f"({p},{q})"
    chains = family.chains(p, q)
    missing = [str(c) for c in chains if c not in family.strata]
    if missing:
        report.add("partition.strata-present", subject, False,
                   witness=f"no stratum for {missing[0]}")
        return
    claimed = {}
    for chain in chains:
        for patch in family.stratum(chain).patches:
            claimed[(patch.piece, patch.walls)] = chain
    ok = True
    for sp in space.stratum_patches():
        key = (sp.piece, sp.walls)
        chain = claimed.get(key)
        if chain is None:
            report.add("partition.covered", subject, False,
                       witness=f"unclaimed patch piece={sp.piece} walls={sorted(sp.walls)}")
            ok = False
            continue
        if chain.length != len(sp.walls):
            report.add("partition.depth", subject, False,
                       witness=f"{chain} has length {chain.length} on a "
                               f"depth-{len(sp.walls)} patch")
            ok = False
    extra = set(claimed) - {(sp.piece, sp.walls) for sp in space.stratum_patches()}
    for key in sorted(extra, key=str):
        report.add("partition.known-patch", subject, False,
                   witness=f"stratum patch {key} is not a patch of the space")
        ok = False
    if ok:
        report.add("partition", subject, True)
    # sampled cross-check: classification and depth agree
    worst = None
    for chain in chains:
        for point in family.sample_stratum(chain, max(2, samples // 8), rng):
            got = family.classify((p, q), point)
            depth = space.depth(point)
            if got != chain or depth != chain.length:
                worst = f"{chain} sample classified as {got} at depth {depth}"
                break
    report.add("partition.sampled", subject, worst is None, witness=worst or "")


def _stratum_product_samples(family, p, r, q, samples, rng):
    """Pairs of stratum samples for every chain pair composable at r."""
    for lc in family.chains(p, r):
        for rc in family.chains(r, q):
            n = max(2, samples // 16)
            lefts = family.sample_stratum(lc, n, rng)
            rights = family.sample_stratum(rc, n, rng)
            for lp, rp in zip(lefts, rights):
                yield lc, rc, lp, rp


def _check_embedding(family, p, r, q, samples, rng, tol, report):
    emb = family.embedding(p, r, q)
    subject = f"({p},{r},{q})"
    # stratum correspondence: M_I1 x M_I2 lands in M_{I1.I2}
    witness = ""
    images = []
    for lc, rc, lp, rp in _stratum_product_samples(family, p, r, q, samples, rng):
        image = emb.forward(lp, rp)
        expected = concat_chains(lc, rc)
        got = family.classify((p, q), image)
        images.append((lp, rp, image))
        if got != expected:
            witness = f"{lc}*{rc} sample landed in {got}, expected {expected}"
            break
    report.add("embedding.stratum", subject, witness == "", witness=witness)
    # injectivity on samples (only pairs with genuinely distinct inputs)
    witness = ""
    seen = []
    for lp, rp, img in images:
        for lo, ro, other in seen:
            same_in = (
                family.distance((p, r), lp, lo) < 1e-9
                and family.distance((r, q), rp, ro) < 1e-9
            )
            if not same_in and family.distance((p, q), img, other) < 1e-12:
                witness = "two distinct products map to one point"
        seen.append((lp, rp, img))
    report.add("embedding.injective", subject, witness == "", witness=witness)
    # full-rank differential at interior samples
    lc = Chain((p, r))
    rc = Chain((r, q))
    worst = np.inf
    in_dim = family.space(p, r).dim + family.space(r, q).dim
    if in_dim > 0:
        for lp, rp in zip(
            family.sample_stratum(lc, 4, rng), family.sample_stratum(rc, 4, rng)
        ):
            jac = emb.jacobian(lp, rp)
            sv = np.linalg.svd(jac, compute_uv=False)
            worst = min(worst, float(sv[-1]))
        report.add("embedding.rank", subject, worst > 1e-9, residual=worst,
                   witness="" if worst > 1e-9 else f"smallest singular value {worst:.2e}")
    else:
        report.add("embedding.rank", subject, True)


def _check_coherence(family, samples, rng, tol, report):
    quads = []
    for (p, s, q2) in family.triples():
        for (s2, r, q) in family.triples():
            if s2 == s and q2 == q and (p, r, q) in family.embeddings:
                if (s, r, q) in family.embeddings and (p, s, r) in family.embeddings:
                    quads.append((p, s, r, q))
    for p, s, r, q in sorted(set(quads)):
        subject = f"({p},{s},{r},{q})"
        worst = 0.0
        witness = ""
        n = max(2, samples // 16)
        us = family.sample_stratum(Chain((p, s)), n, rng)
        vs = family.sample_stratum(Chain((s, r)), n, rng)
        ws = family.sample_stratum(Chain((r, q)), n, rng)
        for u, v, w in zip(us, vs, ws):
            left = family.embedding(p, r, q).forward(
                family.embedding(p, s, r).forward(u, v), w
            )
            right = family.embedding(p, s, q).forward(
                u, family.embedding(s, r, q).forward(v, w)
            )
            d = family.distance((p, q), left, right)
            if d > worst:
                worst = d
                if d > tol:
                    witness = (
                        f"associating ({p}>{s}>{r}) then {q} vs {s} then "
                        f"({s}>{r}>{q}) differs by {d:.3e}"
                    )
        report.add("embedding.coherence", subject, worst <= tol,
                   residual=worst, witness=witness)


# ---------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------


def cube_family(n: int) -> StratifiedFamily:
    """The linear model family on p_0 > ... > p_n.

    The (p_i, p_j) space is the unit cube of dimension j - i - 1 whose
    recorded walls are the coordinate-zero facets; slot t of that cube
    belongs to the intermediate point p_{i+t+1}, and the stratum of a
    chain pins exactly the slots of its interior points.  Product
    embeddings insert a zero at the junction slot.
    """
    if not 1 <= n <= 5:
        raise InputError(f"cube_family needs 1 <= n <= 5, got {n}")
    ids = [f"p{i}" for i in range(n + 1)]
    poset = CriticalPoset(
        [CriticalPoint(pid, index=n - i) for i, pid in enumerate(ids)],
        [(ids[i], ids[i + 1]) for i in range(n)],
    )
    spaces = {}
    strata = {}
    embeddings = {}
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            p, q = ids[i], ids[j]
            d = j - i - 1
            spaces[(p, q)] = (
                point_space(1, name=f"M({p},{q})")
                if d == 0
                else box_space([1.0] * d, active="lower", name=f"M({p},{q})")
            )
            for chain in enumerate_chains(poset, p, q):
                wall_of = tuple(
                    (r, Wall(ids.index(r) - i - 1, 0)) for r in chain.interior
                )
                strata[chain] = ChainStratum(chain, (PatchSpec(0, wall_of),))
            for r in range(i + 1, j):
                embeddings[(p, ids[r], q)] = SlotEmbedding(r - i - 1, j - r - 1)
    return StratifiedFamily(poset, spaces, strata, embeddings, name=f"cube{n}")


def with_target_diffeo(
    family: StratifiedFamily, pair: tuple[str, str], diffeo: Diffeo
) -> StratifiedFamily:
    """Recoordinatize one space's embeddings by a wall-preserving diffeo.

    Every embedding into ``pair``'s space is post-composed with the
    diffeo.  Because the diffeo preserves each coordinate wall, strata
    and coherence survive; only affine-compatibility of collars breaks.
    """
    embeddings = dict(family.embeddings)
    for (p, r, q), emb in family.embeddings.items():
        if (p, q) == pair:
            embeddings[(p, r, q)] = ComposedEmbedding(emb, diffeo)
    return StratifiedFamily(
        family.poset, family.spaces, family.strata, embeddings,
        name=family.name + "+diffeo",
    )


def with_flipped_embedding(
    family: StratifiedFamily, triple: tuple[str, str, str], axis: int = 0
) -> StratifiedFamily:
    """Flip one coordinate of one slot embedding (a mutation for tests)."""
    emb = family.embedding(*triple)
    if not isinstance(emb, SlotEmbedding):
        raise InputError("can only flip a slot embedding")
    embeddings = dict(family.embeddings)
    embeddings[triple] = SlotEmbedding(
        emb.left_dim, emb.right_dim, flip_axes=(axis,)
    )
    return StratifiedFamily(
        family.poset, family.spaces, family.strata, embeddings,
        name=family.name + "+flip",
    )


# ---------------------------------------------------------------------
# import from Morse moduli data
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class ArcEnd:
    """A labelled end of a one-dimensional moduli arc."""

    junction: str
    left_index: int
    right_index: int


@dataclass(frozen=True)
class ArcData:
    length: float
    ends: tuple  # (ArcEnd | None at coordinate 0, ArcEnd | None at length)


@dataclass(frozen=True)
class PairModuli:
    """Shape of one compactified moduli space, as computed numerically."""

    pair: tuple[str, str]
    dim: int
    count: int = 0                      # 0-dim: number of trajectories
    arcs: tuple = ()                    # 1-dim: ArcData entries
    circle: float | None = None         # 1-dim closed: circumference


def from_morse(
    critical_points, relations, moduli: dict, name: str = "morse"
) -> StratifiedFamily:
    """Assemble a family from 0/1-dimensional moduli data.

    ``moduli`` maps comparable pairs to PairModuli.  Pairs of dimension
    >= 2 are refused; every broken pair must appear exactly once among
    the arc ends of its pair.
    """
    poset = CriticalPoset(critical_points, relations)
    spaces = {}
    strata = {}
    embeddings = {}

    for (p, q), data in sorted(moduli.items()):
        if data.dim >= 2:
            raise UnsupportedDimensionError(
                f"moduli of pair ({p},{q}) has dimension {data.dim}"
            )
        if data.dim == 0:
            if data.count == 0:
                raise InputError(f"empty moduli for comparable pair ({p},{q})")
            spaces[(p, q)] = point_space(data.count, name=f"M({p},{q})")
            chain = Chain((p, q))
            strata[chain] = ChainStratum(
                chain,
                tuple(PatchSpec(i, ()) for i in range(data.count)),
            )
            continue
        if data.circle is not None:
            spaces[(p, q)] = circle_space(data.circle, name=f"M({p},{q})")
            chain = Chain((p, q))
            strata[chain] = ChainStratum(chain, (PatchSpec(0, ()),))
            continue
        pieces = [
            BoxPiece(
                lower=(0.0,),
                upper=(arc.length,),
                walls=frozenset(
                    {Wall(0, side) for side, end in enumerate(arc.ends) if end}
                ),
            )
            for arc in data.arcs
        ]
        space = CorneredSpace(pieces, name=f"M({p},{q})")
        spaces[(p, q)] = space
        bare = Chain((p, q))
        strata[bare] = ChainStratum(
            bare, tuple(PatchSpec(i, ()) for i in range(len(pieces)))
        )
        by_junction: dict[str, list] = {}
        piece_maps: dict[str, dict] = {}
        for i, arc in enumerate(data.arcs):
            for side, end in enumerate(arc.ends):
                if end is None:
                    continue
                wall = Wall(0, side)
                by_junction.setdefault(end.junction, []).append(
                    PatchSpec(i, ((end.junction, wall),))
                )
                key = (end.left_index, end.right_index)
                dest = piece_maps.setdefault(end.junction, {})
                if key in dest:
                    raise InputError(
                        f"broken pair {key} through {end.junction} matched twice"
                    )
                dest[key] = (i, wall)
        junctions = sorted(
            r for r in poset.below(p)
            if poset.precedes(r, q) and (p, r) in moduli and (r, q) in moduli
        )
        for junction in junctions:
            left = moduli[(p, junction)]
            right = moduli[(junction, q)]
            expected = {
                (a, b) for a in range(left.count) for b in range(right.count)
            }
            got = set(piece_maps.get(junction, {}))
            if got != expected:
                missing = sorted(expected - got)
                raise InputError(
                    f"broken pairs {missing} through {junction} have no arc end"
                )
            chain = Chain((p, junction, q))
            strata[chain] = ChainStratum(chain, tuple(by_junction[junction]))
            embeddings[(p, junction, q)] = PointPairEmbedding(
                space, piece_maps[junction]
            )
    return StratifiedFamily(poset, spaces, strata, embeddings, name=name)


# ---------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------


def _num(value) -> float:
    """Parse a decimal-string coordinate exactly, then round to float."""
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


def save_family(family: StratifiedFamily, path) -> None:
    doc = {
        "schema_version": 1,
        "name": family.name,
        "poset": {
            "points": [
                {"id": cp.id, "index": cp.index} for cp in family.poset.points
            ],
            "succ": [[a, b] for a, b in family.poset.pairs()],
        },
        "spaces": {},
        "strata": [],
        "embeddings": [],
    }
    for (p, q), space in sorted(family.spaces.items()):
        doc["spaces"][f"{p}|{q}"] = {
            "dim": space.dim,
            "pieces": [
                {
                    "lower": [repr(x) for x in piece.lower],
                    "upper": [repr(x) for x in piece.upper],
                    "walls": [[w.axis, w.side] for w in sorted(piece.walls)],
                    "periodic": sorted(piece.periodic),
                }
                for piece in space.pieces
            ],
        }
    for chain, stratum in sorted(family.strata.items(), key=lambda kv: kv[0].points):
        doc["strata"].append(
            {
                "chain": list(chain.points),
                "patches": [
                    {
                        "piece": patch.piece,
                        "walls": {
                            pid: [w.axis, w.side] for pid, w in patch.wall_of
                        },
                    }
                    for patch in stratum.patches
                ],
            }
        )
    for (p, r, q), emb in sorted(family.embeddings.items()):
        entry = {"triple": [p, r, q]}
        if isinstance(emb, SlotEmbedding):
            entry["type"] = "slot"
            entry["left_dim"] = emb.left_dim
            entry["right_dim"] = emb.right_dim
            if emb.flip_axes:
                entry["flip_axes"] = list(emb.flip_axes)
        elif isinstance(emb, PointPairEmbedding):
            entry["type"] = "point_pair"
            entry["map"] = [
                [li, ri, tp, [w.axis, w.side]]
                for (li, ri), (tp, w) in sorted(emb.piece_map.items())
            ]
        else:
            raise InputError(f"embedding for ({p},{r},{q}) is not serializable")
        doc["embeddings"].append(entry)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_family(path) -> StratifiedFamily:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != 1:
        raise InputError(f"unsupported schema_version {doc.get('schema_version')}")
    try:
        poset = CriticalPoset(
            [
                CriticalPoint(entry["id"], entry.get("index"))
                for entry in doc["poset"]["points"]
            ],
            [tuple(edge) for edge in doc["poset"]["succ"]],
        )
        spaces = {}
        for key, spec in doc["spaces"].items():
            p, q = key.split("|")
            pieces = [
                BoxPiece(
                    lower=tuple(_num(x) for x in ps["lower"]),
                    upper=tuple(_num(x) for x in ps["upper"]),
                    walls=frozenset(Wall(a, s) for a, s in ps["walls"]),
                    periodic=frozenset(ps.get("periodic", [])),
                )
                for ps in spec["pieces"]
            ]
            spaces[(p, q)] = CorneredSpace(pieces, name=f"M({p},{q})")
        strata = {}
        for entry in doc["strata"]:
            chain = Chain(tuple(entry["chain"]))
            patches = tuple(
                PatchSpec(
                    ps["piece"],
                    tuple(
                        (pid, Wall(a, s)) for pid, (a, s) in sorted(ps["walls"].items())
                    ),
                )
                for ps in entry["patches"]
            )
            strata[chain] = ChainStratum(chain, patches)
        embeddings = {}
        for entry in doc["embeddings"]:
            p, r, q = entry["triple"]
            if entry["type"] == "slot":
                embeddings[(p, r, q)] = SlotEmbedding(
                    entry["left_dim"],
                    entry["right_dim"],
                    flip_axes=tuple(entry.get("flip_axes", ())),
                )
            elif entry["type"] == "point_pair":
                embeddings[(p, r, q)] = PointPairEmbedding(
                    spaces[(p, q)],
                    {
                        (li, ri): (tp, Wall(a, s))
                        for li, ri, tp, (a, s) in entry["map"]
                    },
                )
            else:
                raise InputError(f"unknown embedding type {entry['type']!r}")
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed family file {path}: {exc}") from exc
    return StratifiedFamily(
        poset, spaces, strata, embeddings, name=doc.get("name", "")
    )
