"""Compatible collar/gluing maps for a stratified family.

For every chain ``I`` of a validated family this module builds a gluing
map ``G_I`` sending a stratum point plus a tuple of small nonnegative
collar coordinates to a nearby point of the ambient space, such that

* ``G_I(x, 0) = x`` exactly,
* the zero pattern of the coordinates determines the stratum of the
  output (stratum condition),
* nested chains are compatible (evaluating the deep chain equals
  evaluating in two stages through any subchain), and
* concatenation along a junction matches the product embedding.

Construction: each chain gets a preferred chart.  The initial chart is
the affine inward collar off the pinned walls of the chain's stratum
patches.  Charts of chains that are not dominated by a deeper chain are
then *normalized* junction by junction: whenever the identity

    chart(x1 * x2, (L1, 0, L2)) = embed(G(x1, L1), G(x2, L2))

fails on samples, the chart is post-composed with a correction map that
forces it on the corresponding zero slice, leaving earlier junctions
intact.  Evaluation of ``G_I`` always routes through the deepest chart
available at the point's patch and adds the collar coordinates to the
chart parameters, which makes the nesting compatibility automatic.

All residual checks report a max distance measured in the reference
chart of the relevant space.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import EpsilonUnderflowError, InputError, RangeError
from .family import SlotEmbedding, StratifiedFamily, validate_family
from .params import GlueParam, zero_support_subchain
from .poset import Chain, concat_chains, is_subchain, pair_length

#: collar parameters this close to zero are treated as exact zeros
SNAP_TOL = 1e-11


# ---------------------------------------------------------------------
# preferred charts
# ---------------------------------------------------------------------


class AffineChart:
    """The affine inward collar of one chain's stratum.

    ``forward(piece, x, lam)`` moves the stratum point ``x`` off each
    pinned wall by the matching collar coordinate, along the inward
    axis.  Exact, and its own inverse is exact.
    """

    is_affine = True

    def __init__(self, family: StratifiedFamily, chain: Chain):
        self.family = family
        self.chain = chain
        self.patches = {
            p.piece: p for p in family.stratum(chain).patches
        }

    @property
    def root(self) -> "AffineChart":
        return self

    def _walls(self, piece: int):
        patch = self.patches.get(piece)
        if patch is None:
            raise InputError(
                f"chart of {self.chain} has no patch on piece {piece}"
            )
        return [patch.wall(r) for r in self.chain.interior]

    def forward(self, piece: int, x, lam) -> np.ndarray:
        out = np.array(x, dtype=float)
        for w, v in zip(self._walls(piece), lam):
            out[w.axis] += w.inward_sign * v
        return out

    def inverse(self, piece: int, coords):
        box = self.family.space(*self.chain.pair).pieces[piece]
        x = np.array(coords, dtype=float)
        lam = np.zeros(self.chain.length)
        for j, w in enumerate(self._walls(piece)):
            off = float(box.wall_offset(coords, w))
            if off < -SNAP_TOL:
                raise InputError(f"point lies outside wall {w}")
            lam[j] = 0.0 if abs(off) <= SNAP_TOL else off
            x[w.axis] = box.wall_value(w)
        return x, lam


class CorrectedChart:
    """A chart post-composed with one junction correction.

    The correction forces the chart, on the zero slice of one collar
    slot, to agree with the two-sided gluing through the junction's
    product embedding; off the slice the same correction is applied,
    which keeps the map smooth and earlier junction identities intact.
    """

    is_affine = False

    def __init__(self, prev, slot: int, rhs):
        self.prev = prev
        self.slot = slot
        self.rhs = rhs
        self.family = prev.family
        self.chain = prev.chain
        self.patches = prev.patches

    @property
    def root(self) -> AffineChart:
        return self.prev.root

    def forward(self, piece: int, x, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        sliced = lam.copy()
        sliced[self.slot] = 0.0
        rhs_piece, rhs_coords = self.rhs(piece, np.asarray(x, float), sliced)
        if rhs_piece != piece:
            raise InputError("junction correction changed the piece")
        x2, lam2 = self.prev.inverse(piece, rhs_coords)
        lam2[self.slot] = lam[self.slot]
        return self.prev.forward(piece, x2, lam2)

    def inverse(self, piece: int, coords, tol: float = 1e-12, max_iter: int = 60):
        coords = np.asarray(coords, dtype=float)
        box = self.family.space(*self.chain.pair).pieces[piece]
        patch = self.patches[piece]
        walls = [patch.wall(r) for r in self.chain.interior]
        pinned = {w.axis for w in walls}
        free = [a for a in range(box.dim) if a not in pinned]
        k = self.chain.length

        def unpack(z):
            x = np.array(coords, dtype=float)
            for w in walls:
                x[w.axis] = box.wall_value(w)
            x[free] = z[: len(free)]
            return x, np.maximum(z[len(free) :], 0.0)

        def resid(z):
            x, lam = unpack(z)
            return self.forward(piece, x, lam) - coords

        x0, lam0 = self.root.inverse(piece, coords)
        z = np.concatenate([x0[free], lam0])
        for _ in range(max_iter):
            r = resid(z)
            if np.max(np.abs(r)) < tol:
                break
            step = 1e-7
            cols = []
            for i in range(len(z)):
                e = np.zeros(len(z))
                e[i] = step
                cols.append((resid(z + e) - resid(z - e)) / (2 * step))
            jac = np.stack(cols, axis=1)
            z = z - np.linalg.lstsq(jac, r, rcond=None)[0]
        else:
            raise InputError("chart inversion did not converge")
        x, lam = unpack(z)
        lam[np.abs(lam) <= SNAP_TOL] = 0.0
        return x, lam


def initial_collar(family: StratifiedFamily, chain: Chain) -> AffineChart:
    """The affine inward collar chart of one chain's stratum."""
    if chain not in family.strata:
        raise InputError(f"family has no stratum for {chain}")
    return AffineChart(family, chain)


# ---------------------------------------------------------------------
# the atlas
# ---------------------------------------------------------------------


class CollarAtlas:
    """Built gluing maps: one preferred chart per chain, one epsilon per
    pair, plus the routing table used for evaluation."""

    def __init__(self, family: StratifiedFamily):
        self.family = family
        self.epsilon: dict[tuple[str, str], float] = {}
        self.charts: dict[Chain, AffineChart | CorrectedChart] = {}
        self._routes: dict[tuple[Chain, int], Chain] = {}

    def eps(self, chain: Chain) -> float:
        try:
            return self.epsilon[chain.pair]
        except KeyError:
            raise InputError(f"no collars built for pair {chain.pair}") from None

    def chart(self, chain: Chain):
        try:
            return self.charts[chain]
        except KeyError:
            raise InputError(f"no chart for {chain}") from None

    def route(self, chain: Chain, piece: int) -> Chain:
        """The deepest chain whose chart evaluates G on this patch."""
        key = (chain, piece)
        if key in self._routes:
            return self._routes[key]
        family = self.family
        own = family.patch_for(chain, piece)
        if own is None:
            raise InputError(f"{chain} has no patch on piece {piece}")
        best = chain
        best_patch = own
        for other in family.chains(*chain.pair):
            if other.length <= best.length or other not in self.charts:
                continue
            if not set(chain.points) <= set(other.points):
                continue
            patch = family.patch_for(other, piece)
            if patch is not None and own.walls <= patch.walls:
                best, best_patch = other, patch
        self._routes[key] = best
        return best

    def records(self) -> list[dict]:
        """Per-chain atlas summary used by reports."""
        out = []
        for chain in sorted(self.charts, key=lambda c: c.points):
            chart = self.charts[chain]
            out.append(
                {
                    "pair": list(chain.pair),
                    "chain": list(chain.points),
                    "epsilon": self.epsilon[chain.pair],
                    "affine": bool(chart.is_affine),
                    "patches": len(chart.patches),
                }
            )
        return out

    def is_affine_pair(self, pair) -> bool:
        return all(
            self.charts[c].is_affine
            for c in self.family.chains(*pair)
            if c.length >= 1
        )


# ---------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------


def _glue_unchecked(atlas: CollarAtlas, chain: Chain, point, values):
    piece, coords = point
    values = np.asarray(values, dtype=float)
    if chain.length == 0 or not values.size or not np.any(values):
        return piece, np.array(coords, dtype=float)
    route = atlas.route(chain, piece)
    chart = atlas.chart(route)
    if chart.is_affine:
        patch = chart.patches[piece]
        out = np.array(coords, dtype=float)
        for j, r in enumerate(chain.interior):
            w = patch.wall(r)
            out[w.axis] += w.inward_sign * values[j]
        return piece, out
    x, lam = chart.inverse(piece, coords)
    for j, r in enumerate(chain.interior):
        lam[route.interior.index(r)] += values[j]
    return piece, chart.forward(piece, x, lam)


def glue(atlas: CollarAtlas, chain: Chain, point, values):
    """Evaluate G_I at a stratum point with collar coordinates.

    ``values`` has one entry per interior point of the chain, each in
    [0, eps) for the pair's eps.  The output's stratum is the chain kept
    by the zero pattern; all-zero values return the point exactly.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (chain.length,):
        raise InputError(
            f"{values.shape} collar values for a chain of length {chain.length}"
        )
    eps = atlas.eps(chain)
    if np.any(values < 0) or np.any(values >= eps):
        raise RangeError(
            f"collar values must lie in [0, {eps:g}), got {values}"
        )
    got = atlas.family.classify(chain.pair, point)
    if got != chain:
        raise InputError(f"point lies in stratum {got}, not {chain}")
    return _glue_unchecked(atlas, chain, point, values)


def glue_pair(atlas: CollarAtlas, triple, left, right, lam: float):
    """Glue two moduli points along a single junction: left #_lam right.

    ``triple`` is (p, r, q); lam = 0 returns the embedded product pair.
    """
    p, r, q = triple
    chain = Chain((p, r, q))
    emb = atlas.family.embedding(p, r, q)
    x = emb.forward(left, right)
    return glue(atlas, chain, x, [lam])


def glue_differential(atlas: CollarAtlas, chain: Chain, point, values):
    """Differential of G_I at (x, values) in box coordinates.

    Columns: first the free (stratum-tangent) coordinates of x, then the
    collar slots.  Exact for affine routes, high-order finite differences
    otherwise.
    """
    piece, coords = point
    route = atlas.route(chain, piece)
    chart = atlas.chart(route)
    space = atlas.family.space(*chain.pair)
    box = space.pieces[piece]
    patch = atlas.family.patch_for(chain, piece)
    pinned = {patch.wall(r).axis for r in chain.interior}
    free = [a for a in range(box.dim) if a not in pinned]
    k = chain.length
    if chart.is_affine:
        jac = np.zeros((box.dim, len(free) + k))
        for col, a in enumerate(free):
            jac[a, col] = 1.0
        for j, r in enumerate(chain.interior):
            w = patch.wall(r)
            jac[w.axis, len(free) + j] = w.inward_sign
        return jac

    def f(z):
        x = np.array(coords, dtype=float)
        x[free] = z[: len(free)]
        return _glue_unchecked(atlas, chain, (piece, x), z[len(free) :])[1]

    z0 = np.concatenate([np.asarray(coords, float)[free], values])
    cols = []
    for i in range(len(z0)):
        e = np.zeros(len(z0))
        h = 1e-4
        e[i] = h
        # fourth-order central stencil
        d = (
            f(z0 - 2 * e) - 8 * f(z0 - e) + 8 * f(z0 + e) - f(z0 + 2 * e)
        ) / (12 * h)
        cols.append(d)
    return np.stack(cols, axis=1)


def _glue_rows(atlas, chain, piece, X, V):
    """Vectorized unchecked gluing of stacked stratum points."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if chain.length == 0 or V.size == 0:
        return np.array(X, dtype=float)
    route = atlas.route(chain, piece)
    chart = atlas.chart(route)
    if chart.is_affine:
        patch = chart.patches[piece]
        out = np.array(X, dtype=float)
        for j, r in enumerate(chain.interior):
            w = patch.wall(r)
            out[:, w.axis] += w.inward_sign * V[:, j]
        return out
    return np.stack(
        [
            _glue_unchecked(atlas, chain, (piece, x), v)[1]
            for x, v in zip(X, V)
        ]
    )


def _rows_distance(space, piece, A, B) -> np.ndarray:
    mat = space.charts[piece].matrix
    if A.size == 0:
        return np.zeros(len(A))
    return np.linalg.norm((A - B) @ mat.T, axis=1)


def _emb_rows(emb, left_piece, L, right_piece, R):
    """Row-wise product embedding; returns (target piece, rows)."""
    if isinstance(emb, SlotEmbedding) and emb.is_affine:
        return 0, emb.forward_many(np.asarray(L, float), np.asarray(R, float))
    rows = [
        emb.forward((left_piece, l), (right_piece, r)) for l, r in zip(L, R)
    ]
    pieces = {p for p, _ in rows}
    if len(pieces) != 1:
        raise InputError("embedded batch spans several pieces")
    return rows[0][0], np.stack([c for _, c in rows])


# ---------------------------------------------------------------------
# junction normalization
# ---------------------------------------------------------------------


def _junction_rhs(atlas: CollarAtlas, chain: Chain, slot: int):
    """The two-sided gluing through the junction at one interior slot."""
    family = atlas.family
    junction = chain.points[slot + 1]
    left_chain = Chain(chain.points[: slot + 2])
    right_chain = Chain(chain.points[slot + 1 :])
    emb = family.embedding(chain.head, junction, chain.tail)

    def rhs(piece, x, lam):
        left, right = emb.inverse((piece, x))
        if left_chain.length:
            left = _glue_unchecked(atlas, left_chain, left, lam[:slot])
        if right_chain.length:
            right = _glue_unchecked(
                atlas, right_chain, right, lam[slot + 1 :]
            )
        return emb.forward(left, right)

    return rhs


def _junction_residual(atlas, chart, slot, eps, samples, rng) -> float:
    family = atlas.family
    chain = chart.chain
    space = family.space(*chain.pair)
    rhs = _junction_rhs(atlas, chain, slot)
    worst = 0.0
    points = family.sample_stratum(chain, samples, rng)
    for piece, coords in points:
        lam = rng.uniform(0.0, eps, size=chain.length)
        lam[slot] = 0.0
        lhs = chart.forward(piece, coords, lam)
        rpiece, rcoords = rhs(piece, coords, lam)
        if rpiece != piece:
            return np.inf
        worst = max(
            worst, float(_rows_distance(space, piece, lhs[None], rcoords[None])[0])
        )
    return worst


def normalize_junctions(
    atlas: CollarAtlas,
    chart,
    eps: float,
    samples: int = 24,
    rng=None,
    tol: float = 1e-9,
    epsilon_floor: float = 1e-6,
):
    """Correct a chart until every junction identity holds on samples.

    Junctions are processed in chain order; a correction at one junction
    leaves the earlier identities intact.  Returns (chart, eps); eps is
    halved when a corrected junction still misses the tolerance, and an
    underflow below the floor aborts the build.
    """
    rng = np.random.default_rng(rng)
    for slot in range(chart.chain.length):
        corrected = False
        while True:
            res = _junction_residual(atlas, chart, slot, eps, samples, rng)
            if res <= tol:
                break
            if not corrected:
                chart = CorrectedChart(
                    chart, slot, _junction_rhs(atlas, chart.chain, slot)
                )
                corrected = True
                continue
            eps /= 2
            if eps < epsilon_floor:
                raise EpsilonUnderflowError(
                    f"collar width underflow normalizing {chart.chain} "
                    f"(junction {slot}, residual {res:.3e})",
                    epsilon=eps,
                )
    return chart, eps


# ---------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------


def build_collars(
    family: StratifiedFamily,
    tol: float = 1e-9,
    epsilon_floor: float = 1e-6,
    samples: int = 24,
    rng=None,
    validate: bool = True,
) -> CollarAtlas:
    """Build the full atlas of gluing maps for a validated family.

    Pairs are processed by increasing maximal chain length, so every
    junction normalization only consumes collars of strictly shorter
    pairs.  Each pair ends with a single eps, bounded by half its
    shortest box side and by the eps of every sub-pair.
    """
    rng = np.random.default_rng(rng)
    if validate:
        report = validate_family(family, samples=32, rng=rng, tol=tol)
        if not report.passed:
            fail = report.first_failure()
            raise InputError(
                f"family validation failed: {fail.name} {fail.subject} "
                f"{fail.witness}"
            )
    atlas = CollarAtlas(family)
    pairs = sorted(
        family.pairs(), key=lambda pq: (pair_length(family.poset, *pq), pq)
    )
    for p, q in pairs:
        space = family.space(p, q)
        eps = 0.5
        for piece in space.pieces:
            if piece.dim:
                eps = min(
                    eps,
                    min(hi - lo for lo, hi in zip(piece.lower, piece.upper)) / 2,
                )
        for r in sorted(family.poset.below(p)):
            if family.poset.precedes(r, q):
                eps = min(eps, atlas.epsilon[(p, r)], atlas.epsilon[(r, q)])
        chains = sorted(
            family.chains(p, q), key=lambda c: (-c.length, c.points)
        )
        for chain in chains:
            if chain.length >= 1:
                atlas.charts[chain] = initial_collar(family, chain)
        for chain in chains:
            if chain.length >= 1:
                chart, eps = normalize_junctions(
                    atlas,
                    atlas.charts[chain],
                    eps,
                    samples=samples,
                    rng=rng,
                    tol=tol,
                    epsilon_floor=epsilon_floor,
                )
                atlas.charts[chain] = chart
        if eps < epsilon_floor:
            raise EpsilonUnderflowError(
                f"collar width underflow for pair ({p},{q})", epsilon=eps
            )
        atlas.epsilon[(p, q)] = eps
    return atlas


# ---------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------


def check_compat_one_pair(
    atlas: CollarAtlas, outer: Chain, inner: Chain, samples: int = 1024, rng=None
) -> float:
    """Max residual of two-stage versus direct gluing for inner <= outer.

    Direct: G_outer(x, L).  Two-stage: zero the inner slots, glue, then
    glue the inner chain with the remaining coordinates.  Sampled with
    strictly positive coordinates outside the inner chain.
    """
    rng = np.random.default_rng(rng)
    family = atlas.family
    if not is_subchain(inner, outer):
        raise InputError(f"{inner} is not a subchain of {outer}")
    if outer.length == 0:
        return 0.0
    eps = atlas.eps(outer)
    space = family.space(*outer.pair)
    inner_idx = [outer.interior.index(r) for r in inner.interior]
    outer_idx = [
        j for j in range(outer.length) if j not in set(inner_idx)
    ]
    worst = 0.0
    stratum = family.stratum(outer)
    per = max(2, -(-samples // max(1, len(stratum.patches))))
    for patch in stratum.patches:
        X = family.sample_patch(outer, patch, per, rng)
        V = rng.uniform(0.0, eps, size=(per, outer.length))
        if outer_idx:
            V[:, outer_idx] = rng.uniform(
                0.05 * eps, 0.95 * eps, size=(per, len(outer_idx))
            )
        lhs = _glue_rows(atlas, outer, patch.piece, X, V)
        masked = V.copy()
        if inner_idx:
            masked[:, inner_idx] = 0.0
        mid = _glue_rows(atlas, outer, patch.piece, X, masked)
        rhs = _glue_rows(atlas, inner, patch.piece, mid, V[:, inner_idx])
        worst = max(
            worst, float(_rows_distance(space, patch.piece, lhs, rhs).max())
        )
    return worst


def check_compat_concat(
    atlas: CollarAtlas, first: Chain, second: Chain, samples: int = 1024, rng=None
) -> float:
    """Max residual of glued concatenation versus the embedded product.

    Left side: G on the concatenated chain at the embedded product point
    with the junction coordinate zero.  Right side: glue each factor
    separately, then embed.
    """
    rng = np.random.default_rng(rng)
    family = atlas.family
    joined = concat_chains(first, second)
    emb = family.embedding(first.head, first.tail, second.tail)
    eps = atlas.eps(joined)
    space = family.space(*joined.pair)
    worst = 0.0
    pa = family.stratum(first).patches
    pb = family.stratum(second).patches
    per = max(2, -(-samples // max(1, len(pa) * len(pb))))
    for patch_a in pa:
        for patch_b in pb:
            X1 = family.sample_patch(first, patch_a, per, rng)
            X2 = family.sample_patch(second, patch_b, per, rng)
            V1 = rng.uniform(0.0, eps, size=(per, first.length))
            V2 = rng.uniform(0.0, eps, size=(per, second.length))
            piece_t, T = _emb_rows(emb, patch_a.piece, X1, patch_b.piece, X2)
            G1 = _glue_rows(atlas, first, patch_a.piece, X1, V1)
            G2 = _glue_rows(atlas, second, patch_b.piece, X2, V2)
            _, R = _emb_rows(emb, patch_a.piece, G1, patch_b.piece, G2)
            VJ = np.concatenate(
                [V1, np.zeros((per, 1)), V2], axis=1
            )
            lhs = _glue_rows(atlas, joined, piece_t, T, VJ)
            worst = max(
                worst, float(_rows_distance(space, piece_t, lhs, R).max())
            )
    return worst


def check_associativity(
    atlas: CollarAtlas, quad=None, samples: int = 100, grid: int = 32, rng=None
) -> float:
    """Max residual of the two bracketings of a double gluing.

    For points g1, g2, g3 of the three open moduli of a length-3 chain
    p0 > p1 > p2 > p3 and a grid of (lam1, lam2), compares
    (g1 # g2) # g3 with g1 # (g2 # g3), and both against the double
    collar of the full chain.
    """
    rng = np.random.default_rng(rng)
    family = atlas.family
    if quad is None:
        quads = [
            c.points
            for pq in family.pairs()
            for c in family.chains(*pq)
            if c.length == 2
        ]
        if not quads:
            raise InputError("family has no length-2 chains")
        quad = quads[0]
    p0, p1, p2, p3 = quad
    c012 = Chain((p0, p1, p2))
    c123 = Chain((p1, p2, p3))
    c023 = Chain((p0, p2, p3))
    c013 = Chain((p0, p1, p3))
    full = Chain((p0, p1, p2, p3))
    e012 = family.embedding(p0, p1, p2)
    e123 = family.embedding(p1, p2, p3)
    e023 = family.embedding(p0, p2, p3)
    e013 = family.embedding(p0, p1, p3)
    eps = min(
        atlas.eps(c012), atlas.eps(c123), atlas.eps(full)
    )
    lam = (np.arange(grid) + 0.5) / grid * eps
    L1, L2 = np.meshgrid(lam, lam, indexing="ij")
    l1 = L1.ravel()[:, None]
    l2 = L2.ravel()[:, None]
    n = grid * grid
    worst = 0.0
    for _ in range(samples):
        (q1, g1), = family.sample_stratum(Chain((p0, p1)), 1, rng)
        (q2, g2), = family.sample_stratum(Chain((p1, p2)), 1, rng)
        (q3, g3), = family.sample_stratum(Chain((p2, p3)), 1, rng)
        G1 = np.tile(g1, (n, 1))
        G2 = np.tile(g2, (n, 1))
        G3 = np.tile(g3, (n, 1))
        piece12, X12 = _emb_rows(e012, q1, G1, q2, G2)
        A = _glue_rows(atlas, c012, piece12, X12, l1)
        piece_a, XA = _emb_rows(e023, piece12, A, q3, G3)
        lhs = _glue_rows(atlas, c023, piece_a, XA, l2)
        piece23, X23 = _emb_rows(e123, q2, G2, q3, G3)
        B = _glue_rows(atlas, c123, piece23, X23, l2)
        piece_b, XB = _emb_rows(e013, q1, G1, piece23, B)
        rhs = _glue_rows(atlas, c013, piece_b, XB, l1)
        piece_f, XF = _emb_rows(e023, piece12, X12, q3, G3)
        both = _glue_rows(
            atlas, full, piece_f, XF, np.concatenate([l1, l2], axis=1)
        )
        space = family.space(p0, p3)
        worst = max(
            worst,
            float(_rows_distance(space, piece_a, lhs, rhs).max()),
            float(_rows_distance(space, piece_a, lhs, both).max()),
            float(_rows_distance(space, piece_b, rhs, both).max()),
        )
    return worst


def check_stratum_condition(
    atlas: CollarAtlas, samples: int = 10000, rng=None
) -> tuple[int, int]:
    """Count stratum-condition failures over random zero patterns.

    Returns (failures, total).  A failure is a glued point whose depth
    or assigned chain differs from the chain kept by the zero pattern.
    """
    rng = np.random.default_rng(rng)
    family = atlas.family
    chains = [c for c in atlas.charts if c.length >= 1]
    if not chains:
        return 0, 0
    per = max(1, samples // len(chains))
    failures = total = 0
    for chain in chains:
        eps = atlas.eps(chain)
        space = family.space(*chain.pair)
        pts = family.sample_stratum(chain, per, rng)
        zero = rng.random((len(pts), chain.length)) < 0.5
        vals = rng.uniform(0.05 * eps, 0.95 * eps, size=zero.shape)
        vals[zero] = 0.0
        for point, v in zip(pts, vals):
            expect = zero_support_subchain(
                GlueParam(chain, tuple(float(x) for x in v))
            )
            out = glue(atlas, chain, point, v)
            got = family.classify(chain.pair, out)
            total += 1
            if got != expect or space.depth(out) != expect.length:
                failures += 1
    return failures, total


def check_injectivity(
    atlas: CollarAtlas, chain: Chain, samples: int = 10000, rng=None
) -> float:
    """Min output separation over distinct random inputs (collision scan).

    Outputs are lexicographically sorted and adjacent rows compared;
    exact collisions are always adjacent after sorting.
    """
    rng = np.random.default_rng(rng)
    family = atlas.family
    eps = atlas.eps(chain)
    stratum = family.stratum(chain)
    per = max(2, samples // max(1, len(stratum.patches)))
    best = np.inf
    for patch in stratum.patches:
        X = family.sample_patch(chain, patch, per, rng)
        V = rng.uniform(0.0, eps, size=(per, chain.length))
        out = _glue_rows(atlas, chain, patch.piece, X, V)
        if out.shape[1] == 0 or len(out) < 2:
            continue
        order = np.lexsort(out.T[::-1])
        srt = out[order]
        gaps = np.linalg.norm(np.diff(srt, axis=0), axis=1)
        best = min(best, float(gaps.min()))
    return best


def check_differential(
    atlas: CollarAtlas, chain: Chain, samples: int = 16, rng=None
) -> float:
    """Max relative error of the differential against central differences."""
    rng = np.random.default_rng(rng)
    family = atlas.family
    eps = atlas.eps(chain)
    worst = 0.0
    for piece, coords in family.sample_stratum(chain, samples, rng):
        v = rng.uniform(0.1 * eps, 0.9 * eps, size=chain.length)
        jac = glue_differential(atlas, chain, (piece, coords), v)
        box = family.space(*chain.pair).pieces[piece]
        patch = family.patch_for(chain, piece)
        pinned = {patch.wall(r).axis for r in chain.interior}
        free = [a for a in range(box.dim) if a not in pinned]

        def f(z):
            x = np.array(coords, dtype=float)
            x[free] = z[: len(free)]
            return _glue_unchecked(atlas, chain, (piece, x), z[len(free) :])[1]

        z0 = np.concatenate([coords[free], v])
        h = 1e-6
        for i in range(len(z0)):
            e = np.zeros(len(z0))
            e[i] = h
            fd = (f(z0 + e) - f(z0 - e)) / (2 * h)
            scale = max(1.0, float(np.linalg.norm(fd)))
            worst = max(
                worst, float(np.linalg.norm(jac[:, i] - fd)) / scale
            )
    return worst


# ---------------------------------------------------------------------
# collars of a single compact space with faces
# ---------------------------------------------------------------------


class SingleSpaceCollars:
    """Face collars of one compact polytopal space, rescaled to eps = 1.

    For every set of faces with nonempty intersection, ``glue`` moves a
    point of the open intersection off each face by its coordinate in
    [0, 1), scaled by the box side, so the empty set gives the inclusion
    and nested subsets compose exactly.
    """

    def __init__(self, space, faces=None):
        self.space = space
        self.faces = list(faces) if faces is not None else space.connected_faces()
        labels = [f.label for f in self.faces]
        if len(set(labels)) != len(labels):
            raise InputError("faces must carry distinct labels")
        self._wall_face: dict = {}
        for i, face in enumerate(self.faces):
            for comp in face.components:
                if comp in self._wall_face:
                    raise InputError(
                        f"faces {self._wall_face[comp]} and {i} overlap on {comp}"
                    )
                self._wall_face[comp] = i
        recorded = {
            (i, w)
            for i, piece in enumerate(space.pieces)
            for w in piece.walls
        }
        uncovered = recorded - set(self._wall_face)
        if uncovered:
            raise InputError(
                f"faces do not cover the boundary: {sorted(uncovered)[0]} free"
            )

    def face_subsets(self) -> list[tuple[int, ...]]:
        """All index sets of faces with nonempty intersection, incl. ()."""
        out = [()]
        for k in range(1, len(self.faces) + 1):
            for combo in combinations(range(len(self.faces)), k):
                hits = self.space.face_intersection(
                    [self.faces[i] for i in combo]
                )
                if hits:
                    out.append(combo)
        return out

    def glue(self, subset, point, values):
        """Collar a point of the open intersection of the given faces."""
        subset = tuple(subset)
        values = np.asarray(values, dtype=float)
        if values.shape != (len(subset),):
            raise InputError(
                f"{values.shape} collar values for {len(subset)} faces"
            )
        if np.any(values < 0) or np.any(values >= 1.0):
            raise RangeError(f"collar values must lie in [0, 1), got {values}")
        piece, coords = self.space.piece_of(point)
        box = self.space.pieces[piece]
        pinned = {}
        for w in box.walls_at(coords):
            pinned[self._wall_face[(piece, w)]] = w
        if set(pinned) != set(subset):
            raise InputError(
                f"point pins faces {sorted(pinned)}, expected {sorted(subset)}"
            )
        out = np.array(coords, dtype=float)
        for i, v in zip(subset, values):
            w = pinned[i]
            side = box.upper[w.axis] - box.lower[w.axis]
            out[w.axis] += w.inward_sign * v * side
        return piece, out

    def sample_intersection(self, subset, count, rng, margin: float = 1e-3):
        """Random points of the open intersection of the given faces."""
        rng = np.random.default_rng(rng)
        patches = self.space.face_intersection([self.faces[i] for i in subset])
        if not patches and subset:
            raise InputError(f"faces {subset} have empty intersection")
        out = []
        pool = [None] if not subset else patches
        per = -(-count // max(1, len(pool)))
        for patch in pool:
            piece_idx = patch.piece if patch else 0
            box = self.space.pieces[piece_idx]
            lo = np.asarray(box.lower)
            hi = np.asarray(box.upper)
            coords = lo + (hi - lo) * rng.uniform(
                margin, 1 - margin, size=(per, box.dim)
            )
            if patch:
                for w in patch.walls:
                    coords[:, w.axis] = box.wall_value(w)
            out.extend((piece_idx, c) for c in coords)
        return out[:count]


def single_space_collars(space, faces=None) -> SingleSpaceCollars:
    """Build the face collar system of one compact space with faces.

    The faces must cover the recorded boundary with pairwise disjoint
    interiors; parameters are rescaled so every collar domain is [0, 1).
    """
    ok, witness = space.check_manifold_with_faces()
    if not ok:
        raise InputError(
            f"space is not a manifold with faces at patch {witness}"
        )
    return SingleSpaceCollars(space, faces)


def check_single_space_compat(
    collars: SingleSpaceCollars, samples: int = 10000, rng=None
) -> float:
    """Max residual of nested-face compatibility over all subset pairs.

    For every face set I and every J inside I: collar I directly versus
    collaring off I - J first (J coordinates zeroed) and then off J.
    """
    rng = np.random.default_rng(rng)
    subsets = [s for s in collars.face_subsets() if s]
    budget = max(1, samples // max(1, sum(2 ** len(s) for s in subsets)))
    worst = 0.0
    for I in subsets:
        for k in range(len(I) + 1):
            for J in combinations(I, k):
                for point in collars.sample_intersection(I, budget, rng):
                    vals = rng.uniform(0.0, 0.999, size=len(I))
                    piece, lhs = collars.glue(I, point, vals)
                    masked = vals.copy()
                    jpos = [I.index(j) for j in J]
                    masked[jpos] = 0.0
                    mid = collars.glue(I, point, masked)
                    _, rhs = collars.glue(J, mid, vals[jpos])
                    d = float(np.linalg.norm(lhs - rhs))
                    worst = max(worst, d)
    return worst
