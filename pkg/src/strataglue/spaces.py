"""Polytopal manifolds with corners, their strata, faces and sector frames.

A space is a disjoint union of box pieces.  Each piece is a product of
intervals together with the set of *recorded* walls: the facets that
count as boundary.  Depth, strata and faces are all read off the
recorded walls, which keeps every geometric predicate exact.  A piece
may record only some of its geometric walls (the stratified families
built elsewhere use boxes whose upper walls carry no strata), and an
axis may be flagged periodic (used for circle-shaped moduli spaces).

Charts are affine: a piece's chart sends box coordinates u to A u + b in
the piece's ambient copy.  Built-ins use the identity; shears are only
used to exercise the chart-independence of the predicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import nnls

from .errors import InputError

#: tolerance for deciding that a coordinate sits on a wall
WALL_TOL = 1e-12


@dataclass(frozen=True, order=True)
class Wall:
    """One facet of a box piece: an axis and a side (0 lower, 1 upper)."""

    axis: int
    side: int

    @property
    def inward_sign(self) -> int:
        return 1 if self.side == 0 else -1


@dataclass(frozen=True)
class CornerChart:
    """Affine chart of one piece: u -> matrix @ u + offset."""

    matrix: np.ndarray
    offset: np.ndarray

    def to_ambient(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return u @ self.matrix.T + self.offset

    def from_ambient(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        inv = np.linalg.inv(self.matrix)
        return (w - self.offset) @ inv.T

    def jacobian(self, u: np.ndarray | None = None) -> np.ndarray:
        return self.matrix

    @classmethod
    def identity(cls, dim: int) -> "CornerChart":
        return cls(np.eye(dim), np.zeros(dim))


@dataclass(frozen=True)
class BoxPiece:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    walls: frozenset[Wall]
    periodic: frozenset[int] = frozenset()

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise InputError("lower/upper bound length mismatch")
        for lo, hi in zip(self.lower, self.upper):
            if not hi > lo:
                raise InputError(f"empty interval [{lo}, {hi}]")
        for w in self.walls:
            if not 0 <= w.axis < len(self.lower) or w.side not in (0, 1):
                raise InputError(f"wall {w} out of range")
            if w.axis in self.periodic:
                raise InputError(f"wall {w} on periodic axis")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def wall_value(self, wall: Wall) -> float:
        return (self.lower, self.upper)[wall.side][wall.axis]

    def wall_offset(self, coords: np.ndarray, wall: Wall) -> np.ndarray:
        """Distance of coords from the wall, measured inward (>= 0 inside)."""
        c = np.asarray(coords, dtype=float)[..., wall.axis]
        return wall.inward_sign * (c - self.wall_value(wall))

    def contains(self, coords, tol: float = WALL_TOL) -> bool:
        c = np.asarray(coords, dtype=float)
        if c.shape[-1] != self.dim:
            return False
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        per = np.array([a in self.periodic for a in range(self.dim)], dtype=bool)
        ok_lo = (c >= lo - tol) | per
        ok_hi = (c <= hi + tol) | per
        return bool(np.all(ok_lo) and np.all(ok_hi))

    def walls_at(self, coords, tol: float = WALL_TOL) -> frozenset[Wall]:
        """Recorded walls the point lies on."""
        return frozenset(
            w for w in self.walls if abs(self.wall_offset(coords, w)) <= tol
        )


@dataclass(frozen=True)
class Face:
    """A union of pairwise disjoint wall closures sharing one label."""

    label: str
    components: tuple[tuple[int, Wall], ...]  # (piece index, wall)


@dataclass(frozen=True)
class StratumPatch:
    """One box-level piece of a stratum: a piece with a set of pinned walls."""

    piece: int
    walls: frozenset[Wall]

    @property
    def codim(self) -> int:
        return len(self.walls)


@dataclass(frozen=True)
class SectorFrame:
    """Inward frame along a stratum patch, in chart coordinates."""

    patch: StratumPatch
    walls: tuple[Wall, ...]          # order fixes the frame order
    vectors: np.ndarray              # (k, dim), chart coordinates


class CorneredSpace:
    """A disjoint union of box pieces with labelled walls."""

    def __init__(
        self,
        pieces,
        charts=None,
        face_labels: dict[tuple[int, Wall], str] | None = None,
        name: str = "",
    ):
        self.pieces: tuple[BoxPiece, ...] = tuple(pieces)
        if not self.pieces:
            raise InputError("a space needs at least one piece")
        dims = {p.dim for p in self.pieces}
        if len(dims) != 1:
            raise InputError(f"mixed piece dimensions {dims}")
        self.dim = dims.pop()
        if charts is None:
            charts = [CornerChart.identity(self.dim) for _ in self.pieces]
        self.charts: tuple[CornerChart, ...] = tuple(charts)
        if len(self.charts) != len(self.pieces):
            raise InputError("one chart per piece required")
        labels = {}
        for i, piece in enumerate(self.pieces):
            for w in sorted(piece.walls):
                labels[(i, w)] = f"f{i}.{w.axis}.{w.side}"
        if face_labels:
            for key, lab in face_labels.items():
                if key not in labels:
                    raise InputError(f"label for unknown wall {key}")
                labels[key] = lab
        self.face_labels = labels
        self.name = name

    # -- point queries ------------------------------------------------

    def piece_of(self, point) -> tuple[int, np.ndarray]:
        i, coords = point
        coords = np.asarray(coords, dtype=float)
        if not 0 <= i < len(self.pieces):
            raise InputError(f"no piece {i}")
        if not self.pieces[i].contains(coords):
            raise InputError(f"coords {coords} outside piece {i}")
        return i, coords

    def depth(self, point) -> int:
        """Number of recorded walls the point lies on."""
        i, coords = self.piece_of(point)
        return len(self.pieces[i].walls_at(coords))

    def stratum_membership(self, point, k: int) -> bool:
        return self.depth(point) == k

    def walls_at(self, point) -> frozenset[Wall]:
        i, coords = self.piece_of(point)
        return self.pieces[i].walls_at(coords)

    def to_ambient(self, point) -> np.ndarray:
        i, coords = self.piece_of(point)
        return self.charts[i].to_ambient(coords)

    # -- faces ---------------------------------------------------------

    def connected_faces(self) -> list[Face]:
        """The faces of the space, one per wall label, sorted by label."""
        by_label: dict[str, list[tuple[int, Wall]]] = {}
        for key, lab in self.face_labels.items():
            by_label.setdefault(lab, []).append(key)
        return [
            Face(lab, tuple(sorted(comps)))
            for lab, comps in sorted(by_label.items())
        ]

    def check_manifold_with_faces(self):
        """Each point must lie in closures of depth-many distinct faces.

        Checked on every corner stratum of every piece (exact for box
        pieces).  Returns (ok, witness) where the witness is a stratum
        patch whose pinned walls do not meet distinct faces.
        """
        for i, piece in enumerate(self.pieces):
            for patch in self._piece_patches(i):
                labels = {self.face_labels[(i, w)] for w in patch.walls}
                if len(labels) != len(patch.walls):
                    return False, patch
        return True, None

    def _piece_patches(self, i: int) -> list[StratumPatch]:
        piece = self.pieces[i]
        axes: dict[int, list[Wall]] = {}
        for w in sorted(piece.walls):
            axes.setdefault(w.axis, []).append(w)
        patches = []
        walls = sorted(piece.walls)
        for k in range(len(walls) + 1):
            for combo in combinations(walls, k):
                if len({w.axis for w in combo}) != len(combo):
                    continue  # opposite walls of one axis never meet
                patches.append(StratumPatch(i, frozenset(combo)))
        return patches

    def stratum_patches(self) -> list[StratumPatch]:
        """All corner strata of all pieces, the empty pinning included."""
        out = []
        for i in range(len(self.pieces)):
            out.extend(self._piece_patches(i))
        return out

    def face_intersection(self, faces) -> list[StratumPatch]:
        """Chart presentation of the intersection of the given faces.

        Returns the stratum patches making up the intersection; an empty
        list signals an empty intersection.  Faces must have pairwise
        disjoint interiors.
        """
        faces = list(faces)
        labels = [f.label for f in faces]
        if len(set(labels)) != len(labels):
            raise InputError("repeated face in intersection")
        patches = []
        for i, piece in enumerate(self.pieces):
            per_face = [
                [w for (j, w) in f.components if j == i] for f in faces
            ]
            if any(not ws for ws in per_face):
                continue
            for combo in self._wall_choices(per_face):
                if len({w.axis for w in combo}) != len(combo):
                    continue
                patches.append(StratumPatch(i, frozenset(combo)))
        return patches

    @staticmethod
    def _wall_choices(per_face):
        if not per_face:
            return [()]
        rest = CorneredSpace._wall_choices(per_face[1:])
        return [(w,) + tail for w in per_face[0] for tail in rest]

    # -- frames --------------------------------------------------------

    def inward_frame(self, patch: StratumPatch, order=None) -> SectorFrame:
        """Inward coordinate frame along a stratum patch.

        ``order`` fixes the wall ordering (defaults to sorted).  The
        i-th vector is tangent to every pinned wall except the i-th and
        points into the piece; in chart coordinates these are the signed
        columns of the chart matrix.
        """
        piece = self.pieces[patch.piece]
        walls = tuple(order) if order is not None else tuple(sorted(patch.walls))
        if frozenset(walls) != patch.walls:
            raise InputError("order must be a permutation of the patch walls")
        mat = self.charts[patch.piece].matrix
        vecs = np.stack(
            [w.inward_sign * mat[:, w.axis] for w in walls]
        ) if walls else np.zeros((0, self.dim))
        return SectorFrame(patch, walls, vecs)

    def verify_frame_cone(self, frame: SectorFrame, samples: int = 64,
                          rng=None, tol: float = 1e-9) -> float:
        """Max residual of nonnegative representations in the frame.

        Samples inward vectors of the tangent sector at the patch,
        projects out the stratum tangent directions, and solves a
        nonnegative least squares problem in the projected frame.
        """
        rng = np.random.default_rng(rng)
        if not frame.patch.walls:
            return 0.0
        piece = self.pieces[frame.patch.piece]
        mat = self.charts[frame.patch.piece].matrix
        pinned = sorted(w.axis for w in frame.patch.walls)
        free = [a for a in range(self.dim) if a not in pinned]
        signs = {w.axis: w.inward_sign for w in frame.patch.walls}
        # projection onto the normal space, in chart coordinates:
        # kill the free (tangent) columns of the chart matrix
        tangent = mat[:, free] if free else np.zeros((self.dim, 0))
        q, _ = np.linalg.qr(tangent) if free else (np.zeros((self.dim, 0)), None)
        def project(v):
            return v - q @ (q.T @ v) if free else v
        basis = np.stack([project(v) for v in frame.vectors]).T  # (dim, k)
        worst = 0.0
        for _ in range(samples):
            coeffs = rng.uniform(0.0, 1.0, size=len(pinned))
            tang = rng.uniform(-1.0, 1.0, size=len(free))
            v = np.zeros(self.dim)
            for c, a in zip(coeffs, pinned):
                v += c * signs[a] * mat[:, a]
            for c, a in zip(tang, free):
                v += c * mat[:, a]
            target = project(v)
            _, res = nnls(basis, target)
            worst = max(worst, res)
        if worst > tol:
            raise InputError(f"frame cone residual {worst:.3e} exceeds {tol}")
        return worst


# -- convenience constructors -----------------------------------------


def box_space(sides, active="all", name="") -> CorneredSpace:
    """A single closed box with the given side lengths.

    ``active`` selects the recorded walls: "all" (every facet), "lower"
    (the coordinate-zero facets only), or an explicit iterable of walls.
    """
    sides = [float(s) for s in sides]
    n = len(sides)
    if active == "all":
        walls = [Wall(a, s) for a in range(n) for s in (0, 1)]
    elif active == "lower":
        walls = [Wall(a, 0) for a in range(n)]
    else:
        walls = list(active)
    piece = BoxPiece(
        lower=tuple(0.0 for _ in sides),
        upper=tuple(sides),
        walls=frozenset(walls),
    )
    return CorneredSpace([piece], name=name)


def interval_space(length: float = 1.0, name="interval") -> CorneredSpace:
    return box_space([length], active="all", name=name)


def point_space(components: int = 1, name="points") -> CorneredSpace:
    """A 0-dimensional space with the given number of points.

    Zero-dimensional pieces are modelled as degenerate one-point boxes of
    dimension 0.
    """
    pieces = [
        BoxPiece(lower=(), upper=(), walls=frozenset())
        for _ in range(components)
    ]
    return CorneredSpace(pieces, name=name)


def circle_space(circumference: float = 1.0, name="circle") -> CorneredSpace:
    piece = BoxPiece(
        lower=(0.0,),
        upper=(float(circumference),),
        walls=frozenset(),
        periodic=frozenset({0}),
    )
    return CorneredSpace([piece], name=name)
