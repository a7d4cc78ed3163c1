"""Integer-lattice geometric primitives.

Conventions used throughout:

* Points and vectors are plain tuples.  Lattice data is integer; query
  points may be ``fractions.Fraction``.  All containment predicates are
  decided in exact rational arithmetic; floating point enters only through
  angle values (arccos).

* ``chi(omega, x)`` is the local density of a polytope at a point: 1 in the
  interior, 0 outside, 1/2 on a facet, alpha/(2*pi) on an edge with
  dihedral angle alpha, beta/(4*pi) at a vertex with solid angle beta.
  It is additive under essentially-disjoint unions.

* A truncated prism P(XYZ) is the signed solid between a triangle XYZ and
  its vertical projection onto the xy-plane.  A tetrahedron splits into
  four signed truncated prisms (one per face); the identity is exercised
  pointwise by the tests.

* Unimodular maps are 3x3 integer matrices of determinant one, stored as
  nested tuples; they map Z^3 bijectively onto itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .exact_sums import extended_gcd

Vec3 = tuple  # 3-tuple of int or Fraction
Mat3 = tuple  # 3x3 nested tuple of int

IDENTITY3: Mat3 = ((1, 0, 0), (0, 1, 0), (0, 0, 1))

__all__ = [
    "IDENTITY3",
    "orientation",
    "mat_vec",
    "mat_mul",
    "mat_det",
    "unimodular_inverse",
    "unimodular_to_e3",
    "edge_angle_in_pulled_back_frame",
    "TetFrame",
    "chi_point",
    "segment_chi_average",
    "PrismPiece",
    "split_simplex_into_prisms",
    "prism_chi_generic",
]


# ---------------------------------------------------------------------------
# small exact vector/matrix helpers
# ---------------------------------------------------------------------------

def _sub(p, q):
    return tuple(a - b for a, b in zip(p, q))


def _dot(p, q):
    return sum(a * b for a, b in zip(p, q))


def _cross(p, q):
    return (
        p[1] * q[2] - p[2] * q[1],
        p[2] * q[0] - p[0] * q[2],
        p[0] * q[1] - p[1] * q[0],
    )


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def mat_vec(m: Mat3, v) -> tuple:
    return tuple(_dot(row, v) for row in m)


def mat_mul(m: Mat3, n: Mat3) -> Mat3:
    cols = tuple(zip(*n))
    return tuple(tuple(_dot(row, col) for col in cols) for row in m)


def mat_det(m: Mat3):
    return _dot(m[0], _cross(m[1], m[2]))


def unimodular_inverse(m: Mat3) -> Mat3:
    """Integer inverse via the adjugate; requires det(m) == 1."""
    if mat_det(m) != 1:
        raise ValueError("matrix is not unimodular with determinant 1")
    cols = tuple(zip(*m))
    adj_rows = (
        _cross(cols[1], cols[2]),
        _cross(cols[2], cols[0]),
        _cross(cols[0], cols[1]),
    )
    return tuple(tuple(row) for row in adj_rows)


def orientation(points: Sequence) -> int:
    """Orientation in {-1, 0, +1} of d+1 points in R^d, d in {1, 2, 3}.

    Sign of det(P2-P1, ..., P_{d+1}-P1); zero iff the points are affinely
    degenerate.  Exact for integer or Fraction coordinates.
    """
    d = len(points) - 1
    if d not in (1, 2, 3):
        raise ValueError("need d+1 points in R^d with d in {1,2,3}")
    if any(len(p) != d for p in points):
        raise ValueError("point dimension does not match point count")
    rows = [_sub(p, points[0]) for p in points[1:]]
    if d == 1:
        det = rows[0][0]
    elif d == 2:
        det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    else:
        det = _dot(rows[0], _cross(rows[1], rows[2]))
    return _sign(det)


# ---------------------------------------------------------------------------
# unimodular map sending a coprime direction to e3
# ---------------------------------------------------------------------------

def unimodular_to_e3(r) -> Mat3:
    """Integer matrix M with det M = 1 and M @ r = e3, for coprime r != 0.

    Built from two Bezout identities: first rotate (r1, r2) onto the x-axis
    inside the xy-plane, then rotate (gcd(r1, r2), r3) onto the z-axis in
    the xz-plane.  With the normalized Bezout coefficients the entries stay
    O(|r|^2), which is what keeps the downstream reduction logarithmic.
    """
    r1, r2, r3 = r
    if r1 == 0 and r2 == 0 and r3 == 0:
        raise ValueError("r must be nonzero")
    if math.gcd(math.gcd(abs(r1), abs(r2)), abs(r3)) != 1:
        raise ValueError("components of r must be coprime")
    if r1 == 0 and r2 == 0:
        if r3 == 1:
            return IDENTITY3
        return ((1, 0, 0), (0, -1, 0), (0, 0, -1))  # r3 == -1
    g12, c12, d12 = extended_gcd(r1, r2)
    _, c3, d3 = extended_gcd(g12, r3)
    m1 = ((c12, d12, 0), (-r2 // g12, r1 // g12, 0), (0, 0, 1))
    m2 = ((r3, 0, -g12), (0, 1, 0), (c3, 0, d3))
    return mat_mul(m2, m1)


def edge_angle_in_pulled_back_frame(v, w, minv: Mat3) -> float:
    """Angle between (M^-1 v) x (M^-1 e3) and (M^-1 w) x (M^-1 e3).

    This is the dihedral angle, measured in the untransformed frame, of the
    wedge that the vertical prism edge makes between the lateral faces
    through directions v and w.  The arccos argument is clamped to [-1, 1];
    deviations beyond 1e-9 indicate a bug upstream.
    """
    col3 = tuple(row[2] for row in minv)
    a = _cross(mat_vec(minv, v), col3)
    b = _cross(mat_vec(minv, w), col3)
    na = _dot(a, a)
    nb = _dot(b, b)
    if na == 0 or nb == 0:
        raise ValueError("direction parallel to the pulled-back e3: undefined angle")
    x = float(_dot(a, b)) / math.sqrt(float(na) * float(nb))
    if abs(x) > 1.0 + 1e-9:
        raise ArithmeticError(f"arccos argument {x} out of range")
    return math.acos(max(-1.0, min(1.0, x)))


# ---------------------------------------------------------------------------
# tetrahedron frame: inward facet halfspaces + dihedral angles
# ---------------------------------------------------------------------------

@dataclass
class TetFrame:
    """Exact halfspace description of a tetrahedron.

    Face k is opposite vertex k; ``normals[k]`` points inward, so a point x
    is interior iff normals[k] . x > offsets[k] for all k.  Dihedral angles
    along the six edges are computed lazily (floats).
    """

    vertices: tuple
    normals: tuple
    offsets: tuple

    _dihedrals: dict | None = None

    @staticmethod
    def build(tet) -> "TetFrame | None":
        """Return the frame, or None if the tetrahedron is degenerate."""
        verts = tuple(tuple(v) for v in tet)
        if len(verts) != 4:
            raise ValueError("a tetrahedron needs 4 vertices")
        normals = []
        offsets = []
        for k in range(4):
            a, b, c = (verts[j] for j in range(4) if j != k)
            n = _cross(_sub(b, a), _sub(c, a))
            off = _dot(n, a)
            s = _dot(n, verts[k]) - off
            if s == 0:
                return None
            if s < 0:
                n = tuple(-x for x in n)
                off = -off
            normals.append(n)
            offsets.append(off)
        return TetFrame(verts, tuple(normals), tuple(offsets))

    def face_values(self, x):
        return tuple(_dot(self.normals[k], x) - self.offsets[k] for k in range(4))

    def dihedral(self, i: int, j: int) -> float:
        """Interior dihedral angle along the edge shared by faces i and j."""
        if self._dihedrals is None:
            self._dihedrals = {}
        key = (min(i, j), max(i, j))
        ang = self._dihedrals.get(key)
        if ang is None:
            ni, nj = self.normals[i], self.normals[j]
            x = float(_dot(ni, nj)) / math.sqrt(float(_dot(ni, ni)) * float(_dot(nj, nj)))
            ang = math.pi - math.acos(max(-1.0, min(1.0, x)))
            self._dihedrals[key] = ang
        return ang

    def vertex_solid_angle(self, zero_faces) -> float:
        """Solid angle at the vertex shared by three faces (Girard excess)."""
        k1, k2, k3 = zero_faces
        return (
            self.dihedral(k1, k2) + self.dihedral(k1, k3) + self.dihedral(k2, k3)
            - math.pi
        )


def chi_point(tet, x) -> float:
    """Local density of the tetrahedron at x: interior 1, facet 1/2,
    edge alpha/(2 pi), vertex beta/(4 pi), outside 0.

    Containment is decided exactly; only the angle values are floats.
    Degenerate (coplanar) tetrahedra have chi identically zero.
    """
    frame = TetFrame.build(tet)
    if frame is None:
        return 0.0
    vals = frame.face_values(tuple(x))
    if any(v < 0 for v in vals):
        return 0.0
    zeros = [k for k, v in enumerate(vals) if v == 0]
    if not zeros:
        return 1.0
    if len(zeros) == 1:
        return 0.5
    if len(zeros) == 2:
        return frame.dihedral(*zeros) / (2.0 * math.pi)
    return frame.vertex_solid_angle(zeros) / (4.0 * math.pi)


# ---------------------------------------------------------------------------
# exact averaging of chi along a segment
# ---------------------------------------------------------------------------

def _segment_chi_from_affine(frame: TetFrame, alphas, betas) -> float:
    """Average of chi along the segment whose face values are
    v_k(t) = alphas[k] + t * betas[k], t in [0, 1], with integer
    coefficients.

    Closed form: the inside parameter set is one interval (intersection of
    half-space intervals), and a face can be tight on a positive-length
    piece only if its value vanishes identically, so the average is the
    interval's length times 1, 1/2 (in one face plane) or the dihedral
    fraction (along an edge).  Integer arithmetic throughout; floats only
    in the final division and the angle.
    """
    den = 1
    for b in betas:
        if b:
            den *= abs(b)
    lo, hi = 0, den
    zero_faces: list[int] = []
    for k, (a, b) in enumerate(zip(alphas, betas)):
        if b == 0:
            if a < 0:
                return 0.0
            if a == 0:
                zero_faces.append(k)
        else:
            t = -a * (den // b)
            if b > 0:
                if t > lo:
                    lo = t
            else:
                if t < hi:
                    hi = t
    if hi <= lo:
        return 0.0
    frac = (hi - lo) / den
    nz = len(zero_faces)
    if nz == 0:
        return frac
    if nz == 1:
        return frac / 2.0
    if nz == 2:
        return frac * frame.dihedral(*zero_faces) / (2.0 * math.pi)
    raise ArithmeticError("segment on three faces of a proper tetrahedron")


def segment_chi_average(tet, p0, p1) -> float:
    """integral_0^1 chi_tet(p0 + t (p1 - p0)) dt for rational endpoints.

    The parameter-length fraction strictly inside counts 1, fractions lying
    within a facet plane count 1/2, fractions along an edge count by the
    edge's dihedral fraction; isolated touches have measure zero.
    """
    frame = TetFrame.build(tet)
    if frame is None:
        return 0.0
    p0 = tuple(Fraction(c) for c in p0)
    p1 = tuple(Fraction(c) for c in p1)
    if p0 == p1:
        return chi_point(tet, p0)
    # Scale to a common denominator so the affine face values are integers.
    den = 1
    for c in (*p0, *p1):
        den = den * c.denominator // math.gcd(den, c.denominator)
    q0 = tuple(int(c * den) for c in p0)
    q1 = tuple(int(c * den) for c in p1)
    d = _sub(q1, q0)
    alphas = []
    betas = []
    for n, off in zip(frame.normals, frame.offsets):
        alphas.append(_dot(n, q0) - off * den)
        betas.append(_dot(n, d))
    return _segment_chi_from_affine(frame, alphas, betas)


# ---------------------------------------------------------------------------
# splitting a simplex into truncated prisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrismPiece:
    """One signed truncated prism of the simplex splitting.

    ``weight`` already contains both the (-1)^k face sign and the xy
    orientation of the projected base, so chi of the simplex equals
    sum(weight * chi_prism(base)) pointwise.
    """

    weight: int
    base: tuple  # three 3D vertices of the top face


def split_simplex_into_prisms(tet) -> list[PrismPiece]:
    """Four signed truncated prisms whose chi functions sum to chi of T.

    Vertices are reordered to positive 3D orientation first; a degenerate
    simplex yields weights whose signed chi sum is identically zero.
    Prisms whose base plane is parallel to the z-axis carry weight 0.
    """
    verts = [tuple(v) for v in tet]
    if orientation(verts) < 0:
        verts[2], verts[3] = verts[3], verts[2]
    pieces = []
    for k in range(4):
        base = tuple(verts[j] for j in range(4) if j != k)
        proj = [(p[0], p[1]) for p in base]
        o = orientation(proj)
        sign = -o if k % 2 else o  # -(-1)^k * o
        pieces.append(PrismPiece(weight=sign, base=base))
    return pieces


def prism_chi_generic(base, x):
    """Signed indicator of a truncated prism at a generic point.

    Returns +1/-1/0 per the signed region between the base-triangle plane
    and the xy-plane over the projected triangle, or None when x lies on
    the region's boundary (callers resample; boundary values carry angle
    weights that the splitting tests deliberately avoid).
    """
    (a, b, c) = (tuple(p) for p in base)
    proj = [(a[0], a[1]), (b[0], b[1]), (c[0], c[1])]
    o = orientation(proj)
    if o == 0:
        return 0
    xp = (x[0], x[1])
    # exact point-in-triangle via orientations against each edge
    sides = []
    for p, q in ((proj[0], proj[1]), (proj[1], proj[2]), (proj[2], proj[0])):
        sides.append(orientation([p, q, xp]) * o)
    if any(s < 0 for s in sides):
        return 0
    if any(s == 0 for s in sides):
        return None
    # plane z = (c1 x + c2 y + c3) through the base triangle
    n = _cross(_sub(b, a), _sub(c, a))
    if n[2] == 0:
        return 0
    num = _dot(n, a) - n[0] * x[0] - n[1] * x[1]
    top = Fraction(num, n[2])
    z = Fraction(x[2])
    if z == 0 or z == top:
        return None
    if 0 < z < top:
        return 1
    if top < z < 0:
        return -1
    return 0
