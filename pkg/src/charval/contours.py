"""Closed quadrature contours, regions and subdivision boxes.

Two representations coexist:

* :class:`Contour` - a fixed set of nodes and complex weights (weights already
  include ``dz/dt``).  Circles use the trapezoidal rule, polygons use
  Gauss-Legendre per side.
* boxes (:class:`RectBox`, :class:`WedgeBox`, :class:`PolarBox`) - regions whose
  boundary is a list of parametrised segments, consumed by the adaptive
  integrator in :mod:`charval.engine`.  Wedge and polar boxes are parametrised
  by ``log|x|`` or ``log|z|`` so that splitting respects accumulation at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CONTOUR_TOL, ParameterError

# Split fractions.  Index 0 is the default; the others are retries when a box
# boundary lands on a characteristic value.  Kept away from 1/2 so that
# dyadic splits of symmetric regions never fall on the real axis.
SPLIT_FRACTIONS = (0.5317, 0.4561, 0.5893, 0.4172, 0.5628, 0.4437)


@dataclass(frozen=True)
class Contour:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    def winding(self, c):
        """``(1/2 pi i) sum w/(z - c)`` - the winding number about ``c``."""
        return complex(np.sum(self.weights / (self.nodes - c)) / (2j * np.pi))

    def closure_defect(self):
        return abs(complex(np.sum(self.weights)))

    def refined(self):
        """Same geometry with the node count doubled."""
        return _REFINERS[self.kind](self)


def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def circle(c, r, n):
    if r <= 0:
        raise ParameterError("circle radius must be positive")
    if n < 8:
        raise ParameterError("need at least 8 nodes")
    t = 2 * np.pi * np.arange(n) / n
    e = np.exp(1j * t)
    nodes = c + r * e
    weights = (2 * np.pi / n) * 1j * r * e
    ct = Contour("circle", nodes, weights)
    object.__setattr__(ct, "_params", (complex(c), float(r), int(n)))
    return ct


def polygon(vertices, n_per_side, kind="polygon"):
    """Closed polygon through ``vertices`` (in order), Gauss-Legendre on each side."""
    v = [complex(p) for p in vertices]
    if len(v) < 3:
        raise ParameterError("polygon needs 3 or more vertices")
    if n_per_side < 2:
        raise ParameterError("need at least 2 nodes per side")
    area = 0.5 * sum((a.conjugate() * b).imag for a, b in zip(v, v[1:] + v[:1]))
    if area <= 0:
        raise ParameterError("polygon must be non-degenerate and counterclockwise")
    t, w = _gl(n_per_side)
    nodes, weights = [], []
    for a, b in zip(v, v[1:] + v[:1]):
        nodes.append(a + (b - a) * t)
        weights.append((b - a) * w)
    ct = Contour(kind, np.concatenate(nodes), np.concatenate(weights))
    object.__setattr__(ct, "_params", (tuple(v), int(n_per_side)))
    return ct


def rectangle(corners, n_per_side):
    """Axis-aligned rectangle from two opposite ``corners``."""
    z0, z1 = (complex(c) for c in corners)
    x0, x1 = sorted((z0.real, z1.real))
    y0, y1 = sorted((z0.imag, z1.imag))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise ParameterError("degenerate rectangle")
    verts = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
    return polygon(verts, n_per_side, kind="rectangle")


def sector_boundary(region, n):
    """Trapezoidal boundary of a sector ``C_theta(a, b)`` with ``n`` nodes per side."""
    if region.a * region.b <= 0:
        raise ParameterError("sector must not contain the origin")
    th, a, b = region.theta, region.a, region.b
    verts = [complex(a, -th * abs(a)), complex(b, -th * abs(b)),
             complex(b, th * abs(b)), complex(a, th * abs(a))]
    return polygon(verts, n, kind="sector")


def make_contour(kind, **kw):
    """Dispatch on ``kind`` in {'circle', 'rectangle', 'sector'}."""
    if kind == "circle":
        return circle(kw["center"], kw["radius"], kw.get("n", 64))
    if kind == "rectangle":
        return rectangle(kw["corners"], kw.get("n_per_side", 32))
    if kind == "sector":
        return sector_boundary(kw["region"], kw.get("n", 32))
    raise ParameterError(f"unknown contour kind {kind!r}")


_REFINERS = {
    "circle": lambda ct: circle(ct._params[0], ct._params[1], 2 * ct._params[2]),
    "rectangle": lambda ct: polygon(ct._params[0], 2 * ct._params[1], "rectangle"),
    "sector": lambda ct: polygon(ct._params[0], 2 * ct._params[1], "sector"),
    "polygon": lambda ct: polygon(ct._params[0], 2 * ct._params[1], "polygon"),
}


def self_test(contour, interior, exterior, tol=CONTOUR_TOL):
    """Winding self-test: 1 about every interior point, 0 about exterior ones."""
    ok = abs(contour.closure_defect()) <= tol
    ok &= all(abs(contour.winding(c) - 1) <= tol for c in interior)
    ok &= all(abs(contour.winding(c)) <= tol for c in exterior)
    return bool(ok)


# ---------------------------------------------------------------------------
# parametrised segments


def segment_points(kind, const, t):
    """Points ``z(t)`` and ``dz/dt`` for a segment family."""
    t = np.asarray(t, dtype=float)
    if kind == "h":
        return t + 1j * const, np.ones_like(t, dtype=complex)
    if kind == "v":
        return const + 1j * t, np.full(t.shape, 1j)
    if kind == "wr":
        sigma, slope = const
        z = np.exp(t) * (sigma + 1j * slope)
        return z, z
    if kind == "wv":
        return const + 1j * abs(const) * t, np.full(t.shape, 1j * abs(const))
    if kind == "arc":
        z = np.exp(const + 1j * t)
        return z, 1j * z
    if kind == "ray":
        z = np.exp(t + 1j * const)
        return z, z
    raise ValueError(kind)


@dataclass(frozen=True)
class Segment:
    """Canonical segment ``t0 < t1`` of family ``kind``; hashable for caching."""

    kind: str
    const: object
    t0: float
    t1: float

    def points(self, t):
        return segment_points(self.kind, self.const, t)

    def split(self, frac):
        tm = self.t0 + frac * (self.t1 - self.t0)
        return (Segment(self.kind, self.const, self.t0, tm),
                Segment(self.kind, self.const, tm, self.t1))


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class RectBox:
    x0: float
    x1: float
    y0: float
    y1: float

    def boundary(self):
        return [(Segment("h", self.y0, self.x0, self.x1), 1),
                (Segment("v", self.x1, self.y0, self.y1), 1),
                (Segment("h", self.y1, self.x0, self.x1), -1),
                (Segment("v", self.x0, self.y0, self.y1), -1)]

    def split(self, frac):
        xm = self.x0 + frac * (self.x1 - self.x0)
        ym = self.y0 + frac * (self.y1 - self.y0)
        return [RectBox(self.x0, xm, self.y0, ym), RectBox(xm, self.x1, self.y0, ym),
                RectBox(self.x0, xm, ym, self.y1), RectBox(xm, self.x1, ym, self.y1)]

    def contains(self, z, pad=0.0):
        return (self.x0 - pad <= z.real <= self.x1 + pad) and (self.y0 - pad <= z.imag <= self.y1 + pad)

    def center(self):
        return complex(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def diameter(self):
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def touches_origin(self):
        return self.contains(0j)


@dataclass(frozen=True)
class WedgeBox:
    """``{x = sigma e^u, u0 <= u <= u1, s0 |x| <= y <= s1 |x|}``."""

    sigma: int
    u0: float
    u1: float
    s0: float
    s1: float

    def boundary(self):
        sg, x0, x1 = self.sigma, self.sigma * math.exp(self.u0), self.sigma * math.exp(self.u1)
        return [(Segment("wr", (sg, self.s0), self.u0, self.u1), sg),
                (Segment("wv", x1, self.s0, self.s1), sg),
                (Segment("wr", (sg, self.s1), self.u0, self.u1), -sg),
                (Segment("wv", x0, self.s0, self.s1), -sg)]

    def split(self, frac):
        um = self.u0 + frac * (self.u1 - self.u0)
        sm = self.s0 + frac * (self.s1 - self.s0)
        W = WedgeBox
        return [W(self.sigma, self.u0, um, self.s0, sm), W(self.sigma, um, self.u1, self.s0, sm),
                W(self.sigma, self.u0, um, sm, self.s1), W(self.sigma, um, self.u1, sm, self.s1)]

    def contains(self, z, pad=0.0):
        x = self.sigma * z.real
        if x <= 0:
            return False
        u = math.log(x)
        s = z.imag / x
        du = pad / x
        return (self.u0 - du <= u <= self.u1 + du) and (self.s0 - du <= s <= self.s1 + du)

    def center(self):
        u = 0.5 * (self.u0 + self.u1)
        x = self.sigma * math.exp(u)
        return complex(x, 0.5 * (self.s0 + self.s1) * abs(x))

    def diameter(self):
        x0, x1 = math.exp(self.u0), math.exp(self.u1)
        return math.hypot(x1 - x0, (self.s1 - self.s0) * x1)

    def touches_origin(self):
        return False


@dataclass(frozen=True)
class PolarBox:
    """Annular sector ``{e^u e^{i phi}: u0 <= u <= u1, p0 <= phi <= p1}``."""

    u0: float
    u1: float
    p0: float
    p1: float

    def boundary(self):
        return [(Segment("ray", self.p0, self.u0, self.u1), 1),
                (Segment("arc", self.u1, self.p0, self.p1), 1),
                (Segment("ray", self.p1, self.u0, self.u1), -1),
                (Segment("arc", self.u0, self.p0, self.p1), -1)]

    def split(self, frac):
        um = self.u0 + frac * (self.u1 - self.u0)
        pm = self.p0 + frac * (self.p1 - self.p0)
        P = PolarBox
        return [P(self.u0, um, self.p0, pm), P(um, self.u1, self.p0, pm),
                P(self.u0, um, pm, self.p1), P(um, self.u1, pm, self.p1)]

    def contains(self, z, pad=0.0):
        r = abs(z)
        if r == 0:
            return False
        u = math.log(r)
        phi = math.atan2(z.imag, z.real)
        # bring phi into [p0, p0 + 2 pi)
        phi = self.p0 + (phi - self.p0) % (2 * math.pi)
        du = pad / r
        if phi > self.p1 + du and phi - 2 * math.pi >= self.p0 - du:
            phi -= 2 * math.pi
        return (self.u0 - du <= u <= self.u1 + du) and (self.p0 - du <= phi <= self.p1 + du)

    def center(self):
        return complex(np.exp(0.5 * (self.u0 + self.u1) + 0.5j * (self.p0 + self.p1)))

    def diameter(self):
        r0, r1 = math.exp(self.u0), math.exp(self.u1)
        dphi = min(self.p1 - self.p0, 2 * math.pi)
        return math.hypot(r1 - r0, r1 * min(dphi, 2.0))

    def touches_origin(self):
        return False


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ParameterError("degenerate rectangle")

    def root_boxes(self):
        return [RectBox(self.x0, self.x1, self.y0, self.y1)]

    def contains(self, z):
        return self.x0 <= z.real <= self.x1 and self.y0 <= z.imag <= self.y1

    def touches_origin(self):
        return self.contains(0j)

    def scaled(self, s):
        return Rectangle(s * self.x0, s * self.x1, s * self.y0, s * self.y1)

    def real_trace(self):
        """``Omega cap R`` as an interval, or None."""
        if self.y0 <= 0 <= self.y1:
            return (self.x0, self.x1)
        return None

    def real_crossings(self):
        return (self.x0, self.x1) if self.y0 < 0 < self.y1 else ()

    def real_intervals(self):
        return [(self.x0, self.x1)] if self.y0 <= 0 <= self.y1 else []


@dataclass(frozen=True)
class SectorRegion:
    """``C_theta(a, b) = {x + iy: a <= x <= b, |y| <= theta |x|}``."""

    theta: float
    a: float
    b: float

    def __post_init__(self):
        if self.theta <= 0:
            raise ParameterError("theta must be positive")
        if not self.a < self.b:
            raise ParameterError("sector requires a < b")

    def contains(self, z):
        return self.a <= z.real <= self.b and abs(z.imag) <= self.theta * abs(z.real)

    def touches_origin(self):
        return self.a <= 0 <= self.b

    def root_boxes(self, offset=SPLIT_FRACTIONS[0]):
        """Dyadic decomposition in ``|x|``.

        Interior cuts sit at ``|b| 2^{-(j + offset)}``; only the outer edges are
        fixed, so a retry with another ``offset`` moves every interior cut.
        """
        if self.touches_origin():
            raise ParameterError("sector closure contains the origin")
        sigma = 1 if self.a > 0 else -1
        lo, hi = sorted((abs(self.a), abs(self.b)))
        u_lo, u_hi = math.log(lo), math.log(hi)
        ln2 = math.log(2)
        cuts = [u_hi]
        u = u_hi - offset * ln2
        while u > u_lo + 0.25 * ln2:
            cuts.append(u)
            u -= ln2
        cuts.append(u_lo)
        cuts = sorted(cuts)
        return [WedgeBox(sigma, u0, u1, -self.theta, self.theta) for u0, u1 in zip(cuts, cuts[1:])]

    def scaled(self, s):
        return SectorRegion(self.theta, s * self.a, s * self.b)

    def real_trace(self):
        return (self.a, self.b)

    def real_crossings(self):
        return (self.a, self.b)

    def real_intervals(self):
        return [(self.a, self.b)]


DEFAULT_PHASE = -0.5 * math.pi - 0.1234


@dataclass(frozen=True)
class Annulus:
    """Annular sector ``r_in <= |z| <= r_out``, ``phi0 <= arg z <= phi0 + span``.

    The full annulus (``span = 2 pi``) starts at an angle off both axes; the two
    radial cuts cancel in the index.
    """

    r_in: float
    r_out: float
    phi0: float = DEFAULT_PHASE
    span: float = 2 * math.pi

    def __post_init__(self):
        if not 0 < self.r_in < self.r_out:
            raise ParameterError("annulus requires 0 < r_in < r_out")
        if not 0 < self.span <= 2 * math.pi + 1e-12:
            raise ParameterError("annulus span must lie in (0, 2 pi]")

    def root_boxes(self):
        return [PolarBox(math.log(self.r_in), math.log(self.r_out), self.phi0, self.phi0 + self.span)]

    def contains(self, z):
        return self.root_boxes()[0].contains(complex(z))

    def touches_origin(self):
        return False

    def scaled(self, s):
        return Annulus(s * self.r_in, s * self.r_out, self.phi0, self.span)

    def _covers_angle(self, ang):
        return (ang - self.phi0) % (2 * math.pi) <= self.span + 1e-15

    def real_intervals(self):
        out = []
        if self._covers_angle(math.pi):
            out.append((-self.r_out, -self.r_in))
        if self._covers_angle(0.0):
            out.append((self.r_in, self.r_out))
        return out

    def real_trace(self):
        iv = self.real_intervals()
        return iv[0] if len(iv) == 1 else None

    def real_crossings(self):
        return tuple(x for iv in self.real_intervals() for x in iv)


def region_from_spec(spec):
    """Build a region from a JSON-style dict."""
    kind = spec["kind"]
    if kind == "rectangle":
        return Rectangle(spec["x0"], spec["x1"], spec["y0"], spec["y1"])
    if kind == "sector":
        return SectorRegion(spec["theta"], spec["a"], spec["b"])
    if kind == "annulus":
        return Annulus(spec["r_in"], spec["r_out"], spec.get("phi0", DEFAULT_PHASE),
                       spec.get("span", 2 * math.pi))
    raise ParameterError(f"unknown region kind {kind!r}")
