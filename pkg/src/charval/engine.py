"""Index, multiplicity, determinants and localisation of characteristic values.

The index of ``F`` along a closed curve is the trace integral
``(1/2 pi i) \\oint tr(F'(z) F(z)^{-1}) dz``.  On a fixed :class:`Contour` it is
computed with the contour's own nodes; on regions and boxes an adaptive
Gauss-Legendre integrator refines each boundary segment until panel estimates
agree, caching panels so that neighbouring boxes share work.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .contours import SPLIT_FRACTIONS, Contour, Segment, _gl, circle
from .core import CharvalError, ContourHitError, ParameterError

INDEX_TOL = 1e-6
SINGULAR_FLOOR = 1e-13
SEGMENT_TOL = 1e-9
PANEL_NODES = 16
MAX_DEPTH = 48
NEWTON_MAXITER = 30
CLUSTER_MAX = 4


class QuadratureError(CharvalError):
    """The quadrature did not resolve to an integer."""


class EnclosureError(CharvalError):
    """A multiplicity circle does not isolate exactly one characteristic value."""


class RoucheViolation(AssertionError):
    pass


@dataclass(frozen=True)
class IndexResult:
    raw: complex
    rounded: int
    integrality_defect: float

    def __int__(self):
        return self.rounded


@dataclass(frozen=True)
class CharacteristicValue:
    location: complex
    multiplicity: int
    box_radius: float
    residual: float

    def as_dict(self):
        return {"re": self.location.real, "im": self.location.imag,
                "multiplicity": self.multiplicity, "box_radius": self.box_radius,
                "residual": self.residual}


def _to_index(raw, index_tol):
    k = int(round(raw.real))
    return IndexResult(complex(raw), k, abs(raw - k))


def log_derivative(F, z, singular_floor=SINGULAR_FLOOR):
    """``tr(F(z)^{-1} F'(z))``, the logarithmic derivative of ``det F``."""
    fast = getattr(F, "logder", None)
    if fast is not None:
        return complex(fast(z))
    V, D = F.value_and_derivative(z)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(V, check_finite=False)
    d = np.abs(np.diag(lu))
    dmax = d.max() if d.size else 0.0
    if not np.all(np.isfinite(lu)) or dmax == 0 or d.min() <= singular_floor * dmax:
        raise ContourHitError(f"contour hits characteristic value near z={z}", node=z)
    X = sla.lu_solve((lu, piv), D, check_finite=False)
    return complex(np.trace(X))


def smallest_singular_value(M):
    return float(np.linalg.svd(M, compute_uv=False)[-1])


# ---------------------------------------------------------------------------
# adaptive boundary quadrature


class BoundaryIntegrator:
    """Adaptive panel quadrature of a scalar integrand along box boundaries.

    ``integrand(z)`` returns the function to integrate against ``dz``; for
    matrix functions it is :func:`log_derivative`.  Panels are cached by their
    canonical segment so that shared edges are evaluated once.
    """

    def __init__(self, integrand, seg_tol=SEGMENT_TOL, panel_nodes=PANEL_NODES,
                 frac=SPLIT_FRACTIONS[0], max_depth=MAX_DEPTH):
        self.integrand = integrand
        self.seg_tol = seg_tol
        self.frac = frac
        self.max_depth = max_depth
        self._x, self._w = _gl(panel_nodes)
        self._panels = {}
        self._segments = {}
        self.evaluations = 0

    def panel(self, seg):
        hit = self._panels.get(seg)
        if hit is not None:
            return hit
        h = seg.t1 - seg.t0
        t = seg.t0 + h * self._x
        z, dz = seg.points(t)
        w = self._w * h * dz
        g = np.array([self.integrand(zi) for zi in z])
        self.evaluations += len(z)
        wg = w * g
        if np.max(np.abs(wg)) > 1e10:
            raise ContourHitError("integrand blows up on the contour", node=z[np.argmax(np.abs(wg))])
        out = (z, w, g, complex(np.sum(wg)))
        self._panels[seg] = out
        return out

    def segment(self, seg):
        """Accepted panels covering ``seg``."""
        hit = self._segments.get(seg)
        if hit is not None:
            return hit
        out = []
        stack = [(seg, self.seg_tol, 0)]
        while stack:
            s, tol, depth = stack.pop()
            I0 = self.panel(s)[3]
            a, b = s.split(self.frac)
            I1 = self.panel(a)[3] + self.panel(b)[3]
            if abs(I0 - I1) <= tol:
                out.extend((a, b))
                continue
            if depth >= self.max_depth:
                raise ContourHitError("adaptive quadrature failed to converge on segment",
                                      node=s.points(np.array([0.5 * (s.t0 + s.t1)]))[0][0])
            floor = 1e-13
            stack.append((b, max(tol * (1 - self.frac), floor), depth + 1))
            stack.append((a, max(tol * self.frac, floor), depth + 1))
        self._segments[seg] = out
        return out

    def box_nodes(self, box):
        """Signed nodes, weights and integrand values along the boundary of ``box``."""
        zs, ws, gs = [], [], []
        for seg, sign in box.boundary():
            for p in self.segment(seg):
                z, w, g, _ = self.panel(p)
                zs.append(z)
                ws.append(sign * w)
                gs.append(g)
        return np.concatenate(zs), np.concatenate(ws), np.concatenate(gs)


def _moments(z, w, g, center, kmax):
    zc = z - center
    return [complex(np.sum(w * g * zc**k) / (2j * np.pi)) for k in range(kmax + 1)]


def _boxes_of(region, attempt=0):
    if hasattr(region, "root_boxes"):
        if attempt and _has_offset(region):
            return region.root_boxes(offset=SPLIT_FRACTIONS[attempt])
        return region.root_boxes()
    if hasattr(region, "boundary"):
        return [region]
    return list(region)


def _has_offset(region):
    import inspect
    roots = getattr(region, "root_boxes", None)
    return roots is not None and "offset" in inspect.signature(roots).parameters


def _with_cut_retries(region, fn):
    """Run ``fn(boxes)``; on a boundary hit, move the interior cuts and retry."""
    attempts = len(SPLIT_FRACTIONS) if _has_offset(region) else 1
    for attempt in range(attempts):
        try:
            return fn(_boxes_of(region, attempt))
        except (ContourHitError, QuadratureError):
            if attempt == attempts - 1:
                raise


def _check_origin(F, boxes):
    if getattr(F, "singular_at_origin", False) and any(b.touches_origin() for b in boxes):
        raise ParameterError("region closure contains z = 0, where I - A(z)/z is singular")


def index(F, contour, *, index_tol=INDEX_TOL, singular_floor=SINGULAR_FLOOR,
          integrator=None):
    """Index of ``F`` with respect to a closed contour.

    ``contour`` is either a :class:`Contour` (fixed nodes) or a region/box
    (adaptive quadrature).  Raises :class:`ContourHitError` when a node is
    numerically singular and :class:`QuadratureError` when the result is not an
    integer within ``index_tol``.
    """
    if isinstance(contour, Contour):
        g = np.array([log_derivative(F, z, singular_floor) for z in contour.nodes])
        raw = complex(np.sum(contour.weights * g) / (2j * np.pi))
    else:
        integ = integrator or BoundaryIntegrator(lambda z: log_derivative(F, z, singular_floor))

        def total(boxes):
            _check_origin(F, boxes)
            raw = 0j
            for b in boxes:
                z, w, g = integ.box_nodes(b)
                raw += complex(np.sum(w * g) / (2j * np.pi))
            if _to_index(raw, index_tol).integrality_defect > index_tol:
                raise QuadratureError(f"index {raw:.3g} is not an integer")
            return raw

        raw = _with_cut_retries(contour, total)
    res = _to_index(raw, index_tol)
    if res.integrality_defect > index_tol:
        raise QuadratureError(
            f"index {raw:.3g} is not an integer (defect {res.integrality_defect:.2e}); "
            "double the contour nodes")
    return res


def _star_derivative(f, z, h):
    # four-point Cauchy stencil, error O(h^4)
    ks = (1, 1j, -1, -1j)
    return sum(f(z + h * k) / k for k in ks) / (4 * h)


def scalar_index(f, contour, df=None, *, h=None, index_tol=INDEX_TOL):
    """Number of zeros of a holomorphic scalar ``f`` inside the contour."""
    if h is None:
        if isinstance(contour, Contour):
            h = 1e-4 * float(np.max(np.abs(np.diff(contour.nodes))))
        else:
            h = 1e-5 * max(b.diameter() for b in _boxes_of(contour))

    def integrand(z):
        fz = complex(f(z))
        if fz == 0 or not np.isfinite(fz):
            raise ContourHitError(f"f vanishes on the contour near z={z}", node=z)
        dfz = complex(df(z)) if df is not None else complex(_star_derivative(f, z, h))
        return dfz / fz

    if isinstance(contour, Contour):
        g = np.array([integrand(z) for z in contour.nodes])
        raw = complex(np.sum(contour.weights * g) / (2j * np.pi))
    else:
        integ = BoundaryIntegrator(integrand)
        raw = 0j
        for b in _boxes_of(contour):
            z, w, g = integ.box_nodes(b)
            raw += complex(np.sum(w * g) / (2j * np.pi))
    res = _to_index(raw, index_tol)
    if res.integrality_defect > index_tol:
        raise QuadratureError(f"scalar index {raw:.3g} is not an integer")
    return res


def det_p(M, p):
    """Regularised determinant ``det(M exp(sum_{k<p} (I - M)^k / k))``.

    Uses ``det exp(X) = exp(tr X)``; ``p = 1`` is the plain determinant.
    """
    if p < 1:
        raise ParameterError("det_p needs p >= 1")
    M = np.asarray(M, dtype=complex)
    d = complex(np.linalg.det(M))
    if p == 1:
        return d
    K = np.eye(M.shape[0]) - M
    P = np.eye(M.shape[0], dtype=complex)
    tr = 0j
    for k in range(1, p):
        P = P @ K
        tr += np.trace(P) / k
    return d * complex(np.exp(tr))


def det_p_function(F, p):
    """``z -> det_p(F(z))`` with its exact derivative.

    ``d/dz log det_p F = tr(F^{-1}F') - sum_{k=1}^{p-1} tr(F'(I - F)^{k-1})``.
    """
    def f(z):
        return det_p(F(z), p)

    def df(z):
        V, D = F.value_and_derivative(z)
        K = np.eye(V.shape[0]) - V
        corr = 0j
        P = np.eye(V.shape[0], dtype=complex)
        for _ in range(1, p):
            corr += np.trace(D @ P)
            P = P @ K
        return f(z) * (np.trace(np.linalg.solve(V, D)) - corr)

    return f, df


def multiplicity(F, w0, rho, *, nodes=64, index_tol=INDEX_TOL):
    """Multiplicity of the characteristic value isolated by ``|w - w0| = rho``."""
    res = None
    ct = circle(w0, rho, nodes)
    for _ in range(5):
        try:
            res = index(F, ct, index_tol=index_tol)
            res2 = index(F, ct.refined(), index_tol=index_tol)
        except QuadratureError:
            ct = ct.refined()
            continue
        if res.rounded == res2.rounded:
            break
        ct = ct.refined()
    else:
        raise QuadratureError("multiplicity quadrature did not stabilise")
    m = res.rounded
    if m <= 0:
        raise EnclosureError(f"no characteristic value inside |w - {w0}| = {rho}")
    # all enclosed values must coincide: check the spread of power sums
    g = np.array([log_derivative(F, z) for z in ct.nodes])
    mom = [complex(np.sum(ct.weights * g * (ct.nodes - w0)**k) / (2j * np.pi)) for k in range(3)]
    mean = mom[1] / m
    spread = abs(mom[2] / m - mean**2)
    if spread > (0.05 * rho) ** 2:
        raise EnclosureError("circle encloses several distinct characteristic values; use a smaller rho")
    return m


def resolvent_norm(F, z, singular_floor=SINGULAR_FLOOR):
    """``||F(z)^{-1}||_2``, or ``inf`` when ``F(z)`` is numerically singular."""
    s = np.linalg.svd(F(z), compute_uv=False)
    if s[-1] <= singular_floor * max(s[0], 1e-300):
        return math.inf
    return float(1.0 / s[-1])


@dataclass(frozen=True)
class RoucheReport:
    index_F: int | None
    index_FG: int | None
    margin: float
    hypothesis_holds: bool
    equal: bool | None


def rouche_assert(F, G, contour):
    """Check ``Ind(F + G) = Ind(F)`` when ``max ||F^{-1} G|| < 1`` on the contour."""
    margin = 0.0
    for z in contour.nodes:
        X = np.linalg.solve(F(z), G(z))
        margin = max(margin, float(np.linalg.norm(X, 2)))
    if margin >= 1:
        return RoucheReport(None, None, margin, False, None)
    iF = index(F, contour).rounded
    iFG = index(F + G, contour).rounded
    if iF != iFG:
        raise RoucheViolation(f"Ind(F)={iF} != Ind(F+G)={iFG} with margin {margin:.3g}")
    return RoucheReport(iF, iFG, margin, True, True)


# ---------------------------------------------------------------------------
# localisation


def _cluster_roots(moms, m):
    """Roots of the degree-``m`` polynomial with power sums ``moms[1..m]`` (Newton identities)."""
    e = [1.0 + 0j]
    for k in range(1, m + 1):
        s = sum((-1) ** (i - 1) * e[k - i] * moms[i] for i in range(1, k + 1))
        e.append(s / k)
    coeffs = [(-1) ** k * e[k] for k in range(m + 1)]
    return np.roots(coeffs)


class Localizer:
    """Adaptive subdivision search for characteristic values in a region."""

    def __init__(self, F, resolution, *, relative=False, newton=True, threads=1,
                 singular_floor=SINGULAR_FLOOR, index_tol=INDEX_TOL, seg_tol=SEGMENT_TOL):
        self.F = F
        self.resolution = resolution
        self.relative = relative
        self.newton = newton
        self.threads = max(1, int(threads))
        self.floor = singular_floor
        self.index_tol = index_tol
        self._integ = {}
        self.seg_tol = seg_tol

    def integrator(self, frac):
        it = self._integ.get(frac)
        if it is None:
            it = BoundaryIntegrator(lambda z: log_derivative(self.F, z, self.floor),
                                    seg_tol=self.seg_tol, frac=frac)
            self._integ[frac] = it
        return it

    def box_index(self, box, frac=SPLIT_FRACTIONS[0]):
        z, w, g = self.integrator(frac).box_nodes(box)
        raw = complex(np.sum(w * g) / (2j * np.pi))
        res = _to_index(raw, self.index_tol)
        if res.integrality_defect > self.index_tol:
            raise QuadratureError(f"box index {raw:.4g} not integral")
        return res.rounded, (z, w, g)

    def _size(self, box):
        d = box.diameter()
        return d / abs(box.center()) if self.relative else d

    def _polish(self, z0, box):
        z = z0
        step = box.diameter()
        pad = 0.25 * box.diameter()
        for _ in range(NEWTON_MAXITER):
            try:
                g = log_derivative(self.F, z, self.floor)
            except ContourHitError:
                return z, 0.0, True
            if g == 0:
                break
            dz = -1.0 / g
            damp = 1.0
            while not box.contains(z + damp * dz, pad) and damp > 1e-3:
                damp *= 0.5
            z = z + damp * dz
            step = abs(damp * dz)
            if step <= 8 * np.finfo(float).eps * max(abs(z), 1e-300):
                return z, step, True
        return z, step, False

    def _emit(self, loc, m, radius):
        try:
            res = smallest_singular_value(self.F(loc))
        except Exception:
            res = math.nan
        return CharacteristicValue(complex(loc), int(m), float(radius), res)

    def _certify_cluster(self, mean, m, box):
        # the mean of a cluster is well conditioned even when the individual
        # roots are not; a small circle around it with index m settles it
        rho = 0.5 * self.resolution * (abs(mean) if self.relative else 1.0)
        if rho >= 0.25 * box.diameter() or not box.contains(mean):
            return None
        ct = circle(mean, rho, 64)
        try:
            k1 = index(self.F, ct, index_tol=self.index_tol, singular_floor=self.floor)
            k2 = index(self.F, ct.refined(), index_tol=self.index_tol, singular_floor=self.floor)
        except (ContourHitError, QuadratureError):
            return None
        if k1.rounded != m or k2.rounded != m:
            return None
        return self._emit(mean, m, rho)

    def _process(self, box, m, nodes, depth):
        """Returns (values, children) for one box of index m > 0."""
        z, w, g = nodes
        c = box.center()
        kmax = min(m, CLUSTER_MAX)
        mom = _moments(z, w, g, c, kmax)
        size = self._size(box)
        if m == 1:
            est = c + mom[1]
            if self.newton and box.contains(est):
                loc, step, ok = self._polish(est, box)
                if ok and box.contains(loc, 1e-12 * max(abs(loc), 1.0)):
                    return [self._emit(loc, 1, step)], []
            if size <= self.resolution:
                return [self._emit(est, 1, 0.5 * box.diameter())], []
        elif m <= CLUSTER_MAX:
            roots = c + _cluster_roots(mom, m)
            spread = float(np.max(np.abs(roots - np.mean(roots))))
            scale = abs(c) if self.relative else 1.0
            if spread <= 0.1 * self.resolution * scale:
                return [self._emit(c + mom[1] / m, m, max(spread, 1e-16))], []
        if m > 1:
            hit = self._certify_cluster(c + mom[1] / m, m, box)
            if hit is not None:
                return [hit], []
        if size <= self.resolution:
            return [self._emit(c + mom[1] / m, m, 0.5 * box.diameter())], []
        for frac in SPLIT_FRACTIONS:
            try:
                kids = box.split(frac)
                idx = [self.box_index(k) for k in kids]
            except (ContourHitError, QuadratureError):
                continue
            if sum(i for i, _ in idx) == m:
                return [], [(k, i, nd) for k, (i, nd) in zip(kids, idx) if i != 0]
        raise ContourHitError("box boundary repeatedly hits a characteristic value", node=c)

    def _roots(self, boxes):
        _check_origin(self.F, boxes)
        work = []
        for b in boxes:
            m, nodes = self.box_index(b)
            if m < 0:
                raise QuadratureError("negative index: F has poles inside the region")
            if m:
                work.append((b, m, nodes))
        return work

    def run(self, region):
        work = _with_cut_retries(region, self._roots)
        found = []
        depth = 0
        pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        try:
            while work:
                if pool is None:
                    outs = [self._process(b, m, nd, depth) for b, m, nd in work]
                else:
                    outs = list(pool.map(lambda t: self._process(t[0], t[1], t[2], depth), work))
                work = []
                for vals, kids in outs:
                    found.extend(vals)
                    work.extend(kids)
                depth += 1
        finally:
            if pool is not None:
                pool.shutdown()
        found.sort(key=lambda cv: (cv.location.real, cv.location.imag))
        return found


def localize(F, region, resolution, **kw):
    """Characteristic values of ``F`` inside ``region``.

    Boxes with index 0 are dropped; a box with index 1 is resolved by the first
    contour moment followed by Newton's method on ``det F``; boxes holding a
    cluster are split until their diameter (relative to ``|center|`` when
    ``relative=True``) is below ``resolution``.  The multiplicities of the
    returned values sum to the index over the region boundary.
    """
    return Localizer(F, resolution, **kw).run(region)


def region_index(F, region, **kw):
    return index(F, region, **kw)
