"""Counting functions for characteristic values and eigenvalues.

``N(Omega)`` is the number of characteristic values of ``F = I - A(z)/z`` in
``Omega`` counted with multiplicity; ``n(Lambda)`` counts eigenvalues of the
selfadjoint ``A(0)`` in a real set.  The harnesses below compare the two on
scaled domains, on sectors ``C_theta(r, 1)`` and near the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contours import Annulus, SectorRegion
from .core import ContourHitError, ContractError, OperatorFamily, ParameterError
from .engine import QuadratureError, index, localize, resolvent_norm
from .output import write_csv, write_json

LAW_FORMS = ("power", "log-power", "log-over-loglog")
SIGN_TOL = 1e-8
# relative slack when deciding whether a located value lies on a count boundary
BOUNDARY_SLACK = 1e-10
# relative enlargement of a localisation region beyond the counted one
PAD_FRACTIONS = (7.31e-3, 5.17e-3, 9.43e-3)


def _F(F):
    return F.F if isinstance(F, OperatorFamily) else F


# ---------------------------------------------------------------------------
# laws


@dataclass(frozen=True)
class LawDescriptor:
    """``Phi(r) = C r^-gamma``, ``C |ln r|^gamma`` or ``C |ln r| / ln|ln r|``."""

    form: str
    C: float
    gamma: float | None = None
    residual: float | None = None

    def __post_init__(self):
        if self.form not in LAW_FORMS:
            raise ParameterError(f"unknown law form {self.form!r}")
        if not self.C > 0:
            raise ParameterError("law constant must be positive")
        if self.form != "log-over-loglog" and not (self.gamma and self.gamma > 0):
            raise ParameterError("law exponent must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        L = np.abs(np.log(r))
        if self.form == "power":
            return self.C * r ** (-self.gamma)
        if self.form == "log-power":
            return self.C * L**self.gamma
        return self.C * L / np.log(L)

    def to_dict(self):
        return {"form": self.form, "C": self.C, "gamma": self.gamma, "residual": self.residual}


def _design(form, r):
    L = np.abs(np.log(r))
    if form == "power":
        return L, None          # ln N = ln C + gamma |ln r|
    if form == "log-power":
        return np.log(L), None  # ln N = ln C + gamma ln|ln r|
    return None, np.log(L / np.log(L))


def fit_law(r, counts, forms=LAW_FORMS):
    """Least-squares fit of each closed form in ``ln N``; returns ``(best, all_fits)``.

    Counting noise makes ``Var(ln N) ~ 1/N``, so squared residuals are weighted
    by ``N``.  Grid points with ``N = 0`` (or ``|ln r| <= e`` for the
    iterated-log form) are ignored.  The best form minimises the weighted RMS
    residual.
    """
    r = np.asarray(r, dtype=float)
    N = np.asarray(counts, dtype=float)
    keep = (N > 0) & (r > 0) & (r < 1)
    fits = {}
    for form in forms:
        m = keep.copy()
        if form == "log-over-loglog":
            m &= np.abs(np.log(r)) > math.e
        if m.sum() < 2:
            continue
        y = np.log(N[m])
        wt = N[m] / N[m].sum()
        x, offset = _design(form, r[m])
        if x is not None:
            slope, icpt = np.polyfit(x, y, 1, w=np.sqrt(wt))
            if slope <= 0:
                continue
            res = y - (icpt + slope * x)
            fits[form] = LawDescriptor(form, float(np.exp(icpt)), float(slope),
                                       float(np.sqrt(np.sum(wt * res**2))))
        else:
            icpt = float(np.sum(wt * (y - offset)))
            res = y - (icpt + offset)
            fits[form] = LawDescriptor(form, float(np.exp(icpt)), None,
                                       float(np.sqrt(np.sum(wt * res**2))))
    if not fits:
        return None, {}
    best = min(fits.values(), key=lambda d: d.residual)
    return best, fits


# ---------------------------------------------------------------------------
# reports


@dataclass
class CountingReport:
    """Per-scale counts; ``extra`` holds additional named columns."""

    grid: list
    charval_counts: list
    eig_counts: list
    ratios: list
    fitted_law: LawDescriptor | None = None
    extra: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(c < 0 for c in self.charval_counts) or any(c < 0 for c in self.eig_counts):
            raise ContractError("counts must be nonnegative")

    columns = ("scale", "N", "n", "ratio")

    def rows(self):
        names = list(self.extra)
        for i, s in enumerate(self.grid):
            yield [s, self.charval_counts[i], self.eig_counts[i], self.ratios[i]] + \
                  [self.extra[k][i] for k in names]

    def to_csv(self, path, config=None):
        write_csv(path, list(self.columns) + list(self.extra), self.rows(), config)

    def to_dict(self):
        return {"grid": list(self.grid), "N": list(self.charval_counts),
                "n": list(self.eig_counts), "ratios": list(self.ratios),
                "fitted_law": self.fitted_law.to_dict() if self.fitted_law else None,
                "extra": {k: list(v) for k, v in self.extra.items()}, "meta": self.meta}

    def to_json(self, path, config=None):
        d = self.to_dict()
        if config is not None:
            d["config"] = config
        write_json(path, d)


def _ratio(N, n):
    return float(N) / n if n else math.nan


# ---------------------------------------------------------------------------
# counting operations


def count_eigs(profile, interval):
    """Number of eigenvalues of ``A(0)`` in the closed interval."""
    lo, hi = interval
    return profile.count(lo, hi)


def count_scaled(F, omega, s, **kw):
    """``N(s Omega)`` from the index over the boundary of ``s Omega``."""
    F = _F(F)
    region = omega.scaled(s)
    if region.touches_origin():
        raise ParameterError("the closure of s*Omega contains 0")
    return index(F, region, **kw).rounded


def _oriented(F, side):
    F = _F(F)
    return F if side > 0 else F.rescaled(-1.0)


def locate_in_sector(F, theta, r, r_top, *, side=1, resolution=1e-7, threads=1):
    """Characteristic values in ``C_theta(r, r_top)`` (``side=-1``: in ``-C_theta``).

    The search region is padded slightly beyond the counted sector so that
    values sitting on its edges are still found; the caller filters.
    """
    if not 0 < r < r_top:
        raise ParameterError("need 0 < r < r_top")
    G = _oriented(F, side)
    last = None
    for pad in PAD_FRACTIONS:
        region = SectorRegion(theta * (1 + pad), r * (1 - pad), r_top * (1 + pad))
        try:
            vals = localize(G, region, resolution, relative=True, threads=threads)
        except (ContourHitError, QuadratureError) as exc:
            last = exc
            continue
        if side < 0:
            vals = [_negate(v) for v in vals]
        return vals
    raise last


def _negate(v):
    from .engine import CharacteristicValue
    return CharacteristicValue(-v.location, v.multiplicity, v.box_radius, v.residual)


def _in_sector(z, theta, r, r_top, side=1):
    x = side * z.real
    slack = BOUNDARY_SLACK * abs(z)
    return (r - slack <= x <= r_top + slack) and abs(z.imag) <= theta * x + slack


def count_sector(F, theta, r, r_top, *, side=1, resolution=1e-7, threads=1):
    """``N(C_theta(r, r_top))`` (or of the mirrored sector for ``side=-1``)."""
    vals = locate_in_sector(F, theta, r, r_top, side=side, resolution=resolution, threads=threads)
    return sum(v.multiplicity for v in vals if _in_sector(v.location, theta, r, r_top, side))


def sector_counts(values, theta, r_grid, r_top, side=1):
    """Counts ``N(C_theta(r, r_top))`` for every ``r`` from a list of located values."""
    return [sum(v.multiplicity for v in values if _in_sector(v.location, theta, r, r_top, side))
            for r in r_grid]


def dyadic_sector_counts(F, theta, r, r_top, offset=0.5317):
    """Index of each dyadic wedge of ``C_theta(r, r_top)``; their sum is ``N`` of the sector."""
    region = SectorRegion(theta, r, r_top)
    F = _F(F)
    out = []
    for box in region.root_boxes(offset=offset):
        out.append(index(F, box).rounded)
    return out


def _delta_neighbourhood_count(profile, points, delta):
    total = 0
    for x in points:
        lo, hi = sorted((x * (1 - delta), x * (1 + delta)))
        total += profile.count(lo, hi)
    return total


def verify_small_domain_theorem(F, omega, s_grid, profile, *, delta=0.1, budget_c=1.0):
    """Compare ``N(s Omega)`` with ``n(s J)``, ``J = Omega cap R``, along ``s_grid``.

    The discrepancy is flagged (never asserted) when it exceeds
    ``budget_c * n(s I_delta) * (ln delta)^2``, ``I_delta`` being the
    ``delta``-neighbourhoods of the real crossings of the boundary.
    """
    F = _F(F)
    Ns, ns, ratios, disc, budget, flags = [], [], [], [], [], []
    for s in s_grid:
        N = count_scaled(F, omega, s)
        n = sum(profile.count(*sorted((s * a, s * b))) for a, b in omega.real_intervals())
        ends = [s * x for x in omega.real_crossings()]
        B = budget_c * _delta_neighbourhood_count(profile, ends, delta) * math.log(delta) ** 2
        Ns.append(N)
        ns.append(n)
        ratios.append(_ratio(N, n))
        disc.append(N - n)
        budget.append(B)
        flags.append(abs(N - n) > B)
    return CountingReport(list(s_grid), Ns, ns, ratios,
                          extra={"discrepancy": disc, "budget": budget, "flag": flags},
                          meta={"delta": delta, "budget_c": budget_c,
                                "violations": int(sum(flags))})


def find_ratio_subsequence(r_grid, ratios, tol):
    """Grid points (in decreasing ``r``) where ``|ratio - 1| <= tol``."""
    pts = [(r, q) for r, q in zip(r_grid, ratios) if np.isfinite(q) and abs(q - 1) <= tol]
    return sorted(pts, key=lambda t: -t[0])


def verify_sector_asymptotics(F, profile, theta, r_grid, *, r_top=1.0, side=1, resolution=1e-7,
                              threads=1, subsequence_tol=0.15, values=None):
    """Ratios ``N(C_theta(r, r_top)) / n([r, r_top])`` over ``r_grid`` plus a fitted law.

    All characteristic values in ``C_theta(min r, r_top)`` are located once and
    counted per grid point.  Pass ``values`` to reuse an earlier localisation.
    """
    r_grid = sorted(r_grid, reverse=True)
    if values is None:
        values = locate_in_sector(F, theta, min(r_grid), r_top, side=side,
                                  resolution=resolution, threads=threads)
    Ns = sector_counts(values, theta, r_grid, r_top, side)
    if side > 0:
        ns = [profile.count(r, r_top) for r in r_grid]
    else:
        ns = [profile.count(-r_top, -r) for r in r_grid]
    ratios = [_ratio(N, n) for N, n in zip(Ns, ns)]
    best, fits = fit_law(r_grid, Ns)
    sub = find_ratio_subsequence(r_grid, ratios, subsequence_tol)
    meta = {"theta": theta, "r_top": r_top, "side": side,
            "fits": {k: v.to_dict() for k, v in fits.items()},
            "subsequence": [r for r, _ in sub], "located": len(values),
            "undefined_ratios": [r for r, n in zip(r_grid, ns) if n == 0]}
    return CountingReport(r_grid, Ns, ns, ratios, best, meta=meta)


def eps_schedule(rho, C=1.0):
    """Allowed ``|Im z| / |z|`` at ``|z| = rho``: ``max(0.2, C rho^{1/4})``."""
    return max(0.2, C * rho**0.25)


@dataclass
class FreeRegionReport:
    values: list
    violations: list
    band_max_ratio: list
    resolvent_max: dict
    ok: bool

    def to_dict(self):
        return {"values": [v.as_dict() for v in self.values],
                "violations": self.violations, "band_max_ratio": self.band_max_ratio,
                "resolvent_max": self.resolvent_max, "ok": self.ok}


def free_region_scan(F, r_grid, theta_grid, *, sign=None, eps_C=1.0, sign_tol=SIGN_TOL,
                     resolution=1e-7, rays=8, threads=1, values=None):
    """Locate characteristic values with ``min r <= |z| <= max r`` and test
    concentration near the real axis, the sign rule, and boundedness of the
    resolvent off the axis.

    ``sign`` is ``+1`` when ``A(0) >= 0``, ``-1`` when ``A(0) <= 0``, ``None``
    otherwise.  ``band_max_ratio[i]`` is the largest ``|Im z|/|z|`` with
    ``|z|`` between consecutive grid radii.
    """
    F = _F(F)
    r_grid = sorted(r_grid, reverse=True)
    if values is None:
        values = localize(F, Annulus(r_grid[-1], r_grid[0]), resolution, relative=True,
                          threads=threads)
    violations = []
    for v in values:
        z = v.location
        rho = abs(z)
        if abs(z.imag) > eps_schedule(rho, eps_C) * rho:
            violations.append({"z": z, "rule": "concentration"})
        if sign is not None and sign * z.real < -sign_tol * rho:
            violations.append({"z": z, "rule": "sign"})
    bands = []
    for hi, lo in zip(r_grid[:-1], r_grid[1:]):
        inside = [abs(v.location.imag) / abs(v.location) for v in values
                  if lo <= abs(v.location) < hi]
        bands.append(max(inside) if inside else math.nan)
    res = {}
    for theta in theta_grid:
        phi = math.asin(min(theta, 1.0))
        worst = 0.0
        for rho in r_grid:
            for k in range(rays):
                ang = phi + (math.pi - 2 * phi) * k / max(rays - 1, 1)
                for sgn in (1, -1):
                    z = rho * complex(math.cos(ang), sgn * math.sin(ang))
                    worst = max(worst, resolvent_norm(F, z))
        res[str(theta)] = worst
    return FreeRegionReport(values, violations, bands, res, not violations)


def bands_decrease(bands, noise=0.1):
    """True when finite band maxima are nonincreasing up to a relative ``noise``."""
    b = [x for x in bands if np.isfinite(x)]
    return all(b[i + 1] <= b[i] * (1 + noise) + 1e-14 for i in range(len(b) - 1))
