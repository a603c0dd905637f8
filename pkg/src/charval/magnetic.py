"""Resonances of a 3D Schroedinger operator with constant magnetic field.

The field points along ``x3``.  For an axisymmetric separable potential
``V = sign * U(rho) * u(x3)`` the Birman-Schwinger family near the Landau level
``2bq`` splits into angular channels ``ell``.  Each channel is represented in the
basis {radial Landau mode of level j, channel ell} x {x3 quadrature nodes}, and
resonances are the characteristic values of ``k -> I - A_q(ik)/(ik)``.

Per channel the log-derivative of the determinant is evaluated through a
Schur complement: the levels ``j != q`` carry the kernel ``exp(-kappa|x-x'|)``,
whose inverse is tridiagonal on sorted nodes, so that part is a banded system.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.special import gammaln

from .contours import Annulus
from .core import (
    CAUCHY_NODES,
    CharvalError,
    ContourHitError,
    DomainError,
    MatrixFunction,
    ParameterError,
    cauchy_derivative,
    kernel_projector,
)
from .counting import CountingReport, LawDescriptor, fit_law
from .engine import SINGULAR_FLOOR, localize, log_derivative

MODE_TOL = 1e-10
BRANCH_TOL = 1e-12
PAIRING_TOL = 1e-6
SIGN_SLACK = 1e-3
HALF_PLANE_SLACK = 0.1234   # angular overhang (radians) of the half-plane search
X3_NODES = 80
X3_SPAN = 12.0              # L = X3_SPAN / N
RHO_PANEL = 0.5             # radial panel width in units of 1/sqrt(b)
RHO_PANEL_NODES = 20
STENCIL_H = 1e-3
POTENTIAL_CLASSES = ("A1-power", "A2-gaussian", "A3-compact")


class ResolutionError(CharvalError):
    """A quadrature grid is too coarse for the requested accuracy."""


class ThresholdError(DomainError):
    """The spectral parameter sits on a Landau threshold (kappa = 0)."""


# ---------------------------------------------------------------------------
# Landau modes


def laguerre_poly(q, t, alpha=0.0):
    """Generalized Laguerre polynomial ``L_q^alpha(t)`` by the three-term recurrence."""
    if q < 0:
        raise ParameterError("Laguerre degree must be nonnegative")
    t = np.asarray(t, dtype=float)
    p0 = np.ones_like(t)
    if q == 0:
        return p0 if p0.ndim else float(p0)
    p1 = 1.0 + alpha - t
    for k in range(1, q):
        p0, p1 = p1, ((2 * k + 1 + alpha - t) * p1 - (k + alpha) * p0) / (k + 1)
    return p1 if p1.ndim else float(p1)


def landau_kernel(q, b, X, Xp):
    """Integral kernel of the projection onto the q-th Landau level."""
    if q < 0 or b <= 0:
        raise ParameterError("need q >= 0 and b > 0")
    X = np.asarray(X, dtype=float)
    Xp = np.asarray(Xp, dtype=float)
    d2 = np.sum((X - Xp) ** 2, axis=-1)
    cross = X[..., 0] * Xp[..., 1] - Xp[..., 0] * X[..., 1]
    return b / (2 * np.pi) * laguerre_poly(q, b * d2 / 2) * np.exp(-0.25 * b * (d2 + 2j * cross))


def radial_mode(b, j, ell, rho):
    """Normalized radial profile of the level-j mode with angular momentum ``ell``.

    The 2D mode is ``f(rho) exp(i ell phi) / sqrt(2 pi)``; ``f`` has unit norm
    under ``rho drho``.  Returns None when level j has no such channel.
    """
    a = abs(ell)
    nr = j - (a - ell) // 2
    if nr < 0:
        return None
    rho = np.asarray(rho, dtype=float)
    t = 0.5 * b * rho**2
    logc = 0.5 * (math.log(b) + gammaln(nr + 1) - a * math.log(2.0 / b) - gammaln(nr + a + 1))
    with np.errstate(divide="ignore"):
        lr = np.where(rho > 0, np.log(np.where(rho > 0, rho, 1.0)), -np.inf)
    env = np.exp(logc + a * lr - 0.5 * t) if a else np.exp(logc - 0.5 * t)
    return env * laguerre_poly(nr, t, a)


def mode_2d(b, j, ell, X):
    X = np.asarray(X, dtype=float)
    rho = np.hypot(X[..., 0], X[..., 1])
    phi = np.arctan2(X[..., 1], X[..., 0])
    f = radial_mode(b, j, ell, rho)
    if f is None:
        return None
    return f * np.exp(1j * ell * phi) / math.sqrt(2 * np.pi)


def mode_sum_kernel(q, b, X, Xp, ell_max):
    """Truncated expansion of the Landau projection kernel over channels."""
    total = 0.0
    for ell in range(-q, ell_max + 1):
        total = total + mode_2d(b, q, ell, X) * np.conj(mode_2d(b, q, ell, Xp))
    return total


def rho_grid(b, ell_max, j_max, breaks=()):
    """Composite Gauss-Legendre nodes on ``[0, rho_max]`` covering the modes."""
    t_max = ell_max + 2 * j_max + 40 + 10 * math.sqrt(ell_max + j_max + 1)
    rho_max = math.sqrt(2 * t_max / b)
    width = RHO_PANEL / math.sqrt(b)
    edges = np.linspace(0.0, rho_max, int(math.ceil(rho_max / width)) + 1)
    extra = [x for x in breaks if 0 < x < rho_max]
    edges = np.unique(np.concatenate([edges, extra]))
    g, w = np.polynomial.legendre.leggauss(RHO_PANEL_NODES)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * g + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights


@dataclass
class RadialBasis:
    """Radial modes of several levels on a shared quadrature grid."""

    b: float
    levels: list
    ells: list
    rho: np.ndarray
    weights: np.ndarray
    modes: dict = field(default_factory=dict)

    def mode(self, j, ell):
        key = (j, ell)
        if key not in self.modes:
            self.modes[key] = radial_mode(self.b, j, ell, self.rho)
        return self.modes[key]

    def gram(self, ell, profile=None):
        """``int f_j f_j' profile rho drho`` over the levels present in channel ell."""
        js = [j for j in self.levels if self.mode(j, ell) is not None]
        F = np.array([self.mode(j, ell) for j in js])
        wr = self.weights * self.rho
        if profile is not None:
            wr = wr * profile(self.rho)
        return js, (F * wr) @ F.T


def radial_modes(b, q, ell_range, grid=None, *, levels=None, mode_tol=MODE_TOL):
    """Orthonormal radial family; raises :class:`ResolutionError` on a coarse grid."""
    levels = [q] if levels is None else list(levels)
    ells = list(ell_range)
    if grid is None:
        grid = rho_grid(b, max(abs(e) for e in ells), max(levels))
    rho, w = grid
    basis = RadialBasis(b, levels, ells, np.asarray(rho), np.asarray(w))
    for ell in ells:
        js, G = basis.gram(ell)
        if js and np.max(np.abs(G - np.eye(len(js)))) > mode_tol:
            raise ResolutionError(f"radial grid too coarse for channel {ell}")
    return basis


# ---------------------------------------------------------------------------
# longitudinal kernels


def x3_grid(N_decay, n=X3_NODES, L=None):
    """Gauss-Legendre nodes on ``[-L, 0]`` and ``[0, L]``, sorted."""
    if n % 2:
        raise ParameterError("x3 grid needs an even node count")
    L = X3_SPAN / N_decay if L is None else L
    g, w = np.polynomial.legendre.leggauss(n // 2)
    x = np.concatenate([0.5 * L * (g - 1), 0.5 * L * (g + 1)])
    return x, np.concatenate([0.5 * L * w, 0.5 * L * w])


def _dist(x):
    return np.abs(x[:, None] - x[None, :])


def rz_matrix(z, grid):
    """Symmetrized quadrature matrix of ``exp(z|x - x'|)/2``."""
    x, w = grid
    sw = np.sqrt(w)
    return 0.5 * np.exp(complex(z) * _dist(x)) * np.outer(sw, sw)


def kappa(w_level, k, branch_tol=BRANCH_TOL):
    """Decay rate of the 1D resolvent at level offset ``w_level = 2b(j - q)``."""
    k = complex(k)
    if w_level > 0:
        kap = np.sqrt(w_level - k * k)
    elif w_level < 0:
        kap = -1j * np.sqrt(k * k - w_level)
    else:
        raise ParameterError("resolvent_1d needs j != q")
    if abs(kap) <= branch_tol:
        raise ThresholdError(f"k={k} meets the threshold of level offset {w_level}")
    return complex(kap)


def resolvent_1d(w_level, k, grid, branch_tol=BRANCH_TOL):
    """Symmetrized quadrature matrix of ``exp(-kappa|x - x'|)/(2 kappa)``."""
    x, w = grid
    kap = kappa(w_level, k, branch_tol)
    sw = np.sqrt(w)
    return np.exp(-kap * _dist(x)) / (2 * kap) * np.outer(sw, sw)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialSpec:
    """``|V| = U(rho) exp(-N|x3|)`` with one of three transverse profiles.

    A1-power:    ``U = c (1 + rho^2)^(-m_perp/2)``
    A2-gaussian: ``U = c exp(-mu rho^(2 beta))``
    A3-compact:  ``U = c (1 - rho^2/R^2)^2`` for ``rho < R``
    """

    cls: str
    amplitude: float = 1.0
    N: float = 2.0
    m_perp: float | None = None
    beta: float | None = None
    mu: float | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.cls not in POTENTIAL_CLASSES:
            raise ParameterError(f"unknown potential class {self.cls!r}")
        if self.amplitude < 0 or self.N <= 0:
            raise ParameterError("need amplitude >= 0 and N > 0")
        if self.cls == "A1-power" and not (self.m_perp and self.m_perp > 0):
            raise ParameterError("A1 needs m_perp > 0")
        if self.cls == "A2-gaussian" and not (self.beta and self.beta > 0 and self.mu and self.mu > 0):
            raise ParameterError("A2 needs beta > 0 and mu > 0")
        if self.cls == "A3-compact" and not (self.radius and self.radius > 0):
            raise ParameterError("A3 needs a positive support radius")

    def U(self, rho):
        rho = np.asarray(rho, dtype=float)
        c = self.amplitude
        if self.cls == "A1-power":
            return c * (1 + rho**2) ** (-0.5 * self.m_perp)
        if self.cls == "A2-gaussian":
            return c * np.exp(-self.mu * rho ** (2 * self.beta))
        s = 1 - (rho / self.radius) ** 2
        return c * np.where(s > 0, s * s, 0.0)

    def u(self, x3):
        return np.exp(-self.N * np.abs(np.asarray(x3, dtype=float)))

    @property
    def transverse_decay(self):
        """A decay exponent valid for the transverse profile."""
        return self.m_perp if self.cls == "A1-power" else 4.0

    @property
    def breaks(self):
        return (self.radius,) if self.cls == "A3-compact" else ()

    def scaled(self, c):
        d = self.to_dict()
        d["amplitude"] = self.amplitude * c
        return PotentialSpec.from_dict(d)

    def to_dict(self):
        d = {"class": self.cls, "amplitude": self.amplitude, "N": self.N}
        for key in ("m_perp", "beta", "mu", "radius"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(cls=d.pop("class"), **d)


def effective_W(potential, rho=None, grid=None):
    """``W(rho) = (1/2) int |V(rho, x3)| dx3``.

    Uses the closed form ``int exp(-N|t|) dt = 2/N`` unless an x3 grid is
    given, in which case the integral is done by quadrature.  Returns a
    callable, or its values when ``rho`` is given.
    """
    if grid is None:
        factor = 1.0 / potential.N
    else:
        x, w = grid
        factor = 0.5 * float(np.sum(w * potential.u(x)))

    def W(r):
        return factor * potential.U(r)

    return W if rho is None else W(rho)


def check_decay(potential, m_perp, N=None, samples=200):
    """Sampled check of ``|V| <= C (1 + rho)^(-m_perp) exp(-N|x3|)``; returns C."""
    N = potential.N if N is None else N
    if N > potential.N:
        return math.inf
    rho = np.geomspace(1e-3, 1e6, samples)
    ratio = potential.U(rho) * (1 + rho) ** m_perp
    C = float(np.max(ratio))
    if not np.isfinite(C) or ratio[-1] > 2 * np.max(ratio[rho <= 1e3]) + 1e-300:
        return math.inf
    return C


# ---------------------------------------------------------------------------
# model


@dataclass
class MagneticModel:
    b: float
    q: int
    sign: int
    potential: PotentialSpec
    j_max: int | None = None
    ell_range: tuple = tuple(range(0, 26))
    n_x3: int = X3_NODES
    L: float | None = None
    m_perp: float | None = None

    def __post_init__(self):
        if self.b <= 0 or self.q < 0 or int(self.q) != self.q:
            raise ParameterError("need b > 0 and integer q >= 0")
        if self.sign not in (1, -1):
            raise ParameterError("sign must be +1 or -1")
        self.q = int(self.q)
        if self.j_max is None:
            self.j_max = self.q + 8
        if self.j_max < self.q:
            raise ParameterError("j_max must be >= q")
        self.ell_range = tuple(int(e) for e in self.ell_range)
        if not self.ell_range:
            raise ParameterError("empty ell_range")
        if self.m_perp is None:
            self.m_perp = self.potential.transverse_decay
        if not math.isfinite(check_decay(self.potential, self.m_perp)):
            raise ParameterError("potential decays slower than (1+rho)^-m_perp exp(-N|x3|)")
        self._grid = x3_grid(self.N_decay, self.n_x3, self.L)
        self._basis = None
        self._channels = {}

    @property
    def N_decay(self):
        return self.potential.N

    @property
    def x3(self):
        return self._grid

    @property
    def domain_radius(self):
        """Radius of the disk in k where the family is analytic."""
        return min(math.sqrt(2 * self.b), self.N_decay)

    @property
    def levels(self):
        return list(range(0, self.j_max + 1))

    @property
    def basis(self):
        if self._basis is None:
            ell_max = max(abs(e) for e in self.ell_range)
            grid = rho_grid(self.b, ell_max, self.j_max, self.potential.breaks)
            self._basis = radial_modes(self.b, self.q, self.ell_range, grid, levels=self.levels)
        return self._basis

    def channel(self, ell):
        if ell not in self._channels:
            self._channels[ell] = Channel(self, ell)
        return self._channels[ell]

    def check_radius(self, r):
        if not r < self.domain_radius:
            raise DomainError(
                f"search radius {r} must stay below min(sqrt(2b), N) = {self.domain_radius:.6g}, "
                "the disk where the Birman-Schwinger family is analytic")

    def to_dict(self):
        return {"b": self.b, "q": self.q, "sign": self.sign, "potential": self.potential.to_dict(),
                "j_max": self.j_max, "ell_range": list(self.ell_range), "n_x3": self.n_x3,
                "L": self._grid[0][-1] if self.L is None else self.L, "m_perp": self.m_perp}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        pot = PotentialSpec.from_dict(d.pop("potential"))
        ells = d.pop("ell_range", None)
        if isinstance(ells, dict):
            ells = range(ells.get("min", 0), ells["max"] + 1)
        if ells is not None:
            d["ell_range"] = tuple(ells)
        return cls(potential=pot, **d)


class Channel:
    """The Birman-Schwinger family of one angular channel, in the variable k."""

    def __init__(self, model, ell):
        self.model = model
        self.ell = ell
        self.levels, self.U = model.basis.gram(ell, model.potential.U)
        self.present = model.q in self.levels
        x, w = model.x3
        self.x, self.w = x, w
        self.sw = np.sqrt(w)
        self.D = model.potential.u(x)
        self.d = _dist(x)
        self.dx = np.diff(x)
        self.J = model.sign
        self.n = len(x)
        ev, vec = np.linalg.eigh(self.U)
        self.S = (vec * np.sqrt(np.clip(ev, 0, None))) @ vec.T
        if self.present:
            iq = self.levels.index(model.q)
            self.iq = iq
            self.others = [i for i in range(len(self.levels)) if i != iq]
            self.offsets = [2 * model.b * (self.levels[i] - model.q) for i in self.others]
            self.Uoo = self.U[np.ix_(self.others, self.others)]
            self.Uoq = self.U[self.others, iq]
            self.Uqq = self.U[iq, iq]

    @property
    def dim(self):
        return len(self.levels) * self.n

    # -- dense reference -------------------------------------------------

    def _blocks(self, k, with_deriv):
        """Per-level ``G~_j(k)`` (and ``dG~_j/dk``) with ``A(ik)/(ik) = J B G~ B``."""
        z = 1j * complex(k)
        ww = np.outer(self.sw, self.sw)
        G, dG = [], []
        for j in self.levels:
            if j == self.model.q:
                E = np.exp(z * self.d)
                G.append(0.5 * E / z * ww)
                if with_deriv:
                    dG.append(1j * 0.5 * E * (z * self.d - 1) / z**2 * ww)
            else:
                off = 2 * self.model.b * (j - self.model.q)
                kap = kappa(off, k)
                E = np.exp(-kap * self.d)
                G.append(-E / (2 * kap) * ww)
                if with_deriv:
                    dR_dkap = -E * (kap * self.d + 1) / (2 * kap**2)
                    dG.append(dR_dkap * (k / kap) * ww)
        return G, dG

    def _sandwich(self, blocks):
        m, n = len(self.levels), self.n
        su = np.sqrt(self.D)
        out = np.zeros((m * n, m * n), dtype=complex)
        for i in range(m):
            for i2 in range(m):
                acc = 0.0
                for jj in range(m):
                    c = self.S[i, jj] * self.S[jj, i2]
                    if c != 0:
                        acc = acc + c * blocks[jj]
                out[i * n:(i + 1) * n, i2 * n:(i2 + 1) * n] = su[:, None] * acc * su[None, :]
        return self.J * out

    def value(self, k):
        G, _ = self._blocks(k, False)
        return np.eye(self.dim) - self._sandwich(G)

    def deriv(self, k):
        _, dG = self._blocks(k, True)
        return -self._sandwich(dG)

    def A(self, z):
        """``A_q(z)`` itself, finite at ``z = 0``."""
        z = complex(z)
        k = -1j * z
        ww = np.outer(self.sw, self.sw)
        blocks = []
        for j in self.levels:
            if j == self.model.q:
                blocks.append(0.5 * np.exp(z * self.d) * ww)
            else:
                off = 2 * self.model.b * (j - self.model.q)
                kap = kappa(off, k)
                blocks.append(-z * np.exp(-kap * self.d) / (2 * kap) * ww)
        return self._sandwich(blocks)

    def tail_estimate(self, z):
        """Rough size of the omitted levels ``j > j_max``."""
        m = self.model
        nxt = 2 * m.b * (m.j_max + 1 - m.q)
        return abs(z) * float(np.max(m.potential.U(0.0))) / math.sqrt(nxt) / m.N_decay

    # -- structured log-derivative ---------------------------------------

    def _tinv(self, k):
        """Tridiagonal inverses of the ``j != q`` blocks and their k-derivatives."""
        w, dx = self.w, self.dx
        kaps = np.array([kappa(off, k) for off in self.offsets])
        dkap = -complex(k) / kaps
        e = np.exp(-kaps[:, None] * dx[None, :])
        e2 = e * e
        s = 1.0 / (1.0 - e2)
        de_dkap = -dx[None, :] * e
        ds = 2 * e * de_dkap * s * s
        diag = np.empty((len(kaps), self.n), dtype=complex)
        diag[:, 0] = s[:, 0]
        diag[:, -1] = s[:, -1]
        diag[:, 1:-1] = s[:, :-1] + s[:, 1:] - 1.0
        ddiag = np.empty_like(diag)
        ddiag[:, 0] = ds[:, 0]
        ddiag[:, -1] = ds[:, -1]
        ddiag[:, 1:-1] = ds[:, :-1] + ds[:, 1:]
        off = -e * s
        doff = -(de_dkap * s + e * ds)
        wd = 1.0 / w
        wo = 1.0 / np.sqrt(w[:-1] * w[1:])
        f = -2 * kaps[:, None]
        Td = f * diag * wd
        To = f * off * wo
        dTd = (-2 * diag + f * ddiag) * wd * dkap[:, None]
        dTo = (-2 * off + f * doff) * wo * dkap[:, None]
        # log det of the T blocks (up to a constant) and its derivative
        dlogT = np.sum(-self.n * dkap / kaps + np.sum(-2 * e * de_dkap * s, axis=1) * dkap)
        return Td, To, dTd, dTo, dlogT

    def _banded(self, Td, To):
        mo, n = len(self.others), self.n
        base = 2 * mo
        ab = np.zeros((3 * mo + 1, n * mo), dtype=complex)
        a = np.arange(n)
        jj, jp = np.meshgrid(np.arange(mo), np.arange(mo), indexing="ij")
        blocks = -self.J * self.Uoo[None, :, :] * self.D[:, None, None]
        blocks = blocks.astype(complex)
        blocks[:, np.arange(mo), np.arange(mo)] += Td.T
        rows = np.broadcast_to(base + jj - jp, (n, mo, mo))
        cols = a[:, None, None] * mo + jp[None, :, :]
        ab[rows, cols] = blocks
        lev = np.arange(mo)
        ab[base - mo, (a[:-1, None] + 1) * mo + lev] = To.T
        ab[base + mo, a[:-1, None] * mo + lev] = To.T
        return ab

    def _factor(self, k):
        Td, To, dTd, dTo, dlogT = self._tinv(k)
        mo = len(self.others)
        lu, piv, info = lapack.zgbtrf(self._banded(Td, To), mo, mo)
        diag = lu[2 * mo]
        amax = np.max(np.abs(diag))
        if info != 0 or not np.all(np.isfinite(diag)) or np.min(np.abs(diag)) <= SINGULAR_FLOOR * amax:
            raise ContourHitError(f"other-level block singular near k={k}", node=k)
        swaps = int(np.sum(piv != np.arange(len(piv))))
        logdet = np.sum(np.log(diag)) + 1j * np.pi * (swaps % 2)
        return lu, piv, logdet, (dTd, dTo, dlogT)

    def _Bq(self):
        mo, n = len(self.others), self.n
        B = np.zeros((n * mo, n), dtype=complex)
        a = np.arange(n)
        for jj in range(mo):
            B[a * mo + jj, a] = self.Uoq[jj] * self.D
        return B

    def _Mprime_apply(self, dTd, dTo, X):
        mo, n = len(self.others), self.n
        Xr = X.reshape(n, mo, -1)
        out = dTd.T[:, :, None] * Xr
        out[:-1] += dTo.T[:, :, None] * Xr[1:]
        out[1:] += dTo.T[:, :, None] * Xr[:-1]
        return out.reshape(n * mo, -1)

    def _logdet_M(self, k):
        return self._factor(k)[2]

    def logder(self, k):
        """``d/dk log det(I - A(ik)/(ik))`` via the Schur complement on level q."""
        k = complex(k)
        if abs(k) == 0:
            raise ContourHitError("k = 0 is excluded", node=k)
        J = self.J
        z = 1j * k
        sww = np.outer(self.sw, self.sw)
        Eq = np.exp(z * self.d)
        Gq = 0.5 * Eq / z * sww
        dGq = 1j * 0.5 * Eq * (z * self.d - 1) / z**2 * sww
        Dm = self.Uqq * np.diag(self.D).astype(complex)
        if not self.others:
            E, dE, dpsi = Dm, 0.0, 0.0
        else:
            lu, piv, ld0, (dTd, dTo, dlogT) = self._factor(k)
            mo = len(self.others)
            Bq = self._Bq()
            X, info = lapack.zgbtrs(lu, mo, mo, Bq, piv)
            E = Dm + J * (Bq.T @ X)
            dE = -J * (X.T @ self._Mprime_apply(dTd, dTo, X))
            h = STENCIL_H * max(0.05, self.model.domain_radius - abs(k))
            acc = 0.0
            for p in range(4):
                w_ = 1j**p
                diff = self._logdet_M(k + h * w_) - ld0
                diff = diff.real + 1j * (math.remainder(diff.imag, 2 * math.pi))
                acc += diff / w_
            dpsi = dlogT + acc / (4 * h)
        Sc = np.eye(self.n) - J * (Gq @ E)
        dSc = -J * (dGq @ E + (Gq @ dE if self.others else 0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu2, piv2 = sla.lu_factor(Sc, check_finite=False)
        dd = np.abs(np.diag(lu2))
        if not np.all(np.isfinite(dd)) or dd.min() <= SINGULAR_FLOOR * dd.max():
            raise ContourHitError(f"contour hits a resonance near k={k}", node=k)
        Y = sla.lu_solve((lu2, piv2), dSc, check_finite=False)
        return complex(dpsi + np.trace(Y))

    def function(self, fast=True):
        """The channel family ``k -> I - A(ik)/(ik)`` as a :class:`MatrixFunction`."""
        return MatrixFunction(
            value=self.value,
            deriv=self.deriv,
            dim=self.dim,
            domain_radius=self.model.domain_radius,
            singular_at_origin=True,
            logder=self.logder if fast else None,
        )


def assemble_Aq(model, z, ell):
    """``A_q(z)`` restricted to channel ``ell`` (levels-major, then x3 nodes)."""
    if abs(z) >= model.domain_radius:
        raise DomainError(f"|z| must stay below {model.domain_radius:.6g}")
    ch = model.channel(ell)
    if not ch.present:
        raise ParameterError(f"channel {ell} has no level-{model.q} mode")
    return ch.A(z)


# ---------------------------------------------------------------------------
# resonances


@dataclass(frozen=True)
class Resonance:
    k: complex
    multiplicity: int
    z: complex
    ell: int
    residual: float = math.nan


@dataclass
class ResonanceSet:
    resonances: list
    notes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return sum(r.multiplicity for r in self.resonances)

    @property
    def ks(self):
        return np.array([r.k for r in self.resonances], dtype=complex)

    def count(self, r, r0):
        """Resonances (with multiplicity) in ``r < |k| <= r0``."""
        return sum(x.multiplicity for x in self.resonances if r < abs(x.k) <= r0)

    def pairing_defect(self):
        """Largest distance from ``-conj(k)`` to the set (per channel)."""
        worst = 0.0
        for x in self.resonances:
            same = [y.k for y in self.resonances if y.ell == x.ell]
            worst = max(worst, min(abs(-np.conj(x.k) - y) for y in same))
        return worst

    columns = ("ell", "k_re", "k_im", "abs_k", "multiplicity", "z_re", "z_im", "residual")

    def rows(self):
        for x in self.resonances:
            yield [x.ell, x.k.real, x.k.imag, abs(x.k), x.multiplicity, x.z.real, x.z.imag, x.residual]

    def to_dict(self):
        return {"resonances": [dict(zip(self.columns, row)) for row in self.rows()],
                "notes": list(self.notes), "meta": self.meta}


def search_region(model, r_lo, r_hi, full_annulus=False, slack=HALF_PLANE_SLACK):
    if full_annulus:
        return Annulus(r_lo, r_hi)
    if model.sign > 0:
        return Annulus(r_lo, r_hi, -math.pi - slack, math.pi + 2 * slack)
    return Annulus(r_lo, r_hi, -slack, math.pi + 2 * slack)


def find_resonances(model, r_lo, r_hi, *, full_annulus=False, resolution=1e-6, threads=1,
                    fast=True, ells=None):
    """Resonances near the Landau level ``2bq`` with ``r_lo <= |k| <= r_hi``."""
    if not 0 < r_lo < r_hi:
        raise ParameterError("need 0 < r_lo < r_hi")
    model.check_radius(r_hi)
    ells = list(model.ell_range if ells is None else ells)
    if not ells:
        raise ParameterError("empty ell_range")
    region = search_region(model, r_lo, r_hi, full_annulus)
    notes = []
    if model.potential.amplitude == 0:
        return ResonanceSet([], ["zero potential"], _meta(model, r_lo, r_hi, full_annulus, resolution))

    def run(ell):
        ch = model.channel(ell)
        if not ch.present:
            return ell, None
        vals = localize(ch.function(fast), region, resolution, relative=True)
        return ell, vals

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outs = list(pool.map(run, ells))
    else:
        outs = [run(e) for e in ells]
    found = []
    for ell, vals in outs:
        if vals is None:
            notes.append(f"channel {ell} skipped: no level-{model.q} mode")
            continue
        for cv in vals:
            k = cv.location
            found.append(Resonance(k, cv.multiplicity, 2 * model.b * model.q + k * k, ell, cv.residual))
    found.sort(key=lambda r: (r.ell, r.k.real, r.k.imag))
    return ResonanceSet(found, notes, _meta(model, r_lo, r_hi, full_annulus, resolution))


def _meta(model, r_lo, r_hi, full, resolution):
    return {"model": model.to_dict(), "r_lo": r_lo, "r_hi": r_hi, "full_annulus": bool(full),
            "resolution": resolution}


# ---------------------------------------------------------------------------
# Toeplitz counting and laws


def toeplitz_eigenvalues(b, q, W, ells, grid=None):
    """``mu_ell = <psi_{q,ell}, W psi_{q,ell}>`` for an axisymmetric ``W``."""
    ells = list(ells)
    if grid is None:
        grid = rho_grid(b, max(abs(e) for e in ells), q)
    rho, w = grid
    out = []
    for ell in ells:
        f = radial_mode(b, q, ell, rho)
        out.append(math.nan if f is None else float(np.sum(w * rho * f * f * W(rho))))
    return np.array(out)


def n_plus(mu, r):
    mu = np.asarray(mu)
    mu = mu[np.isfinite(mu)]
    return np.array([int(np.sum(mu >= s)) for s in np.atleast_1d(r)])


def toeplitz_counting(model, r_grid):
    """``n_+(r)`` for the Toeplitz operator ``p_q W p_q`` over the model's channels."""
    grid = rho_grid(model.b, max(abs(e) for e in model.ell_range), model.q, model.potential.breaks)
    mu = toeplitz_eigenvalues(model.b, model.q, effective_W(model.potential), model.ell_range, grid)
    r_grid = np.asarray(r_grid, dtype=float)
    counts = n_plus(mu, r_grid)
    warns = []
    fin = mu[np.isfinite(mu)]
    edge = fin[np.argmin(fin)] if fin.size else 0.0
    if fin.size and edge > r_grid.min():
        msg = (f"ell_range too small: smallest channel eigenvalue {edge:.3g} "
               f"exceeds r_lo = {r_grid.min():.3g}")
        warns.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    law = None
    if np.count_nonzero(counts) >= 3:
        law = fit_law(r_grid[counts > 0], counts[counts > 0])[0]
    return CountingReport(list(r_grid), [0] * len(r_grid), [int(c) for c in counts],
                          [math.nan] * len(r_grid), law,
                          meta={"mu": [float(m) for m in mu], "ells": list(model.ell_range),
                                "warnings": warns})


def asymptotic_law(model):
    """Leading-order prediction for ``n_+(r)`` and its descriptor."""
    p = model.potential
    b = model.b
    if p.cls == "A1-power":
        w0 = p.amplitude / p.N
        law = LawDescriptor("power", 0.5 * b * w0 ** (2 / p.m_perp), 2 / p.m_perp)
    elif p.cls == "A2-gaussian":
        if p.beta < 1:
            law = LawDescriptor("log-power", 0.5 * b * p.mu ** (-1 / p.beta), 1 / p.beta)
        elif p.beta == 1:
            law = LawDescriptor("log-power", 1 / math.log(1 + 2 * p.mu / b), 1.0)
        else:
            law = LawDescriptor("log-over-loglog", p.beta / (p.beta - 1))
    else:
        law = LawDescriptor("log-over-loglog", 1.0)
    return law, law.__call__


def count_resonances(resset, r_grid, r0):
    return np.array([resset.count(r, r0) for r in np.atleast_1d(r_grid)])


def check_generic_condition(model, ell=None, nodes=CAUCHY_NODES):
    """Smallest singular value of ``I - A_q'(0) Pi_0`` (minimum over channels)."""
    ells = model.ell_range if ell is None else [ell]
    radius = 0.25 * model.domain_radius
    best = math.inf
    for e in ells:
        ch = model.channel(e)
        if not ch.present:
            continue
        A0 = ch.A(0.0)
        P0 = kernel_projector(A0)
        dA = cauchy_derivative(ch.A, 0.0, radius, nodes)
        s = np.linalg.svd(np.eye(ch.dim) - dA @ P0, compute_uv=False)[-1]
        best = min(best, float(s))
    return best


def pairing_defect(resset):
    return resset.pairing_defect()


__all__ = [
    "MagneticModel", "PotentialSpec", "ResonanceSet", "Resonance", "Channel",
    "laguerre_poly", "landau_kernel", "radial_mode", "radial_modes", "rho_grid",
    "rz_matrix", "resolvent_1d", "assemble_Aq", "find_resonances", "effective_W",
    "toeplitz_eigenvalues", "toeplitz_counting", "asymptotic_law", "check_generic_condition",
    "count_resonances", "n_plus", "x3_grid", "mode_sum_kernel",
]
