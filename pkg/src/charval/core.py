"""Dense matrix substrate: holomorphic matrix families and spectral utilities.

Operators are finite dense truncations.  A family ``z -> A(z)`` is wrapped in
:class:`OperatorFamily`; the function whose characteristic values we study,
``F(z) = I - A(z)/z``, is obtained from :meth:`OperatorFamily.F` as a
:class:`MatrixFunction` carrying an analytic derivative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

HERMITIAN_RTOL = 1e-10
KERNEL_RTOL = 1e-8
CONTOUR_TOL = 1e-8
CAUCHY_NODES = 64


class CharvalError(Exception):
    """Base class for numerical errors raised by this package."""


class ContractError(CharvalError, ValueError):
    """An input violates a documented precondition."""


class DomainError(CharvalError, ValueError):
    """An evaluation was requested outside the holomorphy domain."""


class ParameterError(CharvalError, ValueError):
    """Degenerate or inconsistent construction parameters."""


class ContourHitError(CharvalError):
    """A quadrature node sits on (or numerically at) a characteristic value."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


def _norm2(M):
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def is_hermitian(M, tol=None):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    if tol is None:
        tol = HERMITIAN_RTOL * max(_norm2(M), 1e-300)
    return bool(np.max(np.abs(M - M.conj().T), initial=0.0) <= tol)


def spectral_decomp(M, hermitian_tol=None):
    """Eigen-decomposition of a Hermitian matrix.

    Returns ``(eigenvalues, U)`` with eigenvalues ascending and ``M = U diag U*``.
    Raises :class:`ContractError` if ``M`` is not Hermitian within tolerance.
    """
    M = np.asarray(M)
    if not is_hermitian(M, hermitian_tol):
        raise ContractError("spectral_decomp requires a Hermitian matrix")
    H = 0.5 * (M + M.conj().T)
    w, U = np.linalg.eigh(H)
    return w, U


def kernel_projector(M, kernel_tol=None):
    """Orthogonal projector onto the (numerical) kernel of Hermitian ``M``.

    Eigenvalues with ``|lambda| <= kernel_tol`` span the kernel; the default
    tolerance is ``KERNEL_RTOL * ||M||``.
    """
    w, U = spectral_decomp(M)
    if kernel_tol is None:
        kernel_tol = KERNEL_RTOL * _norm2(np.asarray(M))
    V = U[:, np.abs(w) <= kernel_tol]
    return V @ V.conj().T


@dataclass(frozen=True)
class MatrixFunction:
    """A holomorphic matrix-valued function with derivative access.

    ``deriv`` may be omitted, in which case derivatives come from
    :func:`cauchy_derivative` on a small circle inside the domain disk
    ``|z - center| < domain_radius``.  ``singular_at_origin`` marks functions
    of the form ``I - A(z)/z`` so region-based routines refuse boxes touching 0.
    ``logder``, when given, returns ``tr(F(z)^{-1} F'(z))`` by a cheaper exact
    route and must raise :class:`ContourHitError` where ``F`` is singular.
    """

    value: Callable[[complex], np.ndarray]
    dim: int
    deriv: Optional[Callable[[complex], np.ndarray]] = None
    domain_radius: float = np.inf
    center: complex = 0.0
    singular_at_origin: bool = False
    pair: Optional[Callable[[complex], tuple]] = None
    logder: Optional[Callable[[complex], complex]] = None

    def __call__(self, z):
        return np.asarray(self.value(complex(z)), dtype=complex)

    def value_and_derivative(self, z):
        """``(F(z), F'(z))``, sharing work when the function provides ``pair``."""
        if self.pair is not None:
            V, D = self.pair(complex(z))
            return np.asarray(V, dtype=complex), np.asarray(D, dtype=complex)
        return self(z), self.derivative(z)

    def derivative(self, z):
        if self.deriv is not None:
            return np.asarray(self.deriv(complex(z)), dtype=complex)
        z = complex(z)
        room = self.domain_radius - abs(z - self.center)
        if self.singular_at_origin:
            room = min(room, abs(z))
        radius = min(0.1, 0.5 * room)
        if not np.isfinite(radius) or radius <= 0:
            raise DomainError(f"no room for a Cauchy derivative at z={z}")
        return cauchy_derivative(self, z, radius, CAUCHY_NODES)

    def __add__(self, other):
        d1, d2 = self.derivative, other.derivative
        return MatrixFunction(
            value=lambda z: self(z) + other(z),
            deriv=lambda z: d1(z) + d2(z),
            dim=self.dim,
            domain_radius=min(self.domain_radius, other.domain_radius),
            center=self.center,
            singular_at_origin=self.singular_at_origin or other.singular_at_origin,
        )

    def __matmul__(self, other):
        d1, d2 = self.derivative, other.derivative
        return MatrixFunction(
            value=lambda z: self(z) @ other(z),
            deriv=lambda z: d1(z) @ other(z) + self(z) @ d2(z),
            dim=self.dim,
            domain_radius=min(self.domain_radius, other.domain_radius),
            center=self.center,
            singular_at_origin=self.singular_at_origin or other.singular_at_origin,
        )

    def rescaled(self, a):
        """The function ``w -> F(a w)`` (derivative ``a F'(a w)``)."""
        a = complex(a)
        ld = None
        if self.logder is not None:
            ld = lambda w: a * self.logder(a * w)  # noqa: E731
        return MatrixFunction(
            value=lambda w: self(a * w),
            deriv=lambda w: a * self.derivative(a * w),
            dim=self.dim,
            domain_radius=self.domain_radius / abs(a),
            center=self.center / a,
            singular_at_origin=self.singular_at_origin,
            logder=ld,
        )


@dataclass(frozen=True)
class OperatorFamily:
    """Holomorphic family ``z -> A(z)`` of ``dim x dim`` matrices on ``|z| < domain_radius``."""

    dim: int
    eval: Callable[[complex], np.ndarray]
    deriv: Optional[Callable[[complex], np.ndarray]] = None
    domain_radius: float = np.inf
    a0_selfadjoint: bool = False
    describe: dict = field(default_factory=dict, compare=False)
    logder: Optional[Callable[[complex], complex]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise ParameterError("dim must be positive")
        if self.domain_radius <= 0:
            raise ParameterError("domain_radius must be positive")

    def __call__(self, z):
        z = complex(z)
        if abs(z) >= self.domain_radius:
            raise DomainError(f"|z|={abs(z):g} outside holomorphy disk of radius {self.domain_radius:g}")
        M = np.asarray(self.eval(z), dtype=complex)
        if M.shape != (self.dim, self.dim):
            raise ContractError(f"family returned shape {M.shape}, expected {(self.dim, self.dim)}")
        return M

    def derivative(self, z):
        z = complex(z)
        if self.deriv is not None:
            return np.asarray(self.deriv(z), dtype=complex)
        room = self.domain_radius - abs(z)
        return cauchy_derivative(self, z, min(0.1, 0.5 * room), CAUCHY_NODES)

    def a0(self):
        return self(0.0)

    def check_selfadjoint(self):
        return is_hermitian(self.a0())

    def as_function(self):
        """``z -> A(z)`` as a :class:`MatrixFunction`."""
        return MatrixFunction(value=self.__call__, deriv=self.derivative, dim=self.dim,
                              domain_radius=self.domain_radius)

    @property
    def F(self):
        """``F(z) = I - A(z)/z`` with ``F'(z) = A(z)/z**2 - A'(z)/z``."""
        eye = np.eye(self.dim)

        def value(z):
            return eye - self(z) / z

        def deriv(z):
            return self(z) / z**2 - self.derivative(z) / z

        def pair(z):
            A = self(z)
            return eye - A / z, A / z**2 - self.derivative(z) / z

        return MatrixFunction(value=value, deriv=deriv, dim=self.dim,
                              domain_radius=self.domain_radius, singular_at_origin=True,
                              pair=pair, logder=self.logder)

    def dense(self):
        """The same family without the fast log-derivative (reference path)."""
        return OperatorFamily(self.dim, self.eval, self.deriv, self.domain_radius,
                              self.a0_selfadjoint, self.describe)

    def reflected(self):
        """Family ``z -> -A(-z)``; its positive-side characteristic values are the
        negatives of the original's negative-side ones."""
        d = self.derivative
        ld = None
        if self.logder is not None:
            ld = lambda z: -self.logder(-z)  # noqa: E731
        return OperatorFamily(dim=self.dim, eval=lambda z: -self(-z),
                              deriv=lambda z: d(-z), domain_radius=self.domain_radius,
                              a0_selfadjoint=self.a0_selfadjoint,
                              describe={**self.describe, "reflected": True}, logder=ld)

    def spectral_profile(self, kernel_tol=None):
        w, _ = spectral_decomp(self.a0())
        if kernel_tol is None:
            kernel_tol = KERNEL_RTOL * max(np.max(np.abs(w), initial=0.0), 1e-300)
        return SpectralProfile(tuple(float(x) for x in w), kernel_tol)


def cauchy_derivative(F, z0, radius, nodes=CAUCHY_NODES):
    """Derivative of a holomorphic matrix function by the trapezoidal Cauchy formula.

    ``F'(z0) = (1/2 pi i) \\oint F(z)/(z - z0)^2 dz`` on ``|z - z0| = radius``.
    """
    z0 = complex(z0)
    if radius <= 0:
        raise ParameterError("radius must be positive")
    dom = getattr(F, "domain_radius", np.inf)
    cen = getattr(F, "center", 0.0)
    if isinstance(F, OperatorFamily):
        cen = 0.0
    if radius >= dom - abs(z0 - cen):
        raise DomainError("Cauchy circle leaves the holomorphy domain")
    t = 2 * np.pi * np.arange(nodes) / nodes
    e = np.exp(1j * t)
    acc = 0
    for ek in e:
        acc = acc + F(z0 + radius * ek) * ek.conjugate()
    return acc / (nodes * radius)


@dataclass(frozen=True)
class SpectralProfile:
    """Sorted eigenvalues of the selfadjoint operator ``A(0)``."""

    eigenvalues: tuple
    kernel_tol: float = 0.0

    def __post_init__(self):
        ev = tuple(sorted(float(x) for x in self.eigenvalues))
        object.__setattr__(self, "eigenvalues", ev)

    def count(self, lo, hi):
        """Number of eigenvalues in the closed interval ``[lo, hi]``."""
        if lo > hi:
            raise ContractError("count requires lo <= hi")
        ev = np.asarray(self.eigenvalues)
        return int(np.searchsorted(ev, hi, side="right") - np.searchsorted(ev, lo, side="left"))

    def nonzero(self):
        return tuple(x for x in self.eigenvalues if abs(x) > self.kernel_tol)

    def __len__(self):
        return len(self.eigenvalues)


def polynomial_logder(coeffs, singular_floor=1e-13):
    """Exact ``tr(F^{-1} F')`` for ``F = I - A(z)/z`` with ``A(z) = sum_k z^k coeffs[k]``.

    ``z^n det F(z) = det(zI - A(z))``; the matrix polynomial on the right is
    linearised into a companion pencil whose generalized Schur form turns the
    determinant into a product of linear factors.  One QZ factorisation makes
    every later evaluation O(n).
    """
    from scipy.linalg import qz

    coeffs = [np.asarray(c, dtype=complex) for c in coeffs]
    n = coeffs[0].shape[0]
    P = [-c for c in coeffs] + [np.zeros((n, n), complex)]
    P[1] = P[1] + np.eye(n)
    while len(P) > 2 and not np.any(P[-1]):
        P.pop()
    d = len(P) - 1
    if d == 1:
        X, Y = P[1], P[0]
    else:
        N = d * n
        X = np.eye(N, dtype=complex)
        X[:n, :n] = P[d]
        Y = np.zeros((N, N), complex)
        for k in range(d):
            Y[:n, k * n:(k + 1) * n] = P[d - 1 - k]
        for k in range(1, d):
            Y[k * n:(k + 1) * n, (k - 1) * n:k * n] = -np.eye(n)
    AA, BB, _, _ = qz(Y, X, output="complex")
    a = np.diag(AA).copy()
    b = np.diag(BB).copy()
    keep = np.abs(b) > 0

    def logder(z):
        z = complex(z)
        den = z * b[keep] + a[keep]
        scale = np.abs(z * b[keep]) + np.abs(a[keep])
        if np.any(np.abs(den) <= singular_floor * scale) or z == 0:
            raise ContourHitError(f"contour hits characteristic value near z={z}", node=z)
        return complex(np.sum(b[keep] / den)) - n / z

    logder.pencil = (a, b)
    return logder
