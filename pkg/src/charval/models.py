"""Operator families used as test beds.

* synthetic families ``A(z) = A0 + z A1 (+ z^2 A2)`` with a Hermitian diagonal
  ``A0`` whose eigenvalues follow a prescribed law;
* three counterexamples showing what goes wrong when one hypothesis of the
  counting theorems is dropped (compactness, selfadjointness of ``A(0)``,
  invertibility of ``I - A'(0) Pi_0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import (ContourHitError, ContractError, DomainError, OperatorFamily, ParameterError,
                   kernel_projector, polynomial_logder)

INVERTIBILITY_FLOOR = 1e-3
MAX_RETRIES = 10
POLE_TOL = 1e-12
TAIL_EXTRA = 30


# ---------------------------------------------------------------------------
# synthetic models


@dataclass(frozen=True)
class SyntheticModelSpec:
    """Recipe for a synthetic family.

    ``eig_law`` is one of ``{"kind": "power", "gamma": g}`` (eigenvalues
    ``k^{-1/g}``, k = 1, 2, ...), ``{"kind": "geometric", "base": b}``
    (``b^{-k}``, k = 0, 1, ...) or ``{"kind": "custom", "values": [...]}``.
    ``signs`` chooses ``positive``, ``negative`` or ``alternating`` eigenvalues;
    ``kernel_dim`` appends that many zero eigenvalues.
    """

    dim: int
    eig_law: dict
    perturbation_scale: float = 0.3
    order: int = 1
    seed: int = 0
    signs: str = "positive"
    kernel_dim: int = 0
    decay: float = 0.5
    hermitian: bool = False
    invertibility_floor: float = INVERTIBILITY_FLOOR
    max_retries: int = MAX_RETRIES

    def __post_init__(self):
        if self.dim <= 0:
            raise ParameterError("dim must be positive")
        if self.order not in (1, 2):
            raise ParameterError("order must be 1 or 2")
        if self.perturbation_scale < 0:
            raise ParameterError("perturbation_scale must be nonnegative")
        if not 0 <= self.kernel_dim <= self.dim:
            raise ParameterError("kernel_dim must lie in [0, dim]")
        if self.signs not in ("positive", "negative", "alternating"):
            raise ParameterError(f"unknown sign pattern {self.signs!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def law_eigenvalues(eig_law, count):
    """Magnitudes of the nonzero eigenvalues of ``A(0)`` for a law."""
    kind = eig_law.get("kind")
    if kind == "power":
        g = float(eig_law["gamma"])
        if g <= 0:
            raise ParameterError("power law needs gamma > 0")
        return np.arange(1, count + 1, dtype=float) ** (-1.0 / g)
    if kind == "geometric":
        base = float(eig_law["base"])
        if base <= 1:
            raise ParameterError("geometric law needs base > 1")
        return base ** -np.arange(count, dtype=float)
    if kind == "custom":
        vals = np.asarray(eig_law["values"], dtype=float)
        if len(vals) != count:
            raise ParameterError(f"custom law lists {len(vals)} values, expected {count}")
        return vals
    raise ParameterError(f"unknown eigenvalue law {kind!r}")


def _signed(vals, signs):
    if signs == "negative":
        return -np.abs(vals)
    if signs == "alternating":
        return np.abs(vals) * (-1.0) ** np.arange(len(vals))
    return vals  # custom values keep their own signs


def _perturbation(rng, dim, scale, decay, hermitian):
    G = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    if hermitian:
        G = 0.5 * (G + G.conj().T)
    w = (1.0 + np.arange(dim)) ** (-decay)
    M = w[:, None] * G * w[None, :]
    nrm = np.linalg.norm(M, 2)
    return M * (scale / nrm) if nrm > 0 else M


def invertibility_margin(A0, A1, kernel_tol=None):
    """Smallest singular value of ``I - A1 Pi_0``, ``Pi_0`` the kernel projector of ``A0``."""
    P = kernel_projector(A0, kernel_tol)
    return float(np.linalg.svd(np.eye(len(A0)) - A1 @ P, compute_uv=False)[-1])


def make_synthetic(spec):
    """Build the family described by a :class:`SyntheticModelSpec` (or dict)."""
    if isinstance(spec, dict):
        spec = SyntheticModelSpec.from_dict(spec)
    m = spec.dim - spec.kernel_dim
    vals = _signed(law_eigenvalues(spec.eig_law, m), spec.signs)
    a0 = np.concatenate([vals, np.zeros(spec.kernel_dim)])
    A0 = np.diag(a0).astype(complex)
    kernel_tol = 0.5 * float(np.min(np.abs(vals))) if m else 0.0
    for attempt in range(spec.max_retries):
        seed = spec.seed + 7919 * attempt
        rng = np.random.default_rng(seed)
        coeffs = [A0]
        for _ in range(spec.order):
            coeffs.append(_perturbation(rng, spec.dim, spec.perturbation_scale, spec.decay,
                                        spec.hermitian))
        margin = invertibility_margin(A0, coeffs[1], kernel_tol)
        if margin >= spec.invertibility_floor:
            break
    else:
        raise ParameterError(f"I - A'(0) Pi_0 stays below the invertibility floor after "
                             f"{spec.max_retries} seeds")
    coeffs = tuple(coeffs)
    describe = {
        "model": "synthetic", "spec": spec.to_dict(), "seed_used": seed,
        "invertibility_margin": margin,
        "prediction": "characteristic values accumulate at 0 like the eigenvalues of A(0)",
    }
    return polynomial_family(coeffs, describe, a0_selfadjoint=True)


def polynomial_family(coeffs, describe=None, a0_selfadjoint=False, fast=True):
    """``A(z) = sum_k z^k coeffs[k]`` with analytic derivative and fast log-derivative."""
    coeffs = tuple(np.asarray(c, dtype=complex) for c in coeffs)
    dim = coeffs[0].shape[0]

    def ev(z):
        out = coeffs[-1]
        for c in coeffs[-2::-1]:
            out = out * z + c
        return out

    def dv(z):
        if len(coeffs) == 1:
            return np.zeros_like(coeffs[0])
        out = len(coeffs[1:]) * coeffs[-1]
        for k in range(len(coeffs) - 2, 0, -1):
            out = out * z + k * coeffs[k]
        return out

    return OperatorFamily(dim=dim, eval=ev, deriv=dv, a0_selfadjoint=a0_selfadjoint,
                          describe=dict(describe or {}, coefficients=len(coeffs)),
                          logder=polynomial_logder(coeffs) if fast else None)


def pencil_charvals(coeffs):
    """Characteristic values of ``I - A(z)/z`` for a matrix polynomial, by a dense
    generalized eigensolver.  Independent of the contour machinery; used as oracle."""
    from scipy.linalg import eig

    coeffs = [np.asarray(c, dtype=complex) for c in coeffs]
    n = coeffs[0].shape[0]
    P = [-c for c in coeffs] + [np.zeros((n, n), complex)]
    P[1] = P[1] + np.eye(n)
    while len(P) > 2 and not np.any(P[-1]):
        P.pop()
    d = len(P) - 1
    if d == 1:
        w = eig(P[0], -P[1], right=False)
    else:
        N = d * n
        X = np.eye(N, dtype=complex)
        X[:n, :n] = P[d]
        Y = np.zeros((N, N), complex)
        for k in range(d):
            Y[:n, k * n:(k + 1) * n] = P[d - 1 - k]
        for k in range(1, d):
            Y[k * n:(k + 1) * n, (k - 1) * n:k * n] = -np.eye(n)
        w = eig(Y, -X, right=False)
    w = w[np.isfinite(w)]
    # z = 0 is a root of z^n det F(z) whenever A(0) is singular; it is not a characteristic value
    floor = 1e-13 * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    return np.sort_complex(w[np.abs(w) > floor])


# ---------------------------------------------------------------------------
# counterexamples i) and ii)


def counterexample_noncompact(eigs):
    """``A(z) = diag(eigs) + 2 z I``: characteristic values sit at ``-eigs``."""
    eigs = np.asarray(eigs, dtype=float)
    if np.any(eigs <= 0):
        raise ContractError("eigs must be positive")
    n = len(eigs)
    coeffs = (np.diag(eigs).astype(complex), 2.0 * np.eye(n, dtype=complex))
    describe = {"model": "counterexample-i", "eigs": eigs.tolist(),
                "predicted_charvals": (-eigs).tolist(),
                "note": "A'(0) = 2I is not compact in infinite dimension"}
    return polynomial_family(coeffs, describe, a0_selfadjoint=True)


def counterexample_nonselfadjoint(alphas):
    """Block family with ``F = I - B/z - B'``, ``B = [[0,0],[a,0]]``, ``B' = [[0,a],[0,0]]``.

    Each block has determinant ``1 - a^2/z``, so the characteristic values are
    ``a_k^2`` although ``A(0)`` is nilpotent.
    """
    alphas = np.asarray(alphas, dtype=float)
    n = len(alphas)
    A0 = np.zeros((2 * n, 2 * n), complex)
    A1 = np.zeros((2 * n, 2 * n), complex)
    for k, a in enumerate(alphas):
        A0[2 * k + 1, 2 * k] = a
        A1[2 * k, 2 * k + 1] = a
    describe = {"model": "counterexample-ii", "alphas": alphas.tolist(),
                "predicted_charvals": (alphas**2).tolist(),
                "note": "A(0) is nilpotent, spectrum {0}"}
    return polynomial_family((A0, A1), describe, a0_selfadjoint=False)


# ---------------------------------------------------------------------------
# counterexample iii): the inductive sequences


@dataclass(frozen=True)
class InductiveSequences:
    """``lambdas`` strictly decreasing, ``alphas[k] = i^k |alphas[k]|``.

    Entries up to ``n_max`` are the validated sequence; the construction keeps
    going to ``n_max + TAIL_EXTRA`` so that ``f_inf`` can be evaluated with an
    explicit tail bound.
    """

    lambdas: np.ndarray
    alphas: np.ndarray
    n_max: int
    bisection_tol: float = 1e-14
    log: tuple = field(default=(), compare=False)

    @property
    def K(self):
        return len(self.lambdas) - 1

    def alpha2(self):
        """``alpha_k^2``, real by construction (``(-1)^k |alpha_k|^2``)."""
        a = np.abs(self.alphas) ** 2
        return a * (-1.0) ** np.arange(len(a))


def _f_partial(lam, a2, n, z):
    # ratios first: products of tiny numbers underflow
    return complex(np.sum(a2[:n + 1] * (z / (z + lam[:n + 1]))))


def check_H(lam, alphas, n):
    """Check hypothesis (H)_n; return the list of violated conditions (empty if it holds)."""
    bad = []
    lam = np.asarray(lam[:n + 1])
    a = np.asarray(alphas[:n + 1])
    if not (np.all(lam > 0) and np.all(np.diff(lam) < 0)):
        bad.append("lambdas not positive strictly decreasing")
    mod = np.abs(a)
    if np.any(mod <= 0) or np.any(mod > 2.0 ** -np.arange(n + 1) * (1 + 1e-15)):
        bad.append("|alpha_k| outside (0, 2^-k]")
    a2 = a**2
    if np.any(np.abs(a2.imag) > 1e-12 * np.abs(a2)):
        bad.append("alpha_k^2 not real")
    a2r = mod**2 * (-1.0) ** np.arange(n + 1)
    for k in range(n + 1):
        lhs = (-1) ** k * _f_partial(lam, a2r, n, lam[k]).real
        rhs = mod[k] ** 2 / 4 * (1 + 1 / (n + 1))
        if lhs < rhs * (1 - 1e-12):
            bad.append(f"sign condition fails at k={k}: {lhs:.3e} < {rhs:.3e}")
    return bad


def build_inductive_sequences(n_max, bisection_tol=1e-14):
    """Construct the sequences step by step, asserting (H)_n after every step."""
    if n_max < 0:
        raise ParameterError("n_max must be nonnegative")
    K = n_max + TAIL_EXTRA
    lam = [1.0]
    mod = [1.0]
    log = []
    bad = check_H(np.array(lam), np.array(mod, complex), 0)
    if bad:
        raise AssertionError(f"(H)_0 fails: {bad}")
    for n in range(K):
        gap = math.sqrt(1.0 / (n + 1) - 1.0 / (n + 2))
        a_next = min(2.0 ** (-n - 1), min(mod) / 2 * gap)
        a2 = np.array(mod) ** 2 * (-1.0) ** np.arange(n + 1)
        lam_arr = np.array(lam)
        # the new term contributes exactly |a|^2/2 at its own point; keep
        # |f_n| below |a|^2/4 (1 - 1/(n+2)) so that (H)_{n+1} holds there
        target = a_next**2 / 4 * (1 - 1 / (n + 2))
        x = lam[-1]
        j = 0
        while True:
            j += 1
            x = lam[-1] * 2.0**-j
            if abs(_f_partial(lam_arr, a2, n, x)) <= target:
                break
            if x < 1e-300:
                raise AssertionError(f"no admissible lambda at step {n + 1}")
        lam.append(x)
        mod.append(a_next)
        alphas = np.array(mod) * (1j) ** np.arange(n + 2)
        bad = check_H(np.array(lam), alphas, n + 1)
        if bad:
            raise AssertionError(f"(H)_{n + 1} fails: {bad}; state lambdas={lam}, |alphas|={mod}")
        log.append({"n": n + 1, "shrink_steps": j, "lambda": x, "abs_alpha": a_next})
    alphas = np.array(mod) * (1j) ** np.arange(K + 1)
    return InductiveSequences(np.array(lam), alphas, n_max, bisection_tol, tuple(log))


def eval_f(seqs, n, z, pole_tol=POLE_TOL):
    """``(f_n(z), error)``; ``n = inf`` evaluates ``f_inf`` truncated at ``K`` with a tail bound."""
    z = complex(z)
    lam = seqs.lambdas
    if z == 0:
        raise DomainError("f is not defined at z = 0")
    if np.any(np.abs(z + lam) <= pole_tol * lam):
        raise DomainError(f"z={z} is too close to a pole -lambda_k")
    a2 = seqs.alpha2()
    if n == math.inf or n is None:
        K = seqs.K
        val = _f_partial(lam, a2, K, z)
        if z.real >= 0:
            c = 1.0
        elif z.imag != 0:
            c = abs(z) / abs(z.imag)
        else:
            c = math.inf
        # |alpha_{k+1}| <= |alpha_k| / 2 by construction, so the tail is at most
        # |alpha_K|^2 / 3, which also never exceeds 4^-K / 3
        tail = min(4.0**-K, abs(seqs.alphas[K]) ** 2) / 3
        return val, c * tail
    n = int(n)
    if n > seqs.K:
        raise ParameterError(f"n={n} exceeds the constructed length {seqs.K}")
    return _f_partial(lam, a2, n, z), 0.0


def f_derivative(seqs, z):
    a2 = seqs.alpha2()
    lam = seqs.lambdas
    return complex(np.sum((a2 / (z + lam)) * (lam / (z + lam))))


def bracket_zeros(seqs, k_max=None):
    """Zeros ``x_k`` of ``f_inf`` in ``(lambda_{k+1}, lambda_k)`` via sign changes and Brent's method."""
    k_max = seqs.n_max - 1 if k_max is None else k_max
    lam = seqs.lambdas

    def f(x):
        return eval_f(seqs, math.inf, x)[0].real

    out = []
    for k in range(k_max + 1):
        lo, hi = lam[k + 1], lam[k]
        flo, fhi = f(lo), f(hi)
        if flo * fhi >= 0:
            raise AssertionError(f"no sign change of f_inf on (lambda_{k + 1}, lambda_{k})")
        x = brentq(f, lo, hi, xtol=1e-300, rtol=max(seqs.bisection_tol, 4 * np.finfo(float).eps))
        out.append(x)
    return np.array(out)


def counterexample_noninvertible(seqs, truncation):
    """``A(z) = A(0) + z A'(0)`` on ``C + C^truncation`` built from the sequences.

    ``A(0) = 0 + diag(-lambda_k)``, ``A'(0) = [[1, alpha], [alpha^t, 0]]``.  The
    family carries an exact log-derivative from the factorisation
    ``det F(z) = -f(z) prod_k (1 + lambda_k / z)``.
    """
    if not 1 <= truncation <= seqs.n_max + 1:
        raise ParameterError("truncation must lie in [1, n_max + 1]")
    T = truncation
    lam = seqs.lambdas[:T]
    al = seqs.alphas[:T]
    a2 = seqs.alpha2()[:T]
    A0 = np.zeros((T + 1, T + 1), complex)
    A0[1:, 1:] = np.diag(-lam)
    A1 = np.zeros((T + 1, T + 1), complex)
    A1[0, 0] = 1
    A1[0, 1:] = al
    A1[1:, 0] = al

    def logder(z):
        z = complex(z)
        if z == 0:
            raise ContourHitError("z = 0", node=z)
        terms = a2 * (z / (z + lam))
        fz = complex(np.sum(terms))
        scale = float(np.sum(np.abs(terms)))
        if abs(fz) <= 1e-14 * scale:
            raise ContourHitError(f"contour hits characteristic value near z={z}", node=z)
        df = complex(np.sum((a2 / (z + lam)) * (lam / (z + lam))))
        return df / fz - complex(np.sum(lam / (z + lam))) / z

    describe = {"model": "counterexample-iii", "truncation": T, "n_max": seqs.n_max,
                "prediction": "characteristic values are the zeros of f, one in each "
                              "(lambda_{k+1}, lambda_k)",
                "note": "I - A'(0) Pi_0 is singular"}
    return OperatorFamily(dim=T + 1, eval=lambda z: A0 + z * A1, deriv=lambda z: A1,
                          a0_selfadjoint=True, describe=describe, logder=logder)


def smallest_singular_value_iii(seqs, truncation, z):
    """Smallest singular value of ``I - A(z)/z`` for the truncated family iii).

    ``F`` is graded over many decades, so it is inverted in closed form
    (Schur complement on the first coordinate) and ``1/||F^{-1}||`` returned.
    """
    z = complex(z)
    T = truncation
    lam = seqs.lambdas[:T]
    al = seqs.alphas[:T]
    a2 = seqs.alpha2()[:T]
    Dinv = z / (z + lam)
    f = complex(np.sum(a2 * Dinv))
    if f == 0:
        return 0.0
    u = np.concatenate([[-1.0], -Dinv * al])
    Finv = -np.outer(u, u) / f
    Finv[1:, 1:] += np.diag(Dinv)
    return float(1.0 / np.linalg.norm(Finv, 2))


def noninvertibility_margin(seqs, truncation):
    fam = counterexample_noninvertible(seqs, truncation)
    A0 = fam.a0()
    lam_min = float(seqs.lambdas[truncation - 1])
    P = kernel_projector(A0, 0.5 * lam_min)
    A1 = fam.derivative(0)
    return float(np.linalg.svd(np.eye(fam.dim) - A1 @ P, compute_uv=False)[-1])


# ---------------------------------------------------------------------------
# JSON specs


def model_from_spec(spec):
    """Build a family from a JSON model block; returns ``(family, describe)``."""
    kind = spec["kind"]
    if kind == "synthetic":
        params = {k: v for k, v in spec.items() if k != "kind"}
        fam = make_synthetic(SyntheticModelSpec(**params))
    elif kind == "constant":
        eigs = np.asarray(spec["eigenvalues"], dtype=float)
        fam = polynomial_family((np.diag(eigs),), {"model": "constant", "eigenvalues": eigs.tolist()},
                                a0_selfadjoint=True)
    elif kind == "counterexample-i":
        fam = counterexample_noncompact(_seq(spec, "eigs"))
    elif kind == "counterexample-ii":
        fam = counterexample_nonselfadjoint(_seq(spec, "alphas"))
    elif kind == "counterexample-iii":
        seqs = build_inductive_sequences(int(spec["n_max"]), spec.get("bisection_tol", 1e-14))
        fam = counterexample_noninvertible(seqs, int(spec.get("truncation", seqs.n_max + 1)))
    else:
        raise ParameterError(f"unknown model kind {kind!r}")
    return fam, fam.describe


def _seq(spec, key):
    """Explicit list, or ``{"base": b, "count": n}`` for ``b^{-k}``, k = 0..n-1."""
    v = spec[key]
    if isinstance(v, dict):
        return float(v["base"]) ** -np.arange(int(v["count"]), dtype=float)
    return np.asarray(v, dtype=float)
