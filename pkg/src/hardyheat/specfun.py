"""Scalar special functions behind the explicit eigenbasis.

The singular self-similar eigenfunctions are built from three scalar
ingredients: Pochhammer symbols, the Kummer confluent hypergeometric
series M(c, b, t), and its polynomial truncations

    P(t) = sum_{i=0}^{n} (-n)_i / ((N/2 - alpha)_i) * t^i / i!,

together with the exponent map

    alpha(mu) = (N-2)/2 - sqrt(((N-2)/2)^2 + mu)

and the eigenvalue ladder gamma = m - alpha/2.  Everything here is pure
and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PositivityError, QuadratureError

# Kummer series controls: the artifact only evaluates |t| <= O(100),
# where the series is benign.  Accuracy degrades for large t (unused).
KUMMER_RTOL = 1e-15
KUMMER_MAX_TERMS = 10_000
# c within this distance of a non-positive integer is treated as the
# exact polynomial case (the eigenvalue condition makes -c integer
# exactly in all in-scope uses).
NONPOS_INT_TOL = 1e-12


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial; coeffs[i] multiplies t**i."""

    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("empty coefficient list")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("non-finite coefficient")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t):
        """Horner evaluation; accepts scalars or numpy arrays."""
        t = np.asarray(t, dtype=float)
        acc = np.full(t.shape, self.coeffs[-1])
        for c in reversed(self.coeffs[:-1]):
            acc = acc * t + c
        return acc if acc.shape else float(acc)

    def derivative(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial((0.0,))
        return Polynomial(tuple(i * c for i, c in enumerate(self.coeffs) if i > 0))


def pochhammer(s: float, i: int) -> float:
    """Rising factorial (s)_i = prod_{j=0}^{i-1} (s + j), with (s)_0 = 1."""
    if i < 0:
        raise ValueError("pochhammer index must be non-negative")
    out = 1.0
    for j in range(i):
        out *= s + j
    return out


def _near_nonpositive_integer(c: float) -> int | None:
    """Index -c if c is within NONPOS_INT_TOL of a non-positive integer."""
    if c > NONPOS_INT_TOL:
        return None
    n = round(-c)
    if abs(c + n) <= NONPOS_INT_TOL:
        return int(n)
    return None


def kummer_m(c: float, b: float, t: float) -> float:
    """Kummer series M(c, b, t) = sum_n (c)_n/(b)_n * t^n/n!.

    Terminates exactly after -c terms when c is a non-positive integer
    (within NONPOS_INT_TOL); otherwise sums until the term drops below
    KUMMER_RTOL relative to the partial sum, with a hard cap.
    """
    if _near_nonpositive_integer(b) is not None:
        raise ValueError(f"b={b} is a non-positive integer; series undefined")
    n_exact = _near_nonpositive_integer(c)

    total = 1.0
    term = 1.0
    n = 0
    while True:
        if n_exact is not None and n >= n_exact:
            return total
        if n >= KUMMER_MAX_TERMS:
            raise QuadratureError(
                f"Kummer series did not converge within {KUMMER_MAX_TERMS} terms "
                f"(c={c}, b={b}, t={t}); last term magnitude {abs(term):.3e}"
            )
        term *= (c + n) / (b + n) * t / (n + 1)
        total += term
        n += 1
        if n_exact is None and abs(term) < KUMMER_RTOL * abs(total):
            return total


def alpha_from_mu(mu: float, N: int) -> float:
    """Singularity exponent alpha = (N-2)/2 - sqrt(((N-2)/2)^2 + mu).

    Requires the positivity condition mu > -(N-2)^2/4 (strict); the
    exact boundary is rejected as outside the admissible range.
    """
    if N < 3:
        raise ValueError("dimension must be >= 3")
    half = (N - 2) / 2.0
    disc = half * half + mu
    if disc <= 0.0:
        raise PositivityError(
            f"mu={mu} violates mu > -(N-2)^2/4 = {-half * half} (N={N})",
            margin=disc,
        )
    return half - math.sqrt(disc)


def gamma_mk(m: int, alpha_k: float) -> float:
    """Eigenvalue gamma = m - alpha_k/2 of the radial ladder."""
    if m < 0:
        raise ValueError("radial index must be non-negative")
    return m - alpha_k / 2.0


def p_poly(n: int, alpha_j: float, N: int) -> Polynomial:
    """Degree-n polynomial with coefficients (-n)_i / ((N/2-alpha_j)_i i!).

    This is the terminating Kummer series M(-n, N/2-alpha_j, t); P(0)=1.
    Requires N/2 - alpha_j > 0 (automatic when alpha_j < (N-2)/2).
    """
    if n < 0:
        raise ValueError("degree must be non-negative")
    b = N / 2.0 - alpha_j
    if b <= 0.0:
        raise ValueError(f"need N/2 - alpha_j > 0, got {b}")
    coeffs = []
    num = 1.0  # (-n)_i
    den = 1.0  # (b)_i * i!
    for i in range(n + 1):
        coeffs.append(num / den)
        num *= (-n) + i
        den *= (b + i) * (i + 1)
    return Polynomial(tuple(coeffs))
