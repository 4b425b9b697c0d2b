"""Closed-form spectra of conformal linearizations at Einstein metrics.

At an Einstein metric with Schouten trace ``J`` the conformal linearization
of every supported invariant is a polynomial in ``-Delta``.  Writing ``lam``
for an eigenvalue of ``-Delta``, the operator acts on that eigenspace as
``q(lam) * (lam - 2J)`` (the stability factor) or as ``q(lam)`` alone for
GJMS operators.  Coefficients are plain Python numbers, so ``Fraction``
inputs give exact verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real

import numpy as np


class UnsupportedInvariantError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorPolynomial:
    n: int
    J: Real
    q: tuple  # ascending coefficients in lam
    stability_factor: bool = True
    label: str = ""

    def __post_init__(self):
        q = list(self.q)
        while q and q[-1] == 0:
            q.pop()
        object.__setattr__(self, "q", tuple(q))

    @property
    def degree(self) -> int:
        return len(self.q) - 1

    @property
    def leading(self):
        return self.q[-1] if self.q else 0

    def q_at(self, lam):
        out = 0
        for c in reversed(self.q):
            out = out * lam + c
        return out

    def __call__(self, lam):
        v = self.q_at(lam)
        return v * (lam - 2 * self.J) if self.stability_factor else v

    def full_coefficients(self) -> tuple:
        if not self.stability_factor:
            return self.q
        c = [0] * (len(self.q) + 1)
        for i, a in enumerate(self.q):
            c[i + 1] += a
            c[i] -= 2 * self.J * a
        return tuple(c)

    def _compatible(self, other):
        if (self.n, self.J, self.stability_factor) != (other.n, other.J, other.stability_factor):
            raise ValueError("operator polynomials live on different backgrounds")

    def __add__(self, other: "OperatorPolynomial") -> "OperatorPolynomial":
        self._compatible(other)
        m = max(len(self.q), len(other.q))
        a = self.q + (0,) * (m - len(self.q))
        b = other.q + (0,) * (m - len(other.q))
        return OperatorPolynomial(self.n, self.J, tuple(x + y for x, y in zip(a, b)),
                                  self.stability_factor, f"{self.label}+{other.label}")

    def __rmul__(self, s) -> "OperatorPolynomial":
        return OperatorPolynomial(self.n, self.J, tuple(s * c for c in self.q),
                                  self.stability_factor, f"{s}*{self.label}")

    def positive_on(self, a, closed: bool = True) -> bool:
        """Whether ``q > 0`` on ``[a, inf)`` (or ``(a, inf)`` when not closed)."""
        if not self.q:
            return False
        if self.leading < 0:
            return False
        if self.degree == 0:
            return self.q[0] > 0
        if self.degree == 1:
            v = self.q_at(a)
            return v > 0 or (not closed and v == 0)
        roots = np.roots([float(c) for c in reversed(self.q)])
        real = [r.real for r in roots if abs(r.imag) <= 1e-12 * max(1.0, abs(r.real))]
        fa = float(a)
        bad = [r for r in real if r > fa or (closed and r == fa)]
        if bad:
            return False
        return self.q_at(a) > 0 or (not closed and self.q_at(a) == 0)

    def nonnegative_on(self, a) -> bool:
        """Whether ``q >= 0`` on ``[a, inf)``."""
        if not self.q:
            return True
        if self.leading < 0:
            return False
        if self.degree == 0:
            return self.q[0] >= 0
        if self.degree == 1:
            return self.q_at(a) >= 0
        roots = np.roots([float(c) for c in reversed(self.q)])
        real = sorted(r.real for r in roots if abs(r.imag) <= 1e-12 * max(1.0, abs(r.real)))
        fa = float(a)
        # a simple root beyond a changes sign; a double root touches zero
        beyond = [r for r in real if r > fa]
        if len(beyond) == 1:
            return False
        if len(beyond) == 2 and not math.isclose(beyond[0], beyond[1], rel_tol=1e-9):
            return False
        return self.q_at(a) >= 0


def gjms_factors(n: int, k: int, J):
    """Constants ``c_j`` with ``P_{2k} = prod_j (-Delta + c_j)``."""
    return [Fraction((n + 2 * j - 2) * (n - 2 * j), 2 * n) * J for j in range(1, k + 1)]


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def gjms_polynomial(n: int, k: int, J) -> tuple:
    q = [1]
    for c in gjms_factors(n, k, J):
        q = _poly_mul(q, [c, 1])
    return tuple(q)


def q_curvature_constant(k: int, n: int, J):
    """``Q_{2k}`` of an Einstein metric: ``2/(n-2k) P_{2k}(1)``, continued to ``n = 2k``."""
    cs = gjms_factors(n, k, J)
    if n != 2 * k:
        return Fraction(2, n - 2 * k) * math.prod(cs)
    # the last factor carries (n - 2k); cancel it against the prefactor
    return Fraction(n + 2 * k - 2, n) * J * math.prod(cs[:-1])


def dq_eigen_polynomial(k: int, n: int, J) -> tuple:
    """``DQ_{2k}`` on a ``lam``-eigenspace: ``P(lam) - P(0) - 2k Q``."""
    P = list(gjms_polynomial(n, k, J))
    P[0] = -2 * k * q_curvature_constant(k, n, J)
    return tuple(P)


def _divide_stability(full, J) -> tuple:
    """Synthetic division of ``full(lam)`` by ``lam - 2J``; the remainder must vanish."""
    coeffs = list(reversed(full))
    out, acc = [], 0
    for c in coeffs:
        acc = acc * 2 * J + c
        out.append(acc)
    rem = out.pop()
    if abs(float(rem)) > 1e-9 * max(1.0, max(abs(float(c)) for c in full)):
        raise ArithmeticError("polynomial does not carry the stability factor")
    return tuple(reversed(out))


SUPPORTED = ("J", "sigma2", "Q4", "v3", "Q6", "I1", "I2", "K1", "K2")


def einstein_operator(id: str, n: int, J=None, sphere: bool = True) -> OperatorPolynomial:
    """Eigenvalue polynomial of ``DL`` (or of ``P_{2k}`` for ids ``P2, P4, ...``)."""
    if J is None:
        J = Fraction(n, 2)
    if isinstance(J, int):
        J = Fraction(J)
    n_ = n
    if id.startswith("P") and id[1:].isdigit():
        k = int(id[1:]) // 2
        if int(id[1:]) % 2 or k < 1:
            raise UnsupportedInvariantError(id)
        return OperatorPolynomial(n, J, gjms_polynomial(n, k, J), False, id)
    if id == "J":
        q = (1,)
    elif id == "sigma2":
        q = (Fraction(n_ - 1, n_) * J,)
    elif id == "Q4":
        q = (Fraction(n_ * n_ - 4, n_) * J, 1)
    elif id == "v3":
        q = (Fraction((n_ - 1) * (n_ - 2), 2 * n_ * n_) * J * J,)
    elif id == "Q6":
        q = (
            # constant term fixed by P(lam) - P(0) - 6Q divided by (lam - 2J)
            Fraction(3 * (n_ * n_ - 16) * (n_ * n_ - 4), 4 * n_ * n_) * J * J,
            Fraction(3 * n_ * n_ - 2 * n_ - 32, 2 * n_) * J,
            1,
        )
    elif id == "I1":
        q = (2 * J * Fraction(n_ - 6, 2) * J, 2 * J)
    elif id == "I2":
        c = Fraction(2 * (n_ + 2), n_) * J
        q = (c * Fraction(3 * (n_ - 6), 2 * (n_ + 2)) * J, c)
    elif id == "K1":
        q = ()
    elif id == "K2":
        if not sphere:
            raise UnsupportedInvariantError("K2 has no diagonal form away from locally conformally flat metrics")
        q = ()
    else:
        raise UnsupportedInvariantError(f"{id} has no Einstein operator polynomial")
    return OperatorPolynomial(n, J, q, True, id)


def sphere_eigenvalue(k: int, n: int, radius=1):
    r2 = Fraction(radius) ** 2 if isinstance(radius, (int, Fraction)) else radius**2
    return Fraction(k * (k + n - 1)) / r2 if isinstance(r2, Fraction) else k * (k + n - 1) / r2


def sphere_J(n: int, radius=1):
    r2 = Fraction(radius) ** 2 if isinstance(radius, (int, Fraction)) else radius**2
    return Fraction(n, 2) / r2 if isinstance(r2, Fraction) else n / (2 * r2)


def sphere_spectrum_table(id, n: int, radius=1, k_max: int = 50) -> list[tuple]:
    """``(k, lam_k, eigenvalue)`` for ``k = 0..k_max``.

    ``id`` may also be an ``OperatorPolynomial`` built for the same sphere.
    """
    J = sphere_J(n, radius)
    op = id if isinstance(id, OperatorPolynomial) else einstein_operator(id, n, J)
    rows = []
    for k in range(k_max + 1):
        lam = sphere_eigenvalue(k, n, radius)
        rows.append((k, lam, op(lam)))
    return rows


@dataclass
class StabilityVerdict:
    id: str
    n: int
    stable: bool | None  # None when the method cannot decide
    kernel_modes: list[int]
    min_positive_gap: float | None
    k0_eigenvalue: float
    tail_positive: bool
    mode: str = "sphere"

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "n": self.n,
            "mode": self.mode,
            "stable": self.stable,
            "kernel_modes": self.kernel_modes,
            "min_positive_gap": self.min_positive_gap,
            "k0_eigenvalue": self.k0_eigenvalue,
            "tail_positive": self.tail_positive,
        }


def stability_verdict(id: str, n: int, radius=1, k_max: int = 50, einstein_generic: bool = False) -> StabilityVerdict:
    """Variational stability on the mean-zero modes ``k >= 1``.

    The sampled modes only reach ``k_max``; the tail is covered by the sign of
    ``q`` on ``[lam_2, inf)``.  Since ``lam - 2J > 0`` there, positivity of
    ``q`` on that ray means no mode beyond ``k_max`` can be negative or zero,
    so raising ``k_max`` never changes the verdict.
    """
    J = sphere_J(n, radius)
    if einstein_generic and id == "K2":
        # -delta(W^2 grad U) is not diagonal on eigenfunctions once W is nonzero
        return StabilityVerdict(id, n, None, [], None, float("nan"), False,
                                "einstein-generic: indeterminate by this method")
    op = einstein_operator(id, n, J, sphere=not einstein_generic)
    if einstein_generic:
        # away from the round sphere lam_1 > 2J strictly, so the kernel must be empty
        ok = op.positive_on(2 * J, closed=True)
        return StabilityVerdict(id, n, ok, [], None, float(op(0)), ok, "einstein-generic")
    rows = sphere_spectrum_table(op, n, radius, k_max)
    scale = max(1.0, max(abs(float(v)) for _, _, v in rows))
    kernel = [k for k, _, v in rows[1:] if abs(float(v)) <= 1e-12 * scale]
    negative = [k for k, _, v in rows[1:] if float(v) < -1e-12 * scale]
    positive = [float(v) for k, _, v in rows[2:] if float(v) > 1e-12 * scale]
    tail = op.positive_on(sphere_eigenvalue(2, n, radius), closed=True)
    stable = not negative and kernel == [1] and tail
    return StabilityVerdict(
        id, n, stable, kernel, min(positive) if positive else None, float(rows[0][2]), tail
    )


# ---------------------------------------------------------------- weight -4 cones

def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass
class ConeVerdict:
    alpha: Fraction
    beta: Fraction
    n: int
    E: bool
    V: bool
    SV: bool
    witnesses: dict = field(default_factory=dict)
    spectrum_V: bool | None = None
    direct: dict | None = None

    @property
    def routes_agree(self) -> bool:
        ok = self.spectrum_V is None or self.spectrum_V == self.V
        if self.direct is not None:
            ok = ok and self.direct["V"] == self.V and self.direct["SV"] == self.SV
        return ok

    def as_dict(self) -> dict:
        out = {
            "alpha": str(self.alpha),
            "beta": str(self.beta),
            "n": self.n,
            "E": self.E,
            "V": self.V,
            "SV": self.SV,
            "witnesses": {k: str(v) for k, v in self.witnesses.items()},
            "spectrum_V": self.spectrum_V,
            "routes_agree": self.routes_agree,
        }
        if self.direct is not None:
            out["direct"] = self.direct
        return out


def cone_operator(alpha, beta, n: int) -> OperatorPolynomial:
    J = sphere_J(n)
    return alpha * einstein_operator("Q4", n, J) + beta * einstein_operator("sigma2", n, J)


def spectrum_in_V(alpha, beta, n: int, k_max: int = 50) -> bool:
    """Membership in the variational cone read off the unit-sphere spectrum.

    Sampled modes ``k = 1..k_max`` must be nonnegative with kernel inside
    ``{k = 1}``.  The ray ``[lam_1, inf)`` is then checked continuously,
    because membership is a statement about every Einstein metric (for which
    ``lam_1 >= 2J``) and not only about the round sphere's discrete modes.
    """
    alpha, beta = _exact(alpha), _exact(beta)
    op = cone_operator(alpha, beta, n)
    rows = sphere_spectrum_table(op, n, 1, k_max)
    sampled = all(v >= 0 for _, _, v in rows[1:]) and all(v != 0 for _, _, v in rows[2:])
    return sampled and op.nonnegative_on(sphere_eigenvalue(1, n)) and bool(op.q)


def cone_classify(alpha, beta, n: int, k_max: int = 50) -> ConeVerdict:
    if n < 3:
        raise ValueError("cones need n >= 3")
    a, b = _exact(alpha), _exact(beta)
    w = {
        "alpha": a,
        "V_linear": (n * n + 2 * n - 4) * a + (n - 1) * b,
        "SV_linear": (n * n - 4) * a + (n - 1) * b,
    }
    E = a > 0 or (a == 0 and b > 0)
    V = a >= 0 and w["V_linear"] >= 0 and (a != 0 or b != 0)
    SV = a >= 0 and w["SV_linear"] > 0
    return ConeVerdict(a, b, n, E, V, SV, w, spectrum_in_V(a, b, n, k_max))


def det_gradient_membership(gamma2, gamma3, n: int = 4) -> ConeVerdict:
    """Cone membership of ``(g2 + g3) Q4 - 4 g3 sigma2`` two ways."""
    g2, g3 = _exact(gamma2), _exact(gamma3)
    v = cone_classify(g2 + g3, -4 * g3, n)
    v.direct = {
        "V": bool(5 * g2 + 2 * g3 >= 0 and g2 + g3 >= 0 and (g2 != 0 or g3 != 0)),
        "SV": bool(g2 > 0 and g2 + g3 >= 0),
    }
    v.witnesses.update(gamma2=g2, gamma3=g3)
    return v


def jet_cross_check(id: str, n: int, k: int, points=None) -> dict:
    """Compare ``DL(Y_k)`` from jets on the unit sphere with ``eigenvalue * Y_k``.

    The residual is scaled by the largest of the two sides and the size of
    ``DL`` on the next harmonic, so kernel modes (both sides zero) are judged
    against the operator's natural magnitude.
    """
    from . import catalog, deform, models
    from .dsl.expr import evaluate

    chart = models.round_sphere(n)
    pts = chart.sample_points(6, seed=k) if points is None else np.atleast_2d(points)
    Y = models.sphere_harmonic(chart, k)
    lhs = np.atleast_1d(deform.d_dt_invariant(id, deform.MetricFamily.conformal(chart, Y), pts).first)
    yv = np.array([evaluate(Y, dict(zip(chart.coords, p))) for p in pts])
    op = einstein_operator(id, n, sphere_J(n))
    ev = float(op(sphere_eigenvalue(k, n)))
    rhs = ev * yv
    ref = max(abs(float(op(sphere_eigenvalue(j, n)))) for j in range(k, k + 2))
    # zero operators are judged against the invariant's own size J^k
    ref = max(ref, float(sphere_J(n)) ** catalog.get(id).k)
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), ref * np.max(np.abs(yv)), 1e-300)
    return {
        "eigenvalue": ev,
        "lhs": lhs,
        "rhs": rhs,
        "residual": float(np.max(np.abs(lhs - rhs)) / scale),
    }
