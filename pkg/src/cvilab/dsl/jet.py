"""Truncated multivariate Taylor arithmetic.

A jet lives in a :class:`JetSpace` fixed by the number of spatial variables,
a total spatial order ``m`` and an order ``T`` (0, 1 or 2) in one extra
deformation variable ``t``.  Monomials are ``t^j x^alpha`` with ``j <= T`` and
``|alpha| <= m``; the two bounds truncate independently.

Coefficients are stored as Taylor coefficients ``d^alpha f / alpha!`` in the
last array axis so that products are plain truncated convolutions.  Raw partial
derivative values, which is what callers usually want, come from
:meth:`Jet.partial` and :meth:`Jet.partials`.
"""

from __future__ import annotations

import functools
import math
from itertools import combinations_with_replacement

import numpy as np

MAX_ORDER = 7
_PAIR_BUDGET = 3_000_000  # elements per product chunk


class JetOrderError(ValueError):
    pass


class JetDomainError(ArithmeticError):
    pass


def _monomials(nvars: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(order + 1):
        for combo in combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for v in combo:
                alpha[v] += 1
            out.append(tuple(alpha))
    # combinations_with_replacement yields each multiset once, in lex order
    return out


class JetSpace:
    """Index bookkeeping for one (nvars, order, torder) combination."""

    def __init__(self, nvars: int, order: int, torder: int = 0):
        if order < 0:
            raise JetOrderError(f"negative jet order {order}")
        if order > MAX_ORDER:
            raise JetOrderError(f"jet order {order} exceeds the maximum {MAX_ORDER}")
        if torder not in (0, 1, 2):
            raise JetOrderError("deformation order must be 0, 1 or 2")
        self.nvars = nvars
        self.order = order
        self.torder = torder
        spatial = _monomials(nvars, order)
        self.nspatial = len(spatial)
        exps = [(j,) + a for j in range(torder + 1) for a in spatial]
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), nvars + 1)
        self.size = len(exps)
        self._base = np.array([torder + 1] + [order + 1] * nvars, dtype=np.int64)
        self._radix = np.cumprod(np.concatenate(([1], self._base[:-1])))
        codes = self.exps @ self._radix
        self._order_idx = np.argsort(codes)
        self._sorted_codes = codes[self._order_idx]
        fact = np.ones(self.size)
        for col in range(nvars + 1):
            fact *= np.array([math.factorial(int(k)) for k in self.exps[:, col]])
        self.factorials = fact
        self.spatial_degree = self.exps[:, 1:].sum(axis=1)

    def __repr__(self):
        return f"JetSpace(nvars={self.nvars}, order={self.order}, torder={self.torder})"

    def index_of(self, exps: np.ndarray) -> np.ndarray:
        """Positions of exponent rows ``exps`` (shape (k, nvars+1)); -1 if absent."""
        codes = np.asarray(exps, dtype=np.int64) @ self._radix
        pos = np.searchsorted(self._sorted_codes, codes)
        pos = np.clip(pos, 0, self.size - 1)
        hit = self._sorted_codes[pos] == codes
        ok = hit & np.all(np.asarray(exps) >= 0, axis=-1)
        ok &= np.all(np.asarray(exps) < self._base, axis=-1)
        ok &= np.asarray(exps)[..., 1:].sum(axis=-1) <= self.order
        return np.where(ok, self._order_idx[pos], -1)

    def monomial(self, var: int | None) -> np.ndarray:
        """Coefficient vector of the bare variable (``None`` means ``t``)."""
        e = np.zeros((1, self.nvars + 1), dtype=np.int64)
        e[0, 0 if var is None else var + 1] = 1
        idx = self.index_of(e)[0]
        c = np.zeros(self.size)
        if idx >= 0:
            c[idx] = 1.0
        return c

    @functools.cached_property
    def pairs(self):
        """Product table sorted by output: (left idx, right idx, out idx, group starts)."""
        left, right, out = [], [], []
        step = max(1, 2_000_000 // max(self.size, 1))
        for a0 in range(0, self.size, step):
            a = np.arange(a0, min(self.size, a0 + step))
            s = self.exps[a][:, None, :] + self.exps[None, :, :]
            ii, jj = np.nonzero(
                (s[..., 0] <= self.torder) & (s[..., 1:].sum(axis=-1) <= self.order)
            )
            if ii.size == 0:
                continue
            tgt = self.index_of(s[ii, jj])
            left.append(a[ii])
            right.append(jj)
            out.append(tgt)
        left = np.concatenate(left)
        right = np.concatenate(right)
        out = np.concatenate(out)
        perm = np.argsort(out, kind="stable")
        left, right, out = left[perm], right[perm], out[perm]
        starts = np.flatnonzero(np.concatenate(([True], out[1:] != out[:-1])))
        return left, right, out, starts

    def deriv_map(self, var: int):
        """(target space, source indices, factors) for d/dx_var."""
        tgt = jet_space(self.nvars, self.order - 1, self.torder)
        src = tgt.exps.copy()
        src[:, var + 1] += 1
        idx = self.index_of(src)
        return tgt, idx, src[:, var + 1].astype(float)

    def tderiv_map(self):
        tgt = jet_space(self.nvars, self.order, self.torder - 1)
        src = tgt.exps.copy()
        src[:, 0] += 1
        return tgt, self.index_of(src), src[:, 0].astype(float)

    def restrict_to(self, other: "JetSpace") -> np.ndarray:
        """Indices into ``self`` of the monomials of a smaller space."""
        if other.nvars != self.nvars or other.order > self.order or other.torder > self.torder:
            raise JetOrderError(f"cannot restrict {self} to {other}")
        return self.index_of(other.exps)

    def embed_from(self, other: "JetSpace") -> np.ndarray:
        """Indices into ``self`` of every monomial of a space with smaller torder."""
        return self.index_of(other.exps)


@functools.lru_cache(maxsize=None)
def jet_space(nvars: int, order: int, torder: int = 0) -> JetSpace:
    return JetSpace(nvars, order, torder)


class Jet:
    """An array of jets sharing one space.  ``c`` has shape ``lead + (space.size,)``."""

    __slots__ = ("space", "c")
    __array_priority__ = 100

    def __init__(self, space: JetSpace, c: np.ndarray):
        self.space = space
        self.c = c

    # ---- construction
    @classmethod
    def constant(cls, space: JetSpace, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (space.size,))
        c[..., 0] = value
        return cls(space, c)

    @classmethod
    def variable(cls, space: JetSpace, var: int | None, value) -> "Jet":
        j = cls.constant(space, value)
        j.c = j.c + space.monomial(var)
        return j

    # ---- shape helpers
    @property
    def shape(self):
        return self.c.shape[:-1]

    @property
    def order(self):
        return self.space.order

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.space, self.c[key + (slice(None),)])

    def reshape(self, *shape):
        return Jet(self.space, self.c.reshape(tuple(shape) + (self.space.size,)))

    def moveaxis(self, src, dst):
        nd = self.c.ndim - 1
        src = src % nd if isinstance(src, int) else tuple(s % nd for s in src)
        dst = dst % nd if isinstance(dst, int) else tuple(d % nd for d in dst)
        return Jet(self.space, np.moveaxis(self.c, src, dst))

    def transpose(self, *axes):
        return Jet(self.space, self.c.transpose(tuple(axes) + (self.c.ndim - 1,)))

    def copy(self):
        return Jet(self.space, self.c.copy())

    # ---- order management
    def truncate(self, order: int | None = None, torder: int | None = None) -> "Jet":
        order = self.space.order if order is None else order
        torder = self.space.torder if torder is None else torder
        if order == self.space.order and torder == self.space.torder:
            return self
        if order < 0:
            raise JetOrderError(f"jet order {order} requested; not enough derivatives available")
        tgt = jet_space(self.space.nvars, order, torder)
        idx = self.space.restrict_to(tgt)
        return Jet(tgt, self.c[..., idx])

    def lift_t(self, torder: int) -> "Jet":
        """View a jet as one in a space with a larger deformation order."""
        if torder == self.space.torder:
            return self
        tgt = jet_space(self.space.nvars, self.space.order, torder)
        c = np.zeros(self.shape + (tgt.size,))
        c[..., tgt.embed_from(self.space)] = self.c
        return Jet(tgt, c)

    def _align(self, other: "Jet"):
        m = min(self.space.order, other.space.order)
        t = max(self.space.torder, other.space.torder)
        a = self.truncate(m, min(self.space.torder, t)).lift_t(t)
        b = other.truncate(m, min(other.space.torder, t)).lift_t(t)
        return a, b

    # ---- linear arithmetic
    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.space, a.c + b.c)
        c = self.c.copy()
        c[..., 0] = c[..., 0] + np.asarray(other, dtype=float)
        return Jet(self.space, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return product(self, other)
        other = np.asarray(other, dtype=float)
        return Jet(self.space, self.c * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return product(self, other.reciprocal())
        other = np.asarray(other, dtype=float)
        return Jet(self.space, self.c / other[..., None])

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = Jet.constant(self.space, np.ones(self.shape))
            base = self
            while p:
                if p & 1:
                    out = out * base
                p >>= 1
                if p:
                    base = base * base
            return out
        return self.power(float(p))

    def sum(self, axis):
        nd = self.c.ndim - 1
        axis = tuple(a % nd for a in (axis if isinstance(axis, tuple) else (axis,)))
        return Jet(self.space, self.c.sum(axis=axis))

    # ---- calculus
    def d(self, var: int) -> "Jet":
        """Partial derivative in spatial variable ``var`` (order drops by one)."""
        if self.space.order == 0:
            raise JetOrderError("cannot differentiate an order-0 jet")
        tgt, idx, fac = self.space.deriv_map(var)
        return Jet(tgt, self.c[..., idx] * fac)

    def dt(self) -> "Jet":
        if self.space.torder == 0:
            raise JetOrderError("no deformation variable to differentiate")
        tgt, idx, fac = self.space.tderiv_map()
        return Jet(tgt, self.c[..., idx] * fac)

    def tcoeff(self, j: int) -> "Jet":
        """Coefficient of ``t^j`` as a jet without the deformation variable."""
        tgt = jet_space(self.space.nvars, self.space.order, 0)
        e = tgt.exps.copy()
        e[:, 0] = j
        idx = self.space.index_of(e)
        if np.any(idx < 0):
            return Jet(tgt, np.zeros(self.shape + (tgt.size,)))
        return Jet(tgt, self.c[..., idx])

    def tderivs(self) -> np.ndarray:
        """Values of ``d^j/dt^j`` at the base point, j = 0..T, stacked last."""
        return np.stack(
            [self.tcoeff(j).value * math.factorial(j) for j in range(self.space.torder + 1)],
            axis=-1,
        )

    def partial(self, alpha, tpow: int = 0) -> np.ndarray:
        """Value of ``d^alpha f`` (spatial multi-index) at the base point."""
        e = np.array([[tpow] + list(alpha)], dtype=np.int64)
        idx = self.space.index_of(e)[0]
        if idx < 0:
            raise JetOrderError(f"multi-index {tuple(alpha)} not in {self.space}")
        return self.c[..., idx] * self.space.factorials[idx]

    def partials(self) -> dict:
        """All derivative values keyed by (t power,) + spatial multi-index."""
        vals = self.c * self.space.factorials
        return {tuple(int(v) for v in e): vals[..., k] for k, e in enumerate(self.space.exps)}

    # ---- nonlinear functions by Taylor composition
    def compose(self, derivs) -> "Jet":
        """``f(self)`` given ``derivs(k)`` -> ``f^(k)(value)`` arrays."""
        nmax = self.space.order + self.space.torder
        v0 = self.value
        delta = Jet(self.space, self.c.copy())
        delta.c[..., 0] = 0.0
        coeffs = [derivs(k) / math.factorial(k) for k in range(nmax + 1)]
        out = Jet.constant(self.space, coeffs[nmax] * np.ones_like(v0))
        for k in range(nmax - 1, -1, -1):
            out = out * delta
            out.c[..., 0] += coeffs[k]
        return out

    def exp(self):
        e0 = np.exp(self.value)
        return self.compose(lambda k: e0)

    def log(self):
        v = self.value
        if np.any(v <= 0):
            raise JetDomainError("log of a non-positive value")
        return self.compose(
            lambda k: np.log(v) if k == 0 else (-1.0) ** (k - 1) * math.factorial(k - 1) / v**k
        )

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = (s, c, -s, -c)
        return self.compose(lambda k: cyc[k % 4])

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = (c, -s, -c, s)
        return self.compose(lambda k: cyc[k % 4])

    def power(self, p: float):
        v = self.value
        if float(p).is_integer() and p >= 0:
            return self ** int(p)
        if np.any(v == 0) or (np.any(v < 0) and not float(p).is_integer()):
            raise JetDomainError(f"power {p} of a value outside its domain")

        def deriv(k):
            coef = 1.0
            for i in range(k):
                coef *= p - i
            return coef * v ** (p - k)

        return self.compose(deriv)

    def sqrt(self):
        if np.any(self.value <= 0):
            raise JetDomainError("sqrt of a non-positive value")
        return self.power(0.5)

    def reciprocal(self):
        if np.any(self.value == 0):
            raise JetDomainError("division by zero")
        return self.power(-1.0)

    def __repr__(self):
        return f"Jet({self.space}, shape={self.shape})"


# ---------------------------------------------------------------- products

def product(a: Jet, b: Jet) -> Jet:
    """Elementwise (broadcast) truncated product."""
    a, b = a._align(b)
    lead = np.broadcast_shapes(a.shape, b.shape)
    return Jet(a.space, _convolve(a.space, lambda A, B: A * B, a.c, b.c, lead))


def contract(subscripts: str, a: Jet, b: Jet) -> Jet:
    """Einsum over the tensor axes of two jets with a truncated product.

    ``subscripts`` follows :func:`numpy.einsum` for the leading axes only; the
    monomial axis is handled internally.  A leading ``...`` is implied.
    """
    a, b = a._align(b)
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    spec = f"...{sa}z,...{sb}z->...{out}z"
    la = a.shape[: a.c.ndim - 1 - len(sa)]
    lb = b.shape[: b.c.ndim - 1 - len(sb)]
    batch = np.broadcast_shapes(la, lb)
    dims = {}
    for s, shp in ((sa, a.shape[len(la):]), (sb, b.shape[len(lb):])):
        for ch, n in zip(s, shp):
            dims[ch] = n
    lead = batch + tuple(dims[ch] for ch in out)
    work = int(np.prod(batch + tuple(dims.values()), dtype=np.int64))
    return Jet(
        a.space,
        _convolve(a.space, lambda A, B: np.einsum(spec, A, B, optimize=True), a.c, b.c, lead, work),
    )


def _convolve(space: JetSpace, op, A, B, lead, work=None) -> np.ndarray:
    left, right, out_idx, starts = space.pairs
    npairs = left.size
    out = np.zeros(tuple(lead) + (space.size,))
    per_pair = int(work if work is not None else max(1, int(np.prod(lead, dtype=np.int64))))
    chunk = max(1, _PAIR_BUDGET // max(per_pair, 1))
    if chunk >= npairs:
        prod = op(A[..., left], B[..., right])
        out[..., out_idx[starts]] = np.add.reduceat(prod, starts, axis=-1)
        return out
    # Chunk boundaries are snapped to output groups so each chunk writes disjoint outputs.
    bounds = [0]
    for s in starts[1:]:
        if s - bounds[-1] >= chunk:
            bounds.append(int(s))
    bounds.append(npairs)
    for p0, p1 in zip(bounds[:-1], bounds[1:]):
        sl = slice(p0, p1)
        prod = op(A[..., left[sl]], B[..., right[sl]])
        local = starts[(starts >= p0) & (starts < p1)] - p0
        out[..., out_idx[p0 + local]] = np.add.reduceat(prod, local, axis=-1)
    return out


def stack(jets, axis=0) -> Jet:
    jets = list(jets)
    m = min(j.space.order for j in jets)
    t = max(j.space.torder for j in jets)
    jets = [j.truncate(m, min(j.space.torder, t)).lift_t(t) for j in jets]
    nd = jets[0].c.ndim - 1
    axis = axis % (nd + 1)
    return Jet(jets[0].space, np.stack([j.c for j in jets], axis=axis))


def zeros(space: JetSpace, shape) -> Jet:
    return Jet(space, np.zeros(tuple(shape) + (space.size,)))


# ---------------------------------------------------------------- matrices

def mat_inverse(g: Jet) -> Jet:
    """Inverse of a jet of matrices over the last two tensor axes."""
    g0 = g.value
    try:
        x = np.linalg.inv(g0)
    except np.linalg.LinAlgError as exc:
        raise JetDomainError("singular matrix") from exc
    X = Jet.constant(g.space, x)
    N = Jet(g.space, g.c.copy())
    N.c[..., 0] = 0.0
    XN = contract("ij,jk->ik", X, N)
    term = X
    out = X
    for _ in range(g.space.order + g.space.torder):
        term = -contract("ij,jk->ik", XN, term)
        out = out + term
    return out


def mat_logdet(g: Jet) -> Jet:
    g0 = g.value
    sign, ld = np.linalg.slogdet(g0)
    if np.any(sign <= 0):
        raise JetDomainError("matrix is not positive definite")
    X = Jet.constant(g.space, np.linalg.inv(g0))
    N = Jet(g.space, g.c.copy())
    N.c[..., 0] = 0.0
    XN = contract("ij,jk->ik", X, N)
    out = Jet.constant(g.space, ld)
    power = XN
    for k in range(1, g.space.order + g.space.torder + 1):
        tr = Jet(g.space, np.trace(power.c, axis1=-3, axis2=-2))
        out = out + tr * ((-1.0) ** (k + 1) / k)
        if k < g.space.order + g.space.torder:
            power = contract("ij,jk->ik", power, XN)
    return out
