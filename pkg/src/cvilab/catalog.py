"""Registry and pointwise evaluation of scalar Riemannian invariants.

Every evaluator maps a :class:`~cvilab.geometry.CurvatureFrame` to a batch of
scalar jets.  Operands of final products are truncated to ``frame.target``
(the spatial jet order the caller wants back, usually 0) so that no work is
spent on derivatives nobody reads.

Notation: ``trP3 = P_i^s P_s^t P_t^i``, ``W.P^2 = W_ijkl P^ik P^jl``,
``(W^2)_ij = W_istu W_j^stu``, ``Delta J^2 = Delta (J^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dsl.jet import Jet, contract
from .geometry import Chart, CurvatureFrame, DimensionError, GeometryError, curvature_frame


class UnknownInvariantError(KeyError):
    pass


# ---------------------------------------------------------------- building blocks

def cut(fr: CurvatureFrame, T: Jet) -> Jet:
    tgt = getattr(fr, "target", 0)
    return T.truncate(min(T.order, tgt))


def raise_slots(fr: CurvatureFrame, T: Jet, slots) -> Jet:
    r = len(T.shape) - 1
    idx = "abcdefghijkl"[:r]
    out = T
    for s in slots:
        t_in = idx[:s] + "p" + idx[s + 1:]
        out = contract(f"{idx[s]}p,{t_in}->{idx}", fr.ginv, out)
    return out


def _sq(fr, name, compute):
    """Memoize derived tensors on the frame."""
    cache = fr.__dict__.setdefault("_catalog_cache", {})
    key = (name, getattr(fr, "target", 0))
    if key not in cache:
        cache[key] = compute()
    return cache[key]


def J_(fr):
    return cut(fr, fr.J)


def P_(fr):
    return cut(fr, fr.P)


def norm_P(fr):
    return _sq(fr, "|P|2", lambda: fr.norm2(P_(fr)))


def norm_W(fr):
    return _sq(fr, "|W|2", lambda: fr.norm2(cut(fr, fr.W)))


def norm_C(fr):
    return _sq(fr, "|C|2", lambda: fr.norm2(cut(fr, fr.C)))


def tr_P3(fr):
    def go():
        Pm = contract("ik,kj->ij", fr.ginv, P_(fr))  # P^i_j
        P2 = contract("ij,jk->ik", Pm, Pm)
        return contract("ik,ki->", P2, Pm)

    return _sq(fr, "trP3", go)


def lap_J(fr):
    return _sq(fr, "DJ", lambda: cut(fr, fr.laplacian(fr.J)))


def lap_J2(fr):
    return _sq(fr, "DJ2", lambda: cut(fr, fr.laplacian(fr.J * fr.J)))


def lap_P2(fr):
    return _sq(fr, "DP2", lambda: cut(fr, fr.laplacian(fr.norm2(fr.P))))


def lap_W2(fr):
    return _sq(fr, "DW2", lambda: cut(fr, fr.laplacian(fr.norm2(fr.W))))


def bilap_J(fr):
    return _sq(fr, "D2J", lambda: cut(fr, fr.laplacian(fr.laplacian(fr.J))))


def div_P_dJ(fr):
    """``delta(P(nabla J))``."""

    def go():
        omega = contract("ij,j->i", fr.P, fr.gradient(fr.J))
        return cut(fr, fr.divergence(omega))

    return _sq(fr, "divPdJ", go)


def div_CP(fr):
    """``nabla^k (C_skt P^st)``."""

    def go():
        v = contract("skt,st->k", fr.C, fr.raise_all(fr.P))
        return cut(fr, fr.divergence(v))

    return _sq(fr, "divCP", go)


def div_WC(fr):
    """``nabla^l (W_ijkl C^ijk)``."""

    def go():
        v = contract("ijkl,ijk->l", fr.W, fr.raise_all(fr.C))
        return cut(fr, fr.divergence(v))

    return _sq(fr, "divWC", go)


def BP(fr):
    return _sq(fr, "BP", lambda: fr.inner(cut(fr, fr.B), P_(fr)))


def WP2(fr):
    def go():
        Pu = fr.raise_all(P_(fr))
        X = contract("ijkl,ik->jl", cut(fr, fr.W), Pu)
        return contract("jl,jl->", X, Pu)

    return _sq(fr, "WP2", go)


def W_sq(fr):
    """``(W^2)_ij = W_istu W_j^stu``."""

    def go():
        W = cut(fr, fr.W)
        return contract("istu,jstu->ij", W, raise_slots(fr, W, (1, 2, 3)))

    return _sq(fr, "W^2", go)


def W2_P(fr):
    """``<W^2, P> = P_i^s W_sjkl W^ijkl``."""
    return _sq(fr, "<W2,P>", lambda: fr.inner(W_sq(fr), P_(fr)))


def L1_(fr):
    def go():
        M = raise_slots(fr, cut(fr, fr.W), (2, 3))  # W_ij^kl
        X = contract("ijkl,klst->ijst", M, M)
        return contract("ijst,stij->", X, M)

    return _sq(fr, "L1", go)


def L2_(fr):
    def go():
        M = raise_slots(fr, cut(fr, fr.W), (1, 3))  # W_i^k_j^l stored [i,k,j,l]
        X = contract("ikjl,kslt->ijst", M, M)
        return contract("ijst,sitj->", X, M)

    return _sq(fr, "L2", go)


# ---------------------------------------------------------------- catalog formulas

def f_J(fr, n):
    return J_(fr)


def f_R(fr, n):
    return cut(fr, fr.scalar)


def f_J2(fr, n):
    return J_(fr) * J_(fr)


def f_P2(fr, n):
    return norm_P(fr)


def f_mDJ(fr, n):
    return -lap_J(fr)


def f_sigma2(fr, n):
    return (J_(fr) * J_(fr) - norm_P(fr)) * 0.5


def f_Q4(fr, n):
    J = J_(fr)
    return -lap_J(fr) - norm_P(fr) * 2.0 + J * J * (n / 2)


def f_W2(fr, n):
    return norm_W(fr)


def f_J3(fr, n):
    J = J_(fr)
    return J * J * J


def f_JP2(fr, n):
    return J_(fr) * norm_P(fr)


def f_trP3(fr, n):
    return tr_P3(fr)


def f_BP(fr, n):
    return BP(fr)


def f_mJDJ(fr, n):
    return -(J_(fr) * lap_J(fr))


def f_WP2(fr, n):
    return WP2(fr)


def f_JW2(fr, n):
    return J_(fr) * norm_W(fr)


def f_L1(fr, n):
    return L1_(fr)


def f_L2(fr, n):
    return L2_(fr)


def f_L3(fr, n):
    return (
        -lap_W2(fr) * 0.5
        - div_WC(fr) * (2 * (n - 10))
        + W2_P(fr) * (2 * (n - 10))
        + J_(fr) * norm_W(fr) * 2.0
        - norm_C(fr) * (2 * (n - 5) * (n - 10))
    )


def f_mDJ2(fr, n):
    return -lap_J2(fr)


def f_mDP2(fr, n):
    return -lap_P2(fr)


def f_mDW2(fr, n):
    return -lap_W2(fr)


def f_divPdJ(fr, n):
    return div_P_dJ(fr)


def f_divCP(fr, n):
    return div_CP(fr)


def f_divWC(fr, n):
    return div_WC(fr)


def f_D2J(fr, n):
    return bilap_J(fr)


def f_v3(fr, n):
    J = J_(fr)
    return (
        J * J * J * (1 / 6)
        - J * norm_P(fr) * 0.5
        + tr_P3(fr) * (1 / 3)
        + BP(fr) * (1 / (3 * (n - 4)))
    )


def f_Q6(fr, n):
    J = J_(fr)
    return (
        bilap_J(fr)
        - J * lap_J(fr) * ((n - 6) / 2)
        - lap_J2(fr) * ((n + 2) / 2)
        + div_P_dJ(fr) * 8.0
        + lap_P2(fr) * 4.0
        + J * J * J * ((n * n - 4) / 4)
        - J * norm_P(fr) * (4 * n)
        + tr_P3(fr) * 16.0
        + BP(fr) * (16 / (n - 4))
    )


def f_I1(fr, n):
    J = J_(fr)
    return -lap_J2(fr) + J * J * J * ((n - 6) / 3)


def f_I2(fr, n):
    return -lap_P2(fr) - div_P_dJ(fr) * 2.0 - lap_J2(fr) + J_(fr) * norm_P(fr) * (n - 6)


def f_K1(fr, n):
    return div_CP(fr) * (3 * (n - 4)) + BP(fr) * (n - 6)


def f_K2(fr, n):
    return div_CP(fr) * (2 * (n - 3)) + div_WC(fr) + WP2(fr) * (n - 6)


def f_K3(fr, n):
    return -(W2_P(fr) - norm_W(fr) * J_(fr) * 0.25) + norm_C(fr) * ((n - 4) / 2)


# ---------------------------------------------------------------- registry

@dataclass(frozen=True)
class InvariantEntry:
    id: str
    weight: int  # -2k
    min_dim: int
    order: int  # metric derivatives consumed
    evaluator: Callable[[CurvatureFrame, int], Jet] = field(repr=False)
    is_cvi: bool = False
    is_pointwise_conformal: bool = False
    constant_at_einstein: bool = False
    has_einstein_operator_polynomial: bool = False
    description: str = ""

    @property
    def k(self) -> int:
        return -self.weight // 2

    def check_dim(self, n: int) -> None:
        if n < self.min_dim:
            raise DimensionError(f"{self.id} needs n >= {self.min_dim}, got n = {n}")

    def evaluate(self, fr: CurvatureFrame) -> Jet:
        self.check_dim(fr.n)
        if fr.order < self.order:
            raise GeometryError(
                f"{self.id} needs metric jets of order {self.order}, frame has {fr.order}"
            )
        return self.evaluator(fr, fr.n)


def _e(id, weight, min_dim, order, fn, desc, **flags):
    return InvariantEntry(id, weight, min_dim, order, fn, description=desc, **flags)


_CVI = dict(is_cvi=True)
_EIN = dict(constant_at_einstein=True, has_einstein_operator_polynomial=True)
_PWC = dict(is_pointwise_conformal=True)

CVI_ENTRIES = [
    _e("J", -2, 2, 2, f_J, "R / (2(n-1))", **_CVI, **_EIN),
    _e("sigma2", -4, 4, 2, f_sigma2, "(J^2 - |P|^2) / 2", **_CVI, **_EIN),
    _e("Q4", -4, 4, 4, f_Q4, "-Delta J - 2|P|^2 + (n/2) J^2", **_CVI, **_EIN),
    _e("W2", -4, 4, 2, f_W2, "|W|^2", **_CVI, **_PWC),
    _e("v3", -6, 6, 4, f_v3, "renormalized volume coefficient", **_CVI, **_EIN),
    _e("Q6", -6, 6, 6, f_Q6, "sixth-order Q-curvature", **_CVI, **_EIN),
    _e("I1", -6, 5, 4, f_I1, "-Delta J^2 + (n-6)/3 J^3", **_CVI, **_EIN),
    _e("I2", -6, 5, 4, f_I2, "-Delta|P|^2 - 2 delta(P dJ) - Delta J^2 + (n-6) J|P|^2", **_CVI, **_EIN),
    _e("K1", -6, 5, 4, f_K1, "3(n-4) div(C P) + (n-6)<B,P>", **_CVI, **_EIN),
    _e("K2", -6, 5, 4, f_K2, "2(n-3) div(C P) + div(W C) + (n-6) W.P^2", **_CVI, **_EIN),
    _e("K3", -6, 5, 3, f_K3, "-<W^2 - |W|^2 g / 4, P> + (n-4)/2 |C|^2", **_CVI),
    _e("L1", -6, 5, 2, f_L1, "W_ij^kl W_kl^st W_st^ij", **_CVI, **_PWC),
    _e("L2", -6, 5, 2, f_L2, "W_i^k_j^l W_k^s_l^t W_s^i_t^j", **_CVI, **_PWC),
    _e("L3", -6, 5, 4, f_L3, "pointwise conformal invariant with Delta|W|^2", **_CVI, **_PWC),
]

HELPER_ENTRIES = [
    _e("R", -2, 2, 2, f_R, "scalar curvature"),
    _e("J2", -4, 3, 2, f_J2, "J^2"),
    _e("P2", -4, 3, 2, f_P2, "|P|^2"),
    _e("mDJ", -4, 2, 4, f_mDJ, "-Delta J"),
]

# Riemannian basis of weight -6, in the fixed published order.
BASIS6_ENTRIES = [
    _e("J3", -6, 3, 2, f_J3, "J^3"),
    _e("JP2", -6, 3, 2, f_JP2, "J|P|^2"),
    _e("trP3", -6, 3, 2, f_trP3, "tr P^3"),
    _e("BP", -6, 4, 4, f_BP, "<B,P>"),
    _e("mJDJ", -6, 2, 4, f_mJDJ, "-J Delta J"),
    _e("WP2", -6, 4, 2, f_WP2, "W.P^2"),
    _e("JW2", -6, 4, 2, f_JW2, "J|W|^2"),
    _e("L1", -6, 5, 2, f_L1, "W_ij^kl W_kl^st W_st^ij", **_CVI, **_PWC),
    _e("L2", -6, 5, 2, f_L2, "W_i^k_j^l W_k^s_l^t W_s^i_t^j", **_CVI, **_PWC),
    _e("L3", -6, 5, 4, f_L3, "pointwise conformal invariant with Delta|W|^2", **_CVI, **_PWC),
    _e("mDJ2", -6, 2, 4, f_mDJ2, "-Delta J^2"),
    _e("mDP2", -6, 3, 4, f_mDP2, "-Delta |P|^2"),
    _e("mDW2", -6, 4, 4, f_mDW2, "-Delta |W|^2"),
    _e("divPdJ", -6, 3, 4, f_divPdJ, "delta(P(nabla J))"),
    _e("divCP", -6, 3, 4, f_divCP, "nabla^k (C_skt P^st)"),
    _e("divWC", -6, 4, 4, f_divWC, "nabla^l (W_ijkl C^ijk)"),
    _e("D2J", -6, 2, 6, f_D2J, "Delta^2 J"),
]

REGISTRY: dict[str, InvariantEntry] = {}
for _entry in CVI_ENTRIES + HELPER_ENTRIES + BASIS6_ENTRIES:
    REGISTRY.setdefault(_entry.id, _entry)

ALIASES = {
    "σ2": "sigma2", "σ₂": "sigma2", "Q₄": "Q4", "Q₆": "Q6", "v₃": "v3",
    "|W|^2": "W2", "|W|²": "W2", "I₁": "I1", "I₂": "I2", "K₁": "K1", "K₂": "K2",
    "K₃": "K3", "L₁": "L1", "L₂": "L2", "L₃": "L3",
}

CVI_IDS = tuple(e.id for e in CVI_ENTRIES)
BASIS6_IDS = tuple(e.id for e in BASIS6_ENTRIES)


def get(id: str) -> InvariantEntry:
    key = ALIASES.get(id, id)
    try:
        return REGISTRY[key]
    except KeyError:
        raise UnknownInvariantError(f"unknown invariant {id!r}") from None


def catalog_table() -> list[dict]:
    rows = []
    for e in CVI_ENTRIES + HELPER_ENTRIES + [b for b in BASIS6_ENTRIES if b.id not in CVI_IDS]:
        rows.append(
            {
                "id": e.id,
                "weight": e.weight,
                "min_dim": e.min_dim,
                "order": e.order,
                "cvi": e.is_cvi,
                "pointwise_conformal": e.is_pointwise_conformal,
                "constant_at_einstein": e.constant_at_einstein,
                "einstein_polynomial": e.has_einstein_operator_polynomial,
                "description": e.description,
            }
        )
    return rows


# ---------------------------------------------------------------- evaluation

def _frame(chart: Chart, points, order: int) -> CurvatureFrame:
    return curvature_frame(chart, points, metric_order=order)


def eval_invariant(id: str, chart: Chart, point) -> np.ndarray | float:
    """Pointwise value of a catalog invariant; vectorized over rows of ``point``."""
    entry = get(id)
    entry.check_dim(chart.n)
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    fr = _frame(chart, np.atleast_2d(pts), entry.order)
    out = entry.evaluate(fr).value
    return float(out[0]) if single else out


def eval_many(ids, chart: Chart, points) -> dict[str, np.ndarray]:
    """Several invariants sharing one frame per batch."""
    entries = [get(i) for i in ids]
    for e in entries:
        e.check_dim(chart.n)
    order = max(e.order for e in entries)
    fr = _frame(chart, np.atleast_2d(points), order)
    return {e.id: e.evaluate(fr).value for e in entries}


def eval_riem_basis6(chart: Chart, point) -> np.ndarray:
    """The 17 weight -6 basis values, in the fixed order of :data:`BASIS6_IDS`."""
    if chart.n < 5:
        raise DimensionError("the weight -6 basis needs n >= 5")
    pts = np.asarray(point, dtype=float)
    vals = eval_many(BASIS6_IDS, chart, np.atleast_2d(pts))
    out = np.stack([vals[i] for i in BASIS6_IDS], axis=-1)
    return out[0] if pts.ndim == 1 else out


def homogeneity_check(id: str, chart: Chart, c: float, points=None) -> float:
    """``max |L(c^2 g) - c^(-2k) L(g)|`` relative to the largest value over sample points."""
    if c <= 0:
        raise ValueError("c must be positive")
    entry = get(id)
    if points is None:
        points = chart.sample_points(8, seed=0)
    base = np.atleast_1d(eval_invariant(id, chart, points))
    scaled = np.atleast_1d(eval_invariant(id, chart.scaled(c), points))
    expect = c ** (entry.weight) * base
    ref = max(float(np.max(np.abs(expect))), float(np.max(np.abs(scaled))))
    diff = float(np.max(np.abs(scaled - expect)))
    return 0.0 if diff == 0.0 else diff / max(ref, 1e-300)
