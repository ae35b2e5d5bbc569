"""Discrete static shakedown (lower bound) on small plane-stress instances.

Find the largest load factor alpha for which a residual stress field rho
exists with C rho = 0 and von_mises(alpha * sigma_E[i, k] + rho[i]) <= sigma_Y[i]
at every Gauss point i and load vertex k. Feasibility of a fixed alpha is
decided by cyclic projections; alpha is bracketed by doubling and refined by
bisection. ``brute_force_factor`` is an exhaustive grid oracle for tiny,
decoupled instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import null_space

from . import _kernels
from .core import ContractError, SimResNetError

# von_mises(s)**2 == s @ VM_FORM @ s for plane-stress Voigt s = (sxx, syy, txy)
VM_FORM = np.array([[1.0, -0.5, 0.0], [-0.5, 1.0, 0.0], [0.0, 0.0, 3.0]])
_Q, _V = np.linalg.eigh(VM_FORM)
# half-widths of the unit von Mises ellipse along sxx, syy, txy
_HALF_WIDTH = np.sqrt(np.diag(np.linalg.inv(VM_FORM)))


class ShakedownError(SimResNetError, ValueError):
    pass


class UnboundedError(ShakedownError):
    """No finite load factor exists (e.g. all elastic stresses vanish)."""


class OracleScopeError(ShakedownError):
    """Instance too large or too coupled for the brute-force oracle."""


def von_mises(s) -> np.ndarray | float:
    """Plane-stress equivalent stress of (..., 3) arrays of (sxx, syy, txy)."""
    s = np.asarray(s, dtype=float)
    sxx, syy, txy = s[..., 0], s[..., 1], s[..., 2]
    out = np.sqrt(sxx * sxx - sxx * syy + syy * syy + 3.0 * txy * txy)
    return float(out) if out.ndim == 0 else out


def yield_function(s, sigma_y):
    return von_mises(s) - sigma_y


@dataclass(frozen=True, eq=False)
class GaussPointData:
    elastic_stress: np.ndarray  # (NV, 3), one row per load vertex
    sigma_y: float

    def __post_init__(self):
        s = np.array(self.elastic_stress, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 1:
            raise ContractError(f"elastic stresses must have shape (NV, 3), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ContractError("elastic stresses must be finite")
        if not (math.isfinite(self.sigma_y) and self.sigma_y > 0):
            raise ContractError("yield strength must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "elastic_stress", s)
        object.__setattr__(self, "sigma_y", float(self.sigma_y))


@dataclass(frozen=True, eq=False)
class EquilibriumOperator:
    """Rows of the discrete equilibrium constraint acting on stacked residuals.

    The matrix has 3*NG columns; zero rows means unconstrained residuals.
    """

    matrix: np.ndarray
    n_points: int

    def __post_init__(self):
        n = int(self.n_points)
        c = np.array(self.matrix, dtype=float)
        if c.size == 0:
            c = c.reshape(0, 3 * n)
        if n < 1 or c.ndim != 2 or c.shape[1] != 3 * n:
            raise ContractError(f"equilibrium matrix needs 3*NG = {3 * n} columns, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ContractError("equilibrium matrix must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "matrix", c)
        object.__setattr__(self, "n_points", n)

    @classmethod
    def free(cls, n_points: int) -> "EquilibriumOperator":
        return cls(np.zeros((0, 3 * n_points)), n_points)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def projector(self) -> np.ndarray | None:
        """Orthogonal projector onto the null space; None when unconstrained."""
        if self.rows == 0 or not np.any(self.matrix):
            return None
        z = null_space(self.matrix)
        return z @ z.T

    def residual(self, rho) -> float:
        if self.rows == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix @ np.ravel(rho))))


@dataclass(frozen=True, eq=False)
class ShakedownInstance:
    points: tuple
    equilibrium: EquilibriumOperator = field(default=None)

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise ContractError("an instance needs at least one Gauss point")
        nv = {p.elastic_stress.shape[0] for p in pts}
        if len(nv) != 1:
            raise ContractError("all Gauss points must share the same number of load vertices")
        eq = self.equilibrium if self.equilibrium is not None else EquilibriumOperator.free(len(pts))
        if eq.matrix.shape[1] != 3 * len(pts):
            raise ContractError(
                f"equilibrium matrix has {eq.matrix.shape[1]} columns, expected {3 * len(pts)}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "equilibrium", eq)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_vertices(self) -> int:
        return self.points[0].elastic_stress.shape[0]

    @cached_property
    def sigma_e(self) -> np.ndarray:
        return np.stack([p.elastic_stress for p in self.points])  # (NG, NV, 3)

    @cached_property
    def sigma_y(self) -> np.ndarray:
        return np.array([p.sigma_y for p in self.points])

    def scaled(self, c: float) -> "ShakedownInstance":
        pts = tuple(GaussPointData(c * p.elastic_stress, p.sigma_y) for p in self.points)
        return ShakedownInstance(pts, self.equilibrium)


class ShakedownResult(NamedTuple):
    alpha: float
    residual: np.ndarray  # (NG, 3)


# ---------------------------------------------------------------------------
# projections


def project_onto_ellipsoid(u, radius) -> np.ndarray:
    """Euclidean projection of rows of ``u`` onto {v : v Q v <= radius**2}.

    In the eigenbasis of Q the projection is y / (1 + mu q) with the
    multiplier mu >= 0 solving sum q y^2 / (1 + mu q)^2 = radius^2; that
    equation is solved by safeguarded Newton on 1/sqrt(sum) - 1/radius.
    """
    single = np.ndim(u) == 1
    u = np.atleast_2d(np.asarray(u, dtype=float))
    r = np.broadcast_to(np.asarray(radius, dtype=float), u.shape[:1])
    y = u @ _V
    outside = (_Q * y * y).sum(axis=1) > r * r
    out = u.copy()
    if not np.any(outside):
        return out[0] if single else out
    y = y[outside]
    rr = r[outside]
    lo = np.zeros(len(y))
    hi = np.sqrt((y * y).sum(axis=1) / _Q.min()) / rr
    mu = lo.copy()
    for _ in range(200):
        den = 1.0 + mu[:, None] * _Q
        s = (_Q * y * y / den**2).sum(axis=1)
        ds = (-2.0 * _Q**2 * y * y / den**3).sum(axis=1)
        g = 1.0 / np.sqrt(s) - 1.0 / rr
        lo = np.where(g < 0, mu, lo)
        hi = np.where(g >= 0, mu, hi)
        dg = -0.5 * s**-1.5 * ds
        with np.errstate(divide="ignore", invalid="ignore"):
            step = mu - g / dg
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        step = np.where(bad, 0.5 * (lo + hi), step)
        done = np.abs(step - mu) <= 1e-15 * (1.0 + mu)
        mu = step
        if np.all(done):
            break
    out[outside] = (y / (1.0 + mu[:, None] * _Q)) @ _V.T
    return out[0] if single else out


def check_certificate(inst: ShakedownInstance, alpha: float, rho, tol: float) -> dict:
    """Re-check both constraint families directly from the instance data."""
    rho = np.asarray(rho, dtype=float).reshape(inst.n_points, 3)
    eq = inst.equilibrium.residual(rho)
    total = alpha * inst.sigma_e + rho[:, None, :]
    excess = float(np.max(von_mises(total) - inst.sigma_y[:, None]))
    return {
        "alpha": float(alpha),
        "equilibrium_residual": eq,
        "max_yield_excess": excess,
        "tol": float(tol),
        "ok": bool(eq <= tol and excess <= tol),
    }


def _default_tol(inst: ShakedownInstance) -> float:
    return 1e-6 * float(inst.sigma_y.max())


def feasible(
    inst: ShakedownInstance,
    alpha: float,
    tol: float | None = None,
    max_iter: int = 10_000,
    start=None,
    margin: float = 0.0,
) -> np.ndarray | None:
    """Residual field (NG, 3) certifying ``alpha``, or None if none was found.

    Cyclic projections: every vertex ellipsoid at every point (points in
    parallel), then the equilibrium null space. The loop also stops once a
    sweep moves the iterate by less than tol/1000 while constraints remain
    violated, which is how it settles on the limit cycle of an empty
    intersection.

    With ``margin`` > 0 the projections target yield radii shrunk to
    ``(1 - margin) * sigma_Y`` while the acceptance test keeps the full
    radius. Iterates then enter the true feasible set after finitely many
    sweeps instead of approaching its boundary asymptotically; the price is
    that alphas above ``(1 - margin)`` times the optimum may be rejected.
    """
    if alpha < 0:
        raise ContractError("alpha must be non-negative")
    tol = _default_tol(inst) if tol is None else float(tol)
    if not tol > 0:
        raise ContractError("tol must be positive")
    ng = inst.n_points
    if alpha == 0:
        return np.zeros((ng, 3))
    proj = inst.equilibrium.projector
    shifts = alpha * inst.sigma_e  # (NG, NV, 3)
    rho = np.zeros((ng, 3)) if start is None else np.array(start, dtype=float).reshape(ng, 3)
    if proj is not None:
        rho = (proj @ rho.ravel()).reshape(ng, 3)
    ok = _kernels.cyclic_projections(
        shifts,
        inst.sigma_y,
        inst.sigma_y * (1.0 - margin),
        proj if proj is not None else np.zeros((0, 0)),
        proj is not None,
        inst.equilibrium.matrix,
        rho,
        tol,
        int(max_iter),
        _Q,
        _V,
    )
    return rho if ok else None


def elastic_limit(inst: ShakedownInstance) -> float:
    """Largest alpha feasible with rho = 0."""
    vm = von_mises(inst.sigma_e).max(axis=1)
    active = vm > 0
    if not np.any(active):
        raise UnboundedError("all elastic stresses vanish; the load factor is unbounded")
    return float(np.min(inst.sigma_y[active] / vm[active]))


def range_bound(inst: ShakedownInstance) -> float:
    """Alternating-plasticity upper bound 2 sigma_Y / max_kl vm(sE_k - sE_l); inf if vacuous."""
    s = inst.sigma_e
    diff = von_mises(s[:, :, None, :] - s[:, None, :, :]).reshape(inst.n_points, -1).max(axis=1)
    active = diff > 0
    if not np.any(active):
        return math.inf
    return float(np.min(2.0 * inst.sigma_y[active] / diff[active]))


def shakedown_factor(
    inst: ShakedownInstance,
    tol_bisect: float = 1e-3,
    tol_feas: float | None = None,
    max_iter: int = 10_000,
) -> ShakedownResult:
    """Largest certified load factor and its residual field.

    ``tol_bisect`` is relative: the returned alpha is feasible and the
    smallest alpha found infeasible lies within ``tol_bisect * alpha``.
    Feasibility checks run with a projection margin of tol_bisect / 4.
    """
    tol_feas = _default_tol(inst) if tol_feas is None else tol_feas
    margin = 0.25 * tol_bisect
    lo = elastic_limit(inst)
    cert = np.zeros((inst.n_points, 3))
    upper = range_bound(inst)
    hi = None
    while hi is None:
        trial = 2.0 * lo
        if trial >= upper:
            r = feasible(inst, upper, tol_feas, max_iter, start=cert, margin=margin)
            if r is not None:
                return ShakedownResult(upper, r)
            hi = upper
            break
        r = feasible(inst, trial, tol_feas, max_iter, start=cert, margin=margin)
        if r is None:
            hi = trial
        else:
            lo, cert = trial, r
            if lo > 2.0**60 * elastic_limit(inst):
                raise UnboundedError("load factor keeps doubling; instance looks unbounded")
    while hi - lo > tol_bisect * lo:
        mid = 0.5 * (lo + hi)
        r = feasible(inst, mid, tol_feas, max_iter, start=cert, margin=margin)
        if r is None:
            hi = mid
        else:
            lo, cert = mid, r
        # nested feasible sets: every certified alpha sits below every rejected one
        assert lo < hi
    return ShakedownResult(lo, cert)


# ---------------------------------------------------------------------------
# brute-force oracle


def _forced_components(inst: ShakedownInstance) -> np.ndarray:
    """Boolean (NG, 3) mask of residual components pinned to zero."""
    c = inst.equilibrium.matrix
    forced = np.zeros(3 * inst.n_points, dtype=bool)
    for row in c:
        nz = np.flatnonzero(row)
        if len(nz) > 1:
            raise OracleScopeError("oracle needs an empty or diagonal equilibrium operator")
        if len(nz) == 1:
            forced[nz[0]] = True
    return forced.reshape(inst.n_points, 3)


def _single_vertex_limit(sig, sigma_y, free) -> float:
    # max alpha with min over free rho of vm(alpha sig + rho) <= sigma_y
    fixed = ~free
    if not np.any(sig[fixed]):
        # the free residual components can cancel the whole stress
        return math.inf
    qff = VM_FORM[np.ix_(free, free)]
    qfx = VM_FORM[np.ix_(free, fixed)]
    qxx = VM_FORM[np.ix_(fixed, fixed)]
    sx = sig[fixed]
    # minimize over free part: r = -qff^-1 qfx sx (rho absorbs the free part of sig)
    if free.any():
        m = qxx - qfx.T @ np.linalg.solve(qff, qfx)
    else:
        m = qxx
    val = float(sx @ m @ sx)
    if val <= 0:
        return math.inf
    return sigma_y / math.sqrt(val)


def _point_oracle(sig, sigma_y, forced, grid_step) -> float:
    nv = sig.shape[0]
    free = ~forced
    distinct = [sig[0]] + [s for s in sig[1:] if not np.array_equal(s, sig[0])]
    if len(distinct) == 1:
        return _single_vertex_limit(sig[0], sigma_y, free)
    if not np.any(sig):
        return math.inf
    a_max = 2.0 * sigma_y / von_mises(distinct[1] - distinct[0])
    if not free.any():
        return min(sigma_y / von_mises(s) for s in sig if np.any(s))
    h = grid_step * sigma_y
    axes = []
    for c in np.flatnonzero(free):
        reach = -a_max * sig[0, c]
        lo = min(0.0, reach) - sigma_y * _HALF_WIDTH[c]
        hi = max(0.0, reach) + sigma_y * _HALF_WIDTH[c]
        axes.append(lo + h * np.arange(int(math.ceil((hi - lo) / h)) + 1))
    best = -math.inf
    # chunk over the first free axis to bound memory
    for first in np.array_split(axes[0], max(1, len(axes[0]) // 16)):
        mesh = np.meshgrid(first, *axes[1:], indexing="ij")
        rho = np.zeros(mesh[0].shape + (3,))
        for slot, c in enumerate(np.flatnonzero(free)):
            rho[..., c] = mesh[slot]
        rho = rho.reshape(-1, 3)
        lo_a = np.zeros(len(rho))
        hi_a = np.full(len(rho), a_max)
        for k in range(nv):
            s = sig[k]
            a = s @ VM_FORM @ s
            b = rho @ VM_FORM @ s
            c0 = np.einsum("ij,jk,ik->i", rho, VM_FORM, rho) - sigma_y**2
            if a == 0:
                hi_a = np.where(c0 <= 0, hi_a, -math.inf)
                continue
            disc = b * b - a * c0
            root = np.sqrt(np.maximum(disc, 0.0))
            lo_a = np.maximum(lo_a, (-b - root) / a)
            hi_a = np.minimum(hi_a, np.where(disc >= 0, (-b + root) / a, -math.inf))
        ok = hi_a >= lo_a
        if np.any(ok):
            best = max(best, float(hi_a[ok].max()))
    return best


def brute_force_factor(inst: ShakedownInstance, grid_step: float = 0.02) -> float:
    """Exhaustive oracle: grid the free residual components, solve for alpha exactly.

    The residual grid spacing at point i is ``grid_step * sigma_Y[i]``. For
    each grid residual the largest admissible alpha follows in closed form
    from the vertex quadratics; the result never exceeds the true factor and
    undershoots it by at most a relative ``grid_step``. Scope: NG <= 2,
    NV <= 2 and an empty or diagonal equilibrium operator, under which the
    points decouple.
    """
    if inst.n_points > 2 or inst.n_vertices > 2:
        raise OracleScopeError("oracle handles at most 2 Gauss points and 2 load vertices")
    if not grid_step > 0:
        raise ContractError("grid_step must be positive")
    forced = _forced_components(inst)
    if not np.any(inst.sigma_e):
        raise UnboundedError("all elastic stresses vanish; the load factor is unbounded")
    limits = [
        _point_oracle(inst.sigma_e[i], inst.sigma_y[i], forced[i], grid_step)
        for i in range(inst.n_points)
    ]
    alpha = min(limits)
    if math.isinf(alpha):
        raise UnboundedError("no point constrains the load factor")
    return alpha


# ---------------------------------------------------------------------------
# files


def instance_from_dict(data: dict) -> ShakedownInstance:
    try:
        points = tuple(
            GaussPointData(np.array(p["sigma_e"], dtype=float), float(p["sigma_y"]))
            for p in data["points"]
        )
        eq = data.get("equilibrium") or {}
        rows = eq.get("rows", [])
        count = int(eq.get("count", len(rows)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ShakedownError(f"malformed instance: {exc}") from None
    if count != len(rows):
        raise ShakedownError(f"equilibrium count {count} != number of rows {len(rows)}")
    try:
        matrix = np.array(rows, dtype=float).reshape(len(rows), 3 * len(points))
        return ShakedownInstance(points, EquilibriumOperator(matrix, len(points)))
    except ValueError as exc:
        raise ShakedownError(f"malformed instance: {exc}") from None


def instance_to_dict(inst: ShakedownInstance) -> dict:
    return {
        "points": [
            {"sigma_e": p.elastic_stress.tolist(), "sigma_y": p.sigma_y} for p in inst.points
        ],
        "equilibrium": {
            "rows": inst.equilibrium.matrix.tolist(),
            "count": inst.equilibrium.rows,
        },
    }


def load_instance(path) -> ShakedownInstance:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ShakedownError(f"{path}: invalid JSON ({exc})") from None
    return instance_from_dict(data)


def solution_to_dict(inst: ShakedownInstance, result: ShakedownResult, tol_feas: float) -> dict:
    return {
        "alpha": result.alpha,
        "residual": np.asarray(result.residual).tolist(),
        "feasibility_report": check_certificate(inst, result.alpha, result.residual, tol_feas),
    }


def uniaxial_instance(
    stress: float, sigma_y: float, vertices: Sequence[float] = (0.0, 1.0), forced_zero: bool = False
) -> ShakedownInstance:
    """One Gauss point loaded by multiples of a uniaxial stress (e.g. a pulsating 0 -> stress load)."""
    sig = np.array([[v * stress, 0.0, 0.0] for v in vertices])
    eq = EquilibriumOperator(np.eye(3), 1) if forced_zero else EquilibriumOperator.free(1)
    return ShakedownInstance((GaussPointData(sig, sigma_y),), eq)
