"""Numerical toric-Kaehler substrate.

Everything numeric lives downstream of three ingredients built here:

  * the Guillemin symplectic potential of a Delzant polytope and its
    exact Hessian field,
  * deterministic quadrature grids with geometric collar grading (the
    transported volume forms concentrate mass in an exp(-2*tau) collar
    near the boundary, so the grading depth is coupled to the largest
    tau the grid will serve rather than to a fixed shrink factor),
  * a vectorized damped Newton solver for the Legendre transport
    x -> x_tau defined by grad u_tau(x_tau) = grad u_0(x).

Scalar curvature uses Abreu's expression with fourth-order central
differences of the inverse-Hessian field and the calibration constant
kappa = 1/2, fixed so that the mean curvature equals n times the slope
(checked for interval, square, simplex).  The reference Ricci data is
the xi-Hessian of half the log-determinant of the potential Hessian,
computed through the moment-coordinate chain rule; with this pairing
the pointwise identity S = n * MD(ricci, G^(n-1)) / det G holds against
the same grids (tested), which is what makes the two Mabuchi evaluation
routes in the functionals module agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NewtonDivergence, NonDelzant
from .plconfig import PLConvexFn, ToricTestConfig
from .polytope import Polytope, volume_data

KAPPA = 0.5
_SLACK_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class SymplecticPotential:
    """Guillemin potential u = (1/2) sum ell_k log ell_k (zero correction)."""

    base: Polytope
    normals: np.ndarray
    offsets: np.ndarray

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def slacks(self, pts: np.ndarray) -> np.ndarray:
        return np.maximum(self.offsets[None, :] - pts @ self.normals.T,
                          _SLACK_FLOOR)

    def value(self, pts: np.ndarray) -> np.ndarray:
        ell = self.slacks(pts)
        return 0.5 * np.sum(ell * np.log(ell), axis=1)

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        ell = self.slacks(pts)
        return -0.5 * (np.log(ell) + 1.0) @ self.normals

    def hessian(self, pts: np.ndarray) -> np.ndarray:
        ell = self.slacks(pts)
        outer = self.normals[:, :, None] * self.normals[:, None, :]
        return 0.5 * np.einsum("nk,kij->nij", 1.0 / ell, outer)

    def slack_gradient_bound(self) -> float:
        """max_k ||nu_k||_1, used to size interior finite-difference steps."""
        return float(np.abs(self.normals).sum(axis=1).max())


def guillemin_potential(base: Polytope) -> SymplecticPotential:
    if not base.is_delzant:
        raise NonDelzant("Guillemin potential needs a Delzant polytope")
    normals = np.array([[float(c) for c in h.normal] for h in base.halfspaces])
    offsets = np.array([float(h.offset) for h in base.halfspaces])
    return SymplecticPotential(base=base, normals=normals, offsets=offsets)


@dataclass(frozen=True)
class SmoothedPL:
    """Log-sum-exp mollification of a convex PL function (numpy side)."""

    grads: np.ndarray
    consts: np.ndarray
    beta: float

    @staticmethod
    def from_fn(g: PLConvexFn, beta: float) -> "SmoothedPL":
        grads = np.array([[float(c) for c in p.gradient] for p in g.pieces])
        consts = np.array([float(p.constant) for p in g.pieces])
        return SmoothedPL(grads=grads, consts=consts, beta=float(beta))

    @property
    def exact(self) -> bool:
        return len(self.consts) == 1

    def _fields(self, pts):
        vals = pts @ self.grads.T + self.consts[None, :]
        top = vals.max(axis=1, keepdims=True)
        w = np.exp(self.beta * (vals - top))
        z = w.sum(axis=1, keepdims=True)
        return vals, top, w / z

    def value(self, pts: np.ndarray) -> np.ndarray:
        vals, top, w = self._fields(pts)
        # log-sum-exp written against the max for stability
        return top[:, 0] + np.log(
            np.exp(self.beta * (vals - top)).sum(axis=1)) / self.beta

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        _, _, w = self._fields(pts)
        return w @ self.grads

    def hessian(self, pts: np.ndarray) -> np.ndarray:
        if self.exact:
            n = self.grads.shape[1]
            return np.zeros((len(pts), n, n))
        _, _, w = self._fields(pts)
        mean = w @ self.grads
        sq = np.einsum("nk,ki,kj->nij", w, self.grads, self.grads)
        return self.beta * (sq - mean[:, :, None] * mean[:, None, :])


@dataclass(frozen=True)
class ShiftedPotential:
    """u_s = u0 + s * g_beta along a ray; same vectorized interface."""

    u0: SymplecticPotential
    smooth: SmoothedPL
    s: float

    @property
    def dim(self) -> int:
        return self.u0.dim

    def slacks(self, pts):
        return self.u0.slacks(pts)

    def value(self, pts):
        return self.u0.value(pts) + self.s * self.smooth.value(pts)

    def gradient(self, pts):
        return self.u0.gradient(pts) + self.s * self.smooth.gradient(pts)

    def hessian(self, pts):
        return self.u0.hessian(pts) + self.s * self.smooth.hessian(pts)

    def slack_gradient_bound(self):
        return self.u0.slack_gradient_bound()


# ---------------------------------------------------------------------------
# quadrature grids


@dataclass(frozen=True)
class Grid:
    points: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        return float(values @ self.weights)

    @property
    def size(self) -> int:
        return len(self.weights)


def collar_depth_for(tau_max: float) -> int:
    """Dyadic grading depth resolving the exp(-2 tau) boundary collar.

    Capped at 46: beyond 2^-46 the nodes near a facet with unit-scale
    offset are no longer faithfully representable in float64, so deeper
    panels would quantize onto the boundary.  Integrals weighted by the
    transported volume form are therefore evaluated in transported
    coordinates (see the functionals module), where the collar tail
    carries only O(2^-46) mass regardless of tau.
    """
    return min(46, max(12, math.ceil((2.0 * float(tau_max) + 14.0)
                                     / math.log(2.0))))


def _gauss_panel(a: float, b: float, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _graded_breaks(depth: int):
    """Dyadic breakpoints of [0,1] accumulating at both endpoints."""
    left = [0.5 ** k for k in range(depth, 1, -1)]
    right = [1.0 - 0.5 ** k for k in range(2, depth + 1)]
    return [0.0] + left + [0.5] + right + [1.0]


def _panel_nodes(breaks, bulk_order, graded_order, bulk_lo, bulk_hi):
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        order = bulk_order if (a >= bulk_lo and b <= bulk_hi) else graded_order
        x, w = _gauss_panel(a, b, order)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def line_grid(base: Polytope, depth: int, creases=(), bulk_order: int = 16,
              graded_order: int = 8, crease_depth: int = 8) -> Grid:
    """Graded Gauss panels on an interval, refined at supplied crease points.

    Around each crease the panels grade dyadically from a 0.08-wide
    window down to 0.08 * 2^-crease_depth.  Transported-coordinate
    integrands sweep across a kink of g on a scale ~ 1/(beta * tau), so
    callers size crease_depth from the smoothing schedule; the fixed
    window is enough for the curvature spike itself, whose width is
    ~ 1/beta with only the amplitude growing along the ray.
    """
    a = float(base.vertices[0][0])
    b = float(base.vertices[-1][0])
    span = b - a
    breaks = set(_graded_breaks(depth))
    ladder = [0.0] + [0.08 * 0.5 ** k for k in range(crease_depth + 1)]
    for c in creases:
        t = (float(c) - a) / span
        for off in ladder:
            for s in (-1.0, 1.0):
                if 1e-9 < t + s * off < 1 - 1e-9:
                    breaks.add(t + s * off)
    bs = sorted(breaks)
    merged = [bs[0]]
    for t in bs[1:]:
        if t - merged[-1] > 1e-14:
            merged.append(t)
    x, w = _panel_nodes(merged, bulk_order, graded_order, 0.25, 0.75)
    return Grid(points=(a + span * x)[:, None], weights=span * w)


def fan_grid(base: Polytope, depth: int, bulk_order: int = 12,
             graded_order: int = 4) -> Grid:
    """Barycentric fan over the facets with dyadic grading.

    Each facet spans a triangle (barycenter, v_i, v_j) parametrized by
    radial t and along-edge s; both parameters are graded dyadically so
    the collar and the corners are resolved to depth 2^-depth.
    """
    vd = volume_data(base)
    bary = np.array([float(c) for c in vd.barycenter])
    t_breaks = [0.0, 0.25, 0.5] + [1.0 - 0.5 ** k for k in range(1, depth + 1)] + [1.0]
    t_breaks = sorted(set(t_breaks))
    s_breaks = _graded_breaks(depth)
    tx, tw = _panel_nodes(t_breaks, bulk_order, graded_order, 0.0, 0.5)
    sx, sw = _panel_nodes(s_breaks, bulk_order, graded_order, 0.25, 0.75)

    pts_all, w_all = [], []
    for k, h in enumerate(base.halfspaces):
        vi, vj = sorted(base.facet_vertices[k])[:2]
        A = np.array([float(c) for c in base.vertices[vi]]) - bary
        B = np.array([float(c) for c in base.vertices[vj]]) - bary
        det = abs(A[0] * B[1] - A[1] * B[0])
        edge = (1 - sx)[:, None] * A[None, :] + sx[:, None] * B[None, :]
        pts = bary[None, None, :] + tx[:, None, None] * edge[None, :, :]
        wgt = (tw[:, None] * sw[None, :]) * tx[:, None] * det
        pts_all.append(pts.reshape(-1, 2))
        w_all.append(wgt.reshape(-1))
    return Grid(points=np.concatenate(pts_all), weights=np.concatenate(w_all))


def build_grid(base: Polytope, depth: int, creases=(), **orders) -> Grid:
    if base.dim == 1:
        return line_grid(base, depth, creases=creases, **orders)
    if base.dim == 2:
        return fan_grid(base, depth, **orders)
    raise NonDelzant("analysis grids implemented for dimensions 1 and 2")


def bulk_grid(base: Polytope, creases=(), crease_depth: int = 8) -> Grid:
    """Coarse interior grid for curvature quadrature (no deep collar).

    Crease refinement matters here: the scalar curvature of a smoothed
    potential has a spike of width ~1/beta at each kink of g, and the
    split panels keep plain Gauss panels from averaging over it.
    """
    if base.dim == 1:
        return line_grid(base, depth=8, creases=creases,
                         bulk_order=16, graded_order=10,
                         crease_depth=crease_depth)
    return fan_grid(base, depth=8, bulk_order=16, graded_order=6)


def crease_points(g: PLConvexFn):
    """Interior crease abscissae of a one-dimensional PL function."""
    if g.domain.dim != 1:
        return ()
    ends = {v[0] for v in g.domain.vertices}
    out = set()
    for sub in g.regions():
        for v in sub.vertices:
            if v[0] not in ends:
                out.add(v[0])
    return tuple(sorted(out))


def crease_ladder_depth(beta: float, tau_max: float) -> int:
    """Crease grading depth resolving features of scale 1/(beta*tau)."""
    need = 0.32 * max(float(beta), 1.0) * max(float(tau_max), 1.0)
    return min(22, max(8, math.ceil(math.log2(need))))


# ---------------------------------------------------------------------------
# vectorized damped Newton for the Legendre transport


def _solve_small(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    if n == 1:
        return rhs / H[:, :, 0]
    if n == 2:
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        out = np.empty_like(rhs)
        out[:, 0] = (H[:, 1, 1] * rhs[:, 0] - H[:, 0, 1] * rhs[:, 1]) / det
        out[:, 1] = (H[:, 0, 0] * rhs[:, 1] - H[:, 1, 0] * rhs[:, 0]) / det
        return out
    return np.linalg.solve(H, rhs)


def _inv_small(H: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    if n == 1:
        return 1.0 / H
    if n == 2:
        det = (H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0])[:, None, None]
        adj = np.empty_like(H)
        adj[:, 0, 0], adj[:, 1, 1] = H[:, 1, 1], H[:, 0, 0]
        adj[:, 0, 1], adj[:, 1, 0] = -H[:, 0, 1], -H[:, 1, 0]
        return adj / det
    return np.linalg.inv(H)


def _logdet_small(H: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    if n == 1:
        return np.log(H[:, 0, 0])
    if n == 2:
        return np.log(H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0])
    return np.linalg.slogdet(H)[1]


def newton_transport(potential, targets: np.ndarray, start: np.ndarray,
                     tol: float = 1e-11, max_iter: int = 80) -> np.ndarray:
    """Solve grad(potential)(z) = target per row, staying strictly interior.

    Damping: steps are clipped against the facet slacks (never consume
    more than 85% of the distance to the boundary) and halved until the
    residual decreases.

    Saturation is judged per coordinate, in two forms.  A residual
    component below hessian * ulp cannot be improved by any
    representable move; and a component that stayed bitwise identical
    through a damped step without improving sits on the last float
    before a facet, however large its residual reads.  Either way the
    component is dropped from the convergence norm.  The test has to be
    componentwise: a node pressed against one facet may still owe real
    progress along the other axis, and a per-node test would either
    stall it or retire it early.
    """
    z = start.copy()
    normals = potential.u0.normals if isinstance(potential, ShiftedPotential) \
        else potential.normals
    scale = 1.0 + np.abs(targets).max()
    res = potential.gradient(z) - targets
    done = np.zeros(len(z), dtype=bool)
    frozen = np.zeros(z.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.where(~done)[0]
        if len(idx) == 0:
            return z
        za = z[idx]
        raw = res[idx]
        hess = potential.hessian(za)
        ulp = 4.0 * np.spacing(np.abs(za))
        wall = np.einsum("nij,nj->ni", np.abs(hess), ulp)
        live = (np.abs(raw) > tol * scale) & (np.abs(raw) > wall) \
            & ~frozen[idx]
        settled = ~live.any(axis=1)
        if settled.any():
            done[idx[settled]] = True
            keep = ~settled
            idx, za, raw = idx[keep], za[keep], raw[keep]
            hess, live = hess[keep], live[keep]
            if len(idx) == 0:
                return z
        step = -_solve_small(hess, raw)
        # largest multiple of the step keeping every slack positive
        ell = potential.slacks(za)
        drop = step @ normals.T  # slack decrease per unit step
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(drop > 0, ell / drop, np.inf)
        t = np.minimum(1.0, 0.85 * ratios.min(axis=1))
        base_norm = np.where(live, np.abs(raw), 0.0).max(axis=1)
        for _ in range(40):
            cand = za + t[:, None] * step
            cand_res = potential.gradient(cand) - targets[idx]
            cand_norm = np.where(live, np.abs(cand_res), 0.0).max(axis=1)
            good = cand_norm <= base_norm * (1 - 1e-4 * t) + tol * scale
            if good.all():
                break
            t = np.where(good, t, 0.5 * t)
        moved = za + t[:, None] * step
        # rounding may land a nearly saturated node on the facet itself,
        # where the barrier stops being finite; back such rows off
        for _ in range(60):
            inside = potential.slacks(moved).min(axis=1) > 0.0
            if inside.all():
                break
            t = np.where(inside, t, 0.5 * t)
            moved = za + t[:, None] * step
        new_res = potential.gradient(moved) - targets[idx]
        stuck = moved == za
        pinned = live & stuck & (np.abs(new_res) >= np.abs(raw) * (1 - 1e-6))
        frozen[idx] = stuck & (frozen[idx] | pinned)
        z[idx] = moved
        res[idx] = new_res
    idx = np.where(~done)[0]
    if len(idx) > 0:
        za = z[idx]
        raw = res[idx]
        ulp = 4.0 * np.spacing(np.abs(za))
        wall = np.einsum("nij,nj->ni", np.abs(potential.hessian(za)), ulp)
        live = (np.abs(raw) > tol * scale) & (np.abs(raw) > wall) \
            & ~frozen[idx]
        done[idx[~live.any(axis=1)]] = True
    bad = int((~done).sum())
    if bad:
        raise NewtonDivergence(
            f"Legendre inversion stalled at {bad} node(s); "
            "grid likely reaches too close to the boundary")
    return z


# ---------------------------------------------------------------------------
# rays and ray states


@dataclass(frozen=True)
class RayState:
    """Per-node data of the degeneration path at one tau.

    phi and phi_dot are recorded at the reference moment coordinates
    (grid points); hessian / inv_hessian are those of u_tau at the
    transported points; log_volume_ratio is log(omega_phi^n / omega^n)
    at the reference node.
    """

    ray: "Ray"
    tau: float
    moved: np.ndarray
    hessian: np.ndarray
    inv_hessian: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray
    log_volume_ratio: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.ray.grid

    def mass_ratio(self) -> float:
        vol = float(volume_data(self.ray.cfg.base).volume)
        return self.grid.integrate(np.exp(self.log_volume_ratio)) / vol


class Ray:
    """Workspace for one smoothing level: cached transports along s."""

    def __init__(self, cfg: ToricTestConfig, beta: float,
                 u0: SymplecticPotential | None = None,
                 grid: Grid | None = None, tau_max: float = 12.0,
                 bulk_order: int | None = None):
        self.cfg = cfg
        self.u0 = u0 if u0 is not None else guillemin_potential(cfg.base)
        self.smooth = SmoothedPL.from_fn(cfg.g, beta)
        if grid is None:
            depth = collar_depth_for(tau_max)
            orders = {} if bulk_order is None else {"bulk_order": bulk_order}
            if cfg.base.dim == 1:
                orders["crease_depth"] = crease_ladder_depth(beta, tau_max)
            grid = build_grid(cfg.base, depth,
                              creases=crease_points(cfg.g), **orders)
        self.grid = grid
        pts = grid.points
        self.h0 = self.u0.hessian(pts)
        self.logdet0 = _logdet_small(self.h0)
        self.xi = self.u0.gradient(pts)
        self.u0_vals = self.u0.value(pts)
        self.g0 = _inv_small(self.h0)
        self.g_vals = self.smooth.value(pts)
        self.g_grad = self.smooth.gradient(pts)
        self.g_hess = self.smooth.hessian(pts)
        self._cache: dict = {}
        self._inv_cache: dict = {}

    def potential(self, s: float) -> ShiftedPotential:
        return ShiftedPotential(self.u0, self.smooth, float(s))

    def transport(self, s: float):
        """(moved points, Hessian at moved, inv, logdet, g_beta at moved)."""
        key = round(float(s), 12)
        if key in self._cache:
            return self._cache[key]
        if key == 0.0:
            moved = self.grid.points.copy()
            out = (moved, self.h0, self.g0, self.logdet0,
                   self.smooth.value(moved))
        else:
            below = [k for k in self._cache if k < key]
            start = self._cache[max(below)][0] if below else self.grid.points
            moved = newton_transport(self.potential(key), self.xi, start)
            hess = self.potential(key).hessian(moved)
            out = (moved, hess, _inv_small(hess), _logdet_small(hess),
                   self.smooth.value(moved))
        self._cache[key] = out
        return out

    def hessian_at_nodes(self, s: float) -> np.ndarray:
        """Hessian of u_s at the grid nodes themselves (no transport)."""
        return self.h0 + float(s) * self.g_hess

    def inverse_transport(self, s: float) -> np.ndarray:
        """Reference point x whose u_s-moment image is each grid node.

        Solves grad u0(x) = grad u_s(y) per node y; the iterates press
        into the boundary collar, where the Newton solver saturates at
        float spacing.  Downstream integrands are slack-stable there.
        """
        key = round(float(s), 12)
        if key in self._inv_cache:
            return self._inv_cache[key]
        if key == 0.0:
            out = self.grid.points.copy()
        else:
            below = [k for k in self._inv_cache if k < key]
            start = self._inv_cache[max(below)].copy() if below \
                else self.grid.points.copy()
            targets = self.xi + key * self.g_grad
            out = newton_transport(self.u0, targets, start)
        self._inv_cache[key] = out
        return out

    def state(self, tau: float) -> RayState:
        moved, hess, inv, logdet, gvals = self.transport(tau)
        pts = self.grid.points
        u_tau_at_moved = self.potential(tau).value(moved)
        phi = ((moved * self.xi).sum(axis=1) - u_tau_at_moved) \
            - ((pts * self.xi).sum(axis=1) - self.u0_vals)
        return RayState(
            ray=self, tau=float(tau), moved=moved, hessian=hess,
            inv_hessian=inv, phi=phi, phi_dot=-gvals,
            log_volume_ratio=self.logdet0 - logdet,
        )

    def point_derivative(self, tau: float, p: np.ndarray) -> float:
        """phi_dot at a single reference point (used by the vertex probe)."""
        target = self.u0.gradient(p[None, :])
        moved = newton_transport(self.potential(tau), target, p[None, :].copy())
        return float(-self.smooth.value(moved)[0])


def ray_state(cfg: ToricTestConfig, u0: SymplecticPotential, tau: float,
              beta: float, **ray_opts) -> RayState:
    """One-shot convenience wrapper around Ray(...).state(tau)."""
    return Ray(cfg, beta=beta, u0=u0, **ray_opts).state(tau)


# ---------------------------------------------------------------------------
# curvature fields


def _fd_steps(potential, pts: np.ndarray) -> np.ndarray:
    ell_min = potential.slacks(pts).min(axis=1)
    diam = float(potential.u0.base.diameter_bound()
                 if isinstance(potential, ShiftedPotential)
                 else potential.base.diameter_bound())
    bound = potential.slack_gradient_bound()
    return np.minimum(1e-3 * diam, 0.15 * ell_min / bound)


_D1 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_D1_OFF = np.array([-2.0, -1.0, 1.0, 2.0])
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D2_OFF = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


def _second_derivative_field(eval_field, pts: np.ndarray, h: np.ndarray,
                             dim: int):
    """4th-order FD Hessian contraction helpers for matrix/scalar fields.

    Returns a dict mapping (j, k) with j <= k to the mixed second
    derivative of the field (same trailing shape as eval_field output).
    """
    out = {}
    for j in range(dim):
        acc = None
        for c, o in zip(_D2, _D2_OFF):
            shifted = pts.copy()
            shifted[:, j] += o * h
            term = eval_field(shifted)
            acc = c * term if acc is None else acc + c * term
        out[(j, j)] = acc / (h ** 2)[(...,) + (None,) * (acc.ndim - 1)]
    for j in range(dim):
        for k in range(j + 1, dim):
            acc = None
            for cj, oj in zip(_D1, _D1_OFF):
                for ck, ok in zip(_D1, _D1_OFF):
                    shifted = pts.copy()
                    shifted[:, j] += oj * h
                    shifted[:, k] += ok * h
                    term = eval_field(shifted)
                    piece = (cj * ck) * term
                    acc = piece if acc is None else acc + piece
            out[(j, k)] = acc / (h ** 2)[(...,) + (None,) * (acc.ndim - 1)]
    return out


def abreu_scalar_curvature(potential, pts: np.ndarray, raw: bool = False,
                           step_cap: float | None = None) -> np.ndarray:
    """Scalar curvature S = -kappa * sum_jk d2(u^{jk})/dx_j dx_k.

    step_cap bounds the finite-difference step; pass ~1/(16*beta) when
    the potential carries a smoothed kink, so the stencil stays inside
    one curvature feature.
    """
    dim = pts.shape[1]
    h = _fd_steps(potential, pts)
    if step_cap is not None:
        h = np.minimum(h, step_cap)

    def inv_hess(z):
        return _inv_small(potential.hessian(z))

    second = _second_derivative_field(inv_hess, pts, h, dim)
    total = np.zeros(len(pts))
    for j in range(dim):
        total += second[(j, j)][:, j, j]
    for j in range(dim):
        for k in range(j + 1, dim):
            total += 2.0 * second[(j, k)][:, j, k]
    return -total if raw else -KAPPA * total


def ricci_reference(u0: SymplecticPotential, pts: np.ndarray) -> np.ndarray:
    """Hessian in moment-dual coordinates of (1/2) log det D2u0.

    All x-derivatives of the Guillemin Hessian are closed-form rational
    expressions in the facet slacks, so the chain rule to dual
    coordinates is assembled exactly; this stays stable arbitrarily
    close to the boundary, which matters because transported quadrature
    nodes reach the float-representability wall there.
    """
    ell = u0.slacks(pts)
    nu = u0.normals
    outer = nu[:, :, None] * nu[:, None, :]
    hess = 0.5 * np.einsum("nk,kij->nij", 1.0 / ell, outer)
    hinv = _inv_small(hess)
    # dH/dx_m = (1/2) sum_k nu nu^T nu_m / ell^2,
    # d2H/dx_l dx_m = sum_k nu nu^T nu_l nu_m / ell^3
    dh = 0.5 * np.einsum("nk,km,kij->nmij", 1.0 / ell ** 2, nu, outer)
    d2h = np.einsum("nk,kl,km,kij->nlmij", 1.0 / ell ** 3, nu, nu, outer)

    # v = log det H: grad_l = tr(Hinv dH_l),
    # hess_lm = tr(Hinv d2H_lm) - tr(Hinv dH_l Hinv dH_m)
    grad = np.einsum("nij,nlji->nl", hinv, dh)
    d2v = np.einsum("nij,nlmji->nlm", hinv, d2h) \
        - np.einsum("nlij,nmji->nlm",
                    np.einsum("nia,nlab->nlib", hinv, dh),
                    np.einsum("nia,nmab->nmib", hinv, dh))

    # dxm[n, m, j] = d/dx_m [ (Hinv grad v)_j ]
    dxm = np.einsum("njl,nlm->nmj", hinv, d2v) \
        - np.einsum("nmjl,nl->nmj",
                    np.einsum("nja,nmab,nbl->nmjl", hinv, dh, hinv), grad)
    a = np.einsum("nkm,nmj->njk", hinv, dxm)
    return 0.25 * (a + a.transpose(0, 2, 1))


def state_csv_rows(state: RayState, curvature: np.ndarray | None = None):
    """Rows (coords..., weight, phi, phi_dot, logdet, S) for trace dumps."""
    pts = state.grid.points
    s_col = curvature if curvature is not None else np.full(len(pts), np.nan)
    for i in range(len(pts)):
        yield (*pts[i], state.grid.weights[i], state.phi[i],
               state.phi_dot[i], state.log_volume_ratio[i], s_col[i])
