"""Limit-slope extrapolation and theorem-level verdicts.

Energy traces converge to their algebraic limits like
``s(tau) = s_inf + transient``.  This module owns the extrapolation
(windowed differences cross-checked by an exponential-decay fit), the
per-theorem verification harness, and the destabilizing-point scan.

Verdict conventions
-------------------
Each check runs in the normalization its exact side expects: DF,
MINNORM and JALPHA in ``min_zero``, POINT in ``average_zero``, AM in
whatever normalization the caller supplies (the shift enters the exact
slope, so it is reported rather than removed).  The smoothing schedule
couples beta to tau (beta = beta0 * tau) so the mollification bias of
piecewise-linear rays vanishes in the limit; affine rays are exact and
share a single transport cache across the whole ladder.

Fixed-point probes
------------------
The POINT check probes just inside a vertex.  A probe at relative depth
delta sits on a plateau of phi_dot until tau ~ -log(delta)/2, after
which it drains toward the minimizing vertex; on the plateau phi_dot
equals minus the vertex height of g above its mean.  The depth is
coupled to the schedule (delta = exp(-2 (tau_max + 4))), which keeps the
plateau exit beyond the last sample at any tau_max.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .analysis import Ray
from .errors import (
    InconsistentInput,
    InsufficientSamples,
    MissingAlpha,
    NonMonotoneTau,
    NotAVertex,
)
from .functionals import energy_report, mabuchi
from .invariants import (
    chow_weight,
    donaldson_futaki,
    minimum_norm,
    twisted_weights,
)
from .plconfig import ToricTestConfig, normalize
from .polytope import Polytope, integrate, volume_data

WINDOW = 4            # trailing intervals feeding the window estimate
MIN_SAMPLES = 6
MIN_TAU_MAX = 8.0
VALUE_MIN_SAMPLES = 4
VALUE_MIN_TAU = 4.0

THEOREMS = ("AM", "DF", "MINNORM", "JALPHA", "POINT")


# -- slope estimation ---------------------------------------------------------


@dataclass(frozen=True)
class SlopeEstimate:
    """Extrapolated tau -> infinity slope (or value) of a trace."""

    value: float
    model: str            # "window_diff" or "exp_fit"
    residual: float
    tau_max: float
    samples_used: int


def _unpack(trace):
    rows = [(float(r[0]), float(r[1])) for r in trace]
    taus = np.array([r[0] for r in rows])
    values = np.array([r[1] for r in rows])
    return taus, values


def estimate_limit_slope(trace) -> SlopeEstimate:
    """Limit slope of a trace of (tau, value, err) triples.

    The headline number comes from a least-squares fit of the interval
    slopes to s_inf + c exp(-tau), with the decay column averaged over
    each interval so the model is represented exactly on non-uniform
    ladders.  The slope over the last WINDOW intervals cross-checks it
    and their gap is the reported residual.
    """
    taus, values = _unpack(trace)
    if len(taus) < MIN_SAMPLES:
        raise InsufficientSamples(
            f"need at least {MIN_SAMPLES} samples, got {len(taus)}")
    if np.any(np.diff(taus) <= 0):
        raise NonMonotoneTau("trace tau values must be strictly increasing")
    if taus[-1] < MIN_TAU_MAX:
        raise InsufficientSamples(
            f"largest tau is {taus[-1]:g}; need tau_max >= {MIN_TAU_MAX:g}")
    gaps = np.diff(taus)
    diffs = np.diff(values) / gaps
    k = min(WINDOW, len(diffs))
    window = float((values[-1] - values[-1 - k]) / (taus[-1] - taus[-1 - k]))
    # mean of exp(-tau) over each interval: exact for a + b tau + c e^-tau
    decay = (np.exp(-taus[:-1]) - np.exp(-taus[1:])) / gaps
    if decay.max() < 1e-280:
        spread = float(np.ptp(diffs[-k:]))
        return SlopeEstimate(window, "window_diff", spread,
                             float(taus[-1]), len(taus))
    basis = np.column_stack([np.ones_like(decay), decay])
    coeff, *_ = np.linalg.lstsq(basis, diffs, rcond=None)
    fitted = float(coeff[0])
    if not math.isfinite(fitted):
        spread = float(np.ptp(diffs[-k:]))
        return SlopeEstimate(window, "window_diff", spread,
                             float(taus[-1]), len(taus))
    return SlopeEstimate(fitted, "exp_fit", abs(window - fitted),
                         float(taus[-1]), len(taus))


def estimate_limit_value(trace) -> SlopeEstimate:
    """Limit of an already-differentiated trace (pointwise phi_dot).

    Fixed-point probes live on finite plateaus, so the ladder stops
    earlier than for integrated energies and the exponential fit acts
    on the values themselves; the last sample is the cross-check.
    """
    taus, values = _unpack(trace)
    if len(taus) < VALUE_MIN_SAMPLES:
        raise InsufficientSamples(
            f"need at least {VALUE_MIN_SAMPLES} samples, got {len(taus)}")
    if np.any(np.diff(taus) <= 0):
        raise NonMonotoneTau("trace tau values must be strictly increasing")
    if taus[-1] < VALUE_MIN_TAU:
        raise InsufficientSamples(
            f"largest tau is {taus[-1]:g}; need tau_max >= {VALUE_MIN_TAU:g}")
    last = float(values[-1])
    decay = np.exp(-taus)
    basis = np.column_stack([np.ones_like(decay), decay])
    coeff, *_ = np.linalg.lstsq(basis, values, rcond=None)
    fitted = float(coeff[0])
    if not math.isfinite(fitted):
        k = min(WINDOW, len(values) - 1)
        return SlopeEstimate(last, "window_diff", float(np.ptp(values[-k:])),
                             float(taus[-1]), len(taus))
    return SlopeEstimate(fitted, "exp_fit", abs(last - fitted),
                         float(taus[-1]), len(taus))


# -- schedules and verdicts ---------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Sampling plan: tau ladder, smoothing coupling, tolerance override.

    bulk_order, when set, replaces the default Gauss panel order of the
    ray grids (the CLI's --quad-order knob).
    """

    taus: tuple = (1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    beta0: float = 10.0
    tol: Optional[float] = None
    bulk_order: Optional[int] = None

    def beta(self, tau: float) -> float:
        return self.beta0 * float(tau)


POINT_SCHEDULE = Schedule(taus=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0))

_NORMALIZATION = {
    "DF": "min_zero",
    "MINNORM": "min_zero",
    "JALPHA": "min_zero",
    "POINT": "average_zero",
}


@dataclass(frozen=True)
class VerdictReport:
    """Outcome of one slope-theorem check.

    trace rows are (tau, value, err); energies rows are
    (tau, am, i_val, j_val, l_alpha) for the downstream sandwich audit
    and the trace CSV (l_alpha is nan outside JALPHA runs).
    """

    theorem: str
    exact: Fraction
    slope: float
    residual: float
    tol: float
    passed: bool
    tier: str
    normalization: str
    estimate: SlopeEstimate
    trace: tuple
    energies: tuple

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "exact": f"{self.exact.numerator}/{self.exact.denominator}",
            "decimal": float(self.exact),
            "slope": self.slope,
            "residual": self.residual,
            "tol": self.tol,
            "pass": self.passed,
            "tier": self.tier,
            "normalization": self.normalization,
        }


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("KSTAB_THREADS", "1")))
    except ValueError:
        return 1


def _map_ordered(fn, items):
    workers = _thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _tier(cfg: ToricTestConfig) -> str:
    return "affine" if len(cfg.g.pieces) == 1 else "pl"


def _default_tol(theorem: str, tier: str) -> float:
    if tier == "pl":
        return 3e-2
    return 1e-3 if theorem in ("AM", "POINT") else 1e-2


def _exact_value(cfg, theorem, alpha, vertex) -> Fraction:
    n = cfg.base.dim
    if theorem == "AM":
        return -math.factorial(n + 1) * integrate(cfg.base, cfg.g)
    if theorem == "DF":
        return donaldson_futaki(cfg)
    if theorem == "MINNORM":
        return minimum_norm(cfg)
    if theorem == "JALPHA":
        return twisted_weights(cfg, alpha)[1]
    # POINT: the fixed-point phi_dot settles at minus the vertex height
    return -chow_weight(cfg, vertex)


def _energy_row(tau, ray, theorem, alpha, gamma):
    state = ray.state(float(tau))
    rep = energy_report(state, alpha=alpha if theorem == "JALPHA" else None)
    l_a = float("nan") if rep.l_alpha is None else float(rep.l_alpha)
    battery = (float(rep.am), rep.i_val, rep.j_val, l_a)
    if theorem == "AM":
        value = rep.am
    elif theorem == "MINNORM":
        value = rep.j_val
    elif theorem == "JALPHA":
        n = ray.cfg.base.dim
        value = rep.l_alpha - (n / (n + 1.0)) * gamma * rep.am
    else:  # DF
        mab = mabuchi(state)
        return (float(tau), mab.value, mab.err_estimate) + battery
    return (float(tau), float(value), rep.err_estimate) + battery


def _energy_trace(cfg, theorem, schedule, alpha):
    gamma = float(twisted_weights(cfg, alpha)[0]) if theorem == "JALPHA" \
        else 0.0
    tau_top = float(max(schedule.taus))
    if _tier(cfg) == "affine":
        # exact ray: one shared transport cache, ascending warm starts
        ray = Ray(cfg, beta=schedule.beta0, tau_max=tau_top,
                  bulk_order=schedule.bulk_order)
        return [_energy_row(t, ray, theorem, alpha, gamma)
                for t in schedule.taus]

    def build(tau):
        ray = Ray(cfg, beta=schedule.beta(tau), tau_max=float(tau),
                  bulk_order=schedule.bulk_order)
        return _energy_row(tau, ray, theorem, alpha, gamma)

    return _map_ordered(build, list(schedule.taus))


def _point_trace(cfg, vertex, schedule):
    i = cfg.base.vertex_index(vertex)
    vf = np.array([float(c) for c in cfg.base.vertices[i]])
    bary = np.array([float(c) for c in volume_data(cfg.base).barycenter])
    delta = math.exp(-2.0 * (float(max(schedule.taus)) + 4.0))
    probe = vf + delta * (bary - vf)
    if _tier(cfg) == "affine":
        ray = Ray(cfg, beta=schedule.beta0, tau_max=float(max(schedule.taus)),
                  bulk_order=schedule.bulk_order)
        return [(float(t), ray.point_derivative(float(t), probe), 0.0)
                for t in schedule.taus]

    def build(tau):
        ray = Ray(cfg, beta=schedule.beta(tau), tau_max=float(tau),
                  bulk_order=schedule.bulk_order)
        return (float(tau), ray.point_derivative(float(tau), probe), 0.0)

    return _map_ordered(build, list(schedule.taus))


def verify_theorem(cfg: ToricTestConfig, theorem: str,
                   schedule: Optional[Schedule] = None,
                   alpha: Optional[Polytope] = None,
                   vertex=None) -> VerdictReport:
    """Check one limit-slope identity against its exact invariant.

    Builds the functional trace over the schedule, extrapolates, and
    passes iff |slope - exact| <= tol * (1 + |exact|).  The tolerance
    defaults by theorem and tier (affine rays are certified, PL rays
    are the looser experimental tier) and can be pinned on the
    schedule.
    """
    name = str(theorem).upper()
    if name not in THEOREMS:
        raise InconsistentInput(f"unknown theorem {theorem!r}")
    if name == "JALPHA" and alpha is None:
        raise MissingAlpha("JALPHA verdict needs a twisting polytope")
    if name == "POINT" and vertex is None:
        raise NotAVertex("POINT verdict needs a vertex")
    if schedule is None:
        schedule = POINT_SCHEDULE if name == "POINT" else Schedule()
    target = _NORMALIZATION.get(name)
    ncfg = normalize(cfg, target) if target else cfg
    tier = _tier(ncfg)
    tol = schedule.tol if schedule.tol is not None else _default_tol(name, tier)
    exact = _exact_value(ncfg, name, alpha, vertex)
    if name == "POINT":
        trace = tuple(_point_trace(ncfg, vertex, schedule))
        energies = ()
        est = estimate_limit_value(trace)
    else:
        rows = _energy_trace(ncfg, name, schedule, alpha)
        trace = tuple(r[:3] for r in rows)
        energies = tuple((r[0],) + r[3:] for r in rows)
        est = estimate_limit_slope(trace)
    passed = abs(est.value - float(exact)) <= tol * (1.0 + abs(float(exact)))
    return VerdictReport(
        theorem=name, exact=exact, slope=est.value, residual=est.residual,
        tol=tol, passed=passed, tier=tier,
        normalization=target or cfg.normalization, estimate=est,
        trace=trace, energies=energies)


# -- destabilizer scan --------------------------------------------------------


@dataclass(frozen=True)
class CandidateWeight:
    point: tuple
    value: object         # Fraction at vertices, float at probe points
    exact: bool


@dataclass(frozen=True)
class ScanReport:
    best: CandidateWeight
    destabilizing: bool
    candidates: tuple


def scan_destabilizer(cfg: ToricTestConfig, candidates="vertices",
                      schedule: Optional[Schedule] = None) -> ScanReport:
    """Largest height of g above its mean over candidate points.

    Vertices are scored exactly; any other candidate is probed
    numerically through the fixed-point limit in the average-zero
    normalization, so the two routes share one sign convention.
    """
    ncfg = normalize(cfg, "average_zero")
    vertex_set = {v: chow_weight(ncfg, v) for v in ncfg.base.vertices}
    points = ncfg.base.vertices if candidates == "vertices" else tuple(
        tuple(Fraction(c) for c in p) for p in candidates)
    scored = []
    for p in points:
        if p in vertex_set:
            scored.append(CandidateWeight(p, vertex_set[p], True))
        else:
            trace = _interior_point_trace(ncfg, p, schedule or POINT_SCHEDULE)
            est = estimate_limit_value(trace)
            scored.append(CandidateWeight(p, -est.value, False))
    best = max(scored, key=lambda c: float(c.value))
    positive = best.value > 0
    return ScanReport(best=best, destabilizing=bool(positive),
                      candidates=tuple(scored))


def _interior_point_trace(cfg, point, schedule):
    probe = np.array([float(c) for c in point])
    if _tier(cfg) == "affine":
        ray = Ray(cfg, beta=schedule.beta0, tau_max=float(max(schedule.taus)),
                  bulk_order=schedule.bulk_order)
        return [(float(t), ray.point_derivative(float(t), probe), 0.0)
                for t in schedule.taus]

    def build(tau):
        ray = Ray(cfg, beta=schedule.beta(tau), tau_max=float(tau),
                  bulk_order=schedule.bulk_order)
        return (float(tau), ray.point_derivative(float(tau), probe), 0.0)

    return _map_ordered(build, list(schedule.taus))
