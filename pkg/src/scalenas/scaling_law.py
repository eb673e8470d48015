"""Scaling laws that extrapolate searched strategies to larger stages.

Every family is anchored at ``value(0) = 1``:

* exponential: ``a0 * (a1**j - 1) + 1`` with ``a0 > 0, a1 > 1``
* linear:      ``a0 * j + 1`` with ``a0 > 0``
* squared:     ``a0 * j**2 + a1 * j + 1`` with ``a0 > 0``

Each dimension (d, w, r) is fitted independently by least squares over
stages ``j >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .space import ScalingStrategy

FAMILIES = ("exponential", "linear", "squared")
DIMENSIONS = ("d", "w", "r")
N_PARAMS = {"exponential": 2, "linear": 1, "squared": 2}

# open constraints a0 > 0 and a1 > 1 are realised as closed bounds this far inside
EPS = 1e-9


def evaluate(family: str, params, j):
    j = np.asarray(j, dtype=float)
    if family == "exponential":
        a0, a1 = params
        # expm1/log1p keeps a1 -> 1+ accurate
        return a0 * np.expm1(j * np.log1p(a1 - 1.0)) + 1.0
    if family == "linear":
        (a0,) = params
        return a0 * j + 1.0
    if family == "squared":
        a0, a1 = params
        return a0 * j * j + a1 * j + 1.0
    raise ValueError(f"unknown family {family!r}")


def rss(family: str, params, j, y) -> float:
    resid = evaluate(family, params, j) - np.asarray(y, dtype=float)
    return float(resid @ resid)


@dataclass(frozen=True)
class ScalingLawParams:
    family: str
    params: dict  # dimension -> tuple of parameters

    def __call__(self, j) -> dict:
        return {dim: evaluate(self.family, p, j) for dim, p in self.params.items()}

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {k: list(v) for k, v in self.params.items()}}


@dataclass
class FitReport:
    params: ScalingLawParams
    rss: dict
    extrapolated: dict = field(default_factory=dict)  # stage -> ScalingStrategy

    @property
    def family(self) -> str:
        return self.params.family

    @property
    def total_rss(self) -> float:
        return float(sum(self.rss.values()))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": {k: list(v) for k, v in self.params.params.items()},
            "rss": self.rss,
            "extrapolated": {str(j): list(s.as_tuple()) for j, s in sorted(self.extrapolated.items())},
        }


def _golden(f, lo: float, hi: float, tol: float = 1e-12, iters: int = 200) -> float:
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if abs(b - a) <= tol * max(1.0, abs(a)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2


def _coordinate_descent(f, x0, lower, rel_tol: float = 1e-6, max_sweeps: int = 10_000):
    """Pattern search on each coordinate with relative step shrinking to ``rel_tol``."""
    x = list(x0)
    fx = f(x)
    steps = [max(abs(v), 1e-3) * 0.25 for v in x]
    for _ in range(max_sweeps):
        improved = False
        for i in range(len(x)):
            for direction in (1.0, -1.0):
                cand = list(x)
                cand[i] = max(lower[i], x[i] + direction * steps[i])
                fc = f(cand)
                if fc < fx:
                    x, fx, improved = cand, fc, True
                    steps[i] *= 2.0
                    break
        if not improved:
            steps = [s * 0.5 for s in steps]
            if all(s <= rel_tol * max(abs(v), 1e-3) for s, v in zip(steps, x)):
                break
    return x, fx


def _fit_exponential(j, y):
    """Log-spaced grid over a1 - 1, golden-section refinement, coordinate-descent polish.

    For fixed a1 the model is linear in a0, so a0 is profiled out exactly
    (clamped to the feasible side) at every a1 the search visits.
    """
    phi = lambda a1: np.expm1(j * np.log1p(a1 - 1.0))
    target = y - 1.0

    def best_a0(a1):
        b = phi(a1)
        return max(EPS, float(b @ target) / float(b @ b))

    def profile(log_t):
        a1 = 1.0 + math.exp(log_t)
        return rss("exponential", (best_a0(a1), a1), j, y)

    log_ts = np.linspace(math.log(EPS), math.log(10.0), 241)
    scores = [profile(lt) for lt in log_ts]
    k = int(np.argmin(scores))
    lo, hi = log_ts[max(k - 1, 0)], log_ts[min(k + 1, len(log_ts) - 1)]
    lt = _golden(profile, lo, hi)
    if scores[k] < profile(lt):
        lt = log_ts[k]
    a1 = 1.0 + math.exp(lt)
    x, _ = _coordinate_descent(
        lambda p: rss("exponential", (p[0], 1.0 + p[1]), j, y),
        [best_a0(a1), a1 - 1.0],
        [EPS, EPS],
    )
    return (x[0], 1.0 + x[1])


def _fit_linear(j, y):
    return (max(EPS, float(j @ (y - 1.0)) / float(j @ j)),)


def _fit_squared(j, y):
    X = np.column_stack([j * j, j])
    target = y - 1.0
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    if coef[0] > EPS:
        return (float(coef[0]), float(coef[1]))
    # constrained optimum sits on the a0 = EPS boundary
    a1 = float(j @ (target - EPS * j * j)) / float(j @ j)
    return (EPS, a1)


_FITTERS = {"exponential": _fit_exponential, "linear": _fit_linear, "squared": _fit_squared}


def _clean_points(points):
    pts = sorted((int(jj), float(v)) for jj, v in points)
    for jj, v in pts:
        if v < 1.0:
            raise ValueError(f"scaling values must be >= 1, got {v} at stage {jj}")
        if jj < 0:
            raise ValueError("stage indices must be non-negative")
        if jj == 0 and abs(v - 1.0) > 1e-12:
            raise ValueError("stage 0 is the base model and must equal 1")
    fitted = [(jj, v) for jj, v in pts if jj >= 1]
    return np.array([p[0] for p in fitted], dtype=float), np.array([p[1] for p in fitted])


def fit_dimension(points, family: str):
    """Best parameters and RSS of one family on one dimension's ``(j, value)`` points."""
    if family not in _FITTERS:
        raise ValueError(f"unknown family {family!r}")
    j, y = _clean_points(points)
    if len(j) < N_PARAMS[family]:
        raise ValueError(
            f"{family} needs at least {N_PARAMS[family]} points with j >= 1, got {len(j)}"
        )
    params = _FITTERS[family](j, y)
    return tuple(float(p) for p in params), rss(family, params, j, y)


def _split(points) -> dict:
    if isinstance(points, dict):
        return {dim: list(points[dim]) for dim in DIMENSIONS}
    # sequence of (j, ScalingStrategy | (d, w, r))
    out = {dim: [] for dim in DIMENSIONS}
    for jj, s in points:
        values = s.as_tuple() if isinstance(s, ScalingStrategy) else tuple(s)
        for dim, v in zip(DIMENSIONS, values):
            out[dim].append((jj, v))
    return out


def fit_scaling_law(points, family: str = "exponential", extrapolate_to=()) -> FitReport:
    """Fit one family per dimension.

    ``points`` is either ``{"d": [(j, v), ...], "w": ..., "r": ...}`` or a list
    of ``(j, ScalingStrategy)``.
    """
    per_dim = _split(points)
    params, residuals = {}, {}
    for dim in DIMENSIONS:
        params[dim], residuals[dim] = fit_dimension(per_dim[dim], family)
    law = ScalingLawParams(family, params)
    return FitReport(law, residuals, {int(jj): extrapolate(law, jj) for jj in extrapolate_to})


def extrapolate(params: ScalingLawParams, j: int, decimals: int = 3) -> ScalingStrategy:
    if j < 0:
        raise ValueError("stage index must be non-negative")
    if j == 0:
        return ScalingStrategy(1.0, 1.0, 1.0)
    values = params(j)
    snapped = [max(1.0, round(float(values[dim]), decimals)) for dim in DIMENSIONS]
    return ScalingStrategy(*snapped)


def compare_families(points, extrapolate_to=(), families=FAMILIES) -> list[FitReport]:
    """All families, best (lowest total RSS) first."""
    reports = [fit_scaling_law(points, fam, extrapolate_to) for fam in families]
    return sorted(reports, key=lambda rep: (rep.total_rss, FAMILIES.index(rep.family)))


def rank_by_dimension(reports) -> dict:
    return {
        dim: [rep.family for rep in sorted(reports, key=lambda rep: (rep.rss[dim], FAMILIES.index(rep.family)))]
        for dim in DIMENSIONS
    }
