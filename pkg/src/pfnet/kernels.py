"""Multiplicative update kernels for non-negative factorizations.

All kernels work on a factorization X ~= W H with X (m x n), W (m x r)
and H (r x n), all entry-wise non-negative.  The updates are the
classical KL-divergence multiplicative rules, plus epsilon-stabilized
variants that keep every quantity strictly positive and tolerate exact
zeros in the data, and non-smooth variants that insert a smoothing
matrix S between W and H to encourage sparse solutions.

Right updates modify H (inference); left updates modify W (learning).
All update functions return new arrays and never modify their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Default stabilizer added inside the epsilon update rules.
DEFAULT_EPS = 1e-5


def kl_divergence(x: np.ndarray, y: np.ndarray, eps: float = 0.0) -> float:
    """Generalized KL divergence D(x || y) = sum(x log(x/y) - x + y).

    Terms with x == 0 contribute y (0 log 0 is taken as 0).  With
    eps > 0 the log ratio is computed as (x + eps) / (y + eps), the
    same additive guard used by the stabilized update rules, which
    makes the divergence finite for any non-negative inputs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    ratio = (x + eps) / (y + eps) if eps > 0.0 else _safe_ratio(x, y)
    log_term = np.where(x > 0.0, x * np.log(np.where(x > 0.0, ratio, 1.0)), 0.0)
    return float(np.sum(log_term - x + y))


def rmse(x: np.ndarray, y: np.ndarray) -> float:
    """Root mean squared difference between two same-shape matrices."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def reconstruction_rmse(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    """RMSE between x and its reconstruction w @ h."""
    return rmse(x, w @ h)


def total_squared_error(x: np.ndarray, y: np.ndarray) -> float:
    """Sum of squared differences, the per-equation term of the cost."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum((x - y) ** 2))


def smoothing_matrix(r: int, theta: float) -> np.ndarray:
    """Smoothing matrix S = (1 - theta) I + (theta / r) ones(r, r).

    theta = 0 gives the identity (no smoothing); theta = 1 averages all
    components.  Used by the non-smooth update variants.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    return (1.0 - theta) * np.eye(r) + (theta / r) * np.ones((r, r))


def _safe_ratio(x: np.ndarray, wh: np.ndarray) -> np.ndarray:
    # X / WH with 0/0 treated as 0; positive/0 cannot occur when W, H > 0.
    out = np.zeros_like(x)
    np.divide(x, wh, out=out, where=wh > 0.0)
    return out


def right_update(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Plain multiplicative right update: H <- H * (W^T (X/WH)) / (W^T 1)."""
    wh = w @ h
    num = w.T @ _safe_ratio(x, wh)
    den = w.T @ np.ones_like(x)
    out = np.zeros_like(h)
    np.divide(h * num, den, out=out, where=den > 0.0)
    return out


def left_update(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Plain multiplicative left update: W <- W * ((X/WH) H^T) / (1 H^T)."""
    wh = w @ h
    num = _safe_ratio(x, wh) @ h.T
    den = np.ones_like(x) @ h.T
    out = np.zeros_like(w)
    np.divide(w * num, den, out=out, where=den > 0.0)
    return out


def right_update_eps(
    x: np.ndarray, w: np.ndarray, h: np.ndarray, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """Epsilon-stabilized right update.

    H <- H * (W^T ((X + eps) / (WH + eps)) + eps) / (W^T 1 + eps)

    Keeps the iterate well defined when X or WH contain zeros, at the
    price of a small bias of order eps.
    """
    wh = w @ h
    num = w.T @ ((x + eps) / (wh + eps)) + eps
    den = w.T @ np.ones_like(x) + eps
    return h * num / den


def left_update_eps(
    x: np.ndarray, w: np.ndarray, h: np.ndarray, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """Epsilon-stabilized left update, mirror image of right_update_eps."""
    wh = w @ h
    num = ((x + eps) / (wh + eps)) @ h.T + eps
    den = np.ones_like(x) @ h.T + eps
    return w * num / den


def left_update_eps_terms(
    x: np.ndarray, w: np.ndarray, h: np.ndarray, eps: float = DEFAULT_EPS
) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator of the stabilized left update ratio.

    Returned separately so contributions from several equations sharing
    one parameter block can be summed before forming the ratio.
    """
    wh = w @ h
    num = ((x + eps) / (wh + eps)) @ h.T
    den = np.ones_like(x) @ h.T
    return num, den


def right_update_nonsmooth(
    x: np.ndarray, w: np.ndarray, h: np.ndarray, theta: float, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """Stabilized right update with smoothing: effective basis is W S."""
    return right_update_eps(x, w @ smoothing_matrix(w.shape[1], theta), h, eps)


def left_update_nonsmooth(
    x: np.ndarray, w: np.ndarray, h: np.ndarray, theta: float, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """Stabilized left update with smoothing: effective encoding is S H."""
    return left_update_eps(x, w, smoothing_matrix(h.shape[0], theta) @ h, eps)


def left_update_nonsmooth_terms(
    x: np.ndarray, w: np.ndarray, h: np.ndarray, theta: float, eps: float = DEFAULT_EPS
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulable numerator/denominator of the smoothed left update."""
    return left_update_eps_terms(x, w, smoothing_matrix(h.shape[0], theta) @ h, eps)


@dataclass(frozen=True)
class NormalizationPolicy:
    """Column normalization applied to a parameter block after learning.

    kind 'none' leaves the block alone.  kind 'unit' rescales every
    column to sum to 1 (columns summing to 0 are left untouched so they
    can represent pruned components).  kind 'subcolumns' partitions the
    rows into contiguous groups and rescales each group of a column to
    the mean group sum, which preserves the column total; columns with
    an all-zero group are left untouched.
    """

    kind: str = "none"
    partition: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("none", "unit", "subcolumns"):
            raise ValueError(f"unknown normalization kind {self.kind!r}")
        if self.kind == "subcolumns":
            if not self.partition or any(p <= 0 for p in self.partition):
                raise ValueError("subcolumns normalization needs positive group sizes")

    def apply(self, w: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return w
        if self.kind == "unit":
            sums = w.sum(axis=0)
            scale = np.where(sums > 0.0, 1.0 / np.where(sums > 0.0, sums, 1.0), 1.0)
            return w * scale
        if sum(self.partition) != w.shape[0]:
            raise ValueError(
                f"partition {self.partition} does not cover {w.shape[0]} rows"
            )
        out = w.copy()
        bounds = np.cumsum((0,) + self.partition)
        group_sums = np.stack(
            [w[a:b].sum(axis=0) for a, b in zip(bounds[:-1], bounds[1:])]
        )
        target = group_sums.mean(axis=0)
        ok = np.all(group_sums > 0.0, axis=0)
        for g, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            scale = np.where(ok, target / np.where(ok, group_sums[g], 1.0), 1.0)
            out[a:b] *= scale
        return out


@dataclass(frozen=True)
class SparsenessSchedule:
    """Smoothing amount theta as a piecewise-linear map of the iteration.

    `points` are (iteration, theta) breakpoints with strictly increasing
    iterations.  Between breakpoints theta is interpolated linearly;
    outside the breakpoint range the nearest value is held constant.
    An empty schedule means theta = 0 everywhere.
    """

    points: tuple[tuple[int, float], ...] = field(default=())

    @classmethod
    def constant(cls, theta: float) -> "SparsenessSchedule":
        return cls(points=((0, theta),))

    def __post_init__(self):
        if any(not 0.0 <= t <= 1.0 for _, t in self.points):
            raise ValueError("theta values must be in [0, 1]")
        iters = [i for i, _ in self.points]
        if any(b <= a for a, b in zip(iters, iters[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def value_at(self, iteration: int) -> float:
        if not self.points:
            return 0.0
        iters = np.array([i for i, _ in self.points], dtype=float)
        thetas = np.array([t for _, t in self.points], dtype=float)
        return float(np.interp(float(iteration), iters, thetas))
