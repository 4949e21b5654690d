"""Space-time rescalings of alpha-Wiener bridges.

Each map sends a path of X^(alpha) to a path that is, in law, a Wiener
bridge (alpha = 1) or a Wiener process (alpha = 0):

========================  ==================  =====================================
map                       source time s(t)    output at target time t
========================  ==================  =====================================
to_bridge, alpha > 1/2    1 - t^(1/(2a-1))    sqrt(2a-1) t^((a-1)/(2a-1)) X_s
to_wiener, alpha < 1/2    1 - (1-t)^(1/(1-2a))  sqrt(1-2a) (1-t)^(-a/(1-2a)) X_s
half_to_bridge            1 - exp(1 - 1/t)    t exp((1/t - 1)/2) X_s
half_to_wiener            1 - exp(-t)         exp(t/2) X_s,   t >= 0
========================  ==================  =====================================

Callers give the target times; the map derives the source grid itself so
source and target nodes line up exactly.  Target endpoints whose value is
an almost-sure zero limit (t = 0 for the bridge maps) are pinned to 0 and
have no source column.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import check_alpha
from .functionals import DomainError
from .sampling import PathBatch, TimeGrid

# to_wiener evaluates its t = 1 column here; only the limit exists at 1
WIENER_END_OFFSET = 1e-9


class PathMap:
    """A rescaling on fixed target times.

    ``source_log_gap[col[j]]`` is the source node feeding target ``j``
    (``col[j] = -1`` for pinned targets) and ``log_scale[j]`` the log of its
    space factor.
    """

    def __init__(self, source_alpha, target_times, target_law, log_gaps, log_scale):
        self.source_alpha = source_alpha
        self.target_times = target_times
        self.target_law = target_law
        pinned = np.isnan(log_gaps)
        nodes = np.unique(np.concatenate([[0.0], log_gaps[~pinned]]))[::-1]
        if nodes.size < 2:
            raise ValueError("target times give no source node past t = 0")
        self.source_grid = TimeGrid.from_log_gap(nodes, f"{target_law}-source")
        lookup = {v: i for i, v in enumerate(nodes)}
        self.col = np.array([-1 if p else lookup[v] for p, v in zip(pinned, log_gaps)])
        self.log_scale = np.where(pinned, -np.inf, log_scale)

    def apply(self, path):
        """Rescale rows of ``path`` (PathBatch or array aligned to ``source_grid``)."""
        live = self.col >= 0
        cols = self.col[live]
        if isinstance(path, PathBatch):
            if not np.array_equal(path.grid.log_gap, self.source_grid.log_gap):
                raise ValueError("paths were not sampled on this map's source grid")
            if path.alpha != self.source_alpha:
                raise ValueError(f"paths have alpha={path.alpha:g}, map expects {self.source_alpha:g}")
        if isinstance(path, PathBatch) and path.martingale is not None:
            # X_s = (1-s)^a M_s; folding the envelope into the scale avoids underflow
            lg = self.source_grid.log_gap[cols]
            src = path.martingale[:, cols]
            scale = np.exp(self.log_scale[live] + self.source_alpha * lg)
        else:
            values = path.values if isinstance(path, PathBatch) else np.asarray(path, float)
            if values.ndim != 2 or values.shape[1] != len(self.source_grid):
                raise ValueError(
                    f"expected paths on {len(self.source_grid)} source nodes, "
                    f"got shape {values.shape}"
                )
            src = values[:, cols]
            scale = np.exp(self.log_scale[live])
        out = np.zeros((src.shape[0], self.col.size))
        out[:, live] = src * scale
        return out


def _times(target_times, upper=1.0):
    t = np.asarray(target_times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("target_times must be a non-empty 1-D sequence")
    if np.any(np.diff(t) <= 0):
        raise ValueError("target_times must be strictly increasing")
    if t[0] < 0 or t[-1] > upper:
        raise ValueError(f"target_times must lie in [0, {upper:g}]")
    return t


def bridge_map(alpha, target_times):
    """Map for alpha > 1/2 onto the Wiener bridge."""
    alpha = check_alpha(alpha)
    if alpha <= 0.5:
        raise DomainError(f"to_bridge_from_alpha requires alpha > 1/2, got {alpha:g}")
    t = _times(target_times)
    k = 2.0 * alpha - 1.0
    with np.errstate(divide="ignore"):
        log_t = np.log(t)
    pinned = t == 0
    log_gaps = np.where(pinned, np.nan, log_t / k)
    with np.errstate(invalid="ignore"):
        log_scale = 0.5 * math.log(k) + (alpha - 1.0) / k * log_t
    return PathMap(alpha, t, "bridge", log_gaps, log_scale)


def wiener_map(alpha, target_times):
    """Map for 0 <= alpha < 1/2 onto the Wiener process."""
    alpha = check_alpha(alpha)
    if alpha >= 0.5:
        raise DomainError(f"to_wiener_from_alpha requires 0 <= alpha < 1/2, got {alpha:g}")
    t = _times(target_times)
    k = 1.0 - 2.0 * alpha
    t_eff = np.minimum(t, 1.0 - WIENER_END_OFFSET)
    log_rest = np.log1p(-t_eff)
    log_gaps = log_rest / k
    log_scale = 0.5 * math.log(k) - alpha / k * log_rest
    return PathMap(alpha, t, "wiener", log_gaps, log_scale)


def half_bridge_map(target_times):
    """Map for alpha = 1/2 onto the Wiener bridge, through s = 1 - exp(1 - 1/t)."""
    t = _times(target_times)
    pinned = t == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / t
        log_t = np.log(t)
        log_scale = log_t + 0.5 * (inv - 1.0)
    log_gaps = np.where(pinned, np.nan, 1.0 - inv)
    return PathMap(0.5, t, "bridge", log_gaps, log_scale)


def half_wiener_map(target_times):
    """Map for alpha = 1/2 onto the Wiener process on [0, T], through s = 1 - exp(-t)."""
    t = _times(target_times, upper=np.inf)
    return PathMap(0.5, t, "wiener", -t, 0.5 * t)


def to_bridge_from_alpha(path, alpha, target_times):
    return bridge_map(alpha, target_times).apply(path)


def to_wiener_from_alpha(path, alpha, target_times):
    return wiener_map(alpha, target_times).apply(path)


def half_to_bridge(path, target_times):
    return half_bridge_map(target_times).apply(path)


def half_to_wiener(path, target_times):
    return half_wiener_map(target_times).apply(path)


class _PathTransformer(TransformerMixin, BaseEstimator):
    def _map(self):
        raise NotImplementedError

    def source_grid(self):
        """Grid the input paths must be sampled on."""
        return self._map().source_grid

    def fit(self, X, y=None):
        self.map_ = self._map()
        if not isinstance(X, PathBatch):
            X = check_array(X, ensure_all_finite=False)
        width = X.values.shape[1] if isinstance(X, PathBatch) else X.shape[1]
        if width != len(self.map_.source_grid):
            raise ValueError(f"expected {len(self.map_.source_grid)} columns, got {width}")
        return self

    def transform(self, X):
        if not isinstance(X, PathBatch):
            X = check_array(X, ensure_all_finite=False)
        return self.map_.apply(X)


class ToBridge(_PathTransformer):
    """sklearn wrapper around ``to_bridge_from_alpha``."""

    def __init__(self, alpha=0.75, target_times=(0.0, 0.5, 1.0)):
        self.alpha = alpha
        self.target_times = target_times

    def _map(self):
        return bridge_map(self.alpha, self.target_times)


class ToWiener(_PathTransformer):
    """sklearn wrapper around ``to_wiener_from_alpha``."""

    def __init__(self, alpha=0.25, target_times=(0.0, 0.5, 1.0)):
        self.alpha = alpha
        self.target_times = target_times

    def _map(self):
        return wiener_map(self.alpha, self.target_times)


class HalfToBridge(_PathTransformer):
    def __init__(self, target_times=(0.0, 0.5, 1.0)):
        self.target_times = target_times

    def _map(self):
        return half_bridge_map(self.target_times)


class HalfToWiener(_PathTransformer):
    def __init__(self, target_times=(0.0, 1.0)):
        self.target_times = target_times

    def _map(self):
        return half_wiener_map(self.target_times)
