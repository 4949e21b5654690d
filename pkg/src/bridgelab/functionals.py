"""Weighted exponential functionals and the identities they satisfy.

Each identity kind integrates ``exp(beta * w(s) * X_s) * m(s)`` over
``[0, limit]`` and raises the result to a power ``p``.  Quadrature runs in
a per-kind variable ``u`` for which ``m(s) ds = scale * du``; on a grid
uniform in ``u`` the ``beta = 0`` integral is then reproduced to rounding,
and the endpoint singularities of ``w`` and ``m`` disappear.

All kind-specific maps are written in terms of ``lg = log(1 - s)``.  The
exponent argument is evaluated as ``beta * f(lg) * M_s`` with
``f = w * (1 - s)^alpha`` and ``M`` the martingale part of the path, so no
factor ever has to be formed as a product of an underflowed and an
overflowed number.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import check_alpha, check_int, check_open_unit, check_real
from .sampling import PathBatch, TimeGrid, _envelope

DEFAULT_EPS = 1e-6
DEFAULT_M = 4096
# exp() overflows past this; flagged values are kept in log space
LOG_OVERFLOW = 709.0


class DomainError(ValueError):
    """alpha (or another parameter) lies outside an identity's domain."""


class IdentityKind(str, Enum):
    BOUGEROL = "bougerol"
    DMMY = "dmmy"
    LINK_A = "link-a"
    LINK_B = "link-b"
    LINK12_LOG = "link12-log"
    LINK12_TRUNC = "link12-trunc"
    HALF_VANISH = "half-vanish"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        names = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown identity {name!r}; expected one of: {names}")

    @property
    def power(self):
        if self in (IdentityKind.DMMY, IdentityKind.LINK_A, IdentityKind.LINK12_LOG):
            return -1.0
        return -0.5

    @property
    def fixed_alpha(self):
        """The only admissible alpha, or None for kinds with a range."""
        return {
            IdentityKind.BOUGEROL: 0.0,
            IdentityKind.DMMY: 1.0,
            IdentityKind.LINK12_LOG: 0.5,
            IdentityKind.LINK12_TRUNC: 0.5,
            IdentityKind.HALF_VANISH: 0.5,
        }.get(self)

    @property
    def domain(self):
        if self is IdentityKind.LINK_A:
            return "alpha > 1/2"
        if self is IdentityKind.LINK_B:
            return "0 <= alpha < 1/2"
        return f"alpha = {self.fixed_alpha:g}"

    def admits(self, alpha):
        if self is IdentityKind.LINK_A:
            return alpha > 0.5
        if self is IdentityKind.LINK_B:
            return 0.0 <= alpha < 0.5
        return alpha == self.fixed_alpha

    @property
    def truncated(self):
        return self is IdentityKind.HALF_VANISH


def check_domain(kind, alpha):
    kind = IdentityKind.parse(kind)
    alpha = check_alpha(alpha)
    if not kind.admits(alpha):
        raise DomainError(f"{kind.value} requires {kind.domain}, got alpha={alpha:g}")
    return kind, alpha


def _substitution_rate(kind, alpha):
    # exponent k in u = 1 - (1 - s)^k for the power-law kinds
    if kind is IdentityKind.LINK_A:
        return 2.0 * alpha - 1.0
    if kind is IdentityKind.LINK_B:
        return 1.0 - 2.0 * alpha
    return 1.0


def u_of_log_gap(kind, alpha, log_gap):
    lg = np.asarray(log_gap, dtype=float)
    if kind in (IdentityKind.LINK12_TRUNC, IdentityKind.HALF_VANISH):
        return -lg
    if kind is IdentityKind.LINK12_LOG:
        with np.errstate(invalid="ignore"):
            u = -lg / (1.0 - lg)
        return np.where(np.isneginf(lg), 1.0, u)
    return -np.expm1(_substitution_rate(kind, alpha) * lg)


def log_gap_of_u(kind, alpha, u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        if kind in (IdentityKind.LINK12_TRUNC, IdentityKind.HALF_VANISH):
            return -u
        if kind is IdentityKind.LINK12_LOG:
            return -u / (1.0 - u)
        return np.log1p(-u) / _substitution_rate(kind, alpha)


def measure_scale(kind, alpha):
    """Constant ``c`` with ``m(s) ds = c du``."""
    if kind in (IdentityKind.LINK_A, IdentityKind.LINK_B):
        return 1.0 / _substitution_rate(kind, alpha)
    return 1.0


def u_limit(kind, alpha, eps=DEFAULT_EPS):
    if kind is IdentityKind.HALF_VANISH:
        return -math.log(check_open_unit(eps, "eps"))
    return 1.0


def exponent_factor(kind, alpha, log_gap):
    """``w(s) * (1 - s)^alpha``; multiplies the martingale part of the path.

    Vanishes at ``s = 1`` for the kinds whose rescaled path is pinned there.
    """
    lg = np.asarray(log_gap, dtype=float)
    if kind is IdentityKind.DMMY:
        return np.exp(lg)
    if kind is IdentityKind.LINK_A:
        return np.exp((2.0 * alpha - 1.0) * lg)
    if kind is IdentityKind.LINK12_LOG:
        with np.errstate(divide="ignore"):
            return 1.0 / (1.0 - lg)
    return np.ones_like(lg)


def exp_weight(kind, alpha, s):
    """w(s) in the original time variable."""
    s = np.asarray(s, dtype=float)
    if kind in (IdentityKind.BOUGEROL, IdentityKind.DMMY):
        return np.ones_like(s)
    if kind is IdentityKind.LINK_A:
        return (1.0 - s) ** -(1.0 - alpha)
    if kind is IdentityKind.LINK_B:
        return (1.0 - s) ** -alpha
    if kind is IdentityKind.LINK12_LOG:
        return 1.0 / (np.sqrt(1.0 - s) * (1.0 - np.log1p(-s)))
    return (1.0 - s) ** -0.5


def measure_weight(kind, alpha, s):
    """m(s) in the original time variable."""
    s = np.asarray(s, dtype=float)
    if kind in (IdentityKind.BOUGEROL, IdentityKind.DMMY):
        return np.ones_like(s)
    if kind is IdentityKind.LINK_A:
        return (1.0 - s) ** (-2.0 * (1.0 - alpha))
    if kind is IdentityKind.LINK_B:
        return (1.0 - s) ** (-2.0 * alpha)
    if kind is IdentityKind.LINK12_LOG:
        return 1.0 / ((1.0 - s) * (1.0 - np.log1p(-s)) ** 2)
    return 1.0 / (1.0 - s)


def kind_grid(kind, alpha, m=DEFAULT_M, eps=DEFAULT_EPS):
    """Grid uniform in the kind's substituted variable.

    Only HALF_VANISH is truncated (at ``s = 1 - eps``); every other kind maps
    its whole integration range to a finite ``u`` interval and the grid runs
    to the true endpoint.
    """
    kind, alpha = check_domain(kind, alpha)
    m = check_int(m, "m", minimum=2)
    u_end = u_limit(kind, alpha, eps)
    u = np.linspace(0.0, u_end, m)
    u[-1] = u_end
    log_gap = log_gap_of_u(kind, alpha, u)
    log_gap[0] = 0.0
    used_eps = float(eps) if kind.truncated else 0.0
    return TimeGrid.from_log_gap(log_gap, f"u-transformed({kind.value})", used_eps, u)


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    log_value: float
    kind: IdentityKind
    beta: float
    eps_used: float
    quadrature: str
    flagged: bool = False


def _u_nodes(kind, alpha, grid):
    if grid.u is not None and grid.scheme == f"u-transformed({kind.value})":
        return grid.u, True
    return u_of_log_gap(kind, alpha, grid.log_gap), False


def _check_limit(kind, alpha, grid):
    lg_end = grid.log_gap[-1]
    if kind is IdentityKind.LINK12_TRUNC and lg_end < -1.0 - 1e-12:
        raise DomainError("link12-trunc integrates only up to s = 1 - e^-1")
    if kind is IdentityKind.HALF_VANISH and np.isneginf(lg_end):
        raise DomainError("half-vanish must be truncated below s = 1")


def _trapezoid_log(log_f, u, uniform):
    """log of the trapezoid integral of exp(log_f) over nodes ``u`` (per row).

    Overwrites ``log_f``.
    """
    peak = log_f.max(axis=1, keepdims=True)
    peak[~np.isfinite(peak)] = 0.0
    f = np.exp(np.subtract(log_f, peak, out=log_f), out=log_f)
    if uniform:
        inner = f.sum(axis=1) - 0.5 * (f[:, 0] + f[:, -1])
        mean = inner / (u.size - 1)
        with np.errstate(divide="ignore"):
            return np.log(u[-1] - u[0]) + np.log(mean) + peak[:, 0]
    du = np.diff(u)
    weights = np.zeros(u.size)
    weights[:-1] += 0.5 * du
    weights[1:] += 0.5 * du
    with np.errstate(divide="ignore"):
        return np.log(f @ weights) + peak[:, 0]


def _exponent_arguments(factor, beta, martingale):
    coef = beta * factor
    pinned = factor == 0.0
    with np.errstate(invalid="ignore"):
        arg = martingale * coef
    if pinned.any():
        arg[:, pinned] = 0.0
    return arg


def _martingale_of(alpha, grid, path):
    if isinstance(path, PathBatch):
        if path.martingale is not None:
            return np.atleast_2d(path.martingale)
        path = path.values
    values = np.atleast_2d(np.asarray(path, dtype=float))
    if values.shape[1] != len(grid):
        raise ValueError(f"path has {values.shape[1]} nodes, grid has {len(grid)}")
    env = _envelope(alpha, grid.log_gap)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(env > 0, values / env, np.nan)


def log_functionals(kind, alpha, beta, path, grid=None):
    """log of the functional for every row of ``path``.

    ``path`` is a PathBatch (its martingale part is used when present) or
    an array of path values aligned with ``grid``.
    """
    kind, alpha = check_domain(kind, alpha)
    beta = check_real(beta, "beta")
    if grid is None:
        if not isinstance(path, PathBatch):
            raise TypeError("grid is required for raw path arrays")
        grid = path.grid
    _check_limit(kind, alpha, grid)
    mart = _martingale_of(alpha, grid, path)
    u, uniform = _u_nodes(kind, alpha, grid)
    factor = exponent_factor(kind, alpha, grid.log_gap)
    if beta == 0.0:
        arg = np.zeros_like(mart)
    else:
        arg = _exponent_arguments(factor, beta, mart)
    logs = math.log(measure_scale(kind, alpha)) + _trapezoid_log(arg, u, uniform)
    if np.isnan(logs).any():
        raise ValueError("path is undefined at a node where the weight is finite")
    return logs


def plain_log_functionals(alpha, beta, batch):
    """log of int_0^1 exp(beta X_t) dt for each path (w = m = 1, any alpha)."""
    grid = batch.grid
    u = -np.expm1(grid.log_gap)
    uniform = grid.scheme == "uniform"
    if not grid.reaches_one:
        raise ValueError("the unweighted functional needs a grid reaching t = 1")
    factor = _envelope(alpha, grid.log_gap)
    arg = _exponent_arguments(factor, beta, _martingale_of(alpha, grid, batch))
    logs = _trapezoid_log(arg, u, uniform)
    if np.isnan(logs).any():
        raise ValueError("path is undefined at a node where the weight is finite")
    return logs


def evaluate_functional(kind, alpha, beta, path, grid=None):
    """Functional of one sampled path.

    Parameters
    ----------
    kind : IdentityKind or str
    alpha, beta : float
    path : PathBatch with one row, or 1-D array of path values
    grid : TimeGrid, required when ``path`` is an array

    Returns
    -------
    FunctionalValue
        ``flagged`` is set when the value itself is not representable
        as a float; ``log_value`` is exact either way.
    """
    kind, alpha = check_domain(kind, alpha)
    if isinstance(path, PathBatch):
        if path.n_paths != 1:
            raise ValueError("evaluate_functional takes a single path")
        grid = path.grid
    else:
        path = np.asarray(path, dtype=float)
        if path.ndim != 1:
            raise ValueError("evaluate_functional takes a single path")
    log_value = float(log_functionals(kind, alpha, beta, path, grid)[0])
    flagged = abs(log_value) > LOG_OVERFLOW
    value = math.exp(log_value) if not flagged else (math.inf if log_value > 0 else 0.0)
    u, uniform = _u_nodes(kind, alpha, grid)
    eps_used = math.exp(grid.log_gap[-1]) if kind.truncated else 0.0
    tag = "trapezoid-uniform-u" if uniform else "trapezoid-u"
    return FunctionalValue(value, log_value, kind, float(beta), eps_used, tag, flagged)


def closed_form_beta0(kind, alpha, eps=None):
    """The functional at beta = 0, where the integrand no longer depends on the path."""
    kind, alpha = check_domain(kind, alpha)
    if kind is IdentityKind.LINK_A:
        return 1.0 / (2.0 * alpha - 1.0)
    if kind is IdentityKind.LINK_B:
        return 1.0 / (1.0 - 2.0 * alpha)
    if kind is IdentityKind.HALF_VANISH:
        if eps is None:
            raise ValueError("half-vanish needs the truncation eps")
        return -math.log(check_open_unit(eps, "eps"))
    return 1.0


def target(kind, alpha):
    """``(p, value)``: the power and the exact expectation of the functional to ``p``."""
    kind, alpha = check_domain(kind, alpha)
    if kind is IdentityKind.LINK_A:
        return kind.power, 2.0 * alpha - 1.0
    if kind is IdentityKind.LINK_B:
        return kind.power, math.sqrt(1.0 - 2.0 * alpha)
    if kind is IdentityKind.HALF_VANISH:
        return kind.power, 0.0
    return kind.power, 1.0


def truncated_half_target(eps):
    """Expectation of the HALF_VANISH functional truncated at ``1 - eps``, to the power -1/2.

    The truncated integral is a Wiener exponential functional over the
    horizon ``T = -log(eps)``, whose -1/2 moment is ``T**-0.5`` for all beta.
    """
    eps = check_open_unit(eps, "eps")
    return (-math.log(eps)) ** -0.5


class ExponentialFunctional(TransformerMixin, BaseEstimator):
    """Map path rows to their functional values.

    Parameters
    ----------
    kind : str
        Identity name, e.g. ``"dmmy"`` or ``"link-a"``.
    alpha : float
    beta : float
    grid : TimeGrid
        Nodes the path columns are aligned with.
    output : {'value', 'log', 'power'}
        Functional, its log, or the functional raised to the kind's power.
    """

    def __init__(self, kind="dmmy", alpha=1.0, beta=1.0, grid=None, output="value"):
        self.kind = kind
        self.alpha = alpha
        self.beta = beta
        self.grid = grid
        self.output = output

    def fit(self, X, y=None):
        if self.grid is None:
            raise ValueError("grid must be set")
        check_domain(self.kind, self.alpha)
        if self.output not in ("value", "log", "power"):
            raise ValueError(f"unknown output {self.output!r}")
        if not isinstance(X, PathBatch):
            X = check_array(X, ensure_all_finite=False)
            if X.shape[1] != len(self.grid):
                raise ValueError(f"expected {len(self.grid)} columns, got {X.shape[1]}")
        self.kind_ = IdentityKind.parse(self.kind)
        return self

    def transform(self, X):
        if not isinstance(X, PathBatch):
            X = check_array(X, ensure_all_finite=False)
        logs = log_functionals(self.kind_, self.alpha, self.beta, X, self.grid)
        if self.output == "log":
            out = logs
        elif self.output == "power":
            out = np.exp(self.kind_.power * logs)
        else:
            with np.errstate(over="ignore"):
                out = np.exp(logs)
        return out[:, None]
