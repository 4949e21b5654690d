"""Time grids and sample paths of the alpha-Wiener bridge.

The alpha-Wiener bridge solves ``dX = -alpha/(1-t) X dt + dB`` with
``X_0 = 0``.  For ``alpha >= 0`` it is a centered Gaussian process with

    Cov(X_s, X_t) = (1-s)^a (1-t)^a q(s),   s <= t,
    q(s) = (1 - (1-s)^(1-2a)) / (1-2a)      (q(s) = -log(1-s) at a = 1/2),

so ``X_t = (1-t)^a M_t`` where ``M`` has independent Gaussian increments
with variance ``dq``.  Every node therefore carries its *log gap*
``log(1-t)``; all alpha-dependent quantities are computed from it, which
keeps grids that pile up extremely close to ``t = 1`` usable.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._validation import check_alpha, check_int, check_open_unit, check_seed

METHODS = ("exact", "sde", "time-change")
JITTER_STEPS = (0.0, 1e-14, 1e-10)


class FactorizationError(RuntimeError):
    """Covariance matrix is not positive definite even after jitter."""


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Increasing sample times in [0, 1].

    ``log_gap`` holds ``log(1 - t)`` for every node (``-inf`` at ``t = 1``)
    and is the authoritative coordinate: ``nodes`` may round to 1.0 for
    points that are distinct in ``log_gap``.  ``u`` is set for grids built
    uniformly in a substituted variable (see ``functionals.kind_grid``).
    """

    nodes: np.ndarray
    scheme: str
    eps: float
    log_gap: np.ndarray
    u: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lg = self.log_gap
        if lg.ndim != 1 or lg.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if lg[0] != 0.0:
            raise ValueError("first node must be t = 0")
        if np.isnan(lg).any() or np.any(lg > 0):
            raise ValueError("nodes must lie in [0, 1]")
        if not np.all(np.diff(lg) < 0):
            raise ValueError("nodes must be strictly increasing")
        for arr in (self.nodes, self.log_gap, self.u):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_log_gap(cls, log_gap, scheme="custom", eps=0.0, u=None):
        log_gap = np.asarray(log_gap, dtype=float)
        return cls(-np.expm1(log_gap), scheme, float(eps), log_gap, u)

    @classmethod
    def from_nodes(cls, nodes, scheme="custom", eps=None):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1:
            raise ValueError("nodes must be one-dimensional")
        if np.any(nodes > 1) or np.any(nodes < 0):
            raise ValueError("nodes must lie in [0, 1]")
        with np.errstate(divide="ignore"):
            log_gap = np.log1p(-nodes)
        if eps is None:
            eps = float(1.0 - nodes[-1]) if nodes.size else 0.0
        return cls(nodes, scheme, float(eps), log_gap)

    def __len__(self):
        return self.log_gap.size

    @property
    def gap(self):
        return np.exp(self.log_gap)

    @property
    def reaches_one(self):
        return self.log_gap[-1] == -np.inf


def make_grid(m, scheme="geometric-to-one", eps=1e-6):
    """Build a grid of ``m`` nodes.

    ``uniform`` spaces nodes evenly on ``[0, 1 - eps]`` (``eps = 0`` allowed);
    ``geometric-to-one`` makes the gaps ``1 - t`` a geometric sequence from
    1 down to ``eps``, i.e. uniform spacing of the clock ``-log(1 - t)``.
    """
    m = check_int(m, "m", minimum=2)
    if scheme == "uniform":
        if eps != 0:
            eps = check_open_unit(eps, "eps")
        return TimeGrid.from_nodes(np.linspace(0.0, 1.0 - eps, m), "uniform", eps)
    if scheme == "geometric-to-one":
        eps = check_open_unit(eps, "eps")
        log_gap = np.linspace(0.0, math.log(eps), m)
        log_gap[-1] = math.log(eps)
        return TimeGrid.from_log_gap(log_gap, "geometric-to-one", eps)
    raise ValueError(f"unknown grid scheme {scheme!r}")


def _qv_ratio(x, c):
    # -expm1(-c x) / c, continuous at c = 0
    if c == 0.0:
        return x
    return -np.expm1(-c * x) / c


def _envelope(alpha, log_gap):
    # (1 - t)^alpha, with 0^0 = 1
    if alpha == 0.0:
        return np.ones_like(log_gap)
    return np.exp(alpha * log_gap)


def _martingale_clock(alpha, log_gap):
    """Quadratic variation q(t) of M_t = X_t / (1-t)^alpha."""
    return _qv_ratio(-np.asarray(log_gap, dtype=float), 1.0 - 2.0 * alpha)


def increment_variances(alpha, grid):
    """Variances of the martingale increments between consecutive nodes."""
    c = 1.0 - 2.0 * alpha
    lg0 = grid.log_gap[:-1]
    span = lg0 - grid.log_gap[1:]
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(c * lg0) * _qv_ratio(span, c)


def cov_alpha(alpha, s, t):
    """Covariance of the alpha-Wiener bridge at times ``s`` and ``t``."""
    alpha = check_alpha(alpha)
    s, t = float(s), float(t)
    if not (0.0 <= s <= 1.0 and 0.0 <= t <= 1.0):
        raise ValueError("times must lie in [0, 1]")
    if s > t:
        s, t = t, s
    if s == 0.0:
        return 0.0
    if alpha == 0.0:
        return s
    if t == 1.0:
        return 0.0
    lg_s, lg_t = math.log1p(-s), math.log1p(-t)
    c = 1.0 - 2.0 * alpha
    q = -lg_s if c == 0.0 else -math.expm1(c * lg_s) / c
    return math.exp(alpha * (lg_s + lg_t)) * q


def cov_matrix(alpha, grid):
    """Covariance matrix of the process on ``grid``."""
    alpha = check_alpha(alpha)
    lg = grid.log_gap
    env = _envelope(alpha, lg)
    with np.errstate(over="ignore", invalid="ignore"):
        q = _martingale_clock(alpha, lg)
        idx = np.arange(lg.size)
        lo = np.minimum.outer(idx, idx)
        cov = np.outer(env, env) * q[lo]
    cov[np.outer(env, env) == 0.0] = 0.0
    cov[0, :] = cov[:, 0] = 0.0
    return cov


def cholesky_factor(alpha, grid):
    """Lower-triangular ``L`` with ``L @ L.T`` equal to ``cov_matrix``.

    Nodes with zero variance get zero rows.  The remaining block is
    factored with relative diagonal jitter escalating through
    ``JITTER_STEPS``.
    """
    cov = cov_matrix(alpha, grid)
    diag = np.diag(cov)
    live = diag > 0
    sub = cov[np.ix_(live, live)]
    scale = diag[live].mean() if live.any() else 0.0
    for jitter in JITTER_STEPS:
        try:
            lower = np.linalg.cholesky(sub + jitter * scale * np.eye(sub.shape[0]))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise FactorizationError(
            f"covariance for alpha={alpha} on this grid is not factorizable "
            f"with relative jitter up to {JITTER_STEPS[-1]:g}"
        )
    full = np.zeros_like(cov)
    full[np.ix_(live, live)] = lower
    return full


@dataclass(eq=False)
class PathBatch:
    """Sampled paths, one row per replication.

    ``martingale`` is ``X_t / (1-t)^alpha`` on the same nodes; it stays
    representable where ``values`` underflow next to ``t = 1`` and is
    ``nan`` wherever it diverges (``t = 1`` with ``alpha >= 1/2``).
    """

    grid: TimeGrid
    values: np.ndarray
    alpha: float
    seed: int
    method: str
    martingale: np.ndarray | None = None
    start: int = 0

    @property
    def n_paths(self):
        return self.values.shape[0]

    def __neg__(self):
        mart = None if self.martingale is None else -self.martingale
        return PathBatch(self.grid, -self.values, self.alpha, self.seed,
                         self.method, mart, self.start)


def _from_martingale(alpha, grid, mart):
    env = _envelope(alpha, grid.log_gap)
    with np.errstate(invalid="ignore"):
        values = mart * env
    values[:, env == 0.0] = 0.0
    return values


def _structured_paths(alpha, grid, z):
    dq = increment_variances(alpha, grid)
    mart = np.zeros_like(z)
    with np.errstate(invalid="ignore"):
        np.cumsum(z[:, 1:] * np.sqrt(dq), axis=1, out=mart[:, 1:])
    mart[:, 1:][:, np.isinf(dq)] = np.nan
    return _from_martingale(alpha, grid, mart), mart


def _dense_paths(alpha, grid, z):
    lower = cholesky_factor(alpha, grid)
    values = z @ lower.T
    env = _envelope(alpha, grid.log_gap)
    with np.errstate(divide="ignore", invalid="ignore"):
        mart = np.where(env > 0, values / env, np.nan)
    return values, mart


def _sde_paths(alpha, grid, z):
    lg = grid.log_gap
    gap = np.exp(lg)
    last_pinned = alpha > 0 and grid.reaches_one
    interior = gap[:-1]
    if alpha > 0 and np.any(interior <= 0):
        raise ValueError("sde sampler needs 1 - t > 0 at every node but the last")
    dt = np.exp(lg[:-1]) * -np.expm1(lg[1:] - lg[:-1])
    decay = 1.0 - alpha * dt / interior
    sd = np.sqrt(dt)
    x = np.ascontiguousarray(z.T)
    x[0] = 0.0
    for i in range(dt.size):
        x[i + 1] *= sd[i]
        x[i + 1] += x[i] * decay[i]
    if last_pinned:
        x[-1] = 0.0
    values = np.ascontiguousarray(x.T)
    del x
    env = _envelope(alpha, lg)
    mart = np.full_like(values, np.nan)
    live = env > 0
    if live.all():
        np.divide(values, env, out=mart)
    else:
        mart[:, live] = values[:, live] / env[live]
    return values, mart


def _time_change_paths(grid, z):
    # M_t = B~ at clock -log(1 - t); X_t = sqrt(1 - t) M_t
    clock_steps = grid.log_gap[:-1] - grid.log_gap[1:]
    mart = np.zeros_like(z)
    with np.errstate(invalid="ignore"):
        np.cumsum(z[:, 1:] * np.sqrt(clock_steps), axis=1, out=mart[:, 1:])
        values = mart * np.exp(0.5 * grid.log_gap)
    if grid.reaches_one:
        # X_1 = 0 almost surely while M diverges there
        values[:, -1] = 0.0
        mart[:, -1] = np.nan
    return values, mart


def draw_paths(method, alpha, grid, seed, start, count, factorization="structured"):
    """Paths for replications ``start .. start + count - 1``.

    Replication ``i`` consumes the normals of its own counter window, so the
    result for a given replication is independent of ``start``/``count``.
    """
    z = _rng.normals(seed, _rng.PATHS, start, count, len(grid))
    if method == "exact":
        if factorization == "structured":
            values, mart = _structured_paths(alpha, grid, z)
        elif factorization == "dense":
            values, mart = _dense_paths(alpha, grid, z)
        else:
            raise ValueError(f"unknown factorization {factorization!r}")
    elif method == "sde":
        values, mart = _sde_paths(alpha, grid, z)
    elif method == "time-change":
        values, mart = _time_change_paths(grid, z)
    else:
        raise ValueError(f"unknown sampler {method!r}; expected one of {METHODS}")
    return PathBatch(grid, values, alpha, seed, method, mart, start)


def sample_exact(alpha, grid, n_paths, seed, *, start=0, factorization="structured"):
    """Exact Gaussian draws of the alpha-Wiener bridge on ``grid``.

    Parameters
    ----------
    alpha : float
        Bridge parameter, ``alpha >= 0``.
    grid : TimeGrid
    n_paths : int
        Number of replications (rows).
    seed : int
        64-bit master seed.
    start : int, optional
        Index of the first replication.
    factorization : {'structured', 'dense'}
        ``structured`` applies the closed-form Cholesky factor of the
        covariance (diagonal envelope times a cumulative sum of independent
        increments) in O(m) per path; ``dense`` factors ``cov_matrix``
        numerically and costs O(m^2) per path.

    Returns
    -------
    PathBatch
    """
    alpha = check_alpha(alpha)
    n_paths = check_int(n_paths, "n_paths")
    seed = check_seed(seed)
    return draw_paths("exact", alpha, grid, seed, start, n_paths, factorization)


def sample_sde(alpha, grid, n_paths, seed, *, start=0):
    """Euler-Maruyama paths; for cross-checks only.

    A final node at ``t = 1`` is pinned to 0 when ``alpha > 0`` instead of
    evaluating the singular drift.
    """
    alpha = check_alpha(alpha)
    n_paths = check_int(n_paths, "n_paths")
    seed = check_seed(seed)
    return draw_paths("sde", alpha, grid, seed, start, n_paths)


def sample_half_time_change(grid, n_paths, seed, *, start=0):
    """Paths of the 1/2-Wiener bridge through a Wiener process run on the clock
    ``-log(1 - t)``.  Exact in law on the grid; a node at ``t = 1`` is 0."""
    n_paths = check_int(n_paths, "n_paths")
    seed = check_seed(seed)
    return draw_paths("time-change", 0.5, grid, seed, start, n_paths)


def sample_paths(method, alpha, grid, n_paths, seed, *, start=0):
    if method == "exact":
        return sample_exact(alpha, grid, n_paths, seed, start=start)
    if method == "sde":
        return sample_sde(alpha, grid, n_paths, seed, start=start)
    if method == "time-change":
        if check_alpha(alpha) != 0.5:
            raise ValueError("time-change sampler only exists for alpha = 1/2")
        return sample_half_time_change(grid, n_paths, seed, start=start)
    raise ValueError(f"unknown sampler {method!r}; expected one of {METHODS}")


def write_paths_csv(batch, path):
    """Dump ``batch`` as ``path_id,t,value`` rows, path-major."""
    nodes = batch.grid.nodes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "t", "value"])
        for row, values in enumerate(batch.values):
            pid = batch.start + row
            for t, v in zip(nodes, values):
                writer.writerow([pid, repr(float(t)), repr(float(v))])
