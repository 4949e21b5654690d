"""Monte Carlo verification of the exponential-functional identities.

Replications are cut into blocks of ``BLOCK`` consecutive indices.  Blocks
may run on several threads, but their partial moments are always merged in
ascending block order, so results do not depend on the worker count.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import kolmogorov, logsumexp

from . import _rng
from ._validation import check_alpha, check_int, check_real, check_seed
from .functionals import (
    DomainError,
    IdentityKind,
    LOG_OVERFLOW,
    check_domain,
    kind_grid,
    log_functionals,
    plain_log_functionals,
    target,
    truncated_half_target,
)
from .sampling import METHODS, TimeGrid, cov_alpha, draw_paths, make_grid
from .transforms import bridge_map, half_bridge_map, wiener_map

BLOCK = 1024
DEFAULT_REL_TOL = 0.02
COV_SE_BAND = 5.0


def worker_count():
    raw = os.environ.get("BRIDGELAB_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 200_000
    seed: int = 0
    grid_m: int = 4096
    eps: float = 1e-6
    antithetic: bool = True
    sampler: str = "exact"

    def __post_init__(self):
        check_int(self.n_paths, "n_paths", minimum=2)
        check_seed(self.seed)
        check_int(self.grid_m, "grid_m", minimum=2)
        eps = check_real(self.eps, "eps")
        if not 0.0 < eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {eps}")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even n_paths")
        if self.sampler not in METHODS:
            raise ValueError(f"unknown sampler {self.sampler!r}; expected one of {METHODS}")

    def to_dict(self):
        return asdict(self)

    @property
    def n_base(self):
        return self.n_paths // 2 if self.antithetic else self.n_paths


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    clamped_count: int = 0


class Moments:
    """Count, mean and centred second moment; merged with Chan's update."""

    def __init__(self, count=0, mean=0.0, m2=0.0):
        self.count = count
        self.mean = mean
        self.m2 = m2

    @classmethod
    def of(cls, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] == 0:
            return cls(0, np.zeros(x.shape[1:]), np.zeros(x.shape[1:]))
        # shifting by the first sample keeps identical samples exact
        shift = x[0]
        mean = shift + (x - shift).mean(axis=0)
        return cls(x.shape[0], mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else self.m2 * 0.0

    @property
    def stderr(self):
        if self.count == 0:
            return self.m2 * np.nan
        return np.sqrt(self.variance / self.count)


def _blocks(n):
    return [(start, min(BLOCK, n - start)) for start in range(0, n, BLOCK)]


def _map_blocks(fn, n):
    blocks = _blocks(n)
    workers = min(worker_count(), len(blocks)) if blocks else 1
    if workers <= 1:
        return [fn(*b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


def _merge(parts):
    total = Moments()
    for part in parts:
        total = total.merge(part)
    return total


def judge(mean, stderr, target_value, rel_tol=DEFAULT_REL_TOL, n_se=3.0):
    """Pass iff ``|mean - target| <= max(n_se * stderr, rel_tol * |target|)``.

    A zero target uses ``rel_tol`` as an absolute threshold.
    """
    scale = abs(target_value) if target_value != 0 else 1.0
    return abs(mean - target_value) <= max(n_se * stderr, rel_tol * scale)


def _z_score(mean, stderr, target_value):
    diff = mean - target_value
    if stderr > 0:
        return diff / stderr
    if diff == 0:
        return 0.0
    return math.copysign(math.inf, diff)


@dataclass
class IdentityReport:
    kind: IdentityKind
    alpha: float
    beta: float
    power: float
    estimate: Estimate
    target: float
    z: float
    verdict: str
    rel_tol: float
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == "pass"

    def recompute_verdict(self):
        ok = judge(self.estimate.mean, self.estimate.stderr, self.target, self.rel_tol)
        return "pass" if ok else "fail"

    def to_dict(self):
        z = self.z if math.isfinite(self.z) else None
        return {
            "kind": self.kind.value,
            "alpha": self.alpha,
            "beta": self.beta,
            "power": self.power,
            "estimate": asdict(self.estimate),
            "target": self.target,
            "z": z,
            "verdict": self.verdict,
            "rel_tol": self.rel_tol,
            "provenance": dict(self.provenance),
        }

    def csv_row(self):
        return [
            self.kind.value, repr(self.alpha), repr(self.beta), self.estimate.n,
            repr(self.provenance.get("eps")), repr(self.estimate.mean),
            repr(self.estimate.stderr), repr(self.target), repr(self.z), self.verdict,
        ]


CSV_HEADER = ["kind", "alpha", "beta", "n", "eps", "estimate", "stderr", "target", "z", "verdict"]


def _check_sampler(sampler, alpha):
    if sampler == "time-change" and alpha != 0.5:
        raise DomainError("the time-change sampler only exists for alpha = 1/2")


def _powered(logs, p):
    """I^p from log I; entries that would overflow are returned as nan."""
    scaled = p * logs
    bad = scaled > LOG_OVERFLOW
    out = np.exp(np.where(bad, 0.0, scaled))
    out[bad] = np.nan
    return out


def _paired(pos, neg):
    # antithetic pair means; a pair is dropped if either side overflowed
    pair = 0.5 * (pos + neg)
    return pair[~np.isnan(pair)], int(np.isnan(pos).sum() + np.isnan(neg).sum())


def _samples(pos, neg):
    if neg is None:
        keep = ~np.isnan(pos)
        return pos[keep], int((~keep).sum())
    return _paired(pos, neg)


def _path_logs(cfg, alpha, grid, start, count, evaluate):
    """``evaluate(batch, sign)`` on a block, plus the antithetic partner.

    Every functional here depends on the path only through ``beta * X``, so
    the negated path is evaluated by flipping the sign of beta.
    """
    batch = draw_paths(cfg.sampler, alpha, grid, cfg.seed, start, count)
    pos = evaluate(batch, 1.0)
    neg = evaluate(batch, -1.0) if cfg.antithetic else None
    return pos, neg


def estimate_identity(kind, alpha, beta, cfg=None, rel_tol=DEFAULT_REL_TOL):
    """Monte Carlo estimate of E[I^p] for one identity, checked against its target.

    For HALF_VANISH the target is the exact truncated expectation
    ``truncated_half_target(cfg.eps)``; its ``eps -> 0`` limit is 0.
    """
    cfg = cfg or MCConfig()
    kind, alpha = check_domain(kind, alpha)
    beta = check_real(beta, "beta")
    _check_sampler(cfg.sampler, alpha)
    grid = kind_grid(kind, alpha, cfg.grid_m, cfg.eps)
    p, goal = target(kind, alpha)
    if kind is IdentityKind.HALF_VANISH:
        goal = truncated_half_target(cfg.eps)

    def evaluate(batch, sign):
        return _powered(log_functionals(kind, alpha, sign * beta, batch), p)

    def block(start, count):
        pos, neg = _path_logs(cfg, alpha, grid, start, count, evaluate)
        kept, dropped = _samples(pos, neg)
        return Moments.of(kept), dropped

    parts = _map_blocks(block, cfg.n_base)
    moments = _merge(m for m, _ in parts)
    clamped = sum(d for _, d in parts)
    if moments.count == 0:
        raise RuntimeError("every replication overflowed the power stage")
    est = Estimate(float(moments.mean), float(moments.stderr), moments.count, clamped)
    z = _z_score(est.mean, est.stderr, goal)
    verdict = "pass" if judge(est.mean, est.stderr, goal, rel_tol) else "fail"
    return IdentityReport(kind, alpha, beta, p, est, goal, z, verdict, rel_tol, cfg.to_dict())


def estimate_via_transform(kind, source_alpha, beta, cfg=None, rel_tol=DEFAULT_REL_TOL):
    """Estimate DMMY or BOUGEROL on rescaled alpha-Wiener bridge paths.

    Paths of X^(source_alpha) are drawn on the source grid of the matching
    rescaling (to_bridge for alpha > 1/2, half_to_bridge for alpha = 1/2,
    to_wiener for alpha < 1/2) and mapped onto the identity's own grid, so
    the target is the identity's constant whatever ``source_alpha`` is.
    """
    cfg = cfg or MCConfig()
    kind = IdentityKind.parse(kind)
    source_alpha = check_alpha(source_alpha)
    beta = check_real(beta, "beta")
    _check_sampler(cfg.sampler, source_alpha)
    if kind not in (IdentityKind.DMMY, IdentityKind.BOUGEROL):
        raise DomainError("only dmmy and bougerol can be reached by a rescaling")
    grid = kind_grid(kind, kind.fixed_alpha, cfg.grid_m, cfg.eps)
    if kind is IdentityKind.DMMY:
        if source_alpha > 0.5:
            pmap = bridge_map(source_alpha, grid.nodes)
        elif source_alpha == 0.5:
            pmap = half_bridge_map(grid.nodes)
        else:
            raise DomainError("dmmy needs a source alpha >= 1/2")
    else:
        pmap = wiener_map(source_alpha, grid.nodes)
    p, goal = target(kind, kind.fixed_alpha)

    def evaluate(batch, sign):
        mapped = pmap.apply(batch)
        return _powered(log_functionals(kind, kind.fixed_alpha, sign * beta, mapped, grid), p)

    def block(start, count):
        pos, neg = _path_logs(cfg, source_alpha, pmap.source_grid, start, count, evaluate)
        kept, dropped = _samples(pos, neg)
        return Moments.of(kept), dropped

    parts = _map_blocks(block, cfg.n_base)
    moments = _merge(m for m, _ in parts)
    est = Estimate(float(moments.mean), float(moments.stderr), moments.count,
                   sum(d for _, d in parts))
    z = _z_score(est.mean, est.stderr, goal)
    verdict = "pass" if judge(est.mean, est.stderr, goal, rel_tol) else "fail"
    provenance = dict(cfg.to_dict(), source_alpha=source_alpha)
    return IdentityReport(kind, kind.fixed_alpha, beta, p, est, goal, z, verdict, rel_tol,
                          provenance)


# ----------------------------------------------------------------------------
# open question: power p(alpha) with E[(int_0^1 exp(beta X_t) dt)^p] = 1

@dataclass
class PowerResult:
    alpha: float
    beta: float
    p_hat: float | None
    ci: tuple | None
    stderr: float | None
    status: str
    iterations: int
    n: int
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["ci"] = list(self.ci) if self.ci is not None else None
        return out


def _log_mean_exp(x):
    return logsumexp(x) - math.log(x.size)


def _solve_power(logs, bracket=(-8.0, -1e-3), tol=1e-4, max_newton_failures=3, max_iter=200):
    """Root of g(p) = mean(I^p) - 1 by Newton, falling back to bisection.

    Returns ``(root, iterations)`` or ``(None, 0)`` without a sign change.
    """
    def g(p):
        return math.expm1(_log_mean_exp(p * logs))

    def dg(p):
        w = p * logs
        lme = _log_mean_exp(w)
        weights = np.exp(w - logsumexp(w))
        return math.exp(lme) * float(weights @ logs)

    lo, hi = bracket
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0) ^ (g_hi > 0):
        return None, 0
    x = -1.0 if lo < -1.0 < hi else 0.5 * (lo + hi)
    gx = g(x)
    failures = 0
    step = hi - lo
    for it in range(1, max_iter + 1):
        if (gx > 0) == (g_lo > 0):
            lo, g_lo = x, gx
        else:
            hi, g_hi = x, gx
        if abs(gx) < tol and (hi - lo < tol or abs(step) < tol):
            return x, it
        new = None
        if failures < max_newton_failures:
            slope = dg(x)
            cand = x - gx / slope if slope != 0 and math.isfinite(slope) else None
            if cand is not None and lo < cand < hi:
                g_cand = g(cand)
                if abs(g_cand) < abs(gx):
                    new, g_new = cand, g_cand
            if new is None:
                failures += 1
        if new is None:
            new = 0.5 * (lo + hi)
            g_new = g(new)
        step = new - x
        x, gx = new, g_new
    return x, max_iter


def estimate_power_exponent(alpha, beta, cfg=None, bracket=(-8.0, -1e-3)):
    """Search for p with E[(int_0^1 exp(beta X_t) dt)^p] = 1.

    One batch of functional values is reused for every trial ``p`` (common
    random numbers).  The confidence interval is the 95% delta-method
    interval.  ``status`` is ``"root"`` or ``"no root bracketed"``; a root
    is a numerical finding, not a claim that p(alpha) exists.
    """
    cfg = cfg or MCConfig()
    alpha = check_alpha(alpha)
    beta = check_real(beta, "beta")
    if beta == 0:
        raise DomainError("beta = 0 makes every p a root")
    _check_sampler(cfg.sampler, alpha)
    grid = make_grid(cfg.grid_m, "uniform", 0)

    def evaluate(batch, sign):
        return plain_log_functionals(alpha, sign * beta, batch)

    parts = _map_blocks(lambda s, c: _path_logs(cfg, alpha, grid, s, c, evaluate), cfg.n_base)
    pos = np.concatenate([a for a, _ in parts])
    neg = np.concatenate([b for _, b in parts]) if cfg.antithetic else None
    logs = pos if neg is None else np.concatenate([pos, neg])
    root, iters = _solve_power(logs, bracket)
    if root is None:
        return PowerResult(alpha, beta, None, None, None, "no root bracketed", 0,
                           logs.size, cfg.to_dict())
    samples = np.exp(root * pos) if neg is None else 0.5 * (np.exp(root * pos) + np.exp(root * neg))
    w = root * logs
    slope = math.exp(_log_mean_exp(w)) * float(np.exp(w - logsumexp(w)) @ logs)
    se = float(samples.std(ddof=1) / math.sqrt(samples.size) / abs(slope))
    ci = (root - 1.96 * se, root + 1.96 * se)
    return PowerResult(alpha, beta, float(root), ci, se, "root", iters, logs.size, cfg.to_dict())


# ----------------------------------------------------------------------------
# Bougerol's identity: density form and two-sample law comparison

def _wiener_clock_logs(t, cfg):
    """log A_t per replication, A_t = int_0^t exp(2 B_s) ds = t int_0^1 exp(2 sqrt(t) W_u) du."""
    grid = make_grid(cfg.grid_m, "uniform", 0)
    beta = 2.0 * math.sqrt(t)
    log_t = math.log(t)

    def evaluate(batch, sign=1.0):
        return log_t + log_functionals(IdentityKind.BOUGEROL, 0.0, sign * beta, batch)

    return grid, evaluate


def bougerol_density(t, x):
    """Density of sinh(B_t) scaled by sqrt(2 pi): exp(-arsinh(x)^2 / 2t) / sqrt((1 + x^2) t)."""
    return math.exp(-math.asinh(x) ** 2 / (2.0 * t)) / math.sqrt((1.0 + x * x) * t)


@dataclass
class DensityResult:
    t: float
    x: float
    lhs: float
    rhs: Estimate
    verdict: str
    rel_tol: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["rhs"] = asdict(self.rhs)
        return out


def density_check(t, x, cfg=None, rel_tol=DEFAULT_REL_TOL):
    """Compare the closed-form density side with E[A_t^-1/2 exp(-x^2 / 2 A_t)]."""
    cfg = cfg or MCConfig()
    t = check_real(t, "t")
    x = check_real(x, "x")
    if t <= 0:
        raise DomainError("t must be positive")
    if cfg.sampler == "time-change":
        raise DomainError("the density check samples Wiener paths (alpha = 0)")
    lhs = bougerol_density(t, x)
    grid, clock = _wiener_clock_logs(t, cfg)
    half_x2 = 0.5 * x * x

    def evaluate(batch, sign):
        log_a = clock(batch, sign)
        return np.exp(-0.5 * log_a - half_x2 * np.exp(-log_a))

    def block(start, count):
        pos, neg = _path_logs(cfg, 0.0, grid, start, count, evaluate)
        kept, _ = _samples(pos, neg)
        return Moments.of(kept)

    m = _merge(_map_blocks(block, cfg.n_base))
    rhs = Estimate(float(m.mean), float(m.stderr), m.count)
    verdict = "pass" if judge(rhs.mean, rhs.stderr, lhs, rel_tol) else "fail"
    return DensityResult(t, x, lhs, rhs, verdict, rel_tol, cfg.to_dict())


def ks_2samp_asymptotic(a, b):
    """Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    both = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, both, side="right") / n
    cdf_b = np.searchsorted(b, both, side="right") / m
    stat = float(np.abs(cdf_a - cdf_b).max())
    en = math.sqrt(n * m / (n + m))
    return stat, float(kolmogorov(en * stat))


@dataclass
class KSResult:
    t: float
    ks_stat: float
    p_value: float
    n: int
    control: bool
    verdict: str
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def ks_bougerol(t, cfg=None, control=False, level=0.01):
    """Two-sample KS test of sinh(B_t) against W evaluated at the clock A_t.

    Given ``A_t``, ``W_{A_t}`` is centred normal with variance ``A_t``, so the
    second sample is ``sqrt(A_t) Z'`` with ``Z'`` independent of the path.
    With ``control=True`` the second sample is ``sqrt(t) Z'`` instead, whose
    law differs from sinh(B_t); the verdict then passes on rejection.
    Antithetic pairing is not used here since it would correlate the sample.
    """
    cfg = cfg or MCConfig()
    t = check_real(t, "t")
    if t <= 0:
        raise DomainError("t must be positive")
    n = cfg.n_paths
    z = _rng.normals(cfg.seed, _rng.KS_SINH, 0, n, 1)[:, 0]
    sinh_sample = np.sinh(math.sqrt(t) * z)
    z2 = _rng.normals(cfg.seed, _rng.KS_CLOCK, 0, n, 1)[:, 0]
    if control:
        other = math.sqrt(t) * z2
    else:
        grid, clock = _wiener_clock_logs(t, cfg)

        def block(start, count):
            return clock(draw_paths("exact", 0.0, grid, cfg.seed, start, count))

        log_a = np.concatenate(_map_blocks(block, n))
        other = np.exp(0.5 * log_a) * z2
    stat, p_value = ks_2samp_asymptotic(sinh_sample, other)
    agrees = p_value > level
    verdict = "pass" if agrees != control else "fail"
    return KSResult(t, stat, p_value, n, control, verdict, cfg.to_dict())


# ----------------------------------------------------------------------------
# covariance check

@dataclass
class CovRow:
    s: float
    t: float
    empirical: float
    stderr: float
    expected: float
    mean_s: float
    mean_t: float
    verdict: str


@dataclass
class CovReport:
    alpha: float
    rows: list
    verdict: str
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {"alpha": self.alpha, "rows": [asdict(r) for r in self.rows],
                "verdict": self.verdict, "provenance": dict(self.provenance)}


def cov_check(alpha, pairs, cfg=None, band=COV_SE_BAND):
    """Empirical covariances at ``pairs`` against the closed-form kernel.

    Standard errors come from the sample second moment of the products
    ``X_s X_t`` (fourth moments of the path).  A pair passes when it lies
    within ``band`` standard errors.
    """
    cfg = cfg or MCConfig()
    alpha = check_alpha(alpha)
    _check_sampler(cfg.sampler, alpha)
    pairs = [(float(s), float(t)) for s, t in pairs]
    if not pairs:
        raise ValueError("no covariance pairs given")
    for s, t in pairs:
        if not (0 <= s <= 1 and 0 <= t <= 1):
            raise DomainError(f"pair ({s}, {t}) is outside [0, 1]^2")
    nodes = np.unique(np.array([0.0] + [v for pair in pairs for v in pair]))
    grid = TimeGrid.from_nodes(nodes, "custom")
    col = {v: i for i, v in enumerate(nodes)}
    left = np.array([col[s] for s, _ in pairs])
    right = np.array([col[t] for _, t in pairs])

    def block(start, count):
        x = draw_paths(cfg.sampler, alpha, grid, cfg.seed, start, count).values
        return Moments.of(x[:, left] * x[:, right]), Moments.of(x)

    parts = _map_blocks(block, cfg.n_paths)
    prod = _merge(p for p, _ in parts)
    level = _merge(v for _, v in parts)
    rows = []
    for k, (s, t) in enumerate(pairs):
        expected = cov_alpha(alpha, s, t)
        emp, se = float(prod.mean[k]), float(prod.stderr[k])
        ok = abs(emp - expected) <= band * se
        rows.append(CovRow(s, t, emp, se, expected, float(level.mean[left[k]]),
                           float(level.mean[right[k]]), "pass" if ok else "fail"))
    verdict = "pass" if all(r.verdict == "pass" for r in rows) else "fail"
    return CovReport(alpha, rows, verdict, cfg.to_dict())
