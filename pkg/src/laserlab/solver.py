"""Optimization over distributions on a block support.

Two exact programs and four heuristics drive the value bound.  On a fixed
marginal class D_gamma, Problem 2 maximizes entropy and Problem 1 maximizes
the linear-plus-half-entropy trade-off; both optima have Gibbs product form
and are found by iterative proportional fitting in log domain.  The
heuristics search the full simplex for a good marginal class to hand to the
exact programs.

Every quantity that feeds a certified claim is either a feasible point
(valid regardless of optimality) or a dual certificate (valid for arbitrary
multipliers), so solver convergence affects quality, never soundness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .distributions import Marginals, SupportDistribution, entropy, marginals
from .tensor_core import Triple

INNER_ITER_CAP = 100_000
OUTER_ITER_CAP = 1_000
KKT_TARGET = 1e-9
IPF_TOL = 1e-12


class InfeasibleMarginalsError(ValueError):
    """No distribution on the support attains the requested marginals."""

    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class SolverInstance:
    """A single optimization problem over distributions on S."""

    support: tuple[Triple, ...]
    log_values: tuple[float, ...]
    tau: float
    kind: str
    fixed_marginals: Marginals | None = None
    lam: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in {
            "problem1", "problem2",
            "heuristic1", "heuristic2", "heuristic3", "heuristic4",
        }:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "heuristic3" and (self.lam is None or not math.isfinite(self.lam)):
            raise ValueError("heuristic3 requires a finite lambda")
        if len(self.log_values) != len(self.support):
            raise ValueError("log_values length mismatch")


@dataclass(frozen=True)
class SolverResult:
    """A solved instance: the point found plus convergence diagnostics."""

    distribution: SupportDistribution
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    multipliers: tuple[Mapping[int, float], Mapping[int, float], Mapping[int, float]] | None = None

    def __post_init__(self) -> None:
        if self.kkt_residual < 0:
            raise ValueError("negative kkt residual")


class _Arrays:
    """Numpy view of a support: compact per-side label indices."""

    def __init__(self, support: Sequence[Triple], log_values: Sequence[float] | None = None):
        self.triples = sorted(support)
        if not self.triples:
            raise ValueError("empty support")
        self.x_labels = sorted({i for (i, _, _) in self.triples})
        self.y_labels = sorted({j for (_, j, _) in self.triples})
        self.z_labels = sorted({k for (_, _, k) in self.triples})
        xi = {v: n for n, v in enumerate(self.x_labels)}
        yi = {v: n for n, v in enumerate(self.y_labels)}
        zi = {v: n for n, v in enumerate(self.z_labels)}
        self.ix = np.array([xi[i] for (i, _, _) in self.triples])
        self.iy = np.array([yi[j] for (_, j, _) in self.triples])
        self.iz = np.array([zi[k] for (_, _, k) in self.triples])
        if log_values is not None:
            order = sorted(range(len(support)), key=lambda n: support[n])
            self.L = np.array([log_values[n] for n in order], dtype=float)
        else:
            self.L = np.zeros(len(self.triples))

    def side_sums(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mx = np.zeros(len(self.x_labels))
        my = np.zeros(len(self.y_labels))
        mz = np.zeros(len(self.z_labels))
        np.add.at(mx, self.ix, w)
        np.add.at(my, self.iy, w)
        np.add.at(mz, self.iz, w)
        return mx, my, mz

    def to_distribution(self, w: np.ndarray) -> SupportDistribution:
        return SupportDistribution(
            {t: float(p) for t, p in zip(self.triples, w) if p > 0.0}
        )


def _log_side_sums(arr: _Arrays, logits: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-label logsumexp of logits on each side."""
    out = []
    for idx, n in ((arr.ix, len(arr.x_labels)), (arr.iy, len(arr.y_labels)), (arr.iz, len(arr.z_labels))):
        peak = np.full(n, -np.inf)
        np.maximum.at(peak, idx, logits)
        safe_peak = np.where(np.isfinite(peak), peak, 0.0)
        acc = np.zeros(n)
        np.add.at(acc, idx, np.exp(logits - safe_peak[idx]))
        with np.errstate(divide="ignore"):
            out.append(np.where(acc > 0, safe_peak + np.log(np.maximum(acc, 1e-300)), -np.inf))
    return out[0], out[1], out[2]


def _marginal_targets(arr: _Arrays, marg: Marginals) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tx = np.array([marg.x_marg.get(v, 0.0) for v in arr.x_labels])
    ty = np.array([marg.y_marg.get(v, 0.0) for v in arr.y_labels])
    tz = np.array([marg.z_marg.get(v, 0.0) for v in arr.z_labels])
    for name, side, labels in (
        ("x", marg.x_marg, arr.x_labels),
        ("y", marg.y_marg, arr.y_labels),
        ("z", marg.z_marg, arr.z_labels),
    ):
        extra = [v for v, p in side.items() if p > IPF_TOL and v not in set(labels)]
        if extra:
            raise InfeasibleMarginalsError(
                f"{name} marginal puts mass on labels {extra} absent from the support", 1.0
            )
    return tx, ty, tz


def _ipf(
    arr: _Arrays,
    log_base: np.ndarray,
    marg: Marginals,
    tol: float = IPF_TOL,
    max_iter: int = INNER_ITER_CAP,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, int]:
    """Iterative proportional fitting of side factors in log domain.

    Fits beta proportional to exp(log_base + mx[i] + my[j] + mz[k]) to the
    target marginals.  Returns (log_beta, mx, my, mz, residual, iterations);
    residual is the max-norm marginal mismatch of the final normalized beta.
    Labels with zero target mass get multiplier -inf, zeroing their triples.
    """
    tx, ty, tz = _marginal_targets(arr, marg)
    with np.errstate(divide="ignore"):
        ltx, lty, ltz = np.log(tx), np.log(ty), np.log(tz)
    mx = np.zeros_like(tx)
    my = np.zeros_like(ty)
    mz = np.zeros_like(tz)
    mx[tx == 0.0] = -np.inf
    my[ty == 0.0] = -np.inf
    mz[tz == 0.0] = -np.inf

    def logits() -> np.ndarray:
        with np.errstate(invalid="ignore"):
            raw = log_base + mx[arr.ix] + my[arr.iy] + mz[arr.iz]
        return np.where(np.isnan(raw), -np.inf, raw)

    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        lg = logits()
        if not np.any(np.isfinite(lg)):
            raise InfeasibleMarginalsError("all support triples forced to zero", 1.0)
        sx, sy, sz = _log_side_sums(arr, lg)
        with np.errstate(invalid="ignore"):
            mx = np.where(tx > 0, mx + ltx - sx, -np.inf)
        lg = logits()
        sx, sy, sz = _log_side_sums(arr, lg)
        with np.errstate(invalid="ignore"):
            my = np.where(ty > 0, my + lty - sy, -np.inf)
        lg = logits()
        sx, sy, sz = _log_side_sums(arr, lg)
        with np.errstate(invalid="ignore"):
            mz = np.where(tz > 0, mz + ltz - sz, -np.inf)

        lg = logits()
        total = _logsumexp(lg)
        w = np.exp(lg - total)
        cx, cy, cz = arr.side_sums(w)
        residual = max(
            float(np.max(np.abs(cx - tx))),
            float(np.max(np.abs(cy - ty))),
            float(np.max(np.abs(cz - tz))),
        )
        if residual <= tol:
            break
    lg = logits()
    lg = lg - _logsumexp(lg)
    return lg, mx, my, mz, residual, it


def _logsumexp(v: np.ndarray) -> float:
    finite = v[np.isfinite(v)]
    if finite.size == 0:
        return -math.inf
    peak = float(np.max(finite))
    return peak + math.log(float(np.sum(np.exp(finite - peak))))


def max_entropy_with_marginals(
    support: Iterable[Triple],
    marg: Marginals,
    tol: float = 1e-11,
) -> SolverResult:
    """Problem 2: the entropy maximizer over D_gamma, in product form."""
    arr = _Arrays(list(support))
    log_beta, mx, my, mz, residual, it = _ipf(arr, np.zeros(len(arr.triples)), marg)
    if not residual <= 1e-8:
        raise InfeasibleMarginalsError("IPF failed to match marginals", residual)
    w = np.exp(log_beta)
    obj = _np_entropy(w)
    mults = (
        dict(zip(arr.x_labels, (float(v) for v in mx))),
        dict(zip(arr.y_labels, (float(v) for v in my))),
        dict(zip(arr.z_labels, (float(v) for v in mz))),
    )
    return SolverResult(
        distribution=arr.to_distribution(w),
        objective=obj,
        kkt_residual=residual,
        iterations=it,
        converged=residual <= tol,
        multipliers=mults,
    )


def solve_problem1(
    support: Iterable[Triple],
    log_values: Mapping[Triple, float],
    tau: float,
    marg: Marginals,
    tol: float = 1e-11,
) -> SolverResult:
    """Problem 1: maximize log alpha_V + (1/2) entropy(alpha) over D_gamma.

    alpha_B is constant on the class, so it is dropped from the internal
    objective and the caller adds it back from the marginals.  The optimum
    is alpha proportional to exp(2 L) x_i y_j z_k, fitted by IPF on base
    weights exp(2 L).
    """
    trips = sorted(support)
    arr = _Arrays(trips, [log_values[t] for t in trips])
    log_alpha, mx, my, mz, residual, it = _ipf(arr, 2.0 * arr.L, marg)
    if not residual <= 1e-8:
        raise InfeasibleMarginalsError("IPF failed to match marginals", residual)
    w = np.exp(log_alpha)
    obj = float(np.dot(w, arr.L)) + 0.5 * _np_entropy(w)
    mults = (
        dict(zip(arr.x_labels, (float(v) for v in mx))),
        dict(zip(arr.y_labels, (float(v) for v in my))),
        dict(zip(arr.z_labels, (float(v) for v in mz))),
    )
    return SolverResult(
        distribution=arr.to_distribution(w),
        objective=obj,
        kkt_residual=residual,
        iterations=it,
        converged=residual <= tol,
        multipliers=mults,
    )


def entropy_dual_bound(
    support: Iterable[Triple],
    marg: Marginals,
    multipliers: tuple[Mapping[int, float], Mapping[int, float], Mapping[int, float]],
) -> float:
    """Certified upper bound on max entropy over D_gamma.

    For any side multipliers m, every beta with the given marginals
    satisfies H(beta) <= ln sum_S exp(m_i + m_j + m_k) - sum gamma·m
    (Gibbs variational inequality).  Soundness does not require the
    multipliers to be optimal, so unconverged IPF output is acceptable.
    Triples touching a zero-mass label carry no feasible mass and are
    dropped from the partition sum.
    """
    mx, my, mz = multipliers
    terms = []
    for (i, j, k) in support:
        if marg.x_marg.get(i, 0.0) <= 0.0 or marg.y_marg.get(j, 0.0) <= 0.0 \
                or marg.z_marg.get(k, 0.0) <= 0.0:
            continue
        terms.append(mx[i] + my[j] + mz[k])
    if not terms:
        raise InfeasibleMarginalsError("no feasible triple for the marginals", 1.0)
    peak = max(terms)
    log_z = peak + math.log(math.fsum(math.exp(v - peak) for v in terms))
    dot = (
        math.fsum(p * mx[i] for i, p in marg.x_marg.items() if p > 0.0)
        + math.fsum(p * my[j] for j, p in marg.y_marg.items() if p > 0.0)
        + math.fsum(p * mz[k] for k, p in marg.z_marg.items() if p > 0.0)
    )
    return log_z - dot


def _np_entropy(w: np.ndarray) -> float:
    w = w[w > 0.0]
    return float(-np.dot(w, np.log(w)))


def _h2_gradient(arr: _Arrays, w: np.ndarray) -> np.ndarray:
    """Gradient of sum(gamma L) + (1/3) sum of marginal entropies."""
    sx, sy, sz = arr.side_sums(w)
    with np.errstate(divide="ignore"):
        lx, ly, lz = np.log(np.maximum(sx, 1e-300)), np.log(np.maximum(sy, 1e-300)), np.log(np.maximum(sz, 1e-300))
    return arr.L - (lx[arr.ix] + ly[arr.iy] + lz[arr.iz]) / 3.0 - 1.0


def _h2_objective(arr: _Arrays, w: np.ndarray) -> float:
    sx, sy, sz = arr.side_sums(w)
    return float(np.dot(w, arr.L)) + (
        _np_entropy(sx) + _np_entropy(sy) + _np_entropy(sz)
    ) / 3.0


def _h4_gradient(arr: _Arrays, w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lw = np.log(np.maximum(w, 1e-300))
    return _h2_gradient(arr, w) - 0.5 * (lw + 1.0)


def _h4_objective(arr: _Arrays, w: np.ndarray) -> float:
    return _h2_objective(arr, w) + 0.5 * _np_entropy(w)


def _h3_objective(arr: _Arrays, w: np.ndarray, lam: float) -> float:
    return math.exp(_h2_objective(arr, w)) + lam * math.exp(-_np_entropy(w))


def _h3_gradient(arr: _Arrays, w: np.ndarray, lam: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lw = np.log(np.maximum(w, 1e-300))
    a = math.exp(_h2_objective(arr, w))
    b = lam * math.exp(-_np_entropy(w))
    return a * _h2_gradient(arr, w) + b * (lw + 1.0)


def _eg_ascent(
    arr: _Arrays,
    w0: np.ndarray,
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    max_iter: int = INNER_ITER_CAP,
    target: float = KKT_TARGET,
) -> tuple[np.ndarray, float, int]:
    """Exponentiated-gradient ascent on the probability simplex.

    Returns (point, kkt gap, iterations).  The gap is max_S g - <w, g>,
    which for a concave objective upper-bounds the remaining improvement.
    """
    w = w0 / w0.sum()
    step = 0.5
    f = objective(w)
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(w)
        gap = max(float(np.max(g) - np.dot(w, g)), 0.0)
        if gap <= target:
            break
        shifted = g - np.max(g)
        trial_step = step
        for _ in range(60):
            logw = np.log(np.maximum(w, 1e-300)) + trial_step * shifted
            logw -= logw.max()
            cand = np.exp(logw)
            cand /= cand.sum()
            fc = objective(cand)
            if fc >= f - 1e-15:
                break
            trial_step *= 0.5
        else:
            break
        if fc > f:
            step = min(trial_step * 1.3, 50.0)
        else:
            step = trial_step
        w, f = cand, fc
    return w, gap, it


def _dirichlet_starts(rng: np.random.Generator, size: int, count: int) -> list[np.ndarray]:
    return [rng.dirichlet(np.ones(size)) for _ in range(count)]


def heuristic_gamma(
    kind: int,
    support: Iterable[Triple],
    log_values: Mapping[Triple, float],
    tau: float,
    lam: float | None = None,
    seed: int = 0,
    n_starts: int = 8,
    max_iter: int = INNER_ITER_CAP,
) -> SolverResult:
    """One of the four marginal-class search heuristics.

    1: product-form manifold ascent on gamma_V * gamma_B (multi-start).
    2: concave ascent of gamma_V * gamma_B over the simplex.
    3: multi-start ascent of gamma_V * gamma_B + lambda / gamma_N.
    4: concave ascent of gamma_V * gamma_B * sqrt(gamma_N).
    """
    trips = sorted(support)
    arr = _Arrays(trips, [log_values[t] for t in trips])
    n = len(trips)
    uniform = np.full(n, 1.0 / n)
    rng = np.random.default_rng(seed)

    if kind == 2:
        w, gap, it = _eg_ascent(
            arr, uniform, lambda v: _h2_objective(arr, v), lambda v: _h2_gradient(arr, v),
            max_iter=max_iter,
        )
        return SolverResult(arr.to_distribution(w), _h2_objective(arr, w), gap, it, gap <= KKT_TARGET)
    if kind == 4:
        w, gap, it = _eg_ascent(
            arr, uniform, lambda v: _h4_objective(arr, v), lambda v: _h4_gradient(arr, v),
            max_iter=max_iter,
        )
        return SolverResult(arr.to_distribution(w), _h4_objective(arr, w), gap, it, gap <= KKT_TARGET)
    if kind == 3:
        if lam is None:
            raise ValueError("heuristic 3 requires lambda")
        starts = [uniform] + _dirichlet_starts(rng, n, max(n_starts - 1, 7))
        best: tuple[np.ndarray, float, int] | None = None
        for w0 in starts:
            w, gap, it = _eg_ascent(
                arr, w0, lambda v: _h3_objective(arr, v, lam),
                lambda v: _h3_gradient(arr, v, lam),
                max_iter=max(200, max_iter // 40),
            )
            f = _h3_objective(arr, w, lam)
            if best is None or f > best[1]:
                best = (w, f, it)
        w, f, it = best
        g = _h3_gradient(arr, w, lam)
        gap = float(np.max(g) - np.dot(w, g))
        return SolverResult(arr.to_distribution(w), f, max(gap, 0.0), it, gap <= KKT_TARGET)
    if kind == 1:
        return _heuristic1(arr, rng, n_starts, max_iter)
    raise ValueError(f"unknown heuristic kind {kind}")


def _heuristic1(
    arr: _Arrays, rng: np.random.Generator, n_starts: int, max_iter: int
) -> SolverResult:
    """Product-form gamma: softmax of a_i + b_j + c_k over S, ascent on H2's objective."""
    nx, ny, nz = len(arr.x_labels), len(arr.y_labels), len(arr.z_labels)

    def weights(theta: np.ndarray) -> np.ndarray:
        a, b, c = theta[:nx], theta[nx:nx + ny], theta[nx + ny:]
        lg = a[arr.ix] + b[arr.iy] + c[arr.iz]
        lg -= lg.max()
        w = np.exp(lg)
        return w / w.sum()

    def objective(theta: np.ndarray) -> float:
        return _h2_objective(arr, weights(theta))

    def grad(theta: np.ndarray) -> np.ndarray:
        w = weights(theta)
        g = _h2_gradient(arr, w)
        centered = w * (g - np.dot(w, g))
        out = np.zeros_like(theta)
        np.add.at(out[:nx], arr.ix, centered)
        np.add.at(out[nx:nx + ny], arr.iy, centered)
        np.add.at(out[nx + ny:], arr.iz, centered)
        return out

    best: tuple[np.ndarray, float, int] | None = None
    starts = [np.zeros(nx + ny + nz)] + [
        rng.normal(size=nx + ny + nz) for _ in range(max(n_starts - 1, 7))
    ]
    for theta in starts:
        theta = theta.copy()
        f = objective(theta)
        step = 1.0
        it = 0
        for it in range(1, max_iter // 20 + 1):
            g = grad(theta)
            if float(np.linalg.norm(g, ord=np.inf)) <= KKT_TARGET:
                break
            trial = step
            for _ in range(50):
                cand = theta + trial * g
                fc = objective(cand)
                if fc >= f:
                    break
                trial *= 0.5
            else:
                break
            step = min(trial * 1.5, 1e3)
            theta, f = cand, fc
        if best is None or f > best[1]:
            best = (theta, f, it)
    theta, f, it = best
    w = weights(theta)
    g = grad(theta)
    gap = float(np.linalg.norm(g, ord=np.inf))
    return SolverResult(arr.to_distribution(w), f, gap, it, gap <= KKT_TARGET)


LAMBDA_SWEEP: tuple[float, ...] = (0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7)


@dataclass(frozen=True)
class BoundCandidate:
    """One marginal class pushed through Problems 1 and 2, with its bound."""

    heuristic: str
    gamma: SupportDistribution
    alpha: SupportDistribution
    log_alpha_V: float
    log_alpha_B: float
    log_alpha_N: float
    max_log_beta_N: float
    bound_log: float
    dual_multipliers: tuple[Mapping[int, float], Mapping[int, float], Mapping[int, float]] | None
    kkt_residual: float


@dataclass(frozen=True)
class PipelineOutcome:
    best: BoundCandidate
    candidates: tuple[BoundCandidate, ...]
    failures: tuple[str, ...] = ()


def evaluate_gamma(
    support: Sequence[Triple],
    log_values: Mapping[Triple, float],
    tau: float,
    gamma: SupportDistribution,
    heuristic: str,
) -> BoundCandidate:
    """Run Problems 1 and 2 on D_gamma and assemble the refined bound.

    The entropy of the Problem 2 optimum enters only through the dual
    certificate, so the bound is a valid lower bound even if either solve
    stopped short of convergence.
    """
    marg = marginals(gamma)
    p1 = solve_problem1(support, log_values, tau, marg)
    p2 = max_entropy_with_marginals(support, marg)
    dual = entropy_dual_bound(support, marg, p2.multipliers)
    alpha = p1.distribution
    log_v = math.fsum(p * log_values[t] for t, p in alpha.weights.items() if p > 0.0)
    log_b = (
        entropy(marg.x_marg.values())
        + entropy(marg.y_marg.values())
        + entropy(marg.z_marg.values())
    ) / 3.0
    log_n = entropy(alpha.weights.values())
    max_log_bn = max(dual, log_n)
    bound = log_v + log_b + 0.5 * (log_n - max_log_bn)
    return BoundCandidate(
        heuristic=heuristic,
        gamma=gamma,
        alpha=alpha,
        log_alpha_V=log_v,
        log_alpha_B=log_b,
        log_alpha_N=log_n,
        max_log_beta_N=max_log_bn,
        bound_log=bound,
        dual_multipliers=p2.multipliers,
        kkt_residual=max(p1.kkt_residual, p2.kkt_residual),
    )


def full_pipeline_gamma(
    support: Iterable[Triple],
    log_values: Mapping[Triple, float],
    tau: float,
    heuristics: Sequence[int] = (1, 2, 3, 4),
    extra_gammas: Sequence[tuple[str, SupportDistribution]] = (),
    lam_sweep: Sequence[float] = LAMBDA_SWEEP,
    seed: int = 0,
    max_iter: int = INNER_ITER_CAP,
) -> PipelineOutcome:
    """Search for the best refined bound over candidate marginal classes.

    Candidates come from the requested heuristics, any caller-supplied
    distributions, and always a point mass on the best single triple (a
    valid zeroing-out bound that keeps the pipeline total even when every
    heuristic fails).
    """
    trips = sorted(support)
    candidates: list[BoundCandidate] = []
    failures: list[str] = []

    best_triple = max(trips, key=lambda t: (log_values[t], t))
    gammas: list[tuple[str, SupportDistribution]] = [
        ("point-mass", SupportDistribution.point_mass(best_triple))
    ]
    for kind in heuristics:
        if kind == 3:
            for lam in lam_sweep:
                try:
                    res = heuristic_gamma(3, trips, log_values, tau, lam=lam, seed=seed, max_iter=max_iter)
                    gammas.append((f"h3[lam={lam:g}]", res.distribution))
                except Exception as exc:  # noqa: BLE001 - aggregated below
                    failures.append(f"h3[lam={lam:g}]: {exc}")
        else:
            try:
                res = heuristic_gamma(kind, trips, log_values, tau, seed=seed, max_iter=max_iter)
                gammas.append((f"h{kind}", res.distribution))
            except Exception as exc:  # noqa: BLE001
                failures.append(f"h{kind}: {exc}")
    gammas.extend(extra_gammas)

    for name, gamma in gammas:
        try:
            candidates.append(evaluate_gamma(trips, log_values, tau, gamma, name))
        except Exception as exc:  # noqa: BLE001
            failures.append(f"{name}: {exc}")
    if not candidates:
        raise RuntimeError("all pipeline candidates failed: " + "; ".join(failures))
    best = max(candidates, key=lambda c: c.bound_log)
    return PipelineOutcome(best=best, candidates=tuple(candidates), failures=tuple(failures))


def kernel_basis(support: Sequence[Triple]) -> np.ndarray:
    """Orthonormal basis of the kernel of the marginal map on the support.

    Rows of the constraint matrix are the per-label indicator sums on each
    side plus the total-mass constraint; the kernel is the set of mass-
    preserving perturbations that leave all marginals fixed.  Used by the
    brute-force oracles in the tests.
    """
    arr = _Arrays(list(support))
    n = len(arr.triples)
    rows = []
    for idx, count in ((arr.ix, len(arr.x_labels)), (arr.iy, len(arr.y_labels)), (arr.iz, len(arr.z_labels))):
        for lab in range(count):
            rows.append((idx == lab).astype(float))
    rows.append(np.ones(n))
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > 1e-10))
    return vt[rank:]


def grid_scan_problem1(
    support: Sequence[Triple],
    log_values: Mapping[Triple, float],
    base: SupportDistribution,
    steps: int = 2001,
    span: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Brute-force oracle: scan Problem 1's objective along the marginal kernel.

    Only supports kernels of dimension <= 2 (a grid over the coefficients).
    Returns (best objective, best weight vector).
    """
    arr = _Arrays(sorted(support), [log_values[t] for t in sorted(support)])
    basis = kernel_basis(arr.triples)
    if basis.shape[0] > 2:
        raise ValueError(f"kernel dimension {basis.shape[0]} too large for grid scan")
    w0 = np.array([base[t] for t in arr.triples])

    def objective(w: np.ndarray) -> float:
        if np.any(w < -1e-12):
            return -math.inf
        w = np.maximum(w, 0.0)
        return float(np.dot(w, arr.L)) + 0.5 * _np_entropy(w)

    best_f, best_w = objective(w0), w0
    coeffs = np.linspace(-span, span, steps)
    if basis.shape[0] == 0:
        return best_f, best_w
    if basis.shape[0] == 1:
        points = (w0 + c * basis[0] for c in coeffs)
    else:
        points = (w0 + c1 * basis[0] + c2 * basis[1] for c1 in coeffs for c2 in coeffs)
    for w in points:
        f = objective(w)
        if f > best_f:
            best_f, best_w = f, w.copy()
    return best_f, np.maximum(best_w, 0.0)
