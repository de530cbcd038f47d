"""Heavy-tail estimation and order-statistics simulation lab.

Validates the statistical model behind the burnout signal: Beta-distributed
normalized distances give exponentially-distributed log-spacings with mean
1/(alpha*i), the tail index is recoverable by the Hill estimator, and the
link-admission stopping time behaves like a coupon-collector waiting time.
All simulations use the counter-based Philox generator so trial streams are
reproducible and parallelizable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateTail, OutOfRangeSample


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


# Hill estimation ----------------------------------------------------------

def hill_estimator(samples: np.ndarray, k: int) -> float:
    """Tail index from the top-k order statistics of a positive sample."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if not 0 < k < n:
        raise ValueError(f"k must be in (0, {n}), got {k}")
    top = x[n - k:]
    ref = x[n - k - 1]
    s = np.sum(np.log(top) - np.log(ref))
    if s <= 0.0:
        raise DegenerateTail("top-k samples are all equal")
    return float(k / s)


@dataclass
class TailEstimate:
    k_values: np.ndarray
    alpha_hats: np.ndarray
    plateau_range: tuple[int, int] | None   # inclusive k bounds
    plateau_value: float | None


def hill_curve(samples: np.ndarray, k_values, rel_spread: float = 0.15) -> TailEstimate:
    """Hill estimates over a k sweep plus the widest stable plateau.

    The plateau is the longest contiguous k range whose estimates all lie
    within ``rel_spread`` of their median.
    """
    k_values = np.asarray(sorted(k_values), dtype=np.int64)
    alphas = np.array([hill_estimator(samples, int(k)) for k in k_values])
    best = (0, 0)
    lo = 0
    for hi in range(len(k_values)):
        while lo <= hi:
            window = alphas[lo:hi + 1]
            med = np.median(window)
            if np.all(np.abs(window - med) <= rel_spread * med):
                break
            lo += 1
        if hi - lo > best[1] - best[0]:
            best = (lo, hi)
    if best[1] > best[0]:
        lo, hi = best
        return TailEstimate(k_values, alphas, (int(k_values[lo]), int(k_values[hi])),
                            float(np.median(alphas[lo:hi + 1])))
    return TailEstimate(k_values, alphas, None, None)


# order-statistic spacings -------------------------------------------------

def ks_statistic(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance against an exact CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    f = cdf(x)
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - f), np.max(f - (grid - 1.0 / n))))


def sample_beta_power(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Beta(alpha, 1) draws via the inverse CDF U^(1/alpha)."""
    return rng.random(size) ** (1.0 / alpha)


@dataclass
class SpacingSimulation:
    alpha: float
    omega: int
    trials: int
    means: np.ndarray       # empirical mean of the log-spacing at index i (1-based)
    variances: np.ndarray
    ks_by_index: dict[int, float]


def simulate_log_spacings(alpha: float, omega: int, trials: int, seed: int = 0,
                          ks_indices=()) -> SpacingSimulation:
    """Sort Beta(alpha,1) draws per trial and measure consecutive log-ratios.

    The log-spacing at index i should follow Exp(alpha * i); KS distances are
    reported for the requested indices.
    """
    rng = _rng(seed)
    z = np.sort(sample_beta_power(alpha, (trials, omega), rng), axis=1)
    tau = np.log(z[:, 1:] / z[:, :-1])   # column i-1 holds the spacing at index i
    means = tau.mean(axis=0)
    variances = tau.var(axis=0, ddof=1)
    ks = {}
    for i in ks_indices:
        rate = alpha * i
        ks[int(i)] = ks_statistic(tau[:, i - 1], lambda x: 1.0 - np.exp(-rate * x))
    return SpacingSimulation(alpha, omega, trials, means, variances, ks)


# coupon collector ---------------------------------------------------------

@dataclass
class CouponCollectorEstimate:
    m: int
    p_two: float
    exact_classical: float     # m * H_m, exact when every turn covers one node
    approx_mixed: float        # finite-m mixed-draw approximation
    approx_asymptotic: float   # m ln m / (1+p) + p / (1+p)^2
    mc_mean: float
    mc_se: float


def harmonic(m: int) -> float:
    return float(np.sum(1.0 / np.arange(1, m + 1)))


def simulate_coupon_collector(m: int, p_two: float, trials: int,
                              seed: int = 0) -> np.ndarray:
    """Turns until all m coupons seen; each turn covers 2 distinct coupons
    with probability p_two, else 1."""
    rng = _rng(seed, stream=1)
    collected = np.zeros((trials, m), dtype=bool)
    turns = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)
    t = 0
    while active.any():
        t += 1
        idx = np.flatnonzero(active)
        b1 = rng.integers(0, m, idx.size)
        collected[idx, b1] = True
        if p_two > 0.0:
            two = rng.random(idx.size) < p_two
            if two.any():
                j = idx[two]
                b2 = rng.integers(0, m - 1, j.size)
                b2 = b2 + (b2 >= b1[two])
                collected[j, b2] = True
        done = collected[idx].all(axis=1)
        turns[idx[done]] = t
        active[idx[done]] = False
    return turns


def coupon_collector_expected_turns(m: int, p_two: float, trials: int = 20000,
                                    seed: int = 0) -> CouponCollectorEstimate:
    h = harmonic(m)
    exact = m * h
    if m > 1:
        a1 = 1.0 / m + p_two / (m - 1)
        a2 = p_two / (m * (m - 1))
        approx = h / a1 + a2 / a1**2
    else:
        approx = 1.0
    asym = m * np.log(max(m, 2)) / (1.0 + p_two) + p_two / (1.0 + p_two) ** 2
    t = simulate_coupon_collector(m, p_two, trials, seed)
    return CouponCollectorEstimate(m, p_two, exact, float(approx), float(asym),
                                   float(t.mean()),
                                   float(t.std(ddof=1) / np.sqrt(trials)))


# Q-Q pairs ----------------------------------------------------------------

def qq_pairs(samples: np.ndarray, alpha: float,
             beta: float = 1.0) -> tuple[np.ndarray, bool]:
    """Empirical vs theoretical Beta quantiles at positions (j-0.5)/n.

    Returns ([n, 2] pairs, degenerate flag); the flag marks constant samples.
    """
    x = np.asarray(samples, dtype=np.float64)
    if np.any(x <= 0.0) or np.any(x > 1.0):
        raise OutOfRangeSample("samples must lie in (0, 1]")
    x = np.sort(x)
    n = x.size
    pos = (np.arange(1, n + 1) - 0.5) / n
    theo = stats.beta.ppf(pos, alpha, beta)
    degenerate = bool(n > 1 and x[0] == x[-1])
    return np.column_stack([x, theo]), degenerate


# growth-curve emission ----------------------------------------------------

def growth_curves(sorted_distances: np.ndarray,
                  patch_labels: np.ndarray | None = None,
                  baseline_scores: np.ndarray | None = None,
                  consistent_percentile: float = 80.0) -> list[dict]:
    """Per neighbor index, mean/std growth rate stratified by patch class.

    Classes require labels plus baseline scores: anomalous patches scoring
    below the given percentile of normal-patch scores count as consistent.
    Returns plot-ready records (one per class and index).
    """
    from .burnout import growth_rates

    n, m, p = sorted_distances.shape
    tau = growth_rates(sorted_distances).reshape(n * m, p - 1)
    if patch_labels is None:
        strata = {"all": np.ones(n * m, dtype=bool)}
    else:
        labels = patch_labels.reshape(n * m).astype(bool)
        if baseline_scores is None:
            strata = {"normal": ~labels, "anomalous": labels}
        else:
            scores = baseline_scores.reshape(n * m)
            thresh = np.percentile(scores[~labels], consistent_percentile)
            consistent = labels & (scores < thresh)
            strata = {
                "normal": ~labels,
                "consistent_anomaly": consistent,
                "inconsistent_anomaly": labels & ~consistent,
            }
    records = []
    for name, mask in strata.items():
        if not mask.any():
            continue
        sel = tau[mask]
        mean = sel.mean(axis=0)
        std = sel.std(axis=0)
        for i in range(p - 1):
            records.append({"class": name, "neighbor_index": i + 1,
                            "mean": float(mean[i]), "std": float(std[i]),
                            "count": int(mask.sum())})
    return records
