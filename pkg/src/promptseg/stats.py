"""Paired Wilcoxon signed-rank tests and win/loss/draw summaries.

Per-image score differences between two methods are tested two-sided;
zero differences are dropped before ranking. The exact null distribution
(dynamic programming over rank subset sums) is used for small samples
without ties; otherwise a normal approximation with tie correction and
continuity correction applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as sp_stats

from .errors import AllZeroDiffsError, EmptyGroupError
from .exchange import ScoreTable

# Largest zero-free sample size for which the exact distribution is used.
EXACT_LIMIT = 25


@dataclass(frozen=True)
class TestResult:
    """Outcome of one two-sided signed-rank test at a given alpha.

    ``w_statistic`` is min(w_plus, w_minus); ``method`` records whether the
    p-value came from the exact distribution or the normal approximation;
    ``verdict`` is draw iff p >= alpha, else win/loss by the sign of
    w_plus - w_minus.
    """

    n_effective: int
    w_statistic: float
    w_plus: float
    w_minus: float
    p_value: float
    method: str
    verdict: str


def _exact_two_sided(n: int, w_plus: float) -> float:
    """Exact two-sided p for integer ranks 1..n without ties.

    counts[s] is the number of rank subsets summing to s; the p-value adds
    both tails at the observed statistic and is clipped at 1 (the tails
    overlap when the statistic sits exactly at the distribution center).
    """
    total = n * (n + 1) // 2
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for rank in range(1, n + 1):
        counts[rank:] = counts[rank:] + counts[: total + 1 - rank]
    w_lo = int(round(min(w_plus, total - w_plus)))
    w_hi = total - w_lo
    p = (int(counts[: w_lo + 1].sum()) + int(counts[w_hi:].sum())) / 2.0**n
    return min(p, 1.0)


def _approx_two_sided(abs_diffs: np.ndarray, w: float) -> float:
    """Normal approximation with tie correction and continuity correction."""
    n = abs_diffs.size
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_sizes = np.unique(abs_diffs, return_counts=True)
    tie_sizes = tie_sizes.astype(np.float64)
    var -= float((tie_sizes**3 - tie_sizes).sum()) / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(w - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(math.erfc(z / math.sqrt(2.0)))


def wilcoxon_signed_rank(diffs, alpha: float = 0.05) -> TestResult:
    """Two-sided signed-rank test over paired differences.

    Zeros are dropped; absolute differences are ranked with midranks on
    ties. Raises AllZeroDiffsError when nothing remains.
    """
    diffs = np.asarray(diffs, dtype=np.float64).ravel()
    diffs = diffs[diffs != 0.0]
    n = int(diffs.size)
    if n == 0:
        raise AllZeroDiffsError("all paired differences are zero")
    abs_diffs = np.abs(diffs)
    ranks = sp_stats.rankdata(abs_diffs)
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)
    has_ties = np.unique(abs_diffs).size < n
    if n <= EXACT_LIMIT and not has_ties:
        p = _exact_two_sided(n, w_plus)
        method = "exact"
    else:
        p = _approx_two_sided(abs_diffs, w)
        method = "normal_approx"
    verdict = "draw" if p >= alpha else ("win" if w_plus > w_minus else "loss")
    return TestResult(n, w, w_plus, w_minus, p, method, verdict)


def _degenerate_draw() -> TestResult:
    # All differences zero: the methods are indistinguishable on this data.
    return TestResult(0, 0.0, 0.0, 0.0, 1.0, "exact", "draw")


def _mirrored(result: TestResult) -> TestResult:
    verdict = {"win": "loss", "loss": "win"}.get(result.verdict, "draw")
    return replace(
        result, w_plus=result.w_minus, w_minus=result.w_plus, verdict=verdict
    )


def win_loss_draw(
    table: ScoreTable, alpha: float = 0.05
) -> dict[str, dict[tuple[str, str], TestResult]]:
    """Pairwise method verdicts per dataset.

    Each ordered method pair gets one test over images scored by both
    methods (aligned by image id). The matrix is antisymmetric by
    construction: (a, b) = win iff (b, a) = loss. Identical score vectors,
    including a method against itself, are draws with p = 1.
    """
    scores: dict[str, dict[str, dict[str, float]]] = {}
    for row in table.rows:
        scores.setdefault(row.dataset, {}).setdefault(row.method, {})[
            row.image_id
        ] = row.msa
    out: dict[str, dict[tuple[str, str], TestResult]] = {}
    for dataset in sorted(scores):
        methods = sorted(scores[dataset])
        cells: dict[tuple[str, str], TestResult] = {}
        for i, a in enumerate(methods):
            cells[(a, a)] = _degenerate_draw()
            for b in methods[i + 1 :]:
                common = sorted(scores[dataset][a].keys() & scores[dataset][b].keys())
                if not common:
                    raise EmptyGroupError(
                        f"no common images for {a!r} vs {b!r} in dataset {dataset!r}"
                    )
                diffs = np.array(
                    [scores[dataset][a][img] - scores[dataset][b][img] for img in common]
                )
                if np.all(diffs == 0.0):
                    result = _degenerate_draw()
                else:
                    result = wilcoxon_signed_rank(diffs, alpha)
                cells[(a, b)] = result
                cells[(b, a)] = _mirrored(result)
        out[dataset] = cells
    return out
