"""Residual-whiteness analysis and validation-report assembly.

The whiteness statistic is the scaled sum of squared residual
autocorrelations

    N / R(0)^2 * sum_{tau=1..M} R(tau)^2

compared against beta^2, where beta solves exp(-beta^2/2)/sqrt(2*pi) = alpha
(bisection).  That threshold equation sets the normal *density*, not a tail
probability, equal to alpha; it is implemented as specified, and a flag
exposes the standard chi-square(M) threshold for cross-checking.  The
calibration test in the suite measures the actual false-alarm rate of both.
Residuals are mean-removed by default: a nonzero mean usually reflects a
per-unit offset rather than unmodeled dynamics, and trivially fails any
whiteness check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sp_stats

from .errors import AlphaOutOfRange, IncompleteRun, TooFewSamples

DEFAULT_LAGS = 25
DEFAULT_ALPHA = 0.01
_DENSITY_PEAK = 1.0 / math.sqrt(2.0 * math.pi)


def autocorrelation(e, max_lag: int) -> np.ndarray:
    """Biased residual autocorrelation R(tau) = (1/N) sum e(t) e(t-tau) for
    tau = 0..max_lag (sum over the N-tau valid products, divided by N)."""
    e = np.asarray(e, dtype=float)
    n = len(e)
    if max_lag < 1:
        raise TooFewSamples("need max_lag >= 1")
    if n <= max_lag:
        raise TooFewSamples(f"{n} samples for {max_lag} lags")
    out = np.empty(max_lag + 1)
    for tau in range(max_lag + 1):
        out[tau] = float(e[tau:] @ e[: n - tau]) / n
    return out


def beta_for_alpha(alpha: float, tol: float = 1e-10) -> float:
    """Solve exp(-beta^2/2)/sqrt(2*pi) = alpha for beta by bisection."""
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha = {alpha} outside (0, 1)")
    if alpha >= _DENSITY_PEAK:
        raise AlphaOutOfRange(
            f"alpha = {alpha} >= 1/sqrt(2*pi); the density equation has no solution")
    lo, hi = 0.0, 50.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _DENSITY_PEAK * math.exp(-mid * mid / 2.0) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class WhitenessResult:
    autocorr: np.ndarray
    statistic: float
    beta: float
    beta_squared: float
    threshold: float          # what `passed` was decided against
    confidence_alpha: float
    lags: int
    n_samples: int
    passed: bool
    band: float               # per-lag confidence band on R(tau): beta*R(0)/sqrt(N)
    used_chi2: bool
    mean_removed: bool
    degenerate: bool = False  # residual is numerical zero at the data's scale


def whiteness_test(e, max_lag: int = DEFAULT_LAGS, alpha: float = DEFAULT_ALPHA,
                   remove_mean: bool = True, use_chi2: bool = False,
                   signal_scale: float | None = None) -> WhitenessResult:
    """Whiteness verdict for a residual sequence.

    passed is statistic < beta^2 (or < chi2_{1-alpha}(M) with use_chi2).
    When signal_scale is given and the residual RMS is below 1e-9 of it, the
    fit reproduces the data to numerical precision; the statistic of such
    float dust is meaningless and the test passes as degenerate.
    """
    e = np.asarray(e, dtype=float)
    if remove_mean:
        e = e - e.mean()
    r = autocorrelation(e, max_lag)
    n = len(e)
    beta = beta_for_alpha(alpha)
    beta_sq = beta * beta
    if r[0] == 0.0:
        statistic = 0.0   # identically zero residual: nothing left to test
    else:
        statistic = float(n * np.sum(r[1:] ** 2) / r[0] ** 2)
    threshold = float(sp_stats.chi2.ppf(1.0 - alpha, max_lag)) if use_chi2 else beta_sq
    degenerate = bool(signal_scale is not None
                      and math.sqrt(r[0]) < 1e-9 * abs(signal_scale))
    return WhitenessResult(
        autocorr=r, statistic=statistic, beta=beta, beta_squared=beta_sq,
        threshold=threshold, confidence_alpha=alpha, lags=max_lag, n_samples=n,
        passed=bool(statistic < threshold) or degenerate,
        band=float(beta * r[0] / math.sqrt(n)),
        used_chi2=use_chi2, mean_removed=remove_mean, degenerate=degenerate)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class SubsystemRun:
    """One subsystem's results on one dataset."""

    sub_id: int
    label: str
    dataset: str                      # "training" or "validation"
    error_index: float
    whiteness: WhitenessResult | None = None
    parameters: dict = field(default_factory=dict)

    REQUIRED = ("sub_id", "label", "dataset", "error_index")


@dataclass
class ValidationReport:
    runs: list
    metadata: dict

    def error_table(self) -> dict:
        table = {}
        for run in self.runs:
            table.setdefault(run.dataset, {})[run.sub_id] = run.error_index
        return table

    def all_passed(self, max_error_index: float) -> bool:
        for run in self.runs:
            if run.error_index >= max_error_index:
                return False
            if run.whiteness is not None and not run.whiteness.passed:
                return False
        return True

    def to_text(self) -> str:
        lines = ["validation report", "=" * 60]
        for key in sorted(self.metadata):
            lines.append(f"{key}: {self.metadata[key]}")
        lines.append("")
        lines.append(f"{'subsystem':<28}{'dataset':<12}{'error index %':>14}")
        lines.append("-" * 60)
        for run in self.runs:
            lines.append(f"({run.sub_id}) {run.label:<23}{run.dataset:<12}"
                         f"{run.error_index:>14.6f}")
        whiteness_runs = [r for r in self.runs if r.whiteness is not None]
        if whiteness_runs:
            lines.append("")
            lines.append(f"{'subsystem':<28}{'statistic':>12}{'threshold':>12}"
                         f"{'lags':>6}{'verdict':>9}")
            lines.append("-" * 60)
            for run in whiteness_runs:
                w = run.whiteness
                verdict = "exact" if w.degenerate else ("pass" if w.passed else "FAIL")
                lines.append(f"({run.sub_id}) {run.label:<23}{w.statistic:>12.4f}"
                             f"{w.threshold:>12.4f}{w.lags:>6}{verdict:>9}")
        param_runs = [r for r in self.runs if r.parameters]
        if param_runs:
            lines.append("")
            lines.append("fitted parameters")
            lines.append("-" * 60)
            for run in param_runs:
                if run.dataset != "validation":
                    continue
                for name, value in run.parameters.items():
                    lines.append(f"({run.sub_id}) {name:<24}{value:> 14.6g}")
        lines.append("")
        return "\n".join(lines)


def build_report(runs, metadata=None) -> ValidationReport:
    """Assemble a deterministic report; rejects missing fields."""
    if not runs:
        raise IncompleteRun("runs (empty list)")
    for run in runs:
        for fname in SubsystemRun.REQUIRED:
            value = getattr(run, fname, None)
            if value is None:
                raise IncompleteRun(f"{fname} on subsystem run {run!r}")
        if not math.isfinite(run.error_index):
            raise IncompleteRun(f"error_index on subsystem {run.sub_id}")
    return ValidationReport(runs=list(runs), metadata=dict(metadata or {}))
