"""Two-interval forced-choice experiments with the method of constant stimuli.

A participant compares a fixed standard against each comparison level
repeatedly and reports which felt colder. The proportion of "comparison
colder" answers per level is fitted with a two-parameter cumulative
Gaussian (no lapse or guess rates):

    P(x) = Phi((x - mu) / sigma)      ascending stimuli (e.g. flow rate)
    P(x) = Phi((mu - x) / sigma)      descending stimuli (e.g. distance)

The PSE is mu. The JND is half the distance between the 25 % and 75 %
points, which for a Gaussian is sigma * Phi^-1(0.75).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .lm import levenberg_marquardt

Z75 = float(stats.norm.ppf(0.75))
SIGMA_FLOOR = 1e-6 / Z75  # keeps the JND >= 1e-6 level units for step-like data
RSS_PER_LEVEL = 0.05
ORIENTATIONS = ("ascending", "descending")


@dataclass(frozen=True)
class TrialSchedule:
    standard: float
    comparisons: tuple
    repetitions: int
    trials: tuple  # ((comparison level, standard_first), ...)
    rest_every: int
    seed: Optional[int] = None
    # presentation timing, carried for the experimenter; not enforced here
    stimulus_s: float = 1.5
    gap_s: float = 1.0

    def __post_init__(self):
        if self.rest_every <= 0:
            raise ValueError("rest_every must be > 0")
        if len(self.trials) != len(self.comparisons) * self.repetitions:
            raise ValueError("trial count does not match comparisons x repetitions")

    def rest_after(self) -> list:
        """0-based indices of trials after which the participant rests."""
        n = len(self.trials)
        return [i - 1 for i in range(self.rest_every, n, self.rest_every)]


@dataclass(frozen=True)
class TrialRecord:
    comparison_level: float
    standard_first: bool
    response_comparison_colder: bool


@dataclass(frozen=True, eq=False)
class PsychometricData:
    levels: np.ndarray
    n_trials: np.ndarray
    n_colder: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        n = np.asarray(self.n_trials, dtype=int)
        k = np.asarray(self.n_colder, dtype=int)
        if not (levels.shape == n.shape == k.shape) or levels.ndim != 1 or levels.size == 0:
            raise ValueError("levels, n_trials and n_colder must be equal-length 1-D arrays")
        if np.any(n <= 0) or np.any(k < 0) or np.any(k > n):
            raise ValueError("need n_trials > 0 and 0 <= n_colder <= n_trials")
        if np.unique(levels).size != levels.size:
            raise ValueError("levels must be distinct")
        order = np.argsort(levels)
        object.__setattr__(self, "levels", levels[order])
        object.__setattr__(self, "n_trials", n[order])
        object.__setattr__(self, "n_colder", k[order])

    @property
    def proportions(self) -> np.ndarray:
        return self.n_colder / self.n_trials


@dataclass
class PsychometricFit:
    mu: float
    sigma: float
    orientation: str = "ascending"
    classification: str = "fail"
    goodness: float = math.nan  # residual sum of squares on proportions
    method: str = "lsq"
    converged: bool = True
    slope_sign: int = 1  # +1 if P rises with level, -1 if it falls, 0 if flat
    proportions: list = field(default_factory=list)

    @property
    def pse(self) -> float:
        return self.mu

    @property
    def jnd(self) -> float:
        return self.sigma * Z75

    def probability(self, level):
        s = 1.0 if self.slope_sign >= 0 else -1.0
        return stats.norm.cdf(s * (np.asarray(level, dtype=float) - self.mu) / self.sigma)

    def inverse(self, p: float) -> float:
        """Level at which the fitted curve equals ``p``."""
        s = 1.0 if self.slope_sign >= 0 else -1.0
        return self.mu + s * self.sigma * float(stats.norm.ppf(p))

    def to_dict(self) -> dict:
        return {
            "pse": self.pse,
            "jnd": self.jnd,
            "sigma": self.sigma,
            "classification": self.classification,
            "orientation": self.orientation,
            "rss": self.goodness,
            "method": self.method,
            "converged": self.converged,
            "proportions": list(self.proportions),
        }


def generate_schedule(
    standard: float,
    comparisons: Sequence[float],
    repetitions: int,
    rest_every: int = 5,
    seed: Optional[int] = None,
) -> TrialSchedule:
    """Randomised constant-stimuli schedule; identical seeds give identical schedules."""
    comparisons = tuple(float(c) for c in comparisons)
    if not comparisons:
        raise ValueError("comparisons must be non-empty")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rng = np.random.default_rng(seed)
    levels = np.repeat(np.asarray(comparisons), repetitions)
    levels = levels[rng.permutation(levels.size)]
    standard_first = rng.random(levels.size) < 0.5
    trials = tuple((float(lv), bool(sf)) for lv, sf in zip(levels, standard_first))
    return TrialSchedule(float(standard), comparisons, int(repetitions), trials, int(rest_every), seed)


def aggregate(records: Iterable[TrialRecord]) -> PsychometricData:
    records = list(records)
    if not records:
        raise ValueError("no trial records")
    totals = Counter(r.comparison_level for r in records)
    colder = Counter(r.comparison_level for r in records if r.response_comparison_colder)
    levels = sorted(totals)
    return PsychometricData(
        np.array(levels, dtype=float),
        np.array([totals[lv] for lv in levels]),
        np.array([colder[lv] for lv in levels]),
    )


def _initial_guess(x, p):
    """Start from the 50 % crossing of the data and a slope from linear regression."""
    span = x[-1] - x[0]
    slope = np.polyfit(x, p, 1)[0] if x.size > 1 else 0.0
    sign = 1.0 if slope >= 0 else -1.0
    pp = p if sign > 0 else p[::-1]
    xx = x if sign > 0 else x[::-1]
    above = np.nonzero(pp >= 0.5)[0]
    if above.size and above[0] > 0:
        i = above[0]
        lo, hi = pp[i - 1], pp[i]
        w = 0.5 if hi == lo else (0.5 - lo) / (hi - lo)
        mu0 = xx[i - 1] + w * (xx[i] - xx[i - 1])
    else:
        mu0 = float(np.mean(x))
    return mu0, sign * 4.0 / span


def _fit_lsq(x, p, mu0, k0):
    scale = x[-1] - x[0]

    # parameters (mu / scale, k * scale) keep both coordinates O(1)
    def residual(z):
        return stats.norm.cdf(z[1] * (x / scale - z[0])) - p

    best = None
    for k_mult in (1.0, 0.25, 4.0):
        z0 = np.array([mu0 / scale, k0 * scale * k_mult])
        res = levenberg_marquardt(residual, z0, max_iterations=500, xtol=1e-12, ftol=1e-15, check_rank=False)
        if best is None or res.cost < best.cost:
            best = res
    return best.x[0] * scale, best.x[1] / scale, best.converged


def _fit_mle(x, n, k, mu0, k0):
    scale = x[-1] - x[0]

    def nll(z):
        q = stats.norm.cdf(z[1] * (x / scale - z[0]))
        q = np.clip(q, 1e-12, 1 - 1e-12)
        return -float(np.sum(k * np.log(q) + (n - k) * np.log1p(-q)))

    res = optimize.minimize(
        nll, [mu0 / scale, k0 * scale], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000}
    )
    return res.x[0] * scale, res.x[1] / scale, bool(res.success)


def fit_psychometric(data: PsychometricData, orientation: str = "ascending", method: str = "lsq") -> PsychometricFit:
    """Fit a cumulative Gaussian to per-level proportions and classify the result.

    The slope sign is left free during fitting so that data running the
    wrong way for ``orientation`` are detected and classified as ``fail``
    instead of being forced into a flat curve.
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"orientation must be one of {ORIENTATIONS}")
    if method not in ("lsq", "mle"):
        raise ValueError("method must be 'lsq' or 'mle'")
    x = data.levels
    p = data.proportions
    if x.size < 3:
        raise ValueError(f"need at least 3 distinct levels, got {x.size}")

    if np.all(p == p[0]):
        fit = PsychometricFit(math.nan, math.nan, orientation, method=method, slope_sign=0, proportions=p.tolist())
        fit.classification = classify(fit, data)
        return fit

    mu0, k0 = _initial_guess(x, p)
    if method == "lsq":
        mu, k, converged = _fit_lsq(x, p, mu0, k0)
    else:
        mu, k, converged = _fit_mle(x, data.n_trials, data.n_colder, mu0, k0)

    sign = 1 if k > 0 else (-1 if k < 0 else 0)
    sigma = 1.0 / abs(k) if k != 0 else math.inf
    fit = PsychometricFit(mu, sigma, orientation, method=method, converged=converged, slope_sign=sign, proportions=p.tolist())
    if sign != 0 and sigma < SIGMA_FLOOR:
        fit.sigma = SIGMA_FLOOR
    elif sign != 0 and method == "lsq":
        # Step-like data: the least-squares infimum sits at sigma -> 0. If the
        # floor does at least as well, report the floor rather than wherever
        # the solver happened to stop.
        floored = PsychometricFit(mu, SIGMA_FLOOR, orientation, slope_sign=sign)
        if _rss(floored, x, p) <= _rss(fit, x, p):
            fit.sigma = SIGMA_FLOOR
    fit.goodness = _rss(fit, x, p) if math.isfinite(fit.sigma) else float(np.sum((p - 0.5) ** 2))
    fit.classification = classify(fit, data)
    return fit


def _rss(fit, x, p):
    return float(np.sum((fit.probability(x) - p) ** 2))


def _ci_contains_half(k: int, n: int, level: float = 0.95) -> bool:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="exact")
    return ci.low <= 0.5 <= ci.high


def classify(fit: PsychometricFit, data: PsychometricData) -> str:
    """Label a fit ``chance``, ``s_curve`` or ``fail``.

    chance: every level's exact 95 % binomial interval contains 0.5.
    s_curve: finite positive sigma, slope in the expected direction, and
    RSS below 0.05 per level.
    Anything else is a failure to discriminate.
    """
    if all(_ci_contains_half(k, n) for k, n in zip(data.n_colder, data.n_trials)):
        return "chance"
    expected = 1 if fit.orientation == "ascending" else -1
    if (
        math.isfinite(fit.mu)
        and math.isfinite(fit.sigma)
        and fit.sigma > 0
        and fit.slope_sign == expected
        and fit.goodness < RSS_PER_LEVEL * data.levels.size
    ):
        return "s_curve"
    return "fail"


@dataclass(frozen=True)
class GroupStats:
    n: int
    pse_mean: float
    pse_sd: float
    jnd_mean: float
    jnd_sd: float

    def to_dict(self) -> dict:
        return dict(n=self.n, pse_mean=self.pse_mean, pse_sd=self.pse_sd, jnd_mean=self.jnd_mean, jnd_sd=self.jnd_sd)


def group_stats(fits: Sequence[PsychometricFit], subset: str = "s_curve_only") -> GroupStats:
    """Mean and sample SD of PSE and JND across participants.

    Fits with undefined parameters (flat data) cannot be averaged and are
    skipped even when ``subset="all"``.
    """
    if subset == "s_curve_only":
        chosen = [f for f in fits if f.classification == "s_curve"]
    elif subset == "all":
        chosen = list(fits)
    else:
        raise ValueError("subset must be 's_curve_only' or 'all'")
    chosen = [f for f in chosen if math.isfinite(f.pse) and math.isfinite(f.jnd)]
    if not chosen:
        raise ValueError(f"no fits in subset {subset!r}")
    pse = np.array([f.pse for f in chosen])
    jnd = np.array([f.jnd for f in chosen])
    ddof = 1 if len(chosen) > 1 else 0
    return GroupStats(len(chosen), float(pse.mean()), float(pse.std(ddof=ddof)), float(jnd.mean()), float(jnd.std(ddof=ddof)))


def simulate_responses(
    levels: Sequence[float],
    repetitions: int,
    mu: float,
    sigma: float,
    rng: np.random.Generator,
    orientation: str = "ascending",
) -> PsychometricData:
    """Binomial observer with a cumulative-Gaussian psychometric function."""
    x = np.asarray(levels, dtype=float)
    s = 1.0 if orientation == "ascending" else -1.0
    prob = stats.norm.cdf(s * (x - mu) / sigma)
    n = np.full(x.size, int(repetitions))
    return PsychometricData(x, n, rng.binomial(n, prob))
