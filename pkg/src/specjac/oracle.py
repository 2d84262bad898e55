"""Ground-truth machinery: exact enumeration targets, empirical collection,
and the statistical tests that decide losslessness and coupling-cost claims.

The losslessness verdict is two-sided: an interpretable total-variation gate
whose threshold is calibrated from the vanilla decoder (trusted by
construction) plus the analytic noise band of an honest multinomial sample,
and a chi-square goodness-of-fit gate that is powerful against localized
mass shifts.  Both must pass.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import chi2 as chi2_dist
from scipy.stats import pearsonr

from .couplers import gumbel_from_uniform
from .decoder import CouplerKind, DecodeStats, decode_sjd, decode_vanilla
from .model import (
    SamplingParams,
    TabularModel,
    TargetSampler,
    TokenSequence,
    enumerate_sequence_distribution,
)
from .prob import Categorical, independent_collision, renyi2_entropy, softmax, tv_distance
from .rng import RandomSource


@dataclass
class EmpiricalLaw:
    """Occurrence counts of finalized sequences."""

    counts: dict[TokenSequence, int]
    total: int

    @classmethod
    def from_sequences(cls, sequences: Iterable[TokenSequence]) -> "EmpiricalLaw":
        counts = Counter(sequences)
        return cls(dict(counts), sum(counts.values()))


@dataclass
class TestReport:
    """One statistical verdict: a named value checked against a threshold."""

    name: str
    value: float
    threshold: float
    passed: bool
    samples: int
    notes: str = ""


def collect(
    decode_fn: Callable[[RandomSource], TokenSequence],
    trials: int,
    rng: RandomSource,
) -> EmpiricalLaw:
    """Run ``decode_fn`` on ``trials`` independent substreams and count outputs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    counts: Counter[TokenSequence] = Counter()
    for k in range(trials):
        counts[decode_fn(rng.derive("trial", k))] += 1
    return EmpiricalLaw(dict(counts), trials)


def tv_to_exact(law: EmpiricalLaw, exact: dict[TokenSequence, float]) -> float:
    """Total variation between empirical frequencies and the exact law."""
    total = law.total
    tv = 0.0
    for seq, prob in exact.items():
        tv += abs(law.counts.get(seq, 0) / total - prob)
    for seq, count in law.counts.items():
        if seq not in exact:
            tv += count / total
    return 0.5 * tv


def expected_sampling_tv(exact: dict[TokenSequence, float], trials: int) -> float:
    """Expected TV of an honest multinomial sample from the exact law.

    Normal approximation: E|freq_s - p_s| ~ sqrt(2 p_s (1 - p_s) / (pi m)).
    """
    acc = 0.0
    for prob in exact.values():
        acc += math.sqrt(2.0 * prob * (1.0 - prob) / (math.pi * trials))
    return 0.5 * acc


def expected_sampling_tv_std(exact: dict[TokenSequence, float], trials: int) -> float:
    """Standard deviation of the TV of an honest multinomial sample.

    Var|freq_s - p_s| ~ (1 - 2/pi) p_s (1 - p_s) / m per cell, summed as if
    independent; with many comparable cells the statistic concentrates to a
    few percent of its mean, so the band stays tight at scale while small
    runs get an honest width.
    """
    acc = 0.0
    for prob in exact.values():
        acc += (1.0 - 2.0 / math.pi) * prob * (1.0 - prob) / trials
    return 0.5 * math.sqrt(acc)


def gof_test(
    law: EmpiricalLaw,
    exact: dict[TokenSequence, float],
    name: str = "gof",
    alpha: float = 0.001,
) -> TestReport:
    """Pearson chi-square of the empirical law against exact probabilities.

    Cells with expected count below 5 are pooled into one tail cell.  Passes
    when the p-value exceeds ``alpha``.  Observations outside the exact
    support fail outright (the exact law assigns them probability zero).
    """
    total = law.total
    out_of_support = sum(c for s, c in law.counts.items() if s not in exact)
    if out_of_support:
        return TestReport(
            name, 0.0, alpha, False, total,
            notes=f"{out_of_support} observations outside the exact support",
        )
    keys = list(exact.keys())
    probs = np.array([exact[k] for k in keys])
    observed = np.array([law.counts.get(k, 0) for k in keys], dtype=np.float64)
    small = probs < 5.0 / total
    kept_obs = observed[~small]
    kept_exp = probs[~small] * total
    tail_p = float(probs[small].sum())
    cells_obs = list(kept_obs)
    cells_exp = list(kept_exp)
    if tail_p > 0.0:
        cells_obs.append(float(observed[small].sum()))
        cells_exp.append(tail_p * total)
    ncells = len(cells_obs)
    if ncells <= 1:
        matches = ncells == 1 and cells_obs[0] == total
        return TestReport(
            name, 1.0 if matches else 0.0, alpha, matches, total,
            notes="degenerate single-cell law",
        )
    obs = np.array(cells_obs)
    exp = np.array(cells_exp)
    statistic = float(((obs - exp) ** 2 / exp).sum())
    dof = ncells - 1
    p_value = float(chi2_dist.sf(statistic, dof))
    return TestReport(
        name, p_value, alpha, p_value > alpha, total,
        notes=f"chi2={statistic:.3f} dof={dof} pooled={int(small.sum())}",
    )


# ---------------------------------------------------------------------------
# Coupler-level Monte Carlo estimators.  These are batched evaluations whose
# draws match the scalar samplers bit-for-bit (same uniform stream and the
# same inverse-CDF / argmax rules), which the test suite verifies directly.
# ---------------------------------------------------------------------------


def _inverse_cdf_vector(dist: Categorical, u: np.ndarray) -> np.ndarray:
    cdf = dist.cdf()
    idx = np.searchsorted(cdf, u, side="right")
    overflow = idx >= dist.vocab_size
    if np.any(overflow):  # cumulative drift below 1.0
        last_positive = int(np.nonzero(dist.probs)[0][-1])
        idx = np.where(overflow, last_positive, idx)
    return idx


def estimate_independent_collision(
    p: Categorical, q: Categorical, trials: int, rng: RandomSource
) -> float:
    """Empirical collision rate of two independent sampling streams."""
    x = _inverse_cdf_vector(p, rng.derive("x").uniforms(trials))
    y = _inverse_cdf_vector(q, rng.derive("y").uniforms(trials))
    return float(np.mean(x == y))


def estimate_gumbel_collision(
    p: Categorical, q: Categorical, trials: int, rng: RandomSource
) -> float:
    """Empirical collision rate of shared-noise Gumbel argmax sampling."""
    vocab = p.vocab_size
    noise = gumbel_from_uniform(rng.uniforms(trials * vocab)).reshape(trials, vocab)
    with np.errstate(divide="ignore"):
        logp = np.log(p.probs)
        logq = np.log(q.probs)
    x = np.argmax(logp + noise, axis=1)
    y = np.argmax(logq + noise, axis=1)
    return float(np.mean(x == y))


def random_categorical(
    vocab: int, rng: RandomSource, sharpness: float = 1.0
) -> Categorical:
    """Random distribution: softmax of scaled standard-normal logits."""
    normals = ndtri(np.clip(rng.uniforms(vocab), 2.0**-53, 1.0 - 2.0**-53))
    return Categorical(softmax(sharpness * normals))


def random_pair(
    vocab: int,
    rng: RandomSource,
    sharpness: float = 1.0,
    closeness: float | None = None,
) -> tuple[Categorical, Categorical]:
    """Random pair; ``closeness`` perturbs the first logits instead of
    drawing independent ones, producing small-TV pairs."""
    base = ndtri(np.clip(rng.derive("base").uniforms(vocab), 2.0**-53, 1.0 - 2.0**-53))
    p = Categorical(softmax(sharpness * base))
    other = ndtri(np.clip(rng.derive("other").uniforms(vocab), 2.0**-53, 1.0 - 2.0**-53))
    if closeness is None:
        q = Categorical(softmax(sharpness * other))
    else:
        q = Categorical(softmax(sharpness * base + closeness * other))
    return p, q


def generate_pairs(
    vocab: int,
    count: int,
    rng: RandomSource,
    sharpness_range: tuple[float, float] = (0.25, 3.0),
) -> list[tuple[Categorical, Categorical]]:
    """Pairs spanning entropy regimes and TV ranges (half independent,
    half perturbed-close)."""
    lo, hi = sharpness_range
    pairs = []
    for i in range(count):
        sub = rng.derive("pair", i)
        sharpness = lo + (hi - lo) * sub.draw_uniform01()
        closeness = None if i % 2 == 0 else 0.05 + 1.5 * sub.draw_uniform01()
        pairs.append(random_pair(vocab, sub, sharpness, closeness))
    return pairs


def acceptance_rate_check(
    p: Categorical,
    q: Categorical,
    trials: int,
    rng: RandomSource,
    name: str = "acceptance-rate",
) -> TestReport:
    """Empirical accept fraction of rejection sampling vs the analytic rate.

    Samples x ~ q, runs the real ``mrs`` step, and compares the accept
    fraction to 1 - TV(p, q) within three binomial standard errors.
    """
    from .couplers import mrs, sample_independent

    if trials < 10**3:
        raise ValueError("trials must be >= 1000")
    expected = 1.0 - tv_distance(p, q)
    accepted = 0
    for _ in range(trials):
        x = sample_independent(q, rng)
        if mrs(p, q, x, rng).accepted:
            accepted += 1
    observed = accepted / trials
    sigma = math.sqrt(expected * (1.0 - expected) / trials)
    diff = abs(observed - expected)
    return TestReport(
        name, observed, 3.0 * sigma, diff <= 3.0 * sigma + 1e-12, trials,
        notes=f"analytic={expected:.6f} diff={diff:.6f}",
    )


def coupling_bound_sweep(
    pairs: Sequence[tuple[Categorical, Categorical]],
    trials: int,
    rng: RandomSource,
) -> list[TestReport]:
    """Check the coupling-cost bounds on every pair.

    Per pair: (i) shared-noise collision is at least (1-TV)/(1+TV) - 3 sigma,
    (ii) and at most (1-TV) + 3 sigma, (iii) independent-stream collision
    matches sum p*q within 3 sigma, (iv) sum p*q stays below the Renyi-2
    bound (analytic, no sampling).
    """
    reports: list[TestReport] = []
    for i, (p, q) in enumerate(pairs):
        sub = rng.derive("sweep", i)
        tv = tv_distance(p, q)
        upper = 1.0 - tv
        lower = upper / (1.0 + tv)
        gumbel = estimate_gumbel_collision(p, q, trials, sub.derive("gumbel"))
        sigma_lo = math.sqrt(lower * (1.0 - lower) / trials)
        sigma_hi = math.sqrt(upper * (1.0 - upper) / trials)
        reports.append(TestReport(
            f"coupling.gumbel-lower.{i}", gumbel, lower - 3.0 * sigma_lo,
            gumbel >= lower - 3.0 * sigma_lo - 1e-12, trials,
            notes=f"tv={tv:.6f} bound={lower:.6f}",
        ))
        reports.append(TestReport(
            f"coupling.gumbel-upper.{i}", gumbel, upper + 3.0 * sigma_hi,
            gumbel <= upper + 3.0 * sigma_hi + 1e-12, trials,
            notes=f"tv={tv:.6f} bound={upper:.6f}",
        ))
        analytic = independent_collision(p, q)
        emp = estimate_independent_collision(p, q, trials, sub.derive("independent"))
        sigma_c = math.sqrt(analytic * (1.0 - analytic) / trials)
        reports.append(TestReport(
            f"coupling.independent.{i}", emp, 3.0 * sigma_c,
            abs(emp - analytic) <= 3.0 * sigma_c + 1e-12, trials,
            notes=f"analytic={analytic:.6f}",
        ))
        bound = math.exp(-0.5 * (renyi2_entropy(p) + renyi2_entropy(q)))
        reports.append(TestReport(
            f"coupling.renyi-bound.{i}", analytic, bound + 1e-12,
            analytic <= bound + 1e-12, 0,
            notes="analytic Cauchy-Schwarz bound",
        ))
    return reports


def hamming_nfe_correlation(
    decode_fn: Callable[[RandomSource], DecodeStats],
    runs: int,
    rng: RandomSource,
    threshold: float = 0.3,
    name: str = "hamming-nfe-correlation",
) -> TestReport:
    """Pearson correlation between per-run mean draft churn and per-run NFE."""
    if runs < 100:
        raise ValueError("runs must be >= 100")
    hammings = []
    nfes = []
    for k in range(runs):
        stats = decode_fn(rng.derive("trial", k))
        mean_h = stats.mean_hamming()
        if mean_h is None:
            continue
        hammings.append(mean_h)
        nfes.append(stats.nfe)
    if len(hammings) < 2 or np.std(hammings) == 0.0 or np.std(nfes) == 0.0:
        return TestReport(
            name, 1.0, threshold, True, len(hammings),
            notes="skipped: degenerate (zero-variance) statistics",
        )
    r = float(pearsonr(hammings, nfes).statistic)
    return TestReport(name, r, threshold, r > threshold, len(hammings))


# ---------------------------------------------------------------------------
# Losslessness suite
# ---------------------------------------------------------------------------

_COUPLER_ORDER = (CouplerKind.INDEPENDENT, CouplerKind.MAXIMAL, CouplerKind.GUMBEL)


def run_lossless_suite(
    model: TabularModel,
    sampling: SamplingParams,
    n: int,
    window: int,
    trials: int,
    rng: RandomSource,
    conventions: Sequence[bool] = (False,),
    couplers: Sequence[CouplerKind] = _COUPLER_ORDER,
    budget: int = 10**6,
    margin: float = 1.2,
) -> list[TestReport]:
    """Compare vanilla and every requested SJD variant to the exact law.

    The TV threshold is ``margin`` times the larger of the vanilla decoder's
    measured TV (trusted by construction) and the analytic noise band of an
    honest multinomial sample (mean + 3 std of the TV statistic); every
    variant must also pass the chi-square gate.  ``conventions`` selects the
    rejection conventions to exercise (False = finalize the residual token,
    True = redraft with it).
    """
    sampler = TargetSampler(model, sampling)
    exact = enumerate_sequence_distribution(model, sampling, n, budget)
    reports: list[TestReport] = []

    vanilla_law = collect(
        lambda r: decode_vanilla(model, sampling, n, r, sampler)[0],
        trials,
        rng.derive("collect", "vanilla"),
    )
    tv_vanilla = tv_to_exact(vanilla_law, exact)
    # honest-sampling noise band: mean + 3 std of the TV statistic
    noise_band = expected_sampling_tv(exact, trials) + 3.0 * expected_sampling_tv_std(
        exact, trials
    )
    threshold = margin * max(tv_vanilla, noise_band)
    calibration = f"vanilla_tv={tv_vanilla:.6f} noise_band={noise_band:.6f}"

    reports.append(TestReport(
        "lossless.tv.vanilla", tv_vanilla, threshold,
        tv_vanilla <= threshold, trials, notes=calibration,
    ))
    reports.append(gof_test(vanilla_law, exact, "lossless.gof.vanilla"))

    for redraft in conventions:
        suffix = "-redraft" if redraft else ""
        for coupler in couplers:
            label = coupler.value + suffix
            law = collect(
                lambda r: decode_sjd(
                    model, sampling, n, window, coupler, r,
                    redraft=redraft, sampler=sampler,
                )[0],
                trials,
                rng.derive("collect", label),
            )
            tv = tv_to_exact(law, exact)
            reports.append(TestReport(
                f"lossless.tv.{label}", tv, threshold,
                tv <= threshold, trials, notes=calibration,
            ))
            reports.append(gof_test(law, exact, f"lossless.gof.{label}"))
    return reports
