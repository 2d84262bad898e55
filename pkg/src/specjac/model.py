"""Order-k tabular autoregressive models with exactly enumerable sequence laws.

The model stores (lazily generates) one logit vector per context: i.i.d.
standard normals keyed by (seed, context), divided by a flatness knob.  High
flatness gives near-uniform, high-entropy conditionals; low flatness gives
peaky ones.  Because every conditional is an explicit finite table, the full
sequence distribution can be enumerated and used as ground truth for the
decoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import BudgetError, LengthError
from .prob import Categorical, Logits, apply_processors, mix_cfg
from .rng import RandomSource

# Context padding symbol for positions closer to the sequence start than the
# model order; never a valid token id.
BOS = -1

TokenSequence = tuple[int, ...]


@dataclass(frozen=True)
class SamplingParams:
    """Target-law shaping: temperature, truncation masks, guidance scale."""

    temperature: float = 1.0
    top_k: int | None = None
    top_p: float | None = None
    cfg_scale: float = 0.0

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.top_p is not None and not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.cfg_scale < 0:
            raise ValueError("cfg_scale must be >= 0")


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of a tabular model.

    ``context_order`` is the number of history tokens a conditional depends
    on; ``flatness`` divides the stored logits (higher means flatter,
    higher-entropy conditionals).  ``cfg_seed`` seeds the unconditional
    variant used for guided sampling and defaults to ``seed + 1``.
    """

    vocab_size: int
    context_order: int = 2
    flatness: float = 1.0
    seed: int = 0
    cfg_seed: int | None = None

    def __post_init__(self) -> None:
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if self.context_order < 0:
            raise ValueError("context_order must be >= 0")
        if self.flatness <= 0:
            raise ValueError("flatness must be positive")


class TabularModel:
    """Autoregressive model with seeded random logit tables.

    The conditional at each position depends on the last ``context_order``
    tokens of the prefix (left-padded with BOS).  Tables for the conditional
    and the unconditional (guidance) variant are generated lazily per context
    and cached; evaluation is pure and instances are safe to share.
    """

    def __init__(self, spec: ModelSpec, max_len: int | None = None):
        self.spec = spec
        self.max_len = max_len
        self._tables: dict[tuple, Logits] = {}
        cfg_seed = spec.cfg_seed if spec.cfg_seed is not None else spec.seed + 1
        self._roots = {
            "cond": RandomSource(spec.seed).derive("logit-table"),
            "uncond": RandomSource(cfg_seed).derive("logit-table"),
        }

    @property
    def vocab_size(self) -> int:
        return self.spec.vocab_size

    def context_key(self, prefix: Sequence[int]) -> tuple[int, ...]:
        """Last ``context_order`` tokens, left-padded with BOS."""
        k = self.spec.context_order
        if k == 0:
            return ()
        tail = tuple(prefix[-k:])
        if len(tail) < k:
            tail = (BOS,) * (k - len(tail)) + tail
        return tail

    def _check_len(self, length: int) -> None:
        if self.max_len is not None and length >= self.max_len:
            raise LengthError(f"prefix length {length} exceeds max length {self.max_len} - 1")

    def _table(self, role: str, context: tuple[int, ...]) -> Logits:
        key = (role, context)
        logits = self._tables.get(key)
        if logits is None:
            stream = self._roots[role].derive(*context) if context else self._roots[role].derive("root")
            normals = ndtri(np.clip(stream.uniforms(self.spec.vocab_size), 2.0**-53, 1.0 - 2.0**-53))
            logits = Logits(normals / self.spec.flatness)
            self._tables[key] = logits
        return logits

    def eval_next(self, prefix: Sequence[int]) -> Logits:
        """Logits for the next position given ``prefix`` (conditional table)."""
        self._check_len(len(prefix))
        return self._table("cond", self.context_key(prefix))

    def eval_next_uncond(self, prefix: Sequence[int]) -> Logits:
        """Unconditional-variant logits used for guidance mixing."""
        self._check_len(len(prefix))
        return self._table("uncond", self.context_key(prefix))

    def eval_window(
        self, context: Sequence[int], window: Sequence[int]
    ) -> list[Logits]:
        """Logits for every window position in one parallel evaluation.

        Position j is conditioned on ``context`` followed by window tokens
        strictly before j, so the result equals ``len(window)`` sequential
        ``eval_next`` calls on the corresponding prefixes.
        """
        if not window:
            return []
        self._check_len(len(context) + len(window) - 1)
        out = []
        key = self.context_key(context)
        k = self.spec.context_order
        for token in window:
            out.append(self._table("cond", key))
            if k > 0:
                key = key[1:] + (token,)
        return out


def target_distribution(
    model: TabularModel, prefix: Sequence[int], sampling: SamplingParams
) -> Categorical:
    """The target law at the next position: guidance mix plus processors.

    This is the distribution every decoder must reproduce; losslessness is
    defined relative to it.
    """
    logits = model.eval_next(prefix)
    if sampling.cfg_scale > 0:
        logits = mix_cfg(logits, model.eval_next_uncond(prefix), sampling.cfg_scale)
    return apply_processors(
        logits, sampling.temperature, sampling.top_k, sampling.top_p
    )


class TargetSampler:
    """Caching wrapper around ``target_distribution``.

    Conditionals depend only on the order-k context, so one small cache keyed
    by context serves every position of every trial that shares a model and
    sampling configuration.
    """

    def __init__(self, model: TabularModel, sampling: SamplingParams):
        self.model = model
        self.sampling = sampling
        self._cache: dict[tuple[int, ...], Categorical] = {}

    def _dist_for_key(self, key: tuple[int, ...]) -> Categorical:
        dist = self._cache.get(key)
        if dist is None:
            logits = self.model._table("cond", key)
            if self.sampling.cfg_scale > 0:
                logits = mix_cfg(
                    logits,
                    self.model._table("uncond", key),
                    self.sampling.cfg_scale,
                )
            dist = apply_processors(
                logits,
                self.sampling.temperature,
                self.sampling.top_k,
                self.sampling.top_p,
            )
            self._cache[key] = dist
        return dist

    def dist(self, prefix: Sequence[int]) -> Categorical:
        """Target law at the next position after ``prefix``."""
        self.model._check_len(len(prefix))
        return self._dist_for_key(self.model.context_key(prefix))

    def window_dists(
        self, context: Sequence[int], window: Sequence[int]
    ) -> list[Categorical]:
        """Target laws for all window positions (one parallel evaluation)."""
        if window:
            self.model._check_len(len(context) + len(window) - 1)
        out = []
        key = self.model.context_key(context)
        k = self.model.spec.context_order
        for token in window:
            out.append(self._dist_for_key(key))
            if k > 0:
                key = key[1:] + (token,)
        return out


def enumerate_sequence_distribution(
    model: TabularModel,
    sampling: SamplingParams,
    length: int,
    budget: int = 10**6,
) -> dict[TokenSequence, float]:
    """Exact probability of every length-n sequence under sequential sampling.

    Raises :class:`BudgetError` when ``vocab_size ** length`` exceeds the
    enumeration budget.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    total = model.vocab_size**length
    if total > budget:
        raise BudgetError(
            f"{model.vocab_size}^{length} = {total} sequences exceed budget {budget}"
        )
    sampler = TargetSampler(model, sampling)
    law: dict[TokenSequence, float] = {}
    stack: list[tuple[TokenSequence, float]] = [((), 1.0)]
    while stack:
        prefix, mass = stack.pop()
        if len(prefix) == length:
            law[prefix] = mass
            continue
        dist = sampler.dist(prefix)
        for token in range(model.vocab_size):
            p = float(dist.probs[token])
            if p > 0.0:
                stack.append((prefix + (token,), mass * p))
    return law


def marginalize_last(law: dict[TokenSequence, float]) -> dict[TokenSequence, float]:
    """Sum out the final token of an enumerated law."""
    out: dict[TokenSequence, float] = {}
    for seq, mass in law.items():
        out[seq[:-1]] = out.get(seq[:-1], 0.0) + mass
    return out


def mean_conditional_renyi2(
    model: TabularModel, sampling: SamplingParams, contexts: Iterable[tuple[int, ...]]
) -> float:
    """Mean Renyi-2 entropy of the target conditionals over given contexts."""
    from .prob import renyi2_entropy

    sampler = TargetSampler(model, sampling)
    values = [renyi2_entropy(sampler._dist_for_key(ctx)) for ctx in contexts]
    return float(np.mean(values))


def all_contexts(vocab_size: int, context_order: int) -> list[tuple[int, ...]]:
    """Every reachable order-k context: BOS padding first, then real tokens."""
    if context_order == 0:
        return [()]
    contexts: list[tuple[int, ...]] = []
    for pad in range(context_order, -1, -1):
        suffixes: list[tuple[int, ...]] = [()]
        for _ in range(context_order - pad):
            suffixes = [s + (t,) for s in suffixes for t in range(vocab_size)]
        contexts.extend((BOS,) * pad + s for s in suffixes)
    return contexts
