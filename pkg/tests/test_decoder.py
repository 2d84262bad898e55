"""Decode engines: progress, determinism, greedy agreement, stats recording."""

import math

import numpy as np
import pytest

from specjac.couplers import sample_independent
from specjac.decoder import (
    CouplerKind,
    DecodeState,
    DecodeStats,
    _Slot,
    decode_sjd,
    decode_vanilla,
    record_beta,
    record_hamming,
)
from specjac.model import ModelSpec, SamplingParams, TabularModel, TargetSampler
from specjac.prob import Categorical
from specjac.rng import RandomSource

SPEC = ModelSpec(vocab_size=4, context_order=2, flatness=2.0, seed=11)
FLAT_SPEC = ModelSpec(vocab_size=16, context_order=2, flatness=4.0, seed=5)


class TestVanilla:
    def test_single_token(self):
        seq, stats = decode_vanilla(TabularModel(SPEC), SamplingParams(), 1, RandomSource(1))
        assert len(seq) == 1
        assert stats.nfe == 1

    def test_nfe_equals_length(self):
        _, stats = decode_vanilla(TabularModel(SPEC), SamplingParams(), 9, RandomSource(2))
        assert stats.nfe == 9
        assert stats.total_tokens == 9
        assert sum(stats.finalized_counts()) == 9

    def test_greedy_is_seed_independent(self):
        model = TabularModel(SPEC)
        sampling = SamplingParams(top_k=1)
        a, _ = decode_vanilla(model, sampling, 6, RandomSource(1))
        b, _ = decode_vanilla(model, sampling, 6, RandomSource(999))
        assert a == b

    def test_deterministic_replay(self):
        model = TabularModel(SPEC)
        a = decode_vanilla(model, SamplingParams(), 5, RandomSource(42))
        b = decode_vanilla(model, SamplingParams(), 5, RandomSource(42))
        assert a[0] == b[0]
        assert a[1].nfe == b[1].nfe


class TestSjdEngine:
    @pytest.mark.parametrize("coupler", list(CouplerKind))
    def test_degenerate_window_nfe_equals_n(self, coupler):
        _, stats = decode_sjd(
            TabularModel(SPEC), SamplingParams(), 7, 1, coupler, RandomSource(3)
        )
        assert stats.nfe == 7

    @pytest.mark.parametrize("coupler", list(CouplerKind))
    @pytest.mark.parametrize("redraft", [False, True])
    def test_progress_bounds(self, coupler, redraft):
        model = TabularModel(SPEC)
        for seed in range(20):
            _, stats = decode_sjd(
                model, SamplingParams(), 10, 4, coupler, RandomSource(seed),
                redraft=redraft,
            )
            if redraft:
                assert stats.nfe <= 2 * 10
            else:
                assert stats.nfe <= 10
            assert sum(stats.finalized_counts()) == 10

    @pytest.mark.parametrize("coupler", list(CouplerKind))
    @pytest.mark.parametrize("redraft", [False, True])
    def test_greedy_matches_vanilla(self, coupler, redraft):
        model = TabularModel(SPEC)
        sampling = SamplingParams(top_k=1)
        greedy, _ = decode_vanilla(model, sampling, 8, RandomSource(1))
        seq, _ = decode_sjd(
            model, sampling, 8, 4, coupler, RandomSource(77), redraft=redraft
        )
        assert seq == greedy

    @pytest.mark.parametrize("coupler", list(CouplerKind))
    def test_deterministic_replay(self, coupler):
        model = TabularModel(FLAT_SPEC)
        a_seq, a_stats = decode_sjd(
            model, SamplingParams(), 32, 8, coupler, RandomSource(5).derive("run")
        )
        b_seq, b_stats = decode_sjd(
            model, SamplingParams(), 32, 8, coupler, RandomSource(5).derive("run")
        )
        assert a_seq == b_seq
        assert a_stats.nfe == b_stats.nfe
        assert a_stats.finalized_counts() == b_stats.finalized_counts()
        assert a_stats.beta_trajectories == b_stats.beta_trajectories

    def test_window_shrinks_at_tail(self):
        _, stats = decode_sjd(
            TabularModel(SPEC), SamplingParams(), 3, 8, CouplerKind.MAXIMAL, RandomSource(6)
        )
        assert sum(stats.finalized_counts()) == 3

    def test_first_iteration_records_no_beta(self):
        _, stats = decode_sjd(
            TabularModel(SPEC), SamplingParams(), 5, 4, CouplerKind.MAXIMAL, RandomSource(7)
        )
        assert stats.per_iteration[0].betas == []
        assert stats.per_iteration[0].hamming is None

    def test_verify_stream_alignment_across_couplers(self):
        # paired seeds: the first iteration consumes identical draft and
        # verify randomness for every coupler, so the first window of
        # finalized tokens matches across couplers
        model = TabularModel(FLAT_SPEC)
        outs = {}
        for coupler in CouplerKind:
            seq, stats = decode_sjd(
                model, SamplingParams(), 32, 8, coupler, RandomSource(9).derive("t")
            )
            outs[coupler] = (seq, stats.finalized_counts()[0])
        first_counts = {c: outs[c][1] for c in outs}
        k = min(first_counts.values())
        prefixes = {outs[c][0][:k] for c in outs}
        assert len(prefixes) == 1

    def test_invalid_arguments(self):
        model = TabularModel(SPEC)
        with pytest.raises(ValueError):
            decode_sjd(model, SamplingParams(), 0, 4, CouplerKind.MAXIMAL, RandomSource(1))
        with pytest.raises(ValueError):
            decode_sjd(model, SamplingParams(), 5, 0, CouplerKind.MAXIMAL, RandomSource(1))


class TestCouplerOrderings:
    def test_maximal_stabilizes_drafts_vs_independent(self):
        model = TabularModel(FLAT_SPEC)
        sampler = TargetSampler(model, SamplingParams())
        master = RandomSource(31)
        hams = {}
        for coupler in (CouplerKind.MAXIMAL, CouplerKind.INDEPENDENT):
            fracs = []
            for k in range(40):
                _, stats = decode_sjd(
                    model, SamplingParams(), 48, 12, coupler,
                    master.derive("trial", k), sampler=sampler,
                )
                changed = sum(r.hamming for r in stats.per_iteration if r.hamming is not None)
                compared = sum(r.compared for r in stats.per_iteration)
                if compared:
                    fracs.append(changed / compared)
            hams[coupler] = float(np.mean(fracs))
        assert hams[CouplerKind.MAXIMAL] < hams[CouplerKind.INDEPENDENT]


def _synthetic_state(slots: dict[int, _Slot], evaluated=None) -> DecodeState:
    state = DecodeState(DecodeStats())
    state.slots = slots
    state.window = sorted(slots)
    state.evaluated = evaluated or []
    return state


class TestRecordBeta:
    def test_values_against_hand_computation(self):
        old = Categorical([0.6, 0.4])
        new = Categorical([0.4, 0.6])
        slot = _Slot(0, old)
        slot.model_dist = True
        state = _synthetic_state({3: slot}, [new])
        betas = record_beta(state)
        assert betas[3] == pytest.approx(0.8)
        assert state.stats.beta_trajectories[3] == [betas[3]]

    def test_identical_and_disjoint(self):
        same = Categorical([0.5, 0.5])
        slot = _Slot(0, same)
        slot.model_dist = True
        state = _synthetic_state({0: slot}, [same])
        assert record_beta(state)[0] == 1.0

        slot = _Slot(0, Categorical([1.0, 0.0]))
        slot.model_dist = True
        state = _synthetic_state({0: slot}, [Categorical([0.0, 1.0])])
        assert record_beta(state)[0] == 0.0

    def test_uniform_initializer_skipped(self):
        slot = _Slot(0, Categorical.uniform(2))  # model_dist stays False
        state = _synthetic_state({0: slot}, [Categorical([0.9, 0.1])])
        assert record_beta(state) == {}


class TestRecordHamming:
    def test_no_comparable_positions(self):
        slot = _Slot(1, Categorical.uniform(4))
        state = _synthetic_state({0: slot})
        assert record_hamming(state) == (None, 0)

    def test_counts_changes(self):
        slots = {}
        for pos, (token, prev) in enumerate([(1, 1), (2, 3), (0, 1), (2, 2)]):
            slot = _Slot(token, Categorical.uniform(4))
            slot.prev_token = prev
            slot.prev_dist = Categorical.uniform(4)
            slots[pos] = slot
        state = _synthetic_state(slots)
        assert record_hamming(state) == (2, 4)

    def test_uniform8_expected_change_rate(self):
        # four comparable positions redrawn independently from uniform-8:
        # expected changes per iteration = 4 * 7/8 = 3.5
        dist = Categorical.uniform(8)
        rng = RandomSource(17)
        iterations = 10**4
        total = 0
        for _ in range(iterations):
            slots = {}
            for pos in range(4):
                slot = _Slot(sample_independent(dist, rng), dist)
                slot.prev_token = sample_independent(dist, rng)
                slot.prev_dist = dist
                slots[pos] = slot
            changed, compared = record_hamming(_synthetic_state(slots))
            assert compared == 4
            total += changed
        mean = total / iterations
        sigma = math.sqrt(4 * (7 / 8) * (1 / 8) / iterations)
        assert abs(mean - 3.5) <= 3 * sigma
