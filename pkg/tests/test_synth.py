from dataclasses import replace

import numpy as np
import pytest

from sasvfusion.data import (
    RandomSpeakerSplitStrategy,
    SpeakerSplitter,
    SynthConfig,
    TrialQuotas,
    build_eval_trials,
    class_counts,
    generate,
    split_speakers,
    store_bytes,
)
from sasvfusion.data.synth import artifact_axis, speaker_means
from sasvfusion.exceptions import ContractViolation


class TestGenerate:
    def test_counts(self):
        store = generate(SynthConfig(n_speakers=2, utts_per_speaker=1, spoofs_per_speaker=0, asv_dim=4, cm_dim=3))
        assert len(store) == 2
        assert all(r.meta.is_bona_fide for r in store)

    def test_layout_and_ids(self, small_store):
        metas = small_store.metas()
        assert len(metas) == 6 * (5 + 4)
        assert metas[0].utt_id == "spk000_bf000"
        assert metas[5].utt_id == "spk000_sp000"
        spoofs = [m for m in metas if not m.is_bona_fide]
        assert all(m.attack_id.startswith("A") and len(m.attack_id) == 3 for m in spoofs)

    def test_deterministic_in_seed(self):
        cfg = SynthConfig(n_speakers=4, utts_per_speaker=3, spoofs_per_speaker=2, asv_dim=5, cm_dim=3, seed=7)
        assert store_bytes(generate(cfg)) == store_bytes(generate(cfg))
        other = SynthConfig(n_speakers=4, utts_per_speaker=3, spoofs_per_speaker=2, asv_dim=5, cm_dim=3, seed=8)
        assert store_bytes(generate(cfg)) != store_bytes(generate(other))

    def test_asv_embeddings_are_unit(self, small_store):
        norms = np.linalg.norm(np.vstack([r.asv for r in small_store]), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_perfect_mimicry_hits_speaker_mean(self):
        cfg = SynthConfig(n_speakers=3, utts_per_speaker=2, spoofs_per_speaker=4, asv_dim=6, cm_dim=2,
                          speaker_noise=0.0, spoof_mimicry=1.0, seed=2)
        store = generate(cfg)
        means = speaker_means(cfg)
        for rec in store:
            if not rec.meta.is_bona_fide:
                i = int(rec.meta.speaker_id[3:])
                np.testing.assert_allclose(rec.asv, means[i], atol=1e-15)

    def test_artifact_axis_separates_cm_embeddings(self):
        cfg = SynthConfig(n_speakers=50, utts_per_speaker=100, spoofs_per_speaker=100, asv_dim=2, cm_dim=8,
                          cm_separation=6.0, seed=4)
        store = generate(cfg)
        axis = artifact_axis(cfg)
        projection = np.array([r.cm @ axis for r in store])
        bona_fide = np.array([r.meta.is_bona_fide for r in store])
        accuracy = np.mean((projection > 0) == bona_fide)
        assert len(store) == 10000
        assert accuracy >= 0.99

    def test_spoofs_mimic_their_target(self):
        cfg = SynthConfig(n_speakers=20, utts_per_speaker=5, spoofs_per_speaker=5, speaker_noise=0.05,
                          spoof_mimicry=1.0, seed=6)
        store = generate(cfg)
        bf = {}
        for r in store:
            if r.meta.is_bona_fide:
                bf.setdefault(r.meta.speaker_id, []).append(r.asv)
        speakers = sorted(bf)
        rng = np.random.default_rng(0)
        spoofs = [r for r in store if not r.meta.is_bona_fide]
        wins = 0
        for _ in range(1000):
            sp = spoofs[rng.integers(len(spoofs))]
            own = bf[sp.meta.speaker_id][rng.integers(5)]
            a, b = rng.choice(len(speakers), size=2, replace=False)
            x, y = bf[speakers[a]][rng.integers(5)], bf[speakers[b]][rng.integers(5)]
            wins += float(sp.asv @ own) > float(x @ y)
        assert wins >= 990

    def test_unseen_attacks_follow_the_regular_spoofs(self):
        base = SynthConfig(n_speakers=3, utts_per_speaker=2, spoofs_per_speaker=3, asv_dim=5, cm_dim=3, seed=9)
        extended = replace(base, n_unseen_attacks=2, unseen_spoofs_per_speaker=4)
        regular = {r.meta.utt_id: r for r in generate(base)}
        store = generate(extended)
        assert len(store) == 3 * (2 + 3 + 4)
        for rec in store:
            if rec.meta.utt_id in regular:
                assert rec.asv.tobytes() == regular[rec.meta.utt_id].asv.tobytes()
                assert rec.meta == regular[rec.meta.utt_id].meta
            else:
                assert rec.meta.attack_id in extended.unseen_attacks
        assert extended.unseen_attacks == ["A07", "A08"]
        assert set(extended.seen_attacks).isdisjoint(extended.unseen_attacks)

    def test_unseen_spoofs_need_unseen_attacks(self):
        with pytest.raises(ContractViolation):
            SynthConfig(unseen_spoofs_per_speaker=2)

    @pytest.mark.parametrize("kwargs", [
        {"n_speakers": 1},
        {"spoof_mimicry": 1.5},
        {"cm_separation": -1.0},
        {"speaker_noise": -0.1},
        {"utts_per_speaker": 0},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ContractViolation):
            SynthConfig(**kwargs)


class TestSpeakerSplit:
    def test_disjoint_and_complete(self, small_store):
        utts = small_store.metas()
        train, evaluation = split_speakers(utts, eval_fraction=0.3, seed=1)
        train_spk = {u.speaker_id for u in train}
        eval_spk = {u.speaker_id for u in evaluation}
        assert not train_spk & eval_spk
        assert len(train) + len(evaluation) == len(utts)
        assert len(eval_spk) == 2

    def test_eval_side_has_every_class(self):
        store = generate(SynthConfig(n_speakers=10, utts_per_speaker=4, spoofs_per_speaker=2, asv_dim=3, cm_dim=2))
        _, evaluation = split_speakers(store.metas(), 0.3, seed=0)
        counts = class_counts(build_eval_trials(evaluation, TrialQuotas(), seed=0))
        assert all(v > 0 for v in counts.values())

    def test_deterministic(self, small_store):
        a = split_speakers(small_store.metas(), 0.5, seed=3)
        assert a == split_speakers(small_store.metas(), 0.5, seed=3)

    def test_context_switches_strategy(self, small_store):
        splitter = SpeakerSplitter(RandomSpeakerSplitStrategy(0.3, seed=0))
        first = splitter.split(small_store.metas())
        splitter.set_strategy(RandomSpeakerSplitStrategy(0.5, seed=0))
        second = splitter.split(small_store.metas())
        assert len({u.speaker_id for u in second[1]}) == 3
        assert len({u.speaker_id for u in first[1]}) == 2

    def test_needs_four_speakers(self):
        store = generate(SynthConfig(n_speakers=3, utts_per_speaker=1, spoofs_per_speaker=0, asv_dim=2, cm_dim=2))
        with pytest.raises(ContractViolation):
            split_speakers(store.metas())
        with pytest.raises(ContractViolation):
            RandomSpeakerSplitStrategy(eval_fraction=1.0)
