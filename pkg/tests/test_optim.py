"""Optimizer, schedule, sampling, training-loop, and LOSO harness tests.

Frozen oracles: the scalar AdamW first step (theta=1, g=1, lr=0.1 ->
0.895), the schedule formula at hand-picked epochs, and the batch split
12000 = 46*256 + 224.
"""

import numpy as np
import pytest

from fuzzyssvep.errors import ConfigError, NumericError
from fuzzyssvep.evaluation import evaluate
from fuzzyssvep.network import ModelConfig, init_model, model_forward
from fuzzyssvep.optim import (
    EpochRecord,
    TrainConfig,
    adamw_step,
    adamw_update_tensor,
    build_training_pool,
    effective_lr,
    fold_seed,
    init_optimizer,
    loso_run,
    lr_at_epoch,
    sample_training_batch,
    train,
)
from fuzzyssvep.signals import StimulusConfig, build_dataset


def small_train_cfg(**overrides):
    base = dict(
        base_lr=1e-3, batch_size=32, max_epochs=3, warmup_epochs=1,
        windows_per_epoch=64, window_seconds=1.0, seed=0,
        test_windows_per_trial=4,
    )
    base.update(overrides)
    return TrainConfig(**base)


def small_model_cfg(dataset, **overrides):
    base = dict(
        n_channels=dataset.n_channels, n_samples=256,
        n_classes=dataset.n_classes, n_rules=2, hidden=8, dropout_rate=0.3,
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestEffectiveLr:
    def test_batch_128_is_identity(self):
        assert effective_lr(1e-3, 128) == 1e-3

    def test_batch_256_doubles(self):
        assert effective_lr(1e-3, 256) == 2e-3

    def test_batch_64_halves(self):
        assert effective_lr(5e-4, 64) == 2.5e-4


class TestSchedule:
    def cfg(self, **kw):
        base = dict(base_lr=1e-3, batch_size=256, max_epochs=100,
                    warmup_epochs=10, windows_per_epoch=1)
        base.update(kw)
        return TrainConfig(**base)

    def test_warmup_terminus_hits_effective_lr(self):
        cfg = self.cfg()
        np.testing.assert_allclose(lr_at_epoch(cfg, 9), 2e-3, rtol=1e-15)

    def test_warmup_is_linear(self):
        cfg = self.cfg()
        np.testing.assert_allclose(lr_at_epoch(cfg, 0), 2e-3 / 10, rtol=1e-15)
        np.testing.assert_allclose(lr_at_epoch(cfg, 4), 2e-3 / 2, rtol=1e-15)

    def test_cosine_midpoint_is_half(self):
        cfg = self.cfg()  # warmup 10, span 90 -> midpoint epoch 55
        np.testing.assert_allclose(lr_at_epoch(cfg, 55), 1e-3, rtol=1e-12)

    def test_final_epoch_value(self):
        # 0.5 * 2e-3 * (1 + cos(89 pi / 90)) = 1e-3 * (1 - cos(pi/90)).
        cfg = self.cfg()
        np.testing.assert_allclose(lr_at_epoch(cfg, 99), 6.0917298e-7, rtol=1e-6)

    def test_no_jump_at_warmup_boundary(self):
        cfg = self.cfg()
        eff = effective_lr(cfg.base_lr, cfg.batch_size)
        gap = abs(lr_at_epoch(cfg, 10) - lr_at_epoch(cfg, 9))
        assert gap <= eff / cfg.warmup_epochs + 1e-15

    def test_epoch_out_of_range(self):
        cfg = self.cfg()
        with pytest.raises(ValueError):
            lr_at_epoch(cfg, 100)
        with pytest.raises(ValueError):
            lr_at_epoch(cfg, -1)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            self.cfg(warmup_epochs=100)
        with pytest.raises(ConfigError):
            self.cfg(beta1=1.0)
        with pytest.raises(ConfigError):
            self.cfg(eps=0.0)


class TestAdamW:
    def cfg(self):
        return TrainConfig(max_epochs=1, warmup_epochs=0, windows_per_epoch=1)

    def test_scalar_first_step(self):
        theta = np.array([1.0])
        m, v = np.zeros(1), np.zeros(1)
        adamw_update_tensor(theta, np.array([1.0]), m, v, step=1, lr=0.1, cfg=self.cfg())
        np.testing.assert_allclose(theta, [0.895], atol=1e-6)

    def test_zero_gradient_zero_decay_is_identity(self):
        cfg = TrainConfig(weight_decay=0.0, max_epochs=1, warmup_epochs=0)
        theta = np.array([1.0, -2.0])
        adamw_update_tensor(theta, np.zeros(2), np.zeros(2), np.zeros(2),
                            step=1, lr=0.1, cfg=cfg)
        np.testing.assert_array_equal(theta, [1.0, -2.0])

    def test_pure_decoupled_decay(self):
        theta = np.array([1.0])
        adamw_update_tensor(theta, np.zeros(1), np.zeros(1), np.zeros(1),
                            step=1, lr=0.1, cfg=self.cfg())
        np.testing.assert_allclose(theta, [0.995], rtol=1e-12)

    def test_step_counter_tracks_calls(self):
        cfg_model = ModelConfig(n_channels=2, n_samples=4, n_classes=2,
                                n_rules=1, hidden=2, dropout_rate=0.0)
        params = init_model(cfg_model, seed=0)
        state = init_optimizer(params)
        grads = {k: np.ones_like(t) * 0.01 for k, t in params.tensors().items()}
        for expected in (1, 2, 3):
            adamw_step(params, grads, state, lr=1e-3, cfg=self.cfg())
            assert state.step == expected

    def test_width_floor_reclamped_after_step(self):
        cfg_model = ModelConfig(n_channels=2, n_samples=4, n_classes=2,
                                n_rules=1, hidden=2, dropout_rate=0.0)
        params = init_model(cfg_model, seed=1)
        state = init_optimizer(params)
        grads = {k: np.zeros_like(t) for k, t in params.tensors().items()}
        # Push widths hard toward zero: large gradient, large lr.
        grads["spatial.widths"][:] = 1.0
        grads["temporal.widths"][:] = 1.0
        adamw_step(params, grads, state, lr=5.0, cfg=self.cfg())
        assert params.spatial.widths.min() >= 1e-3
        assert params.temporal.widths.min() >= 1e-3

    def test_non_finite_gradient_aborts_with_name(self):
        cfg_model = ModelConfig(n_channels=2, n_samples=4, n_classes=2,
                                n_rules=1, hidden=2, dropout_rate=0.0)
        params = init_model(cfg_model, seed=2)
        state = init_optimizer(params)
        grads = {k: np.zeros_like(t) for k, t in params.tensors().items()}
        grads["mlp_w1"][0, 0] = np.nan
        with pytest.raises(NumericError, match="mlp_w1"):
            adamw_step(params, grads, state, lr=1e-3, cfg=self.cfg())

    def test_gradient_key_mismatch_rejected(self):
        cfg_model = ModelConfig(n_channels=2, n_samples=4, n_classes=2,
                                n_rules=1, hidden=2, dropout_rate=0.0)
        params = init_model(cfg_model, seed=3)
        state = init_optimizer(params)
        with pytest.raises(ValueError, match="mlp_w1"):
            adamw_step(params, {"mlp_b2": np.zeros(2)}, state, lr=1e-3, cfg=self.cfg())


class TestSampling:
    def test_labels_follow_provenance(self, tiny_dataset):
        pool = build_training_pool(tiny_dataset, [0, 1])
        windows, labels, prov = sample_training_batch(
            pool, 256, 64, np.random.default_rng(1)
        )
        assert windows.shape == (64, 4, 256)
        assert windows.dtype == np.float64
        for label, (sid, tidx) in zip(labels, prov):
            assert label == tiny_dataset.subjects[sid].trials[tidx].label

    def test_four_second_trial_start_bound(self):
        # Ramp signal makes the drawn start offset readable: start = w[0, 0].
        from fuzzyssvep.optim import TrainingPool

        ramp = np.arange(1024, dtype=np.float32)
        pool = TrainingPool(
            signals=np.broadcast_to(ramp, (1, 2, 1024)).copy(),
            labels=np.zeros(1, dtype=np.int64),
            provenance=np.zeros((1, 2), dtype=np.int64),
        )
        rng = np.random.default_rng(2)
        starts = []
        for _ in range(300):
            windows, _, _ = sample_training_batch(pool, 256, 16, rng)
            starts.extend(windows[:, 0, 0].astype(int))
        starts = np.asarray(starts)
        assert starts.min() >= 0 and starts.max() <= 768
        assert 0 in starts and 768 in starts  # both edges reachable

    def test_fixed_seed_reproduces_sequence(self, tiny_dataset):
        pool = build_training_pool(tiny_dataset, [0, 1])
        a = sample_training_batch(pool, 128, 16, np.random.default_rng(42))
        b = sample_training_batch(pool, 128, 16, np.random.default_rng(42))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        np.testing.assert_array_equal(a[2], b[2])

    def test_window_longer_than_trial_rejected(self, tiny_dataset):
        pool = build_training_pool(tiny_dataset, [0])
        with pytest.raises(ConfigError, match="exceeds trial length"):
            sample_training_batch(pool, 1024, 4, np.random.default_rng(0))

    def test_pool_validation(self, tiny_dataset):
        with pytest.raises(ConfigError):
            build_training_pool(tiny_dataset, [])
        with pytest.raises(IndexError):
            build_training_pool(tiny_dataset, [5])
        with pytest.raises(ConfigError):
            build_training_pool(tiny_dataset, [0, 0])


class TestTrainLoop:
    def test_batch_split_matches_division(self, tiny_dataset):
        sizes = []
        cfg = small_train_cfg(windows_per_epoch=12000, batch_size=256,
                              max_epochs=1, warmup_epochs=0)
        model_cfg = small_model_cfg(tiny_dataset, n_rules=1, hidden=2)
        train(tiny_dataset, [0], model_cfg, cfg,
              provenance_sink=lambda prov: sizes.append(len(prov)))
        assert len(sizes) == 47
        assert sizes == [256] * 46 + [224]

    def test_deterministic_training(self, tiny_dataset):
        model_cfg = small_model_cfg(tiny_dataset)
        pa, ta = train(tiny_dataset, [0, 1], model_cfg, small_train_cfg())
        pb, tb = train(tiny_dataset, [0, 1], model_cfg, small_train_cfg())
        for k, arr in pa.tensors().items():
            np.testing.assert_array_equal(arr, pb.tensors()[k])
        assert [(r.epoch, r.lr, r.mean_loss) for r in ta] == \
               [(r.epoch, r.lr, r.mean_loss) for r in tb]
        pc, _ = train(tiny_dataset, [0, 1], model_cfg, small_train_cfg(seed=1))
        assert any(
            not np.array_equal(arr, pc.tensors()[k]) for k, arr in pa.tensors().items()
        )

    def test_zero_epochs_returns_init(self, tiny_dataset):
        cfg = small_train_cfg(max_epochs=0, warmup_epochs=0)
        params, trace = train(tiny_dataset, [0], small_model_cfg(tiny_dataset), cfg)
        assert trace == []
        assert params.config.n_classes == 4

    def test_trace_shape_and_loss_decreases(self, tiny_dataset):
        # Two rules stall on this dataset; three rules descend reliably.
        cfg = small_train_cfg(base_lr=3e-3, max_epochs=16, warmup_epochs=3,
                              windows_per_epoch=1024)
        params, trace = train(tiny_dataset, [0, 1],
                              small_model_cfg(tiny_dataset, n_rules=3, hidden=16), cfg)
        assert [r.epoch for r in trace] == list(range(16))
        assert all(isinstance(r, EpochRecord) and np.isfinite(r.mean_loss) for r in trace)
        assert trace[-1].mean_loss < trace[0].mean_loss

    def test_hygiene_only_requested_subjects_sampled(self, tiny_dataset):
        seen = set()
        train(tiny_dataset, [1], small_model_cfg(tiny_dataset), small_train_cfg(),
              provenance_sink=lambda prov: seen.update(map(tuple, prov)))
        assert seen
        assert {sid for sid, _ in seen} == {1}

    def test_model_width_mismatch_rejected(self, tiny_dataset):
        bad = small_model_cfg(tiny_dataset, n_samples=128)
        with pytest.raises(ConfigError, match="n_samples"):
            train(tiny_dataset, [0], bad, small_train_cfg())

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_divergence_rolls_back_to_finite_params(self, tiny_dataset):
        cfg = small_train_cfg(base_lr=1e18, max_epochs=3, warmup_epochs=1,
                              windows_per_epoch=96, batch_size=32)
        with pytest.raises(NumericError, match="diverged") as exc_info:
            train(tiny_dataset, [0, 1], small_model_cfg(tiny_dataset), cfg)
        err = exc_info.value
        assert hasattr(err, "params")
        for arr in err.params.tensors().values():
            assert np.all(np.isfinite(arr))

    def test_overfits_single_subject(self, four_class_stimulus):
        # Capacity oracle: one subject, mild noise, enough epochs ->
        # near-perfect accuracy on that subject's own windows.
        ds = build_dataset(four_class_stimulus, n_subjects=1, trials_per_class=3,
                           fs=256.0, duration=2.0, noise_snr_db=5.0,
                           n_channels=4, seed=7)
        model_cfg = ModelConfig(n_channels=4, n_samples=256, n_classes=4,
                                n_rules=4, hidden=32, dropout_rate=0.3)
        cfg = TrainConfig(base_lr=3e-3, batch_size=128, max_epochs=60,
                          warmup_epochs=6, windows_per_epoch=2048,
                          window_seconds=1.0, seed=11, test_windows_per_trial=10)
        params, trace = train(ds, [0], model_cfg, cfg)
        report = evaluate(params, ds.subjects[0].trials, ds.fs, 1.0, eval_seed=13)
        assert report.accuracy >= 0.99, f"train accuracy {report.accuracy}"


@pytest.fixture(scope="module")
def three_subject_dataset():
    stim = StimulusConfig(
        frequencies=(10.0, 12.0), phases=(0.0, np.pi),
        n_harmonics=2, harmonic_amplitudes=(1.0, 0.5),
        harmonic_phases=(0.0, 0.0),
    )
    return build_dataset(stim, n_subjects=3, trials_per_class=2, fs=256.0,
                         duration=2.0, noise_snr_db=5.0, n_channels=3, seed=21)


class TestLoso:
    def loso_cfgs(self, ds):
        model_cfg = ModelConfig(n_channels=3, n_samples=256, n_classes=2,
                                n_rules=2, hidden=8, dropout_rate=0.3)
        train_cfg = TrainConfig(base_lr=1e-3, batch_size=32, max_epochs=4,
                                warmup_epochs=1, windows_per_epoch=64,
                                window_seconds=1.0, seed=5,
                                test_windows_per_trial=5)
        return model_cfg, train_cfg

    def test_one_fold_per_subject(self, three_subject_dataset):
        model_cfg, train_cfg = self.loso_cfgs(three_subject_dataset)
        results = loso_run(three_subject_dataset, model_cfg, train_cfg)
        assert [r.held_out_subject for r in results] == [0, 1, 2]
        for r in results:
            assert 0.0 <= r.accuracy <= 1.0
            assert r.epochs_run == 4
            # 2 classes * 2 trials * 5 windows = 20 windows, 10 per class.
            np.testing.assert_array_equal(r.confusion.sum(axis=1), [10, 10])

    def test_reruns_identical(self, three_subject_dataset):
        model_cfg, train_cfg = self.loso_cfgs(three_subject_dataset)
        a = loso_run(three_subject_dataset, model_cfg, train_cfg)
        b = loso_run(three_subject_dataset, model_cfg, train_cfg)
        for ra, rb in zip(a, b):
            assert ra.accuracy == rb.accuracy
            assert ra.itr_bits_per_min == rb.itr_bits_per_min
            np.testing.assert_array_equal(ra.confusion, rb.confusion)

    def test_fold_hook_receives_artifacts(self, three_subject_dataset):
        model_cfg, train_cfg = self.loso_cfgs(three_subject_dataset)
        captured = []
        loso_run(three_subject_dataset, model_cfg, train_cfg, subjects=[1],
                 fold_hook=lambda k, params, trace, report: captured.append(
                     (k, len(trace), report.n_windows)))
        assert captured == [(1, 4, 20)]

    def test_needs_two_subjects(self, four_class_stimulus):
        ds = build_dataset(four_class_stimulus, 1, 1, fs=256.0, duration=2.0,
                           noise_snr_db=10.0, n_channels=2, seed=0)
        model_cfg = ModelConfig(n_channels=2, n_samples=256, n_classes=4,
                                n_rules=1, hidden=2)
        with pytest.raises(ConfigError, match="2 subjects"):
            loso_run(ds, model_cfg, small_train_cfg())

    def test_fold_seed_is_xor(self):
        assert fold_seed(12, 5) == 9
        assert fold_seed(0, 3) == 3
