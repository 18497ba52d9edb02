"""Teacher oracles, dataset splits and persistence, and the fine-tuning
loop's determinism and convergence behavior."""
import numpy as np
import pytest

from flowdistill.distill import (
    AnalyticTeacher,
    DatasetError,
    FileTeacher,
    FineTuneConfig,
    NoisyTeacher,
    SequenceDataset,
    Split,
    TeacherError,
    evaluate,
    fine_tune,
    generate_gold,
    load_dataset,
    save_dataset,
    split_dataset,
)
from flowdistill.flowcore import FlowField, ImageFrame, write_flo
from flowdistill.studentnet import NetConfig, init
from flowdistill.synthdata import SceneSpec, dataset_from_spec, regime_spec

SMALL_NET = NetConfig(base_width=4, levels=2, seed=0)


def _tiny_dataset(n_frames=8, size=32, seed=0):
    spec = SceneSpec(size=(size, size), frames=n_frames, seed=seed,
                     motion="rotation", rotation_deg_per_frame=1.0)
    return dataset_from_spec(spec, name="tiny")


def _with_gold(ds):
    return generate_gold(ds, AnalyticTeacher.from_dataset(ds))


class TestTeachers:
    def test_analytic_teacher_returns_stored_gt_exactly(self):
        ds = _tiny_dataset()
        out = _with_gold(ds)
        for k in range(ds.n_pairs):
            assert np.array_equal(out.gold[k].u, ds.gt_flows[k].u)
            assert np.array_equal(out.gold[k].v, ds.gt_flows[k].v)

    def test_file_teacher_missing_file_names_pair(self, tmp_path):
        ds = _tiny_dataset(n_frames=4)
        for k in range(2):  # only pairs 0 and 1 on disk; pair 2 missing
            write_flo(ds.gt_flows[k], tmp_path / f"{k:06d}.flo")
        teacher = FileTeacher(tmp_path)
        with pytest.raises(TeacherError, match="2"):
            generate_gold(ds, teacher)

    def test_noisy_teacher_sigma_zero_is_identity(self):
        ds = _tiny_dataset()
        inner = AnalyticTeacher.from_dataset(ds)
        noisy = NoisyTeacher(inner, sigma=0.0, seed=3)
        a = generate_gold(ds, inner)
        b = generate_gold(ds, noisy)
        for k in range(ds.n_pairs):
            assert np.array_equal(a.gold[k].as_array(), b.gold[k].as_array())

    def test_noisy_teacher_perturbs_and_is_deterministic(self):
        ds = _tiny_dataset()
        inner = AnalyticTeacher.from_dataset(ds)
        a = generate_gold(ds, NoisyTeacher(inner, sigma=0.5, seed=3))
        b = generate_gold(ds, NoisyTeacher(inner, sigma=0.5, seed=3))
        c = generate_gold(ds, inner)
        for k in range(ds.n_pairs):
            assert np.array_equal(a.gold[k].as_array(), b.gold[k].as_array())
            assert not np.array_equal(a.gold[k].as_array(), c.gold[k].as_array())

    def test_parallel_gold_matches_serial(self):
        ds = _tiny_dataset()
        teacher = AnalyticTeacher.from_dataset(ds)
        serial = generate_gold(ds, teacher, workers=1)
        parallel = generate_gold(ds, teacher, workers=4)
        for k in range(ds.n_pairs):
            assert np.array_equal(serial.gold[k].as_array(),
                                  parallel.gold[k].as_array())


class TestSplit:
    def test_table_style_split_ranges(self):
        frames = [ImageFrame(np.zeros((8, 8, 1)))] * 601
        ds = SequenceDataset(frames=frames)
        out = split_dataset(ds, 329, 110, 161)
        assert out.split.indices("train") == range(0, 329)
        assert out.split.indices("val") == range(329, 439)
        assert out.split.indices("test") == range(439, 600)

    def test_zero_test_split_valid(self):
        ds = _tiny_dataset(n_frames=8)  # 7 pairs
        out = split_dataset(ds, 5, 2, 0)
        assert out.split.indices("test") == range(7, 7)

    def test_overlapping_request_rejected(self):
        ds = _tiny_dataset(n_frames=8)
        with pytest.raises(DatasetError):
            split_dataset(ds, 5, 2, 1)  # 8 > 7 pairs

    def test_split_is_temporally_ordered_prefix(self):
        ds = split_dataset(_tiny_dataset(n_frames=10), 4, 2, 3)
        idx = (list(ds.split.indices("train")) + list(ds.split.indices("val"))
               + list(ds.split.indices("test")))
        assert idx == list(range(9))


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        ds = split_dataset(_with_gold(_tiny_dataset()), 4, 2, 1)
        save_dataset(ds, tmp_path / "d")
        back = load_dataset(tmp_path / "d")
        assert len(back.frames) == len(ds.frames)
        assert back.split == ds.split
        for k in range(ds.n_pairs):
            got = back.gold[k]
            # .flo stores float32; compare at that precision
            assert np.array_equal(got.u, ds.gold[k].u.astype(np.float32))
        # frames are quantized to 8-bit on save
        assert np.allclose(back.frames[0].data, ds.frames[0].data,
                           atol=0.5 / 255.0 + 1e-12)

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)


class TestFineTune:
    def _ready(self, n_frames=10):
        ds = split_dataset(_with_gold(_tiny_dataset(n_frames=n_frames)), 5, 2, 2)
        return ds

    def test_missing_gold_rejected(self):
        ds = split_dataset(_tiny_dataset(), 4, 2, 1)
        with pytest.raises(DatasetError, match="generate_gold"):
            fine_tune(init(SMALL_NET), ds,
                      FineTuneConfig(max_epochs=1, crop_size=(16, 16)))

    def test_crop_larger_than_frames_rejected(self):
        ds = self._ready()
        with pytest.raises(ValueError):
            fine_tune(init(SMALL_NET), ds,
                      FineTuneConfig(max_epochs=1, crop_size=(64, 64)))

    def test_max_epochs_one_logs_one_epoch(self):
        ds = self._ready()
        _, log = fine_tune(init(SMALL_NET), ds,
                           FineTuneConfig(max_epochs=1, crop_size=(16, 16)))
        assert log.epochs_run == 1
        assert len(log.train_losses) == 1

    def test_runs_to_max_epochs_without_patience(self):
        ds = self._ready()
        cfg = FineTuneConfig(max_epochs=6, val_every=5, patience=99,
                             crop_size=(16, 16))
        _, log = fine_tune(init(SMALL_NET), ds, cfg)
        assert log.epochs_run == 6
        assert not log.stopped_early

    def test_deterministic_bit_identical(self):
        ds = self._ready()
        cfg = FineTuneConfig(max_epochs=3, crop_size=(16, 16), seed=5,
                             learning_rate=1e-3)
        net_a, log_a = fine_tune(init(SMALL_NET), ds, cfg)
        net_b, log_b = fine_tune(init(SMALL_NET), ds, cfg)
        for k in net_a.params:
            assert np.array_equal(net_a.params[k], net_b.params[k])
        assert log_a.train_losses == log_b.train_losses
        assert log_a.validations == log_b.validations

    def test_never_touches_test_split(self):
        ds = self._ready()
        _, log = fine_tune(init(SMALL_NET), ds,
                           FineTuneConfig(max_epochs=2, crop_size=(16, 16)))
        test_idx = set(ds.split.indices("test"))
        assert not log.train_indices_used & test_idx
        assert not log.val_indices_used & test_idx

    def test_overfit_one_pair(self):
        # one training pair, enough epochs for ~500 update steps
        ds = split_dataset(_with_gold(_tiny_dataset(n_frames=4)), 1, 1, 1)
        cfg = FineTuneConfig(max_epochs=100, val_every=100, patience=99,
                             crop_size=(32, 32), batch_size=1,
                             learning_rate=2e-3, seed=0)
        _, log = fine_tune(init(SMALL_NET), ds, cfg)
        assert log.train_losses[-1] < 0.2 * log.train_losses[0]

    def test_best_checkpoint_validation_minimal(self):
        ds = self._ready()
        cfg = FineTuneConfig(max_epochs=10, val_every=2, patience=99,
                             crop_size=(16, 16), learning_rate=1e-3)
        net, log = fine_tune(init(SMALL_NET), ds, cfg)
        from flowdistill.distill.train import _validate

        returned_val = _validate(net, ds, list(ds.split.indices("val")), cfg)
        assert returned_val <= min(v for _, v in log.validations) + 1e-12

    def test_training_log_csv(self, tmp_path):
        ds = self._ready()
        _, log = fine_tune(init(SMALL_NET), ds,
                           FineTuneConfig(max_epochs=2, crop_size=(16, 16)))
        p = tmp_path / "log.csv"
        log.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 2 + log.epochs_run  # header + epoch 0 + epochs


class TestCropGoldConsistency:
    def test_cropped_gold_equals_full_gold_at_offset(self):
        from flowdistill.distill.train import _crop_sample

        ds = _with_gold(_tiny_dataset(n_frames=4))
        x, g = _crop_sample(ds, 1, 3, 5, 16, 16)
        full = ds.gold[1]
        assert np.array_equal(g[0], full.u[3:19, 5:21])
        assert np.array_equal(g[1], full.v[3:19, 5:21])
        assert x.shape == (2, 16, 16)


class TestEvaluate:
    def test_teacher_against_itself_zero(self):
        ds = split_dataset(_with_gold(_tiny_dataset()), 4, 2, 1)
        res = evaluate(AnalyticTeacher.from_dataset(ds), ds)
        assert res.mean == 0.0
        assert all(v == 0.0 for v in res.epe_values)

    def test_empty_test_split_rejected(self):
        ds = split_dataset(_with_gold(_tiny_dataset()), 5, 2, 0)
        with pytest.raises(DatasetError):
            evaluate(AnalyticTeacher.from_dataset(ds), ds)

    def test_near_zero_net_epe_close_to_mean_gt_magnitude(self):
        # a zero-output student's EPE* equals the gold flow's magnitude
        spec = SceneSpec(size=(64, 64), frames=8, seed=1, motion="translation",
                         translation_px=(1.5, 0.0))
        ds = split_dataset(_with_gold(dataset_from_spec(spec)), 4, 1, 2)
        net = init(NetConfig(base_width=4, levels=2, seed=0))
        for name in net.params:
            if name.startswith("head"):
                net.params[name] = np.zeros_like(net.params[name])
        res = evaluate(net, ds)
        mean_mag = float(np.mean([ds.gold[k].magnitude().mean()
                                  for k in ds.split.indices("test")]))
        assert abs(res.mean - mean_mag) / mean_mag < 0.2

    def test_workers_do_not_change_results(self):
        ds = split_dataset(_with_gold(_tiny_dataset(n_frames=12)), 5, 2, 4)
        net = init(SMALL_NET)
        a = evaluate(net, ds, workers=1)
        b = evaluate(net, ds, workers=4)
        assert a.epe_values == b.epe_values


class TestRegimeDatasets:
    def test_regime_spec_dataset_is_usable(self):
        spec = regime_spec("rotation", seed=0, size=(64, 64), frames=6)
        ds = split_dataset(_with_gold(dataset_from_spec(spec, "rotation")), 3, 1, 1)
        assert ds.n_pairs == 5
        assert ds.gold is not None
