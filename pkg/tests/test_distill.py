import numpy as np
import pytest

from ptdistill import nn
from ptdistill.core import InvalidInputError
from ptdistill.data import GaussianMixtureSpec, generate
from ptdistill.distill import (
    DistillationReport,
    distill_student,
    sweep_proxy_teachers,
    teacher_probs,
    train_teacher,
)
from ptdistill.losses import PerturbationConfig
from ptdistill.selection import SearchSpec


@pytest.fixture(scope="module")
def small_setup():
    """A small but learnable mixture with a quickly trained teacher."""
    spec = GaussianMixtureSpec.sample(seed=0, dim=10)
    data = generate(spec, 900, (0.5, 0.25, 0.25))
    tc = nn.TrainConfig(learning_rate=1e-2, epochs=30, seed=0)
    teacher, val_acc = train_teacher(data, [10, 16, 3], tc)
    return spec, data, teacher, val_acc


def quick_tc(seed=1):
    return nn.TrainConfig(learning_rate=5e-3, epochs=10, seed=seed)


class TestTrainTeacher:
    def test_teacher_learns(self, small_setup):
        _, _, _, val_acc = small_setup
        assert val_acc > 0.6

    def test_probs_are_distributions(self, small_setup):
        _, data, teacher, _ = small_setup
        x_val, _ = data.split("validation")
        probs = teacher_probs(teacher, x_val)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_empty_train_split_rejected(self):
        spec = GaussianMixtureSpec.sample(seed=0, dim=3)
        data = generate(spec, 100, (0.0, 0.5, 0.5))
        with pytest.raises(InvalidInputError):
            train_teacher(data, [3, 4, 3], quick_tc())


class TestDistillStudent:
    @pytest.mark.parametrize("method,params", [
        ("kl", None),
        ("onehot", None),
        ("temperature", {"tau": 4.0}),
        ("label_smoothing", {"delta": 0.1}),
        ("focal", {"gamma": 2.0}),
    ])
    def test_methods_produce_reports(self, small_setup, method, params):
        _, data, teacher, _ = small_setup
        report = distill_student(teacher, data, method, quick_tc(), params)
        assert report.method == method
        assert 0.0 <= report.student_test_accuracy <= 1.0
        assert report.teacher_vs_truth is not None
        assert len(report.student_history) == 10
        d = report.to_dict()
        assert d["seeds"]["student_init"] == 1

    def test_pt_with_fixed_config(self, small_setup):
        _, data, teacher, _ = small_setup
        cfg = PerturbationConfig.tied([1.0], 3)
        report = distill_student(teacher, data, "pt", quick_tc(),
                                 {"cfg": cfg})
        assert report.chosen_config["order"] == 1
        assert report.chosen_config["coefficients"] == cfg.coefficients.tolist()
        assert "cfg" not in report.chosen_config

    def test_pt_with_search(self, small_setup):
        _, data, teacher, _ = small_setup
        spec = SearchSpec(max_order=1, trials_per_order=3, seed=0)
        report = distill_student(teacher, data, "pt", quick_tc(),
                                 search_spec=spec)
        assert "search_score" in report.chosen_config
        assert report.seeds["search"] == 0
        total = report.chosen_config["search_score"]["total"]
        assert total >= 0.0

    def test_pt_without_config_or_search(self, small_setup):
        _, data, teacher, _ = small_setup
        with pytest.raises(InvalidInputError):
            distill_student(teacher, data, "pt", quick_tc())

    def test_unknown_method(self, small_setup):
        _, data, teacher, _ = small_setup
        with pytest.raises(InvalidInputError):
            distill_student(teacher, data, "banana", quick_tc())

    def test_deterministic(self, small_setup):
        _, data, teacher, _ = small_setup
        a = distill_student(teacher, data, "kl", quick_tc(seed=5))
        b = distill_student(teacher, data, "kl", quick_tc(seed=5))
        assert a.student_test_accuracy == b.student_test_accuracy
        assert a.student_history == b.student_history

    def test_kl_student_tracks_teacher(self, small_setup):
        # the student should land within a few points of its teacher
        _, data, teacher, _ = small_setup
        report = distill_student(
            teacher, data, "kl", nn.TrainConfig(learning_rate=5e-3,
                                                epochs=30, seed=2))
        x_test, y_test = data.split("test")
        teacher_acc = nn.accuracy(teacher, x_test, y_test)
        assert report.student_test_accuracy >= teacher_acc - 0.1


class TestSweepProxyTeachers:
    def test_points_align_with_configs(self, small_setup):
        _, data, teacher, _ = small_setup
        configs = [PerturbationConfig.zero(3, 1),
                   PerturbationConfig.tied([1.0], 3),
                   PerturbationConfig.tied([5.0], 3)]
        points = sweep_proxy_teachers(teacher, data, configs, quick_tc())
        assert len(points) == 3
        for p in points:
            assert 0.0 <= p.student_test_accuracy <= 1.0
            assert 0.0 <= p.converged_fraction <= 1.0
            assert p.l2_distance_to_truth >= 0.0
            assert p.tvd_to_truth >= 0.0

    def test_zero_config_reproduces_teacher_distance(self, small_setup):
        spec, data, teacher, _ = small_setup
        from ptdistill.data import true_posterior_rows
        from ptdistill.selection import risk_gap_terms
        x_val, _ = data.split("validation")
        probs = teacher_probs(teacher, x_val)
        expect = risk_gap_terms(probs, true_posterior_rows(spec, x_val))
        points = sweep_proxy_teachers(
            teacher, data,
            [PerturbationConfig.zero(3, 1), PerturbationConfig.tied([1.0], 3)],
            quick_tc())
        assert points[0].l2_distance_to_truth == pytest.approx(
            expect.l2_distance_mean, abs=1e-6)
        assert points[0].tvd_to_truth == pytest.approx(
            expect.tvd_mean, abs=1e-6)

    def test_needs_two_configs(self, small_setup):
        _, data, teacher, _ = small_setup
        with pytest.raises(InvalidInputError):
            sweep_proxy_teachers(teacher, data,
                                 [PerturbationConfig.zero(3)], quick_tc())

    def test_needs_spec(self, small_setup):
        _, data, teacher, _ = small_setup
        from ptdistill.data import LabeledDataset
        bare = LabeledDataset(inputs=data.inputs, labels=data.labels,
                              split_sizes=data.split_sizes, spec=None)
        with pytest.raises(InvalidInputError):
            sweep_proxy_teachers(teacher, bare,
                                 [PerturbationConfig.zero(3, 1),
                                  PerturbationConfig.tied([1.0], 3)],
                                 quick_tc())


class TestDistillationReport:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            DistillationReport(method="kl", student_test_accuracy=1.5,
                               teacher_vs_truth=None, teacher_vs_labels=None,
                               chosen_config={}, seeds={},
                               teacher_validation_accuracy=0.5)
