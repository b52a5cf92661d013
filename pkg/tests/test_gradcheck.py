from dataclasses import replace

import numpy as np
import pytest

from sasvfusion.data import TrialLabel, labels_of
from sasvfusion.exceptions import ContractViolation
from sasvfusion.model import Mode, backward, build_model, forward
from sasvfusion.nn import grad_check
from sasvfusion.training import LossConfig, total_loss

LABEL_CYCLE = [TrialLabel.TARGET, TrialLabel.NON_TARGET, TrialLabel.SPOOF]


def loss_and_grads(model, inputs, labels, lam=0.5):
    trace = forward(model, inputs, Mode.TRAIN)
    loss, d_sasv, d_cm = total_loss(trace, labels, LossConfig(lam))
    return loss, backward(model, trace, d_sasv, d_cm)


def check_model(model, inputs, labels, lam=0.5):
    _, grads = loss_and_grads(model, inputs, labels, lam)
    return grad_check(
        lambda params: total_loss(forward(model, inputs, Mode.TRAIN), labels, LossConfig(lam))[0],
        model.params, grads.grads,
        kink_inputs=lambda params: forward(model, inputs, Mode.TRAIN).kink_inputs(),
    )


class TestGradCheckBasics:
    def test_quadratic(self):
        params = {"theta": np.array([3.0])}
        report = grad_check(lambda p: float(p["theta"][0] ** 2), params, {"theta": np.array([6.0])})
        assert report.max_rel_error < 1e-8
        assert report.passed
        assert report.checked == 1 and report.excluded == 0

    def test_detects_wrong_gradient(self):
        params = {"theta": np.array([3.0, -1.0])}
        report = grad_check(lambda p: float(np.sum(p["theta"] ** 2)), params, {"theta": np.array([6.0, 0.0])})
        assert not report.passed
        assert report.worst == "theta[1]"

    def test_parameters_are_restored(self):
        theta = np.array([0.25, -0.5, 2.0])
        params = {"theta": theta.copy()}
        grad_check(lambda p: float(np.sum(np.sin(p["theta"]))), params, {"theta": np.cos(theta)})
        np.testing.assert_array_equal(params["theta"], theta)

    def test_kink_crossing_is_excluded(self):
        # relu(x) at x = 5e-6 with h = 1e-5: the perturbation crosses zero
        params = {"x": np.array([5e-6, 1.0])}
        report = grad_check(lambda p: float(np.sum(np.maximum(p["x"], 0.0))), params,
                            {"x": np.array([0.25, 1.0])}, kink_inputs=lambda p: [p["x"]])
        assert report.excluded == 1
        assert report.checked == 1
        assert report.passed

    def test_rejects_bad_arguments(self):
        params = {"theta": np.zeros(2)}
        with pytest.raises(ContractViolation):
            grad_check(lambda p: 0.0, params, {"theta": np.zeros(2)}, h=0.0)
        with pytest.raises(ContractViolation):
            grad_check(lambda p: 0.0, params, {})
        with pytest.raises(ContractViolation):
            grad_check(lambda p: 0.0, params, {"theta": np.zeros(3)})


class TestModelGradients:
    @pytest.mark.parametrize("strategy", ["s1", "s2", "s3"])
    def test_single_trials(self, strategy, tiny_config, make_input):
        cfg = replace(tiny_config, strategy=strategy)
        model = build_model(cfg)
        for i in range(20):
            x = make_input(cfg.asv_dim, cfg.cm_dim)
            report = check_model(model, x, labels_of(LABEL_CYCLE[i % 3]))
            assert report.passed, f"trial {i}: {report.max_rel_error:.3e} at {report.worst}"
            assert report.checked > 0

    @pytest.mark.parametrize("lam", [0.1, 0.9])
    def test_atmm_weights(self, lam, tiny_config, make_input):
        model = build_model(tiny_config)
        report = check_model(model, make_input(tiny_config.asv_dim, tiny_config.cm_dim),
                             labels_of(TrialLabel.SPOOF), lam)
        assert report.passed

    def test_unshared_trelu(self, tiny_config, make_input):
        cfg = replace(tiny_config, share_trelu=False)
        model = build_model(cfg)
        assert "cm.trelu1.w_a" in model.params and "cm.trelu2.w_a" in model.params
        report = check_model(model, make_input(cfg.asv_dim, cfg.cm_dim), labels_of(TrialLabel.TARGET))
        assert report.passed

    def test_trained_w_a_away_from_identity(self, tiny_config, make_input, rng):
        model = build_model(tiny_config)
        model.params["cm.trelu.w_a"] += 0.2 * rng.standard_normal(model.params["cm.trelu.w_a"].shape)
        report = check_model(model, make_input(tiny_config.asv_dim, tiny_config.cm_dim),
                             labels_of(TrialLabel.NON_TARGET))
        assert report.passed

    @pytest.mark.parametrize("strategy", ["s1", "s2"])
    def test_batchnorm_batch(self, strategy, tiny_config, make_input):
        cfg = replace(tiny_config, strategy=strategy, use_batchnorm=True)
        model = build_model(cfg)
        inputs = [make_input(cfg.asv_dim, cfg.cm_dim) for _ in range(4)]
        labels = [labels_of(LABEL_CYCLE[i % 3]) for i in range(4)]
        report = check_model(model, inputs, labels)
        assert report.passed, f"{report.max_rel_error:.3e} at {report.worst}"


class TestDeadCmPath:
    @pytest.fixture
    def dead_model(self, tiny_config):
        model = build_model(tiny_config)
        # every first-layer unit is clamped, so the last CM layer outputs its zero bias
        model.params["cm.fc1.b"][:] = -100.0
        return model

    def test_normalisation_cutoff_is_a_kink_site(self, dead_model, make_input):
        trace = forward(dead_model, make_input(6, 4), Mode.TRAIN)
        sites = trace.kink_inputs()
        norms = sites[len(trace.cache["blocks"]):]
        assert len(norms) == len(trace.cache["normalized"]) > 0
        assert min(float(np.min(n)) for n in norms) < 0

    def test_zero_norm_point_is_excluded(self, dead_model, make_input):
        report = check_model(dead_model, make_input(6, 4), labels_of(TrialLabel.SPOOF))
        assert report.passed, f"{report.max_rel_error:.3e} at {report.worst}"
        assert report.excluded > 0
        assert report.checked > 0
