"""Backstepping synthesis: recursion structure, collected control laws,
setpoint handling, and the evaluation gate at the prescribed instant."""

import math
import random

import pytest

import psis.symdiff as sd
from psis.errors import ConfigurationError, SingularityError
from psis.rcdf import RcdfKind, RcdfSpec
from psis.synthesis import (
    SynthesisConfig,
    describe,
    error_coordinates,
    eval_control,
    psi_expr,
    synthesize,
    zero_setpoint_twin,
)


def linear_config(n=2, c=0.0, T_p=1.0, etas=(3.0, 2.0)):
    stages = tuple(RcdfSpec(kind=RcdfKind.LINEAR, eta=e) for e in etas)
    return SynthesisConfig(n=n, c=c, T_p=T_p, stages=stages)


class TestConfig:
    def test_floor_violation_rejected_with_stage_detail(self):
        stages = (
            RcdfSpec(kind=RcdfKind.LINEAR, eta=1.5),
            RcdfSpec(kind=RcdfKind.LINEAR, eta=2.0),
        )
        with pytest.raises(ConfigurationError, match=r"stage 1: eta=1.5 needs > 2"):
            SynthesisConfig(n=2, c=0.0, T_p=1.0, stages=stages)

    def test_mixed_kinds_rejected_by_default(self):
        stages = (
            RcdfSpec(kind=RcdfKind.TAN, eta=3.0),
            RcdfSpec(kind=RcdfKind.LINEAR, eta=2.0),
        )
        with pytest.raises(ConfigurationError, match="mix kernel families"):
            SynthesisConfig(n=2, c=0.0, T_p=1.0, stages=stages)

    def test_mixed_kinds_allowed_when_opted_in(self):
        stages = (
            RcdfSpec(kind=RcdfKind.TAN, eta=3.0),
            RcdfSpec(kind=RcdfKind.LINEAR, eta=2.0),
        )
        cfg = SynthesisConfig(n=2, c=0.0, T_p=1.0, stages=stages,
                              allow_mixed_kinds=True)
        assert synthesize(cfg).config is cfg

    def test_order_and_horizon_validation(self):
        stage = (RcdfSpec(kind=RcdfKind.LINEAR, eta=2.0),)
        with pytest.raises(ConfigurationError):
            SynthesisConfig(n=0, c=0.0, T_p=1.0, stages=())
        with pytest.raises(ConfigurationError):
            SynthesisConfig(n=1, c=0.0, T_p=0.0, stages=stage)
        with pytest.raises(ConfigurationError):
            SynthesisConfig(n=1, c=math.nan, T_p=1.0, stages=stage)


class TestFirstOrder:
    def test_law_is_minus_psi(self):
        cfg = SynthesisConfig(
            n=1, c=0.0, T_p=1.0, stages=(RcdfSpec(kind=RcdfKind.LINEAR, eta=2.0),)
        )
        ctrl = synthesize(cfg)
        # u = -2 x1 / (1 - t)
        assert eval_control(ctrl, [0.5], 0.0) == pytest.approx(-1.0, rel=1e-15)
        assert eval_control(ctrl, [0.5], 0.5) == pytest.approx(-2.0, rel=1e-15)

    def test_setpoint_shifts_the_error(self):
        cfg = SynthesisConfig(
            n=1, c=2.0, T_p=1.0, stages=(RcdfSpec(kind=RcdfKind.LINEAR, eta=2.0),)
        )
        ctrl = synthesize(cfg)
        assert eval_control(ctrl, [2.0], 0.3) == 0.0
        assert error_coordinates(ctrl, [2.5], 0.3) == (0.5,)


class TestSecondOrder:
    def test_collected_linear_law(self):
        # backstepping with linear kernels collapses to
        #   u = -(e1 + e2) x2 / g - e1 (1 + e2) z1 / g^2 - z1,   g = T_p - t
        rng = random.Random(42)
        for e1, e2 in ((3.0, 2.0), (4.5, 2.5), (2.2, 1.3)):
            ctrl = synthesize(linear_config(etas=(e1, e2), c=0.7))
            for _ in range(25):
                x1 = rng.uniform(-2.0, 2.0)
                x2 = rng.uniform(-2.0, 2.0)
                t = rng.uniform(0.0, 0.95)
                g = 1.0 - t
                z1 = x1 - 0.7
                want = -(e1 + e2) * x2 / g - e1 * (1.0 + e2) * z1 / g ** 2 - z1
                got = eval_control(ctrl, [x1, x2], t)
                assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_stage_errors(self):
        ctrl = synthesize(linear_config(c=0.15, T_p=0.5))
        # z1 = x1 - c, z2 = x2 + eta1 z1 / (T_p - t)
        z = error_coordinates(ctrl, [0.09, 0.1], 0.0)
        assert z[0] == pytest.approx(-0.06, abs=1e-15)
        assert z[1] == pytest.approx(0.1 + 3.0 * (-0.06) / 0.5, rel=1e-14)

    def test_recursion_is_lower_triangular(self):
        ctrl = synthesize(linear_config(n=3, etas=(4.0, 3.0, 2.0)))
        for i, z in enumerate(ctrl.z_exprs, start=1):
            used = sd.state_indices(z)
            assert used and max(used) <= i

    def test_compiled_matches_tree_evaluation(self):
        ctrl = synthesize(linear_config(c=0.15, T_p=0.5))
        rng = random.Random(5)
        for _ in range(50):
            x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]
            t = rng.uniform(0.0, 0.45)
            assert ctrl.compiled_u(x, t) == pytest.approx(
                sd.evaluate(ctrl.u_expr, x, t), rel=1e-15
            )
            for z_expr, z_fn in zip(ctrl.z_exprs, ctrl.compiled_z):
                assert z_fn(x, t) == pytest.approx(
                    sd.evaluate(z_expr, x, t), rel=1e-15
                )


class TestKernelExpressions:
    def test_psi_expr_matches_rate_law(self):
        from psis.rcdf import psi

        rng = random.Random(8)
        v = sd.StateVar(1)
        for kind in (RcdfKind.TAN, RcdfKind.LINEAR, RcdfKind.LOGEXP):
            spec = RcdfSpec(kind=kind, eta=2.5)
            expr = psi_expr(spec, v, 1.0)
            for _ in range(40):
                value = rng.uniform(-3.0, 3.0)
                t = rng.uniform(0.0, 0.9)
                assert sd.evaluate(expr, [value], t) == pytest.approx(
                    psi(spec, value, t, 1.0), rel=1e-13, abs=1e-15
                )

    def test_logexp_kernel_has_exact_zero(self):
        spec = RcdfSpec(kind=RcdfKind.LOGEXP, eta=2.0)
        expr = psi_expr(spec, sd.StateVar(1), 1.0)
        assert sd.evaluate(expr, [0.0], 0.5) == 0.0


class TestEvaluationGate:
    def test_control_is_cut_at_the_instant(self):
        ctrl = synthesize(linear_config())
        assert eval_control(ctrl, [1.0, 1.0], 1.0) == 0.0
        assert eval_control(ctrl, [1.0, 1.0], 2.0) == 0.0

    def test_errors_are_undefined_at_the_instant(self):
        ctrl = synthesize(linear_config())
        with pytest.raises(SingularityError):
            error_coordinates(ctrl, [1.0, 1.0], 1.0)

    def test_state_length_checked(self):
        ctrl = synthesize(linear_config())
        with pytest.raises(ConfigurationError):
            eval_control(ctrl, [1.0], 0.5)
        with pytest.raises(ConfigurationError):
            error_coordinates(ctrl, [1.0, 2.0, 3.0], 0.5)

    def test_negative_time_rejected(self):
        ctrl = synthesize(linear_config())
        with pytest.raises(ConfigurationError):
            eval_control(ctrl, [1.0, 1.0], -0.1)


class TestZeroSetpointTwin:
    def test_zero_setpoint_returns_same_object(self):
        ctrl = synthesize(linear_config(c=0.0))
        assert zero_setpoint_twin(ctrl) is ctrl

    def test_twin_reproduces_control_on_shifted_state(self):
        ctrl = synthesize(linear_config(c=0.15, T_p=0.5))
        twin = zero_setpoint_twin(ctrl)
        assert twin.config.c == 0.0
        rng = random.Random(12)
        for _ in range(50):
            x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]
            w = [x[0] - 0.15, x[1]]
            t = rng.uniform(0.0, 0.49)
            assert eval_control(twin, w, t) == pytest.approx(
                eval_control(ctrl, x, t), rel=1e-12, abs=1e-15
            )


class TestDescribe:
    def test_mentions_design_and_expressions(self):
        ctrl = synthesize(linear_config(c=0.15, T_p=0.5))
        text = describe(ctrl)
        assert "n=2" in text
        assert "T_p=0.5" in text
        assert "linear(eta=3.0)" in text
        assert "z1 = " in text
        assert "u = " in text
