import math

import numpy as np
import pytest

from obbkit.errors import ConfigurationError
from obbkit.geom import OBB, canonicalize
from obbkit.fitkit import FitConfig, angle_error, boundary_sweep, fit, smooth_l1
from obbkit.piou import piou_loss
from obbkit.polyclip import iou_exact

from conftest import random_box

deg = math.radians


class TestSmoothL1:
    def test_examples(self):
        g = OBB(0, 0, 40, 20, 0.5)
        assert smooth_l1(g, g)[0] == 0
        assert smooth_l1(g.translated(0.5, 0), g)[0] == 0.125
        assert smooth_l1(g.translated(0, 3), g)[0] == 2.5

    def test_gradient_exact(self, rng):
        # closed form: d/beta inside the quadratic zone, sign(d) outside
        for _ in range(200):
            b = rng.uniform(-5, 5, 5)
            g = rng.uniform(-5, 5, 5)
            beta = rng.uniform(0.2, 3)
            d = b - g
            if np.any(np.abs(np.abs(d) - beta) < 1e-3):
                continue
            _, grad = smooth_l1(b, g, beta)
            want = np.where(np.abs(d) < beta, d / beta, np.sign(d))
            np.testing.assert_allclose(grad, want, atol=1e-9, rtol=0)
            h = 1e-6
            for i in range(5):
                e = np.zeros(5)
                e[i] = h
                fd = (smooth_l1(b + e, g, beta)[0] - smooth_l1(b - e, g, beta)[0]) / (2 * h)
                assert fd == pytest.approx(grad[i], abs=1e-6)

    def test_no_angle_wrap(self):
        g = OBB.from_degrees(0, 0, 20, 10, 0)
        p = OBB.from_degrees(0, 0, 20, 10, 179)
        assert smooth_l1(p, g)[0] == pytest.approx(deg(179) - 0.5)

    def test_bad_beta(self):
        with pytest.raises(ConfigurationError):
            smooth_l1((0,) * 5, (0,) * 5, 0)


class TestAngleError:
    def test_fold(self):
        assert angle_error(OBB.from_degrees(0, 0, 4, 2, 179), OBB(0, 0, 4, 2, 0)) == pytest.approx(deg(1))
        assert angle_error(OBB.from_degrees(0, 0, 4, 2, 45), OBB(0, 0, 4, 2, 0)) == pytest.approx(deg(45))


class TestFit:
    def test_init_equal_target(self):
        g = OBB.from_degrees(0, 0, 40, 20, 30)
        tr = fit(g, g)
        assert len(tr.steps) == 1 and tr.steps[0].step == 0
        assert tr.converged and tr.final_iou == pytest.approx(1.0, abs=1e-12)

    def test_near_square_from_45(self):
        g = OBB.from_degrees(0, 0, 20.4, 20, 0)
        tr = fit(g, OBB.from_degrees(0, 0, 20.4, 20, 45))
        assert tr.converged
        assert tr.final_iou >= 0.9
        assert len(tr.steps) <= 500

    def test_deterministic(self):
        g = OBB.from_degrees(3, -2, 30, 12, 20)
        cfg = FitConfig(seed=4, jitter=(2.0, deg(5)), max_steps=60)
        a = fit(g, OBB.from_degrees(0, 0, 25, 15, 50), cfg)
        b = fit(g, OBB.from_degrees(0, 0, 25, 15, 50), cfg)
        assert a == b

    def test_seed_changes_jitter(self):
        g = OBB.from_degrees(0, 0, 30, 12, 20)
        init = OBB.from_degrees(0, 0, 25, 15, 50)
        a = fit(g, init, FitConfig(seed=1, jitter=(2.0, 0.0), max_steps=1))
        b = fit(g, init, FitConfig(seed=2, jitter=(2.0, 0.0), max_steps=1))
        assert a.steps[0].box != b.steps[0].box

    @pytest.mark.parametrize("loss", ["piou", "smooth_l1"])
    def test_equivalent_inits_identical(self, loss):
        g = OBB.from_degrees(0, 0, 30, 12, 10)
        cfg = FitConfig(loss=loss, max_steps=40)
        a = fit(g, OBB.from_degrees(1, 2, 24, 14, 40), cfg)
        b = fit(g, OBB.from_degrees(1, 2, 14, 24, 130), cfg)
        assert a == b

    def test_descent_sanity(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            g = random_box(rng, (-5, 5), (15, 40))
            init = canonicalize(g.x + rng.uniform(-4, 4), g.y + rng.uniform(-4, 4),
                                g.w * 0.8, g.h * 1.1, g.theta + rng.uniform(-0.4, 0.4))
            cfg = FitConfig(step_translation=0.1, step_extent=0.05, step_angle=0.002, max_steps=15)
            tr = fit(g, init, cfg)
            losses = [s.loss for s in tr.steps]
            assert all(b <= a + cfg.tol for a, b in zip(losses, losses[1:]))
            assert all(math.isfinite(v) for v in losses)

    def test_trace_bounds(self):
        g = OBB.from_degrees(0, 0, 30, 12, 10)
        tr = fit(g, OBB.from_degrees(5, 5, 20, 20, 60), FitConfig(max_steps=7, iou_target=1.0))
        assert len(tr.steps) <= 7
        assert [s.step for s in tr.steps] == list(range(len(tr.steps)))

    def test_saturated_reported(self):
        g = OBB(0, 0, 10, 10, 0)
        tr = fit(g, OBB(200, 0, 10, 10, 0), FitConfig(max_steps=5))
        assert tr.saturated and not tr.converged
        assert tr.stalled

    def test_ambiguous_targets_hurt_smooth_l1(self):
        g = OBB.from_degrees(0, 0, 20.4, 20, 0)
        init = OBB.from_degrees(0, 0, 20.4, 20, 45)
        alt = [g.as_tuple(), (0, 0, 20, 20.4, math.pi / 2)]
        sl = fit(g, init, FitConfig(loss="smooth_l1"), targets=alt)
        assert not sl.converged
        assert fit(g, init).final_iou > sl.final_iou

    @pytest.mark.parametrize("kw", [
        {"loss": "l2"}, {"step_angle": 0}, {"max_steps": 0}, {"iou_target": 0}, {"jitter": (-1, 0)},
    ])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigurationError):
            FitConfig(**kw)


class TestBoundarySweep:
    G = OBB.from_degrees(0, 0, 20, 10, 0)

    def test_identity_point(self):
        rows = boundary_sweep(self.G, [0.0])
        assert rows[0][1] == pytest.approx(piou_loss(self.G, self.G))
        assert rows[0][1] <= 0.11
        assert rows[0][2] == 0

    def test_half_turn_rows_identical(self):
        angles = np.radians(np.arange(-180, 1, 15.0))
        a = boundary_sweep(self.G, angles)
        b = boundary_sweep(self.G, angles + math.pi)
        for ra, rb in zip(a, b):
            assert ra[1] == pytest.approx(rb[1], abs=1e-9)
            assert ra[2] == pytest.approx(rb[2], abs=1e-9)

    def test_seam(self):
        rows = boundary_sweep(self.G, np.radians([-2, -1, 0, 1, 2]))
        pl = [r[1] for r in rows]
        sl = [r[2] for r in rows]
        assert max(abs(a - b) for a, b in zip(pl, pl[1:])) <= 0.05
        assert abs(sl[2] - sl[1]) >= 1.0
        assert abs(sl[2] - sl[1]) == pytest.approx(math.pi - deg(1) - 0.5)
