import math

import numpy as np
import pytest

from obbkit.errors import BudgetError, ConfigurationError
from obbkit.geom import OBB, canonicalize
from obbkit.piou import (
    PiouConfig, contribution, delta, kernel, local_distances, pixel_region, piou,
    piou_grad, piou_loss, piou_loss_and_grad,
)
from obbkit.polyclip import iou_exact

from conftest import random_box

deg = math.radians
B = OBB(0, 0, 4, 2, 0)


def overlapping_pair(rng, extent=(20, 80), min_iou=0.05):
    while True:
        g = random_box(rng, (-10, 10), extent)
        b = canonicalize(g.x + rng.uniform(-8, 8), g.y + rng.uniform(-8, 8),
                         g.w * rng.uniform(0.7, 1.3), g.h * rng.uniform(0.7, 1.3),
                         g.theta + rng.uniform(-0.5, 0.5))
        if iou_exact(b, g) > min_iou:
            return b, g


def fd_grad(b, g, cfg, h):
    region = pixel_region(b, g, cfg)
    p = np.array(b.as_tuple())
    out = np.empty(5)
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        # raw parameters on purpose: the lattice and representation stay fixed
        out[i] = (piou_loss(OBB(*(p + e)), g, cfg, region)
                  - piou_loss(OBB(*(p - e)), g, cfg, region)) / (2 * h)
    return out, region


class TestPrimitives:
    def test_local_distances(self):
        assert local_distances((0, 0), B) == (0, 0)
        assert local_distances((1, 2), B) == pytest.approx((2, 1))

    def test_local_distances_rigid(self, rng):
        for _ in range(50):
            b = random_box(rng)
            p = rng.uniform(-60, 60, 2)
            phi = rng.uniform(0, 2 * math.pi)
            c, s = math.cos(phi), math.sin(phi)
            rot = np.array([[c, -s], [s, c]])
            q = rot @ (p - b.center) + b.center
            b2 = canonicalize(b.x, b.y, b.w, b.h, b.theta - phi)
            assert local_distances(q, b2) == pytest.approx(local_distances(p, b), abs=1e-9)

    def test_delta(self):
        assert delta((0, 0), B) == 1
        assert delta((0, 1.01), B) == 1
        assert delta((1.01, 0), B) == 0

    def test_kernel(self):
        for s, k in [(2, 10), (0.3, 1), (50, 0.01)]:
            assert kernel(s, s, k) == 0.5
        assert kernel(0, 2, 10) == pytest.approx(1 - 1 / (1 + math.exp(20)), abs=1e-15)
        # closed form 1 - 1/(1 + e^-10)
        assert kernel(3, 2, 10) == pytest.approx(4.5397868702434395e-05, rel=1e-12)

    def test_kernel_monotone_and_sharpens(self):
        d = np.linspace(0, 5, 101)
        assert np.all(np.diff(kernel(d, 2, 10)) < 0)
        hard = (d <= 2).astype(float)
        off = d[np.abs(d - 2) > 0.2]
        errs = [np.max(np.abs(kernel(off, 2, k) - (off <= 2))) for k in (5, 10, 40, 200)]
        assert errs == sorted(errs, reverse=True)
        assert hard.sum() > 0

    def test_contribution(self):
        b = OBB(0, 0, 20, 10, 0)
        assert contribution((0, 0), b, PiouConfig(k=50)) == pytest.approx(1, abs=1e-9)
        assert contribution((5, 10), b) == pytest.approx(0.25, abs=1e-12)
        assert contribution((5 + 1, 10 + 1), b) <= 1e-3


class TestPiouValues:
    def test_identity_close_to_one(self):
        b = OBB.from_degrees(0, 0, 20, 10, 30)
        v = piou(b, b, PiouConfig(k=10, resolution=4))
        assert 0.9 <= v <= 1.0
        assert v == pytest.approx(0.942, abs=5e-4)

    def test_far_apart(self):
        assert piou(OBB(0, 0, 10, 10, 0), OBB(100, 0, 10, 8, 0.3)) <= 1e-3

    def test_offset_squares(self):
        v = piou(OBB(0, 0, 40, 40, 0), OBB(20, 0, 40, 40, 0))
        assert v == pytest.approx(1 / 3, abs=0.03)

    def test_symmetric_bit_exact(self, rng):
        cfg = PiouConfig(resolution=2)
        for _ in range(20):
            b, g = overlapping_pair(rng)
            assert piou(b, g, cfg) == piou(g, b, cfg)

    def test_k_convergence(self, rng):
        for _ in range(5):
            b, g = overlapping_pair(rng, (20, 40))
            exact = iou_exact(b, g)
            errs = [abs(piou(b, g, PiouConfig(k=k, resolution=8)) - exact) for k in (5, 10, 20, 40)]
            assert errs[-1] <= errs[0] + 1e-6

    def test_budget(self):
        with pytest.raises(BudgetError):
            piou(OBB(0, 0, 5000, 5000, 0), OBB(0, 0, 10, 10, 0))
        with pytest.raises(BudgetError):
            piou(OBB(0, 0, 20, 10, 0), OBB(0, 0, 20, 10, 0), PiouConfig(max_samples=100))

    @pytest.mark.parametrize("kw", [
        {"k": 0}, {"resolution": 0}, {"margin": -1}, {"eps": 0}, {"eps": 1}, {"loss": "l2"},
    ])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigurationError):
            PiouConfig(**kw)


class TestLoss:
    def test_identity_small(self):
        b = OBB.from_degrees(0, 0, 20, 10, 30)
        assert 0 <= piou_loss(b, b) <= 0.11

    def test_log_form(self):
        b, g = OBB(0, 0, 40, 40, 0), OBB(20, 0, 40, 40, 0)
        assert piou_loss(b, g) == pytest.approx(-math.log(piou(b, g)), abs=1e-15)
        # at exactly piou = 1/3 the loss would be ln 3
        assert -math.log(1 / 3) == pytest.approx(1.0986122886681098)

    def test_linear_form(self):
        b, g = OBB(0, 0, 40, 40, 0), OBB(20, 0, 40, 40, 0)
        cfg = PiouConfig(loss="linear")
        assert piou_loss(b, g, cfg) == pytest.approx(1 - piou(b, g, cfg), abs=1e-15)

    def test_saturated(self):
        loss, grad = piou_loss_and_grad(OBB(0, 0, 10, 10, 0), OBB(300, 0, 10, 10, 0))
        assert loss == pytest.approx(-math.log(1e-6))
        assert np.all(grad.as_array() == 0)

    def test_canonical_quotient(self, rng):
        g = OBB(0, 0, 20, 10, 0)
        for _ in range(20):
            x, y = rng.uniform(-5, 5, 2)
            t = rng.uniform(-4, 4)
            p1 = canonicalize(x, y, 20, 10, t)
            p2 = canonicalize(x, y, 10, 20, t + math.pi / 2 + 2 * math.pi)
            # p2 may land one ulp away in theta; identical forms must agree exactly
            p3 = canonicalize(*p1.as_tuple())
            assert piou_loss(p1, g) == piou_loss(p3, g)
            assert piou_loss(p1, g) == pytest.approx(piou_loss(p2, g), abs=1e-12)

    def test_reflection_near_seam(self):
        g = OBB(0, 0, 20, 10, 0)
        a = piou_loss(OBB.from_degrees(0, 0, 20, 10, 175), g)
        b = piou_loss(OBB.from_degrees(0, 0, 20, 10, 5), g)
        assert abs(a - b) <= 1e-3

    def test_wrap_continuity(self):
        g = OBB(0, 0, 20, 10, 0)
        a = piou_loss(canonicalize(0, 0, 20, 10, math.pi - 1e-4), g)
        b = piou_loss(canonicalize(0, 0, 20, 10, 1e-4), g)
        assert abs(a - b) <= 1e-3


class TestGradient:
    def test_zero_translation_gradient_at_optimum(self):
        b = OBB.from_degrees(0, 0, 20, 10, 30)
        grad = piou_grad(b, b)
        assert abs(grad.d_x) <= 1e-6 and abs(grad.d_y) <= 1e-6

    def test_matches_finite_differences(self, rng):
        cfg = PiouConfig(resolution=2)
        for _ in range(15):
            b, g = overlapping_pair(rng, (20, 50))
            fd, region = fd_grad(b, g, cfg, 1e-4)
            an = piou_grad(b, g, cfg, region).as_array()
            assert np.linalg.norm(an - fd) <= 1e-3 * np.linalg.norm(fd)

    def test_components_with_refined_step(self, rng):
        cfg = PiouConfig(resolution=2)
        for _ in range(8):
            b, g = overlapping_pair(rng, (20, 50))
            fd, region = fd_grad(b, g, cfg, 1e-5)
            an = piou_grad(b, g, cfg, region).as_array()
            big = np.abs(fd) >= 1e-6
            np.testing.assert_allclose(an[big], fd[big], rtol=1e-3)

    def test_linear_loss_gradient(self, rng):
        cfg = PiouConfig(resolution=2, loss="linear")
        b, g = overlapping_pair(rng, (20, 50))
        fd, region = fd_grad(b, g, cfg, 1e-4)
        an = piou_grad(b, g, cfg, region).as_array()
        assert np.linalg.norm(an - fd) <= 1e-3 * np.linalg.norm(fd)

    def test_integer_translation_invariance(self, rng):
        for _ in range(10):
            b, g = overlapping_pair(rng, (20, 40))
            tx, ty = (int(v) for v in rng.integers(-200, 200, 2))
            g1 = piou_grad(b, g).as_array()
            g2 = piou_grad(b.translated(tx, ty), g.translated(tx, ty)).as_array()
            np.testing.assert_allclose(g1, g2, atol=1e-9)

    def test_loss_and_grad_consistent(self, rng):
        b, g = overlapping_pair(rng)
        loss, grad = piou_loss_and_grad(b, g)
        assert loss == piou_loss(b, g)
        assert grad == piou_grad(b, g)
