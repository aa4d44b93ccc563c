"""Projection, masking, and search behaviour on hand-built and trained surrogates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoforge import pgdsearch
from protoforge.datakit import Dataset, TrainConfig, train
from protoforge.errors import DataError
from protoforge.netcore import Architecture
from protoforge.pgdsearch import (
    Box,
    Mask,
    SearchSpec,
    TargetSpec,
    masked_step_direction,
    multi_start_search,
    project,
    run_search,
    search_loss,
)


class AffineSurrogate:
    """f(x) = A x + c with exact analytic VJP; a test double."""

    def __init__(self, A, c):
        self.A = np.asarray(A, dtype=float)
        self.c = np.asarray(c, dtype=float)

    def predict_std(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.c

    def input_vjp(self, x, v):
        return self.A.T @ np.asarray(v, dtype=float)


class TwoPeaks:
    """f(x) = max over two concave quadratic peaks; two basins by design."""

    def __init__(self, c1=(-0.6, 0.0), h1=1.0, c2=(0.6, 0.0), h2=2.0):
        self.c1, self.h1 = np.asarray(c1, dtype=float), h1
        self.c2, self.h2 = np.asarray(c2, dtype=float), h2

    def _values(self, x):
        return (
            self.h1 - np.sum((x - self.c1) ** 2),
            self.h2 - np.sum((x - self.c2) ** 2),
        )

    def predict_std(self, x):
        return np.array([max(self._values(np.asarray(x, dtype=float)))])

    def input_vjp(self, x, v):
        x = np.asarray(x, dtype=float)
        v1, v2 = self._values(x)
        center = self.c1 if v1 >= v2 else self.c2
        return v[0] * (-2.0 * (x - center))


def unit_box(d=2, half=1.0):
    return Box(-half * np.ones(d), half * np.ones(d))


def simple_spec(**over):
    defaults = dict(
        box=unit_box(),
        mask=Mask(np.array([1, 1])),
        targets=TargetSpec(np.array([10.0]), np.array([1.0])),
        eta=0.05,
        n_iters=100,
        n_restarts=4,
        seed=0,
    )
    defaults.update(over)
    return SearchSpec(**defaults)


class TestProject:
    def test_clamp(self):
        box = Box(np.zeros(2), np.ones(2))
        np.testing.assert_array_equal(project(np.array([1.5, -0.2]), box), [1.0, 0.0])

    def test_identity_inside(self):
        box = unit_box()
        x = np.array([0.3, -0.7])
        np.testing.assert_array_equal(project(x, box), x)

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=3))
    @settings(max_examples=100, deadline=None)
    def test_idempotent(self, vals):
        box = Box(np.array([-1.0, 0.0, 2.0]), np.array([1.0, 0.5, 2.0]))
        x = np.asarray(vals)
        once = project(x, box)
        np.testing.assert_array_equal(project(once, box), once)

    def test_infeasible_box_rejected(self):
        with pytest.raises(DataError, match="[Ii]nfeasible"):
            Box(np.array([1.0]), np.array([0.0]))


class TestSearchLoss:
    def test_exact_hit(self):
        sur = AffineSurrogate(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([3.0, 5.0]))
        targets = TargetSpec(np.array([3.0, 5.0]), np.array([1.0, 7.0]))
        assert search_loss(np.zeros(2), sur, targets) == 0.0

    def test_hand_sum(self):
        sur = AffineSurrogate(np.zeros((2, 2)), np.array([1.0, 2.0]))
        targets = TargetSpec(np.zeros(2), np.array([1.0, 2.0]))
        assert search_loss(np.zeros(2), sur, targets) == pytest.approx(1 + 2 * 2)

    def test_matches_recomputation_from_forward(self):
        rng = np.random.default_rng(0)
        sur = AffineSurrogate(rng.normal(size=(3, 4)), rng.normal(size=3))
        targets = TargetSpec(rng.normal(size=3), np.array([1.0, *rng.uniform(0, 2, 2)]))
        for _ in range(10):
            x = rng.normal(size=4)
            expected = float(np.sum(targets.weights * np.abs(sur.predict_std(x) - targets.goals)))
            assert search_loss(x, sur, targets) == pytest.approx(expected, rel=1e-12)


class TestStepDirection:
    def test_three_four_five(self):
        # gradient (3, 4), mask keeps only the first coordinate
        sur = AffineSurrogate(np.array([[3.0, 4.0]]), np.array([0.0]))
        targets = TargetSpec(np.array([-10.0]), np.array([1.0]))  # residual > 0 -> v = +1
        d = masked_step_direction(np.zeros(2), sur, targets, Mask(np.array([1, 0])))
        np.testing.assert_allclose(d, [1.0, 0.0])

    def test_unit_gradient_fixed_point(self):
        sur = AffineSurrogate(np.array([[0.6, 0.8]]), np.array([0.0]))
        targets = TargetSpec(np.array([-10.0]), np.array([1.0]))
        d = masked_step_direction(np.zeros(2), sur, targets, Mask(np.array([1, 1])))
        np.testing.assert_allclose(d, [0.6, 0.8], atol=1e-15)

    def test_masked_coordinates_exactly_zero(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            sur = AffineSurrogate(rng.normal(size=(2, 5)), rng.normal(size=2))
            targets = TargetSpec(rng.normal(size=2), np.array([1.0, rng.uniform(0, 3)]))
            bits = rng.integers(0, 2, size=5)
            if bits.sum() == 0:
                bits[0] = 1
            d = masked_step_direction(rng.normal(size=5), sur, targets, Mask(bits))
            assert not d[bits == 0].any()

    def test_stationary_point_returns_zero(self):
        sur = AffineSurrogate(np.zeros((1, 2)), np.array([0.0]))
        targets = TargetSpec(np.array([5.0]), np.array([1.0]))
        d = masked_step_direction(np.zeros(2), sur, targets, Mask(np.array([1, 1])))
        assert not d.any()


def train_bowl_surrogate(c=(0.3, -0.2), n=600, seed=0):
    """Surrogate for y = -||x - c||^2 on x ~ U[-1,1]^2; argmax at c.

    No dropout: the search never samples stochastically and a clean fit
    keeps the learned peak within a few hundredths of c.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = -np.sum((X - np.asarray(c)) ** 2, axis=1)
    ds = Dataset(["x1", "x2"], ["y"], X, y[:, None])
    cfg = TrainConfig(
        arch=Architecture(2, 1, (32, 32), "tanh", 0.0),
        epochs=400, batch_size=32, learning_rate=3e-3, seed=seed,
    )
    return train(ds, cfg)


class TestRunSearch:
    def test_recovers_generator_maximum(self):
        sur = train_bowl_surrogate(seed=1)
        s = sur.standardizer
        c_std = s.transform_x(np.array([[0.3, -0.2]]))[0]
        box = Box(s.transform_x(np.array([[-1.0, -1.0]]))[0], s.transform_x(np.array([[1.0, 1.0]]))[0])
        spec = SearchSpec(
            box=box, mask=Mask(np.array([1, 1])),
            targets=TargetSpec(np.array([10.0]), np.array([1.0])),
            eta=0.05, n_iters=200, n_restarts=8, seed=5,
        )
        result = multi_start_search(sur, spec)
        assert np.linalg.norm(result.x_final - c_std) < 0.1

    def test_boundary_exact_when_box_excludes_maximum(self):
        sur = train_bowl_surrogate(seed=2)
        s = sur.standardizer
        lo = s.transform_x(np.array([[0.5, -1.0]]))[0]
        hi = s.transform_x(np.array([[1.0, 1.0]]))[0]
        box = Box(lo, hi)
        spec = SearchSpec(
            box=box, mask=Mask(np.array([1, 1])),
            targets=TargetSpec(np.array([10.0]), np.array([1.0])),
            eta=0.05, n_iters=200, n_restarts=8, seed=6,
        )
        result = multi_start_search(sur, spec)
        assert result.x_final[0] == box.lower[0]  # exactly on the clamped face

    def test_mask_pins_coordinate_bitwise(self):
        sur = train_bowl_surrogate(seed=3)
        box = unit_box(2, 1.5)
        x0 = np.array([0.77, -0.123456789])
        spec = simple_spec(box=box, mask=Mask(np.array([1, 0])), n_iters=50)
        result = run_search(sur, spec, x0)
        for x, _ in result.trajectory:
            assert x[1] == x0[1]

    def test_trajectory_inside_box_and_step_norms(self):
        sur = train_bowl_surrogate(seed=4)
        box = unit_box(2, 0.8)
        spec = simple_spec(box=box, n_iters=60, eta=0.07)
        result = run_search(sur, spec, np.array([0.5, 0.5]))
        pts = [x for x, _ in result.trajectory]
        for x in pts:
            assert (x >= box.lower).all() and (x <= box.upper).all()
        for a, b in zip(pts, pts[1:]):
            assert np.linalg.norm(b - a) <= spec.eta * (1 + 1e-12)

    def test_early_exit_records_final_loss(self):
        sur = AffineSurrogate(np.zeros((1, 2)), np.array([5.0]))  # constant f
        spec = simple_spec(targets=TargetSpec(np.array([5.0]), np.array([1.0])), n_iters=50)
        result = run_search(sur, spec, np.array([0.2, 0.2]))
        assert len(result.trajectory) == 1  # zero gradient at the start
        assert result.loss_final == 0.0


class TestMultiStart:
    def test_single_restart_equals_run_search(self):
        sur = TwoPeaks()
        spec = simple_spec(n_restarts=1, n_iters=80)
        direct = run_search(sur, spec, pgdsearch.sample_start(spec, 0))
        multi = multi_start_search(sur, spec)
        np.testing.assert_array_equal(direct.x_final, multi.x_final)
        assert direct.loss_final == multi.loss_final

    def test_min_contract(self):
        sur = TwoPeaks()
        spec = simple_spec(n_restarts=20, n_iters=80)
        per_restart = [
            run_search(sur, spec, pgdsearch.sample_start(spec, r), restart_index=r)
            for r in range(spec.n_restarts)
        ]
        best = multi_start_search(sur, spec)
        assert best.loss_final == min(r.loss_final for r in per_restart)

    def test_finds_global_basin_that_single_bad_start_misses(self):
        # peaks at c1 (height 1) and c2 (height 2); target far above both, so
        # the analytic best loss is t - h2 at c2 and a start trapped near c1
        # converges to loss t - h1
        sur = TwoPeaks()
        t = 10.0
        spec = simple_spec(
            targets=TargetSpec(np.array([t]), np.array([1.0])),
            n_restarts=20, n_iters=150, seed=3,
        )
        bad_start = run_search(sur, spec, np.array([-0.9, 0.05]))
        assert bad_start.loss_final == pytest.approx(t - sur.h1, abs=0.05)
        best = multi_start_search(sur, spec)
        assert best.loss_final == pytest.approx(t - sur.h2, abs=0.05)
        assert np.linalg.norm(best.x_final - sur.c2) < 0.1

    def test_determinism(self):
        sur = TwoPeaks()
        spec = simple_spec(n_restarts=6, n_iters=40)
        a = multi_start_search(sur, spec)
        b = multi_start_search(sur, spec)
        np.testing.assert_array_equal(a.x_final, b.x_final)
        assert a.restart_index == b.restart_index

    def test_fixed_coordinates_use_base_point(self):
        sur = TwoPeaks()
        spec = simple_spec(
            mask=Mask(np.array([1, 0])),
            base_point=np.array([0.0, 0.25]),
            n_restarts=3, n_iters=30,
        )
        result = multi_start_search(sur, spec)
        assert result.x_final[1] == 0.25


class TestSpecWire:
    def test_round_trip(self):
        spec = simple_spec(base_point=np.array([0.1, 0.2]))
        d = spec.to_dict()
        spec2 = SearchSpec.from_dict(d)
        assert d == spec2.to_dict()

    def test_schema_fields(self):
        d = simple_spec().to_dict()
        assert set(d) == {"bounds", "mask", "targets", "eta", "iters", "restarts", "seed", "base_point"}

    def test_weight_pinning(self):
        with pytest.raises(DataError, match="fixed to 1"):
            TargetSpec(np.array([1.0, 2.0]), np.array([2.0, 1.0]))

    def test_vacuous_mask_rejected(self):
        with pytest.raises(DataError, match="vacuous"):
            Mask(np.zeros(3, dtype=int))
