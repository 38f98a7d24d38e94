import math
import warnings

import numpy as np
import pytest

from userldp.mean_multi import (
    InfeasiblePlanError,
    UserDatasetVector,
    mean_heavy_multi,
    mean_l1_discrete,
    mean_l2,
    mean_linf,
    plan_regime,
    project_simplex,
)
from userldp.streams import derive_stream
from userldp.transforms import build_kashin_frame

pytestmark = pytest.mark.filterwarnings("ignore::userldp.mean1d.PreconditionWarning")


def sphere_dataset(stream, n, m, d, center, radius):
    rng = stream.generator()
    g = rng.standard_normal((n, m, d))
    g /= np.linalg.norm(g, axis=2, keepdims=True)
    vals = center + radius * g
    return UserDatasetVector(vals, "l2", float(np.linalg.norm(center) + radius))


class TestPlans:
    def test_high_privacy(self):
        plan = plan_regime(300, 10, 3, 0.5, derive_stream(1, [0]))
        plan.validate()
        assert plan.regime == "high"
        assert [len(g.users) for g in plan.groups] == [100, 100, 100]
        assert all(g.budget == 0.5 and len(g.components) == 1 for g in plan.groups)

    def test_medium_privacy_grouping(self):
        plan = plan_regime(10_000, 10, 10, 3.7, derive_stream(1, [1]))
        plan.validate()
        assert plan.regime == "medium"
        assert [g.components for g in plan.groups] == [
            (0, 1, 2), (3, 4, 5), (6, 7, 8), (9,),
        ]
        assert all(g.budget == 1.0 for g in plan.groups)

    def test_low_privacy(self):
        eps = 2 * math.log(100) + 1
        plan = plan_regime(100, 10, 2, eps, derive_stream(1, [2]))
        plan.validate()
        assert plan.regime == "low"
        assert len(plan.groups) == 1
        assert plan.groups[0].budget == pytest.approx(eps / 2)

    def test_budget_never_exceeds_epsilon(self):
        for eps in (0.3, 1.0, 2.5, 7.0, 100.0):
            plan = plan_regime(5000, 20, 6, eps, derive_stream(2, [int(eps * 10)]))
            assert np.max(plan.per_user_budget()) <= eps + 1e-12
            plan.validate()

    def test_partition_properties(self):
        plan = plan_regime(997, 10, 7, 2.9, derive_stream(3, [0]))
        users = np.concatenate([g.users for g in plan.groups])
        assert sorted(users.tolist()) == list(range(997))
        comps = sorted(c for g in plan.groups for c in g.components)
        assert comps == list(range(7))
        sizes = [len(g.users) for g in plan.groups]
        assert max(sizes) - min(sizes) <= 1

    def test_infeasible_plan_error_names_requirement(self):
        with pytest.raises(InfeasiblePlanError) as err:
            plan_regime(10, 10, 5, 0.5, derive_stream(1, [3]))
        assert err.value.regime == "high"
        assert err.value.required_n == 20


class TestLinf:
    def test_constant_data_huge_budget(self):
        vals = np.broadcast_to(np.array([0.2, -0.4]), (400, 100, 2)).copy()
        data = UserDatasetVector(vals, "linf", 0.4)
        mu = mean_linf(data, 1e6, derive_stream(4, [0]))
        assert np.max(np.abs(mu - [0.2, -0.4])) <= 1e-2

    def test_mse_within_calibrated_bound(self):
        # uniform cube data, d=4; constant frozen at 3x the observed ~109
        n, m, d, eps = 40_000, 100, 4, 1.0
        errs = []
        for t in range(30):
            s = derive_stream(910, [t])
            data = UserDatasetVector(
                s.child(9).generator().uniform(-1, 1, (n, m, d)), "linf", 1.0
            )
            mu = mean_linf(data, eps, s.child(1))
            errs.append(np.sum(mu**2))
        bound = 330.0 * (d / (n * m)) * (1 + d * math.log(n) / eps**2)
        assert np.mean(errs) <= bound

    def test_mse_scales_inverse_eps_squared(self):
        n, m, d = 4000, 100, 2
        mses = {}
        for eps in (0.25, 0.5, 1.0):
            errs = []
            for t in range(60):
                s = derive_stream(911, [t, int(eps * 100)])
                data = UserDatasetVector(
                    s.child(9).generator().uniform(-1, 1, (n, m, d)), "linf", 1.0
                )
                errs.append(np.sum(mean_linf(data, eps, s.child(1)) ** 2))
            mses[eps] = np.mean(errs)
        for lo, hi in ((0.25, 0.5), (0.5, 1.0)):
            ratio = mses[lo] / mses[hi]
            assert 2.0 <= ratio <= 8.0  # ideal 1/eps^2 gives 4

    def test_regime_continuity_at_eps_one(self):
        n, m, d = 4800, 50, 3
        out = {}
        for eps in (0.999, 1.001):
            errs = []
            for t in range(40):
                s = derive_stream(912, [t])
                data = UserDatasetVector(
                    s.child(9).generator().uniform(-1, 1, (n, m, d)), "linf", 1.0
                )
                errs.append(np.sum(mean_linf(data, eps, s.child(1)) ** 2))
            out[eps] = np.mean(errs)
            assert np.all(np.isfinite(errs))
        assert max(out.values()) / min(out.values()) < 4.0

    def test_requires_declared_support(self):
        data = UserDatasetVector(np.zeros((100, 5, 2)), "l2", 1.0)
        with pytest.raises(ValueError):
            mean_linf(data, 1.0, derive_stream(1, [0]))


class TestL2:
    def test_fixed_direction_huge_budget(self):
        d = 4
        frame = build_kashin_frame(d, derive_stream(1000, [d]))
        v = np.zeros(d)
        v[0] = 1.0
        vals = np.broadcast_to(0.5 * v, (400, 50, d)).copy()
        data = UserDatasetVector(vals, "l2", 0.5)
        mu = mean_l2(data, 1e6, frame, derive_stream(5, [0]))
        assert np.linalg.norm(mu - 0.5 * v) <= 1e-2

    def test_mse_within_calibrated_bound(self):
        # spherical data, d=8; constant frozen at 3x the observed ~870
        d, eps, n, m = 8, 1.0, 6400, 25
        frame = build_kashin_frame(d, derive_stream(1000, [0]))
        center = np.full(d, 0.3 / math.sqrt(d))
        radius = float(np.linalg.norm(center) + 0.5)
        errs = []
        for t in range(20):
            s = derive_stream(921, [t])
            data = sphere_dataset(s.child(9), n, m, d, center, 0.5)
            mu = mean_l2(data, eps, frame, s.child(1))
            errs.append(np.sum((mu - center) ** 2))
        bound = 2600.0 * (radius**2 / (n * m)) * (1 + d * math.log(n) / eps**2)
        assert np.mean(errs) <= bound

    def test_frame_dimension_mismatch(self):
        frame = build_kashin_frame(4, derive_stream(1000, [4]))
        data = UserDatasetVector(np.zeros((100, 5, 8)), "l2", 1.0)
        with pytest.raises(ValueError):
            mean_l2(data, 1.0, frame, derive_stream(1, [0]))

    def test_beats_per_coordinate_path_on_spherical_data(self):
        # dimension-factor advantage at d=16, eps=0.5
        d, eps, n, m = 16, 0.5, 1600, 30
        frame = build_kashin_frame(d, derive_stream(1234, [77]))
        wins, e_inf, e_l2 = 0, [], []
        trials = 30
        for t in range(trials):
            s = derive_stream(500, [t])
            vals = sphere_dataset(s.child(99), n, m, d, np.zeros(d), 1.0).values
            vals *= 0.99
            a = np.sum(
                mean_linf(UserDatasetVector(vals, "linf", 1.0), eps, s.child(1)) ** 2
            )
            b = np.sum(
                mean_l2(UserDatasetVector(vals, "l2", 1.0), eps, frame, s.child(2))
                ** 2
            )
            e_inf.append(a)
            e_l2.append(b)
            wins += b < a
        assert np.mean(e_l2) < np.mean(e_inf)
        assert wins / trials >= 0.8


class TestDiscrete:
    def test_deterministic_category(self):
        n, m, A = 2000, 20, 4
        vals = np.zeros((n, m, A))
        vals[:, :, 2] = 1.0
        est = mean_l1_discrete(
            UserDatasetVector(vals, "l1", 1.0), 1e6, derive_stream(6, [0])
        )
        assert np.max(np.abs(est.probs - np.eye(A)[2])) <= 1e-2

    def test_uniform_categorical_within_calibrated_bound(self):
        # constant frozen at 3x the observed ~118
        A, eps, n, m = 8, 1.0, 20_000, 50
        errs = []
        for t in range(20):
            s = derive_stream(930, [t])
            cats = s.child(9).generator().integers(0, A, (n, m))
            vals = np.zeros((n, m, A))
            np.put_along_axis(vals, cats[..., None], 1.0, axis=2)
            est = mean_l1_discrete(UserDatasetVector(vals, "l1", 1.0), eps, s.child(1))
            errs.append(np.sum((est.raw - 1.0 / A) ** 2))
        assert np.mean(errs) <= 360.0 * A * math.log(n) / (n * m * eps**2)

    def test_padding_coordinate_near_zero(self):
        A, n, m = 3, 20_000, 20
        cats = derive_stream(7, [0]).generator().integers(0, A, (n, m))
        vals = np.zeros((n, m, A))
        np.put_along_axis(vals, cats[..., None], 1.0, axis=2)
        est = mean_l1_discrete(
            UserDatasetVector(vals, "l1", 1.0), 1.0, derive_stream(7, [1])
        )
        assert est.raw_padded.shape == (4,)
        assert abs(est.raw_padded[3]) <= 0.02
        assert est.probs.shape == (A,)
        assert est.probs.sum() == pytest.approx(1.0)

    def test_rejects_non_one_hot(self):
        vals = np.full((10, 5, 4), 0.25)
        with pytest.raises(ValueError):
            mean_l1_discrete(
                UserDatasetVector(vals, "l1", 1.0), 1.0, derive_stream(1, [0])
            )


class TestHeavyMulti:
    def test_light_tails_close_to_bounded_path(self):
        # gaussian coordinates have all moments; the clipped path should be
        # within a small factor of the bounded estimator on clipped data
        n, m, d, eps = 8000, 100, 2, 1.0
        heavy_err, bounded_err = [], []
        for t in range(30):
            s = derive_stream(913, [t])
            vals = s.child(9).generator().normal(0.2, 0.5, (n, m, d))
            data = UserDatasetVector(vals, "linf", None)
            mu = mean_heavy_multi(data, eps, 4.0, 2.0, "coordinate", s.child(1))
            heavy_err.append(np.sum((mu - 0.2) ** 2))
            clipped = UserDatasetVector(np.clip(vals, -3, 3), "linf", 3.0)
            mu2 = mean_linf(clipped, eps, s.child(2))
            bounded_err.append(np.sum((mu2 - 0.2) ** 2))
        assert np.mean(heavy_err) <= 3.0 * np.mean(bounded_err)

    def test_student_t_mse_decreases_in_m(self):
        # phase transition: fitted exponent between the polynomial-tail rate
        # -2(1-1/p) and the light-tail rate (with its log drag), widened as
        # the acceptance window does
        n, d, eps, p, Mp = 10_000, 2, 1.0, 2.5, 9.0
        mses = {}
        for m in (100, 10_000):
            errs = []
            for t in range(25):
                s = derive_stream(914, [t, m])
                vals = s.child(9).generator().standard_t(3, (n, m, d))
                data = UserDatasetVector(vals, "linf", None)
                mu = mean_heavy_multi(data, eps, p, Mp, "coordinate", s.child(1))
                errs.append(np.sum(mu**2))
            mses[m] = np.mean(errs)
        slope = math.log(mses[10_000] / mses[100]) / math.log(100)
        assert -2 * (1 - 1 / p) - 0.3 <= slope <= -0.5

    def test_l2norm_mode_zero_bias_on_symmetric_data(self):
        n, m, d = 4000, 50, 4
        frame = build_kashin_frame(d, derive_stream(1000, [4]))
        est = []
        for t in range(60):
            s = derive_stream(915, [t])
            vals = s.child(9).generator().laplace(0.0, 0.7, (n, m, d))
            data = UserDatasetVector(vals, "l2", None)
            mu = mean_heavy_multi(
                data, 1.0, 3.0, 30.0, "l2norm", s.child(1), frame=frame
            )
            est.append(mu)
        est = np.asarray(est)
        for k in range(d):
            margin = 3.0 * est[:, k].std() / math.sqrt(len(est))
            assert abs(est[:, k].mean()) <= margin + 1e-3

    def test_l2norm_requires_frame(self):
        data = UserDatasetVector(np.zeros((100, 5, 2)), "l2", None)
        with pytest.raises(ValueError):
            mean_heavy_multi(data, 1.0, 2.0, 1.0, "l2norm", derive_stream(1, [0]))
        with pytest.raises(ValueError):
            mean_heavy_multi(data, 1.0, 1.5, 1.0, "coordinate", derive_stream(1, [0]))


def test_project_simplex():
    out = project_simplex(np.array([0.5, 0.6, -0.2]))
    assert out == pytest.approx([0.45, 0.55, 0.0])
    assert out.sum() == pytest.approx(1.0)
    already = np.array([0.2, 0.3, 0.5])
    assert project_simplex(already) == pytest.approx(already)


def test_dataset_support_validation():
    with pytest.raises(ValueError):
        UserDatasetVector(np.full((10, 5, 2), 2.0), "linf", 1.0)
    with pytest.raises(ValueError):
        UserDatasetVector(np.full((10, 5, 2), 0.9), "l2", 1.0)
    with pytest.raises(ValueError):
        UserDatasetVector(np.zeros((10, 5)), "linf", 1.0)
    with pytest.raises(ValueError):
        UserDatasetVector(np.zeros((10, 5, 2)), "weird", 1.0)
