import math

import numpy as np
import pytest

from voictrl import (
    AlwaysOn,
    AoiThreshold,
    DelayModel,
    Never,
    OneSidedMismatch,
    PathVoiPolicy,
    Periodic,
    RestrictedVoiPolicy,
    SystemModel,
    audit_batch,
    decide,
    evaluate,
    loss_samples,
    run_batch,
    run_trajectory,
    signaling_residual_check,
    solve_riccati,
    sweep,
)

Z95 = 1.959963984540054
Z95_ONE_SIDED = 1.6448536269514722


@pytest.fixture(scope="module")
def desk_tables(desk_model, desk_schedule):
    from voictrl import solve_path_dp, solve_restricted_dp

    return (solve_restricted_dp(desk_model, desk_schedule),
            solve_path_dp(desk_model, desk_schedule))


class TestTimingAndIdentities:
    def test_audit_clean(self, desk_model, desk_schedule, desk_tables):
        rt, _ = desk_tables
        batch = run_batch(desk_model, desk_schedule, RestrictedVoiPolicy(rt),
                          256, np.random.default_rng(3))
        dev = audit_batch(desk_model, desk_schedule, batch)
        assert dev["error_recursion"] < 1e-9
        assert dev["mismatch_recursion"] < 1e-9
        assert dev["zeta_recursion"] == 0
        assert dev["eta_recursion"] == 0.0
        assert dev["control_law"] == 0.0
        assert dev["process_step"] == 0.0

    def test_never_policy_open_loop(self, desk_model, desk_schedule):
        batch = run_batch(desk_model, desk_schedule, Never(), 8,
                          np.random.default_rng(5))
        # no reception ever: eta stays infinite and x_hat is the noise-free
        # propagation of m0 under the applied inputs
        assert np.all(np.isinf(batch.ETA))
        xhat = np.tile(desk_model.m0, (8, 1))
        for k in range(desk_model.N + 1):
            assert np.allclose(batch.XHAT[k], xhat, atol=1e-12)
            u = -(xhat @ desk_schedule.L[k].T)
            xhat = xhat @ desk_model.A.T + u @ desk_model.B.T

    def test_error_covariance_grows_without_transmissions(self, desk_model,
                                                          desk_schedule):
        batch = run_batch(desk_model, desk_schedule, Never(), 4000,
                          np.random.default_rng(11))
        e = batch.E[:, :, 0]
        a, w, m0v = 1.1, 1.0, 1.0
        for k in (1, 5, 10):
            expect = m0v * a ** (2 * k) + sum(a ** (2 * t) * w for t in range(k))
            sample = e[k].var(ddof=1)
            se = expect * math.sqrt(2.0 / (4000 - 1))
            assert abs(sample - expect) < 4 * se

    def test_voi_rows_gate_transmissions(self, desk_model, desk_schedule,
                                         desk_tables):
        rt, pt = desk_tables
        for policy in (RestrictedVoiPolicy(rt), PathVoiPolicy(pt)):
            rec = run_trajectory(desk_model, desk_schedule, policy, 12)
            assert np.array_equal(rec.delta.astype(bool), rec.voi >= 0.0)

    def test_delta_acts_with_one_step_lag(self, desk_model, desk_schedule):
        batch = run_batch(desk_model, desk_schedule, Periodic(7), 16,
                          np.random.default_rng(2))
        # a transmission at k makes eta finite and equal zeta[k] + 1 at k+1
        for k in range(desk_model.N):
            expect = np.where(batch.DELTA[k] == 1, batch.ZETA[k] + 1.0,
                              batch.ETA[k] + 1.0)
            assert np.array_equal(batch.ETA[k + 1], expect)


class TestReproducibility:
    def test_identical_reports(self, desk_model, desk_schedule):
        a = evaluate(desk_model, desk_schedule, Periodic(5), 500, 99).to_json()
        b = evaluate(desk_model, desk_schedule, Periodic(5), 500, 99).to_json()
        assert a == b

    def test_common_random_numbers_across_policies(self, desk_model, desk_schedule):
        rng_a = np.random.default_rng(123)
        rng_b = np.random.default_rng(123)
        ba = run_batch(desk_model, desk_schedule, Never(), 64, rng_a)
        bb = run_batch(desk_model, desk_schedule, AlwaysOn(), 64, rng_b)
        assert np.array_equal(ba.W, bb.W)
        assert np.array_equal(ba.TAU, bb.TAU)
        assert np.array_equal(ba.X[0], bb.X[0])

    def test_trajectory_bitwise_stable(self, desk_model, desk_schedule):
        r1 = run_trajectory(desk_model, desk_schedule, Periodic(3), 7)
        r2 = run_trajectory(desk_model, desk_schedule, Periodic(3), 7)
        assert np.array_equal(r1.x, r2.x) and np.array_equal(r1.voi, r2.voi,
                                                             equal_nan=True)


class TestEvaluate:
    def test_always_on_rate_one(self, desk_model, desk_schedule):
        rep = evaluate(desk_model, desk_schedule, AlwaysOn(), 200, 1)
        assert rep.rate == 1.0

    def test_noise_free_never_matches_deterministic_lqr(self):
        m = SystemModel(A=1.1, B=1.0, W=0.0, Q=1.0, R=0.1, m0=2.0, M0=0.0,
                        N=25, theta=5.0, delay=DelayModel.none(),
                        allow_degenerate_noise=True)
        sched = solve_riccati(m)
        rep = evaluate(m, sched, Never(), 3, 0)
        assert rep.psi == 0.0  # estimate is exact, no transmissions
        # explicit rollout of x[k+1] = (A - B L[k]) x[k]
        x = np.array([2.0])
        total = 0.0
        for k in range(m.N + 1):
            u = -(sched.L[k] @ x)
            x_next = m.A @ x + m.B @ u
            total += float(x_next @ m.Q @ x_next + u @ m.R @ u)
            x = x_next
        assert rep.regulation == pytest.approx(total / (m.N + 1), rel=1e-12)

    def test_phi_requires_rate_weights(self, desk_schedule, desk_model):
        m = SystemModel(A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=1.0,
                        N=desk_model.N, theta=10.0, delay=desk_model.delay)
        rep = evaluate(m, desk_schedule, Periodic(4), 50, 3)
        assert rep.phi is None
        assert any("omitted" in note for note in rep.notes)
        rep2 = evaluate(desk_model, desk_schedule, Periodic(4), 50, 3)
        assert rep2.phi is not None

    def test_equivalent_loss_difference(self, desk_model, desk_schedule):
        """(N+1)/lam (Phi_1 - Phi_2) equals Psi_1 - Psi_2 within the paired CI."""
        n_runs, seed = 4000, 21
        scale = (desk_model.N + 1) / desk_model.lam
        base = loss_samples(desk_model, desk_schedule, Periodic(5), n_runs, seed)
        for other in (AlwaysOn(), Never(), AoiThreshold(4)):
            s = loss_samples(desk_model, desk_schedule, other, n_runs, seed)
            d = scale * (s["phi"] - base["phi"]) - (s["psi"] - base["psi"])
            ci = Z95 * d.std(ddof=1) / math.sqrt(n_runs)
            assert abs(d.mean()) <= ci, (other.name, d.mean(), ci)


class TestAgainstDpPredictions:
    def test_restricted_value_predicts_monte_carlo(self, desk_model, desk_schedule,
                                                   desk_tables):
        rt, _ = desk_tables
        rep = evaluate(desk_model, desk_schedule, RestrictedVoiPolicy(rt), 6000, 42)
        predicted = rt.value_at(0, 0, math.inf) + float(
            np.sum(desk_schedule.Gamma[0] * desk_model.M0))
        assert abs(rep.psi - predicted) <= rep.psi_ci95

    def test_path_value_predicts_monte_carlo(self, desk_model, desk_schedule,
                                             desk_tables):
        _, pt = desk_tables
        rep = evaluate(desk_model, desk_schedule, PathVoiPolicy(pt), 6000, 42)
        nodes, wts = np.polynomial.hermite.hermgauss(41)
        wts = wts / math.sqrt(math.pi)
        q = math.sqrt(2.0 * desk_model.M0[0, 0]) * nodes
        v0 = float(np.interp(np.clip(q, -pt.e_max, pt.e_max), pt.grid,
                             pt.V[0, 0]) @ wts)
        predicted = v0 + float(np.sum(desk_schedule.Gamma[0] * desk_model.M0))
        assert abs(rep.psi - predicted) <= rep.psi_ci95

    def test_information_ordering(self, desk_model, desk_schedule, desk_tables):
        """More information cannot hurt: path <= restricted <= best age
        threshold, using common random numbers."""
        rt, pt = desk_tables
        n_runs, seed = 6000, 5
        path = loss_samples(desk_model, desk_schedule, PathVoiPolicy(pt),
                            n_runs, seed)["psi"]
        restr = loss_samples(desk_model, desk_schedule, RestrictedVoiPolicy(rt),
                             n_runs, seed)["psi"]
        best_aoi = None
        for thr in (1, 2, 3, 4, 6, 8):
            s = loss_samples(desk_model, desk_schedule, AoiThreshold(thr),
                             n_runs, seed)["psi"]
            if best_aoi is None or s.mean() < best_aoi.mean():
                best_aoi = s
        for lo, hi in ((path, restr), (restr, best_aoi)):
            d = lo - hi
            ci = Z95_ONE_SIDED * d.std(ddof=1) / math.sqrt(n_runs)
            assert d.mean() <= ci


class TestSignalingResidual:
    def test_voi_policy_passes(self, desk_model, desk_schedule, desk_tables):
        rt, _ = desk_tables
        rep = signaling_residual_check(desk_model, desk_schedule,
                                       RestrictedVoiPolicy(rt), 4000, 31)
        assert rep.passed, rep.worst_z

    def test_never_policy_passes(self, desk_model, desk_schedule):
        rep = signaling_residual_check(desk_model, desk_schedule, Never(), 4000, 31)
        assert rep.passed

    def test_asymmetric_negative_control_fails(self, desk_model, desk_schedule):
        rep = signaling_residual_check(desk_model, desk_schedule,
                                       OneSidedMismatch(1.0), 4000, 31)
        assert not rep.passed
        assert rep.worst_z > 5.0

    def test_sparse_buckets_skipped(self, desk_model, desk_schedule):
        rep = signaling_residual_check(desk_model, desk_schedule, AlwaysOn(),
                                       30, 0, min_bucket=50)
        assert rep.skipped.all()
        assert not rep.passed


class TestSweep:
    def test_price_controls_rate(self, desk_model, desk_schedule):
        rows = sweep(desk_model, desk_schedule, "theta", [1e-3, 10.0, 1e7],
                     n_runs=800, seed=4)
        rates = [r["rate"] for r in rows]
        assert rates[2] == 0.0            # transmission never worth the price
        assert rates[0] > rates[1] > 0.0  # cheaper information, more traffic

    def test_regulation_nonincreasing_in_rate(self, desk_model, desk_schedule):
        rows = sweep(desk_model, desk_schedule, "theta", [0.5, 2.0, 10.0, 50.0],
                     n_runs=2000, seed=8)
        rows = sorted(rows, key=lambda r: r["rate"])
        for lo, hi in zip(rows, rows[1:]):
            slack = Z95 * (lo["regulation_ci95"] + hi["regulation_ci95"])
            assert hi["regulation"] <= lo["regulation"] + slack

    def test_family_policies(self, desk_model, desk_schedule):
        rows = sweep(desk_model, desk_schedule, "aoi-threshold", [2, 5],
                     n_runs=50, seed=0)
        assert rows[0]["rate"] > rows[1]["rate"]
        rows = sweep(desk_model, desk_schedule, "periodic", [2, 10],
                     n_runs=50, seed=0)
        assert rows[0]["rate"] == pytest.approx(0.5, abs=0.05)

    def test_unknown_family(self, desk_model, desk_schedule):
        with pytest.raises(ValueError):
            sweep(desk_model, desk_schedule, "nope", [1], 10, 0)


class TestDecide:
    def test_scalar_entry_point(self, desk_tables):
        rt, pt = desk_tables
        assert decide(RestrictedVoiPolicy(rt), k=rt.N, zeta=0, eta=5) == 0
        assert decide(AoiThreshold(5), k=0, zeta=0, eta=6) == 1
        assert decide(AoiThreshold(5), k=0, zeta=0, eta=5) == 0
        assert decide(AoiThreshold(5), k=0, zeta=0, eta=math.inf) == 1
        assert decide(PathVoiPolicy(pt), k=pt.N, zeta=0, e_tilde=[0.0]) == 0
        assert decide(Never(), k=3, zeta=1, eta=2, e_tilde=[9.9]) == 0
        assert decide(AlwaysOn(), k=3, zeta=1, eta=2) == 1

    def test_one_sided(self):
        assert decide(OneSidedMismatch(1.0), k=0, zeta=0, e_tilde=[2.0]) == 1
        assert decide(OneSidedMismatch(1.0), k=0, zeta=0, e_tilde=[-2.0]) == 0


class TestTrajectoryCsv:
    def test_columns_and_infinity_encoding(self, desk_model, desk_schedule, tmp_path):
        rec = run_trajectory(desk_model, desk_schedule, Never(), 1)
        path = tmp_path / "traj.csv"
        rec.to_csv(path, header_comment="config: {}")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# config")
        header = lines[1].split(",")
        assert {"k", "x", "u", "eta", "zeta", "delta", "voi"} <= set(header)
        eta_col = header.index("eta")
        assert float(lines[2].split(",")[eta_col]) == -1.0  # inf serialized as -1
