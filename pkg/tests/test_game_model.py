import numpy as np
import pytest

from conftest import toy_dict
from iesgame import game_model as gm
from iesgame import solve_engine as se
from iesgame import thermal_side as th
from iesgame.config import ConfigError, scenario_from_dict
from iesgame.kkt_reformulation import assemble_single_level
from iesgame.model_ir import ModelIR
from iesgame.scenario_cli import build_bundle


class TestConfigValidation:
    def test_toy_loads(self, toy_cfg):
        assert toy_cfg.horizon == 3
        assert len(toy_cfg.tp_units) == 1

    def test_bundled_scenarios_load(self, case1_path, case2_path):
        from iesgame.config import load_scenario
        for path in (case1_path, case2_path):
            cfg = load_scenario(path)
            assert cfg.horizon == 24

    def test_price_order_enforced(self):
        data = toy_dict()
        data["prices"]["mu_av"] = 100.0
        with pytest.raises(ConfigError, match="min <= av <= max"):
            scenario_from_dict(data)

    def test_alpha_range(self):
        data = toy_dict()
        data["idr"]["alpha"] = 1.0
        with pytest.raises(ConfigError, match="alpha"):
            scenario_from_dict(data)

    def test_profile_length(self):
        data = toy_dict()
        data["fixed_load_mw"] = [1.0, 2.0]
        with pytest.raises(ConfigError, match="per period"):
            scenario_from_dict(data)

    def test_missing_field(self):
        data = toy_dict()
        del data["prices"]
        with pytest.raises(ConfigError, match="prices"):
            scenario_from_dict(data)

    def test_shift_total_resolution(self):
        # a 10% ratio against 900 MWh of fixed load implies 100 MWh shiftable
        data = toy_dict()
        data["fixed_load_mw"] = [300.0, 300.0, 300.0]
        data["tp_units"][0]["p_max"] = 500.0  # keep static checks meaningful
        cfg = scenario_from_dict(data)
        assert cfg.shift_total() == pytest.approx(100.0)

    def test_baseline_shift_totals(self, toy_cfg):
        base = toy_cfg.baseline_shift()
        assert base.sum() == pytest.approx(toy_cfg.shift_total())
        assert np.all(base <= toy_cfg.shift_upper() + 1e-12)

    def test_proportional_prices_meet_average(self, toy_cfg):
        mu, gamma = toy_cfg.proportional_prices()
        assert mu.sum() == pytest.approx(3 * toy_cfg.prices.mu_av)
        assert gamma.sum() == pytest.approx(3 * toy_cfg.prices.gamma_av)

    def test_proportional_prices_band_enforced(self):
        data = toy_dict()
        data["fixed_load_mw"] = [0.4, 3.0, 1.4]  # spread leaves the band
        with pytest.raises(ConfigError, match="band"):
            scenario_from_dict(data).proportional_prices()


class TestFollowerBestResponse:
    def test_interior_closed_form(self, toy_cfg):
        # gamma/(2 theta) with theta=150
        mu = np.array([60.0, 70.0, 75.5])
        gamma = np.array([30.0, 25.0, 33.5])
        _, h_cl = gm.follower_best_response(mu, gamma, toy_cfg)
        assert h_cl == pytest.approx(gamma / 300.0)

    def test_clamped_at_cap(self):
        data = toy_dict()
        data["idr"]["theta"] = 0.8  # 64/(2*0.8) = 40 far above the cut cap
        cfg = scenario_from_dict(data)
        mu = np.full(3, 68.5)
        gamma = np.array([39.0, 29.5, 20.0])
        _, h_cl = gm.follower_best_response(mu, gamma, cfg)
        assert h_cl == pytest.approx(cfg.cut_upper())

    def test_greedy_fill_order(self):
        # prices [90, 40, 65], caps 10 each, total 12 -> [0, 10, 2]
        data = toy_dict()
        data["prices"] = {"mu_min": 40.0, "mu_max": 90.0, "mu_av": 65.0,
                          "gamma_min": 20.0, "gamma_max": 39.0,
                          "gamma_av": 29.5}
        data["fixed_load_mw"] = [36.0, 36.0, 36.0]
        data["idr"]["alpha"] = 0.1
        data["idr"]["shift_max_frac"] = 10.0 / 36.0
        data["tp_units"][0]["p_max"] = 60.0
        cfg = scenario_from_dict(data)
        assert cfg.shift_total() == pytest.approx(12.0)
        p_sl, _ = gm.follower_best_response(
            np.array([90.0, 40.0, 65.0]), np.full(3, 29.5), cfg)
        assert p_sl == pytest.approx([0.0, 10.0, 2.0])

    def test_price_band_required(self, toy_cfg):
        with pytest.raises(ValueError, match="band"):
            gm.follower_best_response(np.array([10.0, 68.5, 68.5]),
                                      np.full(3, 29.5), toy_cfg)

    def test_beats_random_feasible_points(self, toy_cfg):
        rng = np.random.default_rng(42)
        for _ in range(3):
            mu = se._random_admissible_prices(50.0, 87.0, 68.5, 3, rng)
            gamma = se._random_admissible_prices(20.0, 39.0, 29.5, 3, rng)
            p_sl, h_cl = gm.follower_best_response(mu, gamma, toy_cfg)
            best = gm.follower_cost(toy_cfg, mu, gamma, p_sl, h_cl)
            for _ in range(1000):
                q_sl, q_cl = se._random_follower_point(toy_cfg, rng)
                assert gm.follower_cost(toy_cfg, mu, gamma, q_sl, q_cl) >= \
                    best - 1e-9

    def test_cost_convex_in_heat_cut(self, toy_cfg):
        # midpoint of the cost along any heat-cut axis sits strictly below
        # the chord: the squared penalty has positive curvature
        mu = np.full(3, 68.5)
        gamma = np.full(3, 29.5)
        p_sl = toy_cfg.baseline_shift()
        lo, hi = np.zeros(3), toy_cfg.cut_upper()
        mid = (lo + hi) / 2
        f = lambda h: gm.follower_cost(toy_cfg, mu, gamma, p_sl, h)
        assert f(mid) < (f(lo) + f(hi)) / 2 - 1e-9


class TestBuildLeader:
    def test_price_average_row_value(self, case1_path):
        from iesgame.config import load_scenario
        cfg = load_scenario(case1_path)
        bundle = build_bundle(cfg, 3)
        row = next(r for r in bundle.ir.rows if r.name == "price_avg_mu")
        assert row.rhs == pytest.approx(24 * 65.0)  # 1560

    def test_chp_cost_coefficients(self, toy_cfg):
        # published CHP row at P = 2 MW, H = 0: 4.4*2^2 + 13.29*2 + 39
        u = toy_cfg.chp_units[0]
        y = 2.0 + u.c_v * 0.0
        cost = u.cost_a * y ** 2 + u.cost_b * y + u.cost_c
        assert cost == pytest.approx(83.18)

    def test_static_capacity_check(self):
        data = toy_dict()
        data["fixed_load_mw"] = [5.0, 5.0, 5.0]
        cfg = scenario_from_dict(data)
        with pytest.raises(gm.BuildError, match="capacity"):
            build_bundle(cfg, 2)

    def test_pipeline_delivery_check(self):
        data = toy_dict()
        data["pipelines"][0]["mass_flow_kg_s"] = 40.0  # floor above the load
        cfg = scenario_from_dict(data)
        with pytest.raises(gm.BuildError, match="delivery"):
            build_bundle(cfg, 2)

    def test_degenerate_game_has_no_follower_variables(self):
        data = toy_dict()
        data["idr"]["alpha"] = 0.0
        cfg = scenario_from_dict(data)
        bundle = build_bundle(cfg, 2)
        assert not any(n.startswith(("p_sl", "h_cl"))
                       for n in bundle.ir.variables)

    def test_mode_one_skips_transport(self, toy_cfg):
        bundle = build_bundle(toy_cfg, 1)
        assert "t_sw" not in bundle.names or not bundle.names["t_sw"]
        assert not any(n.startswith("t_sw") for n in bundle.ir.variables)

    def test_fixed_prices_conflict(self, toy_cfg):
        mode = gm.ModeSettings.for_mode(3)
        with pytest.raises(gm.BuildError):
            gm.build_leader(toy_cfg, toy_cfg.expected_renewables(),
                            toy_cfg.reserve_requirements(), mode,
                            fixed_prices=(np.full(3, 68.5), np.full(3, 29.5)))


class TestPriceMonotonicity:
    def test_revenue_argmax_hits_band_structure(self):
        # with quantities fixed the profit rises in every price, so the
        # argmax over the band plus average row is the continuous knapsack:
        # top prices go to the heaviest loads
        loads = np.array([3.0, 1.0, 2.0, 4.0])
        lo, hi, avg = 40.0, 90.0, 65.0
        ir = ModelIR("prices_only", "max")
        names = [ir.add_variable(f"mu_{t}", lo, hi) for t in range(4)]
        for t, name in enumerate(names):
            ir.add_obj_linear(name, float(loads[t]))
        ir.add_row("avg", {n: 1.0 for n in names}, "==", 4 * avg)
        res = se.ScipyMilpBackend().solve(ir, 10.0, 1e-9)

        budget = 4 * avg - 4 * lo
        greedy = np.full(4, lo)
        for t in np.argsort(-loads):
            add = min(hi - lo, budget)
            greedy[t] += add
            budget -= add
        assert res.objective == pytest.approx(float(loads @ greedy))
        flat = float(loads.sum() * avg)
        assert res.objective > flat


def hand_built_mode2(cfg):
    """Feasible point for the three-period toy, mode 2, built from the
    physical formulas (delay on the single pipeline is 6 periods, which
    wraps to the identity on a 3-period cycle)."""
    mode = gm.ModeSettings.for_mode(2)
    expected = cfg.expected_renewables()
    reqs = cfg.reserve_requirements()
    bundle = gm.build_leader(cfg, expected, reqs, mode)

    t_count = cfg.horizon
    pipe = cfg.pipelines[0]
    heat_base = bundle.heat_base
    t_rw = np.full(t_count, 50.0)
    hco = th.WATER_HEAT_CAPACITY_KJ * pipe.mass_flow_kg_s / 1000.0
    t_sw = t_rw + heat_base / hco
    h_src = np.array([heat_base[t] + th.pipe_loss(pipe, t_sw[t])
                      for t in range(t_count)])
    h_chp = h_src.copy()

    p_sl = cfg.baseline_shift()
    load_eff = np.asarray(cfg.fixed_load) + p_sl
    p_tp = np.full(t_count, 0.3)
    p_chp = load_eff - p_tp
    r_req = np.array([r.min_reserve() for r in reqs])

    mu, gamma = cfg.proportional_prices()
    sol = gm.EquilibriumSolution(
        mu=mu, gamma=gamma, p_sl=p_sl, h_cl=np.zeros(t_count),
        p_tp=p_tp[None, :], r_tp=r_req[None, :],
        p_chp=p_chp[None, :], h_chp=h_chp[None, :],
        r_chp=np.zeros((1, t_count)),
        p_ch=np.zeros(t_count), p_dh=np.zeros(t_count),
        soc=np.zeros(t_count), r_bess=np.zeros(t_count),
        p_res=np.zeros(t_count),
        t_sw=t_sw[None, :], t_rw=t_rw[None, :], h_src=h_src[None, :],
        expected=expected, f1=0.0, f2=0.0, objective_milp=0.0)
    sol.f1 = gm.leader_profit(cfg, sol)
    sol.f2 = gm.follower_cost(cfg, mu, gamma, sol.p_sl, sol.h_cl)
    sol.objective_milp = sol.f1
    return bundle, sol


class TestVerifySolution:
    def test_hand_built_point_clean(self, toy_cfg):
        bundle, sol = hand_built_mode2(toy_cfg)
        report = gm.verify_solution(sol, bundle)
        assert report.violations == []
        assert report.passed

    def test_price_average_perturbation_flagged_alone(self, toy_cfg):
        bundle, sol = hand_built_mode2(toy_cfg)
        sol.mu = sol.mu.copy()
        sol.mu[0] += 1.0
        sol.f1 = gm.leader_profit(toy_cfg, sol)
        sol.f2 = gm.follower_cost(toy_cfg, sol.mu, sol.gamma, sol.p_sl, sol.h_cl)
        sol.objective_milp = sol.f1
        report = gm.verify_solution(sol, bundle)
        assert [v.check for v in report.violations] == ["price_average_mu"]

    def test_tampered_balance_flagged(self, toy_cfg):
        bundle, sol = hand_built_mode2(toy_cfg)
        sol.p_tp = sol.p_tp.copy()
        sol.p_tp[0, 1] += 0.01
        report = gm.verify_solution(sol, bundle)
        assert any(v.check == "electric_balance" for v in report.violations)

    def test_best_response_mismatch_flagged(self, toy_cfg):
        bundle = build_bundle(toy_cfg, 3)
        out = se.solve(bundle, se.SolveOptions(time_limit=60), se.get_backend())
        sol = out.solution
        sol.h_cl = sol.h_cl.copy()
        sol.h_cl[0] += 0.02  # interior shift away from gamma/(2 theta)
        report = gm.verify_solution(sol, bundle)
        assert any(v.check == "best_response_heat" for v in report.violations)

    def test_modes_without_response_pin_baseline(self, toy_cfg):
        for mode in (1, 2):
            bundle = build_bundle(toy_cfg, mode)
            out = se.solve(bundle, se.SolveOptions(time_limit=60),
                           se.get_backend())
            assert out.report.passed
            assert out.solution.p_sl == pytest.approx(
                toy_cfg.baseline_shift(), abs=1e-9)
