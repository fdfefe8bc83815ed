import dataclasses

import numpy as np
import pytest

from rydcav import (
    CavitySpec,
    EnsembleState,
    McpModel,
    NoiseChain,
    ProbeConfig,
    Scenario,
    TransitionSet,
    fourth_order_error,
    interaction_shift,
    pointlike_correction,
    run_flythrough,
    run_power_sweep,
    run_sensitivity_sweep,
    run_single_shot_campaign,
    trueness_ledger,
)
from rydcav.experiments import BLOCK_SIZE, block_rng, precision_vs_photon_number

TWO_PI = 2.0 * np.pi


def make_scenario(cavity, n_atoms=261, shots=1000, **kw):
    defaults = dict(
        name="test",
        cavity=cavity,
        ensemble=EnsembleState(n_atoms=n_atoms),
        transitions=TransitionSet.constant(-TWO_PI * 8e6, -TWO_PI * 26e6),
        probe=ProbeConfig(n_c=5.9e4, tau_i=6.2e-6, alpha=4.0),
        noise=NoiseChain(n_noise=23.0),
        mcp=McpModel(),
        shots=shots,
    )
    defaults.update(kw)
    return Scenario(**defaults)


# ---------------------------------------------------------------------------
# systematic-error items


class TestFourthOrder:
    def test_reference_value(self, cavity):
        e4 = fourth_order_error(cavity.g_max, 600, -TWO_PI * 8e6, -TWO_PI * 26e6)
        assert e4 == pytest.approx(2.099e-3, rel=2e-3)

    def test_linear_in_n(self, cavity):
        a = fourth_order_error(cavity.g_max, 300, -TWO_PI * 8e6, -TWO_PI * 26e6)
        b = fourth_order_error(cavity.g_max, 600, -TWO_PI * 8e6, -TWO_PI * 26e6)
        assert b == pytest.approx(2 * a)

    def test_zero_atoms(self, cavity):
        assert fourth_order_error(cavity.g_max, 0, -TWO_PI * 8e6, -TWO_PI * 26e6) == 0.0

    def test_detuning_scaling(self, cavity):
        # equal detunings: e4 = 2 g^2 N / Delta^2, falls as 1/Delta^2
        a = fourth_order_error(cavity.g_max, 100, -TWO_PI * 8e6, -TWO_PI * 8e6)
        b = fourth_order_error(cavity.g_max, 100, -TWO_PI * 16e6, -TWO_PI * 16e6)
        assert a / b == pytest.approx(4.0)


class TestPointlike:
    def test_reference_value(self, cavity):
        c = pointlike_correction(0.6e-3, 0.3e-3, cavity)
        assert c == pytest.approx(-0.0339, abs=0.003)

    def test_point_cloud_zero(self, cavity):
        assert pointlike_correction(0.0, 0.0, cavity) == pytest.approx(0.0, abs=1e-12)

    def test_negative_definite(self, cavity):
        assert pointlike_correction(0.3e-3, 0.0, cavity) < 0.0
        assert pointlike_correction(0.0, 0.3e-3, cavity) < 0.0

    def test_small_size_quadratic(self, cavity):
        # axial term ~ quadruples when sigma_z doubles (quadratic regime)
        a = pointlike_correction(0.2e-3, 0.0, cavity)
        b = pointlike_correction(0.4e-3, 0.0, cavity)
        assert b / a == pytest.approx(4.0, rel=0.05)

    def test_negative_size_rejected(self, cavity):
        with pytest.raises(ValueError):
            pointlike_correction(-1e-3, 0.0, cavity)


class TestInteractionShift:
    def test_vdw_reference(self):
        # 36 MHz um^6 at 75 um
        assert interaction_shift(75e-6, 36.0, 6) == pytest.approx(2.02e-4, rel=0.01)

    def test_dd_reference(self):
        assert interaction_shift(75e-6, 2000.0, 3) == pytest.approx(4741.0, rel=0.01)

    def test_distance_scaling(self):
        assert interaction_shift(150e-6, 36.0, 6) == pytest.approx(
            interaction_shift(75e-6, 36.0, 6) / 64.0
        )

    def test_bad_order(self):
        with pytest.raises(ValueError):
            interaction_shift(75e-6, 36.0, 4)


class TestTruenessLedger:
    def test_reference_budget(self, cavity):
        cav = dataclasses.replace(cavity, mode_correction=0.99)
        rep = trueness_ledger(cav)
        assert rep.total == pytest.approx(-0.024, abs=0.008)
        assert rep.total_uncertainty == pytest.approx(0.008, abs=0.003)

    def test_total_is_sum(self, cavity):
        rep = trueness_ledger(cavity)
        assert rep.total == pytest.approx(sum(v for v, _ in rep.items.values()))

    def test_uncertainty_quadrature(self, cavity):
        rep = trueness_ledger(cavity)
        assert rep.total_uncertainty == pytest.approx(
            np.sqrt(sum(u ** 2 for _, u in rep.items.values()))
        )

    def test_all_zero_configuration(self, cavity):
        rep = trueness_ledger(
            cavity,
            sigma_z=0.0,
            sigma_x=0.0,
            n_atoms=0,
            detuning_rel_uncertainty=0.0,
            pointlike_uncertainty=0.0,
            c6_mhz_um6=0.0,
            c3_mhz_um3=0.0,
        )
        assert rep.total == pytest.approx(0.0, abs=1e-12)
        assert rep.total_uncertainty == pytest.approx(0.0, abs=1e-12)

    def test_table_renders(self, cavity):
        text = trueness_ledger(cavity).table()
        assert "total" in text
        assert "pointlike_cloud" in text


# ---------------------------------------------------------------------------
# figure-style runs


class TestRunFlythrough:
    def test_delay_band(self, cavity):
        sc = make_scenario(cavity, flags={"transit_decay": False})
        out = run_flythrough(sc)
        resonant = out["traces"][0]
        assert resonant["delta_m"] == 0.0
        assert 1.20e-6 <= resonant["extremum_delay"] <= 1.50e-6

    def test_detuned_trace_smaller_phase(self, cavity):
        sc = make_scenario(cavity, flags={"transit_decay": False})
        out = run_flythrough(sc)
        res, det = out["traces"]
        assert abs(det["dphi_extremum_deg"]) < abs(res["dphi_extremum_deg"])
        assert det["extremum_delay"] < res["extremum_delay"]

    def test_zero_atoms_flat(self, cavity):
        sc = make_scenario(cavity, n_atoms=0)
        out = run_flythrough(sc)
        for tr in out["traces"]:
            np.testing.assert_allclose(tr["dphi_deg"], 0.0, atol=1e-9)


class TestSensitivitySweep:
    def test_phase_slope(self, cavity):
        sc = make_scenario(
            cavity,
            sweep_values=list(np.linspace(50, 600, 12)),
            flags={"transit_decay": False, "tmax_window": 1e-6,
                   "systematic_offset": -0.024},
        )
        out = run_sensitivity_sweep(sc)
        assert abs(out["phase_sensitivity_deg_per_atom"]) == pytest.approx(
            1.44e-2, rel=0.15
        )

    def test_mcp_cross_calibration(self, cavity):
        sc = make_scenario(
            cavity,
            sweep_values=list(np.linspace(50, 600, 12)),
            flags={"transit_decay": False, "systematic_offset": -0.024},
        )
        out = run_sensitivity_sweep(sc)
        # cavity numbers read 2.4 % low, so the apparent per-atom MCP signal
        # comes out high by the same factor
        assert out["mcp_sensitivity_vns_per_atom"] == pytest.approx(
            2.07e-2 / 0.976, rel=1e-3
        )

    def test_linearity(self, cavity):
        sc = make_scenario(
            cavity,
            sweep_values=list(np.linspace(50, 600, 12)),
            flags={"transit_decay": False},
        )
        out = run_sensitivity_sweep(sc)
        full_scale = abs(out["dphi_deg"][-1] - out["dphi_deg"][0])
        assert out["linearity_residual_max"] < 0.01 * full_scale


class TestPowerSweep:
    def test_excitation_bounded_below_ncrit(self, cavity):
        sc = make_scenario(
            cavity,
            sweep_values=[200, 400, 600],
            shots=500,
            flags={"n_crit": 4.4e4, "g_eff": TWO_PI * 12.9e3, "two_transitions": True,
                   "transition_spacing": TWO_PI * 18e6, "excitation_scale": 0.038},
        )
        out = run_power_sweep(sc)
        below = out["n_c"] <= out["n_crit_true"]
        assert np.all(out["excitation"][below] <= 0.02)

    def test_signal_halves_at_3_ncrit(self, cavity):
        sc = make_scenario(
            cavity,
            sweep_values=[500],
            shots=100_000,
            flags={"n_crit": 4.4e4, "g_eff": TWO_PI * 12.9e3,
                   "photon_grid": [1e3, 3 * 4.4e4]},
        )
        out = run_power_sweep(sc)
        ds = out["datasets"][0]
        ratio = ds["dphi_true_deg"][1] / ds["dphi_true_deg"][0]
        # small low-power dressing correction relative to the ideal factor 2
        expect = 0.5 * np.sqrt(1 + 1e3 / 4.4e4)
        assert ratio == pytest.approx(expect, abs=5e-3)


# ---------------------------------------------------------------------------
# single-shot campaign


class TestBlockRng:
    def test_reproducible(self):
        a = block_rng(7, 3).standard_normal(16)
        b = block_rng(7, 3).standard_normal(16)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = block_rng(7, 3).standard_normal(16)
        b = block_rng(7, 4).standard_normal(16)
        c = block_rng(8, 3).standard_normal(16)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


def campaign_scenario(cavity, shots, seed=14, sweep=(500,)):
    return make_scenario(
        cavity,
        shots=shots,
        sweep_values=list(sweep),
        master_seed=seed,
        noise=NoiseChain(n_noise=23.0, digitizer_phase_floor=9.88e-3),
        flags={"n_crit": 4.4e4, "g_eff": TWO_PI * 12.9e3, "two_transitions": True,
               "transition_spacing": TWO_PI * 18e6},
    )


class TestCampaign:
    def test_thread_count_invariance(self, cavity):
        sc = campaign_scenario(cavity, shots=3 * BLOCK_SIZE + 100)
        a = run_single_shot_campaign(sc, threads=1)
        b = run_single_shot_campaign(sc, threads=3)
        for key in ("n_prep", "dphi_deg", "n_est", "s1", "s2"):
            np.testing.assert_array_equal(a["records"][key], b["records"][key])

    def test_seed_changes_output(self, cavity):
        a = run_single_shot_campaign(campaign_scenario(cavity, 2000, seed=14))
        b = run_single_shot_campaign(campaign_scenario(cavity, 2000, seed=15))
        assert not np.array_equal(a["records"]["dphi_deg"], b["records"]["dphi_deg"])

    def test_unbiased_estimate(self, cavity):
        out = run_single_shot_campaign(campaign_scenario(cavity, 20_000))
        n_est = out["records"]["n_est"]
        assert np.mean(n_est) == pytest.approx(500.0, abs=3 * np.std(n_est) / np.sqrt(n_est.size))

    def test_precision_matches_analytic_curve(self, cavity):
        sc = campaign_scenario(cavity, 20_000)
        out = run_single_shot_campaign(sc)
        sim = out["per_setting"][0]["sigma_n_cavity"]
        curve = out["photon_curve"]
        expect = float(np.interp(sc.probe.n_c, curve["n_c"], curve["sigma_n"]))
        assert sim == pytest.approx(expect, rel=0.05)

    def test_scatter_shrinks_with_averaging(self, cavity):
        # per-shot sigma is shot-count independent; the standard error of
        # the reported sigma shrinks, so two campaign sizes must agree
        small = run_single_shot_campaign(campaign_scenario(cavity, 1000))
        large = run_single_shot_campaign(campaign_scenario(cavity, 10_000))
        s_small = small["per_setting"][0]["sigma_n_cavity"]
        s_large = large["per_setting"][0]["sigma_n_cavity"]
        assert s_small == pytest.approx(s_large, rel=0.1)

    def test_mcp_relative_precision(self, cavity):
        out = run_single_shot_campaign(campaign_scenario(cavity, 20_000))
        rel = out["per_setting"][0]["sigma_n_rel_mcp"]
        assert rel == pytest.approx(4.65e-2, rel=0.05)


class TestPrecisionCurve:
    def test_floor_dominates_at_high_power_without_floor_decreases(self, cavity):
        sc = campaign_scenario(cavity, 100)
        curve = precision_vs_photon_number(sc)
        # with the digitizer floor the curve flattens then rises with the
        # power-broadening factor sqrt(1 + n_c/n_crit)
        assert curve["sigma_n"][0] > np.min(curve["sigma_n"])
        assert curve["sigma_n"][-1] > np.min(curve["sigma_n"])

    def test_reference_sigma_at_operating_point(self, cavity):
        sc = campaign_scenario(cavity, 100)
        curve = precision_vs_photon_number(sc)
        val = float(np.interp(5.9e4, curve["n_c"], curve["sigma_n"]))
        assert val == pytest.approx(65.0, rel=0.05)
