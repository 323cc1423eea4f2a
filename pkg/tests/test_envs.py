"""Environment contract tests: reward arithmetic, delay, windowing, variants."""

import numpy as np
import pytest
from scipy import stats

from buckdgc.envs import (
    DirectGateEnv,
    EnvConfig,
    PwmEnv,
    RewardParams,
    apply_sensor_noise,
    dgc_config,
    make_env,
    pwm_config,
    regulation_reward,
)

RP = RewardParams()  # 0.2, 0.004, 0.1, 4.0, floor 0.1


class TestReward:
    def test_perfect_regulation_value(self):
        r = regulation_reward(0.0, 1.0, 1.0, RP)
        assert r == pytest.approx(0.2 / 0.1 - 0.004, abs=1e-15)  # 1.996

    def test_switch_penalty_contribution(self):
        base = regulation_reward(0.5, 1.0, 1.0, RP)
        toggled = regulation_reward(0.5, 1.0, 0.0, RP)
        assert toggled - base == pytest.approx(-4.0, abs=1e-15)

    def test_one_volt_error(self):
        r = regulation_reward(1.0, 0.0, 0.0, RP)
        assert r == pytest.approx(0.2 / 1.1 - 0.1 - 0.004, abs=1e-15)
        assert r == pytest.approx(0.0778, abs=2e-4)

    def test_error_sign_irrelevant(self):
        assert regulation_reward(-2.0, 1, 1, RP) == regulation_reward(2.0, 1, 1, RP)

    def test_continuous_action_penalty(self):
        r = regulation_reward(0.0, 0.7, 0.4, RP)
        assert r == pytest.approx(1.996 - 4.0 * 0.3, abs=1e-12)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            RewardParams(error_floor=0.0)
        with pytest.raises(ValueError):
            RewardParams(switch_penalty=-1.0)


class TestSensorNoise:
    def test_zero_sigma_is_identity(self):
        rng = np.random.default_rng(0)
        assert apply_sensor_noise(1.5, 3.0, 0.0, 0.0, rng) == (1.5, 3.0)

    def test_sample_variance(self):
        rng = np.random.default_rng(1)
        draws = np.array(
            [apply_sensor_noise(0.0, 0.0, 0.01, 0.1, rng) for _ in range(100_000)]
        )
        assert np.var(draws[:, 0]) == pytest.approx(1e-4, rel=0.02)
        assert np.var(draws[:, 1]) == pytest.approx(1e-2, rel=0.02)

    def test_noise_only_touches_observation(self):
        cfg = dgc_config(noise_v=0.5, noise_i=0.5)
        env_noisy = DirectGateEnv(cfg, seed=3)
        env_clean = DirectGateEnv(dgc_config(), seed=3)
        env_noisy.reset(i_l0=1.0, v_c0=10.0, load=15.0)
        env_clean.reset(i_l0=1.0, v_c0=10.0, load=15.0)
        for _ in range(20):
            _, r_n, _, info_n = env_noisy.step(1)
            _, r_c, _, info_c = env_clean.step(1)
            assert env_noisy.state == env_clean.state
            assert info_n["v_out"] == info_c["v_out"]
            assert r_n == r_c  # reward reads the true error
        assert info_n["v_out_obs"] != info_c["v_out_obs"]


class TestReset:
    def test_fixed_seed_reproducible(self):
        env = DirectGateEnv(dgc_config())
        obs1 = env.reset(seed=42)
        r1 = env.params.R
        obs2 = env.reset(seed=42)
        assert np.array_equal(obs1, obs2)
        assert env.params.R == r1

    def test_prefill_from_explicit_state(self):
        env = DirectGateEnv(dgc_config())
        obs = env.reset(i_l0=1.0, v_c0=15.0, load=15.0)
        v_out = 15.0 * (15.0 + 0.1 * 1.0) / 15.1
        v_err = v_out - 15.0
        expect = np.array([v_err / 20.0, 1.0 / 20.0, 0.0] * 10)
        np.testing.assert_allclose(obs, expect, rtol=1e-12, atol=1e-15)

    def test_randomization_marginals(self):
        env = DirectGateEnv(dgc_config(), seed=7)
        i0s, v0s, rs = [], [], []
        for _ in range(10_000):
            env.reset()
            i, v = env.state
            i0s.append(i)
            v0s.append(v)
            rs.append(env.params.R)
        assert stats.kstest(i0s, stats.uniform(0, 10).cdf).pvalue > 1e-3
        assert stats.kstest(v0s, stats.uniform(0, 20).cdf).pvalue > 1e-3
        log_r = np.log(rs)
        assert stats.kstest(log_r, stats.uniform(0, np.log(50)).cdf).pvalue > 1e-3


class TestDirectGate:
    def test_one_step_action_delay(self):
        env = DirectGateEnv(dgc_config())
        env.reset(i_l0=0.0, v_c0=0.0, load=15.0)
        _, _, _, info0 = env.step(1)
        assert info0["gate"] == 0  # interval 0 uses the reset gate
        _, _, _, info1 = env.step(1)
        assert info1["gate"] == 1

    def test_delay_law_random_actions(self):
        env = DirectGateEnv(dgc_config(), seed=5)
        env.reset(seed=5)
        rng = np.random.default_rng(9)
        actions = rng.integers(0, 2, 100)
        applied = []
        for a in actions:
            _, _, _, info = env.step(int(a))
            applied.append(info["gate"])
        assert applied[0] == 0
        assert applied[1:] == list(actions[:-1])

    def test_constant_off_reward_from_zero_state(self):
        env = DirectGateEnv(dgc_config())
        env.reset(i_l0=0.0, v_c0=0.0, load=15.0)
        want = 0.2 / 15.1 - 0.1 * 15.0 - 0.004
        for _ in range(5):
            _, r, _, info = env.step(0)
            assert info["v_out"] == 0.0
            assert r == pytest.approx(want, abs=1e-15)
        assert want == pytest.approx(-1.49, abs=5e-3)

    def test_window_shift_semantics(self):
        env = DirectGateEnv(dgc_config())
        obs0 = env.reset(i_l0=1.0, v_c0=15.0, load=15.0)
        prefill = obs0[:3]
        samples = []
        for a in (1, 1, 0):
            obs, _, _, info = env.step(a)
            samples.append(
                (
                    (info["v_out_obs"] - 15.0) / 20.0,
                    info["i_L_obs"] / 20.0,
                    float(info["gate"]),
                )
            )
        expect = np.concatenate([np.tile(prefill, 7), np.array(samples).ravel()])
        np.testing.assert_allclose(obs, expect, rtol=1e-12, atol=1e-15)

    def test_done_exactly_at_episode_end(self):
        env = DirectGateEnv(dgc_config(episode_steps=5))
        env.reset(seed=0)
        flags = [env.step(0)[2] for _ in range(5)]
        assert flags == [False, False, False, False, True]
        with pytest.raises(RuntimeError):
            env.step(0)

    def test_rejects_non_binary_action(self):
        env = DirectGateEnv(dgc_config())
        env.reset(seed=0)
        with pytest.raises(ValueError):
            env.step(2)


class TestPwm:
    def test_zero_duty_matches_direct_gate_zeros(self):
        pwm = PwmEnv(pwm_config(episode_steps=20))
        dgc = DirectGateEnv(dgc_config(episode_steps=200))
        pwm.reset(i_l0=3.0, v_c0=12.0, load=10.0)
        dgc.reset(i_l0=3.0, v_c0=12.0, load=10.0)
        for _ in range(20):
            pwm.step(0.0)
            for _ in range(10):
                dgc.step(0)
            assert pwm.state == dgc.state

    def test_expanded_duty_sequence_matches_direct_gate(self):
        # Duties on the 0.1 grid expand to exact 10-slot gate patterns; with
        # the delay aligned, both variants must traverse identical states.
        rng = np.random.default_rng(17)
        duties = rng.integers(0, 11, 30) / 10.0
        n_slots = 10

        pwm = PwmEnv(pwm_config(episode_steps=len(duties)))
        pwm.reset(i_l0=2.0, v_c0=5.0, load=15.0)
        pwm_states = []
        for d in duties:
            pwm.step(d)
            pwm_states.append(pwm.state)

        applied = np.concatenate([[0.0], duties[:-1]])  # one-period delay
        gate_of_slot = [
            1 if (s % n_slots) < round(applied[s // n_slots] * n_slots) else 0
            for s in range(len(duties) * n_slots)
        ]
        dgc = DirectGateEnv(dgc_config(episode_steps=len(gate_of_slot)))
        dgc.reset(i_l0=2.0, v_c0=5.0, load=15.0)
        dgc_states = []
        for t in range(len(gate_of_slot)):
            nxt = gate_of_slot[t + 1] if t + 1 < len(gate_of_slot) else 0
            dgc.step(nxt)
            if t % n_slots == n_slots - 1:
                dgc_states.append(dgc.state)
        assert pwm_states == dgc_states  # bit-identical trajectories

    def test_full_duty_keeps_gate_high(self):
        env = PwmEnv(pwm_config(episode_steps=10), record_substeps=True)
        env.reset(i_l0=0.0, v_c0=0.0, load=15.0)
        env.step(1.0)
        _, _, _, info = env.step(1.0)  # applied duty is now 1.0
        assert [g for g, _, _ in info["substeps"]] == [1.0] * 10

    def test_steady_duty_regulates_near_target(self):
        env = PwmEnv(pwm_config(episode_steps=600))
        env.reset(i_l0=1.0, v_c0=15.0, load=15.0)
        vs = []
        for k in range(600):
            _, _, _, info = env.step(0.7505)
            if k >= 500:
                vs.append(info["v_out"])
        assert np.mean(vs) == pytest.approx(15.0, rel=0.01)

    def test_reward_scaled_ten_x(self):
        pwm = PwmEnv(pwm_config(episode_steps=10))
        pwm.reset(i_l0=0.0, v_c0=0.0, load=15.0)
        _, r, _, _ = pwm.step(0.0)
        want = 10.0 * (0.2 / 15.1 - 1.5 - 0.004)
        assert r == pytest.approx(want, abs=1e-12)

    def test_duty_change_penalty(self):
        env = PwmEnv(pwm_config(episode_steps=10))
        env.reset(i_l0=1.0, v_c0=15.0, load=15.0)
        env.step(0.7)          # applied next step
        _, r1, _, info1 = env.step(0.7)   # applies 0.7 after 0.0: |d - d_prev| = 0.7
        assert info1["duty"] == 0.7
        v_err = info1["v_out"] - 15.0
        want = 10.0 * regulation_reward(v_err, 0.7, 0.0, RP)
        assert r1 == pytest.approx(want, abs=1e-12)

    def test_duty_clipped_before_use(self):
        env = PwmEnv(pwm_config(episode_steps=10), record_substeps=True)
        env.reset(i_l0=0.0, v_c0=0.0, load=15.0)
        env.step(1.7)
        _, _, _, info = env.step(-0.3)
        assert info["duty"] == 1.0  # the clipped 1.7, applied with delay
        assert [g for g, _, _ in info["substeps"]] == [1.0] * 10


class TestConfig:
    def test_variant_validation(self):
        with pytest.raises(ValueError):
            EnvConfig(variant="bang")
        with pytest.raises(ValueError):
            EnvConfig(variant="pwm", control_period=1e-6, pwm_period=10e-6)
        with pytest.raises(ValueError):
            dgc_config(load_range=(0.5, 50.0))

    def test_factories(self):
        d = dgc_config()
        assert (d.control_period, d.episode_steps, d.reward_scale) == (1e-6, 2000, 1.0)
        p = pwm_config()
        assert (p.control_period, p.episode_steps, p.reward_scale) == (10e-6, 200, 10.0)
        assert isinstance(make_env(d), DirectGateEnv)
        assert isinstance(make_env(p), PwmEnv)

    def test_episode_duration_two_ms(self):
        assert dgc_config().episode_steps * dgc_config().control_period == pytest.approx(2e-3)
        assert pwm_config().episode_steps * pwm_config().control_period == pytest.approx(2e-3)
