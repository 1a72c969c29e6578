import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deeptop.envs import rmab
from deeptop.envs.rmab import OneDimArm, RecoveringArm, RmabEnv


class Coin:
    """rng stub whose ``random()`` always returns ``u``."""

    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def test_onedim_reward_values():
    assert rmab.onedim_reward(99) == 1.0
    assert rmab.onedim_reward(0) == 0.0
    assert rmab.onedim_reward(66) == pytest.approx(8 / 9)
    with pytest.raises(ValueError):
        rmab.onedim_reward(100)


def test_truncated_reward_keeps_full_chain_target():
    arm = OneDimArm(0.5, n_states=10)
    _, R = arm.tabular()
    assert R[:, 0] == pytest.approx([rmab.onedim_reward(s) for s in range(10)])


@settings(max_examples=100, deadline=None)
@given(s=st.integers(0, 99))
def test_onedim_reward_in_unit_interval(s):
    assert 0.0 <= rmab.onedim_reward(s) <= 1.0


def test_onedim_boundaries():
    assert rmab.onedim_step(99, 1, 0.5, 0.5, Coin(0.0))[0] == 99
    assert rmab.onedim_step(0, 0, 0.5, 0.5, Coin(0.0))[0] == 0


def test_onedim_failure_self_loops():
    assert rmab.onedim_step(40, 1, 0.5, 0.5, Coin(0.9))[0] == 40
    assert rmab.onedim_step(40, 0, 0.5, 0.5, Coin(0.9))[0] == 40
    assert rmab.onedim_step(40, 0, 0.5, 0.5, Coin(0.1))[0] == 39


def test_onedim_reward_from_current_state():
    s2, r = rmab.onedim_step(66, 1, 0.5, 0.5, Coin(0.0))
    assert s2 == 67 and r == pytest.approx(8 / 9)


def test_onedim_success_frequency():
    rng = np.random.default_rng(0)
    n = 100_000
    hits = sum(rmab.onedim_step(50, 1, 0.6, 0.6, rng)[0] == 51 for _ in range(n))
    assert abs(hits / n - 0.6) <= 5 * np.sqrt(0.6 * 0.4 / n)


def test_evenly_spaced_p():
    ps = rmab.evenly_spaced_p(10)
    assert ps[0] == pytest.approx(0.2) and ps[-1] == pytest.approx(0.8)
    assert np.diff(ps) == pytest.approx(np.full(9, 0.6 / 9))
    assert rmab.evenly_spaced_p(2) == pytest.approx([0.2, 0.8])
    with pytest.raises(ValueError):
        rmab.evenly_spaced_p(1)


def test_recovering_rewards():
    assert rmab.recovering_reward(1, 10, 0.2) == pytest.approx(1.8127, abs=1e-4)
    # 10 * exp(-20) is about 2.06e-8, so the reward is 10 to within 3e-8 rather than 1e-8
    assert rmab.recovering_reward(100, 10, 0.2) == pytest.approx(10.0 - 10.0 * np.exp(-20.0), abs=1e-12)
    assert abs(rmab.recovering_reward(100, 10, 0.2) - 10.0) < 3e-8
    # 5.5 * (1 - exp(-0.8)) = 3.02869; a quoted 3.0273 does not match the formula
    assert rmab.recovering_reward(1, 5.5, 0.8) == pytest.approx(3.02869, abs=1e-5)
    with pytest.raises(ValueError):
        rmab.recovering_reward(0, 10, 0.2)


@settings(max_examples=100, deadline=None)
@given(z=st.integers(1, 100), cls=st.sampled_from(sorted(rmab.RECOVERING_CLASSES)))
def test_recovering_reward_range(z, cls):
    t0, t1 = rmab.RECOVERING_CLASSES[cls]
    assert 0 < rmab.recovering_reward(z, t0, t1) <= t0


def test_recovering_transitions():
    assert rmab.recovering_step(100, 0, 10, 0.2) == (100, 0.0)
    assert rmab.recovering_step(5, 1, 10, 0.2)[0] == 1
    assert rmab.recovering_step(1, 0, 10, 0.2) == (2, 0.0)


def test_recovering_tabular_matches_step():
    arm = RecoveringArm(7.0, 0.6)
    P, R = arm.tabular()
    for z in (1, 50, 100):
        for a in (0, 1):
            z2, r = rmab.recovering_step(z, a, 7.0, 0.6)
            assert P[a, z - 1, z2 - 1] == 1.0 and R[z - 1, a] == pytest.approx(r)


def test_onedim_tabular_matches_step_statistics():
    arm = OneDimArm(0.3, n_states=5)
    P, _ = arm.tabular()
    assert np.allclose(P.sum(axis=2), 1.0)
    assert P[1, 2, 3] == pytest.approx(0.3) and P[0, 2, 1] == pytest.approx(0.3)
    assert P[1, 4, 4] == 1.0 and P[0, 0, 0] == 1.0


def arms(n, seed=0):
    return [OneDimArm(0.5, state=10, rng=np.random.default_rng(seed + i)) for i in range(n)]


def test_single_arm_always_active():
    env = RmabEnv(arms(1), 1)
    assert env.step([0])[0].tolist() == [1]


def test_full_budget():
    env = RmabEnv(arms(3), 3)
    assert env.step([0, 1, 2])[0].tolist() == [1, 1, 1]


def test_exactly_v_active():
    env = RmabEnv(arms(10), 3)
    assert env.step([1, 4, 7])[0].sum() == 3


def test_wrong_activation_set_rejected():
    env = RmabEnv(arms(4), 2)
    for bad in ([0], [0, 0], [0, 1, 2], [0, 9]):
        with pytest.raises(ValueError):
            env.step(bad)
    with pytest.raises(ValueError):
        RmabEnv(arms(2), 3)


def test_random_policy_budget_invariant():
    rng = np.random.default_rng(1)
    env = rmab.make_rmab_env("onedim", 10, 3, [np.random.default_rng(i) for i in range(10)])
    for _ in range(100_000 // 10):
        a, r = env.step(sorted(rng.choice(10, size=3, replace=False)))
        assert a.sum() == 3
        assert np.all((0 <= r) & (r <= 1))


def test_arm_independence():
    """Arm 0's trajectory depends only on its own actions and rng stream."""

    def arm0_states(other_policy):
        env = rmab.make_rmab_env("onedim", 3, 2, [np.random.default_rng(i) for i in range(3)])
        out = []
        for t in range(500):
            env.step([0, 1 + other_policy(t) % 2])
            out.append(env.arms[0].state)
        return out

    assert arm0_states(lambda t: 0) == arm0_states(lambda t: t * 7 // 3)


def test_joint_step_returns_states():
    env = RmabEnv(arms(3), 1)
    rewards, states = rmab.rmab_joint_step(env, [2])
    assert len(rewards) == 3 and states == env.states()


def test_factories():
    rngs = [np.random.default_rng(i) for i in range(10)]
    env = rmab.make_rmab_env("onedim", 10, 3, rngs)
    assert [a.p for a in env.arms] == pytest.approx(rmab.evenly_spaced_p(10))
    assert all(a.q == a.p for a in env.arms)
    rec = rmab.make_rmab_env("recovering", 6, 2, rngs)
    assert [(a.theta0, a.theta1) for a in rec.arms[:5]] == [
        (10.0, 0.2), (8.5, 0.4), (7.0, 0.6), (5.5, 0.8), (10.0, 0.2)
    ]
    with pytest.raises(ValueError):
        rmab.make_rmab_env("slots", 3, 1, rngs)


def test_encodings():
    assert OneDimArm(0.5, state=99).encode() == 1.0
    assert OneDimArm(0.5, state=3, n_states=10).encode() == pytest.approx(3 / 9)
    assert RecoveringArm(10, 0.2, state=50).encode() == 0.5
