import numpy as np
import pytest
from conftest import augmented_occupancy, history_tree_occupancy
from hypothesis import given, settings
from hypothesis import strategies as st

from occmark.errors import EnumerationInfeasibleError, HorizonInsufficientError, NonFiniteOccupancyError
from occmark.mdp import FiniteMdp
from occmark.occupancy import (
    OccupancyTable,
    conservation_residual,
    finiteness_check,
    occupancy_enumerate,
    occupancy_exact_markovian,
    occupancy_monte_carlo,
    performance_error,
    performance_from_occupancy,
)
from occmark.policy import MarkovianTable, Scripted, TimeDependentTable, make_mixture, simulate
from occmark.scenarios import (
    CorpusLimits,
    chain_mdp,
    loop_exit_mdp,
    random_corpus,
    random_mdp,
    random_time_dependent,
)


def random_markov(rng, mdp):
    return MarkovianTable(rng.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states))


# -- exact solve ------------------------------------------------------------


def test_fig1_undiscounted_half():
    occ = occupancy_exact_markovian(loop_exit_mdp(1.0), MarkovianTable([[0.5, 0.5]]))
    assert occ.mu[0, 1] == pytest.approx(1.0, abs=1e-12)
    # geometric count of loop plays: theta / (1 - theta)
    assert occ.mu[0, 0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("theta", [0.1, 0.3, 0.5, 0.75, 0.9])
def test_fig1_undiscounted_exit_visit_is_one(theta):
    occ = occupancy_exact_markovian(loop_exit_mdp(1.0), MarkovianTable([[theta, 1 - theta]]))
    assert occ.mu[0, 1] == pytest.approx(1.0, abs=1e-10)
    assert occ.mu[0, 0] == pytest.approx(theta / (1 - theta), rel=1e-10)


def test_fig1_discounted_two_thirds():
    occ = occupancy_exact_markovian(loop_exit_mdp(0.5), MarkovianTable([[2 / 3, 1 / 3]]))
    assert np.allclose(occ.mu, [[1.0, 0.5]], atol=1e-12)
    assert occ.tail_bound == 0.0


def test_one_step_episodes_mass_is_p0():
    mdp = FiniteMdp(2, 2, [0.3, 0.5, 0.2], [[[0, 1, 0], [0, 0, 1]], [[0, 0, 1], [1, 0, 0]]],
                    np.zeros((2, 2)), 0, 1.0)
    occ = occupancy_exact_markovian(mdp, MarkovianTable([[0, 1], [1, 0]]))
    assert occ.total_mass == pytest.approx(0.8, abs=1e-12)


def test_gamma_one_always_loop_refused():
    with pytest.raises(NonFiniteOccupancyError) as err:
        occupancy_exact_markovian(loop_exit_mdp(1.0), MarkovianTable([[1.0, 0.0]]))
    assert err.value.spectral_radius >= 1 - 1e-9


# -- enumeration ------------------------------------------------------------


def test_enumerate_loop_one():
    occ = occupancy_enumerate(loop_exit_mdp(0.5), Scripted("loop_then_exit", {"n": 1}), tol=1e-12)
    assert occ.mu.tolist() == [[1.0, 0.5]]


def test_enumerate_loop_three():
    occ = occupancy_enumerate(loop_exit_mdp(0.9), Scripted("loop_then_exit", {"n": 3}), tol=1e-12)
    assert occ.mu[0, 0] == pytest.approx(2.71, abs=1e-12)
    assert occ.mu[0, 1] == pytest.approx(0.729, abs=1e-12)


def test_enumerate_mixture():
    mix = make_mixture([Scripted("loop_then_exit", {"n": 1}), Scripted("constant", {"action": 1})], [1, 1])
    occ = occupancy_enumerate(loop_exit_mdp(0.5), mix, tol=1e-12)
    assert np.allclose(occ.mu, [[0.5, 0.75]], atol=1e-12)


def test_enumerate_matches_exact_on_markov():
    rng = np.random.default_rng(4)
    for _ in range(10):
        mdp = random_mdp(rng)
        pol = random_markov(rng, mdp)
        exact = occupancy_exact_markovian(mdp, pol).mu
        enum = occupancy_enumerate(mdp, pol, tol=1e-10)
        assert np.max(np.abs(exact - enum.mu)) <= enum.tail_bound + 1e-10


def test_enumerate_matches_augmented_oracle():
    rng = np.random.default_rng(8)
    limits = CorpusLimits()
    for _ in range(8):
        mdp = random_mdp(rng, limits)
        pols = [random_time_dependent(rng, mdp.num_states, mdp.num_actions, limits) for _ in range(2)]
        mix = make_mixture(pols, rng.random(2) + 0.1)
        horizon = max(p.horizon for p in pols)
        oracle = augmented_occupancy(mdp, mix, horizon)
        enum = occupancy_enumerate(mdp, mix, tol=1e-10)
        assert np.max(np.abs(oracle - enum.mu)) <= enum.tail_bound + 1e-9


def test_enumerate_matches_history_tree_oracle():
    rng = np.random.default_rng(21)
    limits = CorpusLimits(max_states=3, max_actions=2)
    for _ in range(4):
        mdp = random_mdp(rng, limits).replace(gamma=0.4)
        pol = random_time_dependent(rng, mdp.num_states, mdp.num_actions, limits)
        depth = 9
        oracle = history_tree_occupancy(mdp, pol, depth)
        enum = occupancy_enumerate(mdp, pol, tol=0.0, max_depth=depth + 1, strict=False)
        # both are the same partial sum to depth 9
        assert np.max(np.abs(oracle - enum.mu)) <= 1e-12


def test_enumerate_scripted_matches_history_tree():
    mdp = chain_mdp(0.8)
    pol = Scripted("alternating_epochs")
    oracle = history_tree_occupancy(mdp, pol, 12)
    enum = occupancy_enumerate(mdp, pol, tol=0.0, max_depth=13, strict=False)
    assert np.max(np.abs(oracle - enum.mu)) <= 1e-12


def test_gamma_one_chain_enumeration_terminates():
    tables = np.array([[[0.25, 0.75], [0.5, 0.5]], [[1.0, 0.0], [0.1, 0.9]]])
    pol = TimeDependentTable(tables, MarkovianTable([[0.5, 0.5], [0.5, 0.5]]))
    occ = occupancy_enumerate(chain_mdp(1.0), pol, tol=1e-12)
    assert np.allclose(occ.mu, [[0.25, 0.75], [0.1, 0.9]], atol=1e-12)


def test_horizon_insufficient():
    with pytest.raises(HorizonInsufficientError) as err:
        occupancy_enumerate(loop_exit_mdp(0.99), MarkovianTable([[0.9, 0.1]]), tol=1e-8, max_depth=10)
    assert err.value.tail_bound > 1e-8
    loose = occupancy_enumerate(loop_exit_mdp(0.99), MarkovianTable([[0.9, 0.1]]), tol=1e-8,
                                max_depth=10, strict=False)
    assert loose.tail_bound == pytest.approx(err.value.tail_bound)


def test_tail_bound_covers_truth():
    mdp, pol = loop_exit_mdp(0.9), MarkovianTable([[0.8, 0.2]])
    exact = occupancy_exact_markovian(mdp, pol)
    for tol in (1e-2, 1e-4, 1e-6):
        enum = occupancy_enumerate(mdp, pol, tol=tol)
        assert enum.tail_bound <= tol
        assert exact.total_mass - enum.total_mass <= enum.tail_bound + 1e-15


def test_pruned_mass_is_charged():
    mdp = random_mdp(np.random.default_rng(0))
    pol = random_markov(np.random.default_rng(1), mdp)
    exact = occupancy_exact_markovian(mdp, pol).mu
    enum = occupancy_enumerate(mdp, pol, tol=1e-6, prune_floor=1e-3)
    assert np.sum(np.abs(exact - enum.mu)) <= enum.tail_bound + 1e-12


# -- Monte Carlo ------------------------------------------------------------


def test_mc_deterministic_one_step():
    mdp = FiniteMdp(1, 1, [1, 0], [[[0, 1]]], [[0.0]], 0, 0.7)
    occ, err = occupancy_monte_carlo(mdp, MarkovianTable([[1.0]]), 100, seed=0)
    assert occ.mu.tolist() == [[1.0]] and err.tolist() == [[0.0]]


def test_mc_fig1():
    occ, err = occupancy_monte_carlo(loop_exit_mdp(0.5), MarkovianTable([[2 / 3, 1 / 3]]), 100_000, seed=3)
    assert np.all(np.abs(occ.mu - [[1.0, 0.5]]) <= 4 * err)


def test_mc_thread_invariance():
    mdp, pol = loop_exit_mdp(0.9), MarkovianTable([[0.7, 0.3]])
    a, ea = occupancy_monte_carlo(mdp, pol, 5000, seed=1, workers=1)
    b, eb = occupancy_monte_carlo(mdp, pol, 5000, seed=1, workers=3)
    assert np.array_equal(a.mu, b.mu) and np.array_equal(ea, eb)


@pytest.mark.slow
def test_three_estimators_agree():
    rng = np.random.default_rng(99)
    for _ in range(3):
        mdp = random_mdp(rng, CorpusLimits(max_states=6, max_actions=4))
        pol = random_markov(rng, mdp)
        exact = occupancy_exact_markovian(mdp, pol)
        enum = occupancy_enumerate(mdp, pol, tol=1e-8)
        mc, err = occupancy_monte_carlo(mdp, pol, 100_000, seed=int(rng.integers(1 << 30)))
        assert np.all(np.abs(exact.mu - enum.mu) <= enum.tail_bound + 1e-8)
        assert np.all(np.abs(exact.mu - mc.mu) <= mc.tail_bound + 4 * err + 1e-8)
        assert np.all(np.abs(enum.mu - mc.mu) <= enum.tail_bound + mc.tail_bound + 4 * err + 1e-8)


def test_performance_matches_mc_returns():
    mdp = random_mdp(np.random.default_rng(6))
    pol = random_markov(np.random.default_rng(7), mdp)
    rho = performance_from_occupancy(mdp, occupancy_exact_markovian(mdp, pol))
    n = 10_000
    batch = simulate(mdp, pol, n, 5, 10_000)
    returns = np.bincount(batch.episode, batch.r * mdp.gamma ** batch.t, minlength=n)
    assert abs(returns.mean() - rho) <= 4 * returns.std(ddof=1) / np.sqrt(n)


# -- performance and conservation ------------------------------------------


def test_zero_reward_zero_performance():
    mdp = loop_exit_mdp(0.5, exit_reward=0.0)
    assert performance_from_occupancy(mdp, occupancy_exact_markovian(mdp, MarkovianTable([[0.5, 0.5]]))) == 0.0


def test_loop_then_exit_performance():
    mdp = loop_exit_mdp(0.5)
    occ = occupancy_enumerate(mdp, Scripted("loop_then_exit", {"n": 1}), tol=1e-12)
    assert performance_from_occupancy(mdp, occ) == pytest.approx(0.5, abs=1e-12)


def test_unit_reward_performance_is_mass():
    mdp = loop_exit_mdp(0.8, loop_reward=1.0, exit_reward=1.0)
    occ = occupancy_exact_markovian(mdp, MarkovianTable([[0.6, 0.4]]))
    assert performance_from_occupancy(mdp, occ) == pytest.approx(occ.total_mass, rel=1e-12)


def test_performance_error_bar():
    occ = OccupancyTable(np.array([[1.0, 0.5]]), 1e-3)
    assert performance_error(loop_exit_mdp(0.5), occ) == pytest.approx(1e-3)


def test_closed_form_residual_zero():
    _, r = conservation_residual(loop_exit_mdp(0.5), OccupancyTable(np.array([[1.0, 0.5]]), 0.0))
    assert r == 0.0


def test_perturbation_detected():
    rng = np.random.default_rng(13)
    for _ in range(20):
        mdp = random_mdp(rng)
        occ = occupancy_exact_markovian(mdp, random_markov(rng, mdp))
        mu = occ.mu.copy()
        s, a = rng.integers(mdp.num_states), rng.integers(mdp.num_actions)
        mu[s, a] += 0.1
        _, r = conservation_residual(mdp, OccupancyTable(mu, 0.0))
        assert r >= 0.05 * mdp.gamma


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_tables_conserve_and_are_measures(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng)
    occ = occupancy_exact_markovian(mdp, random_markov(rng, mdp))
    assert np.all(occ.mu >= 0)
    assert conservation_residual(mdp, occ)[1] <= 1e-9
    assert np.max(np.abs(occ.state_marginal - occ.mu.sum(axis=1))) <= 1e-12
    mask = rng.random(occ.mu.shape) < 0.5
    assert abs(occ.block_mass(mask) + occ.block_mass(~mask) - occ.total_mass) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_enumerated_tables_conserve(seed):
    (mdp, pol), = random_corpus(seed % 1000, 1)
    occ = occupancy_enumerate(mdp, pol, tol=1e-9)
    assert np.all(occ.mu >= 0)
    assert conservation_residual(mdp, occ)[1] <= occ.tail_bound + 1e-9


def test_mixture_linearity_within_two_tol():
    tol = 1e-9
    for mdp, pol in random_corpus(3, 6)[1::2]:
        whole = occupancy_enumerate(mdp, pol, tol=tol)
        parts = sum(w * occupancy_enumerate(mdp, c, tol=tol).mu for w, c in pol.components())
        assert np.max(np.abs(whole.mu - parts)) <= 2 * tol


# -- finiteness --------------------------------------------------------------


def test_fig1_undiscounted_not_finite():
    rep = finiteness_check(loop_exit_mdp(1.0))
    assert not rep.uniformly_finite
    assert rep.witness == (0,)
    assert rep.witness_policy.probs.tolist() == [[1.0, 0.0]]


def test_discounted_always_finite():
    rep = finiteness_check(loop_exit_mdp(0.9))
    assert rep.uniformly_finite and all(e.finite for e in rep.entries)
    assert len(rep.entries) == 2


def test_chain_undiscounted_finite():
    rep = finiteness_check(chain_mdp(1.0))
    assert rep.uniformly_finite
    assert rep.uniformly_finite == all(e.finite for e in rep.entries)


def test_enumeration_limit():
    kernel = np.zeros((5, 3, 6))
    kernel[:, :, 5] = 1.0
    mdp = FiniteMdp(5, 3, [1, 0, 0, 0, 0, 0], kernel, np.zeros((5, 3)), 0, 1.0)
    with pytest.raises(EnumerationInfeasibleError):
        finiteness_check(mdp, limit=100)


def test_occupancy_json_round_trip():
    occ = occupancy_enumerate(loop_exit_mdp(0.9), MarkovianTable([[0.5, 0.5]]), tol=1e-6)
    back = OccupancyTable.from_dict(occ.to_dict())
    assert np.array_equal(back.mu, occ.mu) and back.tail_bound == occ.tail_bound
