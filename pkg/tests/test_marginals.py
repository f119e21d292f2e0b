"""Forward marginal recursion, enumeration oracle, and exact flow comparison."""

from fractions import Fraction

import pytest

from martlab.errors import EnumerationBudgetError
from martlab.exactprob import Dist, dist_mean, tv_distance, uniform_pm1
from martlab.kernels import alternating_kernel, holding_kernel, ssrw_kernel
from martlab.marginals import (
    compare_flows,
    enumerate_paths_oracle,
    flow_from_csv,
    flow_to_csv,
    flow_to_json_obj,
    forward_marginals,
)

F = Fraction


class TestForward:
    def test_alternating_two_steps(self):
        flow = forward_marginals(alternating_kernel(), 2)
        assert flow[2] == Dist({-3: F(1, 4), -1: F(1, 4), 1: F(1, 4), 3: F(1, 4)})

    def test_holding_two_steps(self):
        flow = forward_marginals(holding_kernel(), 2)
        assert flow[2] == Dist({-3: F(1, 4), -1: F(1, 4), 1: F(1, 4), 3: F(1, 4)})

    def test_ssrw_two_steps(self):
        flow = forward_marginals(ssrw_kernel(), 2)
        assert flow[2] == Dist({-2: F(1, 4), 0: F(1, 2), 2: F(1, 4)})

    def test_time_zero_is_initial(self):
        flow = forward_marginals(alternating_kernel(), 5)
        assert flow[0] == alternating_kernel().initial

    def test_chapman_kolmogorov_consistency(self):
        k = holding_kernel()
        flow = forward_marginals(k, 6)
        for n in range(6):
            rebuilt: dict[int, F] = {}
            for x, mass in flow[n].items():
                for y, step in k.law(n, x).items():
                    rebuilt[y] = rebuilt.get(y, F(0)) + mass * step
            assert Dist(rebuilt) == flow[n + 1]


class TestOracle:
    def test_ssrw_binomial(self):
        flow = enumerate_paths_oracle(ssrw_kernel(), 4)
        assert flow[4] == Dist({-4: F(1, 16), -2: F(4, 16), 0: F(6, 16), 2: F(4, 16), 4: F(1, 16)})

    @pytest.mark.parametrize("factory", [alternating_kernel, holding_kernel])
    def test_matches_forward_horizon_eight(self, factory):
        k = factory()
        oracle = enumerate_paths_oracle(k, 8)
        forward = forward_marginals(k, 8)
        assert compare_flows(oracle, forward).equal

    def test_budget_guard(self):
        with pytest.raises(EnumerationBudgetError):
            enumerate_paths_oracle(holding_kernel(), 8, node_budget=100)


class TestCompare:
    def test_headline_equality(self):
        a = forward_marginals(alternating_kernel(), 18)
        b = forward_marginals(holding_kernel(), 18)
        cmp = compare_flows(a, b)
        assert cmp.equal
        assert "EQUAL" in cmp.summary()

    def test_ssrw_differs_at_two(self):
        a = forward_marginals(alternating_kernel(), 2)
        b = forward_marginals(ssrw_kernel(), 2)
        cmp = compare_flows(a, b)
        assert not cmp.equal
        first = cmp.first_difference
        assert first.n == 2
        assert b[2].mass(0) == F(1, 2) and a[2].mass(0) == 0

    def test_flow_equals_itself(self):
        flow = forward_marginals(holding_kernel(), 7)
        assert compare_flows(flow, flow).equal

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            compare_flows(
                forward_marginals(ssrw_kernel(), 3),
                forward_marginals(ssrw_kernel(), 4),
            )


HORIZON = 14


@pytest.fixture(scope="module", params=["alternating", "holding"])
def chain_flow(request):
    factory = {"alternating": alternating_kernel, "holding": holding_kernel}[request.param]
    return forward_marginals(factory(), HORIZON)


class TestStructuralInvariants:
    def test_zero_avoidance(self, chain_flow):
        for n in range(1, HORIZON + 1):
            assert chain_flow[n].mass(0) == 0

    def test_support_bound(self, chain_flow):
        for n in range(HORIZON + 1):
            bound = 2**n - 1
            assert all(-bound <= x <= bound for x in chain_flow[n].support())

    def test_mirror_symmetry(self, chain_flow):
        for n in range(HORIZON + 1):
            d = chain_flow[n]
            assert all(d.mass(x) == d.mass(-x) for x in d.support())

    def test_mean_preserved(self, chain_flow):
        for n in range(HORIZON + 1):
            assert dist_mean(chain_flow[n]) == 0

    def test_mass_sums_exactly_one(self, chain_flow):
        for n in range(HORIZON + 1):
            assert sum(m for _, m in chain_flow[n].items()) == 1


def test_tv_to_limit_shrinks():
    # distributional convergence check: distance to the +-1 limit law at the
    # full horizon is below the distance at half horizon
    flow = forward_marginals(alternating_kernel(), 16)
    target = uniform_pm1()
    assert tv_distance(flow[16], target) < tv_distance(flow[8], target)


class TestExport:
    def test_csv_rows_deterministic(self):
        flow = forward_marginals(alternating_kernel(), 2)
        lines = flow_to_csv(flow).splitlines()
        assert lines[0] == "n,x,numerator,denominator"
        assert lines[1] == "0,0,1,1"
        assert "2,-3,1,4" in lines and "2,3,1,4" in lines

    def test_csv_round_trip(self):
        flow = forward_marginals(holding_kernel(), 5)
        levels = flow_from_csv(flow_to_csv(flow))
        assert len(levels) == 6
        assert all(levels[n] == flow[n] for n in range(6))

    def test_json_obj(self):
        obj = flow_to_json_obj(forward_marginals(ssrw_kernel(), 1))
        assert obj["kernel"] == "ssrw"
        assert obj["marginals"][1]["masses"] == {"-1": "1/2", "1": "1/2"}
