import random

from hypothesis import given, settings
from hypothesis import strategies as st

from flintlet.cost import (
    CostBreakdown,
    PriceSheet,
    RunMetrics,
    cost_of_run,
    format_cost_table,
    round_up_ms,
)

TEST_PRICES = PriceSheet(
    rate_per_gb_second=0.01, rate_per_invocation=0.001, rate_per_queue_call=0.0005
)


class TestRounding:
    def test_exact_multiple_unchanged(self):
        assert round_up_ms(10_000, 100) == 10_000

    def test_partial_unit_rounds_up(self):
        assert round_up_ms(10_050, 100) == 10_100
        assert round_up_ms(1, 100) == 100

    def test_zero_stays_zero(self):
        assert round_up_ms(0, 100) == 0


class TestCostOfRun:
    def test_hand_computed_breakdown(self):
        # 5 invocations at 3008 MB: 10 s + 10 s + 20 s + 30 s + 50 s of billed
        # time = 120 s, 2.9375 GB => compute 3.525; 5 requests; 12 queue calls.
        metrics = RunMetrics(
            invocations=[
                (10_000, 3008),
                (10_000, 3008),
                (20_000, 3008),
                (30_000, 3008),
                (50_000, 3008),
            ],
            total_queue_calls=12,
            wall_clock_ms=60_000,
        )
        breakdown = cost_of_run(metrics, TEST_PRICES)
        assert breakdown.compute == (3008 / 1024) * 120 * 0.01
        assert breakdown.requests == 5 * 0.001
        assert breakdown.queue == 12 * 0.0005
        assert breakdown.total == breakdown.compute + breakdown.requests + breakdown.queue

    def test_billing_granularity_applies_per_invocation(self):
        metrics = RunMetrics(invocations=[(10_050, 1024)], total_queue_calls=0)
        breakdown = cost_of_run(metrics, TEST_PRICES)
        assert breakdown.compute == 10.1 * 0.01

    def test_empty_run_costs_nothing(self):
        breakdown = cost_of_run(RunMetrics(invocations=[], total_queue_calls=0),
                                TEST_PRICES)
        assert breakdown.total == 0.0

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_linearity_and_monotonicity(self, seed):
        rng = random.Random(seed)
        invocations = [
            (rng.uniform(1, 200_000), rng.choice([512, 1024, 3008]))
            for _ in range(rng.randrange(1, 40))
        ]
        calls = rng.randrange(0, 500)
        metrics = RunMetrics(invocations=invocations, total_queue_calls=calls)
        base = cost_of_run(metrics, TEST_PRICES)

        # doubling every price doubles every component
        doubled = cost_of_run(metrics, TEST_PRICES.scaled(2.0))
        assert abs(doubled.total - 2 * base.total) < 1e-12
        assert abs(doubled.compute - 2 * base.compute) < 1e-12

        # adding an invocation or a queue call never reduces cost
        more = RunMetrics(
            invocations=invocations + [(rng.uniform(1, 200_000), 1024)],
            total_queue_calls=calls + 1,
        )
        assert cost_of_run(more, TEST_PRICES).total > base.total


class TestFormatting:
    def test_table_lists_each_query_row(self):
        rows = [
            {"query": "q0", "latency_s": 1.5, "cost_usd": 0.0123},
            {"query": "q1", "latency_s": 12.25, "cost_usd": 1.5},
        ]
        table = format_cost_table(rows)
        lines = table.splitlines()
        assert "Query" in lines[0] and "Cost" in lines[0]
        assert any("q0" in line and "1.500" in line for line in lines)
        assert any("q1" in line for line in lines)

    def test_breakdown_total(self):
        b = CostBreakdown(compute=1.0, requests=0.25, queue=0.125)
        assert b.total == 1.375
