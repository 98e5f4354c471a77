#!/usr/bin/env python3
"""
Micro-benchmark - timing of the closed forms against their Monte Carlo oracles
"""

import cProfile
import pstats
import statistics
import sys
import time
from io import StringIO
from pathlib import Path

# Add the package source to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "python"))

try:
    from hts_capacity import (
        AlgorithmConfig,
        RngStream,
        ScenarioConfig,
        baseline_bf,
        ergodic_sum_rate,
        feeder_capacity,
        feeder_capacity_mc,
        run_algorithm1,
        user_capacity_inputs,
        user_link_capacity_mc,
    )
    from hts_capacity.feeder import QuadratureSpec, _mgf_sum
except ImportError as e:
    print(f"Import error: {e}")
    sys.exit(1)


def time_operation(func, iterations=10):
    """Time a callable over several runs"""
    times = []
    for i in range(iterations):
        start = time.perf_counter_ns()
        func(i)
        end = time.perf_counter_ns()
        times.append(end - start)

    return {
        "mean_ms": statistics.mean(times) / 1e6,
        "median_ms": statistics.median(times) / 1e6,
        "min_ms": min(times) / 1e6,
        "max_ms": max(times) / 1e6,
        "std_ms": statistics.stdev(times) / 1e6 if len(times) > 1 else 0.0,
    }


def report(label, stats):
    print(f"\n📊 {label}:")
    print(f"  Mean: {stats['mean_ms']:,.2f} ms")
    print(f"  Median: {stats['median_ms']:,.2f} ms")
    print(f"  Min: {stats['min_ms']:,.2f} ms")
    print(f"  Max: {stats['max_ms']:,.2f} ms")
    print(f"  Std: {stats['std_ms']:,.2f} ms")


def profile_function(func, iterations=3):
    """Profile a callable with cProfile"""
    pr = cProfile.Profile()
    pr.enable()

    for i in range(iterations):
        func(i)

    pr.disable()

    s = StringIO()
    ps = pstats.Stats(pr, stream=s).sort_stats("cumulative")
    ps.print_stats(10)

    return s.getvalue()


def analyze_feeder(scenario):
    """C1: quadrature order, cache effect and the Monte Carlo reference"""
    print("🔬 Feeder Link Micro-Benchmark")
    print("=" * 60)

    feeder = scenario.feeder
    for order in (10, 20, 30, 60):

        def cold(i, order=order):
            _mgf_sum.cache_clear()
            feeder_capacity(feeder, QuadratureSpec(T=order))

        report(f"closed form, T={order}, cold cache", time_operation(cold))

    feeder_capacity(feeder)
    report("closed form, T=30, warm cache", time_operation(lambda i: feeder_capacity(feeder)))

    stream = RngStream(0)
    for n in (100_000, 1_000_000):
        stats = time_operation(lambda i, n=n: feeder_capacity_mc(stream.child(i), feeder, n), 3)
        report(f"Monte Carlo, n={n:,}", stats)


def analyze_user_link(scenario):
    """C2 closed form, Monte Carlo and the beamforming iteration"""
    print("\n📡 User Link Micro-Benchmark")
    print("=" * 60)

    ul = scenario.userlink
    prob = ul.problem(ul.geometry(RngStream(0)))
    bf = baseline_bf(prob, "slnr")

    report(
        "closed-form C2 (SLNR)",
        time_operation(lambda i: ergodic_sum_rate(prob, bf.W, ul.shadowing, ul.Lambda_th), 50),
    )
    report(
        "Monte Carlo C2, n=100,000",
        time_operation(
            lambda i: user_link_capacity_mc(
                RngStream(0).child(i), prob, bf, ul.shadowing, ul.Lambda_th, 100_000
            ),
            3,
        ),
    )

    cfg = AlgorithmConfig(Lambda_th=0.0, feedback="expected")
    report("beamforming iteration", time_operation(lambda i: run_algorithm1(prob, cfg), 5))

    inputs = user_capacity_inputs(prob, bf, ul.shadowing, ul.Lambda_th)
    print(f"\n  users: {len(inputs)}, feasible: {sum(x.feasible for x in inputs)}")


def main():
    scenario = ScenarioConfig.from_dict({})
    analyze_feeder(scenario)
    analyze_user_link(scenario)

    print("\n🔍 Profile of one cold C1 evaluation")
    print("=" * 60)

    def cold(i):
        _mgf_sum.cache_clear()
        feeder_capacity(scenario.feeder)

    print(profile_function(cold, 1))


if __name__ == "__main__":
    main()
