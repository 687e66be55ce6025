"""Small-scale coverage study for the value intervals.

Runs a reduced version of the interval experiments: fewer replications
and a smaller sample than the full protocol, so it finishes in about a
minute on a laptop.  Expect the empirical coverage to sit near the
nominal level but with visible Monte-Carlo noise at this replication
count; the shipped `drove simulate` command runs the full-size protocol.

Run:  python demos/coverage_study.py [replications]
"""

import sys
import time

from drove.simlab import SimConfig, run_table2, run_table3


def main():
    reps = int(sys.argv[1]) if len(sys.argv) > 1 else 40
    cfg = SimConfig(
        n=1000, n_test=2000, noise_sd=0.15, replications=reps, seed=20260823
    )

    t0 = time.perf_counter()
    opt = run_table2(cfg, alphas=(0.1, 0.05))
    print(f"optimal-value intervals ({reps} replications, n={cfg.n}):")
    print(f"  truth               : {opt['true_value']:.4f}")
    print(f"  mean point estimate : {opt['mean_point']:.4f}")
    print(f"  mean standard error : {opt['mean_se']:.4f}")
    for alpha in (0.1, 0.05):
        print(f"  coverage at {1 - alpha:.0%}     : {opt['coverage'][repr(alpha)]:.3f}")

    diff = run_table3(cfg, rules=(0.3, 0.7), alphas=(0.1, 0.05))
    print("\nvalue gained over fixed rules:")
    for row in diff["rows"]:
        print(f"  always a={row['rule']}: true gap {row['true_difference']:.4f}, "
              f"mean estimate {row['mean_point']:.4f}, "
              f"95% coverage {row['coverage'][repr(0.05)]:.3f}")

    print(f"\ntotal time: {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
