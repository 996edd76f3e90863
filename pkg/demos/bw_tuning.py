"""Bandwidth tuning against bandwidth-only guard sets.

The adversary watches sets break and offers a guard sized to be the one
the repair picks.  A small adversary (1%) works slowly; a larger one (25%)
seeds sets from the start.  Compare how many sets it holds over time.
"""

from guardsets.adversary import BW_TUNING_HIGH, BW_TUNING_LOW, AdversaryConfig
from guardsets.assignment import BW
from guardsets.simkit import SimulationConfig, run_simulation
from guardsets.trace import TraceConfig, generate_trace


def main():
    trace = generate_trace(TraceConfig(seed=1, n_days=120))
    for strategy, frac in ((BW_TUNING_LOW, 0.01), (BW_TUNING_HIGH, 0.25)):
        cfg = SimulationConfig(design=BW, clients=1000, seed=1,
                               adversary=AdversaryConfig(strategy=strategy, bandwidth_fraction=frac))
        r = run_simulation(cfg, trace)
        sets = r.metrics.column("compromised_set_fraction")
        spent = r.metrics.column("adversary_bw_fraction")
        print(f"{strategy} at {frac:.0%}:")
        for d in (1, 30, 60, 119):
            print(f"  day {d + 1:>3}: {sets[d]:.3f} of sets hold a malicious guard, "
                  f"offered bandwidth {spent[d]:.3f} of honest")


if __name__ == "__main__":
    main()
