"""Compare the three guard designs over one synthetic year.

A 5% adversary injects guards once, either all in one AS or spread over
many ASes.  We print the fraction of clients that ever held a malicious
guard, at a few checkpoints.  The AS-aware design should grow far less
than bandwidth-only sets, since churn never pulls clients across ASes.
"""

import sys

from guardsets.adversary import BOTNET, CENTRALIZED, AdversaryConfig
from guardsets.assignment import AS, BW, SINGLE
from guardsets.simkit import SimulationConfig, run_simulation
from guardsets.trace import TraceConfig, generate_trace

CHECKPOINTS = (0, 30, 90, 180, 364)


def main(seed=0):
    trace = generate_trace(TraceConfig(seed=seed))
    print(f"trace: {trace.n_days} days, {len(trace.guards_as(0))} guards on day 1")
    for strategy in (CENTRALIZED, BOTNET):
        print(f"\n{strategy} adversary, 5% of guard bandwidth")
        print("design  " + "  ".join(f"day{d + 1:>4}" for d in CHECKPOINTS))
        for design in (AS, BW, SINGLE):
            cfg = SimulationConfig(design=design, clients=5000, seed=seed,
                                   adversary=AdversaryConfig(strategy=strategy, bandwidth_fraction=0.05))
            r = run_simulation(cfg, trace)
            fr = [r.metrics.at(d)["compromised_client_fraction"] for d in CHECKPOINTS]
            print(f"{design:<7} " + "  ".join(f"{x:8.3f}" for x in fr))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
