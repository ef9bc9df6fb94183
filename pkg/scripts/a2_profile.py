"""Joint Poisson A2 quantity near atoms.

For random scenarios and couplings, prints the sampled sup of
||M(z)^1/2 (G M^G(z) G)^1/2|| as the sampling height eps_min shrinks,
next to the largest weighted Poisson operator norm divided by 2 pi, which
should coincide at the same points.
"""

from dataclasses import dataclass

import numpy as np

from _config import parse_config
from finrank.representation import p_alpha_operator
from finrank.scenario import random_scenario
from finrank.singularity import A2_CONSTANT, a2_bound_check


@dataclass
class Config:
    scenarios: int = 10
    d: int = 2
    N: int = 5


def main(cfg: Config) -> None:
    ladder = (1e-1, 1e-2, 1e-4, 1e-6)
    print("seed  " + "  ".join(f"eps>={e:.0e}" for e in ladder) + "   max|P|/2pi")
    for seed in range(cfg.scenarios):
        sc = random_scenario(cfg.d, cfg.N, seed)
        model, G = sc.model(), sc.gamma0 + sc.gamma
        sups = [a2_bound_check(model, G, eps_min=e).max_value for e in ladder]
        xs = model.measure().locations
        pn = max(p_alpha_operator(model, G, complex(x, h)).norm for x in xs for h in ladder)
        print(f"{seed:4d}  " + "  ".join(f"{v:9.5f}" for v in sups) + f"   {pn / (2 * np.pi):9.5f}")
    print(f"bound 8/pi = {A2_CONSTANT:.5f}")


if __name__ == "__main__":
    main(parse_config(Config, __doc__))
