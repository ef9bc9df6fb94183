"""Boundary-value checks over many random scenarios with an a.c. part.

Runs the ``boundary`` suite (density recovery, congruence transform and
atom blowup) on seeded random scenarios and reports failures and the worst
values seen, which shows the margin to the tolerances.
"""

from dataclasses import dataclass

from _config import parse_config
from finrank.scenario import random_ac_part, random_scenario, with_ac
from finrank.suites import verify


@dataclass
class Config:
    scenarios: int = 100
    nodes: int = 201


def main(cfg: Config) -> None:
    worst: dict[str, float] = {}
    failures = 0
    for seed in range(cfg.scenarios):
        d = 1 + seed % 4
        sc = with_ac(random_scenario(d, d + 2, seed), random_ac_part(d, seed, nodes=cfg.nodes))
        for r in verify(sc, ["boundary"]).records:
            if r.status == "fail":
                failures += 1
                print(f"seed {seed}: {r.name} failed {r.repro}")
            if r.value is not None:
                worst[r.name] = max(worst.get(r.name, 0.0), r.value)
    print(f"{failures} failures over {cfg.scenarios} scenarios")
    for name, v in worst.items():
        print(f"  worst {name}: {v:.3e}")


if __name__ == "__main__":
    main(parse_config(Config, __doc__))
