"""Eigenvalue trajectories along Gamma0 + t Gamma.

Writes the sweep CSV for a scenario file (default: a random scenario) and
prints the exceptional parameters at which a trajectory crosses an
unperturbed atom.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from _config import parse_config
from finrank.averaging import null_set_scan
from finrank.cli import main as cli_main
from finrank.scenario import load_scenario, random_scenario


@dataclass
class Config:
    scenario: str = ""
    d: int = 2
    N: int = 4
    seed: int = 3
    t_min: float = -3.0
    t_max: float = 3.0
    steps: int = 121
    out: str = "sweep.csv"


def main(cfg: Config) -> None:
    if cfg.scenario:
        path = cfg.scenario
    else:
        path = str(Path(cfg.out).with_suffix(".json"))
        Path(path).write_text(random_scenario(cfg.d, cfg.N, cfg.seed).to_json() + "\n")
    code = cli_main(["sweep", path, "--t-min", str(cfg.t_min), "--t-max", str(cfg.t_max),
                     "--steps", str(cfg.steps), "--out", cfg.out])
    print(f"sweep exit code {code}; rows in {cfg.out}")
    sc = load_scenario(path)
    pts = sc.model().measure().locations
    hits = null_set_scan(sc.family(), pts, np.linspace(cfg.t_min, cfg.t_max, cfg.steps))
    print(f"{len(hits)} exceptional t in [{cfg.t_min}, {cfg.t_max}] "
          f"(at most N * atoms = {sc.N * len(pts)}):")
    for t in hits:
        print(f"  t = {t:+.12f}")


if __name__ == "__main__":
    main(parse_config(Config, __doc__))
