"""Calibration of the orthogonal-complement Monte-Carlo average.

For a correct estimator the deviation from a * Gamma^-1 in units of the
reported standard error is standard normal across seeds.  Prints the mean,
spread and tail fraction of those z-scores, and how the relative standard
error falls with the sample count.
"""

from dataclasses import dataclass

import numpy as np

from _config import parse_config
from finrank.averaging import GaussianWeight, orthogonal_weighted_average
from finrank.herglotz import poisson_kernel
from finrank.linalg import operator_norm
from finrank.scenario import random_scenario


@dataclass
class Config:
    d: int = 2
    N: int = 3
    scenario_seed: int = 6
    seeds: int = 40
    samples: int = 2000


def main(cfg: Config) -> None:
    fam = random_scenario(cfg.d, cfg.N, cfg.scenario_seed).family()
    z = []
    for seed in range(cfg.seeds):
        res = orthogonal_weighted_average(fam, poisson_kernel(1j), GaussianWeight(),
                                          mc_samples=cfg.samples, seed=seed)
        target = res.total_weight * fam.gamma_inverse()
        dev = res.value - target
        k = np.unravel_index(np.argmax(np.abs(target)), target.shape)
        z.append(dev[k].real / res.stderr_matrix[k].real)
    z = np.array(z)
    print(f"z-scores over {cfg.seeds} seeds at {cfg.samples} samples: "
          f"mean {z.mean():+.3f}, std {z.std(ddof=1):.3f}, |z| > 3: {np.mean(np.abs(z) > 3):.1%}")
    print("samples  relative stderr")
    for n in (500, 2000, 8000):
        res = orthogonal_weighted_average(fam, poisson_kernel(1j), GaussianWeight(), mc_samples=n, seed=1)
        print(f"{n:7d}  {res.stderr / operator_norm(res.total_weight * fam.gamma_inverse()):.4%}")


if __name__ == "__main__":
    main(parse_config(Config, __doc__))
