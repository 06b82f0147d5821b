"""Release a private count and a private clipped mean from synthetic data."""
import numpy as np

from compound_laplace import DistributionSpec, Gamma
from compound_laplace.mechanism import QueryJob, release


def main():
    ages = np.random.default_rng(0).integers(18, 90, size=2_000).astype(float)
    spec = DistributionSpec.single(Gamma(6.0, 0.25))
    count = release(QueryJob(ages, "count", spec_override=spec, seed=1))
    print("count:", count.true_value, "->", round(count.noisy_value, 3), "at eps", round(count.eps_certified, 4))
    mean = release(QueryJob(ages, "mean", clip=(18.0, 90.0), eps_target=1.0, families=("degenerate", "gamma"), seed=1))
    print("mean:", round(mean.true_value, 3), "noise added", f"{mean.noisy_value - mean.true_value:+.5f}",
          "using", mean.spec_used.describe())
    print("published:", mean.public_dict())


if __name__ == "__main__":
    main()
