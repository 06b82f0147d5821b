"""Error metrics of the released noise for a few mixing laws."""
import math

from compound_laplace import DistributionSpec, Gamma, Uniform, Degenerate, TruncGauss
from compound_laplace.utility import analyze_utility


def main():
    for law in (Degenerate(1.0), Gamma(2.0, 0.5), Gamma(6.0, 0.25), Uniform(1.0, 2.0), TruncGauss(1.5, 0.5, 0.5)):
        spec = DistributionSpec.single(law)
        r = analyze_utility(spec, gamma=1.0)
        l2 = "diverges" if math.isinf(r.l2) else f"{r.l2:.5f}"
        print(f"{spec.describe():40s} P(|noise|<=1) {r.usefulness:.5f}  E|noise| {r.l1:.5f}"
              f"  rms {l2}  entropy {r.entropy_true:.5f}")


if __name__ == "__main__":
    main()
