"""Search for the mixing law that maximizes usefulness at a fixed eps."""
from compound_laplace.optimizer import OptimizationProblem, optimize


def main():
    for eps in (1.0, 4.0, 6.0):
        p = OptimizationProblem(eps, gamma=0.25, families=("degenerate", "gamma", "uniform"), restarts=16)
        r = optimize(p)
        print(f"eps {eps}: plain Laplace {r.baseline_objective:.5f}, best {r.objective:.5f}"
              f" with {r.best_spec.describe()} (improved: {r.improved})")


if __name__ == "__main__":
    main()
