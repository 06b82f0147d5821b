"""Usefulness of plain Laplace against the optimized mechanism over a range of eps."""
import numpy as np

from compound_laplace.cli import format_sweep, sweep_rows
from compound_laplace.optimizer import OptimizationProblem


def main():
    problem = OptimizationProblem(0.5, gamma=0.25, families=("degenerate", "gamma"), restarts=12)
    print(format_sweep(sweep_rows(problem, np.linspace(0.5, 8.0, 8))), end="")


if __name__ == "__main__":
    main()
