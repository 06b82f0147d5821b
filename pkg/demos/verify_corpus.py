"""Cross-check the analytic formulas on the regression corpus by sampling."""
from compound_laplace.verify import regression_corpus, verify_spec


def main():
    for i, spec in enumerate(regression_corpus()):
        rep = verify_spec(spec, 1.0, 1.0, 1_000_000, seed=i)
        print(f"{i}: eps {rep.eps_analytic:.5f} sup {rep.eps_density_sup:.5f} sampled {rep.eps_empirical:.4f}"
              f" usefulness {rep.usefulness_analytic:.5f}/{rep.usefulness_empirical:.5f} passed {rep.passed}")


if __name__ == "__main__":
    main()
