"""Train a network that maps mixture weights directly to the ERM minimizer.

Bilevel training alternates one network step against current labels with a few
descent steps refining each label toward w*(alpha). More training mixtures give
a lower test excess risk.
"""

from mixopt.core import RngStream
from mixopt.domains import make_quadratic_suite
from mixopt.wstar_net import excess_risk, train


def main() -> None:
    suite = make_quadratic_suite(3, 2, mu=0.25, L=1.0, seed=7, radius=1.0,
                                 center_scale=0.2)
    for n in (50, 200):
        alphas = RngStream(0, 3).generator().dirichlet([1.0, 1.0, 1.0], size=n)
        result = train(alphas, suite, m=512, eta=0.5, outer_steps=1000,
                       refine_steps=10, seed=0, radius=1.0, trace_every=250)
        risk = excess_risk(result.net, suite, n_test=512, seed=0, radius=1.0)
        print(f"n={n}: final empirical risk {result.empirical_risk[-1]:.3e}, "
              f"mean label gap {result.label_gap_mean[-1]:.3e}, "
              f"test excess risk {risk:.3e}")


if __name__ == "__main__":
    main()
