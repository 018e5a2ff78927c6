"""Serve a stream of mixtures with shrinking-ball running means on a label budget.

Each round activates (or creates) a center within the current radius
eps_t = t^(-1/(1+N)) and answers with that center's running mean; the exact
label is computed only when a Bernoulli(p) coin allows it.
"""

import numpy as np

from mixopt.coerm import contraction_steps
from mixopt.domains import make_quadratic_suite, suite_constants
from mixopt.online import dirichlet_stream, packing_audit, run_stream


def main() -> None:
    suite = make_quadratic_suite(2, 2, mu=0.5, L=1.0, seed=3, radius=1.0,
                                 center_scale=0.25)
    consts = suite_constants(suite, 1.0)
    refine = contraction_steps(1.0, 1e-6, consts.mu, 1.0 / consts.L)
    alphas = dirichlet_stream(4096, 2, seed=0)

    for rate in (1.0, 0.25):
        result = run_stream(alphas, suite, label_rate=rate, refine_steps=refine,
                            seed=0, domain_radius=1.0)
        audit = packing_audit(result.state)
        early = float(np.mean(result.loss[:512]))
        late = float(np.mean(result.loss))
        print(f"p={rate}: mean loss {early:.3e} (through t=512) -> "
              f"{late:.3e} (through t=4096)")
        print(f"p={rate}: {result.n_centers} centers, {result.total_labels} labels, "
              f"packing margin {audit.min_margin:.3e}")


if __name__ == "__main__":
    main()
