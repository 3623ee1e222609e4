"""Pure-numpy mixture-posterior kernel, fallback when the compiled one is absent."""

import numpy as np


def eps_kernel(z, means, log_weights, sigma, a):
    """Exact noise prediction for a Gaussian mixture at noise level a = alpha_bar.

    z: flat latent (n,), means: (K, n), log_weights: (K,). Returns
    (eps, responsibilities). Marginal variance per coordinate is
    s2 = a*sigma^2 + 1 - a; posterior mean algebra reduces to
    eps = sqrt(1-a) * (z - sqrt(a)*mu_bar) / s2, which stays defined at a=1.
    """
    s2 = a * sigma * sigma + 1.0 - a
    sqrt_a = np.sqrt(a)
    diff = z[None, :] - sqrt_a * means
    logits = log_weights - np.einsum("ki,ki->k", diff, diff) / (2.0 * s2)
    logits -= logits.max()  # extreme exponents near a in {0, 1}
    resp = np.exp(logits)
    resp /= resp.sum()
    mu_bar = resp @ means
    eps = np.sqrt(1.0 - a) * (z - sqrt_a * mu_bar) / s2
    return eps, resp
