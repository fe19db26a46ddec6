"""Synthetic client reports that do not depend on real training."""
import numpy as np

from fedref.learner import ClientReport
from fedref.params import as_params


class InjectedClients:
    """Clients that move the broadcast model toward a hidden optimum plus heterogeneity noise.

    The random part of round ``r`` depends only on ``(seed, r)``, so two servers
    fed by the same instance see identical client behaviour relative to their
    own broadcast model.
    """

    def __init__(self, dim=50, clients=10, seed=0, pull=0.2, noise=0.5):
        rng = np.random.default_rng([seed, 0])
        self.dim, self.clients, self.seed = dim, clients, seed
        self.pull, self.noise = pull, noise
        self.optimum = rng.standard_normal(dim) * 3
        self.counts = rng.integers(20, 200, clients)
        self.bias = rng.standard_normal((clients, dim))

    def reports(self, theta, r):
        rng = np.random.default_rng([self.seed, 1, r])
        step = self.pull * (self.optimum - np.asarray(theta))
        out = []
        for k in range(self.clients):
            shift = self.noise * (self.bias[k] + rng.standard_normal(self.dim))
            params = np.asarray(theta) + step + shift
            loss = float(np.sum((params - self.optimum) ** 2) / self.dim)
            out.append(ClientReport(as_params(params), loss, int(self.counts[k])))
        return out
