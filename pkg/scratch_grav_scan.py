import numpy as np
from scipy.special import logsumexp

from maxentfit import *
from maxentfit.simulators import *
from maxentfit.cli import stream_seed

prior = DiagonalGaussianPrior([85.0, 40.0, 70.0, 12.0, -30.0], [50.0] * 5)
obs_steps = (20, 40, 60, 80, 100)
attr = ((23.5, -21.4), (41.3, -74.5), (91.4, -98.5))
cfg = GravityConfig(attractor_positions=attr, gravitational_constant=40.0, dt=0.06, softening=2.0)
true = np.array([89.0, 49.0, 90.0, 14.5, -27.0])
refvals_cache = gravity_observables(simulate_gravity(true, cfg), obs_steps)


def newton_ess(G, targets):
    lam = np.zeros(G.shape[1])
    for _ in range(100):
        w = np.exp(-G @ lam - logsumexp(-G @ lam))
        grad = targets - w @ G
        if np.abs(grad).max() < 1e-9:
            break
        cov = (G * w[:, None]).T @ G - np.outer(w @ G, w @ G)
        try:
            step = np.linalg.solve(cov + 1e-10 * np.eye(len(lam)), grad)
        except np.linalg.LinAlgError:
            return None, None
        ns = np.linalg.norm(step)
        if ns > 5:
            step *= 5 / ns
        lam -= step
        if np.abs(lam).max() > 1e3:
            return None, None
    w = np.exp(-G @ lam - logsumexp(-G @ lam))
    if np.abs(targets - w @ G).max() > 1e-6:
        return None, None
    return np.abs(lam).max(), 1.0 / np.sum(w**2)


hits = []
for seed in range(300):
    thetas = prior.sample(2048, stream_seed(seed, "prior-draws"))
    G = gravity_observables(simulate_gravity_ensemble(thetas, cfg), obs_steps)
    targets = synthesize_observations(refvals_cache, "gaussian", 3.0, stream_seed(seed, "observation-noise"))
    lamx, ess = newton_ess(G, targets)
    if lamx is not None and ess > 300 and lamx < 2.5:
        hits.append((seed, round(float(lamx), 2), round(float(ess))))
        print("HIT", hits[-1], flush=True)
print("total hits:", len(hits))
