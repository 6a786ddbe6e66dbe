"""
Loss terms and their latent gradients
=====================================

Five terms drive the optimization: face and hair-structure perceptual
distances, mean-appearance and Gram-style matching on the hair, and a
penalty on spatial structure in the noise maps. Each image term returns its
image gradient; the generator's vjp pulls it back to the latent state.
"""

import numpy as np

from hairtransfer.features import ToyExtractor
from hairtransfer.generator import ToyGenerator, init_latent_state
from hairtransfer.losses import LossWeights, noise_regularization
from hairtransfer.optimizer import Objective
from hairtransfer.toy import make_toy_tuple, toy_problem

gen, ext = ToyGenerator(0), ToyExtractor(0)
tup = make_toy_tuple(gen, seed=0)
objective = Objective(gen, ext, toy_problem(tup))
state = init_latent_state(gen, seed=0)

# Term values at the initial state (mean latent, random unit noise).
values = objective.values(state)
for name, v in values.items():
    print(f"{name:>10s} {v:.4e}")

# The total is a plain weighted sum; the defaults put large weights on the
# small appearance, style and noise terms.
w = LossWeights().as_dict()
print("weighted total", sum(w[k] * v for k, v in values.items()))

# Spot-check one latent coordinate of the style gradient against a central
# difference.
image = gen.synthesize(state)
_, g_img = objective.style(image)
grad = gen.vjp(state, g_img).flatten()
flat, k, h = state.flatten(), 5, 1e-5
e = np.zeros_like(flat)
e[k] = h
up = objective.style(gen.synthesize(state.unflatten(flat + e)), grad=False)
dn = objective.style(gen.synthesize(state.unflatten(flat - e)), grad=False)
print(f"style d/dw[{k}]: analytic {grad[k]:.6e}, central difference {(up - dn) / (2 * h):.6e}")

# Smooth noise is penalized far more than white noise.
rng = np.random.default_rng(0)
white = rng.standard_normal((32, 32))
smooth = np.cumsum(np.cumsum(white, 0), 1)
print("noise penalty white", noise_regularization([white]), "smooth", noise_regularization([smooth]))
