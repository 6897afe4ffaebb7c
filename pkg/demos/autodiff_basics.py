"""
Reverse-mode gradients with ``witloc.numcore``
==============================================

Every model in the package is built from a small set of differentiable
numpy operations. This script builds a tiny expression, runs the backward
pass and checks the result against central differences.
"""

import numpy as np

from witloc import numcore as nc
from witloc.numcore import Tensor

rng = np.random.default_rng(0)

# A two-layer map with a layer norm in the middle.
x = Tensor(rng.normal(size=(5, 3)))
W1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
W2 = Tensor(rng.normal(size=(4, 1)), requires_grad=True)


def loss():
    h = nc.relu(nc.layer_norm(x @ W1, 1.0, 0.0))
    return nc.mean((h @ W2) * (h @ W2))


value = loss()
nc.backward(value)
print("loss", value.item())
print("dL/dW2", W2.grad.ravel())

# ``grad_check`` recomputes the loss with each entry nudged by +-1e-5 and
# reports the worst relative gap to the analytic gradient.
print("max relative error", nc.grad_check(loss, [W1, W2]))

# Fan-out accumulates: y = a * a has gradient 2a.
a = Tensor(np.array([1.5, -2.0]), requires_grad=True)
nc.backward(nc.sum_all(a * a))
print("d(a*a)/da", a.grad)
