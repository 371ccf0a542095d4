"""Tour of the tensor engine: building blocks, gradients, and Adam.

Run:  python3 demos/01_autodiff_and_optimizer.py
"""

import numpy as np

from mstaf import tensor as T
from mstaf.gradcheck import max_rel_error, numerical_gradient
from mstaf.optim import AdamState, adam_step, collect_grads, zero_grads

rng = np.random.default_rng(0)

# ---------------------------------------------------------------------------
# 1. Tensors record the ops applied to them; backward() fills in gradients.
# ---------------------------------------------------------------------------
x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
loss = T.tensor_sum(T.mul(x, x))  # sum of squares
loss.backward()
print("d/dx sum(x^2) at [1,2,3] ->", x.grad)  # [2, 4, 6]

# ---------------------------------------------------------------------------
# 2. The same machinery drives every kernel the network needs. Here is a
#    small attention-like computation, checked against finite differences.
# ---------------------------------------------------------------------------
q = T.Tensor(rng.normal(size=(1, 4, 8)).astype(np.float32), requires_grad=True)
k = T.Tensor(rng.normal(size=(1, 6, 8)).astype(np.float32))
v = T.Tensor(rng.normal(size=(1, 6, 8)).astype(np.float32))
scores = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(8))
out = T.matmul(T.softmax(scores, axis=2), v)
T.tensor_mean(out).backward()
analytic = q.grad.copy()


def probe(q_data):
    qq = T.Tensor(q_data, dtype=np.float64)
    s = T.mul(T.matmul(qq, T.transpose(T.Tensor(k.numpy(), dtype=np.float64), (0, 2, 1))), 1.0 / np.sqrt(8))
    o = T.matmul(T.softmax(s, axis=2), T.Tensor(v.numpy(), dtype=np.float64))
    return o.numpy().mean()


numeric = numerical_gradient(probe, q.numpy().astype(np.float64), step=1e-5)
print("attention gradient vs finite differences: rel err =", f"{max_rel_error(analytic, numeric):.2e}")

# ---------------------------------------------------------------------------
# 3. Adam with bias correction drives training. Minimize (x - 3)^2.
# ---------------------------------------------------------------------------
params = {"x": T.Tensor([0.0], requires_grad=True)}
state = AdamState.for_params(params)
for step in range(100):
    zero_grads(params)
    diff = T.sub(params["x"], 3.0)
    T.tensor_sum(T.mul(diff, diff)).backward()
    adam_step(params, collect_grads(params), state, lr=0.1)
print("argmin of (x-3)^2 after 100 Adam steps:", params["x"].numpy())

# ---------------------------------------------------------------------------
# 4. float64 mode exists for tight numeric verification.
# ---------------------------------------------------------------------------
with T.using_dtype(np.float64):
    y = T.Tensor(rng.normal(size=(3, 5)))
    print("softmax rows sum to", T.softmax(y, axis=1).numpy().sum(axis=1))
