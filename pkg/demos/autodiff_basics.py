"""A tour of the gradient tape.

Everything in the network reduces to Tensors recorded on a Tape. This
script differentiates a tiny expression by hand-checkable math, then
cross-checks a fancier one with central finite differences.
"""

import numpy as np

from hansnet.gradcheck import DEFAULT_TOL, max_rel_error
from hansnet.tensor import Tape, Tensor, exp, matmul, mul, reduce_sum, tanh

# d/dx sum(x * x) = 2x
x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
with Tape() as tape:
    tape.backward(reduce_sum(mul(x, x)))
print("x        ", x.data)
print("d sum(x^2)", x.grad, "(expect 2x)")

# a composite: sum(tanh(A @ x) * exp(-x)); no closed form needed,
# the checker compares reverse-mode against finite differences
rng = np.random.default_rng(0)
A = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
v = Tensor(rng.standard_normal((3, 1)), requires_grad=True)


def f():
    return reduce_sum(mul(tanh(matmul(A, v)), exp(mul(v, Tensor(-1.0)))))


err = max_rel_error(f, [A, v])
print(f"\nfinite-difference check: max rel err {err:.2e} "
      f"({'ok' if err < DEFAULT_TOL else 'FAILED'})")

# gradients accumulate across parameter reuse: v enters f twice, the
# tape sums both paths automatically
with Tape() as tape:
    tape.backward(f())
print("dv has both paths:", np.round(v.grad.ravel(), 4))
