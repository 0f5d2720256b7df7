"""Central finite-difference gradient checks for autodiff modules."""
import numpy as np

from v2xest.autodiff import tensor as T
from v2xest.autodiff.tensor import Tensor

EPS = 1e-6
TOL = 1e-5


def rel_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, arr, eps=EPS):
    """d f / d arr by central differences; ``arr`` is perturbed in place."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def check_module(module, x, rng, prepare=None, output=None):
    """Worst relative error over the input and every parameter.

    The loss is a fixed random projection of the output.  ``prepare`` runs
    before every forward (e.g. to reseed dropout); ``output`` picks the
    tensor out of a tuple-returning forward.
    """
    output = output or (lambda out: out[0] if isinstance(out, tuple) else out)
    xt = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    if prepare:
        prepare()
    probe_shape = output(module(xt)).shape
    proj = rng.standard_normal(probe_shape)

    def loss_value():
        if prepare:
            prepare()
        with T.no_grad():
            return float(np.sum(output(module(Tensor(xt.data))).data * proj))

    if prepare:
        prepare()
    module.zero_grad()
    xt.grad = None
    loss = (output(module(xt)) * proj).sum()
    loss.backward()
    analytic = {"input": xt.grad.copy()}
    analytic.update({n: p.grad.copy() for n, p in module.named_parameters()})
    errors = {"input": rel_error(analytic["input"], numeric_grad(loss_value, xt.data))}
    for name, p in module.named_parameters():
        errors[name] = rel_error(analytic[name], numeric_grad(loss_value, p.data))
    return errors


def check_function(fn, inputs, rng):
    """Same check for a plain function of several tensors."""
    ts = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in inputs]
    proj = rng.standard_normal(fn(*ts).shape)
    (fn(*ts) * proj).sum().backward()
    errors = []
    for t in ts:
        def value():
            with T.no_grad():
                return float(np.sum(fn(*[Tensor(u.data) for u in ts]).data * proj))
        errors.append(rel_error(t.grad, numeric_grad(value, t.data)))
    return errors
