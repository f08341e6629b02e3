"""Shared numeric helpers for the test suite."""

import numpy as np

from spikedet.autograd import Tensor


def finite_difference(fn, arrays, h=1e-5):
    """Central-difference gradients of a scalar function of numpy arrays.

    ``fn`` takes the arrays and returns a float. Returns one gradient
    array per input.
    """
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base, dtype=np.float64)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = fn(*arrays)
            flat[i] = orig - h
            lo = fn(*arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(build_loss, arrays, h=1e-5, rtol=1e-4, atol=1e-7):
    """Compare autodiff gradients of ``build_loss`` against finite differences.

    ``build_loss`` maps a list of Tensors (requires_grad) to a scalar Tensor.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    loss.backward()

    def scalar_fn(*arrs):
        ts = [Tensor(a) for a in arrs]
        return float(build_loss(*ts).data)

    numeric = finite_difference(scalar_fn, [a.copy() for a in arrays], h=h)
    for t, num in zip(tensors, numeric):
        assert t.grad is not None
        denom = np.maximum(np.abs(num), np.abs(t.grad))
        err = np.abs(t.grad - num)
        ok = err <= atol + rtol * denom
        assert ok.all(), f"max abs err {err.max():.3e}, max rel {(err / (denom + 1e-12)).max():.3e}"


# acceptance-gate reporting: tests append (label, passed) tuples and the
# summary hook prints one line per criterion after the run, outside capture
ACCEPTANCE_LINES: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok in ACCEPTANCE_LINES:
        if ok is None:
            terminalreporter.write_line(f"       {label}")
        else:
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}")
