import numpy as np
import pytest

from coex import ndgrad as nd

FD_STEP = 1e-5
FD_TOL = 1e-4
# gradients smaller than this are compared on an absolute scale; central
# differences cannot resolve relative error on values near zero
FD_FLOOR = 1e-6


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FD_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def numeric_grad(fn, arrays, index, h=FD_STEP):
    """Central differences of scalar ``fn(*arrays)`` w.r.t. ``arrays[index]``."""
    x = arrays[index]
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = fn(*arrays)
        x[i] = old - h
        down = fn(*arrays)
        x[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def check_op(op, arrays, rng=None):
    """Max relative error of ``op``'s gradients (all inputs) on a random projection.

    The scalar loss is ``sum(op(*inputs) * R)`` with fixed random ``R`` so
    every output entry contributes to the gradient.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    rng = rng or np.random.default_rng(0)
    out = op(*[nd.Tensor(a) for a in arrays])
    weights = rng.standard_normal(out.shape)

    def scalar(*xs):
        return float(np.sum(op(*[nd.Tensor(a) for a in xs]).data * weights))

    tensors = [nd.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = nd.sum_(nd.mul(op(*tensors), weights))
    loss.backward()
    worst = 0.0
    for j, t in enumerate(tensors):
        worst = max(worst, relative_error(t.grad, numeric_grad(scalar, arrays, j)))
    return worst


def away_from_zero(rng, shape, margin=1e-3):
    """Normal samples pushed off the kink at zero (for relu/abs/elu checks)."""
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin * 2, x)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record ``(number, title, passed, detail)`` for the end-of-session table."""

    def record(number, title, passed, detail=""):
        _CRITERIA[number] = (title, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
