"""Conv kernel backends: numpy/numba parity and backend selection."""

import subprocess
import sys

import numpy as np
import pytest

from convqa import kernels
from convqa.kernels import conv_numpy

try:
    from convqa.kernels import conv_numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def random_case(rng, t=11, k=5, cin=3, cout=4, dtype=np.float64):
    xpad = rng.normal(size=(t + k - 1, cin)).astype(dtype)
    w = rng.normal(size=(k, cin, cout)).astype(dtype)
    b = rng.normal(size=cout).astype(dtype)
    gy = rng.normal(size=(t, cout)).astype(dtype)
    return xpad, w, b, gy


def reference_forward(xpad, w, b):
    t = xpad.shape[0] - w.shape[0] + 1
    out = np.zeros((t, w.shape[2]), dtype=xpad.dtype)
    for i in range(t):
        for j in range(w.shape[0]):
            out[i] += xpad[i + j] @ w[j]
    return out + b


@pytest.mark.parametrize("k,cin,cout", [(1, 1, 1), (3, 2, 5), (5, 4, 3),
                                        (20, 6, 1)])
def test_numpy_kernels_match_reference(rng, k, cin, cout):
    xpad, w, b, gy = random_case(rng, t=9, k=k, cin=cin, cout=cout)
    out = np.empty((9, cout))
    conv_numpy.conv1d_forward(xpad, w, b, out)
    np.testing.assert_allclose(out, reference_forward(xpad, w, b), atol=1e-12)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
@pytest.mark.parametrize("k,cin,cout", [(1, 1, 1), (3, 2, 5), (5, 4, 3),
                                        (20, 6, 1)])
def test_backends_agree(rng, k, cin, cout):
    xpad, w, b, gy = random_case(rng, t=13, k=k, cin=cin, cout=cout)

    out_np = np.empty((13, cout))
    out_nb = np.empty((13, cout))
    conv_numpy.conv1d_forward(xpad, w, b, out_np)
    conv_numba.conv1d_forward(xpad, w, b, out_nb)
    np.testing.assert_allclose(out_np, out_nb, atol=1e-12)

    gx_np = np.zeros_like(xpad)
    gx_nb = np.zeros_like(xpad)
    conv_numpy.conv1d_grad_input(gy, w, gx_np)
    conv_numba.conv1d_grad_input(gy, w, gx_nb)
    np.testing.assert_allclose(gx_np, gx_nb, atol=1e-12)

    gw_np = np.zeros_like(w)
    gw_nb = np.zeros_like(w)
    conv_numpy.conv1d_grad_weight(xpad, gy, gw_np)
    conv_numba.conv1d_grad_weight(xpad, gy, gw_nb)
    np.testing.assert_allclose(gw_np, gw_nb, atol=1e-12)


def test_grad_input_matches_transposed_conv(rng):
    # scattering grad_output through the kernel equals correlating the
    # flipped kernel over the padded grad
    xpad, w, b, gy = random_case(rng, t=10, k=3, cin=2, cout=3)
    gx = np.zeros_like(xpad)
    conv_numpy.conv1d_grad_input(gy, w, gx)
    expect = np.zeros_like(xpad)
    for i in range(gy.shape[0]):
        for j in range(w.shape[0]):
            expect[i + j] += gy[i] @ w[j].T
    np.testing.assert_allclose(gx, expect, atol=1e-12)


def _backend_in_subprocess(value):
    env_line = "import os; os.environ['CONVQA_BACKEND'] = %r; " % value \
        if value is not None else ""
    code = (env_line +
            "from convqa import kernels; print(kernels.backend_name())")
    return subprocess.run([sys.executable, "-c", code],
                          capture_output=True, text=True)


def test_backend_flag_numpy():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0 and proc.stdout.strip() == "numpy"


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
def test_backend_flag_numba():
    proc = _backend_in_subprocess("numba")
    assert proc.returncode == 0 and proc.stdout.strip() == "numba"


def test_backend_flag_invalid():
    proc = _backend_in_subprocess("fortran")
    assert proc.returncode != 0
    assert "CONVQA_BACKEND" in proc.stderr


def test_active_backend_exposed():
    assert kernels.backend_name() in ("numpy", "numba")
