"""Spot runs of the gradient-check registry (a few seeds per case).

The acceptance suite runs the same registry over 20 seeds; this file keeps
failures localized to a named case during development.
"""

import pytest

import gradsuite

TOL = 1e-4


@pytest.mark.parametrize("name,builder", gradsuite.OP_CASES, ids=[n for n, _ in gradsuite.OP_CASES])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_op_gradients(name, builder, seed):
    err = gradsuite.run_case(builder, seed)
    assert err < TOL, f"{name}[seed={seed}]: rel error {err:.3e}"


@pytest.mark.parametrize(
    "name,builder", gradsuite.MODULE_CASES, ids=[n for n, _ in gradsuite.MODULE_CASES]
)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_module_gradients(name, builder, seed):
    err = gradsuite.run_case(builder, seed)
    assert err < TOL, f"{name}[seed={seed}]: rel error {err:.3e}"
