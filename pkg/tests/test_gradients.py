"""Finite-difference verification of every differentiable op (64-bit, h=1e-5)."""

import pytest

from ganclass import gradcheck

PER_OP_INSTANCES = 20


@pytest.mark.parametrize("op", sorted(gradcheck._OP_INSTANCES))
def test_op_gradients_match_finite_differences(op):
    result = gradcheck.check_op(op, instances=PER_OP_INSTANCES, seed=0)
    assert result.passed, f"{op}: max rel err {result.max_rel_err:.3e} >= {result.tolerance}"


def test_discriminator_loss_full_parameter_sweep():
    err = gradcheck.discriminator_loss_sweep(seed=0)
    assert err < gradcheck.TOLERANCE, f"max rel err {err:.3e}"


def test_generator_loss_full_parameter_sweep():
    err = gradcheck.generator_loss_sweep(seed=0)
    assert err < gradcheck.TOLERANCE, f"max rel err {err:.3e}"
