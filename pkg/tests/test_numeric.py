import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch import nn

from src.errors import IngestionError, NumericalDivergenceError, ShapeError
from src.numeric import (
    ParamStore,
    RngStream,
    adam_step,
    finite_diff_grad,
    gemm,
    gradcheck_tensor,
    load_checkpoint,
    make_adam,
    relative_error,
    save_checkpoint,
    sigmoid,
    softmax,
    tanh,
)


class Scalar(nn.Module):
    def __init__(self, value: float):
        super().__init__()
        self.x = nn.Parameter(torch.tensor([value]))


class TestElementwise:
    def test_basics(self):
        assert float(sigmoid(torch.tensor(0.0))) == 0.5
        assert float(tanh(torch.tensor(0.0))) == 0.0
        np.testing.assert_allclose(softmax(torch.full((3,), 7.0)).numpy(), [1 / 3] * 3, atol=1e-15)

    def test_softmax_large_inputs(self):
        out = softmax(torch.tensor([1000.0, 1000.0]))
        assert torch.isfinite(out).all()

    def test_masked_softmax(self):
        out = softmax(torch.tensor([[1.0, 2.0, 3.0]]), mask=torch.tensor([[True, True, False]]))
        assert out[0, 2] == 0.0
        assert float(out.sum()) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
    def test_softmax_normalized(self, values):
        out = softmax(torch.tensor(values))
        assert abs(float(out.sum()) - 1.0) <= 1e-12
        assert (out > 0).all()

    def test_gemm_shape_mismatch(self):
        with pytest.raises(ShapeError):
            gemm(torch.zeros(2, 3), torch.zeros(2, 3))


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        module = Scalar(1.5)
        store = ParamStore(module)
        opt = make_adam(module.parameters())
        module.x.grad = torch.zeros(1)
        adam_step(store, opt)
        assert float(module.x) == 1.5

    def test_first_step_is_lr(self):
        module = Scalar(0.0)
        store = ParamStore(module)
        opt = make_adam(module.parameters(), lr=1e-3)
        module.x.grad = torch.ones(1)
        adam_step(store, opt)
        assert float(module.x) == pytest.approx(-1e-3, rel=1e-6)

    def test_identical_stores_identical_updates(self):
        a, b = Scalar(0.3), Scalar(0.3)
        for m in (a, b):
            opt = make_adam(m.parameters())
            m.x.grad = torch.tensor([0.7])
            adam_step(ParamStore(m), opt)
        assert float(a.x) == float(b.x)

    def test_non_finite_gradient_aborts(self):
        module = Scalar(2.0)
        store = ParamStore(module)
        opt = make_adam(module.parameters())
        module.x.grad = torch.tensor([float('nan')])
        with pytest.raises(NumericalDivergenceError) as err:
            adam_step(store, opt)
        assert err.value.tensor_name == 'x'
        assert float(module.x) == 2.0


class TestFiniteDifferences:
    def test_square(self):
        module = Scalar(3.0)
        grad = finite_diff_grad(lambda: module.x.sum() ** 2, ParamStore(module), 'x', h=1e-5)
        assert float(grad) == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        module = Scalar(3.0)
        grad = finite_diff_grad(lambda: torch.tensor(4.0), ParamStore(module), 'x', h=1e-5)
        assert float(grad) == 0.0

    def test_sigmoid_at_zero(self):
        module = Scalar(0.0)
        grad = finite_diff_grad(lambda: torch.sigmoid(module.x).sum(), ParamStore(module), 'x', h=1e-5)
        assert float(grad) == pytest.approx(0.25, abs=1e-6)

    def test_gradcheck_agrees_with_autograd(self):
        module = nn.Linear(4, 3)
        x = torch.randn(5, 4, generator=torch.Generator().manual_seed(0))
        store = ParamStore(module)
        loss_fn = lambda: torch.tanh(module(x)).pow(2).sum()
        for name in ('weight', 'bias'):
            result = gradcheck_tensor(loss_fn, store, name)
            assert result.max_rel_err < 1e-4
            assert result.checked == min(100, store.tensor(name).numel())

    def test_roundoff_floor_is_reported(self):
        module = nn.Module()
        module.x = nn.Parameter(torch.full((3,), 1e-6))
        store = ParamStore(module)
        # the offset swamps the tiny gradient in the central difference
        loss_fn = lambda: 1e8 + (module.x ** 2).sum()
        floored = gradcheck_tensor(loss_fn, store, 'x')
        assert floored.max_rel_err == 0.0
        assert floored.raw_max_rel_err > 1e-4
        assert floored.floored == floored.checked == 3

        strict = gradcheck_tensor(loss_fn, store, 'x', floor=False)
        assert strict.max_rel_err == strict.raw_max_rel_err > 1e-4
        assert strict.floored == 0

    def test_relative_error(self):
        np.testing.assert_allclose(relative_error([1.0, 0.0], [1.0, 0.0]), [0.0, 0.0])
        assert relative_error([1.0], [3.0])[0] == pytest.approx(0.5)


class TestParamStore:
    def test_checksum_tracks_changes(self):
        module = nn.Linear(2, 2)
        store = ParamStore(module)
        before = store.checksum()
        before_weight = store.checksum(['weight'])
        with torch.no_grad():
            module.bias.add_(1.0)
        assert store.checksum(['weight']) == before_weight
        assert store.checksum() != before

    def test_snapshot_restore(self):
        module = nn.Linear(2, 2)
        store = ParamStore(module)
        snap = store.snapshot()
        with torch.no_grad():
            module.weight.zero_()
        store.restore(snap)
        assert torch.equal(module.weight, snap['weight'])

    def test_unknown_tensor(self):
        with pytest.raises(KeyError):
            ParamStore(nn.Linear(2, 2)).tensor('nope')


def test_rng_stream_determinism():
    a, b = RngStream(7), RngStream(7)
    assert torch.equal(a.normal(3, 2), b.normal(3, 2))
    assert a.counter == 6
    assert a.spawn(1).seed == b.spawn(1).seed != a.spawn(2).seed


def test_checkpoint_round_trip(tmp_path):
    tensors = {'w': torch.arange(6.0).view(2, 3)}
    save_checkpoint(str(tmp_path), tensors, {'seed': 3})
    loaded, manifest = load_checkpoint(str(tmp_path))
    assert torch.equal(loaded['w'], tensors['w'])
    assert manifest == {'seed': 3}


def test_missing_checkpoint(tmp_path):
    with pytest.raises(IngestionError):
        load_checkpoint(str(tmp_path))
