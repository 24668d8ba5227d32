import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import global_loss_loop
from parapair import numerics as nx
from parapair.errors import ContractError, DimensionError, EmptySequenceError
from parapair.losses import (LossReport, active_hinges, batch_objective, global_pairwise,
                             global_pairwise_grad_closed_form, hinge_matrix, local_ce,
                             local_ce_rows, ranking_accuracy, total_loss)
from parapair.numerics import Tensor
from parapair.variants import VARIANT_NAMES, variant


def scaled_active(rng, n, d):
    """Random embeddings shrunk so every off-diagonal hinge is on."""
    ep = rng.normal(size=(n, d))
    eg = rng.normal(size=(n, d))
    scale = 0.9 / max(1.0, 2 * np.abs(ep).sum(1).max() * np.abs(eg).sum(1).max())
    return ep * math.sqrt(scale), eg * math.sqrt(scale)


class TestLocal:
    def test_uniform_logits(self):
        z = Tensor(np.zeros((3, 4)))
        assert local_ce(z, [1, 2, 3, 2]).data == pytest.approx(math.log(4), abs=1e-15)

    def test_perfect_prediction_tends_to_zero(self):
        z = np.full((2, 5), -50.0)
        z[0, 4], z[1, 2] = 50.0, 50.0
        assert local_ce(Tensor(z), [1, 4, 2]).data < 1e-40

    def test_empty_target(self):
        with pytest.raises(EmptySequenceError):
            local_ce(Tensor(np.zeros((1, 4))), [1])

    def test_rows_ignore_padding(self):
        rng = np.random.default_rng(0)
        logits = [Tensor(rng.normal(size=(2, 6))) for _ in range(4)]
        targets = np.array([[1, 4, 5, 2, 0], [1, 3, 2, 0, 0]])
        rows = local_ce_rows(logits, targets, [4, 3]).data
        for k, n in enumerate((4, 3)):
            single = local_ce(nx.stack([z.data[k] for z in logits[:n - 1]]), targets[k, :n]).data
            assert rows[k] == pytest.approx(float(single), rel=1e-14)


class TestGlobal:
    def test_adversarial_two_by_two(self):
        ep = Tensor([[1.0, 0.0], [0.0, 1.0]])
        eg = Tensor([[0.0, 1.0], [1.0, 0.0]])
        assert global_pairwise(ep, eg).data == 6.0

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_orthonormal_matched(self, n):
        e = Tensor(np.eye(n))
        assert global_pairwise(e, e).data == float(n)
        assert active_hinges(e, e) == 0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            global_pairwise(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3))))

    def test_diagonal_is_margin(self):
        rng = np.random.default_rng(1)
        h = hinge_matrix(Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 3)))).data
        assert np.all(np.diag(h) == 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
    def test_against_double_loop(self, n, d, seed):
        rng = np.random.default_rng(seed)
        ep, eg = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        got = float(global_pairwise(Tensor(ep), Tensor(eg)).data)
        assert abs(got - global_loss_loop(ep.tolist(), eg.tolist())) <= 1e-12 * max(1.0, abs(got))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2**31))
    def test_lower_bound(self, n, seed):
        rng = np.random.default_rng(seed)
        ep, eg = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        value = float(global_pairwise(Tensor(ep), Tensor(eg)).data)
        assert value >= n
        assert (value == n) == (active_hinges(ep, eg) == 0)

    def test_matched_scaled_embeddings_reach_n(self):
        e = 10.0 * np.eye(4)
        assert global_pairwise(Tensor(e), Tensor(e)).data == 4.0

    def test_ranking_accuracy(self):
        e = np.eye(3)
        assert ranking_accuracy(e, e) == 1.0
        assert ranking_accuracy(e, e[[1, 0, 2]]) == pytest.approx(1 / 3)
        assert ranking_accuracy(np.ones((2, 2)), np.ones((2, 2))) == 0.0


class TestClosedForm:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_autodiff(self, seed):
        rng = np.random.default_rng(seed)
        n, d = 2 + seed % 5, (2, 8)[seed % 2]
        ep, eg = scaled_active(rng, n, d)
        assert active_hinges(ep, eg) == n * (n - 1)
        a, b = Tensor(ep, requires_grad=True), Tensor(eg, requires_grad=True)
        with nx.Graph() as g:
            loss = global_pairwise(a, b)
        g.backward(loss)
        d_ep, d_eg = global_pairwise_grad_closed_form(ep, eg, check=True)
        assert np.max(np.abs(a.grad - d_ep)) <= 1e-10
        assert np.max(np.abs(b.grad - d_eg)) <= 1e-10

    def test_check_rejects_inactive(self):
        e = 10.0 * np.eye(3)
        with pytest.raises(ContractError):
            global_pairwise_grad_closed_form(e, e, check=True)

    def test_row_formula(self):
        rng = np.random.default_rng(7)
        ep, eg = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        d_ep, _ = global_pairwise_grad_closed_form(ep, eg)
        for i in range(4):
            want = sum(eg[j] - eg[i] for j in range(4) if j != i)
            assert np.allclose(d_ep[i], want, rtol=1e-14)


class TestComposition:
    def test_edlp_sum(self):
        r = LossReport(local=1.0, global_=2.0, total=0.0)
        assert total_loss([r], "EDLP") == 3.0
        assert total_loss([r], "EDL") == 1.0
        assert total_loss([r], "EDP") == 2.0

    def test_missing_term(self):
        with pytest.raises(ContractError):
            total_loss([LossReport(local=None, global_=1.0, total=0.0)], "EDLP")
        with pytest.raises(ContractError):
            total_loss([], "EDL")

    def test_unknown_variant(self):
        with pytest.raises(ContractError, match="EDLPS"):
            variant("EDX")

    def test_variant_flags(self):
        assert [variant(n).code for n in VARIANT_NAMES] == list(range(8))
        s = variant("EDLPGS")
        assert s.uses_local and s.uses_pairwise and s.adversarial_alternation
        assert s.shared_discriminator and not s.separate_discriminator
        assert not variant("EDL").uses_global and variant("EDG").uses_global

    def test_batch_objective(self):
        rows = Tensor([0.5, 1.5])
        hinge = hinge_matrix(Tensor(np.eye(2)), Tensor(np.eye(2)))
        obj, rep = batch_objective(rows, hinge, variant("EDLP"))
        assert float(obj.data) == pytest.approx((2.0 + 2.0) / 2)
        assert rep.local == 1.0 and rep.global_ == 1.0 and rep.effective == 0.0
        assert rep.as_dict()["global"] == 1.0
