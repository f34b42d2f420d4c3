import numpy as np
import pytest

from wstg import autodiff as ad
from wstg.autodiff import Tensor
from wstg.encoders import bilstm, encode_sentence, encode_video, project_frames
from wstg.errors import EmptyInputError, InputError
from wstg.gradcheck import check_gradients
from wstg.layers import Affine, LstmCellParams, init_affine, init_lstm_cell


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_oracle(xs, w_input, w_hidden, bias, reverse=False):
    """Step-by-step cell unroll in plain numpy (gates: input, forget,
    candidate, output)."""
    hidden = w_hidden.shape[1]
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    out = np.zeros((len(xs), hidden))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        pre = w_input @ xs[t] + w_hidden @ h + bias
        i = sigmoid(pre[:hidden])
        f = sigmoid(pre[hidden : 2 * hidden])
        g = np.tanh(pre[2 * hidden : 3 * hidden])
        o = sigmoid(pre[3 * hidden :])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def bilstm_oracle(xs, fwd, bwd):
    f = lstm_oracle(xs, fwd.w_input.data, fwd.w_hidden.data, fwd.bias.data[0])
    b = lstm_oracle(xs, bwd.w_input.data, bwd.w_hidden.data, bwd.bias.data[0], reverse=True)
    return np.concatenate([f, b], axis=1)


def make_cell(rng, n_in, hidden):
    return init_lstm_cell(rng, n_in, hidden, scale=1.0 / np.sqrt(hidden))


class TestProjectFrames:
    def test_zero_weights_gives_bias_rows(self):
        proj = Affine(Tensor(np.zeros((3, 4))), Tensor([[1.0, 2.0, 3.0]]))
        out = project_frames(Tensor(np.random.default_rng(0).normal(size=(5, 4))), proj)
        np.testing.assert_array_equal(out.data, np.tile([1.0, 2.0, 3.0], (5, 1)))

    def test_identity_projection(self):
        x = np.random.default_rng(1).normal(size=(4, 3))
        proj = Affine(Tensor(np.eye(3)), Tensor(np.zeros((1, 3))))
        np.testing.assert_allclose(project_frames(Tensor(x), proj).data, x, atol=1e-15)

    def test_matches_rowwise_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 4))
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=(1, 3))
        out = project_frames(Tensor(x), Affine(Tensor(w), Tensor(b)))
        expected = np.stack([w @ row + b[0] for row in x])
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_empty_rejected(self):
        proj = Affine(Tensor(np.zeros((3, 4))), Tensor(np.zeros((1, 3))))
        with pytest.raises(EmptyInputError):
            project_frames(Tensor(np.zeros((0, 4))), proj)


class TestBilstm:
    def test_single_step_shape(self):
        rng = np.random.default_rng(3)
        fwd, bwd = make_cell(rng, 4, 5), make_cell(rng, 4, 5)
        out = bilstm(Tensor(rng.normal(size=(1, 4))), fwd, bwd)
        assert out.shape == (1, 10)

    def test_matches_unrolled_oracle(self):
        rng = np.random.default_rng(4)
        fwd, bwd = make_cell(rng, 3, 4), make_cell(rng, 3, 4)
        xs = rng.normal(size=(3, 3))
        out = bilstm(Tensor(xs), fwd, bwd)
        np.testing.assert_allclose(out.data, bilstm_oracle(xs, fwd, bwd), atol=1e-12)

    def test_reversal_symmetry(self):
        # Running the reversed sequence with swapped direction params makes
        # the forward half reproduce the original backward half, reversed.
        rng = np.random.default_rng(5)
        fwd, bwd = make_cell(rng, 3, 4), make_cell(rng, 3, 4)
        xs = rng.normal(size=(5, 3))
        hidden = 4
        original = bilstm(Tensor(xs), fwd, bwd).data
        swapped = bilstm(Tensor(xs[::-1].copy()), bwd, fwd).data
        np.testing.assert_allclose(
            swapped[:, :hidden], original[::-1, hidden:], atol=1e-12
        )

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        fwd, bwd = make_cell(rng, 2, 3), make_cell(rng, 2, 3)
        xs = rng.normal(size=(4, 2))
        a = bilstm(Tensor(xs), fwd, bwd).data
        b = bilstm(Tensor(xs), fwd, bwd).data
        assert np.array_equal(a, b)

    def test_empty_rejected(self):
        rng = np.random.default_rng(7)
        fwd, bwd = make_cell(rng, 2, 3), make_cell(rng, 2, 3)
        with pytest.raises(EmptyInputError):
            bilstm(Tensor(np.zeros((0, 2))), fwd, bwd)


class TestEncodeSentence:
    def test_single_token_sentence_vector(self):
        rng = np.random.default_rng(8)
        embedding = Tensor(rng.normal(size=(10, 3)))
        fwd, bwd = make_cell(rng, 3, 4), make_cell(rng, 3, 4)
        enc = encode_sentence([2], embedding, fwd, bwd)
        assert enc.states.shape == (1, 8)
        np.testing.assert_array_equal(enc.sentence.data[0], enc.states.data[0])

    def test_sentence_vector_is_final_states(self):
        rng = np.random.default_rng(9)
        embedding = Tensor(rng.normal(size=(10, 3)))
        fwd, bwd = make_cell(rng, 3, 4), make_cell(rng, 3, 4)
        enc = encode_sentence([1, 5, 3], embedding, fwd, bwd)
        np.testing.assert_array_equal(enc.sentence.data[0, :4], enc.states.data[-1, :4])
        np.testing.assert_array_equal(enc.sentence.data[0, 4:], enc.states.data[0, 4:])

    def test_identical_tokens_without_recurrence_give_equal_states(self):
        # Cutting recurrence in an LSTM needs zero hidden weights and a
        # closed forget gate, otherwise the cell state keeps accumulating.
        rng = np.random.default_rng(10)
        embedding = Tensor(rng.normal(size=(6, 3)))
        hidden = 4

        def cell():
            w_input = Tensor(rng.normal(size=(4 * hidden, 3)))
            bias = np.zeros((1, 4 * hidden))
            bias[0, hidden : 2 * hidden] = -40.0
            return LstmCellParams(w_input, Tensor(np.zeros((4 * hidden, hidden))), Tensor(bias))

        enc = encode_sentence([2, 2, 2, 2], embedding, cell(), cell())
        for row in enc.states.data[1:]:
            np.testing.assert_allclose(row, enc.states.data[0], atol=1e-12)
        assert np.abs(enc.states.data).max() > 0

    def test_matches_unrolled_oracle(self):
        rng = np.random.default_rng(11)
        embedding = Tensor(rng.normal(size=(12, 3)))
        fwd, bwd = make_cell(rng, 3, 4), make_cell(rng, 3, 4)
        tokens = [4, 0, 11, 7, 2]
        enc = encode_sentence(tokens, embedding, fwd, bwd)
        xs = embedding.data[tokens]
        np.testing.assert_allclose(enc.states.data, bilstm_oracle(xs, fwd, bwd), atol=1e-12)

    def test_out_of_vocabulary_rejected(self):
        rng = np.random.default_rng(12)
        embedding = Tensor(rng.normal(size=(5, 3)))
        fwd, bwd = make_cell(rng, 3, 4), make_cell(rng, 3, 4)
        with pytest.raises(InputError):
            encode_sentence([1, 5], embedding, fwd, bwd)
        with pytest.raises(EmptyInputError):
            encode_sentence([], embedding, fwd, bwd)


class TestEncoderGradients:
    def test_full_encoder_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        hidden = 8
        scale = 1.0 / np.sqrt(hidden)
        proj = init_affine(rng, 5, hidden, scale)
        fwd = init_lstm_cell(rng, hidden, hidden, scale)
        bwd = init_lstm_cell(rng, hidden, hidden, scale)
        feats = Tensor(rng.normal(size=(4, 5)))
        params = [proj.weight, proj.bias, fwd.w_input, fwd.w_hidden, fwd.bias,
                  bwd.w_input, bwd.w_hidden, bwd.bias]

        def fn(_):
            enc = encode_video(feats, proj, fwd, bwd)
            return ad.sum_all(ad.tanh(enc.hidden))

        res = check_gradients(fn, params, rel_tol=1e-4, max_coords_per_input=6,
                              rng=np.random.default_rng(0))
        assert res.ok(), res

    def test_video_encoder_shapes(self):
        rng = np.random.default_rng(14)
        hidden = 4
        proj = init_affine(rng, 6, hidden, 0.5)
        fwd = init_lstm_cell(rng, hidden, hidden, 0.5)
        bwd = init_lstm_cell(rng, hidden, hidden, 0.5)
        for frames in (1, 2, 7):
            enc = encode_video(Tensor(rng.normal(size=(frames, 6))), proj, fwd, bwd)
            assert enc.hidden.shape == (frames, 2 * hidden)
            assert enc.projected.shape == (frames, hidden)
