import numpy as np
import pytest

from wstg.autodiff import Tensor
from wstg.encoders import EncodedVideo
from wstg.errors import InputError
from wstg.fine import (
    FineHead,
    expand,
    fine_loss,
    frame_scores,
    video_sentence_score,
)
from wstg.gradcheck import check_gradients
from wstg.layers import Affine, init_affine
from wstg.proposals import Segment


def affine(rng, n_in, n_out):
    return Affine(Tensor(rng.normal(size=(n_out, n_in))), Tensor(rng.normal(size=(1, n_out))))


def make_head(rng, hidden, trainable=False):
    builder = (lambda i, o: init_affine(rng, i, o, 1.0 / np.sqrt(hidden))) if trainable \
        else (lambda i, o: affine(rng, i, o))
    return FineHead(
        frame_map=builder(2 * hidden, hidden),
        sent_map=builder(2 * hidden, hidden),
        fuse_map=builder(2 * hidden, hidden),
        score_head=builder(3 * hidden, 1),
    )


def encoded_video(rng, frames, hidden):
    return EncodedVideo(
        hidden=Tensor(rng.normal(size=(frames, 2 * hidden))),
        projected=Tensor(rng.normal(size=(frames, hidden))),
    )


def scalar(x):
    return Tensor(np.array([[float(x)]]))


class TestExpand:
    def test_zero_rate_is_identity(self):
        out = expand(Segment(10, 20), 0.0, 50)
        assert out.window == Segment(10, 20)
        assert out.source == Segment(10, 20)

    def test_half_rate_widens_by_half_length(self):
        out = expand(Segment(30, 49), 0.5, 100)
        assert out.window == Segment(20, 59)

    def test_large_rate_is_clamped(self):
        out = expand(Segment(2, 21), 1.8, 30)
        assert out.window == Segment(0, 29)

    def test_monotone_in_rate(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            frames = int(rng.integers(2, 80))
            start = int(rng.integers(0, frames))
            end = int(rng.integers(start, frames))
            r1, r2 = sorted(rng.uniform(0, 3, size=2))
            w1 = expand(Segment(start, end), float(r1), frames).window
            w2 = expand(Segment(start, end), float(r2), frames).window
            assert w2.start <= w1.start and w1.end <= w2.end
            assert 0 <= w2.start and w2.end < frames

    def test_negative_rate_rejected(self):
        with pytest.raises(InputError):
            expand(Segment(0, 1), -0.5, 10)


class TestFrameScores:
    def test_zero_params_give_bias_everywhere(self):
        rng = np.random.default_rng(1)
        hidden = 4
        enc = encoded_video(rng, 8, hidden)
        zero = lambda i, o: Affine(Tensor(np.zeros((o, i))), Tensor(np.zeros((1, o))))
        head = FineHead(zero(8, 4), zero(8, 4), zero(8, 4), zero(12, 1))
        head.score_head.bias.data[0, 0] = 0.75
        window = expand(Segment(2, 5), 0.0, 8)
        out = frame_scores(enc, Tensor(rng.normal(size=(1, 8))), window, head)
        np.testing.assert_array_equal(out.values.data, np.full((4, 1), 0.75))

    def test_identical_frames_score_identically(self):
        rng = np.random.default_rng(2)
        hidden = 4
        row = rng.normal(size=2 * hidden)
        enc = EncodedVideo(hidden=Tensor(np.tile(row, (6, 1))),
                           projected=Tensor(np.zeros((6, hidden))))
        head = make_head(rng, hidden)
        out = frame_scores(enc, Tensor(rng.normal(size=(1, 8))), expand(Segment(0, 5), 0.0, 6), head)
        np.testing.assert_allclose(out.values.data, np.full((6, 1), out.values.data[0, 0]),
                                   atol=1e-12)

    def test_matches_per_frame_oracle(self):
        rng = np.random.default_rng(3)
        hidden = 4
        enc = encoded_video(rng, 7, hidden)
        head = make_head(rng, hidden)
        sent = rng.normal(size=(1, 2 * hidden))
        window = expand(Segment(2, 5), 0.0, 7)
        out = frame_scores(enc, Tensor(sent), window, head)

        f_s = head.sent_map.weight.data @ sent[0] + head.sent_map.bias.data[0]
        for i, t in enumerate(range(2, 6)):
            f_v = head.frame_map.weight.data @ enc.hidden.data[t] + head.frame_map.bias.data[0]
            joint = np.concatenate([f_v, f_s])
            fused = np.concatenate(
                [f_v + f_s, f_v * f_s,
                 head.fuse_map.weight.data @ joint + head.fuse_map.bias.data[0]]
            )
            expected = head.score_head.weight.data @ fused + head.score_head.bias.data[0]
            np.testing.assert_allclose(out.values.data[i], expected, atol=1e-12)


class TestVideoSentenceScore:
    def test_single_frame(self):
        rng = np.random.default_rng(4)
        head = make_head(rng, 4)
        enc = encoded_video(rng, 3, 4)
        out = frame_scores(enc, Tensor(rng.normal(size=(1, 8))), expand(Segment(1, 1), 0.0, 3), head)
        assert video_sentence_score(out).data.item() == out.values.data[0, 0]

    def test_picks_maximum(self):
        fs_values = Tensor(np.array([[-1.0], [3.0], [0.0]]))
        fake = type("S", (), {"values": fs_values})()
        assert video_sentence_score(fake).data.item() == 3.0

    def test_matches_loop_oracle_and_permutation_invariant(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=(9, 1))
        fake = type("S", (), {"values": Tensor(vals)})()
        best = max(v for [v] in vals.tolist())
        assert video_sentence_score(fake).data.item() == best
        shuffled = type("S", (), {"values": Tensor(rng.permutation(vals))})()
        assert video_sentence_score(shuffled).data.item() == best


class TestFineLoss:
    def test_zero_when_positive_clears_margin(self):
        loss = fine_loss(scalar(5.0), scalar(1.0), scalar(2.0), margin=1.0)
        assert loss.data.item() == 0.0

    def test_all_equal_gives_twice_margin(self):
        loss = fine_loss(scalar(0.3), scalar(0.3), scalar(0.3), margin=1.0)
        assert loss.data.item() == pytest.approx(2.0)

    def test_arithmetic_case(self):
        loss = fine_loss(scalar(0.2), scalar(0.5), scalar(0.1), margin=1.0)
        assert loss.data.item() == pytest.approx(2.2)

    def test_nonnegative_and_zero_condition(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            pos, ns, nv = rng.normal(size=3)
            margin = float(rng.uniform(0.1, 2.0))
            loss = fine_loss(scalar(pos), scalar(ns), scalar(nv), margin).data.item()
            assert loss >= 0.0
            clears = pos >= ns + margin and pos >= nv + margin
            assert (loss == 0.0) == clears

    def test_invalid_margin(self):
        with pytest.raises(InputError):
            fine_loss(scalar(1), scalar(0), scalar(0), margin=0.0)

    def test_gradient_through_frame_scores(self):
        rng = np.random.default_rng(7)
        hidden = 4
        head = make_head(rng, hidden, trainable=True)
        enc = encoded_video(rng, 8, hidden)
        sent_pos = Tensor(rng.normal(size=(1, 2 * hidden)))
        sent_neg = Tensor(rng.normal(size=(1, 2 * hidden)))
        window = expand(Segment(1, 5), 0.3, 8)
        params = [head.frame_map.weight, head.frame_map.bias, head.sent_map.weight,
                  head.fuse_map.weight, head.score_head.weight, head.score_head.bias]

        def fn(_):
            pos = video_sentence_score(frame_scores(enc, sent_pos, window, head))
            neg = video_sentence_score(frame_scores(enc, sent_neg, window, head))
            return fine_loss(pos, neg, neg, margin=1.0)

        res = check_gradients(fn, params, rel_tol=1e-4, max_coords_per_input=6,
                              rng=np.random.default_rng(2))
        assert res.ok(), res
