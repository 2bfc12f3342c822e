import numpy as np
import pytest

import winoref.tensor as T
from winoref.encoder import EmbeddingStack
from winoref.scoring import ScoreConfig, windowed_bertscore
from winoref.tensor import Tensor

from conftest import finite_difference_grad, rel_err


def make_stack(rows, pad_extra=2, special_rows=None):
    """Stack with content rows 1..n (row 0 stands in for [CLS], row n+1 for
    [SEP]); optional extra pad rows are zeroed like the encoder does."""
    rows = np.asarray(rows, dtype=float)
    n, d = rows.shape
    L = n + 2 + pad_extra
    hidden = np.zeros((L, d))
    rng = np.random.default_rng(0)
    hidden[0] = special_rows[0] if special_rows is not None else rng.normal(size=d)
    hidden[1:n + 1] = rows
    hidden[n + 1] = special_rows[1] if special_rows is not None else rng.normal(size=d)
    attention = np.zeros(L, dtype=bool)
    attention[:n + 2] = True
    content = np.zeros(L, dtype=bool)
    content[1:n + 1] = True
    return EmbeddingStack(hidden=Tensor(hidden), attention_mask=attention,
                          content_mask=content)


def random_stack(rng, n, d=8, requires_grad=False):
    stack = make_stack(rng.normal(size=(n, d)))
    if requires_grad:
        stack.hidden.requires_grad = True
        stack.hidden.grad = np.zeros_like(stack.hidden.data)
    return stack


def brute_force_unwindowed(a_rows, b_rows):
    """Independent greedy-matching oracle over raw content rows."""
    def normalize(x):
        n = np.linalg.norm(x, axis=1, keepdims=True)
        return np.where(n > 0, x / np.where(n > 0, n, 1.0), 0.0)

    sim = normalize(a_rows) @ normalize(b_rows).T
    p = sim.max(axis=1).mean()
    r = sim.max(axis=0).mean()
    if abs(p + r) < 1e-12:
        return 0.0
    return 2 * p * r / (p + r)


def content_rows(stack):
    return stack.hidden.numpy()[stack.eligible()]


class TestScore:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(1)
        stack = random_stack(rng, 6)
        for w in (0, 1, 5, 100):
            got = windowed_bertscore(stack, stack, ScoreConfig(window_radius=w)).item()
            assert got == pytest.approx(1.0, abs=1e-6)

    def test_wide_window_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            na, nb = rng.integers(2, 9, size=2)
            a, b = random_stack(rng, int(na)), random_stack(rng, int(nb))
            got = windowed_bertscore(a, b, ScoreConfig(window_radius=64)).item()
            want = brute_force_unwindowed(content_rows(a), content_rows(b))
            assert got == pytest.approx(want, abs=1e-9), f"trial {trial}"

    def test_orthogonal_stacks_score_zero(self):
        a = make_stack(np.eye(8)[:3])
        b = make_stack(np.eye(8)[4:7])
        got = windowed_bertscore(a, b, ScoreConfig(window_radius=10)).item()
        assert got == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a, b = random_stack(rng, 5), random_stack(rng, 7)
            cfg = ScoreConfig(window_radius=int(rng.integers(0, 5)))
            ab = windowed_bertscore(a, b, cfg).item()
            ba = windowed_bertscore(b, a, cfg).item()
            assert ab == pytest.approx(ba, abs=1e-9)

    def test_monotone_in_window_radius(self):
        # per-position maxima are monotone in the radius; with positive
        # precision/recall (the regime real stacks live in) F1 follows
        rng = np.random.default_rng(4)
        for _ in range(50):
            a = make_stack(rng.normal(size=(6, 8)) + 1.2)
            b = make_stack(rng.normal(size=(6, 8)) + 1.2)
            scores = [windowed_bertscore(a, b, ScoreConfig(window_radius=w)).item()
                      for w in (0, 1, 2, 4, 8)]
            assert all(s2 >= s1 - 1e-12 for s1, s2 in zip(scores, scores[1:])), scores

    def test_precision_recall_maxima_monotone_on_raw_stacks(self):
        # the underlying claim holds for any stacks: each position's best
        # in-window match can only improve as the window grows
        rng = np.random.default_rng(14)
        for _ in range(20):
            ra, rb = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))

            def norm(x):
                return x / np.linalg.norm(x, axis=1, keepdims=True)

            sim = norm(ra) @ norm(rb).T
            prev_p = prev_r = -np.inf
            for w in (0, 1, 2, 4, 8):
                mask = np.abs(np.arange(6)[:, None] - np.arange(6)[None, :]) <= w
                p = np.where(mask, sim, -4.0).max(axis=1).mean()
                r = np.where(mask, sim, -4.0).max(axis=0).mean()
                assert p >= prev_p - 1e-12 and r >= prev_r - 1e-12
                prev_p, prev_r = p, r

    def test_pad_invariance(self):
        rng = np.random.default_rng(5)
        rows_a, rows_b = rng.normal(size=(5, 8)), rng.normal(size=(6, 8))
        cfg = ScoreConfig(window_radius=2)
        base = windowed_bertscore(make_stack(rows_a, pad_extra=0),
                                  make_stack(rows_b, pad_extra=0), cfg).item()
        padded = windowed_bertscore(make_stack(rows_a, pad_extra=7),
                                    make_stack(rows_b, pad_extra=3), cfg).item()
        assert base == pytest.approx(padded, abs=1e-12)

    def test_special_row_content_irrelevant_by_default(self):
        rng = np.random.default_rng(6)
        rows = rng.normal(size=(4, 8))
        cfg = ScoreConfig(window_radius=2)
        a1 = make_stack(rows, special_rows=np.ones((2, 8)))
        a2 = make_stack(rows, special_rows=-np.ones((2, 8)) * 9.0)
        b = random_stack(rng, 5)
        s1 = windowed_bertscore(a1, b, cfg).item()
        s2 = windowed_bertscore(a2, b, cfg).item()
        assert s1 == pytest.approx(s2, abs=1e-12)

    def test_include_special_changes_the_matching(self):
        rng = np.random.default_rng(7)
        a, b = random_stack(rng, 4), random_stack(rng, 4)
        narrow = windowed_bertscore(a, b, ScoreConfig(window_radius=2)).item()
        wide = windowed_bertscore(
            a, b, ScoreConfig(window_radius=2, include_special=True)).item()
        assert narrow != pytest.approx(wide, abs=1e-9)

    def test_empty_side_rejected(self):
        rng = np.random.default_rng(8)
        stack = random_stack(rng, 3)
        empty = make_stack(rng.normal(size=(2, 8)))
        empty.content_mask[:] = False
        with pytest.raises(ValueError, match="second"):
            windowed_bertscore(stack, empty, ScoreConfig())
        with pytest.raises(ValueError, match="first"):
            windowed_bertscore(empty, stack, ScoreConfig())

    def test_positions_with_empty_window_contribute_zero(self):
        rng = np.random.default_rng(9)
        rows_a, rows_b = rng.normal(size=(6, 8)), rng.normal(size=(2, 8))
        a, b = make_stack(rows_a), make_stack(rows_b)
        w = 1
        got = windowed_bertscore(a, b, ScoreConfig(window_radius=w)).item()

        def norm(x):
            return x / np.linalg.norm(x, axis=1, keepdims=True)

        sim = norm(rows_a) @ norm(rows_b).T
        p_terms = []
        for i in range(6):
            js = [j for j in range(2) if abs(i - j) <= w]
            p_terms.append(max(sim[i, j] for j in js) if js else 0.0)
        p = np.mean(p_terms)
        r_terms = []
        for j in range(2):
            is_ = [i for i in range(6) if abs(i - j) <= w]
            r_terms.append(max(sim[i, j] for i in is_) if is_ else 0.0)
        r = np.mean(r_terms)
        want = 2 * p * r / (p + r)
        assert got == pytest.approx(want, abs=1e-12)

    def test_compact_alignment_absorbs_leading_shift(self):
        # same content rows, but one stack has them shifted one position
        # later (as after prepending a conditioning token)
        rng = np.random.default_rng(10)
        rows = rng.normal(size=(5, 8))
        a = make_stack(rows)
        L = a.hidden.shape[0] + 1
        hidden = np.zeros((L, 8))
        hidden[0] = rng.normal(size=8)      # [CLS]
        hidden[1] = rng.normal(size=8)      # conditioning token row
        hidden[2:7] = rows
        hidden[7] = rng.normal(size=8)      # [SEP]
        attention = np.zeros(L, dtype=bool)
        attention[:8] = True
        content = np.zeros(L, dtype=bool)
        content[2:7] = True
        shifted = EmbeddingStack(hidden=Tensor(hidden), attention_mask=attention,
                                 content_mask=content)
        compact = windowed_bertscore(a, shifted, ScoreConfig(window_radius=0)).item()
        raw = windowed_bertscore(
            a, shifted, ScoreConfig(window_radius=0, alignment="raw")).item()
        assert compact == pytest.approx(1.0, abs=1e-9)
        assert raw < 1.0 - 1e-6

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScoreConfig(window_radius=-1)
        with pytest.raises(ValueError):
            ScoreConfig(alignment="sideways")

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        a = random_stack(rng, 5, requires_grad=True)
        b = random_stack(rng, 6, requires_grad=True)
        cfg = ScoreConfig(window_radius=2)
        loss = windowed_bertscore(a, b, cfg)
        T.backward(loss)
        for stack in (a, b):
            numeric = finite_difference_grad(
                lambda: windowed_bertscore(a, b, cfg).item(), stack.hidden.data)
            err = rel_err(stack.hidden.grad, numeric)
            assert err < 1e-4, f"rel err {err:.2e}"

    def test_result_in_unit_interval_on_random_stacks(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b = random_stack(rng, 5), random_stack(rng, 4)
            s = windowed_bertscore(a, b, ScoreConfig(window_radius=2)).item()
            assert -1.0 - 1e-9 <= s <= 1.0 + 1e-9
