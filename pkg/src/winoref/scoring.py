"""Windowed token-matching similarity between two embedding stacks.

Greedy max-cosine token matching in the style of BERTscore, with matching
restricted to a sliding window centered on each token. Precision averages
each left-side token's best in-window match, recall mirrors it, and the two
are combined into F1. The whole computation is differentiable; the max
routes gradient to its argmax element.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .tensor import Tensor

# out-of-window penalty; cosines live in [-1, 1] so -4 can never win a max
_WINDOW_PENALTY = -4.0


@dataclass
class ScoreConfig:
    window_radius: int = 2
    include_special: bool = False
    # "compact": window distances over eligible positions re-indexed 0..n-1,
    # which lines a perturbation-conditioned stack up with its target.
    # "raw": distances over original sequence positions.
    alignment: str = "compact"

    def __post_init__(self):
        if self.window_radius < 0:
            raise ValueError(f"window_radius must be >= 0, got {self.window_radius}")
        if self.alignment not in ("compact", "raw"):
            raise ValueError(f"alignment must be 'compact' or 'raw', got {self.alignment!r}")

    def to_dict(self):
        return asdict(self)


def _positions(idx, alignment):
    if alignment == "compact":
        return np.arange(len(idx))
    return idx


def windowed_bertscore(a, b, cfg):
    """Similarity of two embedding stacks as a differentiable scalar tensor.

    Positions whose window contains no eligible partner contribute 0. If the
    precision/recall sum is exactly ~0 (mutually orthogonal stacks), F1 is
    defined as 0.
    """
    idx_a = a.eligible(cfg.include_special)
    idx_b = b.eligible(cfg.include_special)
    if len(idx_a) == 0 or len(idx_b) == 0:
        which = "first" if len(idx_a) == 0 else "second"
        raise ValueError(f"windowed score: {which} stack has no eligible tokens "
                         f"after special/pad filtering")

    rows_a = T.l2_normalize(T.take(a.hidden, idx_a, axis=0), axis=-1)
    rows_b = T.l2_normalize(T.take(b.hidden, idx_b, axis=0), axis=-1)
    sim = T.matmul(rows_a, T.transpose(rows_b, (1, 0)))   # (na, nb) cosines

    pa = _positions(idx_a, cfg.alignment)
    pb = _positions(idx_b, cfg.alignment)
    in_window = np.abs(pa[:, None] - pb[None, :]) <= cfg.window_radius
    penalty = Tensor(np.where(in_window, 0.0, _WINDOW_PENALTY))
    masked = T.add(sim, penalty)

    # rows/cols with an empty window contribute 0 and receive no gradient
    row_has = in_window.any(axis=1).astype(sim.data.dtype)
    col_has = in_window.any(axis=0).astype(sim.data.dtype)
    precision = T.tmean(T.mul(T.tmax(masked, axis=1), row_has))
    recall = T.tmean(T.mul(T.tmax(masked, axis=0), col_has))

    denom = precision.item() + recall.item()
    if abs(denom) < 1e-12:
        return Tensor(0.0)
    return T.div(T.mul(T.mul(precision, recall), 2.0), T.add(precision, recall))


def score_value(a, b, cfg):
    """Plain-float windowed score, for evaluation paths."""
    with T.no_grad():
        return windowed_bertscore(a, b, cfg).item()
