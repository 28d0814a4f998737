"""Hypothesis selection by dynamic-cell support.

The number of dynamic cells under a candidate footprint is the decisive
criterion; static cells never count. Objects whose best candidate stays
under the support floor for a run of frames are terminated.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import DynamicCellConfig, SelectionConfig
from .association import cells_under_footprint
from .fusion import CandidateSet
from .grid import GridMap, dynamic_mask
from .tracker import BoxHypothesis

# selection preference on equal support
_TIE_ORDER = {"fused": 0, "tracking": 1, "predicted": 2}


def count_dynamic_cells(grid: GridMap, box: BoxHypothesis,
                        cfg: DynamicCellConfig, mask=None) -> int:
    """Dynamic cells whose centers lie under the box footprint (no margin).

    ``mask`` may carry a precomputed dynamic mask for the same grid
    snapshot; callers scoring several boxes per frame reuse one mask.
    """
    if mask is None:
        mask = dynamic_mask(grid, cfg)
    return sum(1 for r, c in cells_under_footprint(grid, box, margin=0.0)
               if mask[r, c])


def rank_candidates(grid: GridMap, candidates: CandidateSet,
                    cfg: SelectionConfig, mask=None) -> list[tuple[str, BoxHypothesis, int]]:
    """Candidates ordered best-first: support desc, then fused > tracking > predicted."""
    if mask is None:
        mask = dynamic_mask(grid, cfg.dynamic)
    scored = [
        (label, box, count_dynamic_cells(grid, box, cfg.dynamic, mask))
        for label, box in candidates.present()
    ]
    scored.sort(key=lambda item: (-item[2], _TIE_ORDER[item[0]]))
    return scored


def select(grid: GridMap, candidates: CandidateSet, cfg: SelectionConfig,
           low_support_streak: int = 0) -> tuple[BoxHypothesis, int] | None:
    """Pick the candidate with maximal dynamic-cell support.

    Returns None (object terminated) when the best support has stayed
    below ``min_support`` for ``patience`` consecutive frames, counting
    this one; ``low_support_streak`` is the number of preceding
    low-support frames.
    """
    ranked = rank_candidates(grid, candidates, cfg)
    if not ranked:
        return None
    label, box, support = ranked[0]
    if support < cfg.min_support and low_support_streak + 1 >= cfg.patience:
        return None
    return box, support


@dataclass
class SelectionState:
    """Per-object selection memory implementing the patience rule."""

    low_support_streak: int = 0

    def step(self, grid: GridMap, candidates: CandidateSet,
             cfg: SelectionConfig) -> tuple[str, BoxHypothesis, int] | None:
        """Select for one frame; None means the object terminates."""
        ranked = rank_candidates(grid, candidates, cfg)
        if not ranked:
            return None
        label, box, support = ranked[0]
        if support < cfg.min_support:
            self.low_support_streak += 1
            if self.low_support_streak >= cfg.patience:
                return None
        else:
            self.low_support_streak = 0
        return label, box, support


__all__ = ["count_dynamic_cells", "rank_candidates", "select", "SelectionState"]
