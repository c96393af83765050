"""Per-unit predictive distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    """``draws[i, b]`` is the b-th predicted outcome for unit i.

    ``fdraws`` holds the same draws without the outcome noise term (the
    regression function only), when the producer knows it.
    """

    draws: np.ndarray
    fdraws: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] < 1:
            raise ValueError("draws must be a (units, draws) matrix")
        object.__setattr__(self, "draws", d)
        if self.fdraws is not None:
            f = np.asarray(self.fdraws, dtype=np.float64)
            if f.shape != d.shape:
                raise ValueError("fdraws must match draws in shape")
            object.__setattr__(self, "fdraws", f)

    @property
    def units(self):
        return self.draws.shape[0]

    @property
    def b(self):
        return self.draws.shape[1]

    @property
    def mean(self):
        return self.draws.mean(axis=1)

    @property
    def sd(self):
        self._need_two()
        return self.draws.std(axis=1, ddof=1)

    def interval(self, level=0.95):
        """Central percentile interval per unit, returned as ``(lo, hi)``."""
        self._need_two()
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        tail = (1.0 - level) / 2.0 * 100.0
        lo, hi = np.percentile(self.draws, [tail, 100.0 - tail], axis=1)
        return lo, hi

    def _need_two(self):
        if self.b < 2:
            raise ValueError("at least two draws are needed for spread summaries")

    def subset(self, rows):
        return PredictiveDistribution(
            self.draws[rows], None if self.fdraws is None else self.fdraws[rows]
        )

    def map(self, fn):
        """Apply ``fn`` elementwise to every draw."""
        return PredictiveDistribution(
            fn(self.draws), None if self.fdraws is None else fn(self.fdraws)
        )
