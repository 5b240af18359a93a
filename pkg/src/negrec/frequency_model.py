"""Frequency-based estimation of an agent's utility function from its offers.

The model counts how often each issue value appears in the offers an agent
has sent.  Estimated issue weights are max-count over total count; estimated
evaluations are count over max-count.  The estimate of a bid is the weighted
evaluation sum normalized by the weight sum, so a bid made of each issue's
most frequent value always scores 1.
"""

from __future__ import annotations

import numpy as np

from .domains import Bid, Domain, DomainMismatchError


class SmithFrequencyModel:
    """Per-issue value-count tables for one observed agent in one session.

    Counts only ever increase; an instance belongs to a single session and is
    updated sequentially with each received bid.
    """

    def __init__(self, domain: Domain) -> None:
        self.domain = domain
        self._counts = [np.zeros(len(issue.values), dtype=np.int64) for issue in domain.issues]
        self._n_updates = 0

    @property
    def n_updates(self) -> int:
        return self._n_updates

    def counts(self, issue_index: int) -> np.ndarray:
        return self._counts[issue_index].copy()

    def update(self, received_bid: Bid) -> None:
        """Add one received bid: each issue's chosen value counts once more."""
        self.domain.validate_bid(received_bid)
        for k, index in enumerate(received_bid):
            self._counts[k][index] += 1
        self._n_updates += 1

    def estimate_utility(self, bid: Bid) -> float:
        """Estimated utility of ``bid`` in [0, 1]; 0.0 before any update."""
        if len(bid) != self.domain.n_issues:
            raise DomainMismatchError(
                f"bid has {len(bid)} entries, model domain has {self.domain.n_issues} issues"
            )
        if self._n_updates == 0:
            return 0.0
        weight_sum = 0.0
        weighted_eval = 0.0
        for counts, index in zip(self._counts, bid):
            if not 0 <= index < counts.shape[0]:
                raise DomainMismatchError(f"bid index {index} out of range")
            c_max = int(counts.max())
            c_sum = int(counts.sum())
            w = c_max / c_sum
            weight_sum += w
            weighted_eval += w * (int(counts[index]) / c_max)
        return weighted_eval / weight_sum

    def estimate_many(self, index_matrix: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`estimate_utility` over rows of an index matrix."""
        if self._n_updates == 0:
            return np.zeros(index_matrix.shape[0])
        weight_sum = 0.0
        total = np.zeros(index_matrix.shape[0])
        for k, counts in enumerate(self._counts):
            c_max = int(counts.max())
            c_sum = int(counts.sum())
            w = c_max / c_sum
            weight_sum += w
            total += w * (counts[index_matrix[:, k]] / c_max)
        return total / weight_sum

    def copy(self) -> "SmithFrequencyModel":
        clone = SmithFrequencyModel(self.domain)
        clone._counts = [counts.copy() for counts in self._counts]
        clone._n_updates = self._n_updates
        return clone
