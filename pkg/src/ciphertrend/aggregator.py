"""Merging per-trader orders into one market order"""

from collections import Counter
from typing import Mapping, Optional

import structlog

from .models import VoteRule

logger = structlog.get_logger()


class VoteAggregator:
    """Combines trader orders for a single tick

    Votes are +1 (buy), -1 (sell), 0 (hold) or None for traders that had
    no usable decision this tick (warm-up, timeout, invalid). None votes are
    left out of every rule.
    """

    def __init__(self, rule: VoteRule = VoteRule.MAJORITY):
        self.rule = VoteRule(rule)
        self.logger = logger.bind(component="votes")

    def combine(self, votes: Mapping[str, Optional[int]]) -> int:
        valid = [v for v in votes.values() if v is not None]
        if not valid:
            return 0
        if self.rule is VoteRule.MAJORITY:
            return self.majority(valid)
        if self.rule is VoteRule.UNANIMOUS:
            return self.unanimous(valid)
        return self.sum_sign(valid)

    @staticmethod
    def majority(votes) -> int:
        """Strictly most common order wins; any tie holds"""
        ranked = Counter(votes).most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            return 0
        return ranked[0][0]

    @staticmethod
    def unanimous(votes) -> int:
        first = votes[0]
        return first if all(v == first for v in votes) else 0

    @staticmethod
    def sum_sign(votes) -> int:
        total = sum(votes)
        return (total > 0) - (total < 0)
