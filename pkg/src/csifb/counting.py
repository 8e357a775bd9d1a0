"""Per-run real-multiplication accumulator used to instrument codec paths."""
from collections import Counter


class MulCounter:
    """Accumulates real-valued multiplications by category.

    Codec functions accept an optional ``counter``; when given they add the
    number of real multiplications each numpy operation actually performs.
    A complex-by-complex product counts 4, real-by-complex counts 2.
    """

    def __init__(self):
        self.by_tag = Counter()

    def add(self, n, tag="other"):
        self.by_tag[tag] += int(n)

    @property
    def total(self):
        return sum(self.by_tag.values())

    def __repr__(self):
        return f"MulCounter(total={self.total}, {dict(self.by_tag)})"


def count(counter, n, tag="other"):
    if counter is not None:
        counter.add(n, tag)
