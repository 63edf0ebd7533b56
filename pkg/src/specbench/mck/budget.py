"""Step-budgeted evaluation, used to turn a runaway fixpoint into a diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Generator, Iterator, TypeVar

T = TypeVar("T")


@dataclass(frozen=True)
class NonTermination:
    """Diagnostic for a computation that did not finish within its budget."""

    budget: int
    inputs: Any = None
    last: Any = field(default=None, compare=False)

    def __str__(self) -> str:
        return f"no result after {self.budget} steps (inputs: {self.inputs!r})"


class NonTerminationError(Exception):
    """Raised by callers that cannot return a ``NonTermination`` value."""

    def __init__(self, diagnostic: NonTermination):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


def run_budgeted(
    steps: Generator[Any, None, T] | Iterator[Any],
    budget: int,
    inputs: Any = None,
) -> T | NonTermination:
    """Drive a step generator for at most ``budget`` steps.

    Each ``yield`` of the generator counts as one step; the generator's
    ``return`` value is the result. If the budget runs out first, the
    generator is closed and a :class:`NonTermination` carrying ``inputs``
    (and the last yielded value) is returned instead.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    last = None
    for _ in range(budget):
        try:
            last = next(steps)
        except StopIteration as stop:
            return stop.value
    # One extra probe: a generator that finishes exactly on the budget is fine.
    try:
        last = next(steps)
    except StopIteration as stop:
        return stop.value
    close = getattr(steps, "close", None)
    if close is not None:
        close()
    return NonTermination(budget=budget, inputs=inputs, last=last)
