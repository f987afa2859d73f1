from __future__ import annotations

from typing import Optional


class KinprojError(Exception):
    """Base class for solver and configuration failures."""

    category = "error"


class ConfigError(KinprojError, ValueError):
    """A configuration value or parameter combination violates a rule."""

    category = "config"

    def __init__(self, message: str, line: Optional[int] = None, rule: Optional[str] = None) -> None:
        self.line = line
        self.rule = rule
        text = message if line is None else f"line {line}: {message}"
        if rule:
            text = f"{text} (rule: {rule})"
        super().__init__(text)


class SolverDivergenceError(KinprojError, RuntimeError):
    """The solution became non-finite or left the configured growth bound."""

    category = "divergence"

    def __init__(self, message: str, step: int, outer_step: Optional[int] = None) -> None:
        self.step = step
        self.outer_step = outer_step
        where = f"inner step {step}" if outer_step is None else f"outer step {outer_step} (inner step {step})"
        super().__init__(f"{message} at {where}")


class CostCeilingError(KinprojError, RuntimeError):
    """A reference run would take more inner steps than allowed."""

    category = "cost"

    def __init__(self, estimated_steps: int, ceiling: int) -> None:
        self.estimated_steps = estimated_steps
        self.ceiling = ceiling
        super().__init__(
            f"reference run needs about {estimated_steps:.3g} inner steps, ceiling is {ceiling:.3g}"
        )
