class RectCLTError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(RectCLTError, ValueError):
    pass


class NotPSDError(ValidationError):
    pass


class SizeGuardError(RectCLTError, ValueError):
    """A combinatorial size guard would be exceeded."""

    def __init__(self, what, count, limit):
        self.count = count
        self.limit = limit
        super().__init__(f"{what}: {count} exceeds guard {limit}")


class ConfigError(RectCLTError, ValueError):
    pass


class BudgetError(ConfigError):
    def __init__(self, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(
            f"experiment needs {required:.3g} scalar draws, budget is {budget:.3g}"
        )
