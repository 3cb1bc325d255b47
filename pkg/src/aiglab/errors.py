class NotPSDError(ValueError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class NumericalDivergenceError(RuntimeError):
    """A state, loss or gradient became non-finite.

    ``step`` names where it happened (sampler step, training step or
    finetuning iteration).
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class TooLargeError(ValueError):
    """Exhaustive enumeration requested over too many units."""
