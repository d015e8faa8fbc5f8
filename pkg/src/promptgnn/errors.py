"""Exception taxonomy shared across the package.

Validation problems (bad config, bad files, bad shapes) are ValueErrors so
callers can catch one base; numeric blow-ups get their own branch because the
CLI maps them to a distinct exit code.
"""


class PromptGnnError(Exception):
    """Base class for all package errors."""


class IngestionError(PromptGnnError, ValueError):
    """A mandatory dataset file is missing or unreadable."""


class IntegrityError(PromptGnnError, ValueError):
    """Dataset files disagree with each other (row counts, index ranges)."""


class SamplingError(PromptGnnError, ValueError):
    """A class lacks enough labeled instances for the requested task."""


class ShapeError(PromptGnnError, ValueError):
    """Operand shapes do not satisfy an operation's shape rule."""


class NumericError(PromptGnnError, ArithmeticError):
    """An operation produced NaN or Inf."""


class ContractError(PromptGnnError, ValueError):
    """An operation was called outside its contract (e.g. non-scalar root)."""


class ConfigError(PromptGnnError, ValueError):
    """Invalid or unknown configuration values."""


class BatchError(PromptGnnError, ValueError):
    """A contrastive batch is malformed (empty positives/negatives)."""


class TaskError(PromptGnnError, ValueError):
    """A few-shot task is malformed (missing class, empty query)."""


class TrainingError(PromptGnnError, ArithmeticError):
    """Training aborted on a non-finite loss; message carries diagnostics."""
