"""Exception hierarchy shared across the toolchain."""


class MvdError(Exception):
    """Base class for all toolchain errors."""


class UnknownDecision(MvdError):
    """A condition referenced a decision that is not bound in the assignment."""


class MalformedDirective(MvdError):
    """A `# --- ...` line did not match any known directive form."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class UndeclaredPlaceholder(MvdError):
    """An inline `{{name}}` references a decision that was never declared."""


class DuplicateDecision(MvdError):
    """A decision or option name collides with an existing declaration."""


class EmptyDecision(MvdError):
    """A decision was declared with zero options."""


class DanglingConstraint(MvdError):
    """A constraint targets a decision or option that does not exist."""


class TemplateParseError(MvdError):
    """Catch-all for config front-matter that cannot be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class IoError(MvdError):
    """Filesystem failure, annotated with the offending path."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class EmptyMultiverse(MvdError):
    """Cover selection was asked to run on zero universes."""


class SelectionError(MvdError):
    """Base class for run-selection resolution failures."""


class OutOfRange(SelectionError):
    """A universe index fell outside [1, universe count]."""


class DuplicateId(SelectionError):
    """The same universe index was requested twice."""


class UnknownDecisionOrOption(SelectionError):
    """A --where filter names a decision or option absent from the summary."""


class ConflictingEdit(MvdError):
    """Two different rewrites target the same template byte range."""

    def __init__(self, message, conflicts=None):
        super().__init__(message)
        self.conflicts = conflicts or []
