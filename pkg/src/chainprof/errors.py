"""Exception hierarchy shared by all chainprof modules."""


class ChainprofError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ChainprofError):
    """One or more semantic violations in limits, topology, sweep or spec.

    ``issues`` holds one human readable line per violation; each line names
    the offending field or path.
    """

    def __init__(self, issues, path=None):
        if isinstance(issues, str):
            issues = [issues]
        self.issues = list(issues)
        self.path = path
        super().__init__("; ".join(self.issues))


class SpecSyntaxError(ValidationError):
    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__([f"syntax error at line {line}, column {column}: {message}"])


class SchemaError(ValidationError):
    """Spec document does not match the schema; ``path`` is a JSON pointer."""

    def __init__(self, message, path):
        super().__init__([f"{path}: {message}"], path=path)


class BundleIntegrityError(ChainprofError):
    pass


# backend errors

class BackendError(ChainprofError):
    pass


class DeployError(BackendError):
    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message if node is None else f"deploy failed for {node}: {message}")


class LimitError(BackendError):
    pass


class CollectionTimeout(BackendError):
    pass


class MissingResultFile(BackendError):
    pass


# metric extraction errors

class ExtractionError(ChainprofError):
    def __init__(self, node, detail):
        self.node = node
        super().__init__(f"{node}: {detail}")


class NodeMissing(ExtractionError):
    def __init__(self, node):
        super().__init__(node, "no result for node")


class NodeFailed(ExtractionError):
    def __init__(self, node, reason):
        self.reason = reason
        super().__init__(node, f"node failed: {reason}")


class FileMissing(ExtractionError):
    def __init__(self, node, file):
        self.file = file
        super().__init__(node, f"result file {file!r} missing")


class MetricMissing(ExtractionError):
    def __init__(self, node, key):
        self.key = key
        super().__init__(node, f"key {key!r} missing")


class NonNumeric(ExtractionError):
    def __init__(self, node, key, value):
        self.key = key
        super().__init__(node, f"key {key!r} is not numeric: {value!r}")


class NonFinite(ChainprofError):
    pass


# stats / predictor

class InsufficientSamples(ChainprofError):
    pass


class FitError(ChainprofError):
    pass


class Unreachable(ChainprofError):
    """No tested grid point satisfies an SLA target."""

    def __init__(self, target, best=None):
        self.target = target
        self.best = best
        super().__init__(f"target {target} is not reachable on the tested grid")


class MissingMarginalSweep(ChainprofError):
    def __init__(self, node, dimension):
        self.node = node
        super().__init__(f"no marginal sweep of {dimension} for node {node}")


class BaselineError(ChainprofError):
    pass
