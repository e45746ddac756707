"""Exception types raised across the package.

Every error carries the name of the module whose contract was violated so the
CLI can report it in a structured way.
"""


class MsplError(ValueError):
    module = "mspl"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "module": self.module,
            "message": str(self),
            **{k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return str(v)


# dataio
class DataError(MsplError):
    module = "dataio"


class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"missing column: {name!r}", name=name)


class UnknownLabel(DataError):
    def __init__(self, value):
        super().__init__(f"unknown label: {value!r}", value=value)


class EmptyDataset(DataError):
    def __init__(self, message="dataset is empty"):
        super().__init__(message)


class InsufficientSamples(DataError):
    pass


class BadFractions(DataError):
    pass


class SchemaError(DataError):
    pass


# episodic
class EpisodeError(MsplError):
    module = "episodic"


class MissingClass(EpisodeError):
    def __init__(self, k):
        super().__init__(f"class {k} has no rows", k=k)


class EmptyClass(EpisodeError):
    def __init__(self):
        super().__init__("cannot sample from an empty class")


# embedder / metric_spaces
class ShapeMismatch(MsplError):
    module = "embedder"

    def __init__(self, message, expected=None, got=None, module=None):
        super().__init__(message, expected=expected, got=got)
        if module is not None:
            self.module = module


class CheckpointError(MsplError):
    module = "embedder"


class WeightViolation(MsplError):
    module = "metric_spaces"


# prototypes
class EmptyClassSupport(MsplError):
    module = "prototypes"

    def __init__(self, k):
        super().__init__(f"class {k} has no support slots", k=k)


class LengthMismatch(MsplError):
    module = "prototypes"

    def __init__(self, a, b, module=None):
        super().__init__(f"length mismatch: {a} != {b}", expected=a, got=b)
        if module is not None:
            self.module = module


# objective
class NonBinaryLabel(MsplError):
    module = "objective"


# trainer
class DivergedLoss(MsplError):
    module = "trainer"


class NonFiniteGradient(MsplError):
    module = "trainer"


# evaluator
class NoQueries(MsplError):
    module = "evaluator"


class NoPositives(MsplError):
    module = "evaluator"

    def __init__(self, k=None):
        super().__init__(f"class {k} has no positives", k=k)


class EmptyList(MsplError):
    module = "evaluator"


# cli
class ConfigError(MsplError):
    module = "cli"

    def __init__(self, message, field=None):
        super().__init__(message, field=field)
