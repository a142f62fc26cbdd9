"""Exception hierarchy.

Everything raised on bad *data* derives from :class:`VleMinerError`; the CLI
maps those to exit code 1. Programming errors (wrong types, bad arguments)
stay as plain ``ValueError``/``TypeError``.
"""


class VleMinerError(Exception):
    """Base class for data errors."""


class IngestError(VleMinerError):
    """A problem reading a delimited input file.

    ``line`` is the 1-based physical line number (the header is line 1).
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class MissingColumn(IngestError):
    pass


class NonIntegerClicks(IngestError):
    pass


class NegativeClicks(IngestError):
    pass


class UnknownContentType(IngestError):
    def __init__(self, label, path=None, line=None):
        self.label = label
        super().__init__(f"unknown content type {label!r}", path=path, line=line)


class DayOutOfWindow(IngestError):
    pass


class ScoreOutOfRange(IngestError):
    pass


class MalformedRow(IngestError):
    pass


class ConfigError(VleMinerError):
    pass


class TooFewValues(VleMinerError):
    pass


class EmptyCohort(VleMinerError):
    pass


class SingleClassCohort(VleMinerError):
    pass


class FlagLengthMismatch(VleMinerError):
    pass


class UnknownAttribute(VleMinerError):
    pass


class EmptyAttributeSpace(VleMinerError):
    pass


class EmptySequences(VleMinerError):
    pass


class EmptyModel(VleMinerError):
    pass


class InvalidSpec(VleMinerError):
    pass


class ScenarioParseError(VleMinerError):
    pass
