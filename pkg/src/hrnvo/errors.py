"""Exception types shared across the package."""


class HrnError(Exception):
    pass


class InvalidArgument(HrnError, ValueError):
    pass


class DegenerateInput(HrnError, ValueError):
    pass


class FormatError(HrnError, ValueError):
    pass


class DatasetNotFound(HrnError, FileNotFoundError):
    pass
