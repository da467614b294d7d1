class AiryLinkError(Exception):
    """Base class; `exit_code` is what the CLI exits with when this escapes a command."""

    exit_code = 3


class InputError(AiryLinkError):
    exit_code = 1


class ConfigurationError(InputError):
    pass


class GeometryError(InputError):
    pass


class RangeError(InputError):
    pass


class DomainError(InputError):
    pass


class DegenerateParameterError(InputError):
    pass


class InfeasibleDesignError(AiryLinkError):
    exit_code = 2


class NumericalError(AiryLinkError):
    exit_code = 3


class DegenerateChannelError(NumericalError):
    pass


class OracleError(NumericalError):
    pass
