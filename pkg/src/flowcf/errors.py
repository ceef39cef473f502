"""Exception types shared across the package."""


class FlowcfError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(FlowcfError, ValueError):
    """A schema definition is internally inconsistent."""


class DataError(FlowcfError, ValueError):
    """Input data does not conform to its schema."""


class ConfigError(FlowcfError, ValueError):
    """An experiment or run configuration is invalid."""


class NumericsError(FlowcfError, RuntimeError):
    """A numeric computation produced non-finite values.

    The message names the flow layer or operation that failed so the
    blow-up can be located without a debugger.
    """


class BundleError(FlowcfError, ValueError):
    """A serialized model bundle is missing, corrupt, or incompatible."""


class MissingInputError(DataError):
    """A required input file or directory does not exist.

    The CLI maps this to exit code 2; the message names the path.
    """
