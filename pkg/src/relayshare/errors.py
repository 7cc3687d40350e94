"""Exception types raised across the package."""


class RelayShareError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(RelayShareError, ValueError):
    """A topology, session or config-file value is out of range or malformed."""


class LengthMismatch(RelayShareError, ValueError):
    """Key shares of differing bit lengths were combined."""


class DuplicateChannel(RelayShareError, ValueError):
    """Two key shares carry the same logical channel."""


class NoUsableChannels(RelayShareError, ValueError):
    """The topology admits no usable logical channel (min_active > n_relays)."""
