"""Exception hierarchy shared by every module."""


class QbeError(Exception):
    """Base class for all errors raised by qbekws."""


# audio
class WavError(QbeError):
    pass


class NotPCMError(WavError):
    pass


class SampleRateError(WavError):
    pass


class ChannelError(WavError):
    pass


class TruncatedWavError(WavError):
    pass


class AudioTooShortError(QbeError):
    pass


# feature files / profiles
class FormatError(QbeError):
    pass


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class SizeMismatchError(FormatError):
    pass


class ProfileError(FormatError):
    """Corrupt or inconsistent profile metadata."""


class MissingBlobError(ProfileError):
    pass


# matching
class DimensionMismatchError(QbeError, ValueError):
    pass


class EmptyInputError(QbeError, ValueError):
    pass


class ZeroNormError(QbeError, ValueError):
    pass


class EmbedderError(QbeError):
    def __init__(self, window_index: int, cause: BaseException):
        super().__init__(f"embedder failed on window {window_index}: {cause!r}")
        self.window_index = window_index


class TrialSetError(QbeError, ValueError):
    """Trial list lacks one of the two classes."""


class FeatureMismatchError(QbeError, ValueError):
    """Test features do not match the enrolled feature kind or dimension."""
