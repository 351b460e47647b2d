"""Exception hierarchy shared by all lyrictrack modules.

Three branches map onto the CLI exit codes: ConfigError -> 2,
DataError -> 3, EngineError -> 4.
"""


class LyrictrackError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LyrictrackError):
    """Invalid configuration value or inconsistent option combination."""


class DataError(LyrictrackError):
    """An input file or data structure is malformed or unusable."""


class EngineError(LyrictrackError):
    """A processing step failed at run time."""


# -- data errors --------------------------------------------------------------

class FormatError(DataError):
    """File is not in the expected on-disk format."""


class EmptyAudio(DataError):
    """Audio input contains no samples."""


class XmlError(DataError):
    """MusicXML document cannot be parsed."""


class NoVocalPart(DataError):
    """No part with lyrics found (or the requested part does not exist)."""


class UnsupportedConstruct(DataError):
    """Score uses a MusicXML construct outside the supported subset."""

    def __init__(self, message, location=None):
        if location:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class WordAssemblyError(DataError):
    """Syllabic markers do not assemble into complete words."""


class LineMatchError(DataError):
    """Sidecar lyrics lines do not match the score's word sequence."""


class PitchOutOfRange(DataError):
    """MIDI pitch outside the supported 21..108 range."""


class SetMismatch(DataError):
    """Posteriorgram dimensions or labels disagree with the phoneme set."""


class NotStochastic(DataError):
    """Posteriorgram rows do not sum to one."""


class UnknownLabel(DataError):
    """Label not present in the phoneme set."""


class DatasetLayoutError(DataError):
    """Benchmark dataset directory is missing required files."""


class BadDimension(DataError):
    """Feature matrix has the wrong number of dimensions for the operation."""


# -- engine errors -------------------------------------------------------------

class OutOfRange(EngineError):
    """Position outside the span of a path or tempo map."""


class DimensionMismatch(EngineError):
    """Two vectors or matrices disagree in dimensionality."""


class LengthMismatch(EngineError):
    """Two sequences disagree in length."""


class NegativeInput(EngineError):
    """Operation requires non-negative input values."""


class EmptyInput(EngineError):
    """Operation requires a non-empty sequence."""


class BandInfeasible(EngineError):
    """Constraint band does not admit any monotone warping path."""


class ProviderStall(EngineError):
    """Posteriorgram provider missed its delivery deadline."""


class ClockMismatch(EngineError):
    """Frame clocks or frame counts of two inputs disagree."""


class EndOfReference(EngineError):
    """Online aligner has consumed the last reference frame."""
