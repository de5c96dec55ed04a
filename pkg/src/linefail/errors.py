"""Exception types raised by the toolkit.

Every data or model error derives from LinefailError so the CLI can map
them to a stage-tagged diagnostic and exit code 2.
"""


class LinefailError(Exception):
    """Base class for all toolkit errors."""


# -- ingest ---------------------------------------------------------------

class MalformedName(LinefailError):
    """Feature name does not match the L<int>_S<int>_<F|D><int> pattern."""


class DuplicateColumn(LinefailError):
    """A header repeats a column name."""


class IdMismatch(LinefailError):
    """Row-aligned source files disagree on the Id column."""


class ArityMismatch(LinefailError):
    """A data line has a different number of cells than the header."""


class InvalidK(LinefailError):
    """Fold count must be at least 2."""


# -- explore --------------------------------------------------------------

class MissingLabel(LinefailError):
    """An operation requiring labels received an unlabeled row."""


class InvalidTick(LinefailError):
    """Histogram tick must be positive."""


class DegenerateSeries(LinefailError):
    """Autocorrelation of a zero-variance series is undefined."""


class NoPeak(LinefailError):
    """No strict local maximum found in the autocorrelation."""


# -- models ---------------------------------------------------------------

class EmptyData(LinefailError):
    """Fit called with zero rows."""


class UnknownFeature(LinefailError):
    """Prediction input lacks a column the model was fitted on."""


class EmptyFold(LinefailError):
    """A cross-validation fold received zero rows."""


# -- metrics --------------------------------------------------------------

class LengthMismatch(LinefailError):
    """Score and label sequences differ in length."""


class EmptyInput(LinefailError):
    """Metric called on zero rows."""


class OneClassOnly(LinefailError):
    """Metric requires at least one positive and one negative label."""


class TooFewRows(LinefailError):
    """Decile lift needs at least 10 rows."""


class NoPositives(LinefailError):
    """Decile lift needs at least one positive label."""


# -- synth ----------------------------------------------------------------

class InvalidConfig(LinefailError):
    """Generator configuration violates its bounds."""


class ManifestMismatch(LinefailError):
    """Rows were not produced by the supplied generator manifest."""
