"""Exception types shared across the package.

Two broad families matter to the CLI: parse errors (malformed files or
configs, exit code 2) and validation errors (well-formed but inconsistent
data, exit code 3). NumericalFailure (exit code 4) is reserved for NaN/Inf
detected during computation.
"""


class FoodidError(Exception):
    """Base class for every error raised by this package."""


class ParseError(FoodidError):
    """A file or config could not be parsed at all."""


class ValidationError(FoodidError):
    """Parsed data violates a contract (shapes, ranges, duplicates...)."""


class NumericalFailure(FoodidError):
    """NaN or Inf showed up where finite values are required."""


# --- image decoding / manifests ---

class MalformedImage(ParseError):
    pass


class UnsupportedFormat(ParseError):
    pass


class ManifestParse(ParseError):
    pass


class ManifestInvalid(ValidationError):
    pass


# --- tensors / weight bundles / feature files ---

class ShapeMismatch(ValidationError):
    pass


class BundleParse(ParseError):
    pass


class BundleShapeInvalid(ValidationError):
    pass


class FeatureFileParse(ParseError):
    pass


class ModelFileParse(ParseError):
    pass


# --- clustering ---

class TooFewSamples(ValidationError):
    pass


class SingleCluster(ValidationError):
    pass


# --- learners ---

class DimensionMismatch(ValidationError):
    pass


class DegenerateLabels(ValidationError):
    pass


class ArchMismatch(ValidationError):
    pass


# --- pipeline ---

class StratifyImpossible(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class ConfigError(ParseError):
    pass
