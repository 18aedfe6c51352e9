"""
Exception hierarchy for ElastoMatch.
All errors derive from ValueError so callers catching ValueError keep working.
"""


class ElastoMatchError(ValueError):
    """Base class for all domain errors."""


class ParseError(ElastoMatchError):
    """Input file could not be parsed."""


class DegenerateCurve(ElastoMatchError):
    """Curve has fewer than 3 distinct points or zero area."""


class SelfIntersecting(ElastoMatchError):
    """Curve polygon is not simple."""


class NonManifold(ElastoMatchError):
    """An edge is shared by more than two faces."""


class Disconnected(ElastoMatchError):
    """Mesh edge graph has more than one connected component."""


class NumericalDegeneracy(ElastoMatchError):
    """A discretization produced non-finite values."""


class ConvergenceFailure(ElastoMatchError):
    """Iterative eigensolver did not converge within its iteration cap."""


class DegenerateSegmentation(ElastoMatchError):
    """A region became empty during segmentation."""


class DimensionMismatch(ElastoMatchError):
    """Arrays that must agree in shape do not."""


class NotAnEdge(ElastoMatchError):
    """Two product vertices are not connected by a product-graph edge."""


class MissingGroundTruth(ElastoMatchError):
    """Ground truth does not cover every curve vertex."""


class NoPositives(ElastoMatchError):
    """Ranking has no target of the positive class."""


class CacheCorrupted(ElastoMatchError):
    """Cached container is truncated or malformed."""
