"""Exception hierarchy for qgspectra."""


class QGraphError(Exception):
    """Base class for all qgspectra errors."""


class DisconnectedGraph(QGraphError):
    """The metric graph is not connected."""


class NonPositiveLength(QGraphError):
    """An edge length is zero or negative."""


class MalformedMatching(QGraphError):
    """Vertex matching data is inconsistent with the vertex degree or invalid."""


class UnsupportedDegree(QGraphError):
    """A standard matching-condition kind was requested at an unsupported degree."""


class AtThreshold(QGraphError):
    """The requested energy coincides with an edge potential."""

    def __init__(self, edge_id, energy):
        self.edge_id = edge_id
        self.energy = energy
        super().__init__(f"energy {energy} is at the threshold of edge {edge_id}")


class SingularVertexMatrix(QGraphError):
    """A + iBK is numerically singular at the requested energy."""


class TrappedStateSuspected(QGraphError):
    """I - U_ee is nearly singular; a state confined to the evanescent
    subgraph may exist and the reduced quantization condition may miss it."""

    def __init__(self, energy, min_singular_value):
        self.energy = energy
        self.min_singular_value = min_singular_value
        super().__init__(
            f"min singular value of I - U_ee is {min_singular_value:.3e} at E={energy}"
        )


class NotAStar(QGraphError):
    """Star-graph reduction requested on a graph that is not a star."""


class GridTooCoarse(QGraphError):
    """The energy grid cannot separate adjacent counting-function jumps."""


class OrbitBudgetExceeded(QGraphError):
    """Periodic-orbit enumeration exceeded the configured record cap."""


class SeriesNotConverged(QGraphError):
    """The evanescent correction series did not reach the requested accuracy."""


class InconsistentCalibration(QGraphError):
    """Calibration constants estimated at different reference energies disagree."""
