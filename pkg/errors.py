# errors.py
# Exception hierarchy shared by the planner modules.
# Input-validation errors also subclass ValueError so plain `except ValueError` keeps working.


class PlannerError(Exception):
    """Root of every error raised by the planner."""


class GraphError(PlannerError, ValueError):
    """Malformed computational graph (cycles, unknown kinds, bad edges)."""


class ShapeMismatchError(GraphError):
    pass


class NonFiniteError(PlannerError, ValueError):
    """A NaN/Inf showed up where only finite numbers are allowed."""


class NonFiniteWeightError(NonFiniteError):
    pass


class ModelFormatError(PlannerError, ValueError):
    """Model file could not be parsed or its layer shapes do not chain."""


class ScenarioError(PlannerError, ValueError):
    pass


class BoundError(PlannerError):
    """Bound propagation could not be carried out (missing bounds, bad stop set)."""


class SearchError(PlannerError):
    pass


class BudgetError(SearchError, ValueError):
    """A sample or iteration budget of zero (or less) was requested."""


class PlanFailure(PlannerError):
    """The planner ran but produced no usable plan (RRT/PRM without a path, BaB failure)."""
