"""
Designed to be used via nru-coexist CLI.
Can be used programmatically too, example usage:

    from nru_coexist.coexistence import optimal_initial_window
    from nru_coexist.params import NruParams, WifiParams

    tuning = optimal_initial_window(WifiParams(), NruParams(), 10)
    print(tuning.window)
"""

import logging

LOG = logging.getLogger(__name__)


class CoexistenceError(Exception):
    """Base class for all errors reported by this package"""


class ParameterError(CoexistenceError, ValueError):
    """Given parameter is outside of its admissible domain"""


class ConvergenceError(CoexistenceError):
    """An iterative solver did not reach its tolerance

    Parameters
    ----------
    message : str
        Human readable explanation
    residuals : dict | None
        Last residuals, by equation or quantity name
    iterations : int
        Number of iterations performed
    """

    def __init__(self, message, residuals=None, iterations=0):
        super().__init__(message)
        self.residuals = residuals or {}
        self.iterations = iterations


class InfeasibleError(CoexistenceError):
    """Problem has no feasible point, 'binding' names the budget(s) responsible"""

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding or []
