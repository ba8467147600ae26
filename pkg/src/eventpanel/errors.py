"""Exception hierarchy shared by every module.

Each error class name doubles as the machine-readable ``error`` field the CLI
writes when a command fails, so the names are part of the external interface.
"""

from __future__ import annotations


class EventPanelError(Exception):
    """Base class for all domain errors raised by the package."""

    @property
    def code(self) -> str:
        return type(self).__name__


# panel_core
class MissingColumn(EventPanelError):
    pass


class DuplicateCell(EventPanelError):
    pass


class MalformedRow(EventPanelError):
    pass


class NonAbsorbingTreatment(EventPanelError):
    pass


class NoAnchor(EventPanelError):
    pass


# simulator
class UnstablePersistence(EventPanelError):
    pass


class InvalidAdoptionProcess(EventPanelError):
    pass


# fe_solver
class NoConvergence(EventPanelError):
    def __init__(self, max_iter: int, last_update: float):
        super().__init__(
            f"alternating projections did not converge in {max_iter} sweeps "
            f"(last max update {last_update:.3e})"
        )
        self.max_iter = max_iter
        self.last_update = last_update


class EmptySample(EventPanelError):
    pass


class SingleCluster(EventPanelError):
    pass


class DegenerateRestriction(EventPanelError):
    pass


# estimators
class CollinearDesign(EventPanelError):
    pass


class EmptyEventTime(EventPanelError):
    def __init__(self, tau, detail: str = ""):
        msg = f"no observations identify event time {tau}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.tau = tau


class NoControlCohort(EventPanelError):
    pass


class PropensityOverlap(EventPanelError):
    def __init__(self, share: float, eps: float):
        super().__init__(
            f"{share:.2%} of propensity scores fall outside [{eps}, {1 - eps}]"
        )
        self.share = share


class NoControlObservations(EventPanelError):
    pass


# inference
class MissingCoefficient(EventPanelError):
    pass


class InfeasibleLP(EventPanelError):
    pass


# descriptives
class EmptyGroup(EventPanelError):
    pass


# cli
class ConfigError(EventPanelError):
    pass
