from .core import (TIE_ORDER, Outcome, PlannerId, PlannerParams, PlannerPreconditionError,
                   PlanResult)
from .measure import (RuntimeRecord, index_labels, label_fastest, measure, plan,
                      read_labels)

__all__ = [
    "TIE_ORDER", "Outcome", "PlannerId", "PlannerParams", "PlannerPreconditionError",
    "PlanResult", "RuntimeRecord", "index_labels", "label_fastest", "measure", "plan",
    "read_labels",
]
