"""Crash-event sequence mining pipeline.

Stages: ingest CRSS-shaped tables (or synthesize them), encode event
sequences, compute optimal-matching dissimilarities, cluster per crash
configuration into sequence types, learn a discrete Bayesian network over
types/outcomes/environment, and answer replicated Monte-Carlo scenario
queries.
"""

from crashseq.event_codec import (
    Alphabet,
    CrashSequence,
    EventToken,
    Phase,
    RenumberRules,
    Role,
    assemble_sequence,
    parse,
    render,
)
from crashseq.seqdist import CostScheme, DissimMatrix, align_cost, distance_matrix

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "CostScheme",
    "CrashSequence",
    "DissimMatrix",
    "EventToken",
    "Phase",
    "RenumberRules",
    "Role",
    "align_cost",
    "assemble_sequence",
    "distance_matrix",
    "parse",
    "render",
    "__version__",
]
