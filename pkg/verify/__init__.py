"""Sampled verification of the triple's identities and field equations.

Every check draws points from the problem's sampling box, measures how far an
identity is from holding, and reports the worst case against a tolerance.

Usage:
    from verify import ProblemSpec, full_suite
    from fieldtriple_core.geometry import BundleDims

    spec = ProblemSpec("dirichlet", BundleDims(2, 1), lagrangian="0.5*(u1_1^2 + u1_2^2)")
    for report in full_suite(spec):
        print(report.name, report.status)
"""

from verify.base import (
    BaseCheck,
    Box,
    CheckContext,
    CheckReport,
    ProblemSpec,
    SampleOutcome,
    SamplePoint,
    SkipSample,
)
from verify.registry import CheckRegistry, get_registry
from verify.runner import exit_code, full_suite, run_check, sample
from verify.submanifolds import check_lagrangian_submanifold, classify_tangent_space

__all__ = [
    "BaseCheck",
    "Box",
    "CheckContext",
    "CheckReport",
    "ProblemSpec",
    "SampleOutcome",
    "SamplePoint",
    "SkipSample",
    "CheckRegistry",
    "get_registry",
    "full_suite",
    "run_check",
    "sample",
    "exit_code",
    "check_lagrangian_submanifold",
    "classify_tangent_space",
]
