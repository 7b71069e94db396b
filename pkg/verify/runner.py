"""Runs verification checks over sampled points and merges their reports.

Each check runs in its own CheckContext, so concurrent checks share nothing but
the immutable ProblemSpec. The merged report list is ordered by check name.
"""

from __future__ import annotations

import time
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from config.logging import get_logger
from fieldtriple_core.config import get_config
from fieldtriple_core.errors import ProblemError, TripleError
from verify.base import (
    BaseCheck,
    CheckContext,
    CheckReport,
    ProblemSpec,
    SampleOutcome,
    SamplePoint,
    SkipSample,
)
from verify.registry import get_registry

logger = get_logger("verify")

CONFIGURATION = "configuration"


def sample(spec: ProblemSpec, count: int, seed: int) -> list[SamplePoint]:
    """Draw count base points from the problem's box.

    Every point gets its own child generator, so a point's later draws do not
    depend on how many points come before it or on evaluation order.

    Raises:
        ProblemError: if count < 1
    """
    if count < 1:
        raise ProblemError(f"sample count must be >= 1, got {count}")
    names = spec.dims.base_variables
    points = []
    for index, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        rng = np.random.default_rng(child)
        points.append(SamplePoint(index, spec.box.draw(rng, names), rng))
    return points


def _report(check: BaseCheck, spec: ProblemSpec, started: float, **kwargs) -> CheckReport:
    kwargs.setdefault("tolerance", spec.tolerance(check.tolerance_key))
    return CheckReport(check.name, seconds=time.perf_counter() - started, **kwargs)


def run_check(check: BaseCheck, spec: ProblemSpec) -> CheckReport:
    """Evaluate one check at all of its samples and report the worst case."""
    started = time.perf_counter()
    ctx = CheckContext(spec, fault=spec.fault == check.name)
    extra = {"problem": spec.name, "check": check.name}

    reason = check.skip_reason(ctx)
    if reason is not None:
        logger.info(f"skipped: {reason}", extra=extra)
        return _report(check, spec, started, status="skipped", detail=reason)

    tolerance = spec.tolerance(check.tolerance_key)
    worst: SampleOutcome | None = None
    skips: list[str] = []
    points = sample(spec, check.sample_count(spec), spec.seed)
    for point in points:
        try:
            outcome = check.evaluate(ctx, point)
        except SkipSample as e:
            skips.append(str(e))
            continue
        except (TripleError, ArithmeticError, np.linalg.LinAlgError) as e:
            logger.info(f"failed at sample {point.index}: {e}", extra=extra)
            return _report(
                check, spec, started, status="fail", violation=float("inf"),
                location=point.x.tolist(), detail=f"sample {point.index}: {e}",
            )
        except Exception as e:
            logger.exception(f"error at sample {point.index}: {e!r}", extra=extra)
            return _report(
                check, spec, started, status="error", location=point.x.tolist(),
                detail=f"sample {point.index}: {type(e).__name__}: {e}",
            )
        if worst is None or outcome.violation > worst.violation or np.isnan(outcome.violation):
            worst = outcome
            if np.isnan(outcome.violation):
                break

    if worst is None:
        detail = skips[0] if skips else "no samples"
        logger.info(f"skipped at every sample: {detail}", extra=extra)
        return _report(check, spec, started, status="skipped", detail=detail)

    status = "pass" if worst.violation <= tolerance else "fail"
    logger.info(f"{status} (violation {worst.violation:.3e}, tol {tolerance:.1e})", extra=extra)
    return _report(
        check, spec, started, status=status, violation=float(worst.violation),
        location=worst.location, detail=worst.detail,
    )


def configuration_error(message: str) -> CheckReport:
    return CheckReport(CONFIGURATION, status="error", detail=message)


def full_suite(
    spec: ProblemSpec,
    workers: int | None = None,
    names: Iterable[str] | None = None,
) -> list[CheckReport]:
    """Run every registered check (or the named ones) on spec.

    Configuration problems come back as a single report named "configuration"
    with status "error" instead of an exception.
    """
    try:
        spec.validate()
    except TripleError as e:
        logger.error(f"invalid problem: {e}", extra={"problem": spec.name})
        return [configuration_error(str(e))]

    registry = get_registry()
    if names is None:
        checks = registry.get_all()
    else:
        checks = []
        for name in names:
            check = registry.get(name)
            if check is None:
                return [configuration_error(f"unknown check {name!r}")]
            checks.append(check)

    workers = workers if workers is not None else get_config().workers
    if workers > 1 and len(checks) > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="check") as pool:
            reports = list(pool.map(lambda c: run_check(c, spec), checks))
    else:
        reports = [run_check(c, spec) for c in checks]
    return sorted(reports, key=lambda r: r.name)


def exit_code(reports: Iterable[CheckReport]) -> int:
    """0 when nothing failed, 1 on any failure, 2 on a configuration error or a crash."""
    statuses = {r.status for r in reports}
    if "error" in statuses:
        return 2
    return 1 if "fail" in statuses else 0
