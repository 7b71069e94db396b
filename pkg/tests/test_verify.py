"""Tests for sampling, the check runner and the bundled problem files."""

import math
from dataclasses import replace

import numpy as np
import pytest

from cli import load_problem
from fieldtriple_core.dynamics import sl_point, sl_tangent_basis
from fieldtriple_core.errors import ProblemError
from fieldtriple_core.geometry import BundleDims
from tests.conftest import DIRICHLET_H, DIRICHLET_L, PROBLEMS_DIR
from verify import (
    BaseCheck,
    Box,
    CheckReport,
    ProblemSpec,
    SampleOutcome,
    SkipSample,
    check_lagrangian_submanifold,
    equations,
    exit_code,
    full_suite,
    get_registry,
    run_check,
    sample,
    structural,
    submanifolds,
)
from verify.runner import CONFIGURATION
from verify.structural import KERNEL_DIMS, kernel_defect

FAST = 3
ALL_CHECKS = get_registry().get_names()
AFFINE_L = "x1*x2 + u1^2 + u1*u1_1 + (x1 - u1)*u1_2"


def statuses(reports: list[CheckReport]) -> dict[str, str]:
    return {r.name: r.status for r in reports}


@pytest.fixture
def dirichlet_spec(dims21) -> ProblemSpec:
    return ProblemSpec(
        "dirichlet",
        dims21,
        lagrangian=DIRICHLET_L,
        hamiltonian=DIRICHLET_H,
        sections={"harmonic": ["x1^2 - x2^2"]},
        samples=FAST,
        seed=9,
    )


class _Constant(BaseCheck):
    def __init__(self, value: float):
        self.value = value

    @property
    def name(self) -> str:
        return "constant"

    @property
    def tolerance_key(self):
        return "eq"

    def evaluate(self, ctx, sample):
        return SampleOutcome(self.value, sample.x.tolist())


class _Raising(_Constant):
    def __init__(self, exc: Exception):
        self.exc = exc

    def evaluate(self, ctx, sample):
        raise self.exc


class TestSampling:
    def test_deterministic(self, dirichlet_spec):
        a = sample(dirichlet_spec, 5, 7)
        b = sample(dirichlet_spec, 5, 7)
        assert all(np.array_equal(p.x, q.x) for p, q in zip(a, b, strict=True))

    def test_prefix_stable(self, dirichlet_spec):
        short = sample(dirichlet_spec, 2, 7)
        long = sample(dirichlet_spec, 6, 7)
        for p, q in zip(short, long, strict=False):
            assert np.array_equal(p.x, q.x)
            assert p.rng.uniform() == q.rng.uniform()

    def test_points_inside_box(self, dims21):
        spec = ProblemSpec(
            "boxed", dims21, lagrangian=DIRICHLET_L,
            box=Box((-1.0, 1.0), {"x2": (5.0, 6.0)}),
        )
        for point in sample(spec, 20, 0):
            assert -1.0 <= point.x[0] <= 1.0
            assert 5.0 <= point.x[1] <= 6.0

    def test_count_must_be_positive(self, dirichlet_spec):
        with pytest.raises(ProblemError):
            sample(dirichlet_spec, 0, 1)

    @pytest.mark.parametrize("interval", [(1.0, 1.0), (2.0, -2.0), (0.0, math.inf)])
    def test_box_rejects_bad_interval(self, interval):
        with pytest.raises(ProblemError):
            Box(interval)


class TestRunCheck:
    def test_pass_and_fail_against_tolerance(self, dirichlet_spec):
        assert run_check(_Constant(0.0), dirichlet_spec).status == "pass"
        report = run_check(_Constant(1.0), dirichlet_spec)
        assert report.status == "fail"
        assert report.violation == 1.0
        assert report.tolerance == dirichlet_spec.tolerance("eq")

    def test_numerical_exception_fails_with_infinite_violation(self, dirichlet_spec):
        report = run_check(_Raising(ZeroDivisionError("boom")), dirichlet_spec)
        assert report.status == "fail"
        assert math.isinf(report.violation)
        assert report.to_dict()["violation"] == "inf"
        assert "boom" in report.detail

    def test_skipped_at_every_sample(self, dirichlet_spec):
        report = run_check(_Raising(SkipSample("not here")), dirichlet_spec)
        assert report.status == "skipped"
        assert report.detail == "not here"

    def test_fault_does_not_touch_the_reported_violation(self, dirichlet_spec):
        # a check that compares nothing has nothing to corrupt
        dirichlet_spec.fault = "constant"
        report = run_check(_Constant(0.0), dirichlet_spec)
        assert report.status == "pass"
        assert report.violation == 0.0

    def test_unexpected_exception_is_an_error(self, dirichlet_spec):
        report = run_check(_Raising(KeyError("u9")), dirichlet_spec)
        assert report.status == "error"
        assert "KeyError" in report.detail
        assert report.location is not None
        assert exit_code([report]) == 2


class TestFullSuite:
    def test_registry_names(self):
        names = get_registry().get_names()
        assert names == sorted(names)
        for expected in (
            "exchange_involution",
            "torsion_inverse",
            "kernel_dimension",
            "el_residual",
            "hdw_residual",
            "lagrangian_submanifold_sl",
            "sl_equals_sh",
        ):
            assert expected in names

    def test_reports_sorted(self, dirichlet_spec):
        reports = full_suite(dirichlet_spec, workers=1)
        assert [r.name for r in reports] == sorted(r.name for r in reports)
        assert len(reports) == len(get_registry().get_names())

    def test_workers_do_not_change_results(self, dirichlet_spec):
        def strip(reports):
            return [(r.name, r.status, r.violation, r.location, r.detail) for r in reports]

        serial = full_suite(dirichlet_spec, workers=1)
        parallel = full_suite(dirichlet_spec, workers=4)
        assert strip(serial) == strip(parallel)

    def test_broken_check_does_not_stop_the_suite(self, dirichlet_spec):
        registry = get_registry()
        registry.register(_Raising(KeyError("u9")))
        try:
            reports = full_suite(dirichlet_spec, workers=1)
        finally:
            registry.unregister("constant")
        result = statuses(reports)
        assert result["constant"] == "error"
        assert result["el_residual"] == "pass"
        assert len(reports) == len(registry.get_names()) + 1
        assert exit_code(reports) == 2

    def test_injected_fault_is_caught(self, dirichlet_spec):
        dirichlet_spec.fault = "flat_omega_dual_path"
        (report,) = full_suite(dirichlet_spec, workers=1, names=["flat_omega_dual_path"])
        assert report.status == "fail"
        assert exit_code([report]) == 1

    @pytest.mark.parametrize(
        "changes",
        [
            {"samples": 0},
            {"lagrangian": "u1_1 +"},
            {"tolerances": {"speed": 1.0}},
            {"sections": {"bad": ["x1", "x2"]}},
        ],
    )
    def test_configuration_errors(self, dirichlet_spec, changes):
        for key, value in changes.items():
            setattr(dirichlet_spec, key, value)
        reports = full_suite(dirichlet_spec, workers=1)
        assert [(r.name, r.status) for r in reports] == [(CONFIGURATION, "error")]
        assert exit_code(reports) == 2

    def test_unknown_check_name(self, dirichlet_spec):
        reports = full_suite(dirichlet_spec, names=["no_such_check"])
        assert reports[0].status == "error"
        assert "no_such_check" in reports[0].detail

    def test_needs_some_dynamics(self, dims21):
        reports = full_suite(ProblemSpec("empty", dims21, samples=FAST))
        assert exit_code(reports) == 2


class TestFaultInjection:
    @pytest.mark.parametrize("name", ALL_CHECKS)
    def test_every_check_fails_under_its_own_fault(self, name):
        problem = "dirichlet_2d"
        if name == "mechanics_degeneration":
            problem = "oscillator_1d"
        spec = load_problem(PROBLEMS_DIR / f"{problem}.json", samples=FAST)
        (clean,) = full_suite(spec, workers=1, names=[name])
        assert clean.status == "pass"
        spec.fault = name
        (report,) = full_suite(spec, workers=1, names=[name])
        assert report.status == "fail", report.detail

    def test_fault_is_scoped_to_one_check(self):
        spec = load_problem(PROBLEMS_DIR / "dirichlet_2d.json", samples=FAST)
        spec.fault = "el_residual"
        result = statuses(full_suite(spec, workers=1))
        assert result.pop("el_residual") == "fail"
        assert "fail" not in result.values()


@pytest.fixture
def dirichlet_problem() -> ProblemSpec:
    return load_problem(PROBLEMS_DIR / "dirichlet_2d.json", samples=FAST)


def run_one(spec: ProblemSpec, name: str) -> CheckReport:
    (report,) = full_suite(spec, workers=1, names=[name])
    return report


class TestBrokenMapsAreDetected:
    def test_torsion_not_added(self, dirichlet_problem, monkeypatch):
        monkeypatch.setattr(structural, "add_torsion", lambda connection: connection)
        assert run_one(dirichlet_problem, "torsion_inverse").status == "fail"

    def test_christoffel_symbols_ignored(self, dirichlet_problem, monkeypatch):
        exchange = structural.exchange_with_christoffel
        monkeypatch.setattr(
            structural,
            "exchange_with_christoffel",
            lambda gamma, z: exchange(np.zeros_like(gamma), z),
        )
        assert run_one(dirichlet_problem, "chart_equivariance").status == "fail"

    def test_closed_formula_sign(self, dirichlet_problem, monkeypatch):
        closed = structural.tulczyjew_A
        monkeypatch.setattr(
            structural, "tulczyjew_A", lambda z: closed(replace(z, pmom=-z.pmom))
        )
        assert run_one(dirichlet_problem, "connection_independence").status == "fail"
        assert run_one(dirichlet_problem, "pipeline_vs_direct").status == "fail"

    def test_intrinsic_flat_map(self, dirichlet_problem, monkeypatch):
        coordinate = structural.flat_omega
        monkeypatch.setattr(
            structural,
            "flat_omega_intrinsic",
            lambda z: coordinate(replace(z, ujet=-z.ujet)),
        )
        assert run_one(dirichlet_problem, "flat_omega_dual_path").status == "fail"

    def test_pullback_sign(self, dirichlet_problem, monkeypatch):
        pullback = structural.canonical_pullback_via_flat
        monkeypatch.setattr(
            structural, "canonical_pullback_via_flat", lambda z: -pullback(z)
        )
        assert run_one(dirichlet_problem, "omega_tilde_pullback").status == "fail"

    def test_missing_kernel_generator(self, dirichlet_problem, monkeypatch):
        generators = structural.omega_tilde_kernel_generators
        monkeypatch.setattr(
            structural,
            "omega_tilde_kernel_generators",
            lambda dims: generators(dims)[:-1],
        )
        assert run_one(dirichlet_problem, "kernel_dimension").status == "fail"

    def test_missing_tangent_generator(self, dirichlet_problem, monkeypatch):
        basis = submanifolds.sl_tangent_basis
        monkeypatch.setattr(
            submanifolds, "sl_tangent_basis", lambda L, z: basis(L, z)[1:]
        )
        assert run_one(dirichlet_problem, "lagrangian_submanifold_sl").status == "fail"

    def test_poincare_cartan_scale(self, dirichlet_problem, monkeypatch):
        theta = equations.pc_theta
        monkeypatch.setattr(equations, "pc_theta", lambda L, z: 2.0 * theta(L, z))
        assert run_one(dirichlet_problem, "legendre_pullback").status == "fail"

    def test_euler_lagrange_offset(self, dirichlet_problem, monkeypatch):
        residual = equations.el_residual
        monkeypatch.setattr(
            equations, "el_residual", lambda L, phi, x: residual(L, phi, x) + 1.0
        )
        assert run_one(dirichlet_problem, "jet_equivalence").status == "fail"

    def test_hdw_offset(self, dirichlet_problem, monkeypatch):
        residual = equations.hdw_residual_from_jet
        monkeypatch.setattr(
            equations, "hdw_residual_from_jet", lambda H, jet: residual(H, jet) + 1.0
        )
        assert run_one(dirichlet_problem, "hdw_jet_equivalence").status == "fail"


class TestExitCode:
    def test_precedence(self):
        ok = CheckReport("a", "pass")
        skipped = CheckReport("b", "skipped")
        failed = CheckReport("c", "fail", violation=1.0)
        broken = CheckReport(CONFIGURATION, "error")
        assert exit_code([ok, skipped]) == 0
        assert exit_code([ok, failed]) == 1
        assert exit_code([failed, broken]) == 2
        assert exit_code([]) == 0


class TestBundledProblems:
    def load(self, name: str):
        return load_problem(PROBLEMS_DIR / f"{name}.json", samples=FAST)

    def test_dirichlet_passes(self):
        reports = full_suite(self.load("dirichlet_2d"), workers=1)
        result = statuses(reports)
        assert exit_code(reports) == 0
        assert result["mechanics_degeneration"] == "skipped"
        for name in ("el_residual", "hdw_residual", "jet_equivalence",
                     "lagrangian_submanifold_sl", "sl_equals_sh", "exchange_involution"):
            assert result[name] == "pass", name

    def test_oscillator_passes(self):
        reports = full_suite(self.load("oscillator_1d"), workers=1)
        assert exit_code(reports) == 0
        assert statuses(reports)["mechanics_degeneration"] == "pass"

    def test_hyperregular_passes(self):
        reports = full_suite(self.load("quadratic_hyperregular"), workers=1)
        assert exit_code(reports) == 0
        assert statuses(reports)["sl_equals_sh"] == "pass"

    def test_broken_sign_fails_euler_lagrange(self):
        reports = full_suite(self.load("broken_sign"), workers=1)
        result = statuses(reports)
        assert result["el_residual"] == "fail"
        assert result["kernel_dimension"] == "pass"
        assert exit_code(reports) == 1

    def test_torsion_breaks_exchange_only(self):
        reports = full_suite(self.load("torsion_fixture"), workers=1)
        result = statuses(reports)
        assert result["exchange_involution"] == "fail"
        assert result["torsion_inverse"] == "pass"
        assert result["pipeline_vs_direct"] == "pass"
        assert result["connection_independence"] == "pass"
        assert exit_code(reports) == 1

    def test_mismatched_hamiltonian_fails_the_hamiltonian_side(self):
        reports = full_suite(self.load("mismatched_dual"), workers=1)
        result = statuses(reports)
        for name in ("hdw_residual", "mechanics_degeneration", "sl_equals_sh"):
            assert result[name] == "fail", name
        for name in ("el_residual", "jet_equivalence", "hdw_jet_equivalence",
                     "lagrangian_submanifold_sh", "lagrangian_submanifold_sl"):
            assert result[name] == "pass", name
        assert exit_code(reports) == 1

    def test_affine_lagrangian_skips_hamiltonian_side(self):
        reports = full_suite(self.load("affine_example"), workers=1)
        result = statuses(reports)
        assert result["lagrangian_submanifold_sl"] == "pass"
        for name in ("lagrangian_submanifold_sh", "sl_equals_sh", "el_residual",
                     "mechanics_degeneration"):
            assert result[name] == "skipped", name
        assert "fail" not in result.values()
        assert exit_code(reports) == 0


class TestSubmanifoldClassification:
    def seed_point(self, dims21, make_j1pinu, dirichlet_L):
        return sl_point(dirichlet_L, make_j1pinu(dims21))

    def test_sl_is_lagrangian(self, dims21, make_j1pinu, dirichlet_L):
        zbar = self.seed_point(dims21, make_j1pinu, dirichlet_L)
        report = check_lagrangian_submanifold(sl_tangent_basis(dirichlet_L, zbar), zbar)
        assert report.status == "pass"
        assert report.violation == 0.0
        assert "contains_kernel=True" in report.detail

    def test_missing_generator_is_only_isotropic(self, dims21, make_j1pinu, dirichlet_L):
        zbar = self.seed_point(dims21, make_j1pinu, dirichlet_L)
        generators = sl_tangent_basis(dirichlet_L, zbar)[1:]
        report = check_lagrangian_submanifold(generators, zbar)
        assert report.status == "fail"
        assert "isotropic=True" in report.detail
        assert "coisotropic=False" in report.detail

    @pytest.mark.parametrize("m, n", KERNEL_DIMS)
    def test_kernel_defect_vanishes(self, m, n):
        assert kernel_defect(BundleDims(m, n)) == 0

    def test_kernel_defect_sees_a_missing_generator(self):
        assert kernel_defect(BundleDims(2, 1), drop_generator=True) >= 1


class TestSingularLegendreMap:
    def test_reduced_sections_are_skipped(self, dims21):
        spec = ProblemSpec(
            "affine_reduced",
            dims21,
            lagrangian=AFFINE_L,
            sections={"reduced": ["x1", "x2", "0"]},
            samples=FAST,
            seed=3,
        )
        names = ["hdw_residual", "hdw_jet_equivalence"]
        reports = full_suite(spec, workers=1, names=names)
        assert statuses(reports) == {
            "hdw_residual": "skipped",
            "hdw_jet_equivalence": "skipped",
        }
        assert exit_code(reports) == 0
