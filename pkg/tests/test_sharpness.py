"""Tests for the extremizer families and scaling-exponent experiments."""

import math

import numpy as np
import pytest

from cavlab import sharpness as sh
from cavlab.averaging import QuadratureSpec
from cavlab.curves import parse_curve
from cavlab.errors import AdmissibilityError, DomainError, GridBudgetError
from cavlab.grids import measure
from cavlab.regions import FAMILY_KINDS

SQUARE = parse_curve("kind=power d=2")
CUBE = parse_curve("kind=power d=3")
FLAT = parse_curve("kind=flat_exp a=1")
SHORT = tuple(2.0 ** -k for k in range(3, 7))


def power_law(exponent, scale=1.0, widths=SHORT):
    return [(e, scale * e ** exponent) for e in widths]


class TestFamilyConstruction:

    def test_rejects_unknown_kind(self):
        with pytest.raises(DomainError, match="kind"):
            sh.ExtremizerFamily("cube_v", SQUARE)

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.5, 2.0])
    def test_rejects_bad_delta(self, delta):
        with pytest.raises(DomainError, match="delta"):
            sh.ExtremizerFamily("ball", SQUARE, delta=delta)

    def test_tilted_needs_slope_gap_at_endpoint(self):
        # gamma(t) = t has g'(1) = g(1), so the tilt direction degenerates
        with pytest.raises(AdmissibilityError):
            sh.ExtremizerFamily("tilted_box", parse_curve("kind=power d=1"))

    def test_default_sequence(self):
        for kind in FAMILY_KINDS:
            seq = sh.default_eps_sequence(kind)
            assert seq == tuple(2.0 ** -k for k in range(3, 8))
        with pytest.raises(DomainError):
            sh.default_eps_sequence("nonsense")

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_auto_grids_fit_budget(self, kind):
        fam = sh.ExtremizerFamily(kind, SQUARE)
        for eps in (0.125, sh.EPS_FLOORS[kind]):
            for spec in (sh.input_grid(fam, eps), sh.output_grid(fam, eps)):
                assert spec.n1 * spec.n2 * max(spec.nu, 1) <= 2 ** 26
        with pytest.raises(DomainError):
            sh.input_grid(fam, 0.0)
        with pytest.raises(DomainError):
            sh.output_grid(fam, -0.25)


class TestBuildFamily:

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_values_are_binary(self, kind):
        f = sh.build_family(sh.ExtremizerFamily(kind, SQUARE), 0.125)
        assert set(np.unique(f.values)) <= {0.0, 1.0}
        assert f.values.sum() > 0

    def test_box_measure_exact(self):
        # half-widths eps and gamma(eps) align with the auto grid's cells
        f = sh.build_family(sh.ExtremizerFamily("curve_box", SQUARE), 0.25)
        assert measure(f) == pytest.approx(4 * 0.25 * 0.25 ** 2, abs=1e-12)

    def test_ball_measure(self):
        f = sh.build_family(sh.ExtremizerFamily("ball", SQUARE), 0.2)
        assert measure(f) == pytest.approx(math.pi * 0.025 ** 2, rel=0.05)

    def test_tilted_box_projections(self):
        eps = 0.1
        f = sh.build_family(sh.ExtremizerFamily("tilted_box", SQUARE), eps)
        assert measure(f) == pytest.approx(12 * eps * 14 * eps ** 2, rel=0.02)
        xc = f.spec.x1_centers()[:, None] + 0.0 * f.spec.x2_centers()
        yc = 0.0 * f.spec.x1_centers()[:, None] + f.spec.x2_centers()
        m = f.values > 0
        d1 = 2.0  # g'(1) for the parabola
        nrm = math.hypot(1.0, d1)
        p1 = (-xc[m] - d1 * yc[m]) / nrm
        p2 = (-d1 * xc[m] + yc[m]) / nrm
        assert np.abs(p1).max() <= 6 * eps + 1e-12
        assert np.abs(p2).max() <= 7 * eps ** 2 + 1e-12

    def test_adjoint_cylinder_slab(self):
        eps = 0.2
        fam = sh.ExtremizerFamily("adjoint_cylinder", SQUARE)
        g = sh.build_family(fam, eps)
        per_slice = g.values.sum(axis=(0, 1)) * g.spec.cell_area
        live = per_slice > 0
        # dilation range (1, 1 + 2 eps) holds the slab [1, 1 + eps] in its
        # lower half: exactly the first 16 of 32 slices
        assert live.sum() == 16
        assert not live[16:].any()
        rho = fam.delta * eps
        assert per_slice[live] == pytest.approx(math.pi * rho ** 2, rel=0.05)

    def test_tube_support_window(self):
        eps = 0.125
        f = sh.build_family(sh.ExtremizerFamily("curve_tube", SQUARE), eps)
        rows = np.where(f.values.any(axis=1))[0]
        x1 = f.spec.x1_centers()[rows]
        # reflected unit-dilation neighborhood sits in [-1 - eps, eps]
        assert x1.min() >= -1.0 - eps - f.spec.dx1
        assert x1.max() <= eps + f.spec.dx1


class TestFitExponent:

    def test_exact_power_law(self):
        fit = sh.fit_exponent(power_law(0.5, scale=3.0))
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit.stderr < 1e-12
        assert fit.predicted is None and fit.consistent is None

    def test_constant_samples(self):
        fit = sh.fit_exponent(power_law(0.0, scale=7.0))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(7.0), abs=1e-12)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(5)
        widths = [2.0 ** -k for k in range(1, 9)]
        samples = [(e, 3.0 * e ** 0.5 * math.exp(rng.normal(0.0, 0.05)))
                   for e in widths]
        fit = sh.fit_exponent(samples)
        assert 0.4 < fit.slope < 0.6
        assert fit.stderr > 0.0

    @pytest.mark.parametrize("predicted,expected", [
        (2.0, True),      # measuring less than predicted never contradicts
        (0.5, True),
        (0.4, True),      # within tolerance above
        (-2.0, False),    # measured far above the prediction
    ])
    def test_consistency_is_one_sided(self, predicted, expected):
        fit = sh.fit_exponent(power_law(0.5), predicted=predicted)
        assert fit.consistent is expected
        assert fit.predicted == predicted

    @pytest.mark.parametrize("samples", [
        power_law(0.5)[:3],
        list(reversed(power_law(0.5))),
        [(0.5, 1.0), (0.25, 1.0), (0.2, 1.0), (0.1, 1.0)],
        [(e, 0.0) for e in SHORT],
        [(e, -1.0) for e in SHORT],
        [(e, math.nan) for e in SHORT],
        [(-e, 1.0) for e in reversed(SHORT)],
    ])
    def test_rejects_bad_samples(self, samples):
        with pytest.raises(DomainError):
            sh.fit_exponent(samples)


class TestRunExperiment:

    def test_below_floor_widths_are_dropped(self):
        fam = sh.ExtremizerFamily("adjoint_cylinder", SQUARE)
        with pytest.raises(GridBudgetError, match="survive"):
            sh.run_experiment(fam, (2 / 3, 1 / 3),
                              [2.0 ** -8, 2.0 ** -9, 2.0 ** -10, 2.0 ** -11])

    @pytest.mark.parametrize("seq", [
        [],
        [0.25, -0.125, 0.0625, 0.03125],
        [0.125, 0.25, 0.0625, 0.03125],
    ])
    def test_rejects_bad_sequences(self, seq):
        fam = sh.ExtremizerFamily("adjoint_cylinder", SQUARE)
        with pytest.raises(DomainError):
            sh.run_experiment(fam, (2 / 3, 1 / 3), seq)

    def test_workers_do_not_change_results(self):
        fam = sh.ExtremizerFamily("adjoint_cylinder", SQUARE)
        serial = sh.run_experiment(fam, (2 / 3, 1 / 3), SHORT)
        pooled = sh.run_experiment(fam, (2 / 3, 1 / 3), SHORT, workers=3)
        assert serial == pooled

    def test_adjoint_matches_prediction(self):
        fam = sh.ExtremizerFamily("adjoint_cylinder", SQUARE)
        samples = sh.run_experiment(fam, (2 / 3, 1 / 3))
        assert [e for e, _ in samples] == list(sh.default_eps_sequence(fam.kind))
        fit = sh.fit_exponent(samples, predicted=1 / 3)
        assert fit.consistent
        v = sh.verdict(fit, (2 / 3, 1 / 3), SQUARE, "adjoint_cylinder")
        assert v.mode == "matched" and bool(v)

    def test_ball_l2_slope(self):
        fam = sh.ExtremizerFamily("ball", SQUARE)
        fit = sh.fit_exponent(sh.run_experiment(fam, (0.5, 0.5), SHORT))
        assert fit.slope == pytest.approx(0.5, abs=0.05)

    def test_ball_sup_norm_blowup(self):
        fam = sh.ExtremizerFamily("ball", SQUARE)
        fit = sh.fit_exponent(sh.run_experiment(fam, (1.0, 0.0), SHORT))
        assert fit.slope <= -0.8
        v = sh.verdict(fit, (1.0, 0.0), SQUARE, "ball")
        assert v.region_requirement == "blow_up"
        assert v.region_consistent and bool(v)


class TestScalingInvariants:

    def test_ball_slope_tracks_integrability(self):
        fam = sh.ExtremizerFamily("ball", SQUARE)
        lo = sh.fit_exponent(sh.run_experiment(fam, (0.5, 0.25), SHORT)).slope
        hi = sh.fit_exponent(sh.run_experiment(fam, (0.5, 0.75), SHORT)).slope
        assert lo == pytest.approx(0.25, abs=0.05)
        assert hi == pytest.approx(0.75, abs=0.05)
        assert hi > lo

    def test_quadrature_refinement_keeps_slope(self):
        fam = sh.ExtremizerFamily("ball", SQUARE)
        base = sh.fit_exponent(sh.run_experiment(fam, (0.5, 0.5), SHORT)).slope
        fine = sh.fit_exponent(sh.run_experiment(
            fam, (0.5, 0.5), SHORT, quad=QuadratureSpec(nodes=16384))).slope
        assert abs(base - fine) < 0.05

    def test_tube_single_dilation_slope(self):
        fam = sh.ExtremizerFamily("curve_tube", SQUARE)
        fit = sh.fit_exponent(sh.run_experiment(fam, (0.5, 0.5), SHORT))
        assert fit.slope == pytest.approx(0.5, abs=0.1)
        assert fit.stderr < 0.05

    def test_box_cubic_curve_slope(self):
        fam = sh.ExtremizerFamily("curve_box", CUBE)
        fit = sh.fit_exponent(sh.run_experiment(fam, (2 / 3, 1 / 3), SHORT))
        assert fit.slope == pytest.approx(-1 / 3, abs=0.05)

    def test_adjoint_blowup_outside_region(self):
        # (3/4, 1/8) violates the adjoint-cylinder condition, so the ratio
        # must grow as the cylinder shrinks
        fam = sh.ExtremizerFamily("adjoint_cylinder", SQUARE)
        fit = sh.fit_exponent(sh.run_experiment(fam, (0.75, 0.125)))
        assert fit.slope <= -0.2
        v = sh.verdict(fit, (0.75, 0.125), SQUARE, "adjoint_cylinder")
        assert v.matched and v.region_requirement == "blow_up"
        assert v.region_consistent and bool(v)


class TestVerdict:

    def test_lower_bound_mode(self):
        fit = sh.fit_exponent(power_law(0.2))
        v = sh.verdict(fit, (0.5, 0.5), SQUARE, "ball")
        assert not v.matched and v.consistent
        assert v.mode == "lower_bound"
        assert v.in_sufficient and v.region_requirement == "bounded"
        assert bool(v)

    def test_inconsistent_mode(self):
        fit = sh.fit_exponent(power_law(1.2))
        v = sh.verdict(fit, (0.5, 0.5), SQUARE, "ball")
        assert v.mode == "inconsistent"
        assert not bool(v)

    def test_missing_blowup_is_flagged(self):
        # (0.5, 0.15) lies outside the bounded region, so a flat ratio
        # contradicts the classification even though it matches arithmetic
        fit = sh.fit_exponent(power_law(0.1))
        v = sh.verdict(fit, (0.5, 0.15), SQUARE, "ball")
        assert v.consistent and v.matched
        assert v.region_requirement == "blow_up"
        assert not v.region_consistent and not bool(v)

    def test_boundary_pair_forces_nothing(self):
        fit = sh.fit_exponent(power_law(1 / 3))
        v = sh.verdict(fit, (2 / 3, 1 / 3), SQUARE, "adjoint_cylinder")
        assert v.in_necessary and not v.in_sufficient
        assert v.region_requirement is None and v.region_consistent

    def test_flat_curve_skips_region_check(self):
        fit = sh.fit_exponent(power_law(0.5))
        v = sh.verdict(fit, (0.5, 0.5), FLAT, "ball")
        assert v.in_necessary is None and v.in_sufficient is None
        assert v.region_requirement is None and v.region_consistent

    def test_reports_pair_and_tolerance(self):
        fit = sh.fit_exponent(power_law(0.5))
        v = sh.verdict(fit, (0.5, 0.5), SQUARE, "ball", tolerance=0.2)
        assert (v.inv_p, v.inv_q, v.tolerance) == (0.5, 0.5, 0.2)
        assert v.kind == "ball" and v.predicted == 0.5


class TestLowerConstant:

    def test_box_constant(self):
        fam = sh.ExtremizerFamily("curve_box", SQUARE)
        c = sh.measured_lower_constant(fam, 0.125)
        assert 0.05 < c < 1.0

    def test_ball_constant(self):
        fam = sh.ExtremizerFamily("ball", SQUARE)
        c = sh.measured_lower_constant(fam, 0.125)
        assert 0.05 < c < 1.0

    def test_unsupported_kind(self):
        fam = sh.ExtremizerFamily("curve_tube", SQUARE)
        with pytest.raises(DomainError):
            sh.measured_lower_constant(fam, 0.125)
