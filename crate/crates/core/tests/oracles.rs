use std::f64::consts::PI;

use dphase::approx::{bump_power_integral, energy, TestField};
use dphase::conditions::{check_f1, f1_margin, ZsigmaConstants};
use dphase::densities::{eval_g, DensitySpec, ExponentConfig, WeightSpec};
use dphase::fields::{Ball, GradientMatrix, Grid};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn one_dimensional_bump_integral() {
    close(bump_power_integral(1, 1.0), 0.443_993_816_168_079_4, 1e-9);
}

#[test]
fn density_values_by_hand() {
    let step = WeightSpec::StepHolder { r: 0.25, sigma: 1.0, h: 0.2 };
    let z = GradientMatrix::from_rows(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    // only z_n^1 (component 1, direction n) is nonzero
    let x = [0.5, 0.0];
    // |z|^2 + (0.5 + 0.2) |z|^2.5
    close(DensitySpec::zhikov(2.0, 2.5, step.clone()).eval(&x, z.view()).unwrap(), 1.7, 1e-15);
    close(DensitySpec::example1(2.0, 2.5, step).eval(&x, z.view()).unwrap(), 1.7, 1e-15);
    // |z|^2 + (1 - 0.5^4)
    close(DensitySpec::example2(2.0, 4.0).eval(&x, z.view()).unwrap(), 1.9375, 1e-15);
    close(eval_g(0.5, 1.0, 4.0), 0.9375, 1e-15);
    assert_eq!(eval_g(-1.0, -2.0, 4.0), 0.0);
}

#[test]
fn closed_form_constants() {
    let c = ZsigmaConstants::two_threshold(-0.25, 0.25, 0.1, 0.5).unwrap();
    close(c.c5, 2f64.powf(0.1) * (1.0 + 0.5 / 0.5f64.powf(0.1)), 1e-15);
    let e = ExponentConfig::new(2.0, 2.5, 2, 1, 1.0).unwrap();
    close(f1_margin(&e), 0.5, 1e-15);
    assert!(check_f1(&e));
    assert!(!check_f1(&ExponentConfig::new(2.0, 4.0, 2, 1, 1.0).unwrap()));
}

#[test]
fn dirichlet_energy_of_a_linear_field() {
    let grid = Grid::cube(2, -1.0, 1.0, 256).unwrap();
    let a = GradientMatrix::from_rows(1, 2, vec![1.0, 0.0]).unwrap();
    let u = TestField::Affine { a, b: vec![0.0] }.sample(&grid).unwrap();
    let e = energy(&DensitySpec::PPower { p: 2.0 }, &u, &Ball::centered(2, 0.5).unwrap()).unwrap();
    close(e, PI * 0.25, 1e-2);
}
