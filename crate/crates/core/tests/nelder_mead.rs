use autoscope::gp::*;

#[test]
fn finds_rosenbrock_valley_floor() {
    let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let out = minimize(&mut f, &[-1.0, 1.0], &[0.5, 0.5], &[-5.0, -5.0], &[5.0, 5.0], 2000);
    assert!(out.f < 1e-6, "{}", out.f);
}

#[test]
fn respects_bounds() {
    let mut f = |x: &[f64]| (x[0] - 10.0).powi(2);
    let out = minimize(&mut f, &[0.0], &[1.0], &[-1.0], &[2.0], 200);
    assert_eq!(out.x[0], 2.0);
}
