use autoscope::gp::*;

#[test]
fn factor_and_solve_small_spd() {
    let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
    let mut l = a;
    assert!(cholesky_in_place(&mut l, 3));
    for i in 0..3 {
        for j in 0..3 {
            let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
            assert!((v - a[i * 3 + j]).abs() < 1e-14);
        }
    }
    let mut x = [1.0, 2.0, 3.0];
    forward_solve(&l, 3, &mut x);
    backward_solve(&l, 3, &mut x);
    for i in 0..3 {
        let ax: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
        assert!((ax - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
    }
}

#[test]
fn rejects_indefinite() {
    let mut a = [1.0, 2.0, 2.0, 1.0];
    assert!(!cholesky_in_place(&mut a, 2));
}
