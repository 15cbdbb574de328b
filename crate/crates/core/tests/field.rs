use autoscope::field::*;

fn grid() -> Grid {
    Grid::new(4, 3, [8.0, 3.0]).unwrap()
}

#[test]
fn centers_round_trip_to_pixels() {
    let g = grid();
    for i in 0..g.len() {
        let px = g.pixel(i);
        assert_eq!(g.pixel_at(g.center(px)), px);
        assert_eq!(g.index(px), i);
    }
}

#[test]
fn bilinear_exact_at_centers_and_clamped_outside() {
    let g = grid();
    let f = ScalarField2D::from_fn(g, |p| (p.row * 10 + p.col) as f64);
    for i in 0..g.len() {
        let px = g.pixel(i);
        assert_eq!(f.bilinear(g.center(px)), f.get(px));
    }
    assert_eq!(f.bilinear([-5.0, -5.0]), 0.0);
    assert_eq!(f.bilinear([100.0, 100.0]), 23.0);
    // Halfway between (0,0) and (0,1).
    assert!((f.bilinear([2.0, 0.5]) - 0.5).abs() < 1e-12);
}

#[test]
fn rejects_bad_grids() {
    assert!(Grid::new(0, 3, [1.0, 1.0]).is_err());
    assert!(Grid::new(3, 3, [0.0, 1.0]).is_err());
    assert!(ScalarField2D::from_values(grid(), vec![0.0; 3]).is_err());
}
