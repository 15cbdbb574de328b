use autoscope::io::*;
use autoscope::field::{Grid, ScalarField2D};

#[test]
fn pgm_scales_min_to_max() {
    let g = Grid::new(3, 1, [3.0, 1.0]).unwrap();
    let f = ScalarField2D::from_values(g, vec![-1.0, 0.0, 1.0]).unwrap();
    let bytes = pgm_bytes(&f);
    assert!(bytes.starts_with(b"P5\n3 1\n255\n"));
    let (w, h, px) = parse_pgm(&bytes).unwrap();
    assert_eq!((w, h), (3, 1));
    assert_eq!(px, vec![0, 128, 255]);
}

#[test]
fn field_files_round_trip_at_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(5, 4, [10.0, 8.0]).unwrap();
    let f = ScalarField2D::from_fn(g, |p| p.row as f64 * 0.25 - p.col as f64);
    write_field(dir.path(), "img", &f).unwrap();
    let back = read_field(dir.path(), "img").unwrap();
    assert_eq!(back, f);
    let third = ScalarField2D::from_values(g, vec![1.0 / 3.0; 20]).unwrap();
    write_field(dir.path(), "third", &third).unwrap();
    let back = read_field(dir.path(), "third").unwrap();
    assert_eq!(back.values[0], (1.0f64 / 3.0) as f32 as f64);
}
