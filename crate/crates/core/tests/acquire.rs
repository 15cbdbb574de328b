use autoscope::acquire::*;
use std::collections::HashSet;
use autoscope::field::{Grid, Pixel, ScalarField2D};
use autoscope::gp::Posterior;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn posterior(mean: Vec<f64>, std: Vec<f64>, w: usize, h: usize) -> Posterior {
    let g = Grid::new(w, h, [w as f64, h as f64]).unwrap();
    Posterior {
        mean: ScalarField2D::from_values(g, mean).unwrap(),
        std: ScalarField2D::from_values(g, std).unwrap(),
    }
}

#[test]
fn mask_shape() {
    let all = edge_mask(10, 8, 0).unwrap();
    assert!(all.values.iter().all(|&v| v == 1.0));
    let m = edge_mask(20, 20, 4).unwrap();
    for px in (0..400).map(|i| m.grid().pixel(i)) {
        let d = px.row.min(px.col).min(19 - px.row).min(19 - px.col);
        if d == 0 {
            assert_eq!(m.get(px), 0.0);
        }
        if d >= 4 {
            assert_eq!(m.get(px), 1.0);
        }
    }
    assert!((m.get(Pixel::new(10, 2)) - 0.5).abs() < 1e-12);
    assert!(edge_mask(10, 10, 6).is_err());
}

#[test]
fn ucb_with_zero_beta_is_masked_mean() {
    let p = posterior(vec![1.0, -2.0, 3.0, 0.5], vec![0.3, 0.1, 0.2, 0.9], 2, 2);
    let mask = ScalarField2D::from_values(p.mean.grid(), vec![1.0, 0.5, 0.0, 1.0]).unwrap();
    let spec = AcquisitionSpec {
        kind: AcquisitionKind::Ucb,
        beta: 0.0,
        ..AcquisitionSpec::default()
    };
    let a = evaluate(&spec, &p, &mask, &HashSet::new()).unwrap();
    assert_eq!(a.values, vec![1.0, -1.0, 0.0, 0.5]);
}

#[test]
fn ei_conventions_and_value() {
    let spec = AcquisitionSpec {
        kind: AcquisitionKind::Ei,
        best_so_far: 0.0,
        xi: 0.0,
        ..AcquisitionSpec::default()
    };
    assert_eq!(acquisition_value(&spec, 5.0, 0.0), 0.0);
    // Oracle: Φ(1) + φ(1) from tabulated normal values.
    let expect = 0.841_344_746_068_542_9 + 0.241_970_724_519_143_37;
    let p = posterior(vec![1.0], vec![1.0], 1, 1);
    let mask = edge_mask(1, 1, 0).unwrap();
    let a = evaluate(&spec, &p, &mask, &HashSet::new()).unwrap();
    assert!((a.values[0] - expect).abs() < 1e-12, "{} vs {expect}", a.values[0]);
    assert!((a.values[0] - 1.0833).abs() < 1e-4);
}

#[test]
fn visited_pixels_are_excluded() {
    let p = posterior(vec![0.0; 4], vec![1.0; 4], 2, 2);
    let mask = edge_mask(2, 2, 0).unwrap();
    let visited: HashSet<Pixel> = [Pixel::new(0, 1)].into_iter().collect();
    let a = evaluate(&AcquisitionSpec::default(), &p, &mask, &visited).unwrap();
    assert_eq!(a.values[1], f64::NEG_INFINITY);
    let top = top_maxima(&a, 4, 0.0).unwrap();
    assert_eq!(top.len(), 3);
    assert!(top.iter().all(|c| c.pixel != Pixel::new(0, 1)));
    let wrong = edge_mask(3, 2, 0).unwrap();
    assert!(evaluate(&AcquisitionSpec::default(), &p, &wrong, &visited).is_err());
}

#[test]
fn top_maxima_tie_break_and_spikes() {
    let g = Grid::new(20, 20, [20.0, 20.0]).unwrap();
    let flat = ScalarField2D::filled(g, 1.0);
    let top = top_maxima(&flat, 1, 0.0).unwrap();
    assert_eq!(top[0].pixel, Pixel::new(0, 0));

    let mut spikes = ScalarField2D::filled(g, 0.0);
    spikes.set(Pixel::new(5, 2), 2.0);
    spikes.set(Pixel::new(5, 12), 3.0);
    let top = top_maxima(&spikes, 2, 3.0).unwrap();
    assert_eq!(top[0].pixel, Pixel::new(5, 12));
    assert_eq!(top[1].pixel, Pixel::new(5, 2));
    assert!(top_maxima(&spikes, 0, 1.0).is_err());
}

/// Brute-force NMS: scan all pixels each round.
fn nms_oracle(acq: &ScalarField2D, k: usize, min_sep: f64) -> Vec<Pixel> {
    let g = acq.grid();
    let mut out: Vec<Pixel> = Vec::new();
    while out.len() < k {
        let mut best: Option<(Pixel, f64)> = None;
        for i in 0..g.len() {
            let px = g.pixel(i);
            let v = acq.values[i];
            if v == f64::NEG_INFINITY || out.iter().any(|o| o.dist(px) < min_sep) {
                continue;
            }
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((px, v));
            }
        }
        match best {
            Some((px, _)) => out.push(px),
            None => break,
        }
    }
    out
}

#[test]
fn top_maxima_matches_brute_force() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let g = Grid::new(24, 24, [24.0, 24.0]).unwrap();
    for _ in 0..20 {
        let acq = ScalarField2D::from_fn(g, |_| rng.gen::<f64>());
        let top = top_maxima(&acq, 5, 4.0).unwrap();
        let px: Vec<Pixel> = top.iter().map(|c| c.pixel).collect();
        assert_eq!(px, nms_oracle(&acq, 5, 4.0));
        for (i, a) in px.iter().enumerate() {
            for b in &px[..i] {
                assert!(a.dist(*b) >= 4.0);
            }
        }
    }
}

#[test]
fn pathfind_basics() {
    let policy = PathfinderPolicy {
        mode: PathfinderMode::Nearest,
        ..PathfinderPolicy::default()
    };
    let one = [Pixel::new(3, 3)];
    assert_eq!(pathfind(&one, Pixel::new(0, 0), &policy, 1.0).unwrap(), vec![0]);
    let line = [Pixel::new(0, 3), Pixel::new(0, 1), Pixel::new(0, 2)];
    assert_eq!(pathfind(&line, Pixel::new(0, 0), &policy, 1.0).unwrap(), vec![1, 2, 0]);
    assert!(pathfind(&[], Pixel::new(0, 0), &policy, 1.0).is_err());
}

#[test]
fn directional_prefers_direction() {
    // From the origin, a candidate 2 px left and one 3 px right.
    let cands = [Pixel::new(5, 3), Pixel::new(5, 8)];
    let start = Pixel::new(5, 5);
    let nearest = PathfinderPolicy {
        mode: PathfinderMode::Nearest,
        ..PathfinderPolicy::default()
    };
    assert_eq!(pathfind(&cands, start, &nearest, 1.0).unwrap(), vec![0, 1]);
    let directional = PathfinderPolicy {
        mode: PathfinderMode::Directional,
        preferred_dir: [1.0, 0.0],
        dir_penalty: 5.0,
        ..PathfinderPolicy::default()
    };
    assert_eq!(pathfind(&cands, start, &directional, 1.0).unwrap(), vec![1, 0]);
}

fn crossings(cands: &[Pixel], start: Pixel, tour: &[usize]) -> usize {
    let mut nodes = vec![start];
    nodes.extend(tour.iter().map(|&i| cands[i]));
    let mut count = 0;
    for i in 0..nodes.len() - 1 {
        for j in i + 1..nodes.len() - 1 {
            if properly_intersect(nodes[i], nodes[i + 1], nodes[j], nodes[j + 1]) {
                count += 1;
            }
        }
    }
    count
}

#[test]
fn non_crossing_random_sets() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let policy = PathfinderPolicy::default();
    for _ in 0..200 {
        let cands: Vec<Pixel> = (0..5)
            .map(|_| Pixel::new(rng.gen_range(0..50), rng.gen_range(0..50)))
            .collect();
        let start = Pixel::new(rng.gen_range(0..50), rng.gen_range(0..50));
        let tour = pathfind(&cands, start, &policy, 1.0).unwrap();
        assert_eq!(crossings(&cands, start, &tour), 0);
    }
}

proptest! {
    #[test]
    fn pathfind_is_permutation_and_2opt_never_lengthens(
        pts in proptest::collection::vec((0usize..40, 0usize..40), 1..12),
        start in (0usize..40, 0usize..40),
    ) {
        let cands: Vec<Pixel> = pts.iter().map(|&(r, c)| Pixel::new(r, c)).collect();
        let start = Pixel::new(start.0, start.1);
        for mode in [PathfinderMode::Nearest, PathfinderMode::NonCrossing, PathfinderMode::Directional] {
            let policy = PathfinderPolicy { mode, dir_penalty: 3.0, ..PathfinderPolicy::default() };
            let mut tour = pathfind(&cands, start, &policy, 1.0).unwrap();
            tour.sort_unstable();
            prop_assert_eq!(tour, (0..cands.len()).collect::<Vec<_>>());
        }
        let nearest = PathfinderPolicy { mode: PathfinderMode::Nearest, ..PathfinderPolicy::default() };
        let nn = pathfind(&cands, start, &nearest, 1.0).unwrap();
        let improved = pathfind(&cands, start, &PathfinderPolicy::default(), 1.0).unwrap();
        prop_assert!(tour_length(&cands, start, &improved) <= tour_length(&cands, start, &nn) + 1e-9);
        prop_assert_eq!(crossings(&cands, start, &improved), 0);
    }

    #[test]
    fn argmax_invariant_under_positive_scaling(seed in 0u64..1000, c in 0.01..100.0f64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(16, 16, [16.0, 16.0]).unwrap();
        let acq = ScalarField2D::from_fn(g, |_| rng.gen::<f64>());
        let scaled = acq.map(|v| v * c);
        let a: Vec<Pixel> = top_maxima(&acq, 4, 3.0).unwrap().iter().map(|c| c.pixel).collect();
        let b: Vec<Pixel> = top_maxima(&scaled, 4, 3.0).unwrap().iter().map(|c| c.pixel).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn unmasked_evaluate_matches_formulas(seed in 0u64..1000) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (6, 5);
        let mean: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let std: Vec<f64> = (0..w * h).map(|i| if i % 7 == 0 { 0.0 } else { rng.gen_range(0.0..1.5) }).collect();
        let p = posterior(mean.clone(), std.clone(), w, h);
        let ones = edge_mask(w, h, 0).unwrap();
        for kind in [AcquisitionKind::MaxVariance, AcquisitionKind::Ucb, AcquisitionKind::Ei, AcquisitionKind::Pi] {
            let spec = AcquisitionSpec { kind, beta: 1.5, xi: 0.1, best_so_far: 0.3 };
            let a = evaluate(&spec, &p, &ones, &HashSet::new()).unwrap();
            for i in 0..w * h {
                let direct = acquisition_value(&spec, mean[i], std[i]);
                prop_assert!((a.values[i] - direct).abs() <= 1e-12);
                if kind == AcquisitionKind::Ei {
                    prop_assert!(a.values[i] >= -1e-12);
                }
            }
        }
    }
}
