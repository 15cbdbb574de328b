use autoscope::sample::*;
use autoscope::field::Pixel;
use autoscope::Error;
use proptest::prelude::*;

fn stripes(period: f64) -> PhantomConfig {
    PhantomConfig {
        period,
        ..PhantomConfig::default()
    }
}

fn unit_loop() -> SiteLoopParams {
    SiteLoopParams {
        amplitude: 1.0,
        v_plus: 1.0,
        v_minus: -1.0,
        width: 0.5,
        offset: 0.0,
    }
}

#[test]
fn stripes_alternate_in_blocks_of_period() {
    let s = gen_domain_phantom(8, 8, [100.0, 100.0], &stripes(4.0), 1).unwrap();
    for px in (0..64).map(|i| s.grid().pixel(i)) {
        let expected = if px.col < 4 { 1.0 } else { -1.0 };
        assert_eq!(s.polarization.get(px), expected, "{px:?}");
    }
}

#[test]
fn phantom_is_deterministic_and_two_valued() {
    for style in [PhantomStyle::Stripes, PhantomStyle::Bubbles, PhantomStyle::Mixed] {
        let cfg = PhantomConfig {
            style,
            ..PhantomConfig::default()
        };
        let a = gen_domain_phantom(32, 24, [64.0, 48.0], &cfg, 11).unwrap();
        let b = gen_domain_phantom(32, 24, [64.0, 48.0], &cfg, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.polarization.values.iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(a.loop_params.iter().all(|p| p.validate().is_ok()));
        assert_eq!(a.loop_params.len(), 32 * 24);
    }
}

#[test]
fn bubble_fraction_is_balanced() {
    let cfg = PhantomConfig {
        style: PhantomStyle::Bubbles,
        ..PhantomConfig::default()
    };
    let s = gen_domain_phantom(64, 64, [128.0, 128.0], &cfg, 7).unwrap();
    let plus = s.polarization.values.iter().filter(|&&v| v == 1.0).count();
    let frac = plus as f64 / 4096.0;
    assert!((0.2..=0.8).contains(&frac), "fraction {frac}");
}

#[test]
fn amplitude_dips_on_walls() {
    let s = gen_domain_phantom(16, 16, [16.0, 16.0], &stripes(4.0), 3).unwrap();
    // Columns 3|4 form a wall; column 1 is interior.
    let wall = s.params_at(Pixel::new(8, 3)).amplitude;
    let inner = s.params_at(Pixel::new(8, 1)).amplitude;
    assert!(wall < 0.8 * inner, "wall {wall} inner {inner}");
}

#[test]
fn small_phantom_rejected() {
    let err = gen_domain_phantom(7, 8, [1.0, 1.0], &PhantomConfig::default(), 0);
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

#[test]
fn loop_response_closed_forms() {
    let p = SiteLoopParams {
        v_plus: 0.0,
        v_minus: 0.0,
        offset: 0.3,
        ..unit_loop()
    };
    assert_eq!(loop_response(&p, 0.0, Branch::Ascending), 0.3);
    assert_eq!(loop_response(&p, 0.0, Branch::Descending), 0.3);
    assert_eq!(loop_response(&p, 1e6, Branch::Ascending), 1.3);
    assert_eq!(loop_response(&p, 1e6, Branch::Descending), 1.3);
    assert_eq!(loop_response(&unit_loop(), 1.0, Branch::Ascending), 0.0);
}

#[test]
fn loop_area_against_dense_oracle() {
    let p = unit_loop();
    let area = loop_area(&p, 5.0, 400).unwrap();
    let oracle = {
        let n = 100_000;
        let h = 10.0 / n as f64;
        let g = |v: f64| ((v + 1.0) / 0.5).tanh() - ((v - 1.0) / 0.5).tanh();
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * g(-5.0 + i as f64 * h)
            })
            .sum::<f64>()
            * h
    };
    assert!((area - oracle).abs() <= 1e-3 * oracle, "{area} vs {oracle}");
    // Antiderivative of tanh is w·ln cosh.
    let closed = 0.5 * 2.0 * ((12.0f64).cosh().ln() - (8.0f64).cosh().ln());
    assert!((oracle - closed).abs() < 1e-6);

    let doubled = SiteLoopParams {
        amplitude: 2.0,
        ..p
    };
    let a2 = loop_area(&doubled, 5.0, 400).unwrap();
    assert!((a2 - 2.0 * area).abs() < 1e-12);

    let flat = SiteLoopParams { v_minus: 1.0, ..p };
    assert_eq!(loop_area(&flat, 5.0, 400).unwrap(), 0.0);
    assert!(loop_area(&p, 0.0, 400).is_err());
    assert!(loop_area(&p, 1.0, 3).is_err());
}

#[test]
fn zero_dose_and_same_sign_pulses_are_no_ops() {
    let mut s = gen_domain_phantom(16, 16, [16.0, 16.0], &stripes(4.0), 1).unwrap();
    let before = s.clone();
    assert!(s.apply_pulse(Pixel::new(4, 4), 10.0, 0.0, 3.0, 9).unwrap().is_empty());
    assert_eq!(s, before);
    // Pixel (4,1) is +1 already; radius 0 touches only it.
    let flips = s.apply_pulse(Pixel::new(4, 1), 50.0, 50.0, 0.0, 9).unwrap();
    assert!(flips.is_empty());
    assert!(s.apply_pulse(Pixel::new(16, 0), 1.0, 1.0, 1.0, 0).is_err());
    assert!(s.apply_pulse(Pixel::new(0, 0), 1.0, -1.0, 1.0, 0).is_err());
}

#[test]
fn strong_pulse_flips_reliably() {
    let base = gen_domain_phantom(16, 16, [16.0, 16.0], &stripes(4.0), 1).unwrap();
    let target = Pixel::new(5, 5); // column 5 is -1
    assert_eq!(base.polarization.get(target), -1.0);
    let mut hits = 0;
    for seed in 0..1000 {
        let mut s = base.clone();
        let flips = s.apply_pulse(target, 5.0, 2.0, 0.0, seed).unwrap();
        hits += usize::from(flips == vec![target]);
    }
    let p = flip_probability(base.flip_sharpness, base.coercive_bias, 5.0, 2.0);
    assert!(p > 0.99);
    assert!(hits as f64 / 1000.0 >= 0.95, "{hits}");
}

#[test]
fn flip_frequency_matches_logistic() {
    let base = gen_domain_phantom(16, 16, [16.0, 16.0], &stripes(4.0), 1).unwrap();
    let target = Pixel::new(5, 5);
    for (bias, dose) in [(2.0, 1.0), (2.0, 1.1), (3.0, 0.6)] {
        let p = flip_probability(base.flip_sharpness, base.coercive_bias, bias, dose);
        let n = 2000;
        let hits = (0..n)
            .filter(|&seed| {
                let mut s = base.clone();
                !s.apply_pulse(target, bias, dose, 0.0, seed).unwrap().is_empty()
            })
            .count();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "p={p} freq={freq}");
    }
}

#[test]
fn sample_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_domain_phantom(12, 10, [24.0, 20.0], &PhantomConfig::default(), 5).unwrap();
    let paths = s.write(dir.path(), "sample").unwrap();
    assert_eq!(paths.len(), 3);
    let back = Sample::read(dir.path(), "sample").unwrap();
    assert_eq!(back.polarization, s.polarization);
    assert_eq!(back.coercive_bias, s.coercive_bias);
    for (a, b) in back.loop_params.iter().zip(&s.loop_params) {
        assert_eq!(a.v_plus, b.v_plus as f32 as f64);
    }
    let pgm = std::fs::read(dir.path().join("sample.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n12 10\n255\n"));
}

fn arb_loop() -> impl Strategy<Value = SiteLoopParams> {
    (0.0..3.0f64, -3.0..3.0f64, 0.0..3.0f64, 0.05..2.0f64, -1.0..1.0f64).prop_map(
        |(amplitude, v_minus, gap, width, offset)| SiteLoopParams {
            amplitude,
            v_plus: v_minus + gap,
            v_minus,
            width,
            offset,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn loop_area_nonnegative(p in arb_loop(), v_max in 0.1..10.0f64, n in 4usize..200) {
        prop_assert!(loop_area(&p, v_max, n).unwrap() >= 0.0);
    }
}

proptest! {
    #[test]
    fn loop_branches_monotone(p in arb_loop()) {
        for branch in [Branch::Ascending, Branch::Descending] {
            let ramp: Vec<f64> = (0..100)
                .map(|i| loop_response(&p, -6.0 + 12.0 * i as f64 / 99.0, branch))
                .collect();
            prop_assert!(ramp.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
