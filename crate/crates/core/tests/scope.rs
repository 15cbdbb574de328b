use autoscope::scope::*;
use autoscope::field::{Grid, ScalarField2D};
use autoscope::sample::{Sample, SiteLoopParams};
use autoscope::sample::{gen_domain_phantom, PhantomConfig};

fn window(w: f64, h: f64) -> Window {
    Window {
        x0: 0.0,
        y0: 0.0,
        x1: w,
        y1: h,
    }
}

fn still_scope() -> ScopeConfig {
    ScopeConfig {
        latency: LatencyModel {
            dwell_default: 0.01,
            slew_rate: 100.0,
            flyback: 0.2,
            decision_charge: 0.1,
        },
        ..ScopeConfig::default()
    }
}

fn constant_sample(c: f64) -> Sample {
    let mut s = gen_domain_phantom(16, 16, [16.0, 16.0], &PhantomConfig::default(), 1).unwrap();
    s.topography = s.topography.map(|_| c);
    s
}

#[test]
fn raster_and_serpentine_layout() {
    let r = plan_path(window(8.0, 6.0), &PathParams::Raster { nx: 4, ny: 3 }, 0.1, 100).unwrap();
    assert_eq!(r.waypoints.len(), 12);
    assert_eq!(r.line_breaks, vec![4, 8, 12]);
    assert!(r.waypoints[..4].windows(2).all(|w| w[0][0] < w[1][0]));
    assert_eq!(r.waypoints[0], [1.0, 1.0]);

    let s = plan_path(window(8.0, 6.0), &PathParams::Serpentine { nx: 4, ny: 2 }, 0.1, 100).unwrap();
    let row1: Vec<f64> = s.waypoints[..4].iter().map(|p| p[0]).collect();
    let row2: Vec<f64> = s.waypoints[4..].iter().map(|p| p[0]).collect();
    assert_eq!(row2, row1.iter().rev().copied().collect::<Vec<_>>());
}

#[test]
fn spiral_turn_spacing_matches_pitch() {
    let pitch = 2.0;
    let path = plan_path(
        window(100.0, 100.0),
        &PathParams::Spiral { pitch, step: 0.05 },
        0.0,
        DEFAULT_MAX_POINTS,
    )
    .unwrap();
    let [cx, cy] = [50.0, 50.0];
    // Unwrap the polar angle along the track.
    let mut theta = Vec::with_capacity(path.len());
    let mut prev = 0.0f64;
    let mut acc = 0.0;
    for p in &path.waypoints {
        let a = (p[1] - cy).atan2(p[0] - cx);
        let mut d = a - prev;
        while d > std::f64::consts::PI {
            d -= std::f64::consts::TAU;
        }
        while d < -std::f64::consts::PI {
            d += std::f64::consts::TAU;
        }
        acc += d;
        prev = a;
        theta.push(acc);
    }
    let r: Vec<f64> = path.waypoints.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).collect();
    let r_at = |t: f64| -> Option<f64> {
        let k = theta.windows(2).position(|w| w[0] <= t && t <= w[1])?;
        let f = (t - theta[k]) / (theta[k + 1] - theta[k]);
        Some(r[k] + f * (r[k + 1] - r[k]))
    };
    let mut checked = 0;
    for t in (0..200).map(|i| 4.0 * std::f64::consts::PI + 0.37 * i as f64) {
        if let (Some(a), Some(b)) = (r_at(t), r_at(t + std::f64::consts::TAU)) {
            assert!(((b - a) - pitch).abs() <= 0.01 * pitch, "θ={t}: {}", b - a);
            checked += 1;
        }
    }
    assert!(checked > 50);
    // Constant arc step.
    let steps: Vec<f64> = path
        .waypoints
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect();
    assert!(steps[20..].iter().all(|s| (s - 0.05).abs() < 1e-3));
}

#[test]
fn lissajous_and_freeform() {
    let l = plan_path(
        window(10.0, 10.0),
        &PathParams::Lissajous {
            a: 3.0,
            b: 2.0,
            delta: 0.5,
            n_points: 500,
        },
        0.0,
        1000,
    )
    .unwrap();
    assert_eq!(l.len(), 500);
    assert_eq!(l.waypoints[0][0], 5.0);

    let f = plan_path(
        window(10.0, 10.0),
        &PathParams::Freeform {
            polyline: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 3.0]],
            step: 0.5,
        },
        0.0,
        1000,
    )
    .unwrap();
    assert_eq!(f.len(), 15);
    assert_eq!(f.waypoints[8], [4.0, 0.0]);
    assert_eq!(f.waypoints[14], [4.0, 3.0]);
}

#[test]
fn planning_errors() {
    let w = window(10.0, 10.0);
    assert!(plan_path(w, &PathParams::Raster { nx: 100, ny: 100 }, 0.0, 1000).is_err());
    let degenerate = Window { x1: 0.0, ..w };
    assert!(plan_path(degenerate, &PathParams::Raster { nx: 2, ny: 2 }, 0.0, 10).is_err());
    assert!(plan_path(w, &PathParams::Spiral { pitch: 0.0, step: 1.0 }, 0.0, 10).is_err());
}

#[test]
fn constant_field_reads_back_exactly() {
    let sample = constant_sample(3.25);
    let mut sess = Session::new(still_scope(), 1).unwrap();
    let path = plan_path(window(16.0, 16.0), &PathParams::Raster { nx: 7, ny: 5 }, 0.01, 1000).unwrap();
    let exec = sess.execute(&path, &sample, Channel::Topography).unwrap();
    assert!(exec.observations.iter().all(|o| o.value == 3.25));
}

#[test]
fn single_line_time_is_dwell_sum() {
    let sample = constant_sample(0.0);
    let cfg = ScopeConfig {
        latency: LatencyModel {
            flyback: 0.0,
            ..still_scope().latency
        },
        ..still_scope()
    };
    let mut sess = Session::new(cfg, 1).unwrap();
    let n = 9;
    let path = ScanPath {
        kind: PathKind::Freeform,
        waypoints: vec![[3.0, 3.0]; n],
        dwell: 0.25,
        line_breaks: vec![n],
    };
    let exec = sess.execute(&path, &sample, Channel::Topography).unwrap();
    assert_eq!(exec.total_time, n as f64 * 0.25);
}

#[test]
fn linear_drift_offsets_true_position() {
    let sample = constant_sample(0.0);
    let cfg = ScopeConfig {
        drift: DriftModel {
            velocity: [1.0, 0.0],
            ..DriftModel::default()
        },
        ..still_scope()
    };
    let mut sess = Session::new(cfg, 1).unwrap();
    let path = ScanPath::from_points(vec![[4.0, 4.0]], 10.0);
    let obs = sess.execute(&path, &sample, Channel::Topography).unwrap().observations[0];
    assert_eq!(obs.t_sim, 10.0);
    assert_eq!(
        [obs.pos_true[0] - obs.pos_nominal[0], obs.pos_true[1] - obs.pos_nominal[1]],
        [10.0, 0.0]
    );
}

#[test]
fn stream_is_line_granular_with_monotone_clock() {
    let sample = constant_sample(1.0);
    let cfg = ScopeConfig {
        drift: DriftModel {
            velocity: [0.01, -0.02],
            random_walk_sigma: 0.1,
            seed: 4,
        },
        noise_sigma: 0.1,
        ..still_scope()
    };
    let mut sess = Session::new(cfg, 2).unwrap();
    let path = plan_path(window(16.0, 16.0), &PathParams::Serpentine { nx: 5, ny: 4 }, 0.01, 100).unwrap();
    let lines: Vec<Vec<Observation>> = sess
        .stream(&path, &sample, Channel::Topography)
        .collect::<autoscope::Result<_>>()
        .unwrap();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.len() == 5));
    let t: Vec<f64> = lines.iter().flatten().map(|o| o.t_sim).collect();
    assert!(t.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn spectroscopy_ramp_rules() {
    let p = SiteLoopParams {
        amplitude: 1.0,
        v_plus: 1.0,
        v_minus: -1.0,
        width: 0.3,
        offset: 0.2,
    };
    let ramp = Ramp::symmetric(4.0, 50);
    let full = ramp_spectroscopy(&p, &ramp, None, 0.0, 0).unwrap();
    assert_eq!(full.points.len(), 100);
    assert!(!full.stopped_early);

    let stop0 = ramp_spectroscopy(&p, &ramp, Some(0.0), 0.0, 0).unwrap();
    assert_eq!(stop0.points.len(), 1);
    assert!(stop0.stopped_early);

    let max_resp = full.points.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max);
    let never = ramp_spectroscopy(&p, &ramp, Some(max_resp + 1e-9), 0.0, 0).unwrap();
    assert!(!never.stopped_early);
    assert_eq!(never.points.len(), 100);

    // A full noise-free curve integrates to the analytic loop area.
    let area = full.loop_area().unwrap();
    let direct = autoscope::sample::loop_area(&p, 4.0, 49).unwrap();
    assert!((area - direct).abs() < 1e-12);
    assert!(stop0.loop_area().is_none());
    assert!(ramp_spectroscopy(&p, &Ramp { n_steps: 1, ..ramp }, None, 0.0, 0).is_err());
}

#[test]
fn survey_reproduces_truth_and_scales_with_resolution() {
    let sample = gen_domain_phantom(32, 32, [64.0, 64.0], &PhantomConfig::default(), 3).unwrap();
    let cfg = ScopeConfig {
        latency: LatencyModel {
            slew_rate: 1e9,
            flyback: 0.0,
            ..still_scope().latency
        },
        ..still_scope()
    };
    let full = Window::full(sample.grid());
    let mut a = Session::new(cfg, 5).unwrap();
    let (img, t_full) = a.survey(&sample, full, 32, 32, Channel::Polarization).unwrap();
    assert_eq!(img.values, sample.polarization.values);
    let mut b = Session::new(cfg, 5).unwrap();
    let (img2, _) = b.survey(&sample, full, 32, 32, Channel::Polarization).unwrap();
    assert_eq!(img, img2);
    let mut c = Session::new(cfg, 5).unwrap();
    let (_, t_half) = c.survey(&sample, full, 16, 16, Channel::Polarization).unwrap();
    let ratio = t_full / t_half;
    assert!((ratio - 4.0).abs() < 0.01, "{ratio}");
}

fn shifted(big: &ScalarField2D, ox: usize, oy: usize, w: usize, h: usize) -> ScalarField2D {
    let g = Grid::new(w, h, [w as f64, h as f64]).unwrap();
    ScalarField2D::from_fn(g, |p| big.values[(p.row + oy) * big.width + p.col + ox])
}

#[test]
fn drift_estimate_recovers_constructed_shift() {
    let cfg = PhantomConfig {
        style: autoscope::sample::PhantomStyle::Bubbles,
        ..PhantomConfig::default()
    };
    let s = gen_domain_phantom(48, 48, [48.0, 48.0], &cfg, 9).unwrap();
    let big = s.topography;
    let a = shifted(&big, 8, 8, 32, 32);
    assert_eq!(estimate_drift(&a, &a, 5).unwrap(), (0, 0));
    // b(x, y) = a(x − 3, y + 2)  ⇒ shift (3, −2)
    let b = shifted(&big, 5, 10, 32, 32);
    assert_eq!(estimate_drift(&a, &b, 5).unwrap(), (3, -2));
    let other = shifted(&big, 0, 0, 31, 32);
    assert!(estimate_drift(&a, &other, 5).is_err());
    assert!(estimate_drift(&a, &a, 16).is_err());
}
