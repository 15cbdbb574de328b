use autoscope::feedback::*;
use autoscope::ledger::LedgerKind;
use autoscope::sample::Sample;
use autoscope::scope::{Channel, Observation, ScanPath, Session};
use autoscope::field::{Grid, ScalarField2D};
use autoscope::sample::{gen_domain_phantom, PhantomConfig, SiteLoopParams};
use autoscope::scope::{plan_path, PathParams, ScopeConfig, Window, DEFAULT_MAX_POINTS};
use proptest::prelude::*;

fn obs_line(values: &[f64]) -> Vec<Observation> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| Observation {
            pos_nominal: [i as f64 + 0.5, 0.5],
            pos_true: [i as f64 + 0.5, 0.5],
            channel: Channel::Piezoresponse,
            value: v,
            t_sim: i as f64,
        })
        .collect()
}

fn band() -> SchmittTrigger {
    SchmittTrigger::new(-0.5, 0.5).unwrap()
}

#[test]
fn trigger_basics() {
    let (hits, _) = detect_crossings(&obs_line(&[0.1, -0.4, 0.3, 0.49, -0.2]), band()).unwrap();
    assert!(hits.is_empty());
    let step: Vec<f64> = (0..10).map(|i| if i < 6 { -1.0 } else { 1.0 }).collect();
    let (hits, end) = detect_crossings(&obs_line(&step), band()).unwrap();
    assert_eq!(hits, vec![6]);
    assert_eq!(end.state, TriggerState::Above);
    // Starting high does not fire; chatter inside the band is ignored.
    let (hits, _) = detect_crossings(&obs_line(&[1.0, -1.0, 0.0, -0.1, 0.6, 0.4, 0.7]), band()).unwrap();
    assert_eq!(hits, vec![4]);
    // State carries across lines.
    let (_, armed) = detect_crossings(&obs_line(&[-1.0]), band()).unwrap();
    let (hits, _) = detect_crossings(&obs_line(&[1.0]), armed).unwrap();
    assert_eq!(hits, vec![0]);
    assert!(SchmittTrigger::new(0.5, 0.5).is_err());
    assert!(detect_crossings(&[], band()).is_err());
}

/// Sample with down polarization left of column `wall`, up from it on.
fn wall_sample(width: usize, height: usize, wall: usize) -> Sample {
    let grid = Grid::new(width, height, [width as f64, height as f64]).unwrap();
    Sample {
        polarization: ScalarField2D::from_fn(grid, |p| if p.col < wall { -1.0 } else { 1.0 }),
        topography: ScalarField2D::filled(grid, 0.0),
        loop_params: vec![
            SiteLoopParams { amplitude: 1.0, v_plus: 1.0, v_minus: -1.0, width: 0.3, offset: 0.0 };
            width * height
        ],
        coercive_bias: 2.0,
        flip_sharpness: 4.0,
        custom: None,
    }
}

fn line_path(width: usize, ny: usize) -> ScanPath {
    let w = Window { x0: 0.0, y0: 0.0, x1: width as f64, y1: ny as f64 };
    plan_path(w, &PathParams::Raster { nx: width, ny }, 1e-3, DEFAULT_MAX_POINTS).unwrap()
}

#[test]
fn noisy_wall_localized() {
    let mut good = 0;
    for seed in 0..100 {
        let wall = 10 + (seed as usize % 20);
        let sample = wall_sample(40, 1, wall);
        let cfg = ScopeConfig { noise_sigma: 0.2, ..ScopeConfig::default() };
        let mut s = Session::new(cfg, seed).unwrap();
        let exec = s.execute(&line_path(40, 1), &sample, Channel::Piezoresponse).unwrap();
        let (hits, _) = detect_crossings(&exec.observations, band()).unwrap();
        if hits.len() == 1 && hits[0].abs_diff(wall) <= 1 {
            good += 1;
        }
    }
    assert!(good >= 95, "{good}");
}

fn plan(bias: f64, dose: f64, limit: usize) -> FeedbackPlan {
    FeedbackPlan {
        trigger: band(),
        waveform: vec![Pulse { bias, dose }],
        per_line_limit: limit,
        radius: 2.0,
        pulse_time: 0.01,
    }
}

#[test]
fn constant_sample_never_triggers() {
    let mut sample = wall_sample(16, 4, 0);
    let mut s = Session::new(ScopeConfig::default(), 0).unwrap();
    let run = run_ferrobot(&mut s, &mut sample, &plan(5.0, 2.0, 3), &line_path(16, 4), Channel::Piezoresponse, 0).unwrap();
    assert_eq!(run.triggers, 0);
    assert!(run.events.is_empty());
}

#[test]
fn single_wall_single_dispatch() {
    let mut sample = wall_sample(16, 1, 7);
    let mut s = Session::new(ScopeConfig::default(), 0).unwrap();
    let before = s.clock();
    let run = run_ferrobot(&mut s, &mut sample, &plan(5.0, 2.0, 3), &line_path(16, 1), Channel::Piezoresponse, 0).unwrap();
    assert_eq!(run.triggers, 1);
    assert_eq!(run.events.len(), 1);
    assert_eq!(run.events[0].index, 7);
    assert!(run.events[0].flips > 0);
    assert!(run.events[0].t_sim > before);
    assert_eq!(s.ledger().total(LedgerKind::Decision), ScopeConfig::default().latency.decision_charge);
    assert_eq!(s.ledger().total(LedgerKind::Modify), 0.01);
}

#[test]
fn zero_dose_is_pure_detection() {
    let mut sample = gen_domain_phantom(32, 32, [32.0, 32.0], &PhantomConfig::default(), 3).unwrap();
    let original = sample.clone();
    let cfg = ScopeConfig { noise_sigma: 0.1, ..ScopeConfig::default() };
    let mut s = Session::new(cfg, 1).unwrap();
    let run = run_ferrobot(&mut s, &mut sample, &plan(5.0, 0.0, 4), &line_path(32, 32), Channel::Piezoresponse, 2).unwrap();
    assert!(run.triggers > 0);
    assert!(run.events.iter().all(|e| e.flips == 0));
    assert_eq!(sample.polarization.values, original.polarization.values);
    assert_eq!(sample.loop_params, original.loop_params);
}

#[test]
fn non_line_paths_rejected() {
    let mut sample = wall_sample(8, 8, 4);
    let mut s = Session::new(ScopeConfig::default(), 0).unwrap();
    let free = ScanPath::from_points(vec![[1.0, 1.0], [2.0, 2.0]], 1e-3);
    assert!(run_ferrobot(&mut s, &mut sample, &plan(5.0, 1.0, 1), &free, Channel::Piezoresponse, 0).is_err());
    let bad = FeedbackPlan { waveform: vec![], ..plan(5.0, 1.0, 1) };
    assert!(run_ferrobot(&mut s, &mut sample, &bad, &line_path(8, 8), Channel::Piezoresponse, 0).is_err());
}

fn up_walls(sample: &Sample) -> Vec<Vec<usize>> {
    let g = sample.grid();
    let mut s = Session::new(ScopeConfig::default(), 0).unwrap();
    let (img, _) = s
        .survey(sample, Window::full(g), g.width, g.height, Channel::Polarization)
        .unwrap();
    (0..g.height)
        .map(|r| {
            let row = obs_line(&img.values[r * g.width..(r + 1) * g.width]);
            detect_crossings(&row, band()).unwrap().0
        })
        .collect()
}

#[test]
fn aggressive_waveform_moves_walls_toward_pulse() {
    let mut net = 0i64;
    for seed in 0..20 {
        let mut sample = gen_domain_phantom(32, 16, [32.0, 16.0], &PhantomConfig::default(), seed).unwrap();
        let before = up_walls(&sample);
        let mut s = Session::new(ScopeConfig { noise_sigma: 0.05, ..ScopeConfig::default() }, seed).unwrap();
        run_ferrobot(&mut s, &mut sample, &plan(6.0, 2.0, 4), &line_path(32, 16), Channel::Piezoresponse, seed).unwrap();
        let after = up_walls(&sample);
        for (b, a) in before.iter().zip(&after) {
            if a.len() == b.len() {
                net += b.iter().zip(a).map(|(x, y)| *x as i64 - *y as i64).sum::<i64>();
            }
        }
    }
    assert!(net > 0, "{net}");
}

#[test]
fn event_log_jsonl() {
    let mut sample = wall_sample(16, 2, 7);
    let mut s = Session::new(ScopeConfig::default(), 0).unwrap();
    let run = run_ferrobot(&mut s, &mut sample, &plan(5.0, 2.0, 3), &line_path(16, 2), Channel::Piezoresponse, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("events.jsonl");
    write_events_jsonl(&p, &run.events).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), run.events.len());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["t_sim", "line", "index", "pos", "pulse", "flips"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

proptest! {
    #[test]
    fn limits_and_clock_hold(seed in 0u64..200, limit in 1usize..4, noise in 0.0..0.6f64) {
        let mut sample = gen_domain_phantom(24, 8, [24.0, 8.0], &PhantomConfig { period: 3.0, ..PhantomConfig::default() }, seed).unwrap();
        let mut s = Session::new(ScopeConfig { noise_sigma: noise, ..ScopeConfig::default() }, seed).unwrap();
        let path = line_path(24, 8);
        let run = run_ferrobot(&mut s, &mut sample, &plan(5.0, 1.0, limit), &path, Channel::Piezoresponse, seed).unwrap();
        prop_assert!(run.line_triggers.iter().all(|&n| n <= limit));
        prop_assert_eq!(run.line_triggers.iter().sum::<usize>(), run.triggers);
        prop_assert!(run.events.windows(2).all(|w| w[0].t_sim <= w[1].t_sim));
        prop_assert!(run.events.iter().all(|e| e.t_sim <= s.clock()));
        prop_assert_eq!(s.ledger().clock(), s.clock());
    }
}
