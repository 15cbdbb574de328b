use autoscope::ledger::*;

#[test]
fn clock_equals_ordered_sum_exactly() {
    let mut l = LatencyLedger::new();
    for i in 0..1000 {
        let k = LedgerKind::ALL[i % 6];
        l.charge(k, 0.1 + (i as f64) * 1e-3 / 7.0);
    }
    let sum = l.entries().iter().fold(0.0, |acc, e| acc + e.duration);
    assert_eq!(sum, l.clock());
    let by_kind: f64 = l.totals().iter().map(|(_, t)| t).sum();
    assert!((by_kind - l.clock()).abs() <= 1e-9 * l.clock());
    assert!(l.entries().windows(2).all(|w| w[0].t_start <= w[1].t_start));
    assert_eq!(LatencyLedger::from_entries(l.entries().to_vec()), l);
}

#[test]
fn zero_charges_are_dropped() {
    let mut l = LatencyLedger::new();
    l.charge(LedgerKind::Flyback, 0.0);
    assert!(l.entries().is_empty());
    assert_eq!(l.decision_fraction(), None);
}
