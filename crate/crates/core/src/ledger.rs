//! Simulated-time latency ledger.
//!
//! The simulated clock is the running sum of charged durations, accumulated
//! in entry order, so `clock()` equals the ordered sum of entries exactly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerKind {
    Dwell,
    Travel,
    Flyback,
    Spectro,
    Decision,
    Modify,
}

impl LedgerKind {
    pub const ALL: [LedgerKind; 6] = [
        LedgerKind::Dwell,
        LedgerKind::Travel,
        LedgerKind::Flyback,
        LedgerKind::Spectro,
        LedgerKind::Decision,
        LedgerKind::Modify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LedgerKind::Dwell => "dwell",
            LedgerKind::Travel => "travel",
            LedgerKind::Flyback => "flyback",
            LedgerKind::Spectro => "spectro",
            LedgerKind::Decision => "decision",
            LedgerKind::Modify => "modify",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub kind: LedgerKind,
    pub duration: f64,
    pub t_start: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyLedger {
    entries: Vec<LedgerEntry>,
    clock: f64,
}

impl LatencyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a ledger from stored entries, replaying the clock.
    pub fn from_entries(entries: impl IntoIterator<Item = LedgerEntry>) -> Self {
        let mut ledger = Self::new();
        for e in entries {
            ledger.entries.push(LedgerEntry {
                t_start: ledger.clock,
                ..e
            });
            ledger.clock += e.duration;
        }
        ledger
    }

    /// Appends an entry starting at the current clock; zero durations are
    /// dropped. Returns the new clock.
    pub fn charge(&mut self, kind: LedgerKind, duration: f64) -> f64 {
        debug_assert!(duration >= 0.0 && duration.is_finite(), "bad duration {duration}");
        if duration > 0.0 {
            self.entries.push(LedgerEntry {
                kind,
                duration,
                t_start: self.clock,
            });
            self.clock += duration;
        }
        self.clock
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self, kind: LedgerKind) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.duration)
            .sum()
    }

    pub fn totals(&self) -> Vec<(LedgerKind, f64)> {
        LedgerKind::ALL.iter().map(|&k| (k, self.total(k))).collect()
    }

    /// Decision time over everything spent acquiring data (dwell, travel,
    /// flyback, spectroscopy). `None` when nothing was acquired.
    pub fn decision_fraction(&self) -> Option<f64> {
        let acq: f64 = [
            LedgerKind::Dwell,
            LedgerKind::Travel,
            LedgerKind::Flyback,
            LedgerKind::Spectro,
        ]
        .iter()
        .map(|&k| self.total(k))
        .sum();
        (acq > 0.0).then(|| self.total(LedgerKind::Decision) / acq)
    }
}
