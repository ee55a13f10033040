use serde::{Deserialize, Serialize};

/// Thrust regime of a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Max,
    Coast,
    Unclassified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub regime: Regime,
    /// Interval widths as fractions of the domain; they sum to 1.
    pub intervals: Vec<f64>,
    pub points: Vec<usize>,
}

impl Domain {
    pub fn uniform(regime: Regime, intervals: usize, points: usize) -> Self {
        Self { regime, intervals: vec![1.0 / intervals as f64; intervals], points: vec![points; intervals] }
    }

    pub fn num_points(&self) -> usize {
        self.points.iter().sum()
    }
}

/// Ordered domains tiling `[t0, tf]`.
///
/// With `free_boundaries` every interior domain boundary is a decision
/// variable; otherwise boundaries sit at the fixed `fractions` of the
/// horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub domains: Vec<Domain>,
    /// Domain boundaries as fractions of `[t0, tf]`: `0 = f_0 < … < f_D = 1`.
    /// Used for the time layout when boundaries are fixed and for the
    /// starting point when they are free.
    pub fractions: Vec<f64>,
    pub free_boundaries: bool,
}

impl Mesh {
    /// One unclassified domain of `intervals` equal intervals.
    pub fn uniform(intervals: usize, points: usize) -> Self {
        Self {
            domains: vec![Domain::uniform(Regime::Unclassified, intervals, points)],
            fractions: vec![0.0, 1.0],
            free_boundaries: false,
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.domains.iter().map(|d| d.intervals.len()).sum()
    }

    pub fn num_points(&self) -> usize {
        self.domains.iter().map(Domain::num_points).sum()
    }

    /// Checks the tiling invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.domains.is_empty() {
            return Err("mesh has no domains".into());
        }
        if self.fractions.len() != self.domains.len() + 1 {
            return Err("boundary fraction count does not match domain count".into());
        }
        if self.fractions[0] != 0.0 || *self.fractions.last().unwrap() != 1.0 {
            return Err("boundary fractions must start at 0 and end at 1".into());
        }
        if self.fractions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("boundary fractions must be strictly increasing".into());
        }
        for (d, dom) in self.domains.iter().enumerate() {
            if dom.intervals.is_empty() || dom.intervals.len() != dom.points.len() {
                return Err(format!("domain {d}: interval and point lists disagree"));
            }
            if dom.points.iter().any(|&n| n == 0) || dom.intervals.iter().any(|&w| !(w > 0.0)) {
                return Err(format!("domain {d}: empty interval"));
            }
            let s: f64 = dom.intervals.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(format!("domain {d}: interval fractions sum to {s}"));
            }
        }
        Ok(())
    }
}
