use crate::{HetmigenError, Result};

/// Highest supported number of non-background phases. Adjacency masks are
/// packed into a byte during growth.
pub const MAX_PHASES: usize = 7;

/// One CSV record of microstructural growth controls. Per-phase fields hold
/// one value per non-background phase, in phase order.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    /// Microstructure id number.
    pub id: u64,
    /// Number of phases in addition to the background phase.
    pub n_phases: usize,
    /// Target volume fraction per phase, each in (0, 1), summing below 1.
    pub target_vf: Vec<f64>,
    /// Seeds placed per phase before growth starts.
    pub n_initial_seeds: u64,
    /// Signed change applied to the seed count at each addition event.
    pub seed_increment: i64,
    /// Iterations between seed-addition events (≥ 1).
    pub seed_frequency: u32,
    /// Chebyshev radius checked for same-phase proximity when placing
    /// seeds; 0 disables the check.
    pub proximity_radius: Vec<u32>,
    /// Whether each phase is reduced to its largest component at the end.
    pub cluster_at_end: Vec<bool>,
    /// Growth-decay rate per phase; 0 keeps growth parameters fixed.
    pub growth_decay: Vec<f64>,
    /// Probabilistic growth threshold per phase, in [0, 1].
    pub growth_thresholds: Vec<f64>,
}

impl GenerationParams {
    /// Effective growth probability of `phase` at `iteration` under the
    /// exponential decay law.
    pub fn threshold_at(&self, phase: usize, iteration: u32) -> f64 {
        let t = self.growth_thresholds[phase]
            * (-self.growth_decay[phase] * f64::from(iteration)).exp();
        t.clamp(0.0, 1.0)
    }
}

fn err(line: usize, column: usize, message: impl Into<String>) -> HetmigenError {
    HetmigenError::Csv {
        line,
        column,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    fields: &[&str],
    line: usize,
    column: usize,
    what: &str,
) -> Result<T> {
    let raw = fields
        .get(column - 1)
        .ok_or_else(|| err(line, column, format!("missing {what}")))?
        .trim();
    raw.parse::<T>()
        .map_err(|_| err(line, column, format!("malformed {what}: {raw:?}")))
}

/// Parses the growth-parameter CSV: one record per line, columns in the
/// order of [`GenerationParams`], per-phase columns repeating in phase
/// order. Blank lines are skipped.
pub fn parse_params_csv(text: &str) -> Result<Vec<GenerationParams>> {
    let mut out = Vec::new();
    for (line_idx, raw_line) in text.lines().enumerate() {
        let line = line_idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw_line.split(',').collect();

        let id: u64 = parse_field(&fields, line, 1, "id")?;
        let n_phases: usize = parse_field(&fields, line, 2, "phase count")?;
        if n_phases == 0 || n_phases > MAX_PHASES {
            return Err(err(line, 2, format!("phase count must be in 1..={MAX_PHASES}")));
        }
        let expected = 5 + 5 * n_phases;
        if fields.len() != expected {
            return Err(err(
                line,
                fields.len().min(expected),
                format!(
                    "expected {expected} columns for {n_phases} phase(s), got {}",
                    fields.len()
                ),
            ));
        }

        let mut col = 3;
        let mut target_vf = Vec::with_capacity(n_phases);
        for _ in 0..n_phases {
            let vf: f64 = parse_field(&fields, line, col, "volume fraction")?;
            if !(0.0..1.0).contains(&vf) || vf == 0.0 {
                return Err(err(line, col, format!("volume fraction {vf} not in (0, 1)")));
            }
            target_vf.push(vf);
            col += 1;
        }
        if target_vf.iter().sum::<f64>() >= 1.0 {
            return Err(err(line, col - 1, "volume fractions sum to 1 or more"));
        }

        let n_initial_seeds: u64 = parse_field(&fields, line, col, "initial seed count")?;
        col += 1;
        let seed_increment: i64 = parse_field(&fields, line, col, "seed increment")?;
        col += 1;
        let seed_frequency: u32 = parse_field(&fields, line, col, "seed frequency")?;
        if seed_frequency == 0 {
            return Err(err(line, col, "seed frequency must be at least 1"));
        }
        col += 1;

        let mut proximity_radius = Vec::with_capacity(n_phases);
        for _ in 0..n_phases {
            proximity_radius.push(parse_field(&fields, line, col, "proximity radius")?);
            col += 1;
        }
        let mut cluster_at_end = Vec::with_capacity(n_phases);
        for _ in 0..n_phases {
            let flag: u8 = parse_field(&fields, line, col, "clustering flag")?;
            if flag > 1 {
                return Err(err(line, col, format!("clustering flag must be 0 or 1, got {flag}")));
            }
            cluster_at_end.push(flag == 1);
            col += 1;
        }
        let mut growth_decay = Vec::with_capacity(n_phases);
        for _ in 0..n_phases {
            let decay: f64 = parse_field(&fields, line, col, "growth decay")?;
            if decay < 0.0 || !decay.is_finite() {
                return Err(err(line, col, format!("growth decay {decay} must be ≥ 0")));
            }
            growth_decay.push(decay);
            col += 1;
        }
        let mut growth_thresholds = Vec::with_capacity(n_phases);
        for _ in 0..n_phases {
            let th: f64 = parse_field(&fields, line, col, "growth threshold")?;
            if !(0.0..=1.0).contains(&th) {
                return Err(err(line, col, format!("growth threshold {th} not in [0, 1]")));
            }
            growth_thresholds.push(th);
            col += 1;
        }

        out.push(GenerationParams {
            id,
            n_phases,
            target_vf,
            n_initial_seeds,
            seed_increment,
            seed_frequency,
            proximity_radius,
            cluster_at_end,
            growth_decay,
            growth_thresholds,
        });
    }
    Ok(out)
}
