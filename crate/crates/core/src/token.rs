//! Token swarms: particles are rows of a composition matrix over a fixed set
//! of experts' output distributions. The swarm searches mixing weights
//! instead of model weights, using the same engine in `n` dimensions.

use std::path::Path;

use crate::config::SwarmConfig;
use crate::engine::{search, SearchOutcome};
use crate::error::{EvalError, Result, SwarmError};
use crate::utility::Utility;
use crate::vector::ParamVector;

const SIMPLEX_TOL: f64 = 1e-9;

fn check_distribution(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(SwarmError::InvalidDistribution("empty distribution".into()));
    }
    if d.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(SwarmError::InvalidDistribution("negative or non-finite probability".into()));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(SwarmError::InvalidDistribution(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// Next-token distributions of `n` experts over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSet {
    dists: Vec<Vec<f64>>,
}

impl DistributionSet {
    pub fn new(dists: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = dists.first() else {
            return Err(SwarmError::InvalidDistribution("no experts".into()));
        };
        let vocab = first.len();
        for d in &dists {
            if d.len() != vocab {
                return Err(SwarmError::DimensionMismatch {
                    expected: vocab,
                    found: d.len(),
                });
            }
            check_distribution(d)?;
        }
        Ok(Self { dists })
    }

    pub fn experts(&self) -> usize {
        self.dists.len()
    }

    pub fn vocab(&self) -> usize {
        self.dists[0].len()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.dists[j]
    }

    /// One distribution per line, whitespace-separated decimal reals.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(parse_matrix(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SwarmError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Rows of whitespace-separated reals; blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            l.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| SwarmError::Parse(format!("line {}: `{tok}` is not a real", n + 1)))
                })
                .collect()
        })
        .collect()
}

/// Clip negatives to zero and scale onto the simplex; all-zero rows become uniform.
/// Rows already within rounding of the simplex are returned as clipped, which
/// keeps the projection idempotent bit for bit.
pub fn project_row(row: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = row.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let sum: f64 = clipped.iter().sum();
    if (sum - 1.0).abs() <= 1e-12 {
        clipped
    } else if sum > 0.0 && sum.is_finite() {
        clipped.iter().map(|v| v / sum).collect()
    } else {
        vec![1.0 / row.len() as f64; row.len()]
    }
}

fn on_simplex(row: &[f64]) -> bool {
    row.iter().all(|&v| v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// `sum_j row[j] * t_j`.
pub fn compose(row: &[f64], dists: &DistributionSet) -> Result<Vec<f64>> {
    if row.len() != dists.experts() {
        return Err(SwarmError::DimensionMismatch {
            expected: dists.experts(),
            found: row.len(),
        });
    }
    if !on_simplex(row) {
        return Err(SwarmError::UnprojectedRow);
    }
    let mut out = vec![0.0; dists.vocab()];
    for (j, &w) in row.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(dists.get(j)) {
            *o += w * p;
        }
    }
    Ok(out)
}

/// `KL(target || model)`; zero-probability model entries are floored to keep the value finite.
pub fn kl_divergence(target: &[f64], model: &[f64]) -> f64 {
    target
        .iter()
        .zip(model)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / q.max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// Negative mean KL divergence from each context's target to the composed distribution.
pub struct CompositionUtility {
    contexts: Vec<DistributionSet>,
    targets: Vec<Vec<f64>>,
}

impl CompositionUtility {
    pub fn new(contexts: Vec<DistributionSet>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = contexts.first() else {
            return Err(SwarmError::invalid("contexts", "at least one context is required"));
        };
        if contexts.len() != targets.len() {
            return Err(SwarmError::invalid(
                "targets",
                format!("{} targets for {} contexts", targets.len(), contexts.len()),
            ));
        }
        let (n, vocab) = (first.experts(), first.vocab());
        for (ctx, target) in contexts.iter().zip(&targets) {
            if ctx.experts() != n {
                return Err(SwarmError::DimensionMismatch {
                    expected: n,
                    found: ctx.experts(),
                });
            }
            if ctx.vocab() != vocab || target.len() != vocab {
                return Err(SwarmError::DimensionMismatch {
                    expected: vocab,
                    found: if ctx.vocab() != vocab { ctx.vocab() } else { target.len() },
                });
            }
            check_distribution(target)?;
        }
        Ok(Self { contexts, targets })
    }

    pub fn experts(&self) -> usize {
        self.contexts[0].experts()
    }

    /// Mean KL of the raw row after projection.
    pub fn mean_kl(&self, row: &[f64]) -> Result<f64> {
        let row = project_row(row);
        let mut total = 0.0;
        for (ctx, target) in self.contexts.iter().zip(&self.targets) {
            total += kl_divergence(target, &compose(&row, ctx)?);
        }
        Ok(total / self.contexts.len() as f64)
    }
}

impl Utility for CompositionUtility {
    fn name(&self) -> &str {
        "neg-mean-kl"
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        self.mean_kl(x).map(|kl| -kl).map_err(|e| EvalError::new(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct TokenSearchOutcome {
    /// Best composition row, projected onto the simplex.
    pub row: Vec<f64>,
    pub utility: f64,
    pub search: SearchOutcome,
}

/// Identity rows of the `n x n` composition matrix: every expert starts on its own distribution.
pub fn identity_rows(n: usize) -> Vec<ParamVector> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            ParamVector::new(row).expect("finite")
        })
        .collect()
}

pub fn token_search(
    contexts: Vec<DistributionSet>,
    targets: Vec<Vec<f64>>,
    cfg: &SwarmConfig,
) -> Result<TokenSearchOutcome> {
    let utility = CompositionUtility::new(contexts, targets)?;
    let n = utility.experts();
    let cfg = SwarmConfig {
        swarm_size: cfg.swarm_size.max(n),
        ..cfg.clone()
    };
    let outcome = search(&identity_rows(n), &utility, &cfg)?;
    Ok(TokenSearchOutcome {
        row: project_row(&outcome.best),
        utility: outcome.f_best,
        search: outcome,
    })
}
