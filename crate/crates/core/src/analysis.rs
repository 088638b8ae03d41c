//! Post-hoc analysis of runs: correctness emergence metrics, starting rank of
//! the winner, diversity presets, and trajectory export.

use std::fmt::Write as _;

use crate::config::SwarmConfig;
use crate::engine::{search, RunRecord, SearchOutcome};
use crate::error::{Result, SwarmError};
use crate::token::parse_matrix;
use crate::utility::Utility;
use crate::vector::ParamVector;

/// Questions by experts, 1 for a correct answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    rows: Vec<Vec<u8>>,
}

impl CorrectnessMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || cols == 0 {
            return Err(SwarmError::invalid("matrix", "needs at least one row and column"));
        }
        for (q, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(SwarmError::invalid("matrix", format!("row {q} has {} columns, expected {cols}", row.len())));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(SwarmError::invalid("matrix", format!("row {q} has a non-binary entry")));
            }
        }
        Ok(Self { rows })
    }

    /// Whitespace-separated 0/1 entries, one question per line.
    pub fn parse(text: &str) -> Result<Self> {
        let rows = parse_matrix(text)?
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| match v {
                        0.0 => Ok(0),
                        1.0 => Ok(1),
                        _ => Err(SwarmError::invalid("matrix", format!("entry {v} is not 0 or 1"))),
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SwarmError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn questions(&self) -> usize {
        self.rows.len()
    }

    pub fn experts(&self) -> usize {
        self.rows[0].len()
    }

    pub fn levels(&self) -> Vec<u8> {
        self.rows
            .iter()
            .map(|r| correctness_level(r).expect("validated at construction"))
            .collect()
    }
}

/// 1: all wrong, 2: fewer than half correct, 3: at least half but not all, 4: all correct.
pub fn correctness_level(row: &[u8]) -> Result<u8> {
    if row.is_empty() {
        return Err(SwarmError::invalid("row", "empty"));
    }
    if row.iter().any(|&v| v > 1) {
        return Err(SwarmError::invalid("row", "entries must be 0 or 1"));
    }
    let correct = row.iter().filter(|&&v| v == 1).count();
    Ok(match correct {
        0 => 1,
        c if c == row.len() => 4,
        c if 2 * c < row.len() => 2,
        _ => 3,
    })
}

fn same_shape(pre: &CorrectnessMatrix, post: &CorrectnessMatrix) -> Result<()> {
    if pre.questions() != post.questions() || pre.experts() != post.experts() {
        return Err(SwarmError::invalid(
            "matrix",
            format!(
                "shape {}x{} vs {}x{}",
                pre.questions(),
                pre.experts(),
                post.questions(),
                post.experts()
            ),
        ));
    }
    Ok(())
}

/// Fraction of questions whose correctness level rose.
pub fn c_surge(pre: &CorrectnessMatrix, post: &CorrectnessMatrix) -> Result<f64> {
    same_shape(pre, post)?;
    let up = pre
        .levels()
        .iter()
        .zip(post.levels())
        .filter(|(a, b)| b > a)
        .count();
    Ok(up as f64 / pre.questions() as f64)
}

/// Fraction of initially all-wrong questions that at least one expert now answers;
/// `None` when no question started all-wrong.
pub fn c_emerge(pre: &CorrectnessMatrix, post: &CorrectnessMatrix) -> Result<Option<f64>> {
    same_shape(pre, post)?;
    let (mut impossible, mut solved) = (0usize, 0usize);
    for (a, b) in pre.levels().into_iter().zip(post.levels()) {
        if a == 1 {
            impossible += 1;
            if b > 1 {
                solved += 1;
            }
        }
    }
    Ok((impossible > 0).then(|| solved as f64 / impossible as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub particle: usize,
    /// 1 = best initial utility; `None` if the particle joined after initialization.
    pub start_rank: Option<usize>,
    pub start_utility: Option<f64>,
    pub final_utility: f64,
}

/// Where the particle with the best final personal best started out.
pub fn rank_report(log: &[RunRecord]) -> Result<RankReport> {
    let first = log
        .iter()
        .find(|r| r.iteration == 0)
        .ok_or(SwarmError::IncompleteLog { missing: vec![0] })?;
    let last = log.iter().max_by_key(|r| r.iteration).expect("nonempty");
    let mut winner = &last.particles[0];
    for t in &last.particles[1..] {
        if t.f_p > winner.f_p || (t.f_p == winner.f_p && t.id < winner.id) {
            winner = t;
        }
    }
    let start = |id: usize| first.trace(id).and_then(|t| t.f_x);
    let start_utility = start(winner.id);
    let start_rank = start_utility.map(|mine| {
        1 + first
            .particles
            .iter()
            .filter_map(|t| t.f_x.map(|f| (t.id, f)))
            .filter(|&(id, f)| f > mine || (f == mine && id < winner.id))
            .count()
    });
    Ok(RankReport {
        particle: winner.id,
        start_rank,
        start_utility,
        final_utility: winner.f_p,
    })
}

pub const TRAJECTORY_HEADER: &str = "iteration,particle,coord_a,coord_b,f_x";

/// CSV of two coordinates of every evaluated location, one row per
/// (iteration, particle). Coordinates are printed at the log's 32-bit
/// precision; `f_x` is empty for skipped evaluations.
pub fn export_trajectory(log: &[RunRecord], coords: (usize, usize)) -> Result<String> {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for rec in log {
        for t in &rec.particles {
            let x = t.evaluated_location();
            for c in [coords.0, coords.1] {
                if c >= x.dim() {
                    return Err(SwarmError::invalid(
                        "coords",
                        format!("index {c} out of range for dimension {}", x.dim()),
                    ));
                }
            }
            let f = t.f_x.map(|f| f.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                rec.iteration, t.id, x[coords.0] as f32, x[coords.1] as f32, f
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DiversityRun {
    pub label: String,
    pub outcome: SearchOutcome,
}

/// The first `distinct` experts, each repeated `repeats` times. The product
/// must equal `base`.
pub fn diversity_experts(experts: &[ParamVector], distinct: usize, repeats: usize, base: usize) -> Result<Vec<ParamVector>> {
    if distinct == 0 || repeats == 0 {
        return Err(SwarmError::invalid("diversity", "a and b must be positive"));
    }
    if distinct * repeats != base {
        return Err(SwarmError::invalid(
            "diversity",
            format!("{distinct}x{repeats} = {} does not match population base {base}", distinct * repeats),
        ));
    }
    if distinct > experts.len() {
        return Err(SwarmError::invalid(
            "diversity",
            format!("{distinct} distinct experts requested, {} available", experts.len()),
        ));
    }
    Ok(experts[..distinct]
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.clone(), repeats))
        .collect())
}

/// Seed the swarm with [`diversity_experts`], then search as usual; the run
/// is labelled `"{a}x{b}"`.
pub fn diversity_preset(
    experts: &[ParamVector],
    distinct: usize,
    repeats: usize,
    base: usize,
    utility: &dyn Utility,
    cfg: &SwarmConfig,
) -> Result<DiversityRun> {
    let seeds = diversity_experts(experts, distinct, repeats, base)?;
    let cfg = SwarmConfig {
        swarm_size: cfg.swarm_size.max(seeds.len()),
        ..cfg.clone()
    };
    Ok(DiversityRun {
        label: format!("{distinct}x{repeats}"),
        outcome: search(&seeds, utility, &cfg)?,
    })
}
