use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::fit::{fit_glm, Family, GlmFit};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

impl Criterion {
    pub fn score(&self, fit: &GlmFit) -> f64 {
        let k = fit.n_params() as f64;
        match self {
            Criterion::Aic => -2.0 * fit.log_lik + 2.0 * k,
            Criterion::Bic => -2.0 * fit.log_lik + k * (fit.n_obs as f64).ln(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub fit: GlmFit,
    /// Indices into the full design's `blocks` that ended up in the model.
    pub selected: Vec<usize>,
    pub criterion: f64,
    /// Human-readable move log, e.g. `+ race`, `- sex`.
    pub moves: Vec<String>,
}

/// Bidirectional stepwise search over term blocks.
///
/// `forced` blocks are always in the model; `scope` blocks may be added or
/// dropped. Each round evaluates every single add/drop move and takes the
/// best strict improvement; ties go to the earliest block. Candidate fits
/// that fail (separation, singularity) are skipped.
pub fn stepwise_select(
    x: &DesignMatrix,
    y: &[f64],
    family: Family,
    case_weights: Option<&[f64]>,
    forced: &[usize],
    scope: &[usize],
    criterion: Criterion,
) -> Result<StepwiseResult> {
    let mut current: Vec<usize> = forced.to_vec();
    let mut fit = fit_glm(&x.select_blocks(&current), y, family, case_weights)?;
    let mut score = criterion.score(&fit);
    let mut moves = Vec::new();
    let mut candidates: Vec<usize> = scope.iter().copied().filter(|b| !forced.contains(b)).collect();
    candidates.sort_unstable();
    candidates.dedup();
    // Each accepted move strictly lowers the criterion, so the search terminates;
    // the cap only guards against pathological floating-point cycling.
    for _ in 0..(4 * candidates.len() + 4) {
        let mut best: Option<(f64, Vec<usize>, GlmFit, String)> = None;
        for &b in &candidates {
            let (trial, label) = if current.contains(&b) {
                (current.iter().copied().filter(|&c| c != b).collect::<Vec<_>>(), format!("- {}", x.blocks[b].name))
            } else {
                let mut t = current.clone();
                t.push(b);
                (t, format!("+ {}", x.blocks[b].name))
            };
            let Ok(trial_fit) = fit_glm(&x.select_blocks(&trial), y, family, case_weights) else {
                continue;
            };
            let s = criterion.score(&trial_fit);
            if best.as_ref().is_none_or(|(bs, ..)| s < *bs) {
                best = Some((s, trial, trial_fit, label));
            }
        }
        match best {
            Some((s, trial, trial_fit, label)) if s < score - 1e-10 => {
                current = trial;
                fit = trial_fit;
                score = s;
                moves.push(label);
            }
            _ => break,
        }
    }
    current.sort_unstable();
    Ok(StepwiseResult { fit, selected: current, criterion: score, moves })
}
