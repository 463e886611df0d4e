//! Synthetic cohort generator with known truth.
//!
//! Outcomes follow a random-intercept growth model. Draws are made per unit
//! from independent substreams, and the outcome residual at each wave is
//! generated from its conditional law given the earlier residuals, so a
//! shifted value at the dropout wave propagates to later waves exactly as
//! the random-intercept model implies.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::PanelDataset;
use super::schema::{Role, Schema, VarKind, VariableSpec};
use crate::error::{NrbaError, Result};
use crate::rng::{domain, SeedPath};
use crate::stats::logistic;

/// Logistic dropout hazard:
/// `logit h_t = a_t + sex·SEX + group[g] + lag_outcome·(Y_{t-1} - E Y_{t-1}) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    /// One intercept per follow-up wave.
    pub intercepts: Vec<f64>,
    #[serde(default)]
    pub sex: f64,
    /// One coefficient per group level; empty means zeros.
    #[serde(default)]
    pub group: Vec<f64>,
    #[serde(default)]
    pub lag_outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mechanism")]
pub enum DropoutMechanism {
    /// Per-wave hazards independent of everything.
    Mcar { rates: Vec<f64> },
    Mar(HazardModel),
    /// MAR hazard, plus the outcome at the dropout wave is shifted by
    /// `delta` times its conditional residual SD.
    Mnar {
        #[serde(flatten)]
        hazard: HazardModel,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortScenario {
    pub n: usize,
    pub waves: usize,
    pub n_clusters: usize,
    pub intercept: f64,
    /// Mean change from wave 0, one entry per follow-up wave.
    pub wave_effects: Vec<f64>,
    pub groups: Vec<String>,
    pub group_probs: Vec<f64>,
    pub group_effects: Vec<f64>,
    /// Optional `[group][wave - 1]` interaction effects.
    pub group_wave_effects: Vec<Vec<f64>>,
    pub sex_prob: f64,
    pub sex_effect: f64,
    pub pov_levels: Vec<String>,
    pub pov_probs: Vec<f64>,
    pub pov_effects: Vec<f64>,
    /// Baseline age distribution; age advances by `age_step` per wave.
    pub age_mean: f64,
    pub age_sd: f64,
    pub age_step: f64,
    /// Effects of the age deviation `(age_0 - age_mean) / age_sd` and its square.
    pub age_effect: f64,
    pub age2_effect: f64,
    pub pnw_mean: f64,
    pub pnw_sd: f64,
    pub pnw_drift: f64,
    pub pnw_effect: f64,
    pub sty_prob: f64,
    pub sty_effect: f64,
    pub ri_sd: f64,
    pub resid_sd: f64,
    /// Log-scale SD of the base weights.
    pub base_weight_sd: f64,
    /// MCAR probability of an item gap in `pov`, `pnw` and `sty` cells.
    pub item_missing_rate: f64,
    pub dropout: DropoutMechanism,
    pub seed: u64,
}

impl Default for CohortScenario {
    fn default() -> Self {
        let waves = 5;
        CohortScenario {
            n: 2000,
            waves,
            n_clusters: 100,
            intercept: 50.0,
            wave_effects: vec![8.0, 15.0, 21.0, 26.0, 30.0],
            groups: ["white", "black", "hispanic", "asian", "other"].map(String::from).to_vec(),
            group_probs: vec![0.5, 0.14, 0.24, 0.06, 0.06],
            group_effects: vec![0.0, -3.0, -2.0, 2.0, -1.0],
            group_wave_effects: Vec::new(),
            sex_prob: 0.5,
            sex_effect: 1.0,
            pov_levels: ["below", "near", "above"].map(String::from).to_vec(),
            pov_probs: vec![0.25, 0.3, 0.45],
            pov_effects: vec![0.0, 2.0, 4.0],
            age_mean: 66.0,
            age_sd: 4.0,
            age_step: 12.0,
            age_effect: 1.5,
            age2_effect: -0.2,
            pnw_mean: 0.0,
            pnw_sd: 1.0,
            pnw_drift: 0.0,
            pnw_effect: 1.0,
            sty_prob: 0.3,
            sty_effect: -1.0,
            ri_sd: 8.0,
            resid_sd: 5.0,
            base_weight_sd: 0.3,
            item_missing_rate: 0.0,
            dropout: DropoutMechanism::Mar(HazardModel {
                intercepts: vec![-2.75; waves],
                sex: 0.2,
                group: vec![0.0, 0.4, 0.3, -0.2, 0.2],
                lag_outcome: -0.6,
            }),
            seed: 1,
        }
    }
}

fn check_probs(name: &str, p: &[f64], len: usize, errs: &mut Vec<String>) {
    if p.len() != len {
        errs.push(format!("{name} has {} entries, expected {len}", p.len()));
    }
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        errs.push(format!("{name} entries must lie in [0, 1]"));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        errs.push(format!("{name} must sum to 1"));
    }
}

impl CohortScenario {
    /// Every violated constraint, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let t = self.waves;
        if self.n == 0 {
            errs.push("n must be positive".to_string());
        }
        if t == 0 {
            errs.push("waves must be at least 1".to_string());
        }
        if self.n_clusters == 0 || self.n_clusters > self.n.max(1) {
            errs.push("n_clusters must lie in 1..=n".to_string());
        }
        if self.wave_effects.len() != t {
            errs.push(format!("wave_effects has {} entries, expected {t}", self.wave_effects.len()));
        }
        if self.groups.is_empty() {
            errs.push("groups must not be empty".to_string());
        }
        check_probs("group_probs", &self.group_probs, self.groups.len(), &mut errs);
        if self.group_effects.len() != self.groups.len() {
            errs.push("group_effects must have one entry per group".to_string());
        }
        if !self.group_wave_effects.is_empty()
            && (self.group_wave_effects.len() != self.groups.len()
                || self.group_wave_effects.iter().any(|r| r.len() != t))
        {
            errs.push("group_wave_effects must be groups x waves".to_string());
        }
        if self.pov_levels.is_empty() {
            errs.push("pov_levels must not be empty".to_string());
        }
        check_probs("pov_probs", &self.pov_probs, self.pov_levels.len(), &mut errs);
        if self.pov_effects.len() != self.pov_levels.len() {
            errs.push("pov_effects must have one entry per level".to_string());
        }
        for (name, p) in [("sex_prob", self.sex_prob), ("sty_prob", self.sty_prob), ("item_missing_rate", self.item_missing_rate)] {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, s) in [
            ("age_sd", self.age_sd),
            ("pnw_sd", self.pnw_sd),
            ("ri_sd", self.ri_sd),
            ("resid_sd", self.resid_sd),
            ("base_weight_sd", self.base_weight_sd),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                errs.push(format!("{name} must be a finite value >= 0"));
            }
        }
        if self.age_sd == 0.0 {
            errs.push("age_sd must be positive".to_string());
        }
        if self.resid_sd == 0.0 && self.ri_sd == 0.0 {
            errs.push("at least one of ri_sd and resid_sd must be positive".to_string());
        }
        let hazard = match &self.dropout {
            DropoutMechanism::Mcar { rates } => {
                if rates.len() != t {
                    errs.push(format!("MCAR rates has {} entries, expected {t}", rates.len()));
                }
                if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    errs.push("MCAR rates must lie in [0, 1]".to_string());
                }
                None
            }
            DropoutMechanism::Mar(h) => Some(h),
            DropoutMechanism::Mnar { hazard, delta } => {
                if !delta.is_finite() {
                    errs.push("delta must be finite".to_string());
                }
                Some(hazard)
            }
        };
        if let Some(h) = hazard {
            if h.intercepts.len() != t {
                errs.push(format!("hazard intercepts has {} entries, expected {t}", h.intercepts.len()));
            }
            if !h.group.is_empty() && h.group.len() != self.groups.len() {
                errs.push("hazard group coefficients must have one entry per group".to_string());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NrbaError::Config(format!("invalid scenario: {}", errs.join("; "))))
        }
    }

    /// Schema of the generated panel.
    pub fn schema(&self) -> Schema {
        Schema {
            id: "id".into(),
            waves: self.waves,
            missing: vec![String::new()],
            variables: vec![
                VariableSpec::new("sex", VarKind::Binary, Role::TimeInvariant),
                VariableSpec::new("race", VarKind::Nominal(self.groups.clone()), Role::TimeInvariant),
                VariableSpec::new("pov", VarKind::Ordinal(self.pov_levels.clone()), Role::TimeInvariant),
                VariableSpec::new("age", VarKind::Numeric, Role::TimeVarying),
                VariableSpec::new("pnw", VarKind::Numeric, Role::TimeVarying),
                VariableSpec::new("sty", VarKind::Binary, Role::TimeVarying),
                VariableSpec::new("score", VarKind::Numeric, Role::Outcome),
                VariableSpec::new("school", VarKind::Numeric, Role::ClusterId),
                VariableSpec::new("bw", VarKind::Numeric, Role::BaseWeight),
            ],
        }
    }

    fn group_wave(&self, g: usize, t: usize) -> f64 {
        if t == 0 || self.group_wave_effects.is_empty() {
            0.0
        } else {
            self.group_wave_effects[g][t - 1]
        }
    }

    /// Marginal mean of the outcome at each wave before any dropout shift.
    pub fn analytic_means(&self) -> Vec<f64> {
        let pov: f64 = self.pov_probs.iter().zip(&self.pov_effects).map(|(p, e)| p * e).sum();
        (0..=self.waves)
            .map(|t| {
                let wave = if t == 0 { 0.0 } else { self.wave_effects[t - 1] };
                let group: f64 = (0..self.groups.len())
                    .map(|g| self.group_probs[g] * (self.group_effects[g] + self.group_wave(g, t)))
                    .sum();
                self.intercept
                    + wave
                    + group
                    + self.sex_prob * self.sex_effect
                    + pov
                    + self.age2_effect
                    + self.pnw_effect * (self.pnw_mean + self.pnw_drift * t as f64)
                    + self.sty_effect * self.sty_prob
            })
            .collect()
    }

    /// SD of `b_i + e_it`, the scale used to standardize the lagged outcome
    /// in the dropout hazard.
    pub fn residual_scale(&self) -> f64 {
        (self.ri_sd.powi(2) + self.resid_sd.powi(2)).sqrt()
    }

    /// Conditional SD of the wave-`t` residual given the `t` earlier ones.
    pub fn conditional_sd(&self, t: usize) -> f64 {
        let (tau, s) = (self.ri_sd.powi(2), self.resid_sd.powi(2));
        cond_moments(tau, s, t).1.sqrt()
    }
}

/// Mean multiplier and variance of residual `t` given the sum of the
/// earlier `t` residuals under a random intercept with variances `tau, s`.
fn cond_moments(tau: f64, s: f64, t: usize) -> (f64, f64) {
    let denom = s + t as f64 * tau;
    if denom == 0.0 {
        return (0.0, tau + s);
    }
    (tau / denom, s + tau * s / denom)
}

/// Everything the generator knows.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub scenario: CohortScenario,
    /// Full data before unit and item deletion.
    pub complete: PanelDataset,
    /// First unobserved wave per unit.
    pub dropout_wave: Vec<Option<usize>>,
    /// Pre-shift marginal means per wave.
    pub analytic_means: Vec<f64>,
}

impl TruthRecord {
    /// Base-weighted complete-data mean of the outcome at a wave.
    pub fn complete_mean(&self, wave: usize) -> f64 {
        let y = self.complete.outcome(wave);
        let w = self.complete.base_weights();
        y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / w.iter().sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "scenario": self.scenario,
            "analytic_means": self.analytic_means,
            "complete_means": (0..=self.scenario.waves).map(|t| self.complete_mean(t)).collect::<Vec<_>>(),
            "dropout_wave": self.complete.unit_ids().iter().zip(&self.dropout_wave)
                .map(|(id, d)| (id.clone(), *d)).collect::<std::collections::BTreeMap<_, _>>(),
        }))
        .expect("truth serializes")
    }
}

struct UnitDraw {
    cluster: usize,
    weight: f64,
    /// `[var][slot]` complete values, then observed values.
    complete: Vec<Vec<f64>>,
    observed: Vec<Vec<f64>>,
    dropout: Option<usize>,
}

const SEX: usize = 0;
const RACE: usize = 1;
const POV: usize = 2;
const AGE: usize = 3;
const PNW: usize = 4;
const STY: usize = 5;
const SCORE: usize = 6;

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn draw_unit(sc: &CohortScenario, means: &[f64], u: usize) -> UnitDraw {
    let mut rng = SeedPath::new(sc.seed).child(domain::SIMULATE).child(u as u64).rng();
    let t_max = sc.waves;
    let normal = |rng: &mut crate::rng::StreamRng| -> f64 { StandardNormal.sample(rng) };

    // Fixed draw order; every draw is made whether or not it is used so the
    // stream position never depends on the mechanism.
    let sex = f64::from(rng.random::<f64>() < sc.sex_prob);
    let g = categorical(&mut rng, &sc.group_probs);
    let pov = categorical(&mut rng, &sc.pov_probs);
    let age_z = normal(&mut rng);
    let weight = (sc.base_weight_sd * normal(&mut rng) - 0.5 * sc.base_weight_sd.powi(2)).exp();
    let cluster = rng.random_range(0..sc.n_clusters);
    let pnw: Vec<f64> = (0..=t_max).map(|_| normal(&mut rng)).collect();
    let sty: Vec<f64> = (0..=t_max).map(|_| rng.random::<f64>()).collect();
    let z: Vec<f64> = (0..=t_max).map(|_| normal(&mut rng)).collect();
    let drop_u: Vec<f64> = (0..=t_max).map(|_| rng.random::<f64>()).collect();
    let item_u: Vec<[f64; 3]> = (0..=t_max).map(|_| [rng.random(), rng.random(), rng.random()]).collect();

    let age: Vec<f64> = (0..=t_max).map(|t| sc.age_mean + sc.age_sd * age_z + sc.age_step * t as f64).collect();
    let pnw: Vec<f64> = (0..=t_max).map(|t| sc.pnw_mean + sc.pnw_drift * t as f64 + sc.pnw_sd * pnw[t]).collect();
    let sty: Vec<f64> = sty.iter().map(|&u| f64::from(u < sc.sty_prob)).collect();

    let (tau, s) = (sc.ri_sd.powi(2), sc.resid_sd.powi(2));
    let scale = sc.residual_scale();
    let hazard = match &sc.dropout {
        DropoutMechanism::Mcar { .. } => None,
        DropoutMechanism::Mar(h) => Some((h, 0.0)),
        DropoutMechanism::Mnar { hazard, delta } => Some((hazard, *delta)),
    };

    let mut y = vec![0.0; t_max + 1];
    let mut resid_sum = 0.0;
    let mut dropout = None;
    for t in 0..=t_max {
        if t > 0 && dropout.is_none() {
            let p = match (&sc.dropout, hazard) {
                (DropoutMechanism::Mcar { rates }, _) => rates[t - 1],
                (_, Some((h, _))) => {
                    let gcoef = h.group.get(g).copied().unwrap_or(0.0);
                    let lag = if scale > 0.0 { (y[t - 1] - means[t - 1]) / scale } else { 0.0 };
                    logistic(h.intercepts[t - 1] + h.sex * sex + gcoef + h.lag_outcome * lag)
                }
                _ => unreachable!(),
            };
            if drop_u[t] < p {
                dropout = Some(t);
            }
        }
        let (c, v) = cond_moments(tau, s, t);
        let mut resid = c * resid_sum + v.sqrt() * z[t];
        if dropout == Some(t) {
            if let Some((_, delta)) = hazard {
                resid += delta * v.sqrt();
            }
        }
        resid_sum += resid;
        let wave = if t == 0 { 0.0 } else { sc.wave_effects[t - 1] };
        y[t] = sc.intercept
            + wave
            + sc.group_effects[g]
            + sc.group_wave(g, t)
            + sc.sex_effect * sex
            + sc.pov_effects[pov]
            + sc.age_effect * age_z
            + sc.age2_effect * age_z * age_z
            + sc.pnw_effect * pnw[t]
            + sc.sty_effect * sty[t]
            + resid;
    }

    let mut complete = vec![
        vec![sex],
        vec![g as f64],
        vec![pov as f64],
        age,
        pnw,
        sty,
        y,
        Vec::new(),
        Vec::new(),
    ];
    for col in complete.iter_mut() {
        for v in col.iter_mut() {
            // keep CSV round trips exact
            *v = v.to_string().parse().expect("float round trip");
        }
    }
    let mut observed = complete.clone();
    let gone = dropout.unwrap_or(t_max + 1);
    for t in 0..=t_max {
        for var in [AGE, PNW, STY, SCORE] {
            if t >= gone {
                observed[var][t] = f64::NAN;
            }
        }
        if t < gone {
            if item_u[t][0] < sc.item_missing_rate {
                observed[PNW][t] = f64::NAN;
            }
            if item_u[t][1] < sc.item_missing_rate {
                observed[STY][t] = f64::NAN;
            }
        }
    }
    if item_u[0][2] < sc.item_missing_rate {
        observed[POV][0] = f64::NAN;
    }
    let _ = (SEX, RACE);
    UnitDraw { cluster, weight, complete, observed, dropout }
}

fn assemble(schema: &Schema, units: &[UnitDraw], pick: impl Fn(&UnitDraw) -> &Vec<Vec<f64>>) -> Result<PanelDataset> {
    let n = units.len();
    let width = (n as f64).log10().floor() as usize + 1;
    let ids = (0..n).map(|u| format!("u{:0width$}", u + 1)).collect();
    let clusters = units.iter().map(|d| format!("s{}", d.cluster + 1)).collect();
    let weights = units.iter().map(|d| d.weight).map(|w| w.to_string().parse().expect("float")).collect();
    let values = (0..schema.variables.len())
        .map(|var| {
            let slots = pick(&units[0])[var].len();
            (0..slots).map(|slot| units.iter().map(|d| pick(d)[var][slot]).collect()).collect()
        })
        .collect();
    PanelDataset::from_parts(schema.clone(), ids, clusters, weights, values)
}

/// Generate a cohort and its truth record. A pure function of the scenario.
pub fn simulate_cohort(scenario: &CohortScenario) -> Result<(PanelDataset, TruthRecord)> {
    scenario.validate()?;
    let means = scenario.analytic_means();
    let units: Vec<UnitDraw> = (0..scenario.n).into_par_iter().map(|u| draw_unit(scenario, &means, u)).collect();
    let schema = scenario.schema();
    let observed = assemble(&schema, &units, |d| &d.observed)?;
    let complete = assemble(&schema, &units, |d| &d.complete)?;
    let truth = TruthRecord {
        scenario: scenario.clone(),
        complete,
        dropout_wave: units.iter().map(|d| d.dropout).collect(),
        analytic_means: means,
    };
    Ok((observed, truth))
}
