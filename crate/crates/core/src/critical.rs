//! Critical inverse temperature of the limiting tree, empirical transition
//! detection and generation growth rates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fmt_f64;
use crate::ppt::{generation_sizes, PptParams};
use crate::rde::{replicate_values, summarize, LimitEstimates, RdeConfig};
use crate::rng::stream_rng;
use crate::stats::{mean_se, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalResult {
    pub beta_c: f64,
    /// Spectral radius of the mean offspring operator; `+inf` when
    /// `delta <= 0`.
    pub r_kappa: f64,
    /// Percolation threshold `1 / r_kappa`.
    pub pi_c: f64,
}

fn check_params(m: usize, delta: f64) -> Result<()> {
    if m < 2 {
        return Err(invalid(format!("m must be at least 2, got {m}")));
    }
    if !(delta > -(m as f64)) || !delta.is_finite() {
        return Err(invalid(format!("delta must exceed -m = {}, got {delta}", -(m as f64))));
    }
    Ok(())
}

/// Closed-form critical point for attachment parameters `(m, delta)`.
///
/// `r_kappa = 2(m(m+delta) + sqrt(m(m-1)(m+delta)(m+delta+1))) / delta` and
/// `tanh(beta_c) = 1 / r_kappa`. For `delta <= 0` the tree has infinite
/// branching number and `beta_c = 0`.
pub fn beta_critical(m: usize, delta: f64) -> Result<CriticalResult> {
    check_params(m, delta)?;
    if delta <= 0.0 {
        return Ok(CriticalResult { beta_c: 0.0, r_kappa: f64::INFINITY, pi_c: 0.0 });
    }
    let mf = m as f64;
    let s = mf + delta;
    let denom = 2.0 * (mf * s + (mf * (mf - 1.0) * s * (s + 1.0)).sqrt());
    let arg = delta / denom;
    Ok(CriticalResult { beta_c: arg.atanh(), r_kappa: denom / delta, pi_c: arg })
}

/// One point of a magnetisation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    #[serde(rename = "B")]
    pub field: f64,
    pub estimates: LimitEstimates,
}

pub fn write_sweep_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> Result<()> {
    writeln!(out, "beta,B,M,M_err,U,U_err,phi,phi_err")?;
    for p in points {
        let e = &p.estimates;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(p.beta),
            fmt_f64(p.field),
            fmt_f64(e.magnetisation.pooled.mean),
            fmt_f64(e.magnetisation.pooled.err),
            fmt_f64(e.internal_energy.pooled.mean),
            fmt_f64(e.internal_energy.pooled.err),
            fmt_f64(e.phi.pooled.mean),
            fmt_f64(e.phi.pooled.err)
        )?;
    }
    Ok(())
}

/// Limit estimates over a `(beta, B)` grid. Every point reuses the trees of
/// `base.seed`.
pub fn sweep(params: &PptParams, betas: &[f64], fields: &[f64], base: &RdeConfig) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(betas.len() * fields.len());
    for &beta in betas {
        for &field in fields {
            let cfg = base.with_beta(beta).with_field(field);
            let estimates = summarize(&replicate_values(params, &cfg)?, params.m(), beta);
            out.push(SweepPoint { beta, field, estimates });
        }
    }
    Ok(out)
}

/// Magnetisation extrapolated to zero field at one inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub beta: f64,
    pub magnetisation: Estimate,
    /// Three times the standard error of the extrapolated value.
    pub noise_floor: f64,
}

impl Extrapolation {
    pub fn ordered(&self) -> bool {
        self.magnetisation.mean > self.noise_floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub closed_form: CriticalResult,
    pub extrapolations: Vec<Extrapolation>,
    /// First grid point whose extrapolated magnetisation clears the noise
    /// floor, when the grid brackets a change.
    pub beta_c: Option<f64>,
    pub points: Vec<SweepPoint>,
}

impl TransitionResult {
    pub fn inconclusive(&self) -> bool {
        self.beta_c.is_none()
    }
}

/// Linear extrapolation of the pooled magnetisation to `B = 0` from the two
/// smallest fields, replicate by replicate over shared trees.
pub fn extrapolate_to_zero_field(params: &PptParams, beta: f64, fields: &[f64], base: &RdeConfig) -> Result<Extrapolation> {
    if fields.len() < 2 {
        return Err(invalid("need at least two fields"));
    }
    let mut sorted = fields.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[0] <= 0.0 || sorted[0] == sorted[1] {
        return Err(invalid("fields must be positive and distinct"));
    }
    let (b1, b2) = (sorted[0], sorted[1]);
    let m1 = replicate_values(params, &base.with_beta(beta).with_field(b1))?;
    let m2 = replicate_values(params, &base.with_beta(beta).with_field(b2))?;
    let zero: Vec<f64> = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| {
            let (y1, y2) = (a.magnetisation.mid(), b.magnetisation.mid());
            y1 - b1 * (y2 - y1) / (b2 - b1)
        })
        .collect();
    let magnetisation = mean_se(&zero);
    Ok(Extrapolation { beta, magnetisation, noise_floor: 3.0 * magnetisation.err })
}

/// Scan `betas` (increasing) for the onset of spontaneous magnetisation.
///
/// `fields` is the decreasing field sequence; the full sweep over it is
/// returned alongside the zero-field extrapolations. The estimate is the
/// first grid point that clears the noise floor, provided an earlier point
/// does not.
pub fn detect_transition(params: &PptParams, betas: &[f64], fields: &[f64], base: &RdeConfig) -> Result<TransitionResult> {
    if betas.len() < 2 || betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("beta grid must hold at least two increasing points"));
    }
    if fields.windows(2).any(|w| !(w[1] < w[0])) || fields.iter().any(|&b| !(b > 0.0)) {
        return Err(invalid("field sequence must be positive and decreasing"));
    }
    let closed_form = beta_critical(params.m(), params.delta())?;
    let points = sweep(params, betas, fields, base)?;
    let extrapolations =
        betas.iter().map(|&b| extrapolate_to_zero_field(params, b, fields, base)).collect::<Result<Vec<_>>>()?;
    let first = extrapolations.iter().position(Extrapolation::ordered);
    let beta_c = match first {
        Some(i) if i > 0 => Some(betas[i]),
        _ => None,
    };
    Ok(TransitionResult { closed_form, extrapolations, beta_c, points })
}

/// Mean generation sizes and their successive ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub mean_sizes: Vec<Estimate>,
    /// `E[M_{k+1}] / E[M_k]` for `k = 0..depth`.
    pub ratios: Vec<Estimate>,
    pub r_kappa: f64,
}

/// Monte Carlo generation sizes over `replicates` trees; tree `k` uses
/// stream `k` of `seed`.
pub fn growth_rate(params: &PptParams, depth: usize, replicates: usize, seed: u64, cap: usize) -> Result<GrowthEstimate> {
    if replicates < 2 {
        return Err(invalid("need at least two replicates"));
    }
    let sizes: Vec<Vec<u64>> = (0..replicates)
        .into_par_iter()
        .map(|k| generation_sizes(params, depth, cap, &mut stream_rng(seed, k as u64)))
        .collect::<Result<_>>()?;
    let column = |k: usize| sizes.iter().map(|s| s[k] as f64).collect::<Vec<_>>();
    let mean_sizes: Vec<Estimate> = (0..=depth).map(|k| mean_se(&column(k))).collect();
    // ratio of means with a delta-method error from the paired samples
    let n = replicates as f64;
    let ratios = (0..depth)
        .map(|k| {
            let (x, y) = (column(k), column(k + 1));
            let (mx, my) = (mean_sizes[k].mean, mean_sizes[k + 1].mean);
            let r = my / mx;
            let var = x.iter().zip(&y).map(|(a, b)| (b - r * a).powi(2)).sum::<f64>() / (n - 1.0);
            Estimate { mean: r, err: (var / n).sqrt() / mx }
        })
        .collect();
    let r_kappa = if params.m() >= 2 { beta_critical(params.m(), params.delta())?.r_kappa } else { f64::NAN };
    Ok(GrowthEstimate { mean_sizes, ratios, r_kappa })
}

/// Summary written next to a transition sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub m: usize,
    pub delta: f64,
    pub beta_c_closed_form: f64,
    pub r_kappa: f64,
    pub pi_c: f64,
    pub beta_c_empirical: Option<f64>,
    pub inconclusive: bool,
}

impl TransitionSummary {
    pub fn new(params: &PptParams, result: &TransitionResult) -> Self {
        Self {
            m: params.m(),
            delta: params.delta(),
            beta_c_closed_form: result.closed_form.beta_c,
            r_kappa: result.closed_form.r_kappa,
            pi_c: result.closed_form.pi_c,
            beta_c_empirical: result.beta_c,
            inconclusive: result.inconclusive(),
        }
    }
}
