//! Reconstruction quality measures: normalized mean squared error, cosine
//! distance, Schroeder energy decay curves, and T60 estimation.
//!
//! NMSE and cosine distance are evaluated over the missing microphones
//! only — the measured ones are copied verbatim by every method, so
//! scoring them would just dilute the result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::room_sim::RirMatrix;

/// Identifies one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigKey {
    pub curvature: f64,
    pub angle_deg: f64,
    pub mask_ratio: f64,
    pub seed: u64,
    pub method: String,
}

/// Score for a single missing microphone, or the reason it has none.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicEval {
    pub mic: usize,
    pub nmse_db: Option<f64>,
    pub cd: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate and per-microphone scores for one reconstruction.
///
/// `nmse_db` is −∞ when the estimate is exact (the ratio inside the log
/// is zero); downstream text output renders that as `-inf`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub key: ConfigKey,
    pub nmse_db: f64,
    pub cd: f64,
    pub per_mic: Vec<MicEval>,
}

fn column_norm_sq(m: &RirMatrix, i: usize) -> f64 {
    m.data.column(i).iter().map(|v| v * v).sum()
}

fn check_missing_set(truth: &RirMatrix, estimate: &RirMatrix, missing: &[usize]) -> Result<()> {
    if truth.data.dim() != estimate.data.dim() {
        return Err(Error::Shape(format!(
            "truth is {:?} but estimate is {:?}",
            truth.data.dim(),
            estimate.data.dim()
        )));
    }
    if let Some(&i) = missing.iter().find(|&&i| i >= truth.n_mics()) {
        return Err(Error::InvalidInput(format!(
            "missing index {i} out of range for {} mics",
            truth.n_mics()
        )));
    }
    Ok(())
}

/// Normalized mean squared error in dB over the missing microphones:
/// `10·log10( mean_i ‖ĥ_i − h_i‖² / ‖h_i‖² )`.
///
/// Returns −∞ when every estimated column equals the truth exactly.
pub fn nmse_db(truth: &RirMatrix, estimate: &RirMatrix, missing: &[usize]) -> Result<f64> {
    check_missing_set(truth, estimate, missing)?;
    if missing.is_empty() {
        return Err(Error::InvalidInput("missing set is empty".into()));
    }
    let mut acc = 0.0;
    for &i in missing {
        let denom = column_norm_sq(truth, i);
        if denom == 0.0 {
            return Err(Error::Metric(format!("truth column {i} has zero energy")));
        }
        let num: f64 = truth
            .data
            .column(i)
            .iter()
            .zip(estimate.data.column(i).iter())
            .map(|(t, e)| (e - t) * (e - t))
            .sum();
        acc += num / denom;
    }
    Ok(10.0 * (acc / missing.len() as f64).log10())
}

/// Cosine distance over the missing microphones:
/// `mean_i ( 1 − (h_iᵀĥ_i / ‖h_i‖‖ĥ_i‖)² )`, in [0, 1].
///
/// 0 when every estimate is collinear with the truth (any sign or scale),
/// 1 when every estimate is orthogonal to it.
pub fn cosine_distance(truth: &RirMatrix, estimate: &RirMatrix, missing: &[usize]) -> Result<f64> {
    check_missing_set(truth, estimate, missing)?;
    if missing.is_empty() {
        return Err(Error::InvalidInput("missing set is empty".into()));
    }
    let mut acc = 0.0;
    for &i in missing {
        acc += column_cd(truth, estimate, i)?;
    }
    Ok(acc / missing.len() as f64)
}

fn column_cd(truth: &RirMatrix, estimate: &RirMatrix, i: usize) -> Result<f64> {
    let tn = column_norm_sq(truth, i);
    let en = column_norm_sq(estimate, i);
    if tn == 0.0 {
        return Err(Error::Metric(format!("truth column {i} has zero energy")));
    }
    if en == 0.0 {
        return Err(Error::Metric(format!("estimate column {i} has zero energy")));
    }
    let dot: f64 = truth
        .data
        .column(i)
        .iter()
        .zip(estimate.data.column(i).iter())
        .map(|(t, e)| t * e)
        .sum();
    Ok((1.0 - dot * dot / (tn * en)).clamp(0.0, 1.0))
}

fn column_nmse_db(truth: &RirMatrix, estimate: &RirMatrix, i: usize) -> Result<f64> {
    let denom = column_norm_sq(truth, i);
    if denom == 0.0 {
        return Err(Error::Metric(format!("truth column {i} has zero energy")));
    }
    let num: f64 = truth
        .data
        .column(i)
        .iter()
        .zip(estimate.data.column(i).iter())
        .map(|(t, e)| (e - t) * (e - t))
        .sum();
    Ok(10.0 * (num / denom).log10())
}

/// Score a reconstruction against the ground truth over the mask's missing
/// set, with a per-microphone breakdown.
///
/// Microphones whose metric is undefined (zero-energy columns) get an
/// error entry instead of failing the whole report; aggregates are over
/// the well-defined microphones. An empty missing set (mask ratio 0)
/// reports the exact-reconstruction sentinel: NMSE = −∞ dB, CD = 0.
pub fn evaluate(
    truth: &RirMatrix,
    estimate: &RirMatrix,
    mask: &Mask,
    key: ConfigKey,
) -> Result<EvalReport> {
    let missing = mask.missing_indices();
    check_missing_set(truth, estimate, &missing)?;
    if mask.len() != truth.n_mics() {
        return Err(Error::Shape(format!(
            "mask covers {} mics but matrix has {}",
            mask.len(),
            truth.n_mics()
        )));
    }

    let mut per_mic = Vec::with_capacity(missing.len());
    let mut ratio_acc = 0.0;
    let mut cd_acc = 0.0;
    let mut n_ok = 0usize;
    for &i in &missing {
        match (column_nmse_db(truth, estimate, i), column_cd(truth, estimate, i)) {
            (Ok(n), Ok(c)) => {
                per_mic.push(MicEval {
                    mic: i,
                    nmse_db: Some(n),
                    cd: Some(c),
                    error: None,
                });
                ratio_acc += 10f64.powf(n / 10.0);
                cd_acc += c;
                n_ok += 1;
            }
            (n, c) => {
                let msg = n.err().or(c.err()).map(|e| e.to_string());
                per_mic.push(MicEval {
                    mic: i,
                    nmse_db: None,
                    cd: None,
                    error: msg,
                });
            }
        }
    }

    let (nmse, cd) = if n_ok == 0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (
            10.0 * (ratio_acc / n_ok as f64).log10(),
            cd_acc / n_ok as f64,
        )
    };
    Ok(EvalReport {
        key,
        nmse_db: nmse,
        cd,
        per_mic,
    })
}

/// Schroeder energy decay curve in dB:
/// `EDC(n) = 10·log10( Σ_{m≥n} h[m]² / Σ_m h[m]² )`.
///
/// Starts at exactly 0 dB, is non-increasing, and is −∞ past the last
/// nonzero sample.
pub fn edc_db(h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() || h.iter().all(|&v| v == 0.0) {
        return Err(Error::Metric("EDC of an all-zero response".into()));
    }
    let mut tail = vec![0.0f64; h.len()];
    let mut acc = 0.0;
    for n in (0..h.len()).rev() {
        acc += h[n] * h[n];
        tail[n] = acc;
    }
    let total = tail[0];
    Ok(tail.iter().map(|&t| 10.0 * (t / total).log10()).collect())
}

/// T60 from an EDC curve: least-squares line through the −5..−35 dB span
/// (T30 range), extrapolated to 60 dB of decay.
///
/// Errors when the curve never reaches −35 dB, i.e. the response was
/// truncated before enough decay happened.
pub fn t60_from_edc(edc: &[f64], sample_rate: f64) -> Result<f64> {
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidInput("sample rate must be positive".into()));
    }
    let start = edc
        .iter()
        .position(|&v| v <= -5.0)
        .ok_or_else(|| Error::Metric("EDC never reaches -5 dB".into()))?;
    let end = edc
        .iter()
        .position(|&v| v <= -35.0)
        .ok_or_else(|| Error::Metric("EDC never reaches -35 dB".into()))?;
    if end <= start + 1 {
        return Err(Error::Metric("EDC fit span is degenerate".into()));
    }

    // least squares y = a + b·n over [start, end]
    let n = (end - start + 1) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in edc[start..=end].iter().enumerate() {
        let x = i as f64;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx); // dB per sample
    if !(slope < 0.0) {
        return Err(Error::Metric(format!("EDC slope {slope} is not negative")));
    }
    Ok(-60.0 / slope / sample_rate)
}
