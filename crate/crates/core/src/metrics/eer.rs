use crate::error::{Error, Result};

/// SI-SDRi strictly below this counts as a failure.
pub const FAILURE_THRESHOLD_DB: f64 = 1.0;

/// Percentage of values strictly below 1 dB.
pub fn failure_rate(si_sdri_values: &[f64]) -> Result<f64> {
    if si_sdri_values.is_empty() {
        return Err(Error::Degenerate("failure rate of an empty list".into()));
    }
    let fails = si_sdri_values.iter().filter(|&&v| v < FAILURE_THRESHOLD_DB).count();
    Ok(100.0 * fails as f64 / si_sdri_values.len() as f64)
}

/// Equal error rate in percent.
///
/// Thresholds sweep `-inf`, every midpoint between consecutive distinct
/// scores, and `+inf`; FRR(t) counts target scores below `t` and FAR(t)
/// nontarget scores at or above `t`. The crossing is linearly interpolated
/// between the two operating points that bracket it.
pub fn eer(target_scores: &[f64], nontarget_scores: &[f64]) -> Result<f64> {
    if target_scores.is_empty() || nontarget_scores.is_empty() {
        return Err(Error::Degenerate("EER needs target and nontarget scores".into()));
    }
    if target_scores.iter().chain(nontarget_scores).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite verification score".into()));
    }
    let mut tar = target_scores.to_vec();
    let mut non = nontarget_scores.to_vec();
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = tar.iter().chain(&non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(f64::INFINITY);

    let point = |t: f64| {
        let frr = tar.partition_point(|&v| v < t) as f64 / tar.len() as f64;
        let far = (non.len() - non.partition_point(|&v| v < t)) as f64 / non.len() as f64;
        (frr, far)
    };
    let mut prev = point(thresholds[0]);
    for &t in &thresholds[1..] {
        let cur = point(t);
        if cur.0 >= cur.1 {
            let d0 = prev.1 - prev.0;
            let d1 = cur.1 - cur.0;
            let s = if d0 - d1 == 0.0 { 0.0 } else { d0 / (d0 - d1) };
            return Ok(100.0 * (prev.0 + s * (cur.0 - prev.0)));
        }
        prev = cur;
    }
    unreachable!("FRR reaches 1 and FAR reaches 0 at +inf")
}
