//! Spec extraction from a swept response. Crossings are located between
//! bracketing samples by interpolating log-magnitude against log-frequency.

use super::{FrequencyResponse, MnaError, Result};

pub fn measure_dc_gain(fr: &FrequencyResponse) -> f64 {
    fr.h[0].norm()
}

/// First frequency where |h| falls through `threshold`, scanning upward.
fn first_falling_crossing(fr: &FrequencyResponse, threshold: f64) -> Option<(usize, f64)> {
    let mags = fr.magnitudes();
    let lt = threshold.ln();
    mags.windows(2).enumerate().find_map(|(i, w)| {
        if w[0] >= threshold && w[1] < threshold {
            let (l0, l1) = (w[0].ln(), w[1].ln());
            let t = if l0 == l1 { 0.0 } else { (l0 - lt) / (l0 - l1) };
            let (g0, g1) = (fr.freqs[i].ln(), fr.freqs[i + 1].ln());
            Some((i, (g0 + t * (g1 - g0)).exp()))
        } else {
            None
        }
    })
}

pub fn measure_f3db(fr: &FrequencyResponse) -> Result<f64> {
    let reference = measure_dc_gain(fr);
    first_falling_crossing(fr, reference * std::f64::consts::FRAC_1_SQRT_2).map(|(_, f)| f).ok_or(MnaError::NoCrossing)
}

pub fn measure_ugbw(fr: &FrequencyResponse) -> Result<f64> {
    if !(measure_dc_gain(fr) > 1.0) {
        return Err(MnaError::GainBelowUnity);
    }
    first_falling_crossing(fr, 1.0).map(|(_, f)| f).ok_or(MnaError::NoUnityCrossing)
}

/// Phase in degrees, starting from the principal value of the first sample
/// and removing 360° jumps between neighbours.
pub fn unwrapped_phase_deg(fr: &FrequencyResponse) -> Vec<f64> {
    let mut out = Vec::with_capacity(fr.h.len());
    let mut prev_raw = 0.0;
    let mut offset = 0.0;
    for (i, z) in fr.h.iter().enumerate() {
        let raw = z.arg().to_degrees();
        if i > 0 {
            let d = raw - prev_raw;
            if d > 180.0 {
                offset -= 360.0;
            } else if d < -180.0 {
                offset += 360.0;
            }
        }
        out.push(raw + offset);
        prev_raw = raw;
    }
    out
}

pub fn measure_phase_margin(fr: &FrequencyResponse) -> Result<f64> {
    if !(measure_dc_gain(fr) > 1.0) {
        return Err(MnaError::GainBelowUnity);
    }
    let (i, fu) = first_falling_crossing(fr, 1.0).ok_or(MnaError::NoUnityCrossing)?;
    let phase = unwrapped_phase_deg(fr);
    let (g0, g1) = (fr.freqs[i].ln(), fr.freqs[i + 1].ln());
    let t = (fu.ln() - g0) / (g1 - g0);
    Ok(180.0 + phase[i] + t * (phase[i + 1] - phase[i]))
}
