//! Lorentzian line fitting for simulated oscillator spectra.
//!
//! Fits `y(omega) = a / (omega^2 + (fwhm/2)^2) + c` to the bins of a PSD
//! estimate whose |frequency| lies in a caller-chosen band. The fit weights
//! residuals by `1/y^2` (relative error, appropriate for periodogram noise
//! whose standard deviation scales with the level) and profiles out the
//! linear parameters `(a, c)` exactly at every candidate width, leaving a
//! one-dimensional search over `ln fwhm`: a coarse scan brackets the
//! minimum, golden-section refines it.

use super::{PsdEstimate, SimError};

/// Result of a Lorentzian line fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzFit {
    /// Full width at half maximum of the fitted line, angular frequency.
    pub fwhm: f64,
    /// Numerator `a` of the fitted line.
    pub amplitude: f64,
    /// Fitted flat background `c`.
    pub floor: f64,
    /// Fitted density at zero offset, `a/(fwhm/2)^2 + c`.
    pub peak: f64,
    /// Weighted RMS relative residual of the fit.
    pub residual: f64,
    /// Number of bins in the fit band.
    pub n_bins: usize,
}

/// Profiled weighted least squares at fixed width: returns (sse, a, c).
fn profile(omega2: &[f64], y: &[f64], w: &[f64], fwhm: f64) -> (f64, f64, f64) {
    let hw2 = (0.5 * fwhm) * (0.5 * fwhm);
    let (mut s_gg, mut s_g1, mut s_11, mut s_gy, mut s_1y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let g = 1.0 / (omega2[i] + hw2);
        let wi = w[i];
        s_gg += wi * g * g;
        s_g1 += wi * g;
        s_11 += wi;
        s_gy += wi * g * y[i];
        s_1y += wi * y[i];
    }
    let det = s_gg * s_11 - s_g1 * s_g1;
    if det.abs() <= 1e-300 || det.is_nan() {
        return (f64::INFINITY, 0.0, 0.0);
    }
    let a = (s_gy * s_11 - s_g1 * s_1y) / det;
    let c = (s_gg * s_1y - s_g1 * s_gy) / det;
    let mut sse = 0.0;
    for i in 0..y.len() {
        let fit = a / (omega2[i] + hw2) + c;
        let r = fit - y[i];
        sse += w[i] * r * r;
    }
    (sse, a, c)
}

/// Fits a Lorentzian plus flat floor to the bins with `band.0 <= |omega| <=
/// band.1`. Requires at least 10 bins and strictly positive density in the
/// band; a band whose maximum is less than 3x its median is rejected as
/// having no line to fit.
pub fn fit_lorentzian(psd: &PsdEstimate, band: (f64, f64)) -> Result<LorentzFit, SimError> {
    let mut omega2 = Vec::new();
    let mut y = Vec::new();
    for (f, p) in psd.freqs.iter().zip(&psd.psd) {
        let a = f.abs();
        if a >= band.0 && a <= band.1 {
            omega2.push(f * f);
            y.push(*p);
        }
    }
    let n_bins = y.len();
    if n_bins < 10 {
        return Err(SimError::BandTooNarrow { bins: n_bins });
    }
    if y.iter().any(|v| *v <= 0.0 || v.is_nan()) {
        return Err(SimError::NonPositivePsd);
    }
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[n_bins / 2];
    let ratio = sorted[n_bins - 1] / median;
    if ratio < 3.0 {
        return Err(SimError::FlatSpectrum { ratio });
    }
    let w: Vec<f64> = y.iter().map(|v| 1.0 / (v * v)).collect();

    // Coarse scan in ln(fwhm) over widths from well below one bin spacing to
    // far beyond the band, then golden-section between the bracketing nodes.
    let spacing = (psd.freqs[1] - psd.freqs[0]).abs();
    let t_lo = (1e-2 * spacing).ln();
    let t_hi = (1e3 * band.1.max(spacing)).ln();
    const SCAN: usize = 64;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..SCAN {
        let t = t_lo + (t_hi - t_lo) * k as f64 / (SCAN - 1) as f64;
        let (sse, _, _) = profile(&omega2, &y, &w, t.exp());
        if sse < best.0 {
            best = (sse, k);
        }
    }
    if best.1 == 0 || best.1 == SCAN - 1 || !best.0.is_finite() {
        return Err(SimError::FitDiverged(format!(
            "optimum width at search boundary (scan index {})",
            best.1
        )));
    }
    let step = (t_hi - t_lo) / (SCAN - 1) as f64;
    let mut lo = t_lo + step * (best.1 - 1) as f64;
    let mut hi = t_lo + step * (best.1 + 1) as f64;
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut t1 = hi - INV_PHI * (hi - lo);
    let mut t2 = lo + INV_PHI * (hi - lo);
    let mut f1 = profile(&omega2, &y, &w, t1.exp()).0;
    let mut f2 = profile(&omega2, &y, &w, t2.exp()).0;
    for _ in 0..80 {
        if f1 <= f2 {
            hi = t2;
            t2 = t1;
            f2 = f1;
            t1 = hi - INV_PHI * (hi - lo);
            f1 = profile(&omega2, &y, &w, t1.exp()).0;
        } else {
            lo = t1;
            t1 = t2;
            f1 = f2;
            t2 = lo + INV_PHI * (hi - lo);
            f2 = profile(&omega2, &y, &w, t2.exp()).0;
        }
    }
    let fwhm = (0.5 * (lo + hi)).exp();
    let (sse, a, c) = profile(&omega2, &y, &w, fwhm);
    if a <= 0.0 || a.is_nan() || !sse.is_finite() {
        return Err(SimError::FitDiverged(format!(
            "no positive line amplitude (a = {a:.3e})"
        )));
    }
    Ok(LorentzFit {
        fwhm,
        amplitude: a,
        floor: c,
        peak: a / ((0.5 * fwhm) * (0.5 * fwhm)) + c,
        residual: (sse / n_bins as f64).sqrt(),
        n_bins,
    })
}
