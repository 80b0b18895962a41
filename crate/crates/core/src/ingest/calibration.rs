//! Photon-count calibration: equispaced multi-Gaussian histogram fit and
//! nearest-peak atom counting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of peaks: empty trap through seven atoms.
pub const DEFAULT_PEAKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    /// Position m of the empty-trap peak, photon counts.
    pub peak_offset: f64,
    /// Spacing Δ between consecutive peaks, photon counts.
    pub peak_spacing: f64,
    pub n_peaks: usize,
    /// One shared width, repeated per peak.
    pub widths: Vec<f64>,
    /// Fitted peak heights in histogram counts per bin.
    pub amplitudes: Vec<f64>,
    /// Residual sum of squares over the sum of squared bin counts.
    pub goodness: f64,
    pub bin_width: f64,
}

struct Histogram {
    centres: Vec<f64>,
    counts: Vec<f64>,
    width: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis binning on integer counts, falling back to range/√n
/// when the IQR vanishes. The width is capped so the range spans at least
/// five bins per fitted peak, and rounded up to whole counts with integer
/// values at bin centres. Empty bins pad a quarter of the range on each side
/// so the fit sees where the data stop.
fn histogram(values: &[f64], n_peaks: usize) -> Result<Histogram> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return Err(Error::Calibration("all counts identical: a single cluster".into()));
    }
    let n = sorted.len() as f64;
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let mut width = 2.0 * iqr / n.cbrt();
    if !(width > 0.0) {
        width = (hi - lo) / n.sqrt();
    }
    let width = width.min((hi - lo) / (5 * n_peaks) as f64).ceil().max(1.0);
    let pad = (0.25 * (hi - lo) / width).ceil();
    let start = lo - (pad + 0.5) * width;
    let bins = ((hi - start) / width).floor() as usize + 1 + pad as usize;
    if bins > 1_000_000 {
        return Err(Error::Calibration("photon-count range too wide to histogram".into()));
    }
    let mut counts = vec![0.0; bins];
    for &v in values {
        let k = (((v - start) / width).floor() as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let centres = (0..bins).map(|k| start + (k as f64 + 0.5) * width).collect();
    Ok(Histogram { centres, counts, width })
}

/// Local maxima of the 3-bin moving average above 2% of its peak.
fn local_maxima(h: &Histogram) -> Vec<f64> {
    let n = h.counts.len();
    let smooth: Vec<f64> = (0..n)
        .map(|k| {
            let a = if k > 0 { h.counts[k - 1] } else { 0.0 };
            let c = if k + 1 < n { h.counts[k + 1] } else { 0.0 };
            (a + h.counts[k] + c) / 3.0
        })
        .collect();
    let top = smooth.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    let mut k = 0;
    while k < n {
        // plateaus count once, at their centre
        let mut end = k;
        while end + 1 < n && smooth[end + 1] == smooth[k] {
            end += 1;
        }
        let left = if k > 0 { smooth[k - 1] } else { f64::NEG_INFINITY };
        let right = if end + 1 < n { smooth[end + 1] } else { f64::NEG_INFINITY };
        if smooth[k] > left && smooth[k] > right && smooth[k] >= 0.02 * top {
            peaks.push(0.5 * (h.centres[k] + h.centres[end]));
        }
        k = end + 1;
    }
    peaks
}

/// Count-weighted centroid of the raw histogram around each smoothed maximum,
/// within half the distance to its neighbours.
fn refine_centroids(h: &Histogram, maxima: &[f64]) -> Vec<f64> {
    (0..maxima.len())
        .map(|i| {
            let lo = if i > 0 { 0.5 * (maxima[i - 1] + maxima[i]) } else { f64::NEG_INFINITY };
            let hi = if i + 1 < maxima.len() { 0.5 * (maxima[i] + maxima[i + 1]) } else { f64::INFINITY };
            let (mut w, mut wx) = (0.0, 0.0);
            for (&c, &y) in h.centres.iter().zip(&h.counts) {
                if c > lo && c <= hi {
                    w += y;
                    wx += y * c;
                }
            }
            if w > 0.0 { wx / w } else { maxima[i] }
        })
        .collect()
}

struct Model<'a> {
    h: &'a Histogram,
    n_peaks: usize,
}

impl Model<'_> {
    /// Parameters: [m, Δ, ln σ, A_0, ..., A_{n-1}].
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let (m, d, s) = (p[0], p[1], p[2].exp());
        DVector::from_iterator(
            self.h.counts.len(),
            self.h.centres.iter().zip(&self.h.counts).map(|(&x, &y)| {
                let model: f64 = (0..self.n_peaks)
                    .map(|k| p[3 + k] * (-0.5 * ((x - m - k as f64 * d) / s).powi(2)).exp())
                    .sum();
                y - model
            }),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (m, d, s) = (p[0], p[1], p[2].exp());
        let mut jac = DMatrix::zeros(self.h.counts.len(), 3 + self.n_peaks);
        for (i, &x) in self.h.centres.iter().enumerate() {
            for k in 0..self.n_peaks {
                let u = (x - m - k as f64 * d) / s;
                let g = (-0.5 * u * u).exp();
                let a = p[3 + k];
                // derivatives of the model; residual = y - model
                jac[(i, 0)] -= a * g * u / s;
                jac[(i, 1)] -= a * g * u * k as f64 / s;
                jac[(i, 2)] -= a * g * u * u;
                jac[(i, 3 + k)] = -g;
            }
        }
        jac
    }
}

/// Fits `n_peaks` equispaced Gaussians with one shared width to the histogram
/// of `counts`.
pub fn fit_calibration_histogram(counts: &[i64], n_peaks: usize) -> Result<CalibrationFit> {
    if n_peaks < 2 {
        return Err(Error::Calibration("need at least two peaks".into()));
    }
    if counts.len() < 10 * n_peaks {
        return Err(Error::Calibration(format!(
            "{} samples are too few for {n_peaks} peaks (need {})",
            counts.len(),
            10 * n_peaks
        )));
    }
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let h = histogram(&values, n_peaks)?;
    let maxima = local_maxima(&h);
    if maxima.len() < 2 {
        return Err(Error::Calibration("histogram has a single cluster; cannot resolve the peak spacing".into()));
    }
    let maxima = refine_centroids(&h, &maxima);
    let mut gaps: Vec<f64> = maxima.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let spacing0 = gaps[gaps.len() / 2];
    let offset0 = maxima[0];
    let sigma0 = (0.25 * spacing0).max(h.width);

    let model = Model { h: &h, n_peaks };
    let mut p = DVector::zeros(3 + n_peaks);
    p[0] = offset0;
    p[1] = spacing0;
    p[2] = sigma0.ln();
    for k in 0..n_peaks {
        let centre = offset0 + k as f64 * spacing0;
        p[3 + k] = h
            .centres
            .iter()
            .zip(&h.counts)
            .filter(|(&c, _)| (c - centre).abs() <= h.width)
            .map(|(_, &y)| y)
            .fold(0.0, f64::max);
    }

    let scale: f64 = h.counts.iter().map(|c| c * c).sum();
    let min_log_width = (0.25 * h.width).ln();
    let max_amplitude = 2.0 * h.counts.iter().copied().fold(0.0, f64::max);
    let max_log_width = spacing0.ln().max(min_log_width);
    let mut r = model.residuals(&p);
    let mut cost = r.norm_squared();
    let mut damping = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let jac = model.jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut stepped = false;
        while damping < 1e14 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&(-&grad)) else {
                damping *= 10.0;
                continue;
            };
            // trust region on the peak positions keeps the fit in its basin
            if delta[0].abs().max(delta[1].abs()) > 0.2 * spacing0 {
                damping *= 4.0;
                continue;
            }
            let mut trial = &p + &delta;
            // a histogram cannot resolve widths much below one bin
            trial[2] = trial[2].clamp(min_log_width, max_log_width);
            for k in 0..n_peaks {
                trial[3 + k] = trial[3 + k].clamp(0.0, max_amplitude);
            }
            let tr = model.residuals(&trial);
            let tc = tr.norm_squared();
            if tc <= cost {
                let rel = (trial[0] - p[0]).abs().max((trial[1] - p[1]).abs()) / p[1].abs().max(1e-12);
                p = trial;
                r = tr;
                let improvement = cost - tc;
                cost = tc;
                damping = (damping / 3.0).max(1e-12);
                stepped = true;
                if rel < 1e-10 || improvement <= 1e-12 * cost || cost <= 1e-24 * scale {
                    converged = true;
                }
                break;
            }
            damping *= 4.0;
        }
        if !stepped {
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Calibration("histogram fit did not converge".into()));
    }

    let spacing = p[1];
    let width = p[2].exp();
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Calibration(format!("fitted peak spacing {spacing:.3} is not positive")));
    }
    if spacing <= 2.0 * width {
        return Err(Error::Calibration(format!(
            "peaks unresolved: spacing {spacing:.3} within two widths ({width:.3})"
        )));
    }
    Ok(CalibrationFit {
        peak_offset: p[0],
        peak_spacing: spacing,
        n_peaks,
        widths: vec![width; n_peaks],
        amplitudes: (0..n_peaks).map(|k| p[3 + k]).collect(),
        goodness: cost / scale,
        bin_width: h.width,
    })
}

/// Nearest-peak index round((n_p − m)/Δ), clamped to [0, cap].
pub fn photons_to_atoms(photon_count: i64, calib: &CalibrationFit, cap: u32) -> u32 {
    raw_index(photon_count, calib).clamp(0, cap as i64) as u32
}

fn raw_index(photon_count: i64, calib: &CalibrationFit) -> i64 {
    ((photon_count as f64 - calib.peak_offset) / calib.peak_spacing).round() as i64
}

/// Counts of values clamped while mapping photons to atoms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingDiagnostics {
    /// Below the empty-trap peak; a sign of background drift.
    pub below_zero: usize,
    pub above_cap: usize,
}

pub fn map_photon_counts(counts: &[i64], calib: &CalibrationFit, cap: u32) -> (Vec<u32>, MappingDiagnostics) {
    let mut diag = MappingDiagnostics::default();
    let atoms = counts
        .iter()
        .map(|&c| {
            let k = raw_index(c, calib);
            if k < 0 {
                diag.below_zero += 1;
            } else if k > cap as i64 {
                diag.above_cap += 1;
            }
            k.clamp(0, cap as i64) as u32
        })
        .collect();
    (atoms, diag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub samples: usize,
    /// The mean is zero and cannot serve as a loading rate.
    pub unusable: bool,
}

/// Empirical mean of zero-release atom counts.
pub fn estimate_lambda(calibration_atoms: &[u32]) -> Result<LambdaEstimate> {
    if calibration_atoms.is_empty() {
        return Err(Error::Calibration("no calibration shots".into()));
    }
    let lambda = calibration_atoms.iter().map(|&n| n as f64).sum::<f64>() / calibration_atoms.len() as f64;
    Ok(LambdaEstimate { lambda, samples: calibration_atoms.len(), unusable: lambda == 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::stream_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn mixture(m: f64, d: f64, sigma: f64, peaks: usize, samples: usize, seed: u64) -> Vec<i64> {
        let mut rng = stream_rng(seed, 0);
        (0..samples)
            .map(|_| {
                let k = rng.random_range(0..peaks) as f64;
                Normal::new(m + k * d, sigma).unwrap().sample(&mut rng).round() as i64
            })
            .collect()
    }

    #[test]
    fn recovers_synthetic_mixture() {
        let fit = fit_calibration_histogram(&mixture(100.0, 50.0, 8.0, 3, 3000, 1), 3).unwrap();
        assert!((fit.peak_offset - 100.0).abs() <= 2.0, "{fit:?}");
        assert!((fit.peak_spacing - 50.0).abs() <= 2.0, "{fit:?}");
        assert!((fit.widths[0] - 8.0).abs() <= 1.5, "{fit:?}");
    }

    #[test]
    fn separated_spikes() {
        let counts: Vec<i64> = (0..400).map(|i| if i % 2 == 0 { 100 } else { 150 }).collect();
        let fit = fit_calibration_histogram(&counts, 2).unwrap();
        assert!((fit.peak_offset - 100.0).abs() <= fit.bin_width, "{fit:?}");
        assert!((fit.peak_spacing - 50.0).abs() <= fit.bin_width, "{fit:?}");
    }

    #[test]
    fn single_cluster_and_too_few() {
        let counts = mixture(100.0, 0.0, 5.0, 1, 500, 2);
        assert!(matches!(fit_calibration_histogram(&counts, 2), Err(Error::Calibration(_))));
        assert!(matches!(fit_calibration_histogram(&[100; 500], 2), Err(Error::Calibration(_))));
        assert!(fit_calibration_histogram(&counts[..15], 2).is_err());
        assert!(fit_calibration_histogram(&counts, 1).is_err());
    }

    #[test]
    fn poisson_loaded_camera_counts() {
        // empty-trap background at 200, 80 photons per atom, width 12, λ = 1.65
        let mut rng = stream_rng(4, 0);
        let loading = Poisson::new(1.65).unwrap();
        let mut atoms = Vec::new();
        let counts: Vec<i64> = (0..2000)
            .map(|_| {
                let n: f64 = loading.sample(&mut rng);
                atoms.push(n as u32);
                Normal::new(200.0 + 80.0 * n, 12.0).unwrap().sample(&mut rng).round() as i64
            })
            .collect();
        let fit = fit_calibration_histogram(&counts, DEFAULT_PEAKS).unwrap();
        assert!((fit.peak_offset - 200.0).abs() < 3.0, "{fit:?}");
        assert!((fit.peak_spacing - 80.0).abs() < 3.0, "{fit:?}");
        let (mapped, diag) = map_photon_counts(&counts, &fit, 7);
        let agree = mapped.iter().zip(&atoms).filter(|(a, b)| a == b).count();
        assert!(agree as f64 > 0.99 * atoms.len() as f64);
        assert_eq!(diag.above_cap, atoms.iter().filter(|&&n| n > 7).count());

        // affine rescaling of every count leaves the atom numbers alone
        let scaled: Vec<i64> = counts.iter().map(|&c| 3 * c + 500).collect();
        let refit = fit_calibration_histogram(&scaled, DEFAULT_PEAKS).unwrap();
        let (remapped, _) = map_photon_counts(&scaled, &refit, 7);
        let same = remapped.iter().zip(&mapped).filter(|(a, b)| a == b).count();
        assert!(same as f64 >= 0.999 * mapped.len() as f64);
    }

    fn calib(m: f64, d: f64) -> CalibrationFit {
        CalibrationFit { peak_offset: m, peak_spacing: d, n_peaks: 8, widths: vec![5.0; 8], amplitudes: vec![1.0; 8], goodness: 0.0, bin_width: 1.0 }
    }

    #[test]
    fn nearest_peak_mapping() {
        let c = calib(100.0, 50.0);
        assert_eq!(photons_to_atoms(100, &c, 7), 0);
        assert_eq!(photons_to_atoms(148, &c, 7), 1);
        assert_eq!(photons_to_atoms(60, &c, 7), 0);
        assert_eq!(photons_to_atoms(10_000, &c, 7), 7);
        let (_, diag) = map_photon_counts(&[60, 100, 10_000], &c, 7);
        assert_eq!(diag, MappingDiagnostics { below_zero: 1, above_cap: 1 });
        for n in 0..=7 {
            assert_eq!(photons_to_atoms((100.0 + n as f64 * 50.0) as i64, &c, 7), n);
        }
    }

    #[test]
    fn lambda_from_calibration() {
        let e = estimate_lambda(&[1, 2, 3]).unwrap();
        assert_eq!(e.lambda, 2.0);
        assert!(!e.unusable);
        assert!(estimate_lambda(&[0, 0]).unwrap().unusable);
        assert!(estimate_lambda(&[]).is_err());
        let mut rng = stream_rng(188, 0);
        let poisson = Poisson::new(1.88).unwrap();
        let sample: Vec<u32> = (0..100).map(|_| poisson.sample(&mut rng) as u32).collect();
        let e = estimate_lambda(&sample).unwrap();
        assert!((e.lambda - 1.88).abs() <= 3.0 * (1.88f64 / 100.0).sqrt());
    }
}
