//! Replication-level evaluation: spectral loss, support recovery counts,
//! aggregation across replications, and support-frequency output.

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, SymMatrix};
use crate::threshold::SupportMask;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Operator-norm distance between an estimate and the truth.
pub fn spectral_loss(est: &SymMatrix, truth: &SymMatrix) -> Result<f64> {
    if est.dim() != truth.dim() {
        return Err(Error::Config(format!(
            "dimension mismatch: {} vs {}",
            est.dim(),
            truth.dim()
        )));
    }
    spectral_norm(&est.sub(truth)?)
}

/// Support recovery counts for one replication. Rates are over ordered
/// off-diagonal entries only; `exact_recovery` compares the full masks,
/// diagonal included. A rate whose denominator is empty is `None`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupportStats {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub exact_recovery: bool,
}

pub fn support_stats(est: &SupportMask, truth: &SupportMask) -> Result<SupportStats> {
    let p = truth.dim();
    if est.dim() != p {
        return Err(Error::Config(format!(
            "dimension mismatch: {} vs {p}",
            est.dim()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    let mut exact = true;
    for i in 0..p {
        for j in 0..p {
            let e = est.get(i, j);
            let t = truth.get(i, j);
            if e != t {
                exact = false;
            }
            if i == j {
                continue;
            }
            match (t, e) {
                (true, true) => tp += 1,
                (true, false) => fneg += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Ok(SupportStats {
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fneg,
        tpr: ratio(tp, tp + fneg),
        fpr: ratio(fp, fp + tn),
        exact_recovery: exact,
    })
}

/// Mean and standard deviation (n-1 denominator) of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// `None` on an empty sample; sd is 0 for a single value.
pub fn summarize(xs: &[f64]) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n == 1 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(Summary { mean, sd, count: n })
}

/// Summary of a per-replication rate, skipping replications where the rate
/// was undefined and counting how many were skipped.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateSummary {
    pub summary: Option<Summary>,
    pub undefined: usize,
}

pub fn summarize_rates(xs: &[Option<f64>]) -> RateSummary {
    let defined: Vec<f64> = xs.iter().filter_map(|x| *x).collect();
    RateSummary {
        summary: summarize(&defined),
        undefined: xs.len() - defined.len(),
    }
}

/// How often each entry survived thresholding across replications.
#[derive(Debug, Clone)]
pub struct SupportFrequency {
    dim: usize,
    reps: usize,
    counts: Vec<u32>,
}

impl SupportFrequency {
    pub fn new(dim: usize) -> Self {
        SupportFrequency {
            dim,
            reps: 0,
            counts: vec![0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn add(&mut self, mask: &SupportMask) -> Result<()> {
        if mask.dim() != self.dim {
            return Err(Error::Config(format!(
                "dimension mismatch: {} vs {}",
                mask.dim(),
                self.dim
            )));
        }
        self.reps += 1;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if mask.get(i, j) {
                    self.counts[i * self.dim + j] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.dim + j]
    }

    /// Fraction of replications in which the entry was nonzero.
    pub fn frequency(&self, i: usize, j: usize) -> f64 {
        if self.reps == 0 {
            0.0
        } else {
            f64::from(self.count(i, j)) / self.reps as f64
        }
    }
}

/// Raw counts as comma-separated integers, one row per line.
pub fn write_freq_csv(path: impl AsRef<Path>, freq: &SupportFrequency) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..freq.dim() {
        for j in 0..freq.dim() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&freq.count(i, j).to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Plain-text PGM heatmap. Always-selected entries are black (0),
/// never-selected entries white (255): value = round(255 (1 - freq/reps)).
pub fn write_freq_pgm(path: impl AsRef<Path>, freq: &SupportFrequency) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "P2")?;
        writeln!(w, "{} {}", freq.dim(), freq.dim())?;
        writeln!(w, "255")?;
        for i in 0..freq.dim() {
            let row: Vec<String> = (0..freq.dim())
                .map(|j| {
                    let v = (255.0 * (1.0 - freq.frequency(i, j))).round() as u32;
                    v.min(255).to_string()
                })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Aggregate of one estimator's replications within a configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationSummary {
    pub reps: usize,
    pub loss: Option<Summary>,
    pub tpr: RateSummary,
    pub fpr: RateSummary,
    /// Fraction of replications with the support recovered exactly.
    pub exact_recovery_rate: f64,
}

pub fn aggregate(losses: &[f64], stats: &[SupportStats]) -> ReplicationSummary {
    let tprs: Vec<Option<f64>> = stats.iter().map(|s| s.tpr).collect();
    let fprs: Vec<Option<f64>> = stats.iter().map(|s| s.fpr).collect();
    let exact = stats.iter().filter(|s| s.exact_recovery).count();
    let rate = if stats.is_empty() {
        0.0
    } else {
        exact as f64 / stats.len() as f64
    };
    ReplicationSummary {
        reps: losses.len().max(stats.len()),
        loss: summarize(losses),
        tpr: summarize_rates(&tprs),
        fpr: summarize_rates(&fprs),
        exact_recovery_rate: rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn mask_from_pairs(p: usize, pairs: &[(usize, usize)], diag: bool) -> SupportMask {
        let mut m = SupportMask::new(p);
        if diag {
            for i in 0..p {
                m.set(i, i, true);
            }
        }
        for &(i, j) in pairs {
            m.set(i, j, true);
        }
        m
    }

    #[test]
    fn spectral_loss_known_value_and_symmetry() {
        let a = SymMatrix::from_diag(&[1.0, 2.0]);
        let b = SymMatrix::from_diag(&[0.0, 5.0]);
        assert_abs_diff_eq!(spectral_loss(&a, &b).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            spectral_loss(&a, &b).unwrap(),
            spectral_loss(&b, &a).unwrap(),
            epsilon = 1e-14
        );
        assert_eq!(spectral_loss(&a, &a).unwrap(), 0.0);
        assert!(spectral_loss(&a, &SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn spectral_loss_triangle_inequality() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = rng.gen_range(2..8);
            let mut draw = || SymMatrix::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let (a, b, c) = (draw(), draw(), draw());
            let ab = spectral_loss(&a, &b).unwrap();
            let bc = spectral_loss(&b, &c).unwrap();
            let ac = spectral_loss(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn support_counts_hand_case() {
        // Truth: pairs (0,1),(0,2),(1,2),(0,3) nonzero. Estimate finds the
        // first three and falsely adds (1,3).
        let truth = mask_from_pairs(4, &[(0, 1), (0, 2), (1, 2), (0, 3)], true);
        let est = mask_from_pairs(4, &[(0, 1), (0, 2), (1, 2), (1, 3)], true);
        let s = support_stats(&est, &truth).unwrap();
        assert_eq!(s.true_pos, 6);
        assert_eq!(s.false_neg, 2);
        assert_eq!(s.false_pos, 2);
        assert_eq!(s.true_neg, 2);
        assert_abs_diff_eq!(s.tpr.unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(s.fpr.unwrap(), 0.5, epsilon = 1e-15);
        assert!(!s.exact_recovery);
        let same = support_stats(&truth, &truth).unwrap();
        assert!(same.exact_recovery);
        assert_eq!(same.tpr, Some(1.0));
        assert_eq!(same.fpr, Some(0.0));
    }

    #[test]
    fn undefined_rates_are_none() {
        // Diagonal truth: no off-diagonal nonzeros, so TPR has an empty
        // denominator. A full estimate then has FPR 1.
        let truth = mask_from_pairs(3, &[], true);
        let mut est = mask_from_pairs(3, &[], true);
        for i in 0..3 {
            for j in 0..3 {
                est.set(i, j, true);
            }
        }
        let s = support_stats(&est, &truth).unwrap();
        assert_eq!(s.tpr, None);
        assert_eq!(s.fpr, Some(1.0));
        // Dense truth: FPR undefined.
        let s2 = support_stats(&truth, &est).unwrap();
        assert_eq!(s2.fpr, None);
        assert_eq!(s2.tpr, Some(0.0));
    }

    #[test]
    fn exact_recovery_sees_the_diagonal() {
        let truth = mask_from_pairs(3, &[], true);
        let mut est = truth.clone();
        est.set(1, 1, false);
        let s = support_stats(&est, &truth).unwrap();
        // Off-diagonal entries all agree, but the diagonal differs.
        assert!(!s.exact_recovery);
        assert_eq!(s.false_pos, 0);
        assert_eq!(s.false_neg, 0);
    }

    #[test]
    fn summaries_use_sample_sd() {
        let s = summarize(&[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s.mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sd, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(summarize(&[]), None);
        let one = summarize(&[5.0]).unwrap();
        assert_eq!(one.sd, 0.0);
        let r = summarize_rates(&[Some(1.0), None, Some(0.0), None]);
        assert_eq!(r.undefined, 2);
        assert_abs_diff_eq!(r.summary.unwrap().mean, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn aggregate_combines_losses_and_rates() {
        let truth = mask_from_pairs(3, &[(0, 1)], true);
        let hit = support_stats(&truth, &truth).unwrap();
        let miss = support_stats(&mask_from_pairs(3, &[], true), &truth).unwrap();
        let agg = aggregate(&[1.0, 3.0], &[hit, miss]);
        assert_eq!(agg.reps, 2);
        assert_abs_diff_eq!(agg.loss.unwrap().mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(agg.exact_recovery_rate, 0.5, epsilon = 1e-15);
        assert_eq!(agg.tpr.undefined, 0);
        assert_abs_diff_eq!(agg.tpr.summary.unwrap().mean, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn frequency_accumulates_and_renders() {
        let mut freq = SupportFrequency::new(2);
        let full = mask_from_pairs(2, &[(0, 1)], true);
        let diag = mask_from_pairs(2, &[], true);
        freq.add(&full).unwrap();
        freq.add(&diag).unwrap();
        assert_eq!(freq.reps(), 2);
        assert_eq!(freq.count(0, 0), 2);
        assert_eq!(freq.count(0, 1), 1);
        assert_abs_diff_eq!(freq.frequency(0, 1), 0.5, epsilon = 1e-15);

        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("f.pgm");
        let csv = dir.path().join("f.csv");
        write_freq_pgm(&pgm, &freq).unwrap();
        write_freq_csv(&csv, &freq).unwrap();
        let text = std::fs::read_to_string(&pgm).unwrap();
        // Always-selected diagonal renders black, half-selected mid-gray.
        assert_eq!(text, "P2\n2 2\n255\n0 128\n128 0\n");
        assert_eq!(std::fs::read_to_string(&csv).unwrap(), "2,1\n1,2\n");
    }
}
