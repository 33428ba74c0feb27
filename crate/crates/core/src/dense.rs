use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::spin::{SpinConfig, MAX_SITES};

/// A probability vector over all 2^n configurations, indexed by bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseDistribution {
    n: usize,
    probs: Vec<f64>,
}

const NORM_TOL: f64 = 1e-12;

impl DenseDistribution {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        check_len(n, probs.len())?;
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        Ok(DenseDistribution { n, probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(n: usize, mut w: Vec<f64>) -> Result<Self> {
        check_len(n, w.len())?;
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) || w.iter().any(|x| *x < 0.0) {
            return Err(Error::Numerical(format!(
                "cannot normalize weights (total {total})"
            )));
        }
        w.iter_mut().for_each(|x| *x /= total);
        Ok(DenseDistribution { n, probs: w })
    }

    /// Normalizes log-weights with log-sum-exp. Returns the distribution and the log normalizer.
    pub fn from_log_weights(n: usize, logw: &[f64]) -> Result<(Self, f64)> {
        check_len(n, logw.len())?;
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("non-finite log weights".into()));
        }
        let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let log_z = max + total.ln();
        Ok((DenseDistribution::from_weights(n, w)?, log_z))
    }

    pub(crate) fn from_raw(n: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), 1 << n);
        DenseDistribution { n, probs }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_len(n, 1usize.checked_shl(n as u32).unwrap_or(0))?;
        let size = 1usize << n;
        Ok(DenseDistribution {
            n,
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn point(n: usize, sigma: SpinConfig) -> Result<Self> {
        let size = 1usize << n;
        check_len(n, size)?;
        if !sigma.fits(n) {
            return Err(invalid(format!(
                "configuration {:#x} has bits beyond n={n}",
                sigma.0
            )));
        }
        let mut probs = vec![0.0; size];
        probs[sigma.index()] = 1.0;
        Ok(DenseDistribution { n, probs })
    }

    /// Product measure with P(σ_x = +1) = m[x].
    pub fn product(m: &[f64]) -> Result<Self> {
        let n = m.len();
        if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("product marginals must lie in [0,1]"));
        }
        let size = 1usize << n;
        check_len(n, size)?;
        let probs = (0..size)
            .map(|c| {
                (0..n)
                    .map(|x| if c >> x & 1 == 1 { m[x] } else { 1.0 - m[x] })
                    .product()
            })
            .collect();
        Ok(DenseDistribution { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, sigma: SpinConfig) -> f64 {
        self.probs[sigma.index()]
    }

    /// P(σ_x = +1) for each site.
    pub fn marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for (c, p) in self.probs.iter().enumerate() {
            for (x, mx) in m.iter_mut().enumerate() {
                if c >> x & 1 == 1 {
                    *mx += p;
                }
            }
        }
        m
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sampler(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(&self.probs).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpinConfig> {
        Ok(SpinConfig(self.sampler()?.sample(rng) as u64))
    }

    /// Parses `<bitmask> <prob>` lines (decimal or `0x` hex). Renormalizes only if the total is within 1e-9 of 1.
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        let size = 1usize << n;
        check_len(n, size)?;
        let mut probs = vec![0.0; size];
        let mut seen = vec![false; size];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let mut it = line.split_whitespace();
            let (Some(b), Some(p), None) = (it.next(), it.next(), it.next()) else {
                return Err(err("expected `<bitmask> <prob>`".into()));
            };
            let bits = parse_bitmask(b).ok_or_else(|| err(format!("bad bitmask `{b}`")))?;
            if bits >= size as u64 {
                return Err(err(format!("bitmask {b} out of range for n={n}")));
            }
            let p: f64 = p
                .parse()
                .map_err(|_| err(format!("bad probability `{p}`")))?;
            if !p.is_finite() || p < 0.0 {
                return Err(err(format!(
                    "probability {p} must be finite and nonnegative"
                )));
            }
            if std::mem::replace(&mut seen[bits as usize], true) {
                return Err(err(format!("duplicate bitmask {b}")));
            }
            probs[bits as usize] = p;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("distribution file sums to {total}, not 1")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(DenseDistribution { n, probs })
    }

    pub fn load(n: usize, path: &Path) -> Result<Self> {
        Self::parse(n, &std::fs::read_to_string(path)?)
    }

    /// Nonzero entries as `<bitmask> <prob>` lines.
    pub fn to_text(&self) -> String {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(c, p)| format!("{c} {p}\n"))
            .collect()
    }
}

pub(crate) fn parse_bitmask(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

fn check_len(n: usize, len: usize) -> Result<()> {
    if n == 0 || n >= MAX_SITES.min(usize::BITS as usize - 1) {
        return Err(invalid(format!("site count {n} out of range")));
    }
    if len != 1usize << n {
        return Err(Error::Dimension {
            expected: 1 << n,
            got: len,
        });
    }
    Ok(())
}

/// (1/2) Σ |p − q|.
pub fn tv_distance(p: &DenseDistribution, q: &DenseDistribution) -> Result<f64> {
    same_n(p, q)?;
    Ok(0.5
        * p.probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// D(p‖μ) = Σ p log(p/μ), summed as Σ [p log(p/μ) − p + μ] so every term is nonnegative.
pub fn relative_entropy(p: &DenseDistribution, mu: &DenseDistribution) -> Result<f64> {
    same_n(p, mu)?;
    if mu.probs.iter().any(|m| *m <= 0.0) {
        return Err(invalid("reference measure has a zero entry"));
    }
    let d = p
        .probs
        .iter()
        .zip(&mu.probs)
        .map(|(&a, &m)| {
            if a == 0.0 {
                m
            } else {
                let e = (a - m) / m;
                m * ((1.0 + e) * e.ln_1p() - e)
            }
        })
        .sum::<f64>();
    Ok(d.max(0.0))
}

fn same_n(p: &DenseDistribution, q: &DenseDistribution) -> Result<()> {
    if p.n != q.n {
        return Err(Error::Dimension {
            expected: p.n,
            got: q.n,
        });
    }
    Ok(())
}
