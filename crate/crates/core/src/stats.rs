use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Width multiplier for all intervals and bound checks ("3 SE").
pub const Z: f64 = 3.0;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix(splitmix(master) ^ splitmix(index.wrapping_add(0x6a09_e667_f3bc_c909)))
}

pub fn trial_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Binomial proportion with Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportion {
    pub count: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Proportion {
    pub fn new(count: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson(count, trials, Z);
        Proportion {
            count,
            trials,
            p_hat: count as f64 / trials as f64,
            ci_lo,
            ci_hi,
        }
    }

    /// √(p̂(1−p̂)/trials).
    pub fn se(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }

    /// bound ≥ p̂ − 3·SE.
    pub fn consistent_with_upper_bound(&self, bound: f64) -> bool {
        self.p_hat - Z * self.se() <= bound
    }
}

pub fn wilson(count: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if count == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if count == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Least-squares line through (t, ln y): rate = −slope.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ExpFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits y ≈ exp(intercept − rate·t) over points with y > 0. None with fewer than two points.
pub fn fit_exponential(points: &[(f64, f64)]) -> Option<ExpFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    let k = pts.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / kf;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sty * sty / (stt * syy)
    };
    Some(ExpFit {
        rate: -slope,
        intercept: my - slope * mt,
        r_squared,
        points: k,
    })
}
