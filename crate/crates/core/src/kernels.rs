use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::caps::Caps;
use crate::dense::DenseDistribution;
use crate::error::{invalid, Error, Result};
use crate::ising::{all_energies, energy, FieldVector, InteractionMatrix};
use crate::spin::{disagreement_set, full_mask, ExchangeSet, SiteSet, SpinConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DynamicsKind {
    Block,
    Glauber,
}

impl FromStr for DynamicsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(DynamicsKind::Block),
            "glauber" => Ok(DynamicsKind::Glauber),
            _ => Err(invalid(format!("unknown dynamics `{s}` (block|glauber)"))),
        }
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DynamicsKind::Block => "block",
            DynamicsKind::Glauber => "glauber",
        })
    }
}

/// J̃_xy = 2 J_xy σ_x σ_y on D(σ,σ′) × D(σ,σ′), zero elsewhere.
#[derive(Clone, Debug)]
pub struct TiltedInteraction {
    pub disagreement: SiteSet,
    pub entries: InteractionMatrix,
}

impl TiltedInteraction {
    pub fn new(sigma: SpinConfig, sigma_prime: SpinConfig, j: &InteractionMatrix) -> Result<Self> {
        let d = disagreement_set(sigma, sigma_prime);
        let mut entries = InteractionMatrix::zeros(j.n())?;
        for x in d.iter() {
            for y in d.iter().filter(|&y| y > x) {
                entries.set(x, y, 2.0 * j.get(x, y) * sigma.spin(x) * sigma.spin(y));
            }
        }
        Ok(TiltedInteraction {
            disagreement: d,
            entries,
        })
    }
}

/// log of μ(σ_Λσ′_{Λ^c})·μ(σ′_Λσ_{Λ^c}) up to the constant 2·log Z, for a given field.
pub fn log_gamma_weight_with_field(
    lambda: ExchangeSet,
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
    h: &FieldVector,
) -> Result<f64> {
    let tau = sigma.splice(sigma_prime, lambda);
    let tau_prime = sigma_prime.splice(sigma, lambda);
    Ok(energy(tau, j, h)? + energy(tau_prime, j, h)?)
}

/// Unnormalized exchange-set weight, evaluated with zero field.
pub fn gamma_weight(
    lambda: ExchangeSet,
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
) -> Result<f64> {
    let h = FieldVector::zeros(j.n());
    Ok(log_gamma_weight_with_field(lambda, sigma, sigma_prime, j, &h)?.exp())
}

/// Law of the first collision output restricted to D: Ising with couplings 2J on D, zero field.
#[derive(Clone, Debug)]
pub struct PatternLaw {
    d: SiteSet,
    sites: Vec<usize>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PatternLaw {
    pub fn new(j: &InteractionMatrix, d: SiteSet) -> Result<Self> {
        let sites: Vec<usize> = d.iter().collect();
        let k = sites.len();
        if k == 0 {
            return Ok(PatternLaw {
                d,
                sites,
                probs: vec![1.0],
                cdf: vec![1.0],
            });
        }
        let mut sub = InteractionMatrix::zeros(k)?;
        for a in 0..k {
            for b in a + 1..k {
                sub.set(a, b, 2.0 * j.get(sites[a], sites[b]));
            }
        }
        let e = all_energies(&sub, &FieldVector::zeros(k))?;
        let probs = DenseDistribution::from_log_weights(k, &e)?
            .0
            .probs()
            .to_vec();
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(PatternLaw {
            d,
            sites,
            probs,
            cdf,
        })
    }

    pub fn disagreement(&self) -> SiteSet {
        self.d
    }

    /// Probabilities indexed by compressed pattern (bit a ↔ a-th site of D); increasing
    /// compressed index matches increasing submask of D.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn compress(&self, s: u64) -> usize {
        self.sites
            .iter()
            .enumerate()
            .fold(0, |acc, (a, &x)| acc | (((s >> x) & 1) as usize) << a)
    }

    fn expand(&self, c: usize) -> u64 {
        self.sites
            .iter()
            .enumerate()
            .fold(0, |acc, (a, &x)| acc | (((c >> a) & 1) as u64) << x)
    }

    /// Probability of the pattern given as a submask of D in site coordinates.
    pub fn prob(&self, s: u64) -> f64 {
        self.probs[self.compress(s & self.d.0)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let c = self
            .cdf
            .partition_point(|&v| v < u)
            .min(self.probs.len() - 1);
        self.expand(c)
    }
}

fn lambda_from_pattern(
    sigma: SpinConfig,
    d: SiteSet,
    xi: u64,
    coins: u64,
    n: usize,
) -> ExchangeSet {
    // On D, site x is exchanged-in iff the first output keeps σ_x.
    SiteSet((!(xi ^ sigma.0) & d.0) | (coins & !d.0 & full_mask(n)))
}

/// Full law of Λ over all 2^n subsets (factored: fair coins off D, Ising(2J) on D).
pub fn gamma_distribution(
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
) -> Result<DenseDistribution> {
    let n = j.n();
    let caps = Caps::default();
    if n > caps.exact {
        return Err(Error::CapExceeded {
            what: "exact",
            value: n,
            cap: caps.exact,
        });
    }
    let d = disagreement_set(sigma, sigma_prime);
    let law = PatternLaw::new(j, d)?;
    let off = (0.5f64).powi((n - d.len()) as i32);
    let probs = (0..1u64 << n)
        .map(|l| law.prob(sigma.splice(sigma_prime, SiteSet(l)).0) * off)
        .collect();
    DenseDistribution::new(n, probs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExchangeMode {
    Exact,
    /// Falls back to heat-bath MCMC (100·|D| sweeps) above the exchange cap.
    AllowApproximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExchangeDraw {
    pub lambda: ExchangeSet,
    pub approximate: bool,
}

const CACHE_BUDGET: usize = 1 << 22;

/// Exchange-set sampler that memoizes the pattern law per disagreement set.
pub struct ExchangeSampler<'a> {
    j: &'a InteractionMatrix,
    cap: usize,
    mode: ExchangeMode,
    cache: HashMap<u64, PatternLaw>,
    cached_entries: usize,
}

impl<'a> ExchangeSampler<'a> {
    pub fn new(j: &'a InteractionMatrix, cap: usize, mode: ExchangeMode) -> Self {
        ExchangeSampler {
            j,
            cap,
            mode,
            cache: HashMap::new(),
            cached_entries: 0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        sigma: SpinConfig,
        sigma_prime: SpinConfig,
        rng: &mut R,
    ) -> Result<ExchangeDraw> {
        let n = self.j.n();
        let d = disagreement_set(sigma, sigma_prime);
        let k = d.len();
        if k > self.cap {
            if self.mode == ExchangeMode::Exact {
                return Err(Error::CapExceeded {
                    what: "exchange",
                    value: k,
                    cap: self.cap,
                });
            }
            let xi = heat_bath_pattern(self.j, d, sigma.0 & d.0, rng);
            let coins: u64 = rng.random();
            return Ok(ExchangeDraw {
                lambda: lambda_from_pattern(sigma, d, xi, coins, n),
                approximate: true,
            });
        }
        let xi = match self.cache.get(&d.0) {
            Some(law) => law.sample(rng),
            None => {
                let law = PatternLaw::new(self.j, d)?;
                let xi = law.sample(rng);
                if self.cached_entries + (1 << k) <= CACHE_BUDGET {
                    self.cached_entries += 1 << k;
                    self.cache.insert(d.0, law);
                }
                xi
            }
        };
        let coins: u64 = rng.random();
        Ok(ExchangeDraw {
            lambda: lambda_from_pattern(sigma, d, xi, coins, n),
            approximate: false,
        })
    }

    /// One block collision; the flag reports whether Λ came from the approximate sampler.
    pub fn collide<R: Rng + ?Sized>(
        &mut self,
        sigma: SpinConfig,
        sigma_prime: SpinConfig,
        rng: &mut R,
    ) -> Result<(SpinConfig, SpinConfig, bool)> {
        let draw = self.sample(sigma, sigma_prime, rng)?;
        Ok((
            sigma.splice(sigma_prime, draw.lambda),
            sigma_prime.splice(sigma, draw.lambda),
            draw.approximate,
        ))
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn heat_bath_pattern<R: Rng + ?Sized>(
    j: &InteractionMatrix,
    d: SiteSet,
    start: u64,
    rng: &mut R,
) -> u64 {
    let sites: Vec<usize> = d.iter().collect();
    let mut xi = start;
    let spin = |xi: u64, x: usize| if xi >> x & 1 == 1 { 1.0 } else { -1.0 };
    for _ in 0..100 * sites.len() {
        for &x in &sites {
            let field: f64 = sites.iter().map(|&y| 2.0 * j.get(x, y) * spin(xi, y)).sum();
            if rng.random::<f64>() < logistic(2.0 * field) {
                xi |= 1 << x;
            } else {
                xi &= !(1 << x);
            }
        }
    }
    xi
}

/// Draws Λ exactly (default exchange cap).
pub fn sample_exchange_set<R: Rng + ?Sized>(
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
    rng: &mut R,
) -> Result<ExchangeSet> {
    let mut s = ExchangeSampler::new(j, Caps::default().exchange, ExchangeMode::Exact);
    Ok(s.sample(sigma, sigma_prime, rng)?.lambda)
}

/// Probability that a Glauber collision at x exchanges the two spins at x.
pub fn alpha(x: usize, sigma: SpinConfig, sigma_prime: SpinConfig, j: &InteractionMatrix) -> f64 {
    let dx = sigma.spin(x) - sigma_prime.spin(x);
    if dx == 0.0 {
        return 0.5;
    }
    let s: f64 = j
        .row(x)
        .iter()
        .enumerate()
        .map(|(y, jxy)| jxy * (sigma.spin(y) - sigma_prime.spin(y)))
        .sum();
    logistic(-dx * s)
}

/// (σ_Λσ′_{Λ^c}, σ′_Λσ_{Λ^c}) with Λ drawn exactly.
pub fn block_collide_pair<R: Rng + ?Sized>(
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
    rng: &mut R,
) -> Result<(SpinConfig, SpinConfig)> {
    let lambda = sample_exchange_set(sigma, sigma_prime, j, rng)?;
    Ok((
        sigma.splice(sigma_prime, lambda),
        sigma_prime.splice(sigma, lambda),
    ))
}

/// Exchanges the spins at x between the two configurations.
pub fn swap_at(x: usize, sigma: SpinConfig, sigma_prime: SpinConfig) -> (SpinConfig, SpinConfig) {
    let m = SiteSet::singleton(x).complement(64);
    (sigma.splice(sigma_prime, m), sigma_prime.splice(sigma, m))
}

/// Uniform site x; spins at x exchanged with probability α_x.
pub fn glauber_collide_pair<R: Rng + ?Sized>(
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
    rng: &mut R,
) -> (SpinConfig, SpinConfig) {
    let x = rng.random_range(0..j.n());
    if rng.random::<f64>() < alpha(x, sigma, sigma_prime, j) {
        swap_at(x, sigma, sigma_prime)
    } else {
        (sigma, sigma_prime)
    }
}

pub const KERNEL_MATRIX_MAX_N: usize = 3;

/// Exhaustive pair kernel Q(σ,σ′;τ,τ′), rows indexed by (σ,σ′).
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    fn pair(&self, a: SpinConfig, b: SpinConfig) -> usize {
        (a.index() << self.n) | b.index()
    }

    pub fn get(&self, s: SpinConfig, sp: SpinConfig, t: SpinConfig, tp: SpinConfig) -> f64 {
        let dim = 1 << (2 * self.n);
        self.data[self.pair(s, sp) * dim + self.pair(t, tp)]
    }

    fn add(&mut self, s: SpinConfig, sp: SpinConfig, t: SpinConfig, tp: SpinConfig, v: f64) {
        let dim = 1 << (2 * self.n);
        let i = self.pair(s, sp) * dim + self.pair(t, tp);
        self.data[i] += v;
    }

    pub fn configs(&self) -> impl Iterator<Item = SpinConfig> + Clone {
        (0..1u64 << self.n).map(SpinConfig)
    }
}

pub fn kernel_matrix(kind: DynamicsKind, j: &InteractionMatrix) -> Result<KernelMatrix> {
    let n = j.n();
    if n > KERNEL_MATRIX_MAX_N {
        return Err(Error::CapExceeded {
            what: "kernel matrix",
            value: n,
            cap: KERNEL_MATRIX_MAX_N,
        });
    }
    let mut q = KernelMatrix {
        n,
        data: vec![0.0; 1 << (4 * n)],
    };
    let configs: Vec<SpinConfig> = q.configs().collect();
    for &s in &configs {
        for &sp in &configs {
            match kind {
                DynamicsKind::Block => {
                    let g = gamma_distribution(s, sp, j)?;
                    for (l, p) in g.probs().iter().enumerate() {
                        let lam = SiteSet(l as u64);
                        q.add(s, sp, s.splice(sp, lam), sp.splice(s, lam), *p);
                    }
                }
                DynamicsKind::Glauber => {
                    for x in 0..n {
                        let a = alpha(x, s, sp, j);
                        let (t, tp) = swap_at(x, s, sp);
                        q.add(s, sp, t, tp, a / n as f64);
                        q.add(s, sp, s, sp, (1.0 - a) / n as f64);
                    }
                }
            }
        }
    }
    Ok(q)
}

/// Largest violations of the structural kernel identities.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct KernelAudit {
    /// max |Σ_{τ,τ′} Q(σσ′;ττ′) − 1|
    pub row_sum: f64,
    /// max |Q(σσ′;ττ′) − Q(σ′σ;τ′τ)|
    pub exchange: f64,
    /// min Q(σσ′;σσ′)
    pub min_diagonal: f64,
    /// max |μ(σ)μ(σ′)Q(σσ′;ττ′) − μ(τ)μ(τ′)Q(ττ′;σσ′)| over the supplied measures
    pub detailed_balance: f64,
}

pub fn audit_kernel(q: &KernelMatrix, measures: &[DenseDistribution]) -> KernelAudit {
    let configs: Vec<SpinConfig> = q.configs().collect();
    let mut a = KernelAudit {
        min_diagonal: f64::INFINITY,
        ..KernelAudit::default()
    };
    for &s in &configs {
        for &sp in &configs {
            let mut row = 0.0;
            for &t in &configs {
                for &tp in &configs {
                    let v = q.get(s, sp, t, tp);
                    row += v;
                    a.exchange = a.exchange.max((v - q.get(sp, s, tp, t)).abs());
                    for mu in measures {
                        let fwd = mu.prob(s) * mu.prob(sp) * v;
                        let back = mu.prob(t) * mu.prob(tp) * q.get(t, tp, s, sp);
                        a.detailed_balance = a.detailed_balance.max((fwd - back).abs());
                    }
                }
            }
            a.row_sum = a.row_sum.max((row - 1.0).abs());
            a.min_diagonal = a.min_diagonal.min(q.get(s, sp, s, sp));
        }
    }
    a
}
