use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::caps::Caps;
use crate::dense::{parse_bitmask, DenseDistribution};
use crate::error::{invalid, Error, Result};
use crate::ising::{FieldVector, InteractionMatrix};
use crate::kernels::{glauber_collide_pair, DynamicsKind, ExchangeMode, ExchangeSampler};
use crate::spin::{full_mask, SpinConfig, MAX_SITES};

/// Initial law p_0 from which leaves and population members are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    Uniform(usize),
    Product(Vec<f64>),
    Point(usize, SpinConfig),
    Dense(DenseDistribution),
}

impl InitialLaw {
    pub fn product(m: Vec<f64>) -> Result<Self> {
        if m.len() > MAX_SITES {
            return Err(Error::CapExceeded {
                what: "sites",
                value: m.len(),
                cap: MAX_SITES,
            });
        }
        if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("marginal {v} outside [0,1]")));
        }
        Ok(InitialLaw::Product(m))
    }

    pub fn n(&self) -> usize {
        match self {
            InitialLaw::Uniform(n) | InitialLaw::Point(n, _) => *n,
            InitialLaw::Product(m) => m.len(),
            InitialLaw::Dense(d) => d.n(),
        }
    }

    /// P(σ_x = +1) for every site.
    pub fn marginals(&self) -> Vec<f64> {
        match self {
            InitialLaw::Uniform(n) => vec![0.5; *n],
            InitialLaw::Product(m) => m.clone(),
            InitialLaw::Point(n, s) => (0..*n)
                .map(|x| if s.is_plus(x) { 1.0 } else { 0.0 })
                .collect(),
            InitialLaw::Dense(d) => d.marginals(),
        }
    }

    pub fn to_dense(&self, caps: &Caps) -> Result<DenseDistribution> {
        let n = self.n();
        if n > caps.exact {
            return Err(Error::CapExceeded {
                what: "exact",
                value: n,
                cap: caps.exact,
            });
        }
        match self {
            InitialLaw::Uniform(n) => DenseDistribution::uniform(*n),
            InitialLaw::Product(m) => DenseDistribution::product(m),
            InitialLaw::Point(n, s) => DenseDistribution::point(*n, *s),
            InitialLaw::Dense(d) => Ok(d.clone()),
        }
    }

    /// Reusable sampler; dense laws precompute their alias-free weighted index.
    pub fn sampler(&self) -> Result<LawSampler<'_>> {
        let dense = match self {
            InitialLaw::Dense(d) => Some(d.sampler()?),
            _ => None,
        };
        Ok(LawSampler { law: self, dense })
    }

    /// Parses `uniform`, `product m1,m2,...`, `point <bitmask>` or `dense <path>` for n sites.
    pub fn parse(spec: &str, n: usize, base: Option<&Path>) -> Result<Self> {
        let spec = spec.trim();
        let (head, rest) = spec.split_once(char::is_whitespace).unwrap_or((spec, ""));
        let rest = rest.trim();
        if n > MAX_SITES {
            return Err(Error::CapExceeded {
                what: "sites",
                value: n,
                cap: MAX_SITES,
            });
        }
        match head {
            "uniform" if rest.is_empty() => Ok(InitialLaw::Uniform(n)),
            "product" => {
                let m: Vec<f64> = rest
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|e| invalid(format!("bad marginal '{s}': {e}")))
                    })
                    .collect::<Result<_>>()?;
                if m.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: m.len(),
                    });
                }
                Self::product(m)
            }
            "point" => {
                let bits =
                    parse_bitmask(rest).ok_or_else(|| invalid(format!("bad bitmask '{rest}'")))?;
                if bits & !full_mask(n) != 0 {
                    return Err(invalid(format!(
                        "configuration {rest} has bits beyond n={n}"
                    )));
                }
                Ok(InitialLaw::Point(n, SpinConfig(bits)))
            }
            "dense" if !rest.is_empty() => {
                let path = match base {
                    Some(b) => b.join(rest),
                    None => Path::new(rest).to_path_buf(),
                };
                Ok(InitialLaw::Dense(DenseDistribution::load(n, &path)?))
            }
            _ => Err(invalid(format!("unknown initial law '{spec}'"))),
        }
    }
}

pub struct LawSampler<'a> {
    law: &'a InitialLaw,
    dense: Option<rand::distr::weighted::WeightedIndex<f64>>,
}

impl LawSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinConfig {
        match self.law {
            InitialLaw::Uniform(n) => SpinConfig(rng.random::<u64>() & full_mask(*n)),
            InitialLaw::Product(m) => SpinConfig(m.iter().enumerate().fold(0, |acc, (x, &p)| {
                acc | ((rng.random::<f64>() < p) as u64) << x
            })),
            InitialLaw::Point(_, s) => *s,
            InitialLaw::Dense(_) => {
                use rand::distr::Distribution;
                SpinConfig(self.dense.as_ref().expect("dense sampler").sample(rng) as u64)
            }
        }
    }
}

/// A population of N configurations evolving by random pairwise collisions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Population {
    n: usize,
    members: Vec<SpinConfig>,
}

impl Population {
    pub fn new(n: usize, members: Vec<SpinConfig>) -> Result<Self> {
        if members.len() < 2 || members.len() % 2 != 0 {
            return Err(invalid(format!(
                "population size must be even and at least 2, got {}",
                members.len()
            )));
        }
        if let Some(s) = members.iter().find(|s| !s.fits(n)) {
            return Err(invalid(format!("member {s:x} does not fit n={n}")));
        }
        Ok(Population { n, members })
    }

    pub fn sample<R: Rng + ?Sized>(law: &InitialLaw, size: usize, rng: &mut R) -> Result<Self> {
        let s = law.sampler()?;
        let members = (0..size).map(|_| s.sample(rng)).collect();
        Population::new(law.n(), members)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[SpinConfig] {
        &self.members
    }

    /// Σ_i σ^{(i)}_x per site.
    pub fn magnetization(&self) -> Vec<i64> {
        (0..self.n)
            .map(|x| {
                self.members
                    .iter()
                    .map(|s| if s.is_plus(x) { 1 } else { -1 })
                    .sum()
            })
            .collect()
    }

    pub fn marginals(&self) -> Vec<f64> {
        let k = self.members.len() as f64;
        (0..self.n)
            .map(|x| self.members.iter().filter(|s| s.is_plus(x)).count() as f64 / k)
            .collect()
    }

    /// Empirical Cov(σ_x, σ_y) for x < y, row-major over pairs.
    pub fn pair_correlations(&self) -> Vec<(usize, usize, f64)> {
        let k = self.members.len() as f64;
        let mag: Vec<f64> = self.magnetization().iter().map(|&m| m as f64 / k).collect();
        let mut out = Vec::new();
        for x in 0..self.n {
            for y in x + 1..self.n {
                let exy = self
                    .members
                    .iter()
                    .map(|s| s.spin(x) * s.spin(y))
                    .sum::<f64>()
                    / k;
                out.push((x, y, exy - mag[x] * mag[y]));
            }
        }
        out
    }

    pub fn empirical(&self, cap: usize) -> Result<DenseDistribution> {
        if self.n > cap {
            return Err(Error::CapExceeded {
                what: "empirical law",
                value: self.n,
                cap,
            });
        }
        let mut w = vec![0.0; 1 << self.n];
        for s in &self.members {
            w[s.index()] += 1.0;
        }
        DenseDistribution::from_weights(self.n, w)
    }
}

/// Largest n for which run_population records the empirical dense law.
pub const EMPIRICAL_MAX_N: usize = 10;

/// Collides consecutive members after a uniform shuffle (a uniform perfect matching).
pub struct KacStepper<'a> {
    kind: DynamicsKind,
    j: &'a InteractionMatrix,
    exchange: ExchangeSampler<'a>,
}

impl<'a> KacStepper<'a> {
    pub fn new(kind: DynamicsKind, j: &'a InteractionMatrix, caps: &Caps) -> Self {
        KacStepper {
            kind,
            j,
            exchange: ExchangeSampler::new(j, caps.exchange, ExchangeMode::Exact),
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, pop: &mut Population, rng: &mut R) -> Result<()> {
        if pop.n != self.j.n() {
            return Err(Error::Dimension {
                expected: self.j.n(),
                got: pop.n,
            });
        }
        pop.members.shuffle(rng);
        for pair in pop.members.chunks_exact_mut(2) {
            let (a, b) = match self.kind {
                DynamicsKind::Block => {
                    let (a, b, _) = self.exchange.collide(pair[0], pair[1], rng)?;
                    (a, b)
                }
                DynamicsKind::Glauber => glauber_collide_pair(pair[0], pair[1], self.j, rng),
            };
            pair[0] = a;
            pair[1] = b;
        }
        Ok(())
    }
}

pub fn kac_step<R: Rng + ?Sized>(
    pop: &Population,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    rng: &mut R,
) -> Result<Population> {
    let mut next = pop.clone();
    KacStepper::new(kind, j, &Caps::default()).step(&mut next, rng)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationStats {
    pub t: usize,
    pub marginals: Vec<f64>,
    pub correlations: Vec<(usize, usize, f64)>,
    pub empirical: Option<DenseDistribution>,
}

impl PopulationStats {
    fn of(t: usize, pop: &Population) -> Result<Self> {
        let empirical = if pop.n <= EMPIRICAL_MAX_N {
            Some(pop.empirical(EMPIRICAL_MAX_N)?)
        } else {
            None
        };
        Ok(PopulationStats {
            t,
            marginals: pop.marginals(),
            correlations: pop.pair_correlations(),
            empirical,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PopulationRun {
    pub stats: Vec<PopulationStats>,
    pub initial_magnetization: Vec<i64>,
    pub population: Population,
}

/// Statistics at t = 0, 1, …, t_max of a population of `size` members drawn from `law`.
pub fn run_population<R: Rng + ?Sized>(
    law: &InitialLaw,
    size: usize,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    t_max: usize,
    caps: &Caps,
    rng: &mut R,
) -> Result<PopulationRun> {
    if law.n() != j.n() {
        return Err(Error::Dimension {
            expected: j.n(),
            got: law.n(),
        });
    }
    let mut pop = Population::sample(law, size, rng)?;
    let initial_magnetization = pop.magnetization();
    let mut stepper = KacStepper::new(kind, j, caps);
    let mut stats = vec![PopulationStats::of(0, &pop)?];
    for t in 1..=t_max {
        stepper.step(&mut pop, rng)?;
        stats.push(PopulationStats::of(t, &pop)?);
    }
    Ok(PopulationRun {
        stats,
        initial_magnetization,
        population: pop,
    })
}

/// Field estimate from a simulated population, with per-site standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldEstimate {
    pub h: FieldVector,
    pub se: Vec<f64>,
    /// Always true: the estimate is statistical, not a certified solve.
    pub best_effort: bool,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fields matching the target marginals, without enumerating Ω: a Kac population started from
/// the product law with those marginals relaxes toward μ_{J,h} (the collisions conserve marginals),
/// and each h_x is then fitted by maximizing the conditional likelihood of σ_x given the rest.
pub fn solve_fields_kac<R: Rng + ?Sized>(
    j: &InteractionMatrix,
    target: &[f64],
    kind: DynamicsKind,
    size: usize,
    steps: usize,
    caps: &Caps,
    rng: &mut R,
) -> Result<FieldEstimate> {
    let n = j.n();
    if target.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: target.len(),
        });
    }
    for (site, &m) in target.iter().enumerate() {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::Degenerate { site, value: m });
        }
    }
    let law = InitialLaw::product(target.to_vec())?;
    let mut pop = Population::sample(&law, size + size % 2, rng)?;
    let mut stepper = KacStepper::new(kind, j, caps);
    for _ in 0..steps {
        stepper.step(&mut pop, rng)?;
    }
    let mut h = Vec::with_capacity(n);
    let mut se = Vec::with_capacity(n);
    for x in 0..n {
        let data: Vec<(f64, f64)> = pop
            .members()
            .iter()
            .map(|s| (j.local_field(x, *s), if s.is_plus(x) { 1.0 } else { 0.0 }))
            .collect();
        let mut hx = (2.0 * target[x] - 1.0).atanh();
        let mut info = 0.0;
        for _ in 0..100 {
            let (mut grad, mut hess) = (0.0, 0.0);
            for &(l, y) in &data {
                let p = logistic(2.0 * (l + hx));
                grad += 2.0 * (y - p);
                hess += 4.0 * p * (1.0 - p);
            }
            info = hess;
            if hess <= 0.0 {
                return Err(Error::Numerical(format!(
                    "flat pseudo-likelihood at site {x}"
                )));
            }
            let step = grad / hess;
            hx += step.clamp(-1.0, 1.0);
            if step.abs() < 1e-12 {
                break;
            }
        }
        if !hx.is_finite() {
            return Err(Error::Numerical(format!("field at site {x} diverged")));
        }
        h.push(hx);
        se.push(1.0 / info.sqrt());
    }
    Ok(FieldEstimate {
        h: FieldVector::new(h),
        se,
        best_effort: true,
    })
}
