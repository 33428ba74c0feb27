use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::GraphWeights;
use crate::ising::InteractionMatrix;
use crate::spin::SiteSet;
use crate::stats::{trial_rng, Proportion};

/// Default cap on the number of stored fragments or living individuals.
pub const DEFAULT_GUARD: usize = 1_000_000;

/// Left/right choices from the root; only the first 64 are recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LabelPath {
    pub depth: u32,
    pub bits: u64,
}

impl LabelPath {
    pub fn child(self, right: bool) -> LabelPath {
        let bits = if self.depth < 64 && right {
            self.bits | 1 << self.depth
        } else {
            self.bits
        };
        LabelPath {
            depth: self.depth + 1,
            bits,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub label: LabelPath,
    pub sites: SiteSet,
}

/// Nonempty fragments at step t.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FragmentState {
    pub t: usize,
    pub fragments: Vec<Fragment>,
}

impl FragmentState {
    pub fn initial(n: usize) -> Self {
        let fragments = if n == 0 {
            Vec::new()
        } else {
            vec![Fragment {
                label: LabelPath::default(),
                sites: SiteSet::full(n),
            }]
        };
        FragmentState { t: 0, fragments }
    }

    pub fn is_dead(&self) -> bool {
        self.fragments.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProcessKind {
    Fragmentation,
    Coupon,
}

impl std::str::FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fragmentation" => Ok(ProcessKind::Fragmentation),
            "coupon" => Ok(ProcessKind::Coupon),
            _ => Err(invalid(format!("unknown process '{s}'"))),
        }
    }
}

impl std::fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProcessKind::Fragmentation => "fragmentation",
            ProcessKind::Coupon => "coupon",
        })
    }
}

/// (Φ_0(A), Φ_1(A)) with the closure A′ reported for instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhiSplit {
    pub left: SiteSet,
    pub right: SiteSet,
    pub closure: SiteSet,
}

pub fn phi_split_with<R: Rng + ?Sized>(a: SiteSet, w: &GraphWeights, rng: &mut R) -> PhiSplit {
    if a.len() <= 1 {
        return PhiSplit {
            left: SiteSet::EMPTY,
            right: SiteSet::EMPTY,
            closure: SiteSet::EMPTY,
        };
    }
    let closure = w.closure_sample(a, rng);
    let mut a_in = SiteSet::EMPTY;
    let mut a_out = SiteSet::EMPTY;
    for x in a.difference(closure).iter() {
        if rng.random::<bool>() {
            a_in.insert(x);
        } else {
            a_out.insert(x);
        }
    }
    PhiSplit {
        left: closure.union(a_in),
        right: closure.union(a_out),
        closure,
    }
}

pub fn phi_split<R: Rng + ?Sized>(
    a: SiteSet,
    j: &InteractionMatrix,
    rng: &mut R,
) -> (SiteSet, SiteSet) {
    let s = phi_split_with(a, &GraphWeights::new(j), rng);
    (s.left, s.right)
}

pub fn psi_split_with<R: Rng + ?Sized>(
    a: SiteSet,
    w: &GraphWeights,
    rng: &mut R,
) -> (SiteSet, SiteSet) {
    if a.len() <= 1 {
        return (SiteSet::EMPTY, SiteSet::EMPTY);
    }
    let x = rng.random_range(0..w.n());
    if !a.contains(x) {
        return (a, SiteSet::EMPTY);
    }
    let g = w.star_sample(x, rng);
    if g.is_empty() {
        if rng.random::<bool>() {
            let mut b = a;
            b.remove(x);
            (b, SiteSet::EMPTY)
        } else {
            (a, SiteSet::EMPTY)
        }
    } else {
        let v = g.vertices();
        (a.union(v), v)
    }
}

pub fn psi_split<R: Rng + ?Sized>(
    a: SiteSet,
    j: &InteractionMatrix,
    rng: &mut R,
) -> (SiteSet, SiteSet) {
    psi_split_with(a, &GraphWeights::new(j), rng)
}

/// One synchronous step: every fragment is replaced by its two children; empty children are dropped.
pub fn step_fragments<R: Rng + ?Sized>(
    state: &FragmentState,
    kind: ProcessKind,
    w: &GraphWeights,
    guard: usize,
    rng: &mut R,
) -> Result<FragmentState> {
    let mut next = Vec::with_capacity(state.fragments.len() * 2);
    for f in &state.fragments {
        let (l, r) = match kind {
            ProcessKind::Fragmentation => {
                let s = phi_split_with(f.sites, w, rng);
                (s.left, s.right)
            }
            ProcessKind::Coupon => psi_split_with(f.sites, w, rng),
        };
        for (sites, right) in [(l, false), (r, true)] {
            if !sites.is_empty() {
                next.push(Fragment {
                    label: f.label.child(right),
                    sites,
                });
            }
        }
        if next.len() > guard {
            return Err(Error::CapExceeded {
                what: "fragments",
                value: next.len(),
                cap: guard,
            });
        }
    }
    Ok(FragmentState {
        t: state.t + 1,
        fragments: next,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtinctionOutcome {
    /// First t with no fragments left.
    Extinct(usize),
    /// Still alive after t_max steps.
    Alive,
    /// Guard exceeded at step t; counted as alive from then on.
    GuardExceeded(usize),
}

impl ExtinctionOutcome {
    pub fn alive_at(self, t: usize) -> bool {
        match self {
            ExtinctionOutcome::Extinct(e) => t < e,
            _ => true,
        }
    }

    /// Extinction time, or t_max + 1 if the process never died within the horizon.
    pub fn time(self, t_max: usize) -> usize {
        match self {
            ExtinctionOutcome::Extinct(e) => e,
            _ => t_max + 1,
        }
    }
}

pub fn run_process<R: Rng + ?Sized>(
    kind: ProcessKind,
    n: usize,
    w: &GraphWeights,
    t_max: usize,
    guard: usize,
    rng: &mut R,
) -> ExtinctionOutcome {
    let mut state = FragmentState::initial(n);
    if state.is_dead() {
        return ExtinctionOutcome::Extinct(0);
    }
    for t in 1..=t_max {
        match step_fragments(&state, kind, w, guard, rng) {
            Ok(s) => state = s,
            Err(_) => return ExtinctionOutcome::GuardExceeded(t),
        }
        if state.is_dead() {
            return ExtinctionOutcome::Extinct(t);
        }
    }
    ExtinctionOutcome::Alive
}

pub fn run_fragmentation<R: Rng + ?Sized>(
    n: usize,
    j: &InteractionMatrix,
    t_max: usize,
    rng: &mut R,
) -> ExtinctionOutcome {
    run_process(
        ProcessKind::Fragmentation,
        n,
        &GraphWeights::new(j),
        t_max,
        DEFAULT_GUARD,
        rng,
    )
}

pub fn run_coupon_noise<R: Rng + ?Sized>(
    n: usize,
    j: &InteractionMatrix,
    t_max: usize,
    rng: &mut R,
) -> ExtinctionOutcome {
    run_process(
        ProcessKind::Coupon,
        n,
        &GraphWeights::new(j),
        t_max,
        DEFAULT_GUARD,
        rng,
    )
}

/// 𝒰_x: the component of x in G ~ ν_J (∅ when x is isolated).
pub fn component_sample<R: Rng + ?Sized>(x: usize, j: &InteractionMatrix, rng: &mut R) -> SiteSet {
    GraphWeights::new(j).component_of(x, rng)
}

/// 𝒱_x: neighbours of x in G ~ ν_J.
pub fn neighborhood_sample<R: Rng + ?Sized>(
    x: usize,
    j: &InteractionMatrix,
    rng: &mut R,
) -> SiteSet {
    let mut v = GraphWeights::new(j).star_sample(x, rng).vertices();
    v.remove(x);
    v
}

pub fn offspring_sample_with<R: Rng + ?Sized>(x: usize, w: &GraphWeights, rng: &mut R) -> SiteSet {
    let u = w.component_of(x, rng);
    if !u.is_empty() {
        u
    } else if rng.random::<bool>() {
        SiteSet::EMPTY
    } else {
        SiteSet::singleton(x)
    }
}

/// U ~ μ_x: the component of x if nonempty, otherwise ∅ or {x} by a fair coin.
pub fn offspring_sample<R: Rng + ?Sized>(x: usize, j: &InteractionMatrix, rng: &mut R) -> SiteSet {
    offspring_sample_with(x, &GraphWeights::new(j), rng)
}

/// Generation sizes |X_0|, …, |X_{t−1}| and N(t) = Σ_{ℓ<t} |X_ℓ| (N(0) = 1 by convention).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingRun {
    pub sizes: Vec<usize>,
    pub total: usize,
}

pub fn run_labeled_branching_with<R: Rng + ?Sized>(
    y: usize,
    w: &GraphWeights,
    t: usize,
    guard: usize,
    rng: &mut R,
) -> Result<BranchingRun> {
    if y >= w.n() {
        return Err(invalid(format!("site {y} out of range")));
    }
    if t == 0 {
        return Ok(BranchingRun {
            sizes: Vec::new(),
            total: 1,
        });
    }
    let mut generation = vec![y];
    let mut sizes = vec![1];
    let mut total = 1usize;
    for _ in 1..t {
        let mut next = Vec::new();
        for &x in &generation {
            next.extend(offspring_sample_with(x, w, rng).iter());
            if next.len() > guard {
                return Err(Error::CapExceeded {
                    what: "branching population",
                    value: next.len(),
                    cap: guard,
                });
            }
        }
        total += next.len();
        sizes.push(next.len());
        generation = next;
    }
    Ok(BranchingRun { sizes, total })
}

pub fn run_labeled_branching<R: Rng + ?Sized>(
    y: usize,
    j: &InteractionMatrix,
    t: usize,
    rng: &mut R,
) -> Result<BranchingRun> {
    run_labeled_branching_with(y, &GraphWeights::new(j), t, DEFAULT_GUARD, rng)
}

/// Which process to run in `estimate_extinction`.
#[derive(Clone, Debug)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub j: InteractionMatrix,
    pub guard: usize,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind, j: InteractionMatrix) -> Self {
        ProcessSpec {
            kind,
            j,
            guard: DEFAULT_GUARD,
        }
    }

    /// Closed-form bound on P(alive at t) in the non-interacting case.
    pub fn zero_coupling_bound(&self, t: usize) -> Option<f64> {
        if !self.j.is_zero() {
            return None;
        }
        let n = self.j.n() as f64;
        Some(match self.kind {
            ProcessKind::Fragmentation => n * (n - 1.0) * 0.5f64.powi(t as i32),
            ProcessKind::Coupon => n * (1.0 - 1.0 / (2.0 * n)).powi(t as i32),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtinctionEstimate {
    pub t: usize,
    pub alive: Proportion,
    pub bound: Option<f64>,
    pub guard_hits: u64,
}

pub const MIN_TRIALS: usize = 100;

/// P(alive at t) for each t in the grid, one independent run per trial seeded from (master, index).
pub fn estimate_extinction(
    spec: &ProcessSpec,
    t_grid: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<ExtinctionEstimate>> {
    if trials < MIN_TRIALS {
        return Err(invalid(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("t grid must be strictly increasing"));
    }
    let t_max = t_grid.last().copied().unwrap_or(0);
    let w = GraphWeights::new(&spec.j);
    let outcomes: Vec<ExtinctionOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            run_process(
                spec.kind,
                spec.j.n(),
                &w,
                t_max,
                spec.guard,
                &mut trial_rng(master_seed, i),
            )
        })
        .collect();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let alive = outcomes.iter().filter(|o| o.alive_at(t)).count() as u64;
            let guard_hits = outcomes
                .iter()
                .filter(|o| matches!(o, ExtinctionOutcome::GuardExceeded(g) if *g <= t))
                .count() as u64;
            ExtinctionEstimate {
                t,
                alive: Proportion::new(alive, trials as u64),
                bound: spec.zero_coupling_bound(t),
                guard_hits,
            }
        })
        .collect())
}

/// Uniform couplings on every pair with Σ_y p_xy = rho0 at each site.
pub fn uniform_with_rho0(n: usize, rho0: f64) -> Result<InteractionMatrix> {
    if n < 2 || !(0.0..1.0).contains(&(rho0 / (n - 1) as f64)) {
        return Err(invalid("need n ≥ 2 and rho0/(n−1) in [0,1)"));
    }
    let p = rho0 / (n - 1) as f64;
    InteractionMatrix::uniform(n, -(-p).ln_1p() / 4.0)
}
