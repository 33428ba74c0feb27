use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::ising::InteractionMatrix;
use crate::kac::{InitialLaw, LawSampler};
use crate::kernels::{alpha, glauber_collide_pair, swap_at, ExchangeMode, ExchangeSampler};
use crate::spin::{SiteSet, SpinConfig};
use crate::stats::derive_seed;

/// Largest depth accepted by the recursive Glauber samplers.
pub const LAZY_MAX_DEPTH: usize = 4096;

fn check_dims(law: &InitialLaw, j: &InteractionMatrix) -> Result<()> {
    if law.n() != j.n() {
        return Err(Error::Dimension {
            expected: j.n(),
            got: law.n(),
        });
    }
    Ok(())
}

/// First output at the root of a full depth-t derivation tree of block collisions.
pub fn tree_sample_block<R: Rng + ?Sized>(
    law: &InitialLaw,
    j: &InteractionMatrix,
    t: usize,
    caps: &Caps,
    rng: &mut R,
) -> Result<SpinConfig> {
    check_dims(law, j)?;
    if t > caps.tree_depth {
        return Err(Error::CapExceeded {
            what: "tree depth",
            value: t,
            cap: caps.tree_depth,
        });
    }
    let leaves = law.sampler()?;
    let mut ex = ExchangeSampler::new(j, caps.exchange, ExchangeMode::Exact);
    block_node(&leaves, &mut ex, t, rng)
}

/// Same as `tree_sample_block` but reuses a sampler and exchange cache across draws.
pub struct BlockTreeSampler<'a> {
    leaves: LawSampler<'a>,
    exchange: ExchangeSampler<'a>,
    t: usize,
}

impl<'a> BlockTreeSampler<'a> {
    pub fn new(
        law: &'a InitialLaw,
        j: &'a InteractionMatrix,
        t: usize,
        caps: &Caps,
    ) -> Result<Self> {
        check_dims(law, j)?;
        if t > caps.tree_depth {
            return Err(Error::CapExceeded {
                what: "tree depth",
                value: t,
                cap: caps.tree_depth,
            });
        }
        Ok(BlockTreeSampler {
            leaves: law.sampler()?,
            exchange: ExchangeSampler::new(j, caps.exchange, ExchangeMode::Exact),
            t,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SpinConfig> {
        block_node(&self.leaves, &mut self.exchange, self.t, rng)
    }
}

fn block_node<R: Rng + ?Sized>(
    leaves: &LawSampler<'_>,
    ex: &mut ExchangeSampler<'_>,
    depth: usize,
    rng: &mut R,
) -> Result<SpinConfig> {
    if depth == 0 {
        return Ok(leaves.sample(rng));
    }
    let a = block_node(leaves, ex, depth - 1, rng)?;
    let b = block_node(leaves, ex, depth - 1, rng)?;
    Ok(ex.collide(a, b, rng)?.0)
}

/// Full 2^t-leaf Glauber tree; the small-t oracle for the lazy samplers.
pub fn tree_sample_glauber_naive<R: Rng + ?Sized>(
    law: &InitialLaw,
    j: &InteractionMatrix,
    t: usize,
    caps: &Caps,
    rng: &mut R,
) -> Result<SpinConfig> {
    check_dims(law, j)?;
    if t > caps.tree_depth {
        return Err(Error::CapExceeded {
            what: "tree depth",
            value: t,
            cap: caps.tree_depth,
        });
    }
    let leaves = law.sampler()?;
    Ok(glauber_naive_node(&leaves, j, t, rng))
}

fn glauber_naive_node<R: Rng + ?Sized>(
    leaves: &LawSampler<'_>,
    j: &InteractionMatrix,
    depth: usize,
    rng: &mut R,
) -> SpinConfig {
    if depth == 0 {
        return leaves.sample(rng);
    }
    let a = glauber_naive_node(leaves, j, depth - 1, rng);
    let b = glauber_naive_node(leaves, j, depth - 1, rng);
    glauber_collide_pair(a, b, j, rng).0
}

/// Root value, the number of distinct tree nodes resolved, and the number of resolution calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeSample {
    pub config: SpinConfig,
    pub nodes: u64,
    pub visits: u64,
}

/// Which pruning rule the lazy Glauber sampler uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LazyRule {
    /// Resolve x and all of N_J(x) on both children whenever x is needed.
    NeededSet,
    /// Resolve a neighbour only when its coupling can change the swap decision.
    StarRevealing,
}

/// Glauber derivation tree whose nodes draw their randomness from per-node streams, so any
/// subset of the root configuration can be resolved without expanding irrelevant subtrees,
/// and repeated resolutions of a node agree.
pub struct LazyGlauberTree<'a> {
    leaves: LawSampler<'a>,
    j: &'a InteractionMatrix,
    neighbors: Vec<Vec<(usize, f64)>>,
    rule: LazyRule,
    work_cap: u64,
}

struct Resolution {
    /// node id -> (resolved sites, values on them)
    memo: HashMap<u64, (u64, u64)>,
    visits: u64,
}

impl<'a> LazyGlauberTree<'a> {
    pub fn new(
        law: &'a InitialLaw,
        j: &'a InteractionMatrix,
        rule: LazyRule,
        caps: &Caps,
    ) -> Result<Self> {
        check_dims(law, j)?;
        let n = j.n();
        let neighbors = (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x && j.get(x, y) != 0.0)
                    .map(|y| (y, j.get(x, y)))
                    .collect()
            })
            .collect();
        Ok(LazyGlauberTree {
            leaves: law.sampler()?,
            j,
            neighbors,
            rule,
            work_cap: caps.work,
        })
    }

    /// Resolves the root of a depth-t tree, drawing the root's stream from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Result<TreeSample> {
        let root = rng.random::<u64>();
        self.sample_at(root, t, SiteSet::full(self.j.n()))
    }

    /// Root value restricted to `sites`, for the tree identified by `root`.
    pub fn sample_at(&self, root: u64, t: usize, sites: SiteSet) -> Result<TreeSample> {
        if t > LAZY_MAX_DEPTH {
            return Err(Error::CapExceeded {
                what: "lazy tree depth",
                value: t,
                cap: LAZY_MAX_DEPTH,
            });
        }
        let mut res = Resolution {
            memo: HashMap::new(),
            visits: 0,
        };
        let config = self.resolve(root, t, sites, &mut res)?;
        Ok(TreeSample {
            config,
            nodes: res.memo.len() as u64,
            visits: res.visits,
        })
    }

    fn child(id: u64, right: bool) -> u64 {
        derive_seed(id, right as u64 + 1)
    }

    /// The node's value on `s`; bits outside `s` are zero.
    fn resolve(
        &self,
        id: u64,
        depth: usize,
        s: SiteSet,
        res: &mut Resolution,
    ) -> Result<SpinConfig> {
        if s.is_empty() {
            return Ok(SpinConfig(0));
        }
        let (known, vals) = res.memo.get(&id).copied().unwrap_or((0, 0));
        let missing = SiteSet(s.0 & !known);
        if missing.is_empty() {
            return Ok(SpinConfig(vals & s.0));
        }
        res.visits += 1;
        if res.visits > self.work_cap {
            return Err(Error::CapExceeded {
                what: "tree work",
                value: res.visits as usize,
                cap: self.work_cap as usize,
            });
        }
        let got = self.compute(id, depth, missing, res)?;
        let entry = res.memo.entry(id).or_insert((0, 0));
        entry.0 |= missing.0;
        entry.1 |= got.0;
        Ok(SpinConfig(entry.1 & s.0))
    }

    fn compute(
        &self,
        id: u64,
        depth: usize,
        s: SiteSet,
        res: &mut Resolution,
    ) -> Result<SpinConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(id);
        if depth == 0 {
            return Ok(SpinConfig(self.leaves.sample(&mut rng).0 & s.0));
        }
        let (left, right) = (Self::child(id, false), Self::child(id, true));
        let x = rng.random_range(0..self.j.n());
        if !s.contains(x) {
            return self.resolve(left, depth - 1, s, res);
        }
        match self.rule {
            LazyRule::NeededSet => {
                let nbhd =
                    self.neighbors[x]
                        .iter()
                        .fold(SiteSet::singleton(x), |mut acc, &(y, _)| {
                            acc.insert(y);
                            acc
                        });
                let a = self.resolve(left, depth - 1, s.union(nbhd), res)?;
                let b = self.resolve(right, depth - 1, nbhd, res)?;
                let u: f64 = rng.random();
                let out = if u < alpha(x, a, b, self.j) {
                    swap_at(x, a, b).0
                } else {
                    a
                };
                Ok(SpinConfig(out.0 & s.0))
            }
            LazyRule::StarRevealing => self.compute_star(&mut rng, x, [left, right], depth, s, res),
        }
    }

    /// Swap decision by rejection: propose η (+1 = swap) uniformly and accept with
    /// Π_y exp(η φ_y − 2|J_xy|), where φ_y = −(σ_x−σ′_x)(σ_y−σ′_y) J_xy / 2. A neighbour whose
    /// uniform falls below exp(−4|J_xy|) accepts whatever φ_y is, so only the others are revealed.
    /// When σ_x = σ′_x the first output is σ whatever is decided.
    fn compute_star(
        &self,
        rng: &mut ChaCha8Rng,
        x: usize,
        [left, right]: [u64; 2],
        depth: usize,
        s: SiteSet,
        res: &mut Resolution,
    ) -> Result<SpinConfig> {
        let nbrs = &self.neighbors[x];
        let xs = SiteSet::singleton(x);
        loop {
            let swap = rng.random::<bool>();
            let mut revealed = SiteSet::EMPTY;
            let mut draws = Vec::with_capacity(nbrs.len());
            for &(y, jxy) in nbrs {
                let u: f64 = rng.random();
                if u > (-4.0 * jxy.abs()).exp() {
                    revealed.insert(y);
                    draws.push((y, jxy, u));
                }
            }
            if revealed.is_empty() {
                return if swap {
                    let a = self.resolve(left, depth - 1, s.difference(xs), res)?;
                    let b = self.resolve(right, depth - 1, xs, res)?;
                    Ok(SpinConfig(a.0 | b.0))
                } else {
                    self.resolve(left, depth - 1, s, res)
                };
            }
            let a = self.resolve(left, depth - 1, s, res)?;
            let b = self.resolve(right, depth - 1, xs, res)?;
            if a.is_plus(x) == b.is_plus(x) {
                return Ok(a);
            }
            let a = self.resolve(left, depth - 1, s.union(revealed), res)?;
            let b = self.resolve(right, depth - 1, xs.union(revealed), res)?;
            let dx = (a.spin(x) - b.spin(x)) / 2.0;
            let eta = if swap { 1.0 } else { -1.0 };
            let accepted = draws.iter().all(|&(y, jxy, u)| {
                let phi = -dx * jxy * (a.spin(y) - b.spin(y));
                u <= (eta * phi - 2.0 * jxy.abs()).exp()
            });
            if accepted {
                let out = if swap { swap_at(x, a, b).0 } else { a };
                return Ok(SpinConfig(out.0 & s.0));
            }
        }
    }
}

pub fn tree_sample_glauber_lazy<R: Rng + ?Sized>(
    law: &InitialLaw,
    j: &InteractionMatrix,
    t: usize,
    caps: &Caps,
    rng: &mut R,
) -> Result<TreeSample> {
    LazyGlauberTree::new(law, j, LazyRule::StarRevealing, caps)?.sample(t, rng)
}

pub fn tree_sample_glauber_needed_set<R: Rng + ?Sized>(
    law: &InitialLaw,
    j: &InteractionMatrix,
    t: usize,
    caps: &Caps,
    rng: &mut R,
) -> Result<TreeSample> {
    LazyGlauberTree::new(law, j, LazyRule::NeededSet, caps)?.sample(t, rng)
}
