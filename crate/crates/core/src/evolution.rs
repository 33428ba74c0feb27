use rayon::prelude::*;

use crate::caps::Caps;
use crate::dense::{relative_entropy, tv_distance, DenseDistribution};
use crate::error::{Error, Result};
use crate::fields::solve_fields_capped;
use crate::ising::{gibbs_distribution_capped, InteractionMatrix};
use crate::kernels::{kernel_matrix, DynamicsKind, PatternLaw};
use crate::spin::{full_mask, submasks, SiteSet, SpinConfig};

fn check_inputs(
    p: &DenseDistribution,
    q: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    caps: &Caps,
) -> Result<usize> {
    let n = p.n();
    for m in [q.n(), j.n()] {
        if m != n {
            return Err(Error::Dimension {
                expected: n,
                got: m,
            });
        }
    }
    let (what, cap) = match kind {
        DynamicsKind::Block => ("dense block", caps.dense_block),
        DynamicsKind::Glauber => ("dense glauber", caps.dense_glauber),
    };
    if n > cap {
        return Err(Error::CapExceeded {
            what,
            value: n,
            cap,
        });
    }
    Ok(n)
}

/// The convolution product p∘q under the given collision kernel.
pub fn collide_dense(
    p: &DenseDistribution,
    q: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
) -> Result<DenseDistribution> {
    collide_dense_capped(p, q, kind, j, &Caps::default())
}

pub fn collide_dense_capped(
    p: &DenseDistribution,
    q: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    caps: &Caps,
) -> Result<DenseDistribution> {
    let n = check_inputs(p, q, kind, j, caps)?;
    let mut out = match kind {
        DynamicsKind::Block => collide_block(n, p.probs(), q.probs(), j)?,
        DynamicsKind::Glauber => collide_glauber(n, p.probs(), q.probs(), j),
    };
    // Renormalize.
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(DenseDistribution::from_raw(n, out))
}

// The first output of a block collision agrees with σ off D and, on D, follows the
// pattern law of D whatever σ is. So p∘q(τ) = Σ_D r_D(τ off D) · law_D(τ on D), where
// r_D(b) = Σ_{s ⊆ D} p(b|s) q(b|D∖s).
fn collide_block(n: usize, p: &[f64], q: &[f64], j: &InteractionMatrix) -> Result<Vec<f64>> {
    let size = 1usize << n;
    let full = full_mask(n);
    let tables: Vec<(PatternLaw, Vec<f64>)> = (0..size as u64)
        .into_par_iter()
        .map(|d| {
            let law = PatternLaw::new(j, SiteSet(d))?;
            let mut r = vec![0.0; size];
            for b in submasks(full & !d) {
                let mut acc = 0.0;
                for s in submasks(d) {
                    acc += p[(b | s) as usize] * q[(b | (d ^ s)) as usize];
                }
                r[b as usize] = acc;
            }
            Ok((law, r))
        })
        .collect::<Result<_>>()?;
    Ok((0..size as u64)
        .into_par_iter()
        .map(|tau| {
            tables
                .iter()
                .enumerate()
                .map(|(d, (law, r))| {
                    let d = d as u64;
                    let w = r[(tau & !d) as usize];
                    if w == 0.0 {
                        0.0
                    } else {
                        w * law.prob(tau & d)
                    }
                })
                .sum()
        })
        .collect())
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// F_x(σ) is the mass flowing out of σ through a swap at x; the result is
// (p+q)/2 plus (1/n) Σ_x [F_x(σ with x flipped) − F_x(σ)].
fn collide_glauber(n: usize, p: &[f64], q: &[f64], j: &InteractionMatrix) -> Vec<f64> {
    let size = 1usize << n;
    let lf: Vec<f64> = (0..size)
        .into_par_iter()
        .flat_map_iter(|c| (0..n).map(move |x| j.local_field(x, SpinConfig(c as u64))))
        .collect();
    let flow: Vec<f64> = (0..size)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut f = vec![0.0; n];
            for sp in 0..size {
                let w = 0.5 * (p[s] * q[sp] + p[sp] * q[s]);
                if w == 0.0 {
                    continue;
                }
                for x in SiteSet((s ^ sp) as u64).iter() {
                    let sx = if s >> x & 1 == 1 { 1.0 } else { -1.0 };
                    let a = logistic(-2.0 * sx * (lf[s * n + x] - lf[sp * n + x]));
                    f[x] += w * a;
                }
            }
            f
        })
        .collect();
    let inv_n = 1.0 / n as f64;
    (0..size)
        .into_par_iter()
        .map(|t| {
            let moved: f64 = (0..n)
                .map(|x| flow[(t ^ 1 << x) * n + x] - flow[t * n + x])
                .sum();
            0.5 * (p[t] + q[t]) + inv_n * moved
        })
        .collect()
}

/// T_t(p) for block dynamics or S_t(p) for Glauber dynamics: t iterations of p ← p∘p.
pub fn evolve(
    p: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    t: usize,
) -> Result<DenseDistribution> {
    evolve_capped(p, kind, j, t, &Caps::default())
}

pub fn evolve_capped(
    p: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    t: usize,
    caps: &Caps,
) -> Result<DenseDistribution> {
    let mut cur = p.clone();
    check_inputs(&cur, &cur, kind, j, caps)?;
    for _ in 0..t {
        cur = collide_dense_capped(&cur, &cur, kind, j, caps)?;
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub tv_to_target: f64,
    pub relative_entropy: f64,
    pub min_prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn tv(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.tv_to_target).collect()
    }

    pub fn entropy(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.relative_entropy).collect()
    }
}

/// The Gibbs measure with the same marginals as p (its limit under either dynamics).
pub fn matched_gibbs(
    p: &DenseDistribution,
    j: &InteractionMatrix,
    tol: f64,
    caps: &Caps,
) -> Result<DenseDistribution> {
    let h = solve_fields_capped(j, &p.marginals(), tol, caps)?;
    gibbs_distribution_capped(j, &h, caps.exact)
}

/// Records TV and relative entropy to `target` at t = 0..=t_max; also returns the final law.
pub fn trajectory(
    p: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    t_max: usize,
    target: &DenseDistribution,
    caps: &Caps,
) -> Result<(Trajectory, DenseDistribution)> {
    let mut cur = p.clone();
    let mut traj = Trajectory::default();
    for t in 0..=t_max {
        if t > 0 {
            cur = collide_dense_capped(&cur, &cur, kind, j, caps)?;
        }
        traj.steps.push(TrajectoryStep {
            t,
            tv_to_target: tv_distance(&cur, target)?,
            relative_entropy: relative_entropy(&cur, target)?,
            min_prob: cur.min_prob(),
        });
    }
    Ok((traj, cur))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationarityCheck {
    pub stationary: bool,
    pub residual: f64,
}

/// Whether TV(p∘p, p) ≤ tol.
pub fn check_stationary(
    p: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    tol: f64,
) -> Result<StationarityCheck> {
    let pp = collide_dense(p, p, kind, j)?;
    let residual = tv_distance(&pp, p)?;
    Ok(StationarityCheck {
        stationary: residual <= tol,
        residual,
    })
}

/// Whether the product law p⊗p is invariant under one pair collision (n ≤ 3).
pub fn check_pair_invariance(
    p: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    tol: f64,
) -> Result<bool> {
    if p.n() != j.n() {
        return Err(Error::Dimension {
            expected: j.n(),
            got: p.n(),
        });
    }
    let q = kernel_matrix(kind, j)?;
    let cs: Vec<SpinConfig> = q.configs().collect();
    for &t in &cs {
        for &tp in &cs {
            let mut acc = 0.0;
            for &s in &cs {
                for &sp in &cs {
                    acc += p.prob(s) * p.prob(sp) * q.get(s, sp, t, tp);
                }
            }
            if (acc - p.prob(t) * p.prob(tp)).abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// min_τ T_t(p)(τ) for t = 0..=t_max. Rejects laws with a marginal equal to 0 or 1.
pub fn positivity_trace(
    p: &DenseDistribution,
    kind: DynamicsKind,
    j: &InteractionMatrix,
    t_max: usize,
) -> Result<Vec<f64>> {
    for (site, &value) in p.marginals().iter().enumerate() {
        if value <= 0.0 || value >= 1.0 {
            return Err(Error::Degenerate { site, value });
        }
    }
    let mut cur = p.clone();
    let mut mins = vec![cur.min_prob()];
    for _ in 0..t_max {
        cur = collide_dense(&cur, &cur, kind, j)?;
        mins.push(cur.min_prob());
    }
    Ok(mins)
}
