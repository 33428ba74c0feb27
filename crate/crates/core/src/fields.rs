use crate::caps::Caps;
use crate::dense::DenseDistribution;
use crate::error::{Error, Result};
use crate::ising::{all_energies, FieldVector, InteractionMatrix};

const MAX_NEWTON: usize = 200;

struct Eval {
    /// log Z(h) − Σ h_x m̃_x
    objective: f64,
    p: DenseDistribution,
    /// E_h[σ_x]
    mag: Vec<f64>,
}

fn evaluate(j: &InteractionMatrix, h: &[f64], target_mag: &[f64]) -> Result<Eval> {
    let e = all_energies(j, &FieldVector::new(h.to_vec()))?;
    let (p, log_z) = DenseDistribution::from_log_weights(j.n(), &e)?;
    let mag: Vec<f64> = p.marginals().iter().map(|m| 2.0 * m - 1.0).collect();
    let objective = log_z - h.iter().zip(target_mag).map(|(a, b)| a * b).sum::<f64>();
    Ok(Eval { objective, p, mag })
}

/// Cov_h(σ)·v computed from the dense law.
fn hessian_times(p: &DenseDistribution, mag: &[f64], v: &[f64]) -> Vec<f64> {
    let n = mag.len();
    let mut out = vec![0.0; n];
    for (c, &pc) in p.probs().iter().enumerate() {
        if pc == 0.0 {
            continue;
        }
        let s = |x: usize| if c >> x & 1 == 1 { 1.0 } else { -1.0 };
        let sv: f64 = (0..n).map(|x| s(x) * v[x]).sum();
        for (x, o) in out.iter_mut().enumerate() {
            *o += pc * s(x) * sv;
        }
    }
    let mv: f64 = mag.iter().zip(v).map(|(a, b)| a * b).sum();
    out.iter_mut().zip(mag).for_each(|(o, m)| *o -= m * mv);
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for Cov·d = rhs.
fn solve_newton_direction(p: &DenseDistribution, mag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut d = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut dir = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-30 * rr.max(1e-300);
    for _ in 0..(2 * n).max(4) {
        if rr <= stop {
            break;
        }
        let hd = hessian_times(p, mag, &dir);
        let curv = dot(&dir, &hd);
        if curv <= 0.0 {
            break;
        }
        let a = rr / curv;
        d.iter_mut().zip(&dir).for_each(|(di, pi)| *di += a * pi);
        r.iter_mut().zip(&hd).for_each(|(ri, hi)| *ri -= a * hi);
        let rr_new = dot(&r, &r);
        let b = rr_new / rr;
        dir.iter_mut()
            .zip(&r)
            .for_each(|(pi, ri)| *pi = ri + b * *pi);
        rr = rr_new;
    }
    if d.iter().all(|v| *v == 0.0) {
        return rhs.to_vec();
    }
    d
}

fn check_targets(target: &[f64]) -> Result<()> {
    for (site, &value) in target.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Degenerate { site, value });
        }
    }
    Ok(())
}

/// Fields h such that the Gibbs measure μ_{J,h} has the target marginals P(σ_x = +1),
/// to within `tol` in sup norm. Damped Newton on the convex dual, Hessian applied matrix-free.
pub fn solve_fields(j: &InteractionMatrix, target: &[f64], tol: f64) -> Result<FieldVector> {
    solve_fields_capped(j, target, tol, &Caps::default())
}

pub fn solve_fields_capped(
    j: &InteractionMatrix,
    target: &[f64],
    tol: f64,
    caps: &Caps,
) -> Result<FieldVector> {
    let n = j.n();
    if target.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: target.len(),
        });
    }
    if n > caps.exact {
        return Err(Error::CapExceeded {
            what: "exact",
            value: n,
            cap: caps.exact,
        });
    }
    check_targets(target)?;
    let tmag: Vec<f64> = target.iter().map(|m| 2.0 * m - 1.0).collect();
    let mut h: Vec<f64> = tmag.iter().map(|m| m.atanh()).collect();
    let mut cur = evaluate(j, &h, &tmag)?;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let g: Vec<f64> = cur.mag.iter().zip(&tmag).map(|(a, b)| a - b).collect();
        residual = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / 2.0;
        if residual <= tol {
            return Ok(FieldVector::new(h));
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let d = solve_newton_direction(&cur.p, &cur.mag, &neg_g);
        let slope = dot(&g, &d);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial: Vec<f64> = h.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let ev = evaluate(j, &trial, &tmag)?;
            let armijo = ev.objective <= cur.objective + 1e-4 * step * slope;
            let trial_res = ev
                .mag
                .iter()
                .zip(&tmag)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / 2.0;
            // Flat objective: use the residual.
            if armijo || trial_res < residual {
                accepted = Some((trial, ev));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, ev)) => {
                h = trial;
                cur = ev;
            }
            None => break,
        }
    }
    Err(Error::Numerical(format!(
        "solve_fields did not converge (residual {residual:e})"
    )))
}
