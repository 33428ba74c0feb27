use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::caps::Caps;
use crate::dense::DenseDistribution;
use crate::error::{invalid, Error, Result};
use crate::spin::{SiteSet, SpinConfig, MAX_SITES};

/// Symmetric coupling matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl InteractionMatrix {
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_SITES {
            return Err(invalid(format!(
                "site count {n} out of range 1..={MAX_SITES}"
            )));
        }
        Ok(InteractionMatrix {
            n,
            entries: vec![0.0; n * n],
        })
    }

    /// Builds from a row-major n×n matrix, checking symmetry and the zero diagonal.
    pub fn from_rows(n: usize, entries: Vec<f64>) -> Result<Self> {
        let mut j = Self::zeros(n)?;
        if entries.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: entries.len(),
            });
        }
        for x in 0..n {
            if entries[x * n + x] != 0.0 {
                return Err(invalid(format!("nonzero diagonal at {x}")));
            }
            for y in 0..n {
                let v = entries[x * n + y];
                if !v.is_finite() || v != entries[y * n + x] {
                    return Err(invalid(format!("J not symmetric/finite at ({x},{y})")));
                }
            }
        }
        j.entries = entries;
        Ok(j)
    }

    /// Every pair coupled with the same value.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        let mut j = Self::zeros(n)?;
        for x in 0..n {
            for y in x + 1..n {
                j.set(x, y, value);
            }
        }
        Ok(j)
    }

    /// Couplings uniform in [−1,1] on every pair, rescaled to the given Dobrushin norm.
    pub fn random<R: Rng + ?Sized>(n: usize, norm: f64, rng: &mut R) -> Result<Self> {
        let mut j = Self::zeros(n)?;
        for x in 0..n {
            for y in x + 1..n {
                j.set(x, y, rng.random_range(-1.0..=1.0));
            }
        }
        let d = dobrushin_norm(&j);
        if d > 0.0 {
            j.entries.iter_mut().for_each(|v| *v *= norm / d);
        }
        Ok(j)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.n + y]
    }

    /// Sets J_xy and J_yx.
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        assert!(x != y, "diagonal couplings are fixed at zero");
        self.entries[x * self.n + y] = v;
        self.entries[y * self.n + x] = v;
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.n..(x + 1) * self.n]
    }

    /// N_J(x) = {y : J_xy ≠ 0}.
    pub fn neighbors(&self, x: usize) -> SiteSet {
        SiteSet::from_sites((0..self.n).filter(|&y| self.get(x, y) != 0.0))
    }

    /// Σ_y J_xy σ_y.
    pub fn local_field(&self, x: usize, sigma: SpinConfig) -> f64 {
        self.row(x)
            .iter()
            .enumerate()
            .map(|(y, j)| j * sigma.spin(y))
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldVector(Vec<f64>);

impl FieldVector {
    pub fn new(h: Vec<f64>) -> Self {
        FieldVector(h)
    }

    pub fn zeros(n: usize) -> Self {
        FieldVector(vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_dims(j: &InteractionMatrix, h: &FieldVector) -> Result<()> {
    if h.n() != j.n() {
        return Err(Error::Dimension {
            expected: j.n(),
            got: h.n(),
        });
    }
    Ok(())
}

/// (1/2) Σ_{x,y} J_xy σ_x σ_y + Σ_x h_x σ_x.
pub fn energy(sigma: SpinConfig, j: &InteractionMatrix, h: &FieldVector) -> Result<f64> {
    check_dims(j, h)?;
    if !sigma.fits(j.n()) {
        return Err(invalid(format!(
            "configuration {:#x} has bits beyond n={}",
            sigma.0,
            j.n()
        )));
    }
    Ok((0..j.n())
        .map(|x| sigma.spin(x) * (0.5 * j.local_field(x, sigma) + h.as_slice()[x]))
        .sum())
}

/// Energies of all 2^n configurations, built by single-bit increments.
pub fn all_energies(j: &InteractionMatrix, h: &FieldVector) -> Result<Vec<f64>> {
    check_dims(j, h)?;
    let n = j.n();
    if n >= usize::BITS as usize - 1 {
        return Err(Error::CapExceeded {
            what: "dense size",
            value: n,
            cap: usize::BITS as usize - 2,
        });
    }
    let size = 1usize << n;
    let mut e = vec![0.0; size];
    e[0] = energy(SpinConfig(0), j, h)?;
    for c in 1..size {
        let b = c.trailing_zeros() as usize;
        let prev = c & (c - 1);
        let lf = j.local_field(b, SpinConfig(prev as u64)) + h.as_slice()[b];
        e[c] = e[prev] + 2.0 * lf;
    }
    Ok(e)
}

/// The Gibbs measure with its log partition function.
#[derive(Clone, Debug)]
pub struct GibbsModel {
    pub j: InteractionMatrix,
    pub h: FieldVector,
    pub log_z: f64,
    pub probs: Option<DenseDistribution>,
}

impl GibbsModel {
    pub fn new(j: InteractionMatrix, h: FieldVector, caps: &Caps) -> Result<Self> {
        check_dims(&j, &h)?;
        if j.n() > caps.exact {
            return Err(Error::CapExceeded {
                what: "exact",
                value: j.n(),
                cap: caps.exact,
            });
        }
        let e = all_energies(&j, &h)?;
        let (p, log_z) = DenseDistribution::from_log_weights(j.n(), &e)?;
        Ok(GibbsModel {
            j,
            h,
            log_z,
            probs: Some(p),
        })
    }
}

pub fn gibbs_distribution(j: &InteractionMatrix, h: &FieldVector) -> Result<DenseDistribution> {
    gibbs_distribution_capped(j, h, Caps::default().exact)
}

pub fn gibbs_distribution_capped(
    j: &InteractionMatrix,
    h: &FieldVector,
    cap: usize,
) -> Result<DenseDistribution> {
    if j.n() > cap {
        return Err(Error::CapExceeded {
            what: "exact",
            value: j.n(),
            cap,
        });
    }
    let e = all_energies(j, h)?;
    Ok(DenseDistribution::from_log_weights(j.n(), &e)?.0)
}

/// max_x Σ_y |J_xy|.
pub fn dobrushin_norm(j: &InteractionMatrix) -> f64 {
    (0..j.n())
        .map(|x| j.row(x).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// P(σ_x = +1) per site.
pub fn marginals(p: &DenseDistribution) -> Vec<f64> {
    p.marginals()
}

/// Couplings and fields read from a model file.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub j: InteractionMatrix,
    pub h: FieldVector,
}

impl Model {
    /// Parses `n <int>`, `J <x> <y> <v>` and `h <x> <v>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (first, header) = lines.next().ok_or_else(|| invalid("empty model file"))?;
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["n", v] => v
                .parse()
                .map_err(|_| perr(first, format!("bad site count `{v}`")))?,
            _ => return Err(perr(first, "expected header `n <int>`".into())),
        };
        let mut j = InteractionMatrix::zeros(n).map_err(|e| perr(first, e.to_string()))?;
        let mut h = vec![0.0; n];
        let mut seen_pair = vec![false; n * n];
        let mut seen_h = vec![false; n];
        for (line, l) in lines {
            let toks: Vec<&str> = l.split_whitespace().collect();
            let site = |s: &str| -> Result<usize> {
                let x: usize = s
                    .parse()
                    .map_err(|_| perr(line, format!("bad site `{s}`")))?;
                if x >= n {
                    return Err(perr(line, format!("site {x} out of range for n={n}")));
                }
                Ok(x)
            };
            let value = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(line, format!("bad value `{s}`")))
            };
            match toks[..] {
                ["J", a, b, v] => {
                    let (x, y, v) = (site(a)?, site(b)?, value(v)?);
                    if x == y {
                        return Err(perr(line, format!("self coupling at site {x}")));
                    }
                    let k = x.min(y) * n + x.max(y);
                    if std::mem::replace(&mut seen_pair[k], true) {
                        return Err(perr(line, format!("duplicate pair ({x},{y})")));
                    }
                    j.set(x, y, v);
                }
                ["h", a, v] => {
                    let (x, v) = (site(a)?, value(v)?);
                    if std::mem::replace(&mut seen_h[x], true) {
                        return Err(perr(line, format!("duplicate field for site {x}")));
                    }
                    h[x] = v;
                }
                _ => return Err(perr(line, format!("unrecognized line `{l}`"))),
            }
        }
        Ok(Model {
            j,
            h: FieldVector::new(h),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let n = self.j.n();
        let mut s = format!("n {n}\n");
        for x in 0..n {
            for y in x + 1..n {
                let v = self.j.get(x, y);
                if v != 0.0 {
                    let _ = writeln!(s, "J {x} {y} {v}");
                }
            }
        }
        for (x, v) in self.h.as_slice().iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "h {x} {v}");
            }
        }
        s
    }
}
