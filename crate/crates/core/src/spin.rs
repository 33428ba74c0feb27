use std::fmt;

/// Largest site count representable by the bitmask types.
pub const MAX_SITES: usize = 64;

/// A spin configuration. Bit `x` set means σ_x = +1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig(pub u64);

impl SpinConfig {
    pub fn all_plus(n: usize) -> Self {
        SpinConfig(full_mask(n))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_plus(self, x: usize) -> bool {
        self.0 >> x & 1 == 1
    }

    /// σ_x as ±1.
    pub fn spin(self, x: usize) -> f64 {
        if self.is_plus(x) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn flipped(self, x: usize) -> Self {
        SpinConfig(self.0 ^ (1 << x))
    }

    /// σ_Λ σ′_{Λ^c}: spins of `self` on `lambda`, of `other` elsewhere.
    pub fn splice(self, other: SpinConfig, lambda: SiteSet) -> SpinConfig {
        SpinConfig((self.0 & lambda.0) | (other.0 & !lambda.0))
    }

    pub fn fits(self, n: usize) -> bool {
        self.0 & !full_mask(n) == 0
    }
}

impl fmt::LowerHex for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

/// A subset of sites as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteSet(pub u64);

/// Exchange set Λ of a block collision.
pub type ExchangeSet = SiteSet;

impl SiteSet {
    pub const EMPTY: SiteSet = SiteSet(0);

    pub fn full(n: usize) -> Self {
        SiteSet(full_mask(n))
    }

    pub fn singleton(x: usize) -> Self {
        SiteSet(1 << x)
    }

    pub fn from_sites<I: IntoIterator<Item = usize>>(sites: I) -> Self {
        SiteSet(sites.into_iter().fold(0, |m, x| m | 1 << x))
    }

    pub fn contains(self, x: usize) -> bool {
        self.0 >> x & 1 == 1
    }

    pub fn insert(&mut self, x: usize) {
        self.0 |= 1 << x;
    }

    pub fn remove(&mut self, x: usize) {
        self.0 &= !(1 << x);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, o: SiteSet) -> SiteSet {
        SiteSet(self.0 | o.0)
    }

    pub fn intersection(self, o: SiteSet) -> SiteSet {
        SiteSet(self.0 & o.0)
    }

    pub fn difference(self, o: SiteSet) -> SiteSet {
        SiteSet(self.0 & !o.0)
    }

    pub fn complement(self, n: usize) -> SiteSet {
        SiteSet(!self.0 & full_mask(n))
    }

    pub fn is_subset(self, o: SiteSet) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn iter(self) -> Sites {
        Sites(self.0)
    }
}

impl FromIterator<usize> for SiteSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        SiteSet::from_sites(iter)
    }
}

pub struct Sites(u64);

impl Iterator for Sites {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let x = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(x)
    }
}

pub fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Sites where the two configurations differ.
pub fn disagreement_set(sigma: SpinConfig, sigma_prime: SpinConfig) -> SiteSet {
    SiteSet(sigma.0 ^ sigma_prime.0)
}

/// Iterates all submasks of `mask` in increasing order, starting from 0.
pub fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(0u64);
    std::iter::from_fn(move || {
        let s = next?;
        let t = s.wrapping_sub(mask) & mask;
        next = if t == 0 { None } else { Some(t) };
        Some(s)
    })
}
