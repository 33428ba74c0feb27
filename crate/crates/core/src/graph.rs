use std::collections::{HashMap, VecDeque};

use rand::Rng;

use crate::dense::DenseDistribution;
use crate::error::{invalid, Error, Result};
use crate::ising::InteractionMatrix;
use crate::kernels::TiltedInteraction;
use crate::spin::{SiteSet, SpinConfig};

/// An edge set on [n]; the vertex set is the union of edge endpoints.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LabeledGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl LabeledGraph {
    pub fn empty(n: usize) -> Self {
        LabeledGraph {
            n,
            edges: Vec::new(),
        }
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Self> {
        let mut e = Vec::new();
        for (x, y) in edges {
            if x == y || x >= n || y >= n {
                return Err(invalid(format!("bad edge ({x},{y}) for n={n}")));
            }
            e.push((x.min(y), x.max(y)));
        }
        e.sort_unstable();
        e.dedup();
        Ok(LabeledGraph { n, edges: e })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn vertices(&self) -> SiteSet {
        self.edges.iter().fold(SiteSet::EMPTY, |s, &(x, y)| {
            s.union(SiteSet::from_sites([x, y]))
        })
    }

    pub fn contains_edge(&self, x: usize, y: usize) -> bool {
        self.edges.binary_search(&(x.min(y), x.max(y))).is_ok()
    }

    pub fn is_subgraph_of(&self, other: &LabeledGraph) -> bool {
        self.edges.iter().all(|&(x, y)| other.contains_edge(x, y))
    }

    fn adjacency(&self) -> Vec<SiteSet> {
        let mut adj = vec![SiteSet::EMPTY; self.n];
        for &(x, y) in &self.edges {
            adj[x].insert(y);
            adj[y].insert(x);
        }
        adj
    }

    /// Vertex sets of the connected components (isolated vertices excluded).
    pub fn components(&self) -> Vec<SiteSet> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(x, y) in &self.edges {
            let (a, b) = (find(&mut parent, x), find(&mut parent, y));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut comps: Vec<(usize, SiteSet)> = Vec::new();
        for v in self.vertices().iter() {
            let r = find(&mut parent, v);
            match comps.iter_mut().find(|(root, _)| *root == r) {
                Some((_, s)) => s.insert(v),
                None => comps.push((r, SiteSet::singleton(v))),
            }
        }
        comps.into_iter().map(|(_, s)| s).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Edges restricted to a vertex subset.
    pub fn induced(&self, vertices: SiteSet) -> LabeledGraph {
        LabeledGraph {
            n: self.n,
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(x, y)| vertices.contains(x) && vertices.contains(y))
                .collect(),
        }
    }
}

/// V_{G(A)}: vertices of the components of G that meet A, by breadth-first search.
pub fn closure(g: &LabeledGraph, a: SiteSet) -> SiteSet {
    let adj = g.adjacency();
    let mut seen = SiteSet::EMPTY;
    let mut queue: VecDeque<usize> = a.intersection(g.vertices()).iter().collect();
    for &v in &queue {
        seen.insert(v);
    }
    while let Some(v) = queue.pop_front() {
        for w in adj[v].difference(seen).iter() {
            seen.insert(w);
            queue.push_back(w);
        }
    }
    seen
}

/// λ_xy = e^{4|J_xy|} − 1 and p_xy = 1 − e^{−4|J_xy|}.
#[derive(Clone, Debug)]
pub struct GraphWeights {
    n: usize,
    lambda: Vec<f64>,
    p: Vec<f64>,
}

impl GraphWeights {
    pub fn new(j: &InteractionMatrix) -> Self {
        let n = j.n();
        let mut lambda = vec![0.0; n * n];
        let mut p = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                let a = 4.0 * j.get(x, y).abs();
                lambda[x * n + y] = a.exp_m1();
                p[x * n + y] = -(-a).exp_m1();
            }
        }
        GraphWeights { n, lambda, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self, x: usize, y: usize) -> f64 {
        self.lambda[x * self.n + y]
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.n + y]
    }

    /// ρ_x = 1 − Π_{z≠x}(1 − p_xz): probability that x is not isolated.
    pub fn rho(&self, x: usize) -> f64 {
        1.0 - (0..self.n)
            .filter(|&z| z != x)
            .map(|z| 1.0 - self.p(x, z))
            .product::<f64>()
    }

    /// ρ_0 = max_x Σ_y p_xy.
    pub fn rho_0(&self) -> f64 {
        (0..self.n)
            .map(|x| (0..self.n).map(|y| self.p(x, y)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn er_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LabeledGraph {
        let mut edges = Vec::new();
        for x in 0..self.n {
            for y in x + 1..self.n {
                let p = self.p(x, y);
                if p > 0.0 && rng.random::<f64>() < p {
                    edges.push((x, y));
                }
            }
        }
        LabeledGraph { n: self.n, edges }
    }

    pub fn star_sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> LabeledGraph {
        let mut edges = Vec::new();
        for y in (0..self.n).filter(|&y| y != x) {
            let p = self.p(x, y);
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((x.min(y), x.max(y)));
            }
        }
        edges.sort_unstable();
        LabeledGraph { n: self.n, edges }
    }

    /// Component of x in G ~ ν_J, revealing only the edges a search from x examines.
    pub fn component_of<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> SiteSet {
        let mut seen = SiteSet::singleton(x);
        let mut queue = VecDeque::from([x]);
        while let Some(v) = queue.pop_front() {
            for w in seen.complement(self.n).iter() {
                let p = self.p(v, w);
                if p > 0.0 && rng.random::<f64>() < p {
                    seen.insert(w);
                    queue.push_back(w);
                }
            }
        }
        if seen.len() == 1 {
            SiteSet::EMPTY
        } else {
            seen
        }
    }
    /// V_{G(A)} for G ~ ν_J, revealing each edge at most once by a search started from A.
    pub fn closure_sample<R: Rng + ?Sized>(&self, a: SiteSet, rng: &mut R) -> SiteSet {
        let mut processed = SiteSet::EMPTY;
        let mut queued = a;
        let mut touched = SiteSet::EMPTY;
        let mut queue: VecDeque<usize> = a.iter().collect();
        while let Some(v) = queue.pop_front() {
            processed.insert(v);
            for w in processed.complement(self.n).iter() {
                let p = self.p(v, w);
                if p > 0.0 && rng.random::<f64>() < p {
                    touched.insert(v);
                    touched.insert(w);
                    if !queued.contains(w) {
                        queued.insert(w);
                        queue.push_back(w);
                    }
                }
            }
        }
        touched
    }
}

/// Each edge of K_n present independently with probability p_xy.
pub fn er_sample<R: Rng + ?Sized>(j: &InteractionMatrix, rng: &mut R) -> LabeledGraph {
    GraphWeights::new(j).er_sample(rng)
}

/// Each edge {x,y} of the star at x present independently with probability p_xy.
pub fn star_sample<R: Rng + ?Sized>(x: usize, j: &InteractionMatrix, rng: &mut R) -> LabeledGraph {
    GraphWeights::new(j).star_sample(x, rng)
}

/// Largest n for which subgraphs of K_n are enumerated exhaustively.
pub const HT_MAX_N: usize = 5;
/// Largest n for which edge sets fit a 64-bit mask.
pub const EDGE_MASK_MAX_N: usize = 11;

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
        .collect()
}

/// High-temperature expansion terms for a pair (σ,σ′): φ(e) = J̃_e and
/// δ_e(η) = exp{φ(e)η_xη_y + |φ(e)|} − 1.
#[derive(Clone, Debug)]
pub struct HtExpansion {
    n: usize,
    pairs: Vec<(usize, usize)>,
    phi: Vec<f64>,
}

impl HtExpansion {
    pub fn new(sigma: SpinConfig, sigma_prime: SpinConfig, j: &InteractionMatrix) -> Result<Self> {
        let n = j.n();
        if n > EDGE_MASK_MAX_N {
            return Err(Error::CapExceeded {
                what: "edge mask",
                value: n,
                cap: EDGE_MASK_MAX_N,
            });
        }
        let t = TiltedInteraction::new(sigma, sigma_prime, j)?;
        let pairs = pairs(n);
        let phi = pairs.iter().map(|&(x, y)| t.entries.get(x, y)).collect();
        Ok(HtExpansion { n, pairs, phi })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn edge_index(&self, x: usize, y: usize) -> usize {
        let (a, b) = (x.min(y), x.max(y));
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    pub fn mask_of(&self, g: &LabeledGraph) -> u64 {
        g.edges()
            .iter()
            .fold(0, |m, &(x, y)| m | 1 << self.edge_index(x, y))
    }

    pub fn graph_of(&self, mask: u64) -> LabeledGraph {
        LabeledGraph {
            n: self.n,
            edges: self
                .pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &e)| e)
                .collect(),
        }
    }

    /// δ_e at pattern η (bit x set ⇔ η_x = +1).
    pub fn delta(&self, e: usize, eta: u64) -> f64 {
        let (x, y) = self.pairs[e];
        let s = if (eta >> x ^ eta >> y) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        let f = self.phi[e];
        (f * s + f.abs()).exp_m1()
    }

    fn product_delta(&self, mask: u64, eta: u64) -> f64 {
        let mut w = 1.0;
        let mut m = mask;
        while m != 0 && w != 0.0 {
            let e = m.trailing_zeros() as usize;
            m &= m - 1;
            w *= self.delta(e, eta);
        }
        w
    }

    /// w_c(G) = Σ over η on V_G of Π_{e∈G} δ_e.
    pub fn component_weight(&self, g: &LabeledGraph) -> f64 {
        let mask = self.mask_of(g);
        crate::spin::submasks(g.vertices().0)
            .map(|eta| self.product_delta(mask, eta))
            .sum()
    }

    /// w(G) = 2^{|V∖V_G|} Π_i w_c(G_i).
    pub fn weight(&self, g: &LabeledGraph) -> f64 {
        let free = self.n - g.vertices().len();
        g.components()
            .iter()
            .map(|&c| self.component_weight(&g.induced(c)))
            .product::<f64>()
            * 2f64.powi(free as i32)
    }

    /// Σ over all η ∈ {±1}^n of Π_{e∈G} δ_e; equals `weight` by the product structure.
    pub fn weight_direct(&self, mask: u64) -> f64 {
        (0..1u64 << self.n)
            .map(|eta| self.product_delta(mask, eta))
            .sum()
    }
}

/// Law p_{J,σ,σ′}(G) ∝ w(G) over all subgraphs of K_n, indexed by edge mask.
#[derive(Clone, Debug)]
pub struct GraphDistribution {
    pub expansion: HtExpansion,
    pub probs: Vec<f64>,
}

impl GraphDistribution {
    pub fn graph(&self, mask: u64) -> LabeledGraph {
        self.expansion.graph_of(mask)
    }
}

pub fn ht_graph_distribution(
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
) -> Result<GraphDistribution> {
    let n = j.n();
    if n > HT_MAX_N {
        return Err(Error::CapExceeded {
            what: "graph enumeration",
            value: n,
            cap: HT_MAX_N,
        });
    }
    let ht = HtExpansion::new(sigma, sigma_prime, j)?;
    let m = ht.pairs.len();
    let w: Vec<f64> = (0..1u64 << m)
        .map(|mask| ht.weight(&ht.graph_of(mask)))
        .collect();
    let total: f64 = w.iter().sum();
    Ok(GraphDistribution {
        expansion: ht,
        probs: w.iter().map(|v| v / total).collect(),
    })
}

/// v_G(η) ∝ Π_{e∈G} δ_e(η) on the vertices of a connected G.
#[derive(Clone, Debug)]
pub struct ComponentMeasure {
    pub vertices: SiteSet,
    /// Indexed by submask of `vertices` in site coordinates, compressed in increasing order.
    pub probs: Vec<f64>,
}

impl ComponentMeasure {
    pub fn prob(&self, eta: u64) -> f64 {
        let eta = eta & self.vertices.0;
        let idx = self
            .vertices
            .iter()
            .enumerate()
            .fold(0usize, |acc, (a, x)| acc | (((eta >> x) & 1) as usize) << a);
        self.probs[idx]
    }
}

pub fn component_measure(
    g: &LabeledGraph,
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
) -> Result<ComponentMeasure> {
    if g.n() != j.n() {
        return Err(Error::Dimension {
            expected: j.n(),
            got: g.n(),
        });
    }
    if !g.is_connected() {
        return Err(invalid(
            "component measure needs a connected nonempty graph",
        ));
    }
    let ht = HtExpansion::new(sigma, sigma_prime, j)?;
    let mask = ht.mask_of(g);
    let v = g.vertices();
    let w: Vec<f64> = crate::spin::submasks(v.0)
        .map(|eta| ht.product_delta(mask, eta))
        .collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(invalid("structural zero: w_c(G) = 0"));
    }
    Ok(ComponentMeasure {
        vertices: v,
        probs: w.iter().map(|x| x / total).collect(),
    })
}

/// Σ_G p(G) · (⊗_i v_{G_i} ⊗ fair coins off V_G), as a law over subsets Λ (η_x = +1 ⇔ x ∈ Λ).
pub fn reconstruct_gamma(
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
) -> Result<DenseDistribution> {
    let n = j.n();
    let gd = ht_graph_distribution(sigma, sigma_prime, j)?;
    let mut out = vec![0.0; 1 << n];
    for (mask, &pg) in gd.probs.iter().enumerate() {
        if pg == 0.0 {
            continue;
        }
        let g = gd.graph(mask as u64);
        let comps: Vec<ComponentMeasure> = g
            .components()
            .iter()
            .map(|&c| component_measure(&g.induced(c), sigma, sigma_prime, j))
            .collect::<Result<_>>()?;
        let off = 0.5f64.powi((n - g.vertices().len()) as i32);
        for (lam, o) in out.iter_mut().enumerate() {
            *o += pg * off * comps.iter().map(|c| c.prob(lam as u64)).product::<f64>();
        }
    }
    DenseDistribution::new(n, out)
}

/// State (X, Y) of the monotone coupled graph chain, with X ⊆ Y.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoupledState {
    pub x: LabeledGraph,
    pub y: LabeledGraph,
}

impl CoupledState {
    pub fn empty(n: usize) -> Self {
        CoupledState {
            x: LabeledGraph::empty(n),
            y: LabeledGraph::empty(n),
        }
    }
}

/// The coupled chain for a fixed (σ,σ′): X targets p_{J,σ,σ′}, Y targets ν_J, driven by a
/// shared uniform edge and a shared uniform U.
pub struct CoupledChain {
    ht: HtExpansion,
    p_bar: Vec<f64>,
    weights: HashMap<u64, f64>,
}

/// Edge masks of a coupled state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoupledMasks {
    pub x: u64,
    pub y: u64,
}

impl CoupledChain {
    pub fn new(sigma: SpinConfig, sigma_prime: SpinConfig, j: &InteractionMatrix) -> Result<Self> {
        let ht = HtExpansion::new(sigma, sigma_prime, j)?;
        let gw = GraphWeights::new(j);
        let p_bar = ht
            .pairs
            .iter()
            .map(|&(x, y)| gw.lambda(x, y) / (1.0 + gw.lambda(x, y)))
            .collect();
        Ok(CoupledChain {
            ht,
            p_bar,
            weights: HashMap::new(),
        })
    }

    pub fn expansion(&self) -> &HtExpansion {
        &self.ht
    }

    fn w(&mut self, mask: u64) -> f64 {
        let ht = &self.ht;
        *self
            .weights
            .entry(mask)
            .or_insert_with(|| ht.weight_direct(mask))
    }

    /// p(X,e,+) = w(X∪e)/(w(X∖e) + w(X∪e)), with 0/0 read as 0.
    pub fn p_add(&mut self, x: u64, e: usize) -> f64 {
        let with = self.w(x | 1 << e);
        let without = self.w(x & !(1 << e));
        if with == 0.0 {
            0.0
        } else {
            with / (with + without)
        }
    }

    pub fn p_bar(&self, e: usize) -> f64 {
        self.p_bar[e]
    }

    pub fn step_masks<R: Rng + ?Sized>(
        &mut self,
        s: CoupledMasks,
        rng: &mut R,
    ) -> Result<CoupledMasks> {
        if s.x & !s.y != 0 {
            return Err(invalid("coupled chain requires X ⊆ Y"));
        }
        let e = rng.random_range(0..self.ht.pairs.len());
        let u: f64 = rng.random();
        let bit = 1u64 << e;
        let x = if u <= self.p_add(s.x, e) {
            s.x | bit
        } else {
            s.x & !bit
        };
        let y = if u <= self.p_bar(e) {
            s.y | bit
        } else {
            s.y & !bit
        };
        Ok(CoupledMasks { x, y })
    }

    pub fn step<R: Rng + ?Sized>(&mut self, s: &CoupledState, rng: &mut R) -> Result<CoupledState> {
        let masks = CoupledMasks {
            x: self.ht.mask_of(&s.x),
            y: self.ht.mask_of(&s.y),
        };
        if !s.x.is_subgraph_of(&s.y) {
            return Err(invalid("coupled chain requires X ⊆ Y"));
        }
        let next = self.step_masks(masks, rng)?;
        Ok(CoupledState {
            x: self.ht.graph_of(next.x),
            y: self.ht.graph_of(next.y),
        })
    }
}

/// One step of the coupled chain (builds the chain afresh; use `CoupledChain` for long runs).
pub fn coupled_chain_step<R: Rng + ?Sized>(
    state: &CoupledState,
    sigma: SpinConfig,
    sigma_prime: SpinConfig,
    j: &InteractionMatrix,
    rng: &mut R,
) -> Result<CoupledState> {
    CoupledChain::new(sigma, sigma_prime, j)?.step(state, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::gamma_distribution;
    use crate::spin::full_mask;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(n: usize, e: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::from_edges(n, e.iter().copied()).unwrap()
    }

    #[test]
    fn closure_examples() {
        assert_eq!(
            closure(&LabeledGraph::empty(4), SiteSet::full(4)),
            SiteSet::EMPTY
        );
        assert_eq!(
            closure(&g(3, &[(0, 1)]), SiteSet::singleton(0)),
            SiteSet::from_sites([0, 1])
        );
        // Edges {1,2} and {3,4}, A = {2,5}, in 1-based labels.
        let gr = g(5, &[(0, 1), (2, 3)]);
        assert_eq!(
            closure(&gr, SiteSet::from_sites([1, 4])),
            SiteSet::from_sites([0, 1])
        );
    }

    #[test]
    fn graph_basics() {
        assert!(LabeledGraph::from_edges(3, [(1, 1)]).is_err());
        assert!(LabeledGraph::from_edges(3, [(0, 3)]).is_err());
        let gr = g(6, &[(3, 1), (1, 2), (4, 5)]);
        assert_eq!(gr.vertices(), SiteSet::from_sites([1, 2, 3, 4, 5]));
        let mut comps = gr.components();
        comps.sort();
        assert_eq!(
            comps,
            vec![SiteSet::from_sites([1, 2, 3]), SiteSet::from_sites([4, 5])]
        );
        assert!(!gr.is_connected());
        assert!(g(6, &[(1, 2)]).is_subgraph_of(&gr));
    }

    #[test]
    fn zero_coupling_graphs_are_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j = InteractionMatrix::zeros(5).unwrap();
        for _ in 0..100 {
            assert!(er_sample(&j, &mut rng).is_empty());
            assert!(star_sample(2, &j, &mut rng).is_empty());
        }
    }

    #[test]
    fn er_edge_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let j = InteractionMatrix::uniform(3, 0.05).unwrap();
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| er_sample(&j, &mut rng).contains_edge(0, 2))
            .count();
        let want = 1.0 - (-0.2f64).exp();
        assert!((want - 0.18127).abs() < 1e-5);
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - want).abs() < 3.0 * se);
    }

    #[test]
    fn er_vertex_union_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let j = InteractionMatrix::uniform(3, 0.2).unwrap();
        let gw = GraphWeights::new(&j);
        let trials = 50_000;
        let hits = (0..trials)
            .filter(|_| gw.er_sample(&mut rng).vertices().contains(0))
            .count();
        let bound = gw.p(0, 1) + gw.p(0, 2);
        let p = hits as f64 / trials as f64;
        assert!(p - 3.0 * (p * (1.0 - p) / trials as f64).sqrt() <= bound);
        assert!((gw.rho(0) - p).abs() < 4.0 * (p * (1.0 - p) / trials as f64).sqrt());
    }

    #[test]
    fn star_edge_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut j = InteractionMatrix::zeros(4).unwrap();
        j.set(1, 3, 0.1);
        j.set(0, 2, 0.3);
        let trials = 100_000;
        let mut hits = 0;
        for _ in 0..trials {
            let s = star_sample(1, &j, &mut rng);
            assert!(s.edges().iter().all(|&(a, b)| a == 1 || b == 1));
            hits += s.contains_edge(1, 3) as usize;
        }
        let want = 1.0 - (-0.4f64).exp();
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - want).abs() < 3.0 * se);
    }

    #[test]
    fn weights_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = InteractionMatrix::random(6, 0.8, &mut rng).unwrap();
        let gw = GraphWeights::new(&j);
        for x in 0..6 {
            for y in 0..6 {
                assert!(gw.p(x, y) >= 0.0 && gw.p(x, y) < 1.0);
                assert!(gw.p(x, y) <= 4.0 * j.get(x, y).abs() + 1e-15);
                assert!(gw.lambda(x, y) >= 0.0);
            }
            assert!(gw.rho(x) <= gw.rho_0() + 1e-15);
        }
        assert!(gw.rho_0() <= 4.0 * crate::ising::dobrushin_norm(&j) + 1e-12);
    }

    #[test]
    fn ht_examples() {
        let j = InteractionMatrix::uniform(3, 0.4).unwrap();
        let d = ht_graph_distribution(SpinConfig(0b101), SpinConfig(0b101), &j).unwrap();
        assert!((d.probs[0] - 1.0).abs() < 1e-15);

        // n = 2, σ = ++, σ′ = −−: two graphs. φ = 2β, δ(+) = e^{4β} − 1, δ(−) = 0.
        let b: f64 = 0.3;
        let j = InteractionMatrix::uniform(2, b).unwrap();
        let d = ht_graph_distribution(SpinConfig(0b11), SpinConfig(0), &j).unwrap();
        let w_edge = 2.0 * ((4.0 * b).exp() - 1.0);
        let want = w_edge / (4.0 + w_edge);
        assert!((d.probs[1] - want).abs() < 1e-15);
    }

    #[test]
    fn component_measure_single_edge() {
        let b: f64 = 0.25;
        let j = InteractionMatrix::uniform(2, b).unwrap();
        // σ = ++, σ′ = −−: φ = 2b > 0, only aligned patterns carry weight e^{4b} − 1.
        let v = component_measure(&g(2, &[(0, 1)]), SpinConfig(0b11), SpinConfig(0), &j).unwrap();
        assert!((v.prob(0b00) - 0.5).abs() < 1e-15 && (v.prob(0b11) - 0.5).abs() < 1e-15);
        assert_eq!(v.prob(0b01), 0.0);
        // σ = +−, σ′ = −+: φ = −2b, only anti-aligned patterns.
        let v =
            component_measure(&g(2, &[(0, 1)]), SpinConfig(0b01), SpinConfig(0b10), &j).unwrap();
        assert!((v.prob(0b01) - 0.5).abs() < 1e-15 && (v.prob(0b10) - 0.5).abs() < 1e-15);
        // σ = σ′: all δ vanish.
        assert!(component_measure(&g(2, &[(0, 1)]), SpinConfig(1), SpinConfig(1), &j).is_err());
        assert!(component_measure(
            &g(3, &[(0, 1)]),
            SpinConfig(1),
            SpinConfig(6),
            &InteractionMatrix::zeros(3).unwrap()
        )
        .is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let j0 = InteractionMatrix::zeros(3).unwrap();
        let r = reconstruct_gamma(SpinConfig(0b011), SpinConfig(0b100), &j0).unwrap();
        assert!(r.probs().iter().all(|p| (p - 0.125).abs() < 1e-15));
        let j = InteractionMatrix::uniform(3, 0.3).unwrap();
        let r = reconstruct_gamma(SpinConfig(0b011), SpinConfig(0b011), &j).unwrap();
        assert!(r.probs().iter().all(|p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn coupled_chain_zero_coupling_stays_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let j = InteractionMatrix::zeros(4).unwrap();
        let mut chain = CoupledChain::new(SpinConfig(0b1010), SpinConfig(0b0110), &j).unwrap();
        let mut s = CoupledMasks { x: 0, y: 0 };
        for _ in 0..1000 {
            s = chain.step_masks(s, &mut rng).unwrap();
            assert_eq!(s, CoupledMasks { x: 0, y: 0 });
        }
        let bad = CoupledState {
            x: g(4, &[(0, 1)]),
            y: LabeledGraph::empty(4),
        };
        assert!(coupled_chain_step(&bad, SpinConfig(0), SpinConfig(1), &j, &mut rng).is_err());
    }

    #[test]
    fn coupled_chain_x_marginal_matches_ht_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let j = InteractionMatrix::random(3, 0.9, &mut rng).unwrap();
        let (s, sp) = (SpinConfig(0b011), SpinConfig(0b100));
        let exact = ht_graph_distribution(s, sp, &j).unwrap();
        let mut chain = CoupledChain::new(s, sp, &j).unwrap();
        let mut st = CoupledMasks { x: 0, y: 0 };
        let steps = 400_000;
        let mut counts = [0.0; 8];
        for _ in 0..steps {
            st = chain.step_masks(st, &mut rng).unwrap();
            counts[st.x as usize] += 1.0 / steps as f64;
        }
        for (c, p) in counts.iter().zip(&exact.probs) {
            assert!((c - p).abs() < 0.01, "{c} vs {p}");
        }
    }

    /// P(|C_x| ≥ ℓ) with C_x the component of x (size 1 when isolated).
    fn tail(sizes: &[f64], l: usize) -> f64 {
        sizes[l.min(sizes.len())..].iter().sum()
    }

    #[test]
    fn ht_component_sizes_dominated_by_er() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let trials = 50_000;
        for n in 2..=4 {
            let j = InteractionMatrix::random(n, 0.6, &mut rng).unwrap();
            let m = full_mask(n);
            let (s, sp) = (
                SpinConfig(rng.random::<u64>() & m),
                SpinConfig(rng.random::<u64>() & m),
            );
            let d = ht_graph_distribution(s, sp, &j).unwrap();
            let mut ht_sizes = vec![0.0; n + 1];
            for (mask, p) in d.probs.iter().enumerate() {
                let c = closure(&d.graph(mask as u64), SiteSet::singleton(0))
                    .len()
                    .max(1);
                ht_sizes[c] += p;
            }
            let gw = GraphWeights::new(&j);
            let mut er_sizes = vec![0.0; n + 1];
            for _ in 0..trials {
                let c = closure(&gw.er_sample(&mut rng), SiteSet::singleton(0))
                    .len()
                    .max(1);
                er_sizes[c] += 1.0 / trials as f64;
            }
            for l in 2..=n {
                let pe = tail(&er_sizes, l);
                let se = (pe * (1.0 - pe) / trials as f64).sqrt();
                assert!(tail(&ht_sizes, l) <= pe + 3.0 * se + 1e-12, "n={n} l={l}");
            }
        }
    }

    #[test]
    fn component_sampler_matches_closure_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let j = InteractionMatrix::uniform(4, 0.15).unwrap();
        let gw = GraphWeights::new(&j);
        let trials = 100_000;
        let mut a = [0.0; 16];
        let mut b = [0.0; 16];
        for _ in 0..trials {
            a[gw.component_of(1, &mut rng).0 as usize] += 1.0 / trials as f64;
            b[closure(&gw.er_sample(&mut rng), SiteSet::singleton(1)).0 as usize] +=
                1.0 / trials as f64;
        }
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 0.006);
        }
    }

    fn arb_case(
        max_n: usize,
    ) -> impl Strategy<Value = (InteractionMatrix, SpinConfig, SpinConfig)> {
        (2..=max_n, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let norm = rng.random_range(0.0..0.6);
            let j = InteractionMatrix::random(n, norm, &mut rng).unwrap();
            let m = full_mask(n);
            (
                j,
                SpinConfig(rng.random::<u64>() & m),
                SpinConfig(rng.random::<u64>() & m),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn reconstruction_matches_gamma((j, s, sp) in arb_case(4)) {
            let r = reconstruct_gamma(s, sp, &j).unwrap();
            let g = gamma_distribution(s, sp, &j).unwrap();
            for (a, b) in r.probs().iter().zip(g.probs()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn weights_nonnegative_and_factorize((j, s, sp) in arb_case(4)) {
            let d = ht_graph_distribution(s, sp, &j).unwrap();
            let ht = &d.expansion;
            let total: f64 = (0..d.probs.len() as u64).map(|m| ht.weight_direct(m)).sum();
            for (mask, p) in d.probs.iter().enumerate() {
                let w = ht.weight(&d.graph(mask as u64));
                prop_assert!(w >= 0.0);
                prop_assert!((w - ht.weight_direct(mask as u64)).abs() <= 1e-12 * total);
                prop_assert!((p - w / total).abs() < 1e-12);
            }
        }

        #[test]
        fn coupled_chain_is_monotone((j, s, sp) in arb_case(5), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chain = CoupledChain::new(s, sp, &j).unwrap();
            let mut st = CoupledMasks { x: 0, y: 0 };
            for _ in 0..500 {
                st = chain.step_masks(st, &mut rng).unwrap();
                prop_assert_eq!(st.x & !st.y, 0);
            }
        }

        #[test]
        fn closure_is_union_of_components(n in 2usize..8, edges in proptest::collection::vec((0usize..8, 0usize..8), 0..10), a in any::<u64>()) {
            let es: Vec<(usize, usize)> = edges.into_iter().map(|(x, y)| (x % n, y % n)).filter(|(x, y)| x != y).collect();
            let gr = LabeledGraph::from_edges(n, es).unwrap();
            let a = SiteSet(a & full_mask(n));
            let c = closure(&gr, a);
            prop_assert!(a.intersection(gr.vertices()).is_subset(c));
            for comp in gr.components() {
                prop_assert!(comp.is_subset(c) || comp.intersection(c).is_empty());
            }
        }
    }
}
