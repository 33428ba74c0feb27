/// Size limits for exhaustive and Monte Carlo work. Exceeding one is an error, never a silent truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Caps {
    pub exact: usize,
    pub exchange: usize,
    pub dense_block: usize,
    pub dense_glauber: usize,
    pub tree_depth: usize,
    pub fragments: usize,
    pub work: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            exact: 20,
            exchange: 20,
            dense_block: 10,
            dense_glauber: 12,
            tree_depth: 24,
            fragments: 1_000_000,
            work: 10_000_000,
        }
    }
}
