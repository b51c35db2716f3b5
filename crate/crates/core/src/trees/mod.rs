//! Random branching trees.
//!
//! A tree is grown in two passes. The first draws the genealogy: for every
//! node whether it splits, when, and into how many children. The second
//! moves a diffusion path along every edge. Branching never depends on
//! positions, so the first pass alone gives the tree law, and the estimator
//! can skip the second pass for trees it will discard.
//!
//! Strategy A splits after an `Exp(1)` time if that falls inside the node's
//! horizon. Strategy B makes the node a leaf with probability `q`, otherwise
//! splits after a uniform fraction `S` of the horizon.

mod combinatorics;

pub use combinatorics::{
    count_diagrams, count_diagrams_binary, estimate_tb, mean_branches, tree_probability,
};

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::problem::{Point, Problem};
use crate::rng::RngStream;
use crate::sde::{PathSimulator, PathState};

pub const DEFAULT_NODE_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Exponential split times after the substitution `u = v e^t`.
    A,
    /// Leaf with probability `q`, uniform split fraction otherwise.
    B { q: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::A => "A",
            Strategy::B { .. } => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex,
    Leaf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub parent: Option<u32>,
    /// Position among the parent's children.
    pub child_index: u8,
    pub kind: NodeKind,
    /// Number of children (vertices only).
    pub child_count: u8,
    /// Index of the first child; children are stored contiguously.
    pub first_child: u32,
    /// Index into the problem's term list (vertices only).
    pub term: u8,
    /// PDE time carried by the node when it is created.
    pub horizon: f64,
    /// Time from creation to split (vertices only).
    pub split_elapsed: f64,
    /// Strategy-B split fraction `S`.
    pub split_fraction: f64,
    /// Split position for vertices, terminal position for leaves.
    pub position_at_event: Point,
}

impl TreeNode {
    fn new(parent: Option<u32>, child_index: u8, horizon: f64) -> Self {
        Self {
            parent,
            child_index,
            kind: NodeKind::Leaf,
            child_count: 0,
            first_child: 0,
            term: 0,
            horizon,
            split_elapsed: 0.0,
            split_fraction: 0.0,
            position_at_event: [0.0; 2],
        }
    }

    /// PDE time handed to the node's children.
    pub fn child_horizon(&self) -> f64 {
        self.horizon - self.split_elapsed
    }
}

/// Ancestry path: the child index taken at every generation below the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Label(pub Vec<u8>);

impl Label {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses a digit string such as `"010"`.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad label digit '{c}'")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// 1 when truncating `j` to the length of `l` gives `l`, i.e. `l` is an
/// ancestor of (or equal to) `j`.
pub fn ancestor_match(j: &Label, l: &Label) -> u8 {
    u8::from(l.len() <= j.len() && j.0[..l.len()] == l.0[..])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomTree {
    pub nodes: Vec<TreeNode>,
    /// Leaf count.
    pub k: usize,
    /// Splitting-event count.
    pub ne: usize,
    pub strategy: Strategy,
    /// Root PDE time.
    pub t: f64,
    /// Set when some path left the absorbing box.
    pub absorbed: bool,
    /// Set once the path pass has run.
    pub has_paths: bool,
}

impl RandomTree {
    pub fn empty(strategy: Strategy) -> Self {
        Self {
            nodes: Vec::new(),
            k: 0,
            ne: 0,
            strategy,
            t: 0.0,
            absorbed: false,
            has_paths: false,
        }
    }

    pub fn label(&self, idx: usize) -> Label {
        let mut digits = Vec::new();
        let mut cur = idx;
        while let Some(p) = self.nodes[cur].parent {
            digits.push(self.nodes[cur].child_index);
            cur = p as usize;
        }
        digits.reverse();
        Label(digits)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Vertex)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Leaf)
    }

    /// Number of vertices splitting into `children` branches.
    pub fn vertices_with_children(&self, children: u8) -> usize {
        self.vertices().filter(|n| n.child_count == children).count()
    }

    /// Strategy B: `t · Π (1 - S_a)` over the strict ancestors of `idx`.
    pub fn node_horizon(&self, idx: usize) -> f64 {
        let mut h = self.t;
        let mut cur = self.nodes[idx].parent;
        while let Some(p) = cur {
            let node = &self.nodes[p as usize];
            h *= 1.0 - node.split_fraction;
            cur = node.parent;
        }
        h
    }
}

/// Grows trees for one problem and strategy.
#[derive(Debug, Clone)]
pub struct TreeSampler<'a> {
    sim: PathSimulator<'a>,
    strategy: Strategy,
    powers: Vec<u8>,
    node_cap: usize,
}

impl<'a> TreeSampler<'a> {
    pub fn new(sim: PathSimulator<'a>, strategy: Strategy) -> Result<Self> {
        let problem = sim.problem();
        problem.check()?;
        if let Strategy::B { q } = strategy {
            let range = problem.admissible_q_range();
            if !range.contains(q) {
                return Err(Error::InadmissibleQ { q, q_min: range.min });
            }
        }
        let powers = problem.terms.iter().map(|t| t.power as u8).collect();
        Ok(Self {
            sim,
            strategy,
            powers,
            node_cap: DEFAULT_NODE_CAP,
        })
    }

    pub fn with_node_cap(mut self, cap: usize) -> Self {
        self.node_cap = cap;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn simulator(&self) -> &PathSimulator<'a> {
        &self.sim
    }

    /// First pass: genealogy, split times and horizons.
    pub fn sample_topology(&self, t: f64, rng: &mut RngStream, tree: &mut RandomTree) -> Result<()> {
        self.sample_topology_until(t, None, rng, tree).map(|_| ())
    }

    /// As [`sample_topology`](Self::sample_topology), but stops as soon as the
    /// tree has more than `max_ne` splitting events and returns `false`; the
    /// partial tree is then only good for counting.
    pub fn sample_topology_until(
        &self,
        t: f64,
        max_ne: Option<usize>,
        rng: &mut RngStream,
        tree: &mut RandomTree,
    ) -> Result<bool> {
        tree.nodes.clear();
        tree.strategy = self.strategy;
        tree.t = t;
        tree.k = 0;
        tree.ne = 0;
        tree.absorbed = false;
        tree.has_paths = false;
        tree.nodes.push(TreeNode::new(None, 0, t));
        let n_terms = self.powers.len();
        let mut i = 0;
        while i < tree.nodes.len() {
            let tau = tree.nodes[i].horizon;
            let split = match self.strategy {
                Strategy::A => {
                    let e = rng.exponential();
                    (e <= tau).then_some((e, 0.0))
                }
                Strategy::B { q } => {
                    if rng.uniform() < q {
                        None
                    } else {
                        let s = rng.uniform();
                        Some((tau * s, s))
                    }
                }
            };
            if let Some((elapsed, fraction)) = split {
                let term = if n_terms == 1 { 0 } else { rng.below(n_terms) };
                let alpha = self.powers[term];
                let first = tree.nodes.len();
                if first + alpha as usize > self.node_cap {
                    return Err(Error::TreeTooLarge { cap: self.node_cap });
                }
                let child_horizon = tau - elapsed;
                for c in 0..alpha {
                    tree.nodes.push(TreeNode::new(Some(i as u32), c, child_horizon));
                }
                let node = &mut tree.nodes[i];
                node.kind = NodeKind::Vertex;
                node.child_count = alpha;
                node.first_child = first as u32;
                node.term = term as u8;
                node.split_elapsed = elapsed;
                node.split_fraction = fraction;
                tree.ne += 1;
                if max_ne.is_some_and(|cap| tree.ne > cap) {
                    return Ok(false);
                }
            } else {
                tree.k += 1;
            }
            i += 1;
        }
        Ok(true)
    }

    /// Second pass: moves a path along every edge from `x0`. Stops at the
    /// first absorbed path.
    pub fn simulate_paths(&self, x0: Point, tree: &mut RandomTree, rng: &mut RngStream) {
        tree.has_paths = true;
        for i in 0..tree.nodes.len() {
            let node = tree.nodes[i];
            let start = match node.parent {
                Some(p) => tree.nodes[p as usize].position_at_event,
                None => x0,
            };
            let duration = match node.kind {
                NodeKind::Vertex => node.split_elapsed,
                NodeKind::Leaf => node.horizon,
            };
            let mut state = PathState::new(start, node.horizon);
            let alive = self.sim.advance(&mut state, duration, rng);
            tree.nodes[i].position_at_event = state.position;
            if !alive {
                tree.absorbed = true;
                return;
            }
        }
    }

    pub fn sample(&self, x0: Point, t: f64, rng: &mut RngStream) -> Result<RandomTree> {
        let mut tree = RandomTree::empty(self.strategy);
        self.sample_topology(t, rng, &mut tree)?;
        self.simulate_paths(x0, &mut tree, rng);
        Ok(tree)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tree time must be positive, got {t}")))
    }
}

/// Strategy-A tree rooted at `(x0, t)`.
pub fn sample_tree_a(
    problem: &Problem,
    x0: Point,
    t: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<RandomTree> {
    check_time(t)?;
    TreeSampler::new(PathSimulator::new(problem, dt)?, Strategy::A)?.sample(x0, t, rng)
}

/// Strategy-B tree rooted at `(x0, t)` with leaf probability `q`.
pub fn sample_tree_b(
    problem: &Problem,
    x0: Point,
    t: f64,
    q: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<RandomTree> {
    check_time(t)?;
    TreeSampler::new(PathSimulator::new(problem, dt)?, Strategy::B { q })?.sample(x0, t, rng)
}

/// Histogram of `n_a - n_b` over strategy-B genealogies, where `n_a`, `n_b`
/// count vertices of the problem's first two powers. `condition_k`
/// restricts to trees with that many leaves.
pub fn children_balance_histogram(
    problem: &Problem,
    t: f64,
    q: f64,
    n: usize,
    condition_k: Option<usize>,
    rng: &mut RngStream,
) -> Result<BTreeMap<i64, u64>> {
    check_time(t)?;
    if problem.n_terms() < 2 {
        return Err(Error::InvalidArgument(
            "children balance needs at least two nonlinear terms".into(),
        ));
    }
    let sampler = TreeSampler::new(PathSimulator::new(problem, t)?, Strategy::B { q })?;
    let (pa, pb) = (problem.terms[0].power as u8, problem.terms[1].power as u8);
    let mut hist = BTreeMap::new();
    let mut tree = RandomTree::empty(Strategy::B { q });
    for _ in 0..n {
        match sampler.sample_topology(t, rng, &mut tree) {
            Ok(()) => {}
            Err(Error::TreeTooLarge { .. }) => continue,
            Err(e) => return Err(e),
        }
        if condition_k.is_some_and(|k| k != tree.k) {
            continue;
        }
        let diff =
            tree.vertices_with_children(pa) as i64 - tree.vertices_with_children(pb) as i64;
        *hist.entry(diff).or_insert(0) += 1;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BuiltinProblem, Coefficient, InitialData};

    fn quadratic() -> Problem {
        BuiltinProblem::Ex1.problem()
    }

    #[test]
    fn ancestor_truncation() {
        let j = Label::parse("010").unwrap();
        assert_eq!(ancestor_match(&j, &Label::parse("01").unwrap()), 1);
        assert_eq!(ancestor_match(&j, &Label::parse("00").unwrap()), 0);
        assert_eq!(ancestor_match(&j, &j), 1);
        assert_eq!(ancestor_match(&Label::parse("0").unwrap(), &j), 0);
        assert_eq!(ancestor_match(&j, &Label::default()), 1);
    }

    #[test]
    fn leaf_only_tree_when_root_does_not_split() {
        let p = quadratic();
        // Find a seed whose first strategy-B draw is a leaf; the root then
        // carries the whole horizon.
        for seed in 0..50 {
            let mut rng = RngStream::new(seed, 0);
            let first = RngStream::new(seed, 0).uniform();
            let tree = sample_tree_b(&p, [0.0; 2], 1.0, 0.5, 0.1, &mut rng).unwrap();
            if first < 0.5 {
                assert_eq!((tree.k, tree.ne), (1, 0));
                assert_eq!(tree.nodes[0].kind, NodeKind::Leaf);
                return;
            }
        }
        panic!("no leaf-only seed found");
    }

    #[test]
    fn strategy_a_no_split_when_exponential_exceeds_horizon() {
        let p = quadratic();
        for seed in 0..50 {
            let e = RngStream::new(seed, 0).exponential();
            let mut rng = RngStream::new(seed, 0);
            let tree = sample_tree_a(&p, [0.0; 2], 0.2, 0.05, &mut rng).unwrap();
            if e > 0.2 {
                assert_eq!((tree.k, tree.ne), (1, 0));
            } else {
                assert!(tree.ne >= 1);
            }
        }
    }

    #[test]
    fn leaf_count_identity_holds() {
        let p = BuiltinProblem::ex3().problem();
        let sampler = TreeSampler::new(PathSimulator::new(&p, 0.1).unwrap(), Strategy::B { q: 0.7 })
            .unwrap();
        let mut rng = RngStream::new(11, 0);
        for _ in 0..2000 {
            let tree = sampler.sample([0.0; 2], 1.0, &mut rng).unwrap();
            let extra: usize = tree.vertices().map(|n| n.child_count as usize - 1).sum();
            assert_eq!(tree.k, 1 + extra);
            assert_eq!(tree.ne, tree.vertices().count());
            assert_eq!(tree.k, tree.leaves().count());
        }
    }

    #[test]
    fn single_power_relation() {
        let p = Problem::new(1, InitialData::Constant(1.0)).with_term(3, Coefficient::Constant(1.0));
        let mut rng = RngStream::new(2, 0);
        for _ in 0..500 {
            let tree = sample_tree_b(&p, [0.0; 2], 1.0, 0.8, 0.5, &mut rng).unwrap();
            assert_eq!(tree.k, 2 * tree.ne + 1);
        }
    }

    #[test]
    fn labels_extend_parent() {
        let p = quadratic();
        let mut rng = RngStream::new(4, 0);
        let sampler =
            TreeSampler::new(PathSimulator::new(&p, 0.1).unwrap(), Strategy::B { q: 0.7 }).unwrap();
        let mut tree = RandomTree::empty(Strategy::B { q: 0.7 });
        for _ in 0..200 {
            sampler.sample_topology(1.0, &mut rng, &mut tree).unwrap();
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Some(parent) = node.parent {
                    let mine = tree.label(i);
                    let theirs = tree.label(parent as usize);
                    assert_eq!(mine.len(), theirs.len() + 1);
                    assert_eq!(ancestor_match(&mine, &theirs), 1);
                }
            }
        }
    }

    #[test]
    fn horizons_follow_split_fractions() {
        let p = quadratic();
        let mut rng = RngStream::new(9, 0);
        let sampler =
            TreeSampler::new(PathSimulator::new(&p, 0.1).unwrap(), Strategy::B { q: 0.7 }).unwrap();
        let mut tree = RandomTree::empty(Strategy::B { q: 0.7 });
        for _ in 0..500 {
            sampler.sample_topology(1.5, &mut rng, &mut tree).unwrap();
            for (i, node) in tree.nodes.iter().enumerate() {
                assert!((tree.node_horizon(i) - node.horizon).abs() < 1e-12);
                if let Some(parent) = node.parent {
                    assert!(node.horizon < tree.nodes[parent as usize].horizon);
                }
                if node.kind == NodeKind::Vertex {
                    assert!(node.split_elapsed < node.horizon);
                }
            }
        }
    }

    #[test]
    fn node_horizon_products() {
        let mut tree = RandomTree::empty(Strategy::B { q: 0.5 });
        tree.t = 1.0;
        let mut root = TreeNode::new(None, 0, 1.0);
        root.kind = NodeKind::Vertex;
        root.split_fraction = 0.5;
        root.split_elapsed = 0.5;
        let mut mid = TreeNode::new(Some(0), 0, 0.5);
        mid.kind = NodeKind::Vertex;
        mid.split_fraction = 0.5;
        mid.split_elapsed = 0.25;
        let leaf = TreeNode::new(Some(1), 0, 0.25);
        tree.nodes = vec![root, mid, leaf];
        assert_eq!(tree.node_horizon(0), 1.0);
        assert_eq!(tree.node_horizon(1), 0.5);
        assert_eq!(tree.node_horizon(2), 0.25);
    }

    #[test]
    fn rejects_inadmissible_q() {
        let p = quadratic();
        let mut rng = RngStream::new(1, 0);
        let err = sample_tree_b(&p, [0.0; 2], 1.0, 0.4, 0.1, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InadmissibleQ { .. }));
        assert!(sample_tree_b(&p, [0.0; 2], 1.0, 1.0, 0.1, &mut rng).is_err());
    }

    #[test]
    fn node_cap_aborts() {
        let p = quadratic();
        let sampler = TreeSampler::new(PathSimulator::new(&p, 0.1).unwrap(), Strategy::B { q: 0.5 })
            .unwrap()
            .with_node_cap(5);
        let mut rng = RngStream::new(1, 0);
        let mut tree = RandomTree::empty(Strategy::B { q: 0.5 });
        let aborted = (0..1000)
            .filter(|_| sampler.sample_topology(1.0, &mut rng, &mut tree).is_err())
            .count();
        assert!(aborted > 0);
    }

    #[test]
    fn balance_of_leaf_only_trees_is_zero() {
        let p = BuiltinProblem::ex3().problem();
        let mut rng = RngStream::new(1, 0);
        let hist = children_balance_histogram(&p, 1.0, 0.6, 2000, Some(1), &mut rng).unwrap();
        assert_eq!(hist.len(), 1);
        assert!(hist.contains_key(&0));
    }
}
