//! Depth-truncated Galton–Watson trees, truncated weights and branching-measure masses.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgf::{OffspringLaw, POPULATION_LIMIT};

pub const DEFAULT_NODE_CAP: u64 = 100_000_000;

/// A word i = (i_1, …, i_k) of child indices; the empty word is the root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct NodeAddress(pub Vec<u32>);

impl NodeAddress {
    pub fn root() -> Self {
        NodeAddress(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, i: u32) -> Self {
        let mut p = self.0.clone();
        p.push(i);
        NodeAddress(p)
    }

    /// True if `self` is an ancestor of (or equal to) `other`.
    pub fn is_prefix_of(&self, other: &NodeAddress) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

impl FromStr for NodeAddress {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "/" || t.is_empty() {
            return Ok(NodeAddress::root());
        }
        t.trim_start_matches('/')
            .split('/')
            .map(|x| {
                x.parse::<u32>()
                    .map_err(|_| Error::Config(format!("bad node address {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(NodeAddress)
    }
}

/// Position of a node in the arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId {
    pub depth: usize,
    pub index: u64,
}

/// A tree realized to depth n, stored level by level in breadth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTree {
    depth: usize,
    mean: f64,
    seed: u64,
    /// offspring[k][i] for levels k < depth
    offspring: Vec<Vec<u32>>,
    /// first_child[k][i], index into level k+1
    first_child: Vec<Vec<u64>>,
    /// parent[k][i] for levels k ≥ 1
    parent: Vec<Vec<u64>>,
    /// number of depth-n descendants
    below: Vec<Vec<u64>>,
    z: Vec<u64>,
}

impl SimTree {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Z_0, …, Z_n.
    pub fn z_counts(&self) -> &[u64] {
        &self.z
    }

    pub fn node_count(&self) -> u64 {
        self.z.iter().sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.z[self.depth] == 0
    }

    pub fn offspring(&self, id: NodeId) -> u32 {
        if id.depth < self.depth {
            self.offspring[id.depth][id.index as usize]
        } else {
            0
        }
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let (start, count) = if id.depth < self.depth {
            (
                self.first_child[id.depth][id.index as usize],
                self.offspring[id.depth][id.index as usize] as u64,
            )
        } else {
            (0, 0)
        };
        (start..start + count).map(move |index| NodeId {
            depth: id.depth + 1,
            index,
        })
    }

    /// Number of depth-n descendants.
    pub fn descendants_at_depth(&self, id: NodeId) -> u64 {
        self.below[id.depth][id.index as usize]
    }

    pub fn resolve(&self, addr: &NodeAddress) -> Option<NodeId> {
        if addr.depth() > self.depth {
            return None;
        }
        let mut id = NodeId { depth: 0, index: 0 };
        for &c in &addr.0 {
            if c >= self.offspring(id) {
                return None;
            }
            id = NodeId {
                depth: id.depth + 1,
                index: self.first_child[id.depth][id.index as usize] + c as u64,
            };
        }
        Some(id)
    }

    pub fn address(&self, id: NodeId) -> NodeAddress {
        let mut path = vec![0u32; id.depth];
        let mut cur = id;
        while cur.depth > 0 {
            let p = self.parent[cur.depth][cur.index as usize];
            let first = self.first_child[cur.depth - 1][p as usize];
            path[cur.depth - 1] = (cur.index - first) as u32;
            cur = NodeId {
                depth: cur.depth - 1,
                index: p,
            };
        }
        NodeAddress(path)
    }

    /// W_i^{(n)} = (depth-n descendants of i)/a^{n−|i|}.
    pub fn weight(&self, id: NodeId) -> f64 {
        self.descendants_at_depth(id) as f64 / self.mean.powi((self.depth - id.depth) as i32)
    }

    /// μ(B_i) = a^{−|i|}·W_i^{(n)}.
    pub fn mass(&self, id: NodeId) -> f64 {
        self.mean.powi(-(id.depth as i32)) * self.weight(id)
    }

    /// Writes one line per internal node: address and offspring count, breadth first.
    pub fn export_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# depth {} mean {} seed {}", self.depth, self.mean, self.seed)?;
        for k in 0..self.depth {
            for i in 0..self.z[k] {
                let id = NodeId { depth: k, index: i };
                writeln!(out, "{} {}", self.address(id), self.offspring(id))?;
            }
        }
        Ok(())
    }
}

/// Grows a tree with offspring counts drawn breadth first in child-index order.
pub fn grow_tree<R: Rng + ?Sized>(
    law: &OffspringLaw,
    depth: usize,
    rng: &mut R,
    node_cap: u64,
    seed: u64,
) -> Result<SimTree> {
    if depth < 1 {
        return Err(Error::domain("depth", depth as f64, "must be at least 1"));
    }
    let mut offspring = Vec::with_capacity(depth);
    let mut first_child = Vec::with_capacity(depth);
    let mut parent = vec![Vec::new()];
    let mut z = vec![1u64];
    let mut total = 1u64;
    for k in 0..depth {
        let zk = z[k] as usize;
        let mut counts = Vec::with_capacity(zk);
        let mut firsts = Vec::with_capacity(zk);
        let mut next = 0u64;
        for _ in 0..zk {
            let n = law.sample(rng);
            firsts.push(next);
            next = next.saturating_add(n);
            if n > u32::MAX as u64 || total.saturating_add(next) > node_cap {
                return Err(Error::MemoryBudgetExceeded {
                    requested: total.saturating_add(next),
                    cap: node_cap,
                });
            }
            counts.push(n as u32);
        }
        let mut par = Vec::with_capacity(next as usize);
        for (i, &c) in counts.iter().enumerate() {
            par.extend(std::iter::repeat_n(i as u64, c as usize));
        }
        total += next;
        z.push(next);
        offspring.push(counts);
        first_child.push(firsts);
        parent.push(par);
    }
    let mut below: Vec<Vec<u64>> = vec![Vec::new(); depth + 1];
    below[depth] = vec![1; z[depth] as usize];
    for k in (0..depth).rev() {
        let lvl: Vec<u64> = (0..z[k] as usize)
            .map(|i| {
                let s = first_child[k][i] as usize;
                let c = offspring[k][i] as usize;
                below[k + 1][s..s + c].iter().sum()
            })
            .collect();
        below[k] = lvl;
    }
    Ok(SimTree {
        depth,
        mean: law.mean(),
        seed,
        offspring,
        first_child,
        parent,
        below,
        z,
    })
}

/// Full tree realization, deterministic in `seed`.
pub fn simulate_tree(law: &OffspringLaw, depth: usize, seed: u64) -> Result<SimTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grow_tree(law, depth, &mut rng, DEFAULT_NODE_CAP, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationMode {
    /// One draw per individual, in the same order as the full tree.
    #[default]
    PerNode,
    /// Generation totals drawn directly, exact in law.
    Aggregated,
}

/// Z_0..Z_depth starting from `z0` individuals.
pub fn population_from<R: Rng + ?Sized>(
    law: &OffspringLaw,
    depth: usize,
    z0: u64,
    rng: &mut R,
    mode: PopulationMode,
) -> Result<Vec<u64>> {
    let mut z = Vec::with_capacity(depth + 1);
    z.push(z0);
    let mut cur = z0;
    for generation in 0..depth {
        cur = match mode {
            PopulationMode::PerNode => {
                let mut t: u64 = 0;
                for _ in 0..cur {
                    t = t.saturating_add(law.sample(rng));
                }
                t
            }
            PopulationMode::Aggregated => law.offspring_sum(rng, cur).map_err(|e| match e {
                Error::PopulationOverflow { .. } => Error::PopulationOverflow {
                    generation: generation + 1,
                },
                other => other,
            })?,
        };
        if cur >= POPULATION_LIMIT {
            return Err(Error::PopulationOverflow {
                generation: generation + 1,
            });
        }
        z.push(cur);
    }
    Ok(z)
}

/// Z_0..Z_depth without storing the tree; same draws as `simulate_tree`.
pub fn simulate_population(law: &OffspringLaw, depth: usize, seed: u64) -> Result<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    population_from(law, depth, 1, &mut rng, PopulationMode::PerNode)
}

/// W_i^{(n)} of an existing node.
pub fn truncated_weight(tree: &SimTree, node: &NodeAddress) -> Result<f64> {
    tree.resolve(node)
        .map(|id| tree.weight(id))
        .ok_or_else(|| Error::NoSuchNode(node.to_string()))
}

/// μ(B_i); zero when i is not in the tree.
pub fn mu_ball(tree: &SimTree, node: &NodeAddress) -> f64 {
    tree.resolve(node).map(|id| tree.mass(id)).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
}

/// Checks a^{−|i|}W_i = Σ_{j∈Γ} a^{−|j|}W_j for a cutset Γ of the live boundary below i.
pub fn cutset_conservation_check(
    tree: &SimTree,
    root: &NodeAddress,
    cutset: &[NodeAddress],
) -> Result<Conservation> {
    let rid = tree
        .resolve(root)
        .ok_or_else(|| Error::NoSuchNode(root.to_string()))?;
    let mut members = cutset.to_vec();
    members.sort();
    for w in members.windows(2) {
        if w[0].is_prefix_of(&w[1]) {
            return Err(Error::NotACutset(format!("{} and {} are comparable", w[0], w[1])));
        }
    }
    let mut covered = 0u64;
    // Neumaier summation keeps the error at a few ulps for large cutsets
    let (mut rhs, mut comp) = (0.0f64, 0.0f64);
    for m in &members {
        if !root.is_prefix_of(m) {
            return Err(Error::NotACutset(format!("{m} is not below {root}")));
        }
        let id = tree
            .resolve(m)
            .ok_or_else(|| Error::NotACutset(format!("{m} is not in the tree")))?;
        let d = tree.descendants_at_depth(id);
        if d == 0 {
            return Err(Error::NotACutset(format!("{m} has no live descendants")));
        }
        covered += d;
        let x = tree.mass(id);
        let t = rhs + x;
        comp += if rhs.abs() >= x.abs() { (rhs - t) + x } else { (x - t) + rhs };
        rhs = t;
    }
    if covered != tree.descendants_at_depth(rid) {
        return Err(Error::NotACutset(format!(
            "covers {covered} of {} live depth-{} descendants",
            tree.descendants_at_depth(rid),
            tree.depth()
        )));
    }
    let rhs = rhs + comp;
    let lhs = tree.mass(rid);
    Ok(Conservation {
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
    })
}

/// Random cutset of the live boundary below `root`: each live node is kept
/// with probability `stop_prob`, otherwise replaced by its live children.
pub fn random_cutset<R: Rng + ?Sized>(
    tree: &SimTree,
    root: &NodeAddress,
    rng: &mut R,
    stop_prob: f64,
) -> Vec<NodeAddress> {
    let mut out = Vec::new();
    let Some(rid) = tree.resolve(root) else {
        return out;
    };
    if tree.descendants_at_depth(rid) == 0 {
        return out;
    }
    let mut stack = vec![(rid, root.clone())];
    while let Some((id, addr)) = stack.pop() {
        let stop = id.depth == tree.depth() || (id != rid && rng.random::<f64>() < stop_prob);
        if stop {
            out.push(addr);
            continue;
        }
        for (c, child) in tree.children(id).enumerate() {
            if tree.descendants_at_depth(child) > 0 {
                stack.push((child, addr.child(c as u32)));
            }
        }
    }
    out
}

/// All live nodes at a fixed depth m ≤ n below the root.
pub fn level_cutset(tree: &SimTree, m: usize) -> Vec<NodeAddress> {
    (0..tree.z_counts()[m])
        .map(|index| NodeId { depth: m, index })
        .filter(|&id| tree.descendants_at_depth(id) > 0)
        .map(|id| tree.address(id))
        .collect()
}

/// z_counts as CSV with header `generation,z`.
pub fn z_counts_csv(z: &[u64]) -> String {
    let mut s = String::from("generation,z\n");
    for (k, v) in z.iter().enumerate() {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> OffspringLaw {
        OffspringLaw::geometric_shifted(5.0, 1).unwrap()
    }

    #[test]
    fn deterministic_replay() {
        let a = simulate_tree(&geom(), 3, 11).unwrap();
        let b = simulate_tree(&geom(), 3, 11).unwrap();
        assert_eq!(a, b);
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        a.export_text(&mut ta).unwrap();
        b.export_text(&mut tb).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn population_matches_tree() {
        let law = OffspringLaw::explicit(vec![0.25, 0.25, 0.5]).unwrap();
        for seed in 0..20 {
            let t = simulate_tree(&law, 8, seed).unwrap();
            let z = simulate_population(&law, 8, seed).unwrap();
            assert_eq!(t.z_counts(), &z[..]);
        }
    }

    #[test]
    fn weights_and_masses() {
        let t = simulate_tree(&geom(), 4, 2).unwrap();
        let root = NodeAddress::root();
        let w = truncated_weight(&t, &root).unwrap();
        assert_eq!(w, t.z_counts()[4] as f64 / 625.0);
        assert_eq!(mu_ball(&t, &root), w);
        // leaf at depth n has weight 1
        let leaf = t.address(NodeId { depth: 4, index: 0 });
        assert_eq!(truncated_weight(&t, &leaf).unwrap(), 1.0);
        // recursion and additivity
        for k in 0..4 {
            for i in 0..t.z_counts()[k] {
                let id = NodeId { depth: k, index: i };
                let s: f64 = t.children(id).map(|c| t.weight(c)).sum();
                assert!((t.weight(id) - s / 5.0).abs() <= 1e-12 * t.weight(id).max(1.0));
                let m: f64 = t.children(id).map(|c| t.mass(c)).sum();
                assert!((t.mass(id) - m).abs() <= 1e-12);
            }
        }
        let absent = NodeAddress(vec![10_000]);
        assert_eq!(mu_ball(&t, &absent), 0.0);
        assert!(matches!(truncated_weight(&t, &absent), Err(Error::NoSuchNode(_))));
    }

    #[test]
    fn address_round_trip() {
        let t = simulate_tree(&geom(), 3, 5).unwrap();
        for k in 0..=3 {
            for i in 0..t.z_counts()[k] {
                let id = NodeId { depth: k, index: i };
                let a = t.address(id);
                assert_eq!(t.resolve(&a), Some(id));
                assert_eq!(a.to_string().parse::<NodeAddress>().unwrap(), a);
            }
        }
    }

    #[test]
    fn cutsets() {
        let t = simulate_tree(&geom(), 5, 9).unwrap();
        let root = NodeAddress::root();
        for m in 1..5 {
            let c = cutset_conservation_check(&t, &root, &level_cutset(&t, m)).unwrap();
            assert!(c.abs_err <= 1e-12 * c.lhs.max(1.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let cs = random_cutset(&t, &root, &mut rng, 0.4);
            let c = cutset_conservation_check(&t, &root, &cs).unwrap();
            assert!(c.abs_err <= 1e-12 * c.lhs.max(1.0));
        }
        let bad = vec![NodeAddress(vec![0]), NodeAddress(vec![0, 0])];
        assert!(matches!(
            cutset_conservation_check(&t, &root, &bad),
            Err(Error::NotACutset(_))
        ));
        let partial = vec![NodeAddress(vec![0])];
        if t.offspring(NodeId { depth: 0, index: 0 }) > 1 {
            assert!(cutset_conservation_check(&t, &root, &partial).is_err());
        }
    }

    #[test]
    fn node_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = grow_tree(&geom(), 12, &mut rng, 1000, 0);
        assert!(matches!(r, Err(Error::MemoryBudgetExceeded { .. })));
    }

    #[test]
    fn depth_zero_population() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = population_from(&geom(), 0, 1, &mut rng, PopulationMode::Aggregated).unwrap();
        assert_eq!(z, vec![1]);
    }
}
