//! Second-order gradient-boosted regression trees for binary logistic loss, on sparse
//! non-negative features.
//!
//! Trees grow level by level with exact greedy splits. Absent features read as 0, so
//! documents missing a feature always fall on the left (`value < threshold`) side.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tfidf::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoosterParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoosterParams {
    fn default() -> Self {
        BoosterParams {
            n_trees: 100,
            learning_rate: 0.3,
            max_depth: 6,
            lambda: 1.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &SparseVector) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature) < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// Column-major view of the training matrix: per feature, `(row, value)` sorted by value.
pub struct Columns {
    cols: Vec<Vec<(u32, f32)>>,
    rows: Vec<SparseVector>,
    n_rows: usize,
}

impl Columns {
    pub fn new(rows: &[SparseVector], n_features: usize) -> Self {
        let mut cols = vec![Vec::new(); n_features];
        for (r, row) in rows.iter().enumerate() {
            for (&f, &v) in row.indices.iter().zip(&row.values) {
                if v != 0.0 {
                    cols[f as usize].push((r as u32, v));
                }
            }
        }
        for col in &mut cols {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        Columns {
            cols,
            rows: rows.to_vec(),
            n_rows: rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base_margin: f64,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f32,
}

#[derive(Clone, Copy, Default)]
struct ScanState {
    nz: Stats,
    left: Stats,
    prev: f32,
    touched: bool,
}

fn score(s: Stats, lambda: f64) -> f64 {
    s.g * s.g / (s.h + lambda)
}

impl Booster {
    pub fn fit(columns: &Columns, labels: &[bool], params: &BoosterParams) -> Self {
        assert_eq!(columns.n_rows, labels.len());
        let n = labels.len();
        let mut margin = vec![0.0f64; n];
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            let mut grad = vec![0.0; n];
            let mut hess = vec![0.0; n];
            for i in 0..n {
                let p = 1.0 / (1.0 + (-margin[i]).exp());
                grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let sampled: Vec<bool> = if params.subsample < 1.0 {
                (0..n).map(|_| rng.random::<f64>() < params.subsample).collect()
            } else {
                vec![true; n]
            };
            let tree = grow_tree(columns, &grad, &hess, &sampled, params);
            for (i, m) in margin.iter_mut().enumerate() {
                *m += tree.predict(&columns.rows[i]);
            }
            trees.push(tree);
        }
        Booster {
            base_margin: 0.0,
            trees,
        }
    }

    pub fn margin(&self, x: &SparseVector) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &SparseVector) -> f64 {
        1.0 / (1.0 + (-self.margin(x)).exp())
    }
}

fn grow_tree(
    columns: &Columns,
    grad: &[f64],
    hess: &[f64],
    sampled: &[bool],
    params: &BoosterParams,
) -> Tree {
    let n = grad.len();
    let lambda = params.lambda;
    let leaf = |s: Stats| TreeNode::Leaf(-s.g / (s.h + lambda) * params.learning_rate);

    // node id per row in the tree under construction; usize::MAX = settled or unsampled
    let mut node_of: Vec<usize> = (0..n).map(|i| if sampled[i] { 0 } else { usize::MAX }).collect();
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf(0.0)];
    let mut root = Stats::default();
    for i in (0..n).filter(|&i| sampled[i]) {
        root.g += grad[i];
        root.h += hess[i];
        root.n += 1;
    }
    // (tree node id, stats) for the frontier
    let mut frontier: Vec<(usize, Stats)> = vec![(0, root)];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        // frontier slot per tree node id
        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (s, (id, _)) in frontier.iter().enumerate() {
            slot_of[*id] = s;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut state = vec![ScanState::default(); frontier.len()];
        let mut touched: Vec<usize> = Vec::new();

        for (f, col) in columns.cols.iter().enumerate() {
            // pass 1: nonzero totals per frontier node
            for &(r, _) in col {
                let nid = node_of[r as usize];
                if nid == usize::MAX || slot_of.get(nid).copied().unwrap_or(usize::MAX) == usize::MAX {
                    continue;
                }
                let s = slot_of[nid];
                let st = &mut state[s];
                if !st.touched {
                    st.touched = true;
                    touched.push(s);
                }
                st.nz.g += grad[r as usize];
                st.nz.h += hess[r as usize];
                st.nz.n += 1;
            }
            for &s in &touched {
                let total = frontier[s].1;
                let st = &mut state[s];
                st.left = Stats {
                    g: total.g - st.nz.g,
                    h: total.h - st.nz.h,
                    n: total.n - st.nz.n,
                };
                st.prev = 0.0;
            }
            // pass 2: ascending scan, zero group starts on the left
            for &(r, v) in col {
                let nid = node_of[r as usize];
                if nid == usize::MAX || slot_of.get(nid).copied().unwrap_or(usize::MAX) == usize::MAX {
                    continue;
                }
                let s = slot_of[nid];
                let total = frontier[s].1;
                let st = &mut state[s];
                if st.left.n > 0 && v > st.prev {
                    let right = Stats {
                        g: total.g - st.left.g,
                        h: total.h - st.left.h,
                        n: total.n - st.left.n,
                    };
                    if st.left.h >= params.min_child_weight && right.h >= params.min_child_weight {
                        let gain = 0.5
                            * (score(st.left, lambda) + score(right, lambda) - score(total, lambda));
                        if gain > 1e-12 && best[s].map_or(true, |b| gain > b.gain) {
                            best[s] = Some(Candidate {
                                gain,
                                feature: f as u32,
                                threshold: 0.5 * (st.prev + v),
                            });
                        }
                    }
                }
                st.left.g += grad[r as usize];
                st.left.h += hess[r as usize];
                st.left.n += 1;
                st.prev = v;
            }
            for s in touched.drain(..) {
                state[s] = ScanState::default();
            }
        }

        let mut next = Vec::new();
        let mut child_of_slot: Vec<Option<(usize, usize, Candidate)>> = vec![None; frontier.len()];
        for (s, &(id, stats)) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let l = nodes.len();
                    nodes.push(TreeNode::Leaf(0.0));
                    nodes.push(TreeNode::Leaf(0.0));
                    nodes[id] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l as u32,
                        right: l as u32 + 1,
                    };
                    child_of_slot[s] = Some((l, l + 1, c));
                }
                None => nodes[id] = leaf(stats),
            }
        }
        // route rows: default left, then rows at or above the threshold go right
        let mut child_stats: Vec<Stats> = vec![Stats::default(); nodes.len()];
        for nid in node_of.iter_mut() {
            if *nid == usize::MAX {
                continue;
            }
            match child_of_slot[slot_of[*nid]] {
                Some((l, _, _)) => *nid = l,
                None => *nid = usize::MAX,
            }
        }
        for child in &child_of_slot {
            let Some((l, r, c)) = child else { continue };
            for &(row, v) in &columns.cols[c.feature as usize] {
                if node_of[row as usize] == *l && v >= c.threshold {
                    node_of[row as usize] = *r;
                }
            }
        }
        for (i, &nid) in node_of.iter().enumerate() {
            if nid != usize::MAX {
                let st = &mut child_stats[nid];
                st.g += grad[i];
                st.h += hess[i];
                st.n += 1;
            }
        }
        for child in child_of_slot.iter().flatten() {
            next.push((child.0, child_stats[child.0]));
            next.push((child.1, child_stats[child.1]));
        }
        frontier = next;
    }
    for (id, stats) in frontier {
        nodes[id] = leaf(stats);
    }
    Tree { nodes }
}
