//! Gradient-boosted regression trees for binary classification.
//!
//! Trees are grown level by level with exact greedy split search over
//! presorted feature columns; leaves carry Newton weights of the logistic
//! loss. Candidate splits are compared with a strict `>` while features are
//! scanned in index order and thresholds in ascending order, so ties go to
//! the lowest feature index and then the lowest threshold.

use std::fmt::Write as _;

use super::XgError;

#[derive(Debug, Clone, PartialEq)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 500,
            max_depth: 5,
            learning_rate: 0.01,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Samples with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(w) => return w,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    /// Log-odds of the training base rate.
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Fits the model on row-major `rows` with binary `targets`.
    pub fn fit(rows: &[Vec<f64>], targets: &[bool], params: &GbtParams) -> Result<Self, XgError> {
        if rows.is_empty() {
            return Err(XgError::NoShots);
        }
        let positives = targets.iter().filter(|&&t| t).count();
        if positives == 0 || positives == targets.len() {
            return Err(XgError::SingleClass);
        }
        let n = rows.len();
        let n_features = rows[0].len();
        if rows.iter().any(|r| r.len() != n_features) || targets.len() != n {
            return Err(XgError::Shape);
        }

        let columns: Vec<Vec<f64>> = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f]).collect())
            .collect();
        let order: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let y: Vec<f64> = targets.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();

        let rate = positives as f64 / n as f64;
        let base_score = (rate / (1.0 - rate)).ln();
        let mut margins = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut builder = TreeBuilder::new(n, params);
        let mut trees = Vec::with_capacity(params.n_trees);

        for _ in 0..params.n_trees {
            for i in 0..n {
                let p = sigmoid(margins[i]);
                grad[i] = p - y[i];
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let tree = builder.grow(&columns, &order, &grad, &hess);
            for (i, m) in margins.iter_mut().enumerate() {
                if let Node::Leaf(w) = tree.nodes[builder.leaf_of[i] as usize] {
                    *m += params.learning_rate * w;
                }
            }
            trees.push(tree);
        }

        Ok(GbtModel {
            base_score,
            shrinkage: params.learning_rate,
            trees,
        })
    }

    /// Text dump, one node per line. Floats use the shortest representation
    /// that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "gbt v1").unwrap();
        writeln!(s, "base_score {}", self.base_score).unwrap();
        writeln!(s, "shrinkage {}", self.shrinkage).unwrap();
        writeln!(s, "trees {}", self.trees.len()).unwrap();
        for (t, tree) in self.trees.iter().enumerate() {
            writeln!(s, "tree {t} {}", tree.nodes.len()).unwrap();
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "{i} split {feature} {threshold} {left} {right}").unwrap(),
                    Node::Leaf(w) => writeln!(s, "{i} leaf {w}").unwrap(),
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, XgError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
                .ok_or_else(|| XgError::Format(format!("unexpected end of model, expected {what}")))
        };
        let bad = |line: usize, msg: &str| XgError::Format(format!("line {line}: {msg}"));

        let (line, header) = next("header")?;
        if header != ["gbt", "v1"] {
            return Err(bad(line, "unsupported model header"));
        }
        let base_score = keyed_f64(next("base_score")?, "base_score")?;
        let shrinkage = keyed_f64(next("shrinkage")?, "shrinkage")?;
        let (line, t) = next("trees")?;
        let n_trees: usize = match t.as_slice() {
            ["trees", n] => n.parse().map_err(|_| bad(line, "bad tree count"))?,
            _ => return Err(bad(line, "expected `trees <n>`")),
        };
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (line, t) = next("tree")?;
            let n_nodes: usize = match t.as_slice() {
                ["tree", _, n] => n.parse().map_err(|_| bad(line, "bad node count"))?,
                _ => return Err(bad(line, "expected `tree <i> <nodes>`")),
            };
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let (line, f) = next("node")?;
                let node = match f.as_slice() {
                    [_, "leaf", w] => Node::Leaf(w.parse().map_err(|_| bad(line, "bad leaf"))?),
                    [_, "split", feat, thr, l, r] => Node::Split {
                        feature: feat.parse().map_err(|_| bad(line, "bad feature"))?,
                        threshold: thr.parse().map_err(|_| bad(line, "bad threshold"))?,
                        left: l.parse().map_err(|_| bad(line, "bad child"))?,
                        right: r.parse().map_err(|_| bad(line, "bad child"))?,
                    },
                    _ => return Err(bad(line, "expected a node")),
                };
                if let Node::Split { left, right, .. } = node {
                    if left >= n_nodes || right >= n_nodes {
                        return Err(bad(line, "child index out of range"));
                    }
                }
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(GbtModel {
            base_score,
            shrinkage,
            trees,
        })
    }
}

fn keyed_f64((line, f): (usize, Vec<&str>), key: &str) -> Result<f64, XgError> {
    match f.as_slice() {
        [k, v] if *k == key => v
            .parse()
            .map_err(|_| XgError::Format(format!("line {line}: bad {key}"))),
        _ => Err(XgError::Format(format!("line {line}: expected `{key} <value>`"))),
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Scan {
    g_left: f64,
    h_left: f64,
    last: f64,
    seen: bool,
}

struct TreeBuilder<'p> {
    params: &'p GbtParams,
    /// Node id of every sample in the tree being grown.
    leaf_of: Vec<u32>,
}

const INACTIVE: usize = usize::MAX;

impl<'p> TreeBuilder<'p> {
    fn new(n: usize, params: &'p GbtParams) -> Self {
        TreeBuilder {
            params,
            leaf_of: vec![0; n],
        }
    }

    fn grow(&mut self, columns: &[Vec<f64>], order: &[Vec<u32>], grad: &[f64], hess: &[f64]) -> Tree {
        let lambda = self.params.lambda;
        let min_child = self.params.min_child_weight;
        self.leaf_of.iter_mut().for_each(|l| *l = 0);

        let mut nodes = vec![Node::Leaf(0.0)];
        let mut sums = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];
        // frontier nodes by id; slot[node] is its position in the frontier
        let mut frontier: Vec<usize> = vec![0];

        for _depth in 0..self.params.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot = vec![INACTIVE; nodes.len()];
            for (k, &id) in frontier.iter().enumerate() {
                slot[id] = k;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];

            for (feature, (col, ord)) in columns.iter().zip(order).enumerate() {
                let mut scans = vec![Scan::default(); frontier.len()];
                for &i in ord {
                    let i = i as usize;
                    let k = slot[self.leaf_of[i] as usize];
                    if k == INACTIVE {
                        continue;
                    }
                    let v = col[i];
                    let scan = &mut scans[k];
                    if scan.seen && v > scan.last {
                        let (g, h) = sums[frontier[k]];
                        let (gl, hl) = (scan.g_left, scan.h_left);
                        let (gr, hr) = (g - gl, h - hl);
                        if hl >= min_child && hr >= min_child {
                            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                                - g * g / (h + lambda);
                            if gain > best[k].map_or(0.0, |c| c.gain) {
                                let mut threshold = scan.last + (v - scan.last) / 2.0;
                                if threshold <= scan.last {
                                    threshold = v;
                                }
                                best[k] = Some(Candidate {
                                    gain,
                                    feature,
                                    threshold,
                                });
                            }
                        }
                    }
                    scan.g_left += grad[i];
                    scan.h_left += hess[i];
                    scan.last = v;
                    scan.seen = true;
                }
            }

            let mut next_frontier = Vec::new();
            let mut child_of = vec![(0u32, 0u32); frontier.len()];
            for (k, &id) in frontier.iter().enumerate() {
                if let Some(c) = best[k] {
                    let left = nodes.len();
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    sums.push((0.0, 0.0));
                    sums.push((0.0, 0.0));
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    child_of[k] = (left as u32, left as u32 + 1);
                    next_frontier.push(left);
                    next_frontier.push(left + 1);
                }
            }
            if next_frontier.is_empty() {
                break;
            }
            for i in 0..self.leaf_of.len() {
                let node = self.leaf_of[i] as usize;
                let k = slot[node];
                if k == INACTIVE {
                    continue;
                }
                if let Node::Split {
                    feature, threshold, ..
                } = nodes[node]
                {
                    let (l, r) = child_of[k];
                    let child = if columns[feature][i] < threshold { l } else { r };
                    self.leaf_of[i] = child;
                    let s = &mut sums[child as usize];
                    s.0 += grad[i];
                    s.1 += hess[i];
                }
            }
            frontier = next_frontier;
        }

        for (node, &(g, h)) in nodes.iter_mut().zip(&sums) {
            if let Node::Leaf(w) = node {
                *w = -g / (h + lambda);
            }
        }
        Tree { nodes }
    }
}
