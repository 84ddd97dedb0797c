//! CART decision tree (Gini impurity, axis-aligned midpoint thresholds).
//!
//! Routing: go left iff `x[feature] < threshold`; a value exactly on the
//! threshold goes right.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledFeature;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("empty test set")]
    EmptyTest,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("tree serialization: {0}")]
    Serde(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: String,
        counts: BTreeMap<String, usize>,
    },
}

/// Nodes live in an arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub params: TreeParams,
}

fn gini(counts: &BTreeMap<&str, usize>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.values().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn count<'a>(data: &'a [LabeledFeature], idx: &[usize]) -> BTreeMap<&'a str, usize> {
    let mut m = BTreeMap::new();
    for &i in idx {
        *m.entry(data[i].label.as_str()).or_insert(0) += 1;
    }
    m
}

/// Majority label; the BTreeMap order makes ties resolve lexicographically.
fn majority(counts: &BTreeMap<&str, usize>) -> String {
    let mut best: Option<(&str, usize)> = None;
    for (&l, &c) in counts {
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l.to_string()).unwrap_or_default()
}

struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Adjacent floats: the midpoint can round down onto `a`, which would
    // send `a` right. Fall back to `b` so the split still separates them.
    if m > a {
        m
    } else {
        b
    }
}

fn best_split(data: &[LabeledFeature], idx: &[usize], n_features: usize) -> Option<Candidate> {
    let n = idx.len();
    let total = count(data, idx);
    let labels: Vec<&str> = total.keys().copied().collect();
    let mut best: Option<Candidate> = None;
    let mut order = idx.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| data[a].features[f].total_cmp(&data[b].features[f]));
        let mut left: BTreeMap<&str, usize> = labels.iter().map(|&l| (l, 0)).collect();
        let mut right = total.clone();
        for k in 1..n {
            let moved = data[order[k - 1]].label.as_str();
            *left.get_mut(moved).unwrap() += 1;
            *right.get_mut(moved).unwrap() -= 1;
            let (a, b) = (data[order[k - 1]].features[f], data[order[k]].features[f]);
            if a == b {
                continue;
            }
            let imp = (k as f64 * gini(&left, k) + (n - k) as f64 * gini(&right, n - k)) / n as f64;
            let t = midpoint(a, b);
            // Features scanned ascending and thresholds ascending within a
            // feature, so strict < keeps the lowest feature / threshold on ties.
            if best.as_ref().map_or(true, |c| imp < c.impurity) {
                best = Some(Candidate {
                    impurity: imp,
                    feature: f,
                    threshold: t,
                });
            }
        }
    }
    best
}

impl DecisionTree {
    pub fn fit(train: &[LabeledFeature], params: TreeParams) -> Result<Self, TreeError> {
        let first = train.first().ok_or(TreeError::EmptyTrain)?;
        let n_features = first.features.len();
        for d in train {
            if d.features.len() != n_features {
                return Err(TreeError::Dimension {
                    expected: n_features,
                    got: d.features.len(),
                });
            }
            if d.features.iter().any(|v| !v.is_finite()) {
                return Err(TreeError::NonFinite);
            }
        }
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_features,
            params,
        };
        let all: Vec<usize> = (0..train.len()).collect();
        tree.grow(train, all, 0);
        Ok(tree)
    }

    fn grow(&mut self, data: &[LabeledFeature], idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = count(data, &idx);
        let leaf = Node::Leaf {
            label: majority(&counts),
            counts: counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        self.nodes.push(leaf);
        let parent = gini(&counts, idx.len());
        let stop = counts.len() <= 1
            || idx.len() < self.params.min_samples_split.max(2)
            || self.params.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return id;
        }
        let Some(c) = best_split(data, &idx, self.n_features) else {
            return id;
        };
        if !(c.impurity < parent) {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| data[i].features[c.feature] < c.threshold);
        let left = self.grow(data, l, depth + 1);
        let right = self.grow(data, r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left,
            right,
        };
        id
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str, TreeError> {
        if x.len() != self.n_features {
            return Err(TreeError::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label, .. } => return Ok(label),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// One JSON object per node, in arena order, preceded by a header line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TreeError> {
        let header = serde_json::json!({"n_features": self.n_features, "params": self.params});
        writeln!(w, "{header}")?;
        for (i, n) in self.nodes.iter().enumerate() {
            let mut v = serde_json::to_value(n).map_err(|e| TreeError::Serde(e.to_string()))?;
            v["id"] = i.into();
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TreeError> {
        #[derive(Deserialize)]
        struct Header {
            n_features: usize,
            params: TreeParams,
        }
        let mut lines = r.lines();
        let serde = |e: serde_json::Error| TreeError::Serde(e.to_string());
        let head = lines.next().ok_or_else(|| TreeError::Serde("missing header".into()))??;
        let header: Header = serde_json::from_str(&head).map_err(serde)?;
        let mut nodes = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            nodes.push(serde_json::from_str::<Node>(&line).map_err(serde)?);
        }
        let n = nodes.len();
        if n == 0 {
            return Err(TreeError::Serde("no nodes".into()));
        }
        for node in &nodes {
            if let Node::Split { left, right, feature, .. } = node {
                if *left >= n || *right >= n || *feature >= header.n_features {
                    return Err(TreeError::Serde("node reference out of range".into()));
                }
            }
        }
        Ok(Self {
            nodes,
            n_features: header.n_features,
            params: header.params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Sorted label axis shared by rows (truth) and columns (prediction).
    pub labels: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
}

impl EvalResult {
    pub fn correct(&self) -> usize {
        (0..self.labels.len()).map(|i| self.confusion[i][i]).sum()
    }
}

pub fn evaluate(tree: &DecisionTree, test: &[LabeledFeature]) -> Result<EvalResult, TreeError> {
    if test.is_empty() {
        return Err(TreeError::EmptyTest);
    }
    let mut preds = Vec::with_capacity(test.len());
    for d in test {
        preds.push(tree.predict(&d.features)?.to_string());
    }
    let mut labels: Vec<String> = test.iter().map(|d| d.label.clone()).chain(preds.iter().cloned()).collect();
    labels.sort();
    labels.dedup();
    let pos = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).unwrap();
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    for (d, p) in test.iter().zip(&preds) {
        confusion[pos(&d.label)][pos(p)] += 1;
    }
    let mut r = EvalResult {
        accuracy: 0.0,
        labels,
        confusion,
        n_test: test.len(),
    };
    r.accuracy = 100.0 * r.correct() as f64 / r.n_test as f64;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, SplitSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use rand_xoshiro::SplitMix64;

    fn lf(f: &[f64], l: &str) -> LabeledFeature {
        LabeledFeature::new(f.to_vec(), l)
    }

    #[test]
    fn separable_pair() {
        let t = DecisionTree::fit(&[lf(&[0.0], "A"), lf(&[1.0], "B")], TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 3);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 0.5));
        assert_eq!(t.predict(&[0.0]).unwrap(), "A");
        assert_eq!(t.predict(&[1.0]).unwrap(), "B");
        // On the threshold → right.
        assert_eq!(t.predict(&[0.5]).unwrap(), "B");
        assert!(matches!(t.predict(&[0.0, 1.0]), Err(TreeError::Dimension { .. })));
    }

    #[test]
    fn adjacent_floats_still_split() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = DecisionTree::fit(&[lf(&[a], "A"), lf(&[b], "B")], TreeParams::default()).unwrap();
        assert_eq!(t.predict(&[a]).unwrap(), "A");
        assert_eq!(t.predict(&[b]).unwrap(), "B");
    }

    #[test]
    fn constant_tree_and_chance() {
        let train = vec![lf(&[1.0], "x"), lf(&[2.0], "x")];
        let t = DecisionTree::fit(&train, TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[1e9]).unwrap(), "x");
        let test: Vec<_> = ["x", "y", "z", "w"].iter().map(|l| lf(&[0.0], l)).collect();
        let r = evaluate(&t, &test).unwrap();
        assert_eq!(r.accuracy, 25.0);
        assert!(matches!(evaluate(&t, &[]), Err(TreeError::EmptyTest)));
        assert!(matches!(DecisionTree::fit(&[], TreeParams::default()), Err(TreeError::EmptyTrain)));
    }

    #[test]
    fn duplicates_with_conflicting_labels() {
        let train = vec![
            lf(&[1.0], "b"),
            lf(&[1.0], "a"),
            lf(&[1.0], "b"),
            lf(&[2.0], "c"),
            lf(&[3.0], "a"),
            lf(&[3.0], "b"),
        ];
        let t = DecisionTree::fit(&train, TreeParams::default()).unwrap();
        assert_eq!(t.predict(&[1.0]).unwrap(), "b");
        assert_eq!(t.predict(&[2.0]).unwrap(), "c");
        // 1:1 tie → lexicographic.
        assert_eq!(t.predict(&[3.0]).unwrap(), "a");
        let r = evaluate(&t, &train).unwrap();
        assert_eq!(r.correct(), 4);
    }

    #[test]
    fn max_depth_bounds_tree() {
        let train: Vec<_> = (0..16).map(|i| lf(&[i as f64], &format!("l{}", i % 4))).collect();
        let t = DecisionTree::fit(&train, TreeParams { max_depth: Some(2), ..Default::default() }).unwrap();
        assert!(t.depth() <= 2);
        let full = DecisionTree::fit(&train, TreeParams::default()).unwrap();
        assert_eq!(evaluate(&full, &train).unwrap().accuracy, 100.0);
    }

    pub(crate) fn table_clusters(seed: u64, sigma: f64, n: usize) -> Vec<LabeledFeature> {
        let centers = [
            ("ax", 631.0, 1049.0),
            ("ae", 720.0, 1644.0),
            ("aa", 573.0, 1311.0),
            ("ah", 693.0, 1182.0),
        ];
        let mut rng = SplitMix64::seed_from_u64(seed);
        let z = Normal::new(0.0, sigma).unwrap();
        let mut out = Vec::new();
        for (l, f1, f2) in centers {
            for _ in 0..n {
                out.push(lf(&[f1 + z.sample(&mut rng), f2 + z.sample(&mut rng)], l));
            }
        }
        out
    }

    /// Nearest class mean (Euclidean), fitted on train.
    fn nearest_centroid_accuracy(train: &[LabeledFeature], test: &[LabeledFeature]) -> f64 {
        let mut sums: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
        for d in train {
            let e = sums.entry(&d.label).or_insert((0.0, 0.0, 0));
            e.0 += d.features[0];
            e.1 += d.features[1];
            e.2 += 1;
        }
        let mut correct = 0;
        for d in test {
            let mut best = ("", f64::INFINITY);
            for (l, (a, b, n)) in &sums {
                let (ca, cb) = (a / *n as f64, b / *n as f64);
                let dist = (d.features[0] - ca).powi(2) + (d.features[1] - cb).powi(2);
                if dist < best.1 {
                    best = (l, dist);
                }
            }
            correct += usize::from(best.0 == d.label);
        }
        100.0 * correct as f64 / test.len() as f64
    }

    #[test]
    fn gaussian_clusters_at_table_centres() {
        let data = table_clusters(42, 40.0, 150);
        let (tr, te) = split(&data, &SplitSpec::default()).unwrap();
        let train: Vec<_> = tr.iter().map(|&i| data[i].clone()).collect();
        let test: Vec<_> = te.iter().map(|&i| data[i].clone()).collect();
        let oracle = nearest_centroid_accuracy(&train, &test);
        assert!(oracle > 85.0, "oracle {oracle}");
        let t = DecisionTree::fit(&train, TreeParams::default()).unwrap();
        let r = evaluate(&t, &test).unwrap();
        assert!(r.accuracy >= 85.0, "tree {}", r.accuracy);
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), r.n_test);
    }

    #[test]
    fn fit_is_deterministic_and_serializes() {
        let data = table_clusters(5, 60.0, 40);
        let a = DecisionTree::fit(&data, TreeParams::default()).unwrap();
        let b = DecisionTree::fit(&data, TreeParams::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let back = DecisionTree::read_jsonl(&buf[..]).unwrap();
        assert_eq!(a, back);
        assert_eq!(evaluate(&a, &data).unwrap().accuracy, 100.0);
    }

    /// Weighted child impurity never exceeds the parent's at any split.
    #[test]
    fn splits_reduce_impurity() {
        let data = table_clusters(9, 80.0, 30);
        let t = DecisionTree::fit(&data, TreeParams::default()).unwrap();
        fn leaf_counts(t: &DecisionTree, at: usize, out: &mut BTreeMap<String, usize>) {
            match &t.nodes[at] {
                Node::Leaf { counts, .. } => {
                    for (k, v) in counts {
                        *out.entry(k.clone()).or_default() += v;
                    }
                }
                Node::Split { left, right, .. } => {
                    leaf_counts(t, *left, out);
                    leaf_counts(t, *right, out);
                }
            }
        }
        let g = |m: &BTreeMap<String, usize>| {
            let n: usize = m.values().sum();
            (n, 1.0 - m.values().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>())
        };
        for node in &t.nodes {
            if let Node::Split { left, right, .. } = node {
                let (mut l, mut r) = (BTreeMap::new(), BTreeMap::new());
                leaf_counts(&t, *left, &mut l);
                leaf_counts(&t, *right, &mut r);
                let mut p = l.clone();
                for (k, v) in &r {
                    *p.entry(k.clone()).or_default() += v;
                }
                let ((nl, gl), (nr, gr), (np, gp)) = (g(&l), g(&r), g(&p));
                assert!((nl as f64 * gl + nr as f64 * gr) / np as f64 <= gp + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(seed in 0u64..1000, feat in 0usize..2) {
            let data = table_clusters(seed, 70.0, 25);
            let probe = table_clusters(seed + 1, 70.0, 10);
            // Strictly increasing on positive inputs.
            let tf = |v: f64| (v / 100.0).powi(3) + v.ln();
            let warp = |ds: &[LabeledFeature]| -> Vec<LabeledFeature> {
                ds.iter().map(|d| {
                    let mut f = d.features.clone();
                    f[feat] = tf(f[feat]);
                    LabeledFeature::new(f, d.label.clone())
                }).collect()
            };
            let a = DecisionTree::fit(&data, TreeParams::default()).unwrap();
            let b = DecisionTree::fit(&warp(&data), TreeParams::default()).unwrap();
            // Same routing structure; only threshold positions move.
            prop_assert_eq!(a.nodes.len(), b.nodes.len());
            for (x, y) in a.nodes.iter().zip(&b.nodes) {
                match (x, y) {
                    (Node::Split { feature: f, left: l, right: r, .. },
                     Node::Split { feature: g, left: l2, right: r2, .. }) => {
                        prop_assert_eq!((f, l, r), (g, l2, r2));
                    }
                    (Node::Leaf { .. }, Node::Leaf { .. }) => prop_assert_eq!(x, y),
                    _ => prop_assert!(false, "node kinds differ"),
                }
            }
            let wp = warp(&probe);
            let pa: Vec<&str> = data.iter().chain(&probe).map(|d| a.predict(&d.features).unwrap()).collect();
            let pb: Vec<&str> = warp(&data).iter().chain(&wp).map(|d| b.predict(&d.features).unwrap()).collect();
            // Training points route identically; probes can only differ when
            // they fall between a training value and its midpoint.
            prop_assert_eq!(&pa[..data.len()], &pb[..data.len()]);
        }
    }
}
