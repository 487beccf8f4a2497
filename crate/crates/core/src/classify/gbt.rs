//! Second-order multiclass gradient boosting with exact greedy trees.

use serde::{Deserialize, Serialize};

use super::softmax;
use crate::{Error, Result};

const REG_LAMBDA: f64 = 1.0;
// Zero-gain splits are allowed so that symmetric layouts such as XOR can
// still be separated one level further down.
const MIN_GAIN: f64 = -1e-12;
const MIN_HESSIAN: f64 = 1e-16;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 5,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::Config("gradient boosting needs at least one round".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning rate {} outside (0, 1]", self.learning_rate)));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Regression tree; node 0 is the root. Samples with `x <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub base_score: Vec<f64>,
    /// One additive ensemble per class. Leaf values already include shrinkage.
    pub ensembles: Vec<Vec<Tree>>,
}

impl GbtModel {
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.base_score
            .iter()
            .zip(&self.ensembles)
            .map(|(b, trees)| b + trees.iter().map(|t| t.predict(row)).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GbtFit {
    pub model: GbtModel,
    /// Training log-loss before the first round and after each round.
    pub loss_history: Vec<f64>,
}

fn log_loss(scores: &[Vec<f64>], y: &[usize]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(s, &c)| {
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - s[c]
        })
        .sum::<f64>()
        / y.len() as f64
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    max_depth: usize,
    min_leaf: usize,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&self, g: &[f64], h: &[f64]) -> Tree {
        let n = self.x.len();
        let d = self.x.first().map_or(0, Vec::len);
        let mut node_of = vec![0usize; n];
        let mut stats = vec![(g.iter().sum::<f64>(), h.iter().sum::<f64>(), n)];
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut open = vec![0usize];
        for _ in 0..self.max_depth {
            if open.is_empty() {
                break;
            }
            let mut is_open = vec![false; nodes.len()];
            for &o in &open {
                is_open[o] = true;
            }
            let mut best: Vec<Option<Best>> = vec![None; nodes.len()];
            for f in 0..d {
                let mut acc = vec![(0.0f64, 0.0f64, 0usize, f64::NAN); nodes.len()];
                for &i in &self.sorted[f] {
                    let node = node_of[i];
                    if !is_open[node] {
                        continue;
                    }
                    let v = self.x[i][f];
                    let (gl, hl, nl, last) = acc[node];
                    let (gt, ht, nt) = stats[node];
                    if nl >= self.min_leaf && nt - nl >= self.min_leaf && v > last {
                        let (gr, hr) = (gt - gl, ht - hl);
                        let gain = gl * gl / (hl + REG_LAMBDA) + gr * gr / (hr + REG_LAMBDA) - gt * gt / (ht + REG_LAMBDA);
                        if gain > MIN_GAIN && best[node].is_none_or(|b| gain > b.gain) {
                            let mut threshold = last + 0.5 * (v - last);
                            if threshold >= v {
                                threshold = last;
                            }
                            best[node] = Some(Best { gain, feature: f, threshold });
                        }
                    }
                    acc[node] = (gl + g[i], hl + h[i], nl + 1, v);
                }
            }
            let mut next = Vec::new();
            let mut child_of = vec![None; nodes.len()];
            for &o in &open {
                if let Some(b) = best[o] {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    stats.push((0.0, 0.0, 0));
                    stats.push((0.0, 0.0, 0));
                    nodes[o] = Node::Split { feature: b.feature, threshold: b.threshold, left, right: left + 1 };
                    child_of[o] = Some((b, left));
                    next.extend([left, left + 1]);
                }
            }
            for i in 0..n {
                if let Some((b, left)) = child_of[node_of[i]] {
                    let c = if self.x[i][b.feature] <= b.threshold { left } else { left + 1 };
                    node_of[i] = c;
                    stats[c].0 += g[i];
                    stats[c].1 += h[i];
                    stats[c].2 += 1;
                }
            }
            open = next;
        }
        for (k, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf { value } = node {
                *value = -stats[k].0 / (stats[k].1 + REG_LAMBDA);
            }
        }
        Tree { nodes }
    }
}

/// Boosts `k` class ensembles on row-major features `x`. If a round would
/// raise the training loss its shrinkage is halved until it does not.
pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, params: &GbtParams) -> Result<GbtFit> {
    params.validate()?;
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidInput("feature rows and labels disagree".into()));
    }
    let mut counts = vec![0usize; k];
    for &c in y {
        counts[c] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::InvalidInput("every class needs at least one training sample".into()));
    }
    let base_score: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
    let d = x[0].len();
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let grower = Grower { x, sorted: &sorted, max_depth: params.max_depth, min_leaf: params.min_leaf };

    let mut scores: Vec<Vec<f64>> = vec![base_score.clone(); n];
    let mut loss = log_loss(&scores, y);
    let mut history = vec![loss];
    let mut ensembles: Vec<Vec<Tree>> = vec![Vec::new(); k];
    for _ in 0..params.n_rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut trees: Vec<Tree> = (0..k)
            .map(|c| {
                let g: Vec<f64> = (0..n).map(|i| probs[i][c] - f64::from(u8::from(y[i] == c))).collect();
                let h: Vec<f64> = (0..n).map(|i| (probs[i][c] * (1.0 - probs[i][c])).max(MIN_HESSIAN)).collect();
                grower.grow(&g, &h)
            })
            .collect();
        let raw: Vec<Vec<f64>> = x.iter().map(|row| trees.iter().map(|t| t.predict(row)).collect()).collect();
        let mut shrink = params.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<Vec<f64>> = scores
                .iter()
                .zip(&raw)
                .map(|(s, r)| s.iter().zip(r).map(|(a, b)| a + shrink * b).collect())
                .collect();
            let l = log_loss(&cand, y);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            shrink *= 0.5;
        }
        let Some((cand, l)) = accepted else {
            history.push(loss);
            continue;
        };
        if !l.is_finite() {
            return Err(Error::Numerical("boosting loss is not finite".into()));
        }
        for (c, t) in trees.iter_mut().enumerate() {
            t.scale(shrink);
            ensembles[c].push(t.clone());
        }
        scores = cand;
        loss = l;
        history.push(loss);
    }
    Ok(GbtFit {
        model: GbtModel { params: *params, base_score, ensembles },
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn argmax(s: &[f64]) -> usize {
        super::super::argmax(s)
    }

    #[test]
    fn root_only_tree_gives_log_prior() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let p = GbtParams { n_rounds: 1, max_depth: 0, learning_rate: 0.1, min_leaf: 1 };
        let fit = fit(&x, &y, 2, &p).unwrap();
        let s = fit.model.scores(&[3.0]);
        assert!((s[0] - 0.3f64.ln()).abs() < 1e-12);
        assert!((s[1] - 0.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn xor_is_learned() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..5 {
            for (k, p) in pts.iter().enumerate() {
                x.push(p.to_vec());
                y.push(usize::from(k >= 2));
            }
        }
        let params = GbtParams { n_rounds: 50, max_depth: 2, learning_rate: 0.3, min_leaf: 1 };
        let fit = fit(&x, &y, 2, &params).unwrap();
        for (row, &c) in x.iter().zip(&y) {
            assert_eq!(argmax(&fit.model.scores(row)), c);
        }
    }

    #[test]
    fn loss_non_increasing_on_random_data() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..120).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<usize> = (0..120).map(|_| rng.random_range(0..3)).collect();
            let params = GbtParams { n_rounds: 30, max_depth: 3, learning_rate: 0.5, min_leaf: 2 };
            let fit = fit(&x, &y, 3, &params).unwrap();
            assert!(fit.loss_history.windows(2).all(|w| w[1] <= w[0]));
            // ensemble evaluation equals the brute-force sum over trees
            for row in x.iter().take(10) {
                let s = fit.model.scores(row);
                for c in 0..3 {
                    let mut total = fit.model.base_score[c];
                    for t in &fit.model.ensembles[c] {
                        total += t.predict(row);
                    }
                    assert!((s[c] - total).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_split_hand_evaluation() {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 2.0 },
            ],
        };
        assert_eq!(t.predict(&[9.0, 0.5]), -1.0);
        assert_eq!(t.predict(&[9.0, 0.6]), 2.0);
        let model = GbtModel { params: GbtParams::default(), base_score: vec![0.0, 0.0], ensembles: vec![vec![], vec![]] };
        let p = softmax(&model.scores(&[0.0, 0.0]));
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn degenerate_params_rejected() {
        let p = GbtParams { n_rounds: 0, max_depth: 0, ..Default::default() };
        assert!(fit(&[vec![0.0]], &[0], 1, &p).is_err());
    }
}
