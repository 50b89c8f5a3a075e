//! Stacking layers into a tree, pruning, cluster extraction and ranking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::layer::{fit_layer, hard_labels, transform, CorexConfig, CorexLayer, SoftLabels};

/// Factors whose tc falls below this many nats are dead.
pub const DEAD_FACTOR_TC: f64 = 1e-6;
/// Variables whose NMI to their parent falls below this are pruned.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;

/// Hard assignment of variables to factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Parent factor of each variable; `None` when pruned.
    pub assignment: Vec<Option<usize>>,
    /// Number of factors with at least one variable.
    pub m_effective: usize,
}

impl ClusterAssignment {
    fn from_assignment(assignment: Vec<Option<usize>>) -> Self {
        let mut used: Vec<usize> = assignment.iter().flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        ClusterAssignment {
            assignment,
            m_effective: used.len(),
        }
    }

    /// Members of each of `m` groups, in variable order.
    pub fn groups(&self, m: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); m];
        for (i, parent) in self.assignment.iter().enumerate() {
            if let Some(j) = parent {
                groups[*j].push(i);
            }
        }
        groups
    }

    pub fn pruned(&self) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i].is_none())
            .collect()
    }
}

/// Factor with the largest `I(X_i : Y_j)`; ties go to the lowest index.
pub fn best_factor(layer: &CorexLayer, i: usize) -> usize {
    let mi = &layer.marginals.mi;
    (1..layer.m()).fold(0, |best, j| if mi[[j, i]] > mi[[best, i]] { j } else { best })
}

/// `I(X_i : Y_j) / min(H(X_i), H(Y_j))`, or 0 when either entropy is 0.
pub fn normalized_mi(layer: &CorexLayer, i: usize, j: usize) -> f64 {
    normalized_mi_with(layer, &layer.marginals.factor_entropies(), i, j)
}

fn normalized_mi_with(layer: &CorexLayer, hy: &[f64], i: usize, j: usize) -> f64 {
    let denom = layer.hx[i].min(hy[j]);
    if denom > 0.0 {
        layer.marginals.mi[[j, i]] / denom
    } else {
        0.0
    }
}

pub fn clusters(layer: &CorexLayer) -> ClusterAssignment {
    clusters_with_threshold(layer, DEFAULT_PRUNE_THRESHOLD)
}

/// Argmax assignment, with variables below the NMI `threshold` unassigned.
pub fn clusters_with_threshold(layer: &CorexLayer, threshold: f64) -> ClusterAssignment {
    let hy = layer.marginals.factor_entropies();
    let assignment = (0..layer.n_vars())
        .map(|i| {
            let j = best_factor(layer, i);
            (normalized_mi_with(layer, &hy, i, j) >= threshold).then_some(j)
        })
        .collect();
    ClusterAssignment::from_assignment(assignment)
}

/// Variables whose NMI to their assigned parent is below `threshold`.
/// Constant columns always qualify.
pub fn prune_variables(layer: &CorexLayer, threshold: f64) -> Vec<usize> {
    clusters_with_threshold(layer, threshold).pruned()
}

/// Factors with tc of at least [`DEAD_FACTOR_TC`].
pub fn live_factors(layer: &CorexLayer) -> Vec<usize> {
    (0..layer.m())
        .filter(|&j| layer.tc_per_factor[j] >= DEAD_FACTOR_TC)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScore {
    pub factor: usize,
    pub score: f64,
    pub tc: f64,
    /// Group members, strongest mutual information first.
    pub members: Vec<usize>,
}

/// Factors ordered by `tc_j / sum of H(X_i) over the group`, best first.
/// Factors without members score 0.
pub fn rank_factors(layer: &CorexLayer) -> Vec<FactorScore> {
    rank_factors_with_threshold(layer, DEFAULT_PRUNE_THRESHOLD)
}

pub fn rank_factors_with_threshold(layer: &CorexLayer, threshold: f64) -> Vec<FactorScore> {
    let groups = clusters_with_threshold(layer, threshold).groups(layer.m());
    let mut scores: Vec<FactorScore> = groups
        .into_iter()
        .enumerate()
        .map(|(j, mut members)| {
            let h: f64 = members.iter().map(|&i| layer.hx[i]).sum();
            let tc = layer.tc_per_factor[j];
            let score = if members.is_empty() || h <= 0.0 { 0.0 } else { tc / h };
            let mi = &layer.marginals.mi;
            members.sort_by(|&a, &b| mi[[j, b]].total_cmp(&mi[[j, a]]).then(a.cmp(&b)));
            FactorScore {
                factor: j,
                score,
                tc,
                members,
            }
        })
        .collect();
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.factor.cmp(&b.factor)));
    scores
}

/// Link from an input column to its parent factor in the layer above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: usize,
    pub nmi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    /// Input columns of the layer left without a parent.
    pub variables: Vec<usize>,
    /// Dead factors of the layer.
    pub factors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub layers: Vec<CorexLayer>,
    /// For each layer above the first, the factor of the layer below that
    /// feeds each input column.
    pub inputs: Vec<Vec<usize>>,
    /// Per layer, per input column: the parent factor, if any.
    pub edges: Vec<Vec<Option<Edge>>>,
    pub pruned: Vec<Pruned>,
    pub prune_threshold: f64,
}

impl Hierarchy {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Live factors of layer `l`.
    pub fn live(&self, l: usize) -> Vec<usize> {
        let dead = &self.pruned[l].factors;
        (0..self.layers[l].m()).filter(|j| !dead.contains(j)).collect()
    }

    /// Clusters of the bottom layer's input variables.
    pub fn clusters(&self) -> ClusterAssignment {
        ClusterAssignment::from_assignment(self.edges[0].iter().map(|e| e.map(|e| e.parent)).collect())
    }

    /// Labels every layer for new data, feeding each layer the hard labels
    /// of the live factors beneath it.
    pub fn transform(&self, data: &DataMatrix) -> Result<Vec<SoftLabels>> {
        let mut out: Vec<SoftLabels> = Vec::with_capacity(self.depth());
        for (l, layer) in self.layers.iter().enumerate() {
            let labels = match out.last() {
                None => transform(layer, data)?,
                Some(below) => {
                    let input = factor_data(below, &self.inputs[l - 1], self.layers[l - 1].k())?;
                    transform(layer, &input)?
                }
            };
            out.push(labels);
        }
        Ok(out)
    }
}

/// Hard labels of `factors` as a new dataset with cardinality `k`.
fn factor_data(labels: &SoftLabels, factors: &[usize], k: usize) -> Result<DataMatrix> {
    let hard = hard_labels(labels);
    let cells = hard.select(ndarray::Axis(1), factors);
    DataMatrix::new(cells, vec![k; factors.len()])
}

/// Fits one layer per config, bottom-up.
///
/// Dead factors and pruned variables do not feed the next layer. Fitting
/// stops once a layer has at most one live factor, or when a layer above
/// the first cannot be fit.
pub fn fit_hierarchy(data: &DataMatrix, configs: &[CorexConfig]) -> Result<Hierarchy> {
    fit_hierarchy_with_threshold(data, configs, DEFAULT_PRUNE_THRESHOLD)
}

pub fn fit_hierarchy_with_threshold(data: &DataMatrix, configs: &[CorexConfig], threshold: f64) -> Result<Hierarchy> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("need at least one layer".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!("prune threshold {threshold} outside [0, 1]")));
    }
    let mut h = Hierarchy {
        layers: Vec::new(),
        inputs: Vec::new(),
        edges: Vec::new(),
        pruned: Vec::new(),
        prune_threshold: threshold,
    };

    let mut input = data.clone();
    for (l, config) in configs.iter().enumerate() {
        let fitted = match fit_layer(&input, config) {
            Ok(f) => f,
            Err(e) if l == 0 => return Err(e),
            Err(_) => break,
        };
        let (layer, labels) = fitted;
        let live = live_factors(&layer);
        let hy = layer.marginals.factor_entropies();
        let assignment = clusters_with_threshold(&layer, threshold).assignment;
        let edges: Vec<Option<Edge>> = assignment
            .iter()
            .enumerate()
            .map(|(i, parent)| {
                parent.filter(|j| live.contains(j)).map(|j| Edge {
                    parent: j,
                    nmi: normalized_mi_with(&layer, &hy, i, j),
                })
            })
            .collect();
        let pruned = Pruned {
            variables: (0..edges.len()).filter(|&i| edges[i].is_none()).collect(),
            factors: (0..layer.m()).filter(|j| !live.contains(j)).collect(),
        };
        let k = layer.k();
        h.layers.push(layer);
        h.edges.push(edges);
        h.pruned.push(pruned);
        if live.len() <= 1 || l + 1 == configs.len() {
            break;
        }
        input = factor_data(&labels, &live, k)?;
        h.inputs.push(live);
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: String,
    /// 0 for input variables, `l + 1` for factors of layer `l`.
    pub level: usize,
    pub index: usize,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub child: String,
    pub parent: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nmi: Option<f64>,
}

/// Nodes and edges of a fitted hierarchy, without parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSkeleton {
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<TreeEdge>,
}

fn factor_id(level: usize, j: usize) -> String {
    format!("L{level}_{j}")
}

impl Hierarchy {
    /// Live variables and factors with their parent links. Nodes are
    /// ordered by level, then index.
    pub fn skeleton(&self, names: &[String], weights: bool) -> TreeSkeleton {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, e) in self.edges[0].iter().enumerate() {
            if let Some(e) = e {
                let id = format!("x{i}");
                nodes.push(TreeNode {
                    id: id.clone(),
                    level: 0,
                    index: i,
                    label: names.get(i).cloned().unwrap_or_else(|| id.clone()),
                    tc: None,
                });
                edges.push(TreeEdge {
                    child: id,
                    parent: factor_id(1, e.parent),
                    nmi: weights.then_some(e.nmi),
                });
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let level = l + 1;
            let above = self.edges.get(l + 1);
            for j in self.live(l) {
                nodes.push(TreeNode {
                    id: factor_id(level, j),
                    level,
                    index: j,
                    label: format!("y{j}"),
                    tc: Some(layer.tc_per_factor[j]),
                });
                let position = self.inputs.get(l).and_then(|inputs| inputs.iter().position(|&f| f == j));
                if let (Some(above), Some(c)) = (above, position) {
                    if let Some(e) = above[c] {
                        edges.push(TreeEdge {
                            child: factor_id(level, j),
                            parent: factor_id(level + 1, e.parent),
                            nmi: weights.then_some(e.nmi),
                        });
                    }
                }
            }
        }
        TreeSkeleton { nodes, edges }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz text and JSON skeleton of the live tree. With `weights`, edges
/// carry their NMI and are drawn with proportional thickness.
pub fn export_tree(h: &Hierarchy, names: &[String], weights: bool) -> (String, TreeSkeleton) {
    let skeleton = h.skeleton(names, weights);
    let mut dot = String::from("graph corex {\n  node [shape=ellipse];\n");
    for n in &skeleton.nodes {
        let label = match n.tc {
            Some(tc) => format!("{}\\ntc={tc:.4}", dot_escape(&n.label)),
            None => dot_escape(&n.label),
        };
        let shape = if n.level == 0 { "box" } else { "ellipse" };
        writeln!(dot, "  \"{}\" [label=\"{label}\", shape={shape}];", n.id).unwrap();
    }
    for e in &skeleton.edges {
        match e.nmi {
            Some(nmi) => writeln!(
                dot,
                "  \"{}\" -- \"{}\" [label=\"{nmi:.3}\", penwidth={:.3}];",
                e.child,
                e.parent,
                0.5 + 4.5 * nmi.clamp(0.0, 1.0)
            ),
            None => writeln!(dot, "  \"{}\" -- \"{}\";", e.child, e.parent),
        }
        .unwrap();
    }
    dot.push_str("}\n");
    (dot, skeleton)
}
