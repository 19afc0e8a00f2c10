//! Random weighted DAGs and linear Gaussian SEMs under hard interventions.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::io::{Read, Write};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, streams};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node {node} out of range for a graph with {p} nodes")]
    NodeOutOfRange { node: usize, p: usize },
    #[error("self loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {parent} -> {child}")]
    DuplicateEdge { parent: usize, child: usize },
    #[error("edge list contains a cycle")]
    Cycle,
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub weight: f64,
}

/// Weighted DAG with a fixed topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    p: usize,
    edges: Vec<Edge>,
    topo_order: Vec<usize>,
    parents: Vec<Vec<(usize, f64)>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Builds a DAG from an edge list, validating acyclicity. The topological
    /// order is the lexicographically smallest one.
    pub fn from_edges(p: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if p == 0 {
            return Err(GraphError::InvalidParameter("p must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        let mut indeg = vec![0usize; p];
        let mut children = vec![Vec::new(); p];
        for e in &edges {
            for node in [e.parent, e.child] {
                if node >= p {
                    return Err(GraphError::NodeOutOfRange { node, p });
                }
            }
            if e.parent == e.child {
                return Err(GraphError::SelfLoop(e.parent));
            }
            if !e.weight.is_finite() {
                return Err(GraphError::InvalidParameter(format!(
                    "non-finite weight on {} -> {}",
                    e.parent, e.child
                )));
            }
            if !seen.insert((e.parent, e.child)) {
                return Err(GraphError::DuplicateEdge { parent: e.parent, child: e.child });
            }
            indeg[e.child] += 1;
            children[e.parent].push(e.child);
        }
        let mut heap: BinaryHeap<Reverse<usize>> =
            (0..p).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(p);
        while let Some(Reverse(v)) = heap.pop() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    heap.push(Reverse(c));
                }
            }
        }
        if order.len() != p {
            return Err(GraphError::Cycle);
        }
        Ok(Self::assemble(p, edges, order))
    }

    fn assemble(p: usize, edges: Vec<Edge>, topo_order: Vec<usize>) -> Self {
        let mut parents = vec![Vec::new(); p];
        let mut children = vec![Vec::new(); p];
        for e in &edges {
            parents[e.child].push((e.parent, e.weight));
            children[e.parent].push(e.child);
        }
        for c in &mut children {
            c.sort_unstable();
        }
        Dag { p, edges, topo_order, parents, children }
    }

    /// Erdős–Rényi DAG: a uniformly random topological order, then each
    /// (earlier, later) pair gets an edge with probability `d_avg / (p - 1)`.
    /// Weights are uniform on `[-w_hi, -w_lo] ∪ [w_lo, w_hi]`.
    pub fn gen_er(p: usize, d_avg: f64, w_lo: f64, w_hi: f64, seed: u64) -> Result<Self, GraphError> {
        if p == 0 {
            return Err(GraphError::InvalidParameter("p must be at least 1".into()));
        }
        if !(d_avg >= 0.0 && d_avg <= (p - 1) as f64) {
            return Err(GraphError::InvalidParameter(format!(
                "d_avg must lie in [0, {}], got {d_avg}",
                p - 1
            )));
        }
        if !(w_lo > 0.0 && w_lo < w_hi && w_hi.is_finite()) {
            return Err(GraphError::InvalidParameter(format!(
                "weight range must satisfy 0 < w_lo < w_hi, got [{w_lo}, {w_hi}]"
            )));
        }
        let mut rng = stream_rng(seed, streams::GRAPH);
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut rng);
        let prob = if p > 1 { d_avg / (p - 1) as f64 } else { 0.0 };
        let mut edges = Vec::new();
        for x in 0..p {
            for y in (x + 1)..p {
                if rng.random::<f64>() < prob {
                    let mag = rng.random_range(w_lo..=w_hi);
                    let weight = if rng.random::<bool>() { mag } else { -mag };
                    edges.push(Edge { parent: order[x], child: order[y], weight });
                }
            }
        }
        Ok(Self::assemble(p, edges, order))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn parents(&self, node: usize) -> &[(usize, f64)] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Reachability sets, self excluded.
    pub fn descendant_sets(&self) -> DescendantSets {
        let mut desc: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.p];
        for &v in self.topo_order.iter().rev() {
            let mut acc = BTreeSet::new();
            for &c in &self.children[v] {
                acc.insert(c);
                acc.extend(desc[c].iter().copied());
            }
            desc[v] = acc;
        }
        DescendantSets { desc }
    }

    /// Samples `n` i.i.d. rows with standard normal noise. When `intervention`
    /// is set, that node is clamped to 0 before its children are computed.
    pub fn sample(&self, n: usize, intervention: Option<usize>, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, streams::OBSERVATIONAL);
        self.sample_with(n, intervention, &SemParams::default(), &mut rng)
    }

    /// Forward substitution with optional per-node intercepts and noise scales.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        n: usize,
        intervention: Option<usize>,
        params: &SemParams,
        rng: &mut R,
    ) -> Array2<f64> {
        if let Some(a) = intervention {
            assert!(a < self.p, "intervention node {a} out of range");
        }
        let mut out = Array2::<f64>::zeros((n, self.p));
        for mut row in out.rows_mut() {
            let row = row.as_slice_mut().expect("standard layout");
            for &v in &self.topo_order {
                let eps: f64 = rng.sample(StandardNormal);
                if Some(v) == intervention {
                    row[v] = params.intervention_value;
                    continue;
                }
                let mut x = params.intercept(v) + params.noise_sd(v) * eps;
                for &(pa, w) in &self.parents[v] {
                    x += w * row[pa];
                }
                row[v] = x;
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GraphError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["parent", "child", "weight"])?;
        for e in &self.edges {
            wr.write_record([e.parent.to_string(), e.child.to_string(), format!("{:.17e}", e.weight)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a `parent,child,weight` edge list. When `p` is `None` the node
    /// count is one past the largest index seen.
    pub fn read_csv<R: Read>(r: R, p: Option<usize>) -> Result<Self, GraphError> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["parent", "child", "weight"] {
            return Err(GraphError::Parse { line: 1, msg: "expected header parent,child,weight".into() });
        }
        let mut edges = Vec::new();
        for (idx, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = idx + 2;
            let field = |k: usize| -> Result<&str, GraphError> {
                rec.get(k).map(str::trim).ok_or_else(|| GraphError::Parse { line, msg: "too few fields".into() })
            };
            let parse_node = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| GraphError::Parse { line, msg: format!("bad node '{s}': {e}") })
            };
            let parent = parse_node(field(0)?)?;
            let child = parse_node(field(1)?)?;
            let ws = field(2)?;
            let weight = ws
                .parse::<f64>()
                .map_err(|e| GraphError::Parse { line, msg: format!("bad weight '{ws}': {e}") })?;
            edges.push(Edge { parent, child, weight });
        }
        let p = match p {
            Some(p) => p,
            None => edges.iter().map(|e| e.parent.max(e.child) + 1).max().unwrap_or(1),
        };
        Self::from_edges(p, edges)
    }
}

/// Optional heterogeneity for SEM sampling. Defaults give the plain model:
/// zero intercepts, unit noise, hard interventions to 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemParams {
    pub intercepts: Option<Vec<f64>>,
    pub noise_sd: Option<Vec<f64>>,
    pub intervention_value: f64,
}

impl SemParams {
    fn intercept(&self, v: usize) -> f64 {
        self.intercepts.as_ref().map_or(0.0, |m| m[v])
    }

    fn noise_sd(&self, v: usize) -> f64 {
        self.noise_sd.as_ref().map_or(1.0, |s| s[v])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescendantSets {
    desc: Vec<BTreeSet<usize>>,
}

impl DescendantSets {
    pub fn from_sets(desc: Vec<BTreeSet<usize>>) -> Self {
        DescendantSets { desc }
    }

    pub fn get(&self, a: usize) -> &BTreeSet<usize> {
        &self.desc[a]
    }

    pub fn contains(&self, a: usize, i: usize) -> bool {
        self.desc[a].contains(&i)
    }

    pub fn len(&self) -> usize {
        self.desc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.desc.is_empty()
    }
}

/// Observational sample plus one sample matrix per intervened node.
#[derive(Debug, Clone)]
pub struct InterventionalDataset {
    obs: Array2<f64>,
    per_intervention: BTreeMap<usize, Array2<f64>>,
}

impl InterventionalDataset {
    pub fn new(obs: Array2<f64>, per_intervention: BTreeMap<usize, Array2<f64>>) -> Result<Self, GraphError> {
        let p = obs.ncols();
        for (&a, m) in &per_intervention {
            if a >= p {
                return Err(GraphError::NodeOutOfRange { node: a, p });
            }
            if m.ncols() != p {
                return Err(GraphError::InvalidParameter(format!(
                    "intervention {a} has {} columns, expected {p}",
                    m.ncols()
                )));
            }
        }
        Ok(InterventionalDataset { obs, per_intervention })
    }

    /// Simulates the observational arm and one arm per intervention. Each arm
    /// uses its own random stream, so arms are generated in parallel.
    pub fn simulate(dag: &Dag, n_obs: usize, n_per: usize, interventions: &[usize], seed: u64) -> Self {
        Self::simulate_with(dag, n_obs, n_per, interventions, &SemParams::default(), seed)
    }

    pub fn simulate_with(
        dag: &Dag,
        n_obs: usize,
        n_per: usize,
        interventions: &[usize],
        params: &SemParams,
        seed: u64,
    ) -> Self {
        let mut rng = stream_rng(seed, streams::OBSERVATIONAL);
        let obs = dag.sample_with(n_obs, None, params, &mut rng);
        let per_intervention = interventions
            .par_iter()
            .map(|&a| {
                let mut rng = stream_rng(seed, streams::INTERVENTIONAL_BASE + a as u64);
                (a, dag.sample_with(n_per, Some(a), params, &mut rng))
            })
            .collect();
        InterventionalDataset { obs, per_intervention }
    }

    pub fn p(&self) -> usize {
        self.obs.ncols()
    }

    pub fn obs(&self) -> &Array2<f64> {
        &self.obs
    }

    pub fn intervention(&self, a: usize) -> Option<&Array2<f64>> {
        self.per_intervention.get(&a)
    }

    pub fn intervened(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_intervention.keys().copied()
    }

    pub fn per_intervention(&self) -> &BTreeMap<usize, Array2<f64>> {
        &self.per_intervention
    }

    /// Keeps only the listed interventions (others are dropped).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let per_intervention = keep
            .iter()
            .filter_map(|a| self.per_intervention.get(a).map(|m| (*a, m.clone())))
            .collect();
        InterventionalDataset { obs: self.obs.clone(), per_intervention }
    }
}
