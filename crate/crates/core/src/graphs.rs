//! Random directed networks: Erdős–Rényi sampling, strong-connectivity repair,
//! edge perturbation and input/output node selection.
//!
//! An entry `adj[(i, j)] != 0` is an edge `j -> i`, so that `x_i(t+1)` depends on `x_j(t)`.

use std::collections::VecDeque;

use faer::Mat;
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::LinearNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSpec {
    pub n: usize,
    pub edge_prob: f64,
    pub normalize: bool,
    pub seed: u64,
}

impl GraphSpec {
    pub fn new(n: usize, edge_prob: f64, normalize: bool, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&edge_prob) {
            return Err(Error::Invalid(format!("edge probability {edge_prob} outside [0, 1]")));
        }
        if n < 2 {
            return Err(Error::Invalid("graphs need at least two nodes".into()));
        }
        Ok(Self {
            n,
            edge_prob,
            normalize,
            seed,
        })
    }

    /// Edge probability `ln n / n + 0.1`, normalized adjacency.
    pub fn connected_regime(n: usize, seed: u64) -> Result<Self> {
        let nf = n as f64;
        Self::new(n, (nf.ln() / nf + 0.1).min(1.0), true, seed)
    }
}

/// Unit-weight directed Bernoulli graph without self-loops, divided by `√n` if requested.
pub fn erdos_renyi<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Matrix {
    let n = spec.n;
    let w = if spec.normalize { 1.0 / (n as f64).sqrt() } else { 1.0 };
    let mut adj = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i != j && rng.random_bool(spec.edge_prob) {
                adj[(i, j)] = w;
            }
        }
    }
    adj
}

pub fn normalize(adj: &Matrix) -> Matrix {
    let s = 1.0 / (adj.nrows() as f64).sqrt();
    Mat::from_fn(adj.nrows(), adj.ncols(), |i, j| adj[(i, j)] * s)
}

/// Component label per node, labels in reverse topological order of the condensation.
pub fn strongly_connected_components(adj: &Matrix) -> Vec<usize> {
    let n = adj.nrows();
    let out: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| i != j && adj[(i, j)] != 0.0).collect())
        .collect();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < out[v].len() {
                let w = out[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    comp[w] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}

pub fn component_count(adj: &Matrix) -> usize {
    strongly_connected_components(adj)
        .iter()
        .max()
        .map_or(0, |&c| c + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RepairReport {
    pub self_loops_added: usize,
    pub components_before: usize,
    /// Added inter-component edges as `(from, to)`.
    pub added_edges: Vec<(usize, usize)>,
}

/// Adds unit self-loops and the inter-component edges needed for strong connectivity.
pub fn repair_connectivity<R: Rng + ?Sized>(adj: &Matrix, rng: &mut R) -> (Matrix, RepairReport) {
    repair_connectivity_with(adj, true, rng)
}

/// Components are chained in topological order (skipping links that already
/// exist as paths) and the chain is closed back to the first component.
pub fn repair_connectivity_with<R: Rng + ?Sized>(
    adj: &Matrix,
    self_loops: bool,
    rng: &mut R,
) -> (Matrix, RepairReport) {
    let n = adj.nrows();
    let mut out = adj.clone();
    let mut report = RepairReport::default();
    if self_loops {
        for i in 0..n {
            if out[(i, i)] == 0.0 {
                report.self_loops_added += 1;
            }
            out[(i, i)] = 1.0;
        }
    }
    let comp = strongly_connected_components(&out);
    let k = comp.iter().max().map_or(0, |&c| c + 1);
    report.components_before = k;
    if k <= 1 {
        return (out, report);
    }
    let mut members = vec![Vec::new(); k];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }
    let mut dag = vec![Vec::new(); k];
    for j in 0..n {
        for i in 0..n {
            if out[(i, j)] != 0.0 && comp[i] != comp[j] && !dag[comp[j]].contains(&comp[i]) {
                dag[comp[j]].push(comp[i]);
            }
        }
    }
    // Tarjan labels sinks first; reverse to get sources first.
    let order: Vec<usize> = (0..k).rev().collect();
    let reaches = |from: usize, to: usize| {
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(c) = queue.pop_front() {
            if c == to {
                return true;
            }
            for &d in &dag[c] {
                if !seen[d] {
                    seen[d] = true;
                    queue.push_back(d);
                }
            }
        }
        false
    };
    let pick = |c: usize, rng: &mut R| members[c][rng.random_range(0..members[c].len())];
    let mut links = Vec::new();
    for w in order.windows(2) {
        if !reaches(w[0], w[1]) {
            links.push((w[0], w[1]));
        }
    }
    links.push((order[k - 1], order[0]));
    for (from_c, to_c) in links {
        let from = pick(from_c, rng);
        let to = pick(to_c, rng);
        out[(to, from)] = 1.0;
        report.added_edges.push((from, to));
    }
    (out, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerturbScope {
    /// Only existing edges (nonzero entries).
    #[default]
    Edges,
    /// Every entry, including non-edges.
    AllEntries,
}

/// Adds i.i.d. `U[-delta, delta]` noise to the entries selected by `scope`.
pub fn perturb_edges<R: Rng + ?Sized>(adj: &Matrix, delta: f64, scope: PerturbScope, rng: &mut R) -> Matrix {
    let mut out = adj.clone();
    if delta <= 0.0 {
        return out;
    }
    for j in 0..adj.ncols() {
        for i in 0..adj.nrows() {
            if scope == PerturbScope::AllEntries || adj[(i, j)] != 0.0 {
                out[(i, j)] += rng.random_range(-delta..=delta);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSelection {
    pub input_nodes: Vec<usize>,
    pub output_nodes: Vec<usize>,
}

impl NodeSelection {
    /// `B` with column `k` equal to the basis vector of the `k`-th input node.
    pub fn input_matrix(&self, n: usize) -> Matrix {
        let mut b = Mat::zeros(n, self.input_nodes.len());
        for (k, &i) in self.input_nodes.iter().enumerate() {
            b[(i, k)] = 1.0;
        }
        b
    }

    /// `C` with row `k` equal to the basis vector of the `k`-th output node.
    pub fn output_matrix(&self, n: usize) -> Matrix {
        let mut c = Mat::zeros(self.output_nodes.len(), n);
        for (k, &i) in self.output_nodes.iter().enumerate() {
            c[(k, i)] = 1.0;
        }
        c
    }
}

/// Uniform sampling without replacement of `m` input and `p` output nodes.
pub fn select_nodes<R: Rng + ?Sized>(n: usize, m: usize, p: usize, rng: &mut R) -> Result<NodeSelection> {
    if m > n || p > n {
        return Err(Error::Invalid(format!("cannot select m = {m}, p = {p} nodes out of {n}")));
    }
    Ok(NodeSelection {
        input_nodes: sample(rng, n, m).into_vec(),
        output_nodes: sample(rng, n, p).into_vec(),
    })
}

/// Sample, repair, then normalize; returns the adjacency and the repair report.
pub fn connected_erdos_renyi<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> (Matrix, RepairReport) {
    let raw = erdos_renyi(&GraphSpec { normalize: false, ..*spec }, rng);
    let (adj, report) = repair_connectivity(&raw, rng);
    let adj = if spec.normalize { normalize(&adj) } else { adj };
    (adj, report)
}

/// Connected ER network with random input nodes; `p = None` gives full-state output.
pub fn random_network<R: Rng + ?Sized>(
    spec: &GraphSpec,
    m: usize,
    p: Option<usize>,
    rng: &mut R,
) -> Result<(LinearNetwork, NodeSelection)> {
    let (adj, _) = connected_erdos_renyi(spec, rng);
    let n = spec.n;
    let sel = select_nodes(n, m, p.unwrap_or(n), rng)?;
    let c = match p {
        Some(_) => sel.output_matrix(n),
        None => Mat::identity(n, n),
    };
    let net = LinearNetwork::new(adj, sel.input_matrix(n), c)?;
    Ok((net, sel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn cycle_pair() -> Matrix {
        let mut a = Mat::zeros(6, 6);
        for base in [0, 3] {
            for k in 0..3 {
                a[(base + (k + 1) % 3, base + k)] = 1.0;
            }
        }
        a
    }

    #[test]
    fn complete_and_empty() {
        let mut rng = seed::rng(1);
        let full = erdos_renyi(&GraphSpec::new(3, 1.0, false, 1).unwrap(), &mut rng);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(full[(i, j)], if i == j { 0.0 } else { 1.0 });
            }
        }
        let empty = erdos_renyi(&GraphSpec::new(5, 0.0, true, 1).unwrap(), &mut rng);
        assert_eq!(empty.norm_l2(), 0.0);
    }

    #[test]
    fn two_cycles_need_two_edges() {
        let mut rng = seed::rng(3);
        let (a, rep) = repair_connectivity(&cycle_pair(), &mut rng);
        assert_eq!(rep.components_before, 2);
        assert_eq!(rep.added_edges.len(), 2);
        assert_eq!(rep.self_loops_added, 6);
        assert_eq!(component_count(&a), 1);
    }

    #[test]
    fn connected_graph_gets_only_loops() {
        let mut ring = Mat::zeros(4, 4);
        for k in 0..4 {
            ring[((k + 1) % 4, k)] = 1.0;
        }
        let (a, rep) = repair_connectivity(&ring, &mut seed::rng(0));
        assert!(rep.added_edges.is_empty());
        assert_eq!(rep.self_loops_added, 4);
        assert!((0..4).all(|i| a[(i, i)] == 1.0));
    }

    #[test]
    fn empty_graph_repaired() {
        let (a, rep) = repair_connectivity(&Mat::zeros(4, 4), &mut seed::rng(5));
        assert_eq!(rep.components_before, 4);
        assert_eq!(component_count(&a), 1);
    }

    #[test]
    fn loops_can_be_disabled() {
        let (a, rep) = repair_connectivity_with(&cycle_pair(), false, &mut seed::rng(5));
        assert_eq!(rep.self_loops_added, 0);
        assert!((0..6).all(|i| a[(i, i)] == 0.0));
        assert_eq!(component_count(&a), 1);
    }

    #[test]
    fn perturbation_respects_scope() {
        let a = cycle_pair();
        let p = perturb_edges(&a, 0.1, PerturbScope::Edges, &mut seed::rng(2));
        for i in 0..6 {
            for j in 0..6 {
                if a[(i, j)] == 0.0 {
                    assert_eq!(p[(i, j)], 0.0);
                } else {
                    assert!((p[(i, j)] - 1.0).abs() <= 0.1);
                }
            }
        }
        let q = perturb_edges(&a, 0.1, PerturbScope::AllEntries, &mut seed::rng(2));
        assert!((0..6).any(|i| q[(i, (i + 2) % 6)] != 0.0));
    }

    #[test]
    fn selection_builds_basis_maps() {
        let sel = select_nodes(6, 6, 2, &mut seed::rng(9)).unwrap();
        let b = sel.input_matrix(6);
        let btb = b.transpose() * &b;
        assert_eq!(btb, Mat::<f64>::identity(6, 6));
        for j in 0..6 {
            let col: Vec<f64> = (0..6).map(|i| b[(i, j)]).collect();
            assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(col.iter().sum::<f64>(), 1.0);
        }
        let c = sel.output_matrix(6);
        assert_eq!((c.nrows(), c.ncols()), (2, 6));
        assert!(select_nodes(3, 4, 1, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn invalid_spec() {
        assert!(GraphSpec::new(5, 1.5, false, 0).is_err());
        assert!(GraphSpec::new(1, 0.5, false, 0).is_err());
    }
}
