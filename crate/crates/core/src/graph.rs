//! Cutoff neighbor graphs and the per-step feature matrices consumed by the
//! policy network.
//!
//! Edges connect atoms within a distance threshold delta under the minimum
//! image convention (boundary inclusive). Every edge is stored in both
//! directions so neighborhood aggregations reduce over contiguous sender
//! runs. The graph is rebuilt from scratch at every step; at the atom counts
//! this crate targets, the O(N^2) search is not worth optimizing away.

use ndarray::Array2;

use crate::error::Result;
use crate::potentials::PotentialModel;
use crate::system::{vnorm, vsub, Configuration};

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    /// Edge source nodes, sorted; edge e goes senders[e] -> receivers[e].
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    pub n_nodes: usize,
    pub cutoff: f64,
    /// CSR offsets into receivers: edges with sender v live in
    /// offsets[v]..offsets[v+1].
    offsets: Vec<usize>,
}

impl NeighborGraph {
    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }

    /// Nodes adjacent to `v` (edge targets of v's outgoing edges).
    pub fn neighbors_of(&self, v: usize) -> &[usize] {
        &self.receivers[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }
}

/// Build the neighbor graph at threshold `delta`: exactly the pairs with
/// minimum-image distance <= delta, both directions, no self-edges, edges
/// sorted by (sender, receiver).
pub fn build_graph(config: &Configuration, delta: f64) -> NeighborGraph {
    assert!(delta > 0.0, "cutoff must be positive, got {delta}");
    let n = config.n_atoms();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = config
                .box_
                .minimum_image(vsub(config.positions[i], config.positions[j]));
            if vnorm(d) <= delta {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut senders = Vec::new();
    let mut receivers = Vec::new();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for (i, nbrs) in adj.iter().enumerate() {
        // inner pushes are already ascending in j for j > i; the j < i ones
        // arrived in ascending i order too, but interleaved, so sort.
        let mut nbrs = nbrs.clone();
        nbrs.sort_unstable();
        for &j in &nbrs {
            senders.push(i);
            receivers.push(j);
        }
        offsets.push(senders.len());
    }
    NeighborGraph {
        senders,
        receivers,
        n_nodes: n,
        cutoff: delta,
        offsets,
    }
}

/// Node and edge feature matrices for one configuration.
///
/// Node row v: onehot(species_v) || U_v || Sum(U_neighbors) || Mean(U_neighbors),
/// width n_species + 3. Edge row for edge u->v: the minimum-image displacement
/// x_v - x_u followed by (equilibrium length - bond length).
#[derive(Debug, Clone)]
pub struct GraphState {
    pub node_features: Array2<f64>,
    pub edge_features: Array2<f64>,
    pub graph: NeighborGraph,
    /// Per-atom energies backing the node features; total is their sum.
    pub per_atom_energies: Vec<f64>,
}

impl GraphState {
    /// Build graph and features in one shot at the model's cutoff (or a
    /// caller-supplied delta). Positions are wrapped before the neighbor
    /// search.
    pub fn build(
        config: &Configuration,
        model: &PotentialModel,
        delta: Option<f64>,
    ) -> Result<GraphState> {
        let wrapped = config.wrap();
        let delta = delta.unwrap_or_else(|| model.max_cutoff());
        let graph = build_graph(&wrapped, delta);
        let per_atom = model.per_atom_energies(&wrapped, &graph)?;
        let node_features = node_features(&wrapped, &graph, model, &per_atom);
        let edge_features = edge_features(&wrapped, &graph, model);
        Ok(GraphState {
            node_features,
            edge_features,
            graph,
            per_atom_energies: per_atom,
        })
    }

    pub fn total_energy(&self) -> f64 {
        self.per_atom_energies.iter().sum()
    }

    pub fn feature_width(&self) -> usize {
        self.node_features.ncols()
    }
}

/// Node feature matrix; `per_atom` are the model's per-atom energies for
/// this configuration. Isolated nodes get Sum = Mean = 0.
pub fn node_features(
    config: &Configuration,
    graph: &NeighborGraph,
    model: &PotentialModel,
    per_atom: &[f64],
) -> Array2<f64> {
    let n = config.n_atoms();
    let n_species = model.n_species();
    let width = n_species + 3;
    let mut features = Array2::zeros((n, width));
    for v in 0..n {
        features[[v, config.species[v] as usize]] = 1.0;
        let nbrs = graph.neighbors_of(v);
        let sum: f64 = nbrs.iter().map(|&u| per_atom[u]).sum();
        let mean = if nbrs.is_empty() {
            0.0
        } else {
            sum / nbrs.len() as f64
        };
        features[[v, n_species]] = per_atom[v];
        features[[v, n_species + 1]] = sum;
        features[[v, n_species + 2]] = mean;
    }
    features
}

/// Edge feature matrix: columns 0..2 are the minimum-image displacement
/// x_receiver - x_sender, column 3 is equilibrium length minus bond length
/// (positive = compressed).
pub fn edge_features(
    config: &Configuration,
    graph: &NeighborGraph,
    model: &PotentialModel,
) -> Array2<f64> {
    let e = graph.n_edges();
    let mut features = Array2::zeros((e, 4));
    for (idx, (&u, &v)) in graph.senders.iter().zip(&graph.receivers).enumerate() {
        let d = config
            .box_
            .minimum_image(vsub(config.positions[v], config.positions[u]));
        let r = vnorm(d);
        let equi = model.equilibrium_length(config.species[v], config.species[u]);
        features[[idx, 0]] = d[0];
        features[[idx, 1]] = d[1];
        features[[idx, 2]] = d[2];
        features[[idx, 3]] = equi - r;
    }
    features
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{LjParams, PotentialModel};
    use crate::system::SimulationBox;

    fn lj_model() -> PotentialModel {
        PotentialModel::BinaryLj(LjParams::default())
    }

    fn config(positions: Vec<[f64; 3]>, species: Vec<u8>) -> Configuration {
        Configuration::new(positions, species, SimulationBox::cubic(20.0).unwrap()).unwrap()
    }

    #[test]
    fn boundary_distance_is_inclusive() {
        let c = config(vec![[1.0, 1.0, 1.0], [3.5, 1.0, 1.0]], vec![0, 0]);
        let g = build_graph(&c, 2.5);
        assert_eq!(g.n_edges(), 2);
        let g = build_graph(&c, 2.5 - 1e-9);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn triangle_has_six_directed_edges() {
        let c = config(
            vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.5, 1.9, 1.0]],
            vec![0, 0, 0],
        );
        let g = build_graph(&c, 2.5);
        assert_eq!(g.n_edges(), 6);
        assert_eq!(g.senders, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(g.receivers, vec![1, 2, 0, 2, 0, 1]);
        assert_eq!(g.neighbors_of(1), &[0, 2]);
    }

    #[test]
    fn no_self_edges_even_at_zero_distance() {
        let c = config(vec![[1.0, 1.0, 1.0]], vec![0]);
        let g = build_graph(&c, 2.5);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn periodic_neighbor_found_across_boundary() {
        let c = Configuration::new(
            vec![[0.5, 5.0, 5.0], [9.5, 5.0, 5.0]],
            vec![0, 0],
            SimulationBox::cubic(10.0).unwrap(),
        )
        .unwrap();
        let g = build_graph(&c, 1.5);
        assert_eq!(g.n_edges(), 2);
    }

    #[test]
    fn isolated_node_features() {
        let c = config(vec![[1.0, 1.0, 1.0]], vec![0]);
        let state = GraphState::build(&c, &lj_model(), None).unwrap();
        let row: Vec<f64> = state.node_features.row(0).to_vec();
        assert_eq!(row, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dimer_rows_identical() {
        let r = 2f64.powf(1.0 / 6.0);
        let c = config(vec![[1.0, 1.0, 1.0], [1.0 + r, 1.0, 1.0]], vec![0, 0]);
        let state = GraphState::build(&c, &lj_model(), None).unwrap();
        let a: Vec<f64> = state.node_features.row(0).to_vec();
        let b: Vec<f64> = state.node_features.row(1).to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn sum_and_mean_columns_follow_neighbors() {
        // Feed synthetic per-atom energies straight into node_features.
        let c = config(
            vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 2.0, 1.0]],
            vec![0, 0, 0],
        );
        let g = build_graph(&c, 2.5);
        let features = node_features(&c, &g, &lj_model(), &[0.0, -1.0, -3.0]);
        // node 0 neighbors are 1 and 2
        assert_eq!(features[[0, 3]], -4.0);
        assert_eq!(features[[0, 4]], -2.0);
    }

    #[test]
    fn edge_feature_at_equilibrium_is_zero() {
        let r = 2f64.powf(1.0 / 6.0);
        let c = config(vec![[1.0, 1.0, 1.0], [1.0 + r, 1.0, 1.0]], vec![0, 0]);
        let state = GraphState::build(&c, &lj_model(), None).unwrap();
        assert!(state.edge_features[[0, 3]].abs() < 1e-12);
    }

    #[test]
    fn compressed_bond_has_positive_gap_column() {
        let c = config(vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0]], vec![0, 0]);
        let state = GraphState::build(&c, &lj_model(), None).unwrap();
        assert!(state.edge_features[[0, 3]] > 0.0);
    }

    #[test]
    fn swapping_direction_negates_displacement_not_gap() {
        let c = config(
            vec![[1.0, 1.0, 1.0], [2.0, 1.5, 1.25]],
            vec![0, 1],
        );
        let state = GraphState::build(&c, &lj_model(), None).unwrap();
        assert_eq!(state.graph.n_edges(), 2);
        for k in 0..3 {
            assert!(
                (state.edge_features[[0, k]] + state.edge_features[[1, k]]).abs() < 1e-12
            );
        }
        assert!((state.edge_features[[0, 3]] - state.edge_features[[1, 3]]).abs() < 1e-12);
    }

    #[test]
    fn translation_leaves_edges_and_features_unchanged() {
        let c = config(
            vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.5, 2.2, 0.8], [9.0, 9.0, 9.0]],
            vec![0, 1, 0, 1],
        );
        let model = lj_model();
        let s0 = GraphState::build(&c, &model, None).unwrap();
        let shifted = Configuration::new(
            c.positions
                .iter()
                .map(|p| crate::system::vadd(*p, [17.3, -4.2, 8.8]))
                .collect(),
            c.species.clone(),
            c.box_,
        )
        .unwrap();
        let s1 = GraphState::build(&shifted, &model, None).unwrap();
        assert_eq!(s0.graph.senders, s1.graph.senders);
        assert_eq!(s0.graph.receivers, s1.graph.receivers);
        for (a, b) in s0.edge_features.iter().zip(s1.edge_features.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        for (a, b) in s0.node_features.iter().zip(s1.node_features.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn permuting_atoms_permutes_feature_rows() {
        let c = config(
            vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.5, 2.2, 0.8]],
            vec![0, 1, 0],
        );
        let model = lj_model();
        let s0 = GraphState::build(&c, &model, None).unwrap();
        // permutation: new index p[i] holds old atom perm[i]
        let perm = [2usize, 0, 1];
        let permuted = Configuration::new(
            perm.iter().map(|&i| c.positions[i]).collect(),
            perm.iter().map(|&i| c.species[i]).collect(),
            c.box_,
        )
        .unwrap();
        let s1 = GraphState::build(&permuted, &model, None).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for k in 0..s0.feature_width() {
                assert!(
                    (s1.node_features[[new_i, k]] - s0.node_features[[old_i, k]]).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn features_stay_finite_near_overlap() {
        let c = config(vec![[1.0, 1.0, 1.0], [1.0 + 1e-8, 1.0, 1.0]], vec![0, 0]);
        let state = GraphState::build(&c, &lj_model(), None).unwrap();
        assert!(state.node_features.iter().all(|x| x.is_finite()));
        assert!(state.edge_features.iter().all(|x| x.is_finite()));
    }
}
