//! Skeletal graph and body-part hypergraph over the 25 NTU joints.
//!
//! Joints (0-based, NTU order): 0 spine base, 1 spine mid, 2 neck, 3 head,
//! 4-7 left shoulder/elbow/wrist/hand, 8-11 right shoulder/elbow/wrist/hand,
//! 12-15 left hip/knee/ankle/foot, 16-19 right hip/knee/ankle/foot,
//! 20 spine shoulder, 21 left hand tip, 22 left thumb, 23 right hand tip,
//! 24 right thumb.
//!
//! The default hyperedges are fixed anatomical body parts. They stand in for
//! learned or derived joint groupings and are not a reproduction of any
//! published hyperedge construction.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod joint {
    pub const SPINE_BASE: usize = 0;
    pub const SPINE_MID: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const LEFT_SHOULDER: usize = 4;
    pub const LEFT_ELBOW: usize = 5;
    pub const LEFT_WRIST: usize = 6;
    pub const LEFT_HAND: usize = 7;
    pub const RIGHT_SHOULDER: usize = 8;
    pub const RIGHT_ELBOW: usize = 9;
    pub const RIGHT_WRIST: usize = 10;
    pub const RIGHT_HAND: usize = 11;
    pub const LEFT_HIP: usize = 12;
    pub const LEFT_KNEE: usize = 13;
    pub const LEFT_ANKLE: usize = 14;
    pub const LEFT_FOOT: usize = 15;
    pub const RIGHT_HIP: usize = 16;
    pub const RIGHT_KNEE: usize = 17;
    pub const RIGHT_ANKLE: usize = 18;
    pub const RIGHT_FOOT: usize = 19;
    pub const SPINE_SHOULDER: usize = 20;
    pub const LEFT_HAND_TIP: usize = 21;
    pub const LEFT_THUMB: usize = 22;
    pub const RIGHT_HAND_TIP: usize = 23;
    pub const RIGHT_THUMB: usize = 24;
}

/// The 24 NTU bones as 0-based (child, parent-side) pairs.
pub const NTU_BONES: [(usize, usize); 24] = [
    (0, 1),
    (1, 20),
    (2, 20),
    (3, 2),
    (4, 20),
    (5, 4),
    (6, 5),
    (7, 6),
    (8, 20),
    (9, 8),
    (10, 9),
    (11, 10),
    (12, 0),
    (13, 12),
    (14, 13),
    (15, 14),
    (16, 0),
    (17, 16),
    (18, 17),
    (19, 18),
    (21, 22),
    (22, 7),
    (23, 24),
    (24, 11),
];

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dim("matrix", "rows must form a square matrix"));
        }
        Ok(Matrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks(self.n.max(1)).map(|r| r.iter().sum()).collect()
    }

    /// `self · x` for a row-major `n × f` feature block.
    pub fn apply(&self, x: &[f64], features: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n * features];
        for i in 0..self.n {
            for k in 0..self.n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for f in 0..features {
                    out[i * features + f] += a * x[k * features + f];
                }
            }
        }
        out
    }
}

/// `Λ^{-1/2} A Λ^{-1/2}` with `Λ` the row-sum degree of `a`; a zero degree
/// contributes a zero scale instead of a division by zero.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    if let Some(v) = a.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!(
            "adjacency entries must be finite and non-negative, found {v}"
        )));
    }
    let scale = inv_sqrt_degrees(&a.row_sums());
    Ok(scale_symmetric(a, &scale))
}

fn inv_sqrt_degrees(deg: &[f64]) -> Vec<f64> {
    deg.iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect()
}

fn scale_symmetric(a: &Matrix, scale: &[f64]) -> Matrix {
    let n = a.n;
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out.data[i * n + j] = scale[i] * a.data[i * n + j] * scale[j];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SkeletalGraph {
    pub joint_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub root_joint: usize,
    /// Hop distance of every joint to the root.
    pub hops: Vec<usize>,
    /// Un-normalized spatial partitions: root (self), centripetal, centrifugal.
    pub raw_partitions: Vec<Matrix>,
    /// Partitions scaled by the degree of the full `A + I`.
    pub partitions: Vec<Matrix>,
}

impl SkeletalGraph {
    /// Builds the graph and its spatial-configuration partitions from hop
    /// distances to `root_joint`.
    pub fn from_edges(joint_count: usize, edges: &[(usize, usize)], root_joint: usize) -> Result<Self> {
        if root_joint >= joint_count {
            return Err(Error::Config(format!("root {root_joint} out of range")));
        }
        let mut adj = Matrix::zeros(joint_count);
        for &(i, j) in edges {
            if i >= joint_count || j >= joint_count || i == j {
                return Err(Error::Config(format!("invalid bone ({i}, {j})")));
            }
            if adj.get(i, j) != 0.0 {
                return Err(Error::Config(format!("duplicate bone ({i}, {j})")));
            }
            adj.set(i, j, 1.0);
            adj.set(j, i, 1.0);
        }

        let mut hops = vec![usize::MAX; joint_count];
        hops[root_joint] = 0;
        let mut frontier = std::collections::VecDeque::from([root_joint]);
        while let Some(node) = frontier.pop_front() {
            for next in 0..joint_count {
                if adj.get(node, next) != 0.0 && hops[next] == usize::MAX {
                    hops[next] = hops[node] + 1;
                    frontier.push_back(next);
                }
            }
        }
        if let Some(v) = hops.iter().position(|&h| h == usize::MAX) {
            return Err(Error::Config(format!("joint {v} is disconnected from the root")));
        }

        let mut self_part = Matrix::zeros(joint_count);
        let mut centripetal = Matrix::zeros(joint_count);
        let mut centrifugal = Matrix::zeros(joint_count);
        for i in 0..joint_count {
            self_part.set(i, i, 1.0);
            for j in 0..joint_count {
                if adj.get(i, j) == 0.0 {
                    continue;
                }
                match hops[j].cmp(&hops[i]) {
                    std::cmp::Ordering::Less => centripetal.set(i, j, 1.0),
                    std::cmp::Ordering::Greater => centrifugal.set(i, j, 1.0),
                    std::cmp::Ordering::Equal => self_part.set(i, j, 1.0),
                }
            }
        }
        let raw_partitions = vec![self_part, centripetal, centrifugal];

        let mut full = adj;
        for i in 0..joint_count {
            full.set(i, i, 1.0);
        }
        let scale = inv_sqrt_degrees(&full.row_sums());
        let partitions = raw_partitions
            .iter()
            .map(|p| scale_symmetric(p, &scale))
            .collect();

        Ok(SkeletalGraph {
            joint_count,
            edges: edges.to_vec(),
            root_joint,
            hops,
            raw_partitions,
            partitions,
        })
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.joint_count);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }

    pub fn degree(&self, joint: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(i, j)| i == joint || j == joint)
            .count()
    }

    /// Sum of the normalized partitions applied to `x` (`V × features`).
    pub fn aggregate(&self, x: &[f64], features: usize) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for p in &self.partitions {
            for (o, v) in out.iter_mut().zip(p.apply(x, features)) {
                *o += v;
            }
        }
        out
    }

    /// Graph with joints relabeled so old joint `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Self::from_edges(self.joint_count, &edges, perm[self.root_joint])
    }
}

/// The canonical 25-joint NTU skeleton rooted at the spine base.
pub fn build_ntu_graph() -> SkeletalGraph {
    SkeletalGraph::from_edges(25, &NTU_BONES, joint::SPINE_BASE).expect("NTU bone list is a tree")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedHyperedge {
    pub name: String,
    pub joints: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Hypergraph {
    pub joint_count: usize,
    pub names: Vec<String>,
    pub hyperedges: Vec<Vec<usize>>,
    /// Row-major `V × E` binary incidence.
    pub incidence: Vec<f64>,
    pub edge_weights: Vec<f64>,
    pub vertex_degrees: Vec<f64>,
    pub edge_degrees: Vec<f64>,
}

impl Hypergraph {
    /// Builds a hypergraph and requires every joint to be covered.
    pub fn new(joint_count: usize, hyperedges: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        let hg = Self::with_partial_coverage(joint_count, hyperedges, weights)?;
        if let Some(joint) = hg.vertex_degrees.iter().position(|&d| d == 0.0) {
            return Err(Error::Coverage { joint });
        }
        Ok(hg)
    }

    /// Like [`Hypergraph::new`] but tolerates joints outside every hyperedge;
    /// those joints aggregate to zero.
    pub fn with_partial_coverage(
        joint_count: usize,
        hyperedges: Vec<Vec<usize>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != hyperedges.len() {
            return Err(Error::dim(
                "hypergraph",
                format!("{} weights for {} hyperedges", weights.len(), hyperedges.len()),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::Domain(format!("hyperedge weight must be positive, got {w}")));
        }
        let e = hyperedges.len();
        let mut incidence = vec![0.0; joint_count * e];
        for (ei, edge) in hyperedges.iter().enumerate() {
            if edge.is_empty() {
                return Err(Error::Config(format!("hyperedge {ei} is empty")));
            }
            for &v in edge {
                if v >= joint_count {
                    return Err(Error::Config(format!("joint {v} out of range in hyperedge {ei}")));
                }
                incidence[v * e + ei] = 1.0;
            }
        }
        let vertex_degrees = (0..joint_count)
            .map(|v| (0..e).map(|ei| incidence[v * e + ei] * weights[ei]).sum())
            .collect();
        let edge_degrees = (0..e)
            .map(|ei| (0..joint_count).map(|v| incidence[v * e + ei]).sum())
            .collect();
        Ok(Hypergraph {
            joint_count,
            names: (0..e).map(|i| format!("e{i}")).collect(),
            hyperedges,
            incidence,
            edge_weights: weights,
            vertex_degrees,
            edge_degrees,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn contains(&self, joint: usize, edge: usize) -> bool {
        self.incidence[joint * self.edge_count() + edge] != 0.0
    }

    /// The dense `V × V` operator `Dv^{-1/2} H W De^{-1} Hᵀ Dv^{-1/2}`.
    pub fn operator(&self) -> Matrix {
        let v = self.joint_count;
        let e = self.edge_count();
        let dv = inv_sqrt_degrees(&self.vertex_degrees);
        let mut out = Matrix::zeros(v);
        for i in 0..v {
            for k in 0..v {
                let mut acc = 0.0;
                for ei in 0..e {
                    let de = self.edge_degrees[ei];
                    if de > 0.0 {
                        acc += self.incidence[i * e + ei] * self.edge_weights[ei] / de
                            * self.incidence[k * e + ei];
                    }
                }
                out.set(i, k, dv[i] * acc * dv[k]);
            }
        }
        out
    }

    /// `0` where two joints share a hyperedge, `1` otherwise.
    pub fn relation_classes(&self) -> Vec<usize> {
        let v = self.joint_count;
        let mut rel = vec![1; v * v];
        for edge in &self.hyperedges {
            for &a in edge {
                for &b in edge {
                    rel[a * v + b] = 0;
                }
            }
        }
        rel
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let edges = self
            .hyperedges
            .iter()
            .map(|e| e.iter().map(|&j| perm[j]).collect())
            .collect();
        let mut hg = Self::with_partial_coverage(self.joint_count, edges, self.edge_weights.clone())?;
        hg.names = self.names.clone();
        Ok(hg)
    }

    /// Parses a JSON list of `{"name": ..., "joints": [...]}` objects.
    pub fn from_json(text: &str) -> Result<Self> {
        let parts: Vec<NamedHyperedge> =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        build_bodypart_hypergraph(Some(&parts))
    }
}

/// Default anatomical hyperedges, 0-based joint indices.
pub fn default_body_parts() -> Vec<NamedHyperedge> {
    use joint::*;
    let part = |name: &str, joints: &[usize]| NamedHyperedge {
        name: name.to_string(),
        joints: joints.to_vec(),
    };
    vec![
        part("head", &[NECK, HEAD]),
        part("torso", &[SPINE_BASE, SPINE_MID, SPINE_SHOULDER]),
        part(
            "left_arm",
            &[LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST, LEFT_HAND, LEFT_HAND_TIP, LEFT_THUMB],
        ),
        part(
            "right_arm",
            &[RIGHT_SHOULDER, RIGHT_ELBOW, RIGHT_WRIST, RIGHT_HAND, RIGHT_HAND_TIP, RIGHT_THUMB],
        ),
        part("left_leg", &[LEFT_HIP, LEFT_KNEE, LEFT_ANKLE, LEFT_FOOT]),
        part("right_leg", &[RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE, RIGHT_FOOT]),
    ]
}

/// Body-part hypergraph with unit weights; `parts` overrides the default
/// six anatomical groups and must cover all 25 joints.
pub fn build_bodypart_hypergraph(parts: Option<&[NamedHyperedge]>) -> Result<Hypergraph> {
    let defaults;
    let parts = match parts {
        Some(p) => p,
        None => {
            defaults = default_body_parts();
            &defaults
        }
    };
    let edges: Vec<Vec<usize>> = parts.iter().map(|p| p.joints.clone()).collect();
    let weights = vec![1.0; edges.len()];
    let mut hg = Hypergraph::new(25, edges, weights)?;
    hg.names = parts.iter().map(|p| p.name.clone()).collect();
    Ok(hg)
}

/// Applies the normalized hypergraph operator to `x` (`V × features`, row-major).
pub fn hypergraph_aggregate(x: &[f64], features: usize, hg: &Hypergraph) -> Result<Vec<f64>> {
    if features == 0 || x.len() != hg.joint_count * features {
        return Err(Error::dim(
            "hypergraph_aggregate",
            format!(
                "features hold {} values, expected {} joints × {features}",
                x.len(),
                hg.joint_count
            ),
        ));
    }
    let v = hg.joint_count;
    let e = hg.edge_count();
    let dv = inv_sqrt_degrees(&hg.vertex_degrees);

    // vertex -> hyperedge mean, then hyperedge -> vertex
    let mut edge_feats = vec![0.0; e * features];
    for ei in 0..e {
        let de = hg.edge_degrees[ei];
        if de == 0.0 {
            continue;
        }
        for vi in 0..v {
            if hg.incidence[vi * e + ei] == 0.0 {
                continue;
            }
            for f in 0..features {
                edge_feats[ei * features + f] += dv[vi] * x[vi * features + f] / de;
            }
        }
    }
    let mut out = vec![0.0; v * features];
    for vi in 0..v {
        for ei in 0..e {
            let h = hg.incidence[vi * e + ei];
            if h == 0.0 {
                continue;
            }
            let w = hg.edge_weights[ei] * dv[vi];
            for f in 0..features {
                out[vi * features + f] += w * edge_feats[ei * features + f];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ntu_graph_is_a_connected_tree() {
        let g = build_ntu_graph();
        assert_eq!(g.joint_count, 25);
        assert_eq!(g.edges.len(), 24);
        assert!(g.hops.iter().all(|&h| h < 25));
        assert_eq!(g.root_joint, joint::SPINE_BASE);
    }

    #[test]
    fn joint_degrees_are_between_one_and_four() {
        let g = build_ntu_graph();
        // counted by hand from the bone list
        let expected = [3, 2, 2, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 1, 2, 2, 2, 1, 4, 1, 2, 1, 2];
        for v in 0..25 {
            assert_eq!(g.degree(v), expected[v], "joint {v}");
            assert!((1..=4).contains(&g.degree(v)));
        }
    }

    #[test]
    fn raw_partitions_sum_to_adjacency_plus_identity() {
        let g = build_ntu_graph();
        let a = g.adjacency();
        for i in 0..25 {
            for j in 0..25 {
                let sum: f64 = g.raw_partitions.iter().map(|p| p.get(i, j)).sum();
                let expect = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
                assert_eq!(sum, expect);
                let nonzero = g.raw_partitions.iter().filter(|p| p.get(i, j) != 0.0).count();
                assert!(nonzero <= 1, "partitions overlap at ({i},{j})");
            }
        }
    }

    #[test]
    fn normalized_partitions_sum_to_normalized_full_adjacency() {
        let g = build_ntu_graph();
        let mut full = g.adjacency();
        for i in 0..25 {
            full.set(i, i, 1.0);
        }
        let norm = normalize_adjacency(&full).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                let sum: f64 = g.partitions.iter().map(|p| p.get(i, j)).sum();
                assert!((sum - norm.get(i, j)).abs() < 1e-15);
            }
        }
        for p in &g.partitions {
            assert!(p.data.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn aggregation_matches_neighbor_loops() {
        let g = build_ntu_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let features = 4;
        let x: Vec<f64> = (0..25 * features).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = g.aggregate(&x, features);
        let deg: Vec<f64> = (0..25).map(|v| g.degree(v) as f64 + 1.0).collect();
        for i in 0..25 {
            let mut neighbors = vec![i];
            for &(a, b) in &g.edges {
                if a == i {
                    neighbors.push(b);
                }
                if b == i {
                    neighbors.push(a);
                }
            }
            for f in 0..features {
                let expect: f64 = neighbors
                    .iter()
                    .map(|&j| x[j * features + f] / (deg[i] * deg[j]).sqrt())
                    .sum();
                assert!((got[i * features + f] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_identity_and_all_ones() {
        let id = Matrix::identity(4);
        assert_eq!(normalize_adjacency(&id).unwrap(), id);
        let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let n = normalize_adjacency(&ones).unwrap();
        for v in n.data {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_negative_and_guards_zero_degree() {
        let neg = Matrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(normalize_adjacency(&neg), Err(Error::Domain(_))));
        let iso = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&iso).unwrap();
        assert_eq!(n.data, vec![1.0, 0.0, 0.0, 0.0]);
    }

    fn spectral_radius(m: &Matrix, rng: &mut ChaCha8Rng) -> f64 {
        let mut v: Vec<f64> = (0..m.n).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = m.apply(&v, 1);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }

    #[test]
    fn random_symmetric_normalization_is_symmetric_and_contractive() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let mut a = Matrix::zeros(5);
            for i in 0..5 {
                for j in i..5 {
                    let v = if rng.random_bool(0.6) { rng.random_range(0.0..2.0) } else { 0.0 };
                    a.set(i, j, v);
                    a.set(j, i, v);
                }
            }
            let n = normalize_adjacency(&a).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    assert!((n.get(i, j) - n.get(j, i)).abs() < 1e-15);
                }
            }
            // Non-negative symmetric matrix: the power iteration converges to
            // the Perron root, which bounds the spectrum.
            assert!(spectral_radius(&n, &mut rng) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn default_hypergraph_covers_every_joint_once() {
        let hg = build_bodypart_hypergraph(None).unwrap();
        assert_eq!(hg.edge_count(), 6);
        assert!(hg.vertex_degrees.iter().all(|&d| d == 1.0));
        assert_eq!(hg.edge_degrees.iter().sum::<f64>(), 25.0);
    }

    #[test]
    fn shared_joint_has_degree_two() {
        let mut parts = default_body_parts();
        parts[1].joints.push(joint::LEFT_SHOULDER);
        let hg = build_bodypart_hypergraph(Some(&parts)).unwrap();
        assert_eq!(hg.vertex_degrees[joint::LEFT_SHOULDER], 2.0);
        assert_eq!(hg.edge_degrees[1], 4.0);
    }

    #[test]
    fn single_hyperedge_over_all_joints() {
        let parts = vec![NamedHyperedge {
            name: "all".into(),
            joints: (0..25).collect(),
        }];
        let hg = build_bodypart_hypergraph(Some(&parts)).unwrap();
        assert_eq!(hg.edge_degrees, vec![25.0]);
        assert!(hg.vertex_degrees.iter().all(|&d| d == 1.0));
        let x = vec![2.5; 25 * 2];
        let out = hypergraph_aggregate(&x, 2, &hg).unwrap();
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn uncovered_joint_is_a_coverage_error() {
        let mut parts = default_body_parts();
        parts[0].joints.retain(|&j| j != joint::HEAD);
        let err = build_bodypart_hypergraph(Some(&parts)).unwrap_err();
        assert!(matches!(err, Error::Coverage { joint: 3 }));
    }

    #[test]
    fn disjoint_hyperedges_do_not_mix() {
        let hg = Hypergraph::new(4, vec![vec![0, 1], vec![2, 3]], vec![1.0, 1.0]).unwrap();
        let out = hypergraph_aggregate(&[1.0, 3.0, 100.0, 300.0], 1, &hg).unwrap();
        assert_eq!(out, vec![2.0, 2.0, 200.0, 200.0]);
        let op = hg.operator();
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(op.get(i, j), 0.0);
                assert_eq!(op.get(j, i), 0.0);
            }
        }
    }

    #[test]
    fn toy_hypergraph_matches_explicit_operator() {
        // H = [[1],[1],[0]], W = [1], De = [2], Dv = [1, 1, 0]:
        // the operator is [[.5,.5,0],[.5,.5,0],[0,0,0]].
        let hg = Hypergraph::with_partial_coverage(3, vec![vec![0, 1]], vec![1.0]).unwrap();
        let op = hg.operator();
        let expect = [0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in op.data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let out = hypergraph_aggregate(&[1.0, 3.0, 5.0], 1, &hg).unwrap();
        assert_eq!(out, vec![2.0, 2.0, 0.0]);
        assert_eq!(op.apply(&[1.0, 3.0, 5.0], 1), out);
    }

    #[test]
    fn aggregate_shape_mismatch() {
        let hg = build_bodypart_hypergraph(None).unwrap();
        assert!(matches!(
            hypergraph_aggregate(&[0.0; 24], 1, &hg),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn hyperedges_load_from_json() {
        let text = serde_json::to_string(&default_body_parts()).unwrap();
        let hg = Hypergraph::from_json(&text).unwrap();
        assert_eq!(hg.names[2], "left_arm");
        assert_eq!(hg.edge_count(), 6);
    }
}
