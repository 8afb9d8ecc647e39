use crate::measure::{Sample, Schema};
use crate::numerics::Matrix;

/// Undirected row graph: rows closer than a distance threshold are linked.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGraph {
    neighbors: Vec<Vec<usize>>,
}

impl RowGraph {
    pub fn from_neighbors(neighbors: Vec<Vec<usize>>) -> Self {
        Self { neighbors }
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Relabels row `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> RowGraph {
        let mut neighbors = vec![Vec::new(); self.n()];
        for (i, ns) in self.neighbors.iter().enumerate() {
            let mut mapped: Vec<usize> = ns.iter().map(|&j| perm[j]).collect();
            mapped.sort_unstable();
            neighbors[perm[i]] = mapped;
        }
        RowGraph { neighbors }
    }

    /// `Â X` with `Â = D̃^-1/2 (A + I) D̃^-1/2`. `Â` is symmetric, so the
    /// same call also applies `Âᵀ` during backpropagation.
    pub fn propagate(&self, x: &Matrix) -> Matrix {
        let n = self.n();
        let d = x.cols();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| 1.0 / ((self.degree(i) + 1) as f64).sqrt())
            .collect();
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let wi = inv_sqrt[i];
            let row_out = out.row_mut(i);
            for (o, &v) in row_out.iter_mut().zip(x.row(i)) {
                *o += wi * wi * v;
            }
            for &j in &self.neighbors[i] {
                let w = wi * inv_sqrt[j];
                for (o, &v) in row_out.iter_mut().zip(x.row(j)) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

/// Links rows `i != j` with `|position_i - position_j| < threshold`.
pub fn build_graph(positions: &[f64], threshold: f64) -> RowGraph {
    let n = positions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]).then(a.cmp(&b)));
    let mut neighbors = vec![Vec::new(); n];
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if positions[j] - positions[i] < threshold {
                neighbors[i].push(j);
                neighbors[j].push(i);
            } else {
                break;
            }
        }
    }
    for ns in &mut neighbors {
        ns.sort_unstable();
    }
    RowGraph { neighbors }
}

/// Graph of a sample's rows using the schema's position column and distance threshold.
pub fn sample_graph(sample: &Sample, schema: &Schema) -> RowGraph {
    let p = schema.position_index();
    let positions: Vec<f64> = sample
        .x_seq
        .iter()
        .map(|row| row[p].as_num().unwrap_or(0.0))
        .collect();
    build_graph(&positions, schema.distance_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_threshold_examples() {
        let g = build_graph(&[0.0, 1.0, 5.0], 2.0);
        assert_eq!(g.num_edges(), 1);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(build_graph(&[0.0, 0.0, 1.0], 0.0).num_edges(), 0);
        let g = build_graph(&[0.0, 10.0, 1e9, -3.0], f64::INFINITY);
        assert_eq!(g.num_edges(), 6);
        assert!(build_graph(&[], 1.0).is_empty());
    }

    #[test]
    fn matches_brute_force() {
        let pos = [3.0, 0.5, 2.9, 7.0, 1.2, 3.0, 6.1];
        let g = build_graph(&pos, 1.5);
        for i in 0..pos.len() {
            for j in 0..pos.len() {
                let expect = i != j && (pos[i] - pos[j]).abs() < 1.5;
                assert_eq!(g.has_edge(i, j), expect, "({i}, {j})");
            }
        }
    }

    #[test]
    fn propagation_of_isolated_rows_is_identity() {
        let g = build_graph(&[0.0, 10.0], 1.0);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(g.propagate(&x), x);
    }

    #[test]
    fn propagation_matches_dense_normalized_adjacency() {
        let g = build_graph(&[0.0, 1.0, 2.0, 9.0], 1.5);
        let n = g.n();
        let mut a = Matrix::identity(n);
        for i in 0..n {
            for &j in g.neighbors(i) {
                a.set(i, j, 1.0);
            }
        }
        let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
        let mut norm = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                norm.set(i, j, a.get(i, j) / (deg[i] * deg[j]).sqrt());
            }
        }
        let x = Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5], vec![4.0]]).unwrap();
        let dense = crate::numerics::matmul(&norm, &x).unwrap();
        let sparse = g.propagate(&x);
        for (a, b) in dense.data().iter().zip(sparse.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
