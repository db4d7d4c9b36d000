use super::{DenseMatrix, GnnError};
use crate::graph::CadGraph;

/// Symmetrically normalized adjacency with self-loops,
/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, stored as sparse rows.
///
/// `A` is binary and symmetric: edge direction is discarded, parallel
/// edges collapse to one, and self-references are ignored so the diagonal
/// of `A + I` is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    /// Row `i` holds `(j, Â_ij)` for every non-zero, sorted by `j`.
    rows: Vec<Vec<(usize, f64)>>,
    /// Degrees of `A + I`.
    degrees: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(graph: &CadGraph) -> Result<Self, GnnError> {
        Self::from_edges(graph.node_count(), &graph.edges)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GnnError> {
        if n == 0 {
            return Err(GnnError::EmptyGraph);
        }
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(s, t) in edges {
            if s >= n || t >= n {
                return Err(GnnError::DimensionMismatch(format!(
                    "edge ({s}, {t}) out of range for {n} nodes"
                )));
            }
            if s != t {
                neighbours[s].push(t);
                neighbours[t].push(s);
            }
        }
        for list in &mut neighbours {
            list.sort_unstable();
            list.dedup();
        }
        let degrees: Vec<f64> = neighbours.iter().map(|l| l.len() as f64).collect();
        let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let rows = neighbours
            .iter()
            .enumerate()
            .map(|(i, list)| {
                list.iter()
                    .map(|&j| (j, inv_sqrt[i] * 1.0 * inv_sqrt[j]))
                    .collect()
            })
            .collect();
        Ok(Self { rows, degrees })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// Degree of each node in `A + I` (self-loop included).
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.node_count();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `Â · h`. Since `Â` is symmetric this is also `Âᵀ · h`.
    pub fn apply(&self, h: &DenseMatrix) -> Result<DenseMatrix, GnnError> {
        if h.rows() != self.node_count() {
            return Err(GnnError::DimensionMismatch(format!(
                "adjacency is {n}x{n} but features have {} rows",
                h.rows(),
                n = self.node_count()
            )));
        }
        let mut out = DenseMatrix::zeros(h.rows(), h.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let dst = out.row_mut(i);
            for &(j, w) in row {
                for (d, &v) in dst.iter_mut().zip(h.row(j)) {
                    *d += w * v;
                }
            }
        }
        Ok(out)
    }
}
