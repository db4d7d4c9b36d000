use serde::Serialize;

use super::GraphError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub class_id: usize,
    pub graphs: usize,
    pub mean_nodes: f64,
    /// Population variance.
    pub variance_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub classes: Vec<ClassStats>,
    pub total_graphs: usize,
    pub total_nodes: usize,
    pub mean_nodes: f64,
}

/// Per-class mean and population variance of node counts. `samples` holds
/// `(class_id, node_count)` pairs; every class in `0..num_classes` must
/// have at least one sample.
pub fn graph_stats(samples: &[(usize, usize)], num_classes: usize) -> Result<CorpusStats, GraphError> {
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); num_classes];
    for &(class, nodes) in samples {
        if class >= num_classes {
            per_class.resize(class + 1, Vec::new());
        }
        per_class[class].push(nodes as f64);
    }
    let mut classes = Vec::with_capacity(per_class.len());
    for (class_id, counts) in per_class.iter().enumerate() {
        if counts.is_empty() {
            return Err(GraphError::EmptyClass(class_id));
        }
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let variance = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        classes.push(ClassStats {
            class_id,
            graphs: counts.len(),
            mean_nodes: mean,
            variance_nodes: variance,
        });
    }
    let total_nodes: usize = samples.iter().map(|s| s.1).sum();
    Ok(CorpusStats {
        classes,
        total_graphs: samples.len(),
        total_nodes,
        mean_nodes: if samples.is_empty() {
            0.0
        } else {
            total_nodes as f64 / samples.len() as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_class_has_zero_variance() {
        let s = graph_stats(&[(0, 100), (0, 100)], 1).unwrap();
        assert_eq!(s.classes[0].mean_nodes, 100.0);
        assert_eq!(s.classes[0].variance_nodes, 0.0);
    }

    #[test]
    fn two_sizes() {
        // ((100-150)^2 + (200-150)^2) / 2 = 2500
        let s = graph_stats(&[(0, 100), (0, 200)], 1).unwrap();
        assert_eq!(s.classes[0].mean_nodes, 150.0);
        assert_eq!(s.classes[0].variance_nodes, 2500.0);
    }

    #[test]
    fn single_graph_class() {
        let s = graph_stats(&[(0, 7), (1, 3), (1, 5)], 2).unwrap();
        assert_eq!(s.classes[0].variance_nodes, 0.0);
        assert_eq!(s.classes[1].variance_nodes, 1.0);
        assert_eq!(s.total_nodes, 15);
        assert_eq!(s.total_graphs, 3);
    }

    #[test]
    fn empty_class_is_an_error() {
        assert!(matches!(
            graph_stats(&[(0, 7)], 2),
            Err(GraphError::EmptyClass(1))
        ));
    }
}
