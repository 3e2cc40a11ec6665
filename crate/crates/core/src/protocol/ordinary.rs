use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::matrix::{require_stochastic, DenseMatrix, Stochasticity, STOCHASTIC_TOL};

/// One step of linear consensus, `x' = A x`, for a row-stochastic `A`.
pub fn ordinary_step(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    require_stochastic(a, Stochasticity::Row, STOCHASTIC_TOL)?;
    a.mul_vec(x)
}

/// Row `i` puts weight `1 / |N_i^-|` on each in-neighbor of `i` (itself
/// included). Every positive entry is at least `1 / n`.
pub fn equal_weight_matrix(g: &DirectedGraph) -> Result<DenseMatrix> {
    g.require_self_loops()?;
    let n = g.node_count();
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let senders = g.in_neighbors(i);
        let w = 1.0 / senders.len() as f64;
        for &j in senders {
            a[(i, j)] = w;
        }
    }
    Ok(a)
}

/// Metropolis weights on a symmetric graph: `A_ij = 1 / (1 + max(d_i, d_j))`
/// for neighbors `i != j`, remaining mass on the diagonal. The result is
/// symmetric and doubly stochastic, with positive entries at least `1 / n`.
///
/// Self-loops in `g` are ignored; the diagonal is always positive.
pub fn metropolis_matrix(g: &DirectedGraph) -> Result<DenseMatrix> {
    let n = g.node_count();
    for &(i, j) in g.edges() {
        if i != j && !g.has_edge(j, i) {
            return Err(Error::InvalidParameter {
                name: "graph",
                reason: format!("metropolis weights need a symmetric graph, {j}->{i} missing"),
            });
        }
    }
    let degree: Vec<usize> = (0..n)
        .map(|i| g.out_neighbors(i).iter().filter(|&&j| j != i).count())
        .collect();
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for &j in g.out_neighbors(i) {
            if j == i {
                continue;
            }
            let w = 1.0 / (1 + degree[i].max(degree[j])) as f64;
            a[(i, j)] = w;
            off += w;
        }
        a[(i, i)] = 1.0 - off;
    }
    Ok(a)
}

/// Symmetric closure of `g` plus self-loops.
pub fn symmetrized(g: &DirectedGraph) -> DirectedGraph {
    g.with_edges(g.edges().iter().map(|&(i, j)| (j, i)))
        .expect("reversed edges stay in range")
        .with_self_loops()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::check_stochastic;

    #[test]
    fn step_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(ordinary_step(&DenseMatrix::identity(3), &x).unwrap(), x);
        let avg = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(ordinary_step(&avg, &[0.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        let bad = DenseMatrix::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            ordinary_step(&bad, &[0.0, 1.0]),
            Err(Error::NotStochastic("row"))
        );
    }

    #[test]
    fn doubly_stochastic_step_preserves_sum() {
        let g = symmetrized(&DirectedGraph::ring(5).unwrap());
        let a = metropolis_matrix(&g).unwrap();
        assert!(check_stochastic(&a, Stochasticity::Column, 1e-12));
        let x = [3.0, -1.0, 4.0, 1.5, 9.0];
        let y = ordinary_step(&a, &x).unwrap();
        assert!((y.iter().sum::<f64>() - x.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn equal_weight_examples() {
        let loops = DirectedGraph::empty(3).with_self_loops();
        assert_eq!(
            equal_weight_matrix(&loops).unwrap(),
            DenseMatrix::identity(3)
        );

        let complete = DirectedGraph::complete(2).unwrap().with_self_loops();
        let a = equal_weight_matrix(&complete).unwrap();
        assert_eq!(
            a,
            DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
        );

        let ring = DirectedGraph::ring(3).unwrap().with_self_loops();
        let a = equal_weight_matrix(&ring).unwrap();
        for i in 0..3 {
            let positive: Vec<f64> = a.row(i).iter().copied().filter(|&v| v > 0.0).collect();
            assert_eq!(positive, vec![0.5, 0.5]);
        }
        assert!(check_stochastic(&a, Stochasticity::Row, 1e-12));

        assert_eq!(
            equal_weight_matrix(&DirectedGraph::ring(3).unwrap()),
            Err(Error::MissingSelfLoop(0))
        );
    }

    #[test]
    fn metropolis_rejects_asymmetric() {
        assert!(metropolis_matrix(&DirectedGraph::ring(3).unwrap()).is_err());
    }
}
