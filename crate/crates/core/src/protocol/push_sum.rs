use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PushSumState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// `W_ij = 1 / d_j^+` when `(j, i)` is an edge. Column stochastic.
pub fn build_pushsum_matrix(g: &DirectedGraph) -> Result<DenseMatrix> {
    g.require_self_loops()?;
    let n = g.node_count();
    let mut w = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let share = 1.0 / g.out_degree(j) as f64;
        for &i in g.out_neighbors(j) {
            w[(i, j)] = share;
        }
    }
    Ok(w)
}

/// One synchronous push-sum round over `g`: every node splits `x` and `y`
/// evenly among its out-neighbors (itself included) and then sums what it
/// received.
pub fn push_sum_step(g: &DirectedGraph, x: &[f64], y: &[f64]) -> Result<PushSumState> {
    g.require_self_loops()?;
    let n = g.node_count();
    if x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "state vectors must have length {n}, got x: {}, y: {}",
            x.len(),
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvariantViolation(format!(
            "y_{i} = {} is not positive",
            y[i]
        )));
    }
    let mut next_x = vec![0.0; n];
    let mut next_y = vec![0.0; n];
    for i in 0..n {
        for &j in g.in_neighbors(i) {
            let d = g.out_degree(j) as f64;
            next_x[i] += x[j] / d;
            next_y[i] += y[j] / d;
        }
    }
    let z = next_x
        .iter()
        .zip(&next_y)
        .enumerate()
        .map(|(i, (&xi, &yi))| {
            if yi > 0.0 {
                Ok(xi / yi)
            } else {
                Err(Error::InvariantViolation(format!("y_{i} became {yi}")))
            }
        })
        .collect::<Result<_>>()?;
    Ok(PushSumState {
        x: next_x,
        y: next_y,
        z,
    })
}
