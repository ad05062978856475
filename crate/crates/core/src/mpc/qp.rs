//! Primal active-set solver for dense convex QPs with box constraints:
//!
//! ```text
//! min ½ xᵀ H x + gᵀ x   s.t.   lo ≤ x ≤ hi
//! ```

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Clone, Debug)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    /// Gradient `H x + g` at the solution; negated box multipliers on active entries.
    pub gradient: DVector<f64>,
    pub iterations: usize,
}

fn factor(h: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Ok(c);
    }
    // PSD but singular Hessians (zero input weights) get a tiny ridge.
    let scale = h.diagonal().amax().max(1.0);
    let mut reg = 1e-12 * scale;
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(hr) {
            return Ok(c);
        }
        reg *= 100.0;
    }
    Err(Error::InvalidArgument("QP Hessian is not positive semidefinite".into()))
}

/// Solve from the feasible point nearest to the origin.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<BoxQpSolution> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lo.len() != n || hi.len() != n {
        return Err(Error::shape(format!("{n}-variable QP"), format!("{}x{}", h.nrows(), h.ncols())));
    }
    if lo.iter().zip(hi.iter()).any(|(l, u)| l > u) {
        return Err(Error::InvalidArgument("QP box is empty".into()));
    }

    let mut x = DVector::from_fn(n, |i, _| 0.0f64.clamp(lo[i], hi[i]));
    let mut status = vec![Bound::Free; n];
    let gscale = 1.0 + g.amax();
    let max_iter = 10 * n + 20;

    for iter in 0..max_iter {
        let gradient = h * &x + g;
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == Bound::Free).collect();

        let mut step = DVector::zeros(n);
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| -gradient[free[a]]);
            let pf = factor(&hff)?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                step[i] = pf[a];
            }
        }

        let xscale = 1.0 + x.amax();
        if step.amax() <= 1e-13 * xscale {
            // Stationary on the current face: release the bound with the
            // most wrong-signed multiplier, or stop.
            let tol = 1e-11 * gscale;
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let violation = match status[i] {
                    Bound::Lower => -gradient[i],
                    Bound::Upper => gradient[i],
                    Bound::Free => continue,
                };
                if violation > tol && worst.is_none_or(|(_, w)| violation > w) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                Some((i, _)) => status[i] = Bound::Free,
                None => {
                    return Ok(BoxQpSolution {
                        x,
                        gradient,
                        iterations: iter,
                    })
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let p = step[i];
            let limit = if p < 0.0 {
                (lo[i] - x[i]) / p
            } else if p > 0.0 {
                (hi[i] - x[i]) / p
            } else {
                continue;
            };
            if limit < alpha {
                alpha = limit.max(0.0);
                blocking = Some((i, if p < 0.0 { Bound::Lower } else { Bound::Upper }));
            }
        }
        x.axpy(alpha, &step, 1.0);
        if let Some((i, b)) = blocking {
            x[i] = if b == Bound::Lower { lo[i] } else { hi[i] };
            status[i] = b;
        }
        for i in 0..n {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    }
    let gradient = h * &x + g;
    Ok(BoxQpSolution {
        x,
        gradient,
        iterations: max_iter,
    })
}
