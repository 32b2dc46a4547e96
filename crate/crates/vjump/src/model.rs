//! Problem instance: a finite family of velocities in `R^d` with pairwise
//! transition rates, and the associated transition matrix.

use ndarray::{Array2, ArrayView1, ArrayView2};
use ndarray_linalg::SVD;

use crate::error::{Error, Result};

/// Dense-matrix routes are desk scale only.
pub const MAX_STATES: usize = 64;

/// A velocity-jump problem instance: `n` velocities in `R^d` and an `n x n`
/// nonnegative rate matrix with zero diagonal. `rates[[i, j]]` is the rate of
/// switching from velocity `i` to velocity `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    dim: usize,
    velocities: Array2<f64>, // n x d
    rates: Array2<f64>,      // n x n, zero diagonal
    symmetric: bool,
}

impl VelocityModel {
    pub fn new(velocities: Array2<f64>, rates: Array2<f64>) -> Result<Self> {
        let n = velocities.nrows();
        let dim = velocities.ncols();
        if n < 2 {
            return Err(Error::Invalid(format!("need at least 2 velocities, got {n}")));
        }
        if n > MAX_STATES {
            return Err(Error::Invalid(format!(
                "n = {n} exceeds the dense-route cap of {MAX_STATES}"
            )));
        }
        if dim < 1 {
            return Err(Error::Invalid("spatial dimension must be >= 1".into()));
        }
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::Invalid(format!(
                "rate matrix is {}x{}, expected {n}x{n}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        for i in 0..n {
            if rates[[i, i]] != 0.0 {
                return Err(Error::Invalid(format!("rates[{i}][{i}] must be stored as zero")));
            }
            for j in 0..n {
                if !(rates[[i, j]] >= 0.0) {
                    return Err(Error::Invalid(format!(
                        "rates[{i}][{j}] = {} is negative or NaN",
                        rates[[i, j]]
                    )));
                }
            }
        }
        // Bitwise symmetry check: inputs are read, not computed, so exact
        // equality is the right test and silent symmetrization would mask
        // user errors.
        let symmetric = (0..n).all(|i| (0..n).all(|j| rates[[i, j]] == rates[[j, i]]));
        Ok(Self { dim, velocities, rates, symmetric })
    }

    pub fn num_states(&self) -> usize {
        self.velocities.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn velocity(&self, i: usize) -> ArrayView1<'_, f64> {
        self.velocities.row(i)
    }

    pub fn velocities(&self) -> ArrayView2<'_, f64> {
        self.velocities.view()
    }

    pub fn rates(&self) -> ArrayView2<'_, f64> {
        self.rates.view()
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[[i, j]]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.num_states())
            .map(|i| self.velocity(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }

    /// Total exit rate out of state `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rates.row(i).sum()
    }

    /// Replaces each velocity by `v - shift`, keeping the rates.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let mut velocities = self.velocities.clone();
        for mut row in velocities.rows_mut() {
            for (v, s) in row.iter_mut().zip(shift) {
                *v -= s;
            }
        }
        Self { velocities, ..self.clone() }
    }

    /// Undirected arcs `{i < j : rate > 0}`. Zero-rate arcs are absent arcs;
    /// exact zero only, no threshold.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let n = self.num_states();
        let mut arcs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.rates[[i, j]] > 0.0 || self.rates[[j, i]] > 0.0 {
                    arcs.push((i, j));
                }
            }
        }
        arcs
    }
}

/// The transition matrix `B`: row `i` carries the balance of state `i`, so
/// `B[[i, j]] = -rates[j][i]` off the diagonal and `B[[i, i]]` is the total
/// exit rate of state `i`. Columns sum to zero; in the symmetric case `B` is
/// the weighted graph Laplacian of the rate graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: Array2<f64>,
    symmetric: bool,
}

impl TransitionMatrix {
    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.entries.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

pub fn build_transition_matrix(model: &VelocityModel) -> TransitionMatrix {
    let n = model.num_states();
    let mut entries = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                entries[[i, j]] = -model.rate(j, i);
            }
        }
        entries[[i, i]] = model.exit_rate(i);
    }
    TransitionMatrix { entries, symmetric: model.is_symmetric() }
}

/// Connected-component labeling of the rate graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connectivity {
    pub connected: bool,
    /// Component id per vertex, ids numbered by smallest member.
    pub component: Vec<usize>,
    pub num_components: usize,
}

/// True iff the undirected graph with arcs `{i, j : rate > 0}` is connected.
pub fn check_irreducible(model: &VelocityModel) -> Connectivity {
    let n = model.num_states();
    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = count;
        count += 1;
        let mut stack = vec![start];
        component[start] = id;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if j != i
                    && component[j] == usize::MAX
                    && (model.rate(i, j) > 0.0 || model.rate(j, i) > 0.0)
                {
                    component[j] = id;
                    stack.push(j);
                }
            }
        }
    }
    Connectivity { connected: count == 1, component, num_components: count }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanCheck {
    pub spans: bool,
    pub rank: usize,
}

/// Rank of span{v^i - v^j} via SVD, relative tolerance 1e-10 on the top
/// singular value (velocity magnitudes are user-scaled).
pub fn check_span_condition(model: &VelocityModel) -> SpanCheck {
    let n = model.num_states();
    let d = model.dim();
    let mut diffs = Array2::<f64>::zeros((n * (n - 1) / 2, d));
    let mut row = 0;
    for i in 0..n {
        for j in i + 1..n {
            for l in 0..d {
                diffs[[row, l]] = model.velocities()[[i, l]] - model.velocities()[[j, l]];
            }
            row += 1;
        }
    }
    let (_, sv, _) = diffs.svd(false, false).expect("svd of difference matrix");
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let rank = if top == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > 1e-10 * top).count()
    };
    SpanCheck { spans: rank == d, rank }
}

/// Shizuta--Kawashima dissipativity: irreducibility plus the span condition.
/// Sufficient for the uniform spectral bounds used by the decay study.
pub fn check_sk_condition(model: &VelocityModel) -> Result<bool> {
    if !model.is_symmetric() {
        return Err(Error::Precondition(
            "SK check requires symmetric transition rates".into(),
        ));
    }
    Ok(check_irreducible(model).connected && check_span_condition(model).spans)
}
