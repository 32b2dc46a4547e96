//! Dispersion relation of the transport system: drift velocity and diffusion
//! matrix by three independent routes, branch tracking, and abscissa scans.
//!
//! Conventions: for a real frequency vector `kappa` the per-mode generator is
//! `M(kappa) = i diag(v^i . kappa) + B` and modes evolve like `e^{lambda t}`
//! with `lambda` an eigenvalue of `-M(kappa)`. The slow branch through 0
//! expands as `lambda(kappa) = -i v_drift . kappa - (1/2) kappa . D kappa + ...`,
//! so the diffusion matrix is minus the Hessian of `Re lambda` at 0.

use ndarray::{Array1, Array2};
use ndarray_linalg::{c64, Eig, Eigh, UPLO};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forests::{self, IndexSet};
use crate::model::{build_transition_matrix, check_irreducible, TransitionMatrix, VelocityModel};

/// `M(kappa) = i diag(v^i . kappa) + B`.
pub fn symbol_matrix(model: &VelocityModel, kappa: &[f64]) -> Array2<c64> {
    let b = build_transition_matrix(model);
    let n = model.num_states();
    let mut m = b.entries().mapv(|x| c64::new(x, 0.0));
    for i in 0..n {
        let phase: f64 = model.velocity(i).iter().zip(kappa).map(|(v, k)| v * k).sum();
        m[[i, i]] += c64::new(0.0, phase);
    }
    m
}

fn minors_first_order(b: &TransitionMatrix) -> Vec<f64> {
    let n = b.size();
    (0..n)
        .map(|i| forests::principal_minor(b, &IndexSet::new(vec![i], n).unwrap()))
        .collect()
}

fn i1_threshold(b: &TransitionMatrix) -> f64 {
    let n = b.size();
    1e-12 * b.norm_max().powi(n as i32 - 1)
}

/// Minor-weighted average of the velocities. Valid for asymmetric rates too.
pub fn drift_velocity_minor(model: &VelocityModel) -> Result<Vec<f64>> {
    let b = build_transition_matrix(model);
    let minors = minors_first_order(&b);
    let i1: f64 = minors.iter().sum();
    if i1.abs() <= i1_threshold(&b) {
        return Err(Error::Precondition(
            "I1(B) vanishes: reducible or degenerate model".into(),
        ));
    }
    let d = model.dim();
    let mut drift = vec![0.0; d];
    for (i, m) in minors.iter().enumerate() {
        for (l, v) in model.velocity(i).iter().enumerate() {
            drift[l] += m * v / i1;
        }
    }
    Ok(drift)
}

/// Arithmetic mean of the velocities; the symmetric-rates closed form.
pub fn drift_velocity_symmetric(model: &VelocityModel) -> Result<Vec<f64>> {
    if !model.is_symmetric() {
        return Err(Error::Precondition(
            "mean-velocity drift formula requires symmetric rates".into(),
        ));
    }
    let n = model.num_states() as f64;
    Ok((0..model.dim())
        .map(|l| model.velocities().column(l).sum() / n)
        .collect())
}

/// Shifts all velocities into the comoving frame, where the slow branch has
/// zero gradient.
pub fn recenter(model: &VelocityModel) -> Result<VelocityModel> {
    let drift = drift_velocity_minor(model)?;
    Ok(model.shifted(&drift))
}

fn check_recentered(model: &VelocityModel) -> Result<()> {
    let drift = drift_velocity_minor(model)?;
    let scale = model.max_speed();
    let mag = drift.iter().map(|x| x * x).sum::<f64>().sqrt();
    if mag > 1e-10 * scale {
        return Err(Error::Precondition(format!(
            "diffusion formula requires zero drift (|v_drift| = {mag:.3e}); recenter first"
        )));
    }
    Ok(())
}

fn sym_outer(u: &[f64], v: &[f64]) -> Array2<f64> {
    let d = u.len();
    let mut m = Array2::zeros((d, d));
    for a in 0..d {
        for b in 0..d {
            m[[a, b]] = 0.5 * (u[a] * v[b] + u[b] * v[a]);
        }
    }
    m
}

fn outer(v: &[f64]) -> Array2<f64> {
    let d = v.len();
    Array2::from_shape_fn((d, d), |(a, b)| v[a] * v[b])
}

/// Second-order-minor route: `D = -(2 / I1) sum_{i<j} B(i,j) (v^i ox v^j)*`.
pub fn diffusion_matrix_minor(model: &VelocityModel) -> Result<Array2<f64>> {
    check_recentered(model)?;
    let b = build_transition_matrix(model);
    let n = model.num_states();
    let i1 = forests::i1(&b);
    if i1.abs() <= i1_threshold(&b) {
        return Err(Error::Precondition("I1(B) vanishes".into()));
    }
    let mut acc = Array2::zeros((model.dim(), model.dim()));
    for i in 0..n {
        for j in i + 1..n {
            let minor = forests::principal_minor(&b, &IndexSet::new(vec![i, j], n).unwrap());
            let vi: Vec<f64> = model.velocity(i).to_vec();
            let vj: Vec<f64> = model.velocity(j).to_vec();
            acc += &(sym_outer(&vi, &vj) * minor);
        }
    }
    Ok(acc * (-2.0 / i1))
}

/// Two-tree forest route: `D = (2 / I1) sum_{F2} mu_{T1} mu_{T2} w(T1) ox w(T1)`
/// with `w(T)` the velocity sum over a tree. Manifestly PSD.
pub fn diffusion_matrix_forest(model: &VelocityModel) -> Result<Array2<f64>> {
    if !model.is_symmetric() {
        return Err(Error::Precondition("forest route requires symmetric rates".into()));
    }
    check_recentered(model)?;
    let family = forests::forest_pairs(model)?;
    let b = build_transition_matrix(model);
    let i1 = forests::i1(&b);
    let mut acc = Array2::zeros((model.dim(), model.dim()));
    for forest in &family.members {
        let w: Vec<f64> = (0..model.dim())
            .map(|l| forest.trees[0].iter().map(|&v| model.velocities()[[v, l]]).sum())
            .collect();
        acc += &(outer(&w) * forest.weight);
    }
    Ok(acc * (2.0 / i1))
}

/// Paired-velocity reduction for models whose velocities come in +/- pairs
/// (optionally one trailing zero velocity):
/// `D = (2 / I1) sum_i B(2i-1, 2i) (v^{2i} ox v^{2i})`, with the second-order
/// minors evaluated through the separating forest families.
pub fn diffusion_matrix_paired(model: &VelocityModel) -> Result<Array2<f64>> {
    if !model.is_symmetric() {
        return Err(Error::Precondition("paired route requires symmetric rates".into()));
    }
    check_recentered(model)?;
    let n = model.num_states();
    let pairs = n / 2;
    let vscale = model.max_speed().max(f64::MIN_POSITIVE);
    for p in 0..pairs {
        let a = model.velocity(2 * p);
        let b = model.velocity(2 * p + 1);
        let mismatch: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x + y).abs()).sum();
        if mismatch > 1e-12 * vscale {
            return Err(Error::Precondition(format!(
                "velocities {} and {} are not an antipodal pair",
                2 * p + 1,
                2 * p + 2
            )));
        }
    }
    if n % 2 == 1 {
        let tail: f64 = model.velocity(n - 1).iter().map(|x| x.abs()).sum();
        if tail > 1e-12 * vscale {
            return Err(Error::Precondition(
                "odd state count requires the last velocity to be zero".into(),
            ));
        }
    }
    // Minor condition: B(2i-1, j) = B(2i, j) for every j outside the pair.
    let b = build_transition_matrix(model);
    let scale = b.norm_max().powi((n as i32 - 2).max(0));
    for p in 0..pairs {
        for j in 0..n {
            if j == 2 * p || j == 2 * p + 1 {
                continue;
            }
            let m1 = forests::principal_minor(&b, &IndexSet::new(vec![2 * p, j], n).unwrap());
            let m2 = forests::principal_minor(&b, &IndexSet::new(vec![2 * p + 1, j], n).unwrap());
            if (m1 - m2).abs() > 1e-10 * scale.max(m1.abs()) {
                return Err(Error::Precondition(format!(
                    "minor equality violated for pair ({}, {}) against index {}: {m1} vs {m2}",
                    2 * p + 1,
                    2 * p + 2,
                    j + 1
                )));
            }
        }
    }
    let family = forests::forest_pairs(model)?;
    let i1 = forests::i1(&b);
    if i1.abs() <= i1_threshold(&b) {
        return Err(Error::Precondition("I1(B) vanishes".into()));
    }
    let mut acc = Array2::zeros((model.dim(), model.dim()));
    for p in 0..pairs {
        let weight: f64 = family
            .separating(2 * p, 2 * p + 1)
            .map(|f| f.weight)
            .sum();
        let v: Vec<f64> = model.velocity(2 * p + 1).to_vec();
        acc += &(outer(&v) * weight);
    }
    Ok(acc * (2.0 / i1))
}

fn eigenvalues_neg_symbol(model: &VelocityModel, kappa: &[f64]) -> Result<Array1<c64>> {
    let m = symbol_matrix(model, kappa).mapv(|x| -x);
    let (vals, _) = m.eig()?;
    Ok(vals)
}

/// Eigenvalue of `-M(kappa)` continuously connected to 0 at `kappa = 0`,
/// tracked by nearest-eigenvalue continuation with adaptive step halving.
/// Errors when the spectral gap collapses along the segment.
pub fn lambda_branch(model: &VelocityModel, kappa: &[f64]) -> Result<c64> {
    let mut s: f64 = 0.0;
    let mut ds: f64 = 1.0;
    let mut current = c64::new(0.0, 0.0);
    while s < 1.0 {
        let s2 = (s + ds).min(1.0);
        let scaled: Vec<f64> = kappa.iter().map(|k| k * s2).collect();
        let vals = eigenvalues_neg_symbol(model, &scaled)?;
        let mut sorted: Vec<c64> = vals.to_vec();
        sorted.sort_by(|a, b| {
            (*a - current)
                .norm()
                .partial_cmp(&(*b - current).norm())
                .unwrap()
        });
        let nearest = sorted[0];
        let moved = (nearest - current).norm();
        let gap = sorted
            .get(1)
            .map(|second| (*second - nearest).norm())
            .unwrap_or(f64::INFINITY);
        if gap > 10.0 * moved {
            current = nearest;
            s = s2;
            ds = (ds * 2.0).min(1.0 - s).max(f64::MIN_POSITIVE);
        } else {
            ds *= 0.5;
            if ds < 1e-6 {
                return Err(Error::Guard(
                    "branch crossing detected while tracking the slow eigenvalue; \
                     reduce |kappa|"
                        .into(),
                ));
            }
        }
    }
    Ok(current)
}

/// Numerical gradient and Hessian of the slow branch at zero frequency:
/// central differences with one Richardson extrapolation. Ground truth for
/// the formula routes. Returns `(v_drift, D)`.
pub fn hessian_oracle(model: &VelocityModel) -> Result<(Vec<f64>, Array2<f64>)> {
    if !check_irreducible(model).connected {
        return Err(Error::Precondition("hessian oracle requires a connected graph".into()));
    }
    let d = model.dim();
    let vmax = model.max_speed();
    // The slow branch is analytic for |kappa| small compared to the spectral
    // gap of B over the top speed; stepping at 1e-2 of that radius keeps the
    // Richardson-extrapolated truncation error ~1e-8 relative while leaving
    // eigenvalue roundoff (~1e-16 |B| / h^2) below it.
    let b = build_transition_matrix(model);
    let bc = b.entries().mapv(|x| c64::new(x, 0.0));
    let (bvals, _) = bc.eig()?;
    let gap = bvals
        .iter()
        .map(|v| v.norm())
        .filter(|&v| v > 1e-12 * b.norm_max().max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    let gap = if gap.is_finite() { gap } else { model.max_rate().max(f64::MIN_POSITIVE) };
    let kappa_scale = if vmax > 0.0 { gap / vmax } else { 1.0 };
    let h = 1e-2 * kappa_scale;

    let lam = |kappa: &[f64]| lambda_branch(model, kappa);
    let axis = |l: usize, step: f64| -> Vec<f64> {
        let mut k = vec![0.0; d];
        k[l] = step;
        k
    };

    let grad_at = |h: f64| -> Result<Vec<c64>> {
        (0..d)
            .map(|l| Ok((lam(&axis(l, h))? - lam(&axis(l, -h))?) / c64::new(2.0 * h, 0.0)))
            .collect()
    };
    let g1 = grad_at(h)?;
    let g2 = grad_at(h / 2.0)?;
    // lambda ~ -i v_drift . kappa, so the drift sits in the imaginary part.
    let drift: Vec<f64> = (0..d)
        .map(|l| -(4.0 * g2[l].im - g1[l].im) / 3.0)
        .collect();

    let hess_at = |h: f64| -> Result<Array2<f64>> {
        let mut m = Array2::zeros((d, d));
        for l in 0..d {
            let plus = lam(&axis(l, h))?.re;
            let minus = lam(&axis(l, -h))?.re;
            m[[l, l]] = (plus + minus) / (h * h);
        }
        for a in 0..d {
            for b in a + 1..d {
                let mut k = vec![0.0; d];
                k[a] = h;
                k[b] = h;
                let pp = lam(&k)?.re;
                k[b] = -h;
                let pm = lam(&k)?.re;
                k[a] = -h;
                let mm = lam(&k)?.re;
                k[b] = h;
                let mp = lam(&k)?.re;
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                m[[a, b]] = v;
                m[[b, a]] = v;
            }
        }
        Ok(m)
    };
    let h1 = hess_at(h)?;
    let h2 = hess_at(h / 2.0)?;
    // D = -Hess(Re lambda), Richardson-extrapolated once.
    let diffusion = (h2 * 4.0 - h1).mapv(|x| -x / 3.0);
    Ok((drift, diffusion))
}

#[derive(Debug, Clone, Serialize)]
pub struct AbscissaSample {
    pub kappa: Vec<f64>,
    pub kappa_norm: f64,
    /// max Re eigenvalue of -M(kappa)
    pub abscissa: f64,
    /// largest c0 admissible at this sample for -c0 |k|^2 / (1 + |k|^2)
    pub c0_local: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbscissaScan {
    pub samples: Vec<AbscissaSample>,
    /// largest uniform constant over the scan; nonpositive flags a violation
    pub c0: f64,
    /// worst (largest) abscissa over nonzero frequencies
    pub worst_abscissa: f64,
}

/// Spectral abscissa of `-M(kappa)` over a frequency list, with the fitted
/// uniform dissipation constant. Violations are reported, not errors.
pub fn spectral_abscissa_scan(model: &VelocityModel, kappas: &[Vec<f64>]) -> Result<AbscissaScan> {
    let mut samples = Vec::with_capacity(kappas.len());
    for kappa in kappas {
        let vals = eigenvalues_neg_symbol(model, kappa)?;
        let abscissa = vals.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        let k2: f64 = kappa.iter().map(|k| k * k).sum();
        let c0_local = if k2 > 0.0 {
            -abscissa * (1.0 + k2) / k2
        } else {
            f64::INFINITY
        };
        samples.push(AbscissaSample {
            kappa: kappa.clone(),
            kappa_norm: k2.sqrt(),
            abscissa,
            c0_local,
        });
    }
    let c0 = samples
        .iter()
        .filter(|s| s.kappa_norm > 0.0)
        .map(|s| s.c0_local)
        .fold(f64::INFINITY, f64::min);
    let worst = samples
        .iter()
        .filter(|s| s.kappa_norm > 0.0)
        .map(|s| s.abscissa)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AbscissaScan { samples, c0, worst_abscissa: worst })
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn max_norm_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteDiscrepancies {
    pub minor_forest: Option<f64>,
    pub minor_hessian: f64,
    pub forest_hessian: Option<f64>,
}

/// Drift and diffusion by every applicable route, with a PSD certificate and
/// pairwise route discrepancies. Serializes to the `report.json` schema.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusionReport {
    pub v_drift: Vec<f64>,
    #[serde(rename = "D_minor")]
    pub d_minor: Vec<Vec<f64>>,
    #[serde(rename = "D_forest")]
    pub d_forest: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D_hessian")]
    pub d_hessian: Vec<Vec<f64>>,
    #[serde(rename = "D_effective")]
    pub d_effective: Vec<Vec<f64>>,
    pub psd_min_eig: f64,
    pub discrepancies: RouteDiscrepancies,
}

impl DiffusionReport {
    pub fn d_effective_matrix(&self) -> Array2<f64> {
        let d = self.d_effective.len();
        Array2::from_shape_fn((d, d), |(i, j)| self.d_effective[i][j])
    }
}

/// Runs the whole analysis for a model: drift, recentering, all diffusion
/// routes (forest route only within the enumeration cap), PSD certificate.
pub fn diffusion_report(model: &VelocityModel) -> Result<DiffusionReport> {
    if !check_irreducible(model).connected {
        return Err(Error::Precondition("irreducibility violated".into()));
    }
    let drift = drift_velocity_minor(model)?;
    let centered = model.shifted(&drift);

    let d_minor = diffusion_matrix_minor(&centered)?;
    let d_forest = if model.is_symmetric()
        && model.num_states() <= forests::MAX_ENUMERATION_STATES
    {
        Some(diffusion_matrix_forest(&centered)?)
    } else {
        None
    };
    let (_, d_hessian) = hessian_oracle(&centered)?;
    let d_effective = d_hessian.mapv(|x| 0.5 * x);

    let (eigs, _) = d_minor.eigh(UPLO::Lower)?;
    let psd_min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);

    let discrepancies = RouteDiscrepancies {
        minor_forest: d_forest.as_ref().map(|f| max_norm_diff(&d_minor, f)),
        minor_hessian: max_norm_diff(&d_minor, &d_hessian),
        forest_hessian: d_forest.as_ref().map(|f| max_norm_diff(f, &d_hessian)),
    };

    Ok(DiffusionReport {
        v_drift: drift,
        d_minor: matrix_rows(&d_minor),
        d_forest: d_forest.as_ref().map(matrix_rows),
        d_hessian: matrix_rows(&d_hessian),
        d_effective: matrix_rows(&d_effective),
        psd_min_eig,
        discrepancies,
    })
}
