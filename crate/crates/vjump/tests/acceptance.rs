//! End-to-end acceptance suite. Each test prints one pass/fail line for its
//! criterion (visible with `--nocapture`); a failing assertion marks the
//! criterion red.

use ndarray::{array, Array2};
use ndarray_linalg::Eigh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vjump::dispersion::{
    diffusion_matrix_forest, diffusion_matrix_minor, diffusion_matrix_paired,
    drift_velocity_minor, drift_velocity_symmetric, hessian_oracle, spectral_abscissa_scan,
};
use vjump::forests::{forest_minor, IndexSet};
use vjump::linalg::ols_slope;
use vjump::model::{build_transition_matrix, check_irreducible, VelocityModel};
use vjump::particles::{density_histogram, l1_distance, ParticleEnsemble};
use vjump::spectral::{
    comparison_check, l2_distance, lyapunov_functional, solve_hyperbolic_many, solve_parabolic,
    total_density, Eta, GaussianBump, Grid, InitialDatum,
};
use vjump::{forests, Result};

fn pass(criterion: &str) {
    println!("acceptance: {criterion}: pass");
}

/// Random symmetric connected model: a random spanning tree plus up to three
/// extra edges, rates uniform in (0, 1]. Sparse by construction so that
/// forest enumeration stays tractable at n = 10.
fn random_symmetric_model(rng: &mut ChaCha8Rng, n_max: usize, d_max: usize) -> VelocityModel {
    let n = rng.random_range(2..=n_max);
    let d = rng.random_range(1..=d_max);
    let mut velocities = Array2::zeros((n, d));
    for v in velocities.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut rates = Array2::zeros((n, n));
    let connect = |rates: &mut Array2<f64>, i: usize, j: usize, r: f64| {
        rates[[i, j]] = r;
        rates[[j, i]] = r;
    };
    for i in 1..n {
        let parent = rng.random_range(0..i);
        connect(&mut rates, i, parent, 1.0 - rng.random::<f64>());
    }
    for _ in 0..rng.random_range(0..=3) {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && rates[[i, j]] == 0.0 {
            connect(&mut rates, i, j, 1.0 - rng.random::<f64>());
        }
    }
    VelocityModel::new(velocities, rates).unwrap()
}

fn index_subsets(n: usize, k_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..n {
        out.push(vec![i]);
    }
    if k_max >= 2 {
        for i in 0..n {
            for j in i + 1..n {
                out.push(vec![i, j]);
            }
        }
    }
    if k_max >= 3 {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    out.push(vec![i, j, k]);
                }
            }
        }
    }
    out
}

fn goldstein_kac(nu: f64, mu: f64) -> VelocityModel {
    VelocityModel::new(array![[-nu], [nu]], array![[0.0, mu], [mu, 0.0]]).unwrap()
}

fn max_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_01_two_speed_closed_forms() {
    let model = goldstein_kac(1.0, 1.0);
    let drift = drift_velocity_minor(&model).unwrap();
    assert_eq!(drift[0], 0.0, "drift must vanish exactly");
    let dm = diffusion_matrix_minor(&model).unwrap();
    let df = diffusion_matrix_forest(&model).unwrap();
    assert!((dm[[0, 0]] - 1.0).abs() <= 1e-12, "D_minor = {}", dm[[0, 0]]);
    assert!((df[[0, 0]] - 1.0).abs() <= 1e-12, "D_forest = {}", df[[0, 0]]);
    let (_, dh) = hessian_oracle(&model).unwrap();
    assert!((dh[[0, 0]] - 1.0).abs() <= 1e-6, "D_hessian = {}", dh[[0, 0]]);
    pass("1 two-speed closed forms");
}

#[test]
fn criterion_02_matrix_tree_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x02);
    for _ in 0..200 {
        let model = random_symmetric_model(&mut rng, 10, 3);
        let n = model.num_states();
        let b = build_transition_matrix(&model);
        for subset in index_subsets(n, 3.min(n - 1)) {
            let set = IndexSet::new(subset, n).unwrap();
            let via_det = forests::principal_minor(&b, &set);
            let via_forests = forest_minor(&model, &set).unwrap();
            let scale = via_det.abs().max(via_forests.abs()).max(1e-300);
            assert!(
                (via_det - via_forests).abs() <= 1e-10 * scale,
                "minor mismatch: {via_det} vs {via_forests}"
            );
        }
    }
    pass("2 matrix-tree equivalence on 200 random models");
}

#[test]
fn criterion_03_first_minor_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x02);
    for _ in 0..200 {
        let model = random_symmetric_model(&mut rng, 10, 3);
        let n = model.num_states();
        let b = build_transition_matrix(&model);
        let first = forests::principal_minor(&b, &IndexSet::new(vec![0], n).unwrap());
        for i in 1..n {
            let mi = forests::principal_minor(&b, &IndexSet::new(vec![i], n).unwrap());
            assert!(
                (mi - first).abs() <= 1e-10 * first.abs(),
                "det B({}) = {mi} differs from det B(1) = {first}",
                i + 1
            );
        }
    }
    pass("3 first-order minors coincide");
}

#[test]
fn criterion_04_drift_is_mean_velocity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x02);
    for _ in 0..200 {
        let model = random_symmetric_model(&mut rng, 10, 3);
        let via_minors = drift_velocity_minor(&model).unwrap();
        let mean = drift_velocity_symmetric(&model).unwrap();
        let scale = model.max_speed().max(1e-300);
        for (a, b) in via_minors.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-12 * scale, "{via_minors:?} vs {mean:?}");
        }
    }
    pass("4 drift equals the mean velocity");
}

#[test]
fn criterion_05_three_route_agreement_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x05);
    for _ in 0..100 {
        let model = random_symmetric_model(&mut rng, 8, 3);
        let drift = drift_velocity_minor(&model).unwrap();
        let centered = model.shifted(&drift);
        let dm = diffusion_matrix_minor(&centered).unwrap();
        let df = diffusion_matrix_forest(&centered).unwrap();
        let (_, dh) = hessian_oracle(&centered).unwrap();
        let scale = max_norm(&dm).max(1e-300);
        assert!(max_norm(&(&dm - &df)) <= 1e-10 * scale, "minor vs forest");
        assert!(
            max_norm(&(&dm - &dh)) <= 1e-6 * scale,
            "minor vs hessian: rel err {:.3e} on n={} d={} rates=\n{:?}\nD_minor=\n{dm:?}\nD_hessian=\n{dh:?}",
            max_norm(&(&dm - &dh)) / scale,
            model.num_states(),
            model.dim(),
            model.rates()
        );
        let (eigs, _) = dm.eigh(ndarray_linalg::UPLO::Lower).unwrap();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-10 * scale, "PSD violated: {min_eig}");
    }
    pass("5 three diffusion routes agree and D is PSD");
}

/// Random model whose velocities come in antipodal pairs and whose rates are
/// invariant under swapping the two members of any pair; that symmetry is
/// what makes the paired-index second minors equal.
fn random_paired_model(rng: &mut ChaCha8Rng) -> VelocityModel {
    let pairs = rng.random_range(1..=3);
    let d = rng.random_range(1..=3);
    let n = 2 * pairs;
    let mut velocities = Array2::zeros((n, d));
    for p in 0..pairs {
        for a in 0..d {
            let v: f64 = rng.random_range(-1.0..1.0);
            velocities[[2 * p, a]] = v;
            velocities[[2 * p + 1, a]] = -v;
        }
    }
    let mut rates = Array2::zeros((n, n));
    for p in 0..pairs {
        let intra = 0.2 + rng.random::<f64>();
        rates[[2 * p, 2 * p + 1]] = intra;
        rates[[2 * p + 1, 2 * p]] = intra;
        for q in p + 1..pairs {
            let cross = 0.2 + rng.random::<f64>();
            for &i in &[2 * p, 2 * p + 1] {
                for &j in &[2 * q, 2 * q + 1] {
                    rates[[i, j]] = cross;
                    rates[[j, i]] = cross;
                }
            }
        }
    }
    VelocityModel::new(velocities, rates).unwrap()
}

#[test]
fn criterion_06_paired_velocity_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x06);
    for _ in 0..50 {
        let model = random_paired_model(&mut rng);
        let dp = diffusion_matrix_paired(&model).unwrap();
        let dm = diffusion_matrix_minor(&model).unwrap();
        let scale = max_norm(&dm).max(1e-300);
        assert!(
            max_norm(&(&dp - &dm)) <= 1e-10 * scale,
            "paired route mismatch:\n{dp:?}\nvs\n{dm:?}"
        );
    }
    pass("6 paired-velocity reduction matches the minor route");
}

struct DecayFit {
    slope_u: f64,
    slope_diff: f64,
}

fn measure_decay(
    model: &VelocityModel,
    grid: Grid,
    datum: &InitialDatum,
    times: &[f64],
    halved: bool,
) -> Result<DecayFit> {
    let report = vjump::dispersion::diffusion_report(model)?;
    let d_eff = if halved {
        report.d_effective_matrix()
    } else {
        let d = report.d_hessian.len();
        Array2::from_shape_fn((d, d), |(i, j)| report.d_hessian[i][j])
    };
    let f0 = datum.realize(grid, model.num_states())?;
    let u0 = total_density(&f0);
    let fields = solve_hyperbolic_many(model, &f0, times)?;
    let mut log_t = Vec::new();
    let mut log_u = Vec::new();
    let mut log_diff = Vec::new();
    for (&t, f) in times.iter().zip(&fields) {
        let u = total_density(f);
        let upar = solve_parabolic(&d_eff, &u0, t, &report.v_drift)?;
        log_t.push(t.log10());
        log_u.push(u.l2_norm().log10());
        log_diff.push(l2_distance(&u, &upar)?.log10());
    }
    Ok(DecayFit {
        slope_u: ols_slope(&log_t, &log_u).0,
        slope_diff: ols_slope(&log_t, &log_diff).0,
    })
}

fn geometric(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| t0 * (t1 / t0).powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[test]
fn criterion_07_decay_exponents_1d() {
    let model = goldstein_kac(1.0, 1.0);
    let grid = Grid::new(1, 400.0, 4096).unwrap();
    let datum = InitialDatum {
        bumps: vec![
            GaussianBump { component: 0, amplitude: 0.7, center: vec![0.0], width: 1.0 },
            GaussianBump { component: 1, amplitude: 0.3, center: vec![0.0], width: 1.0 },
        ],
        offsets: Vec::new(),
    };
    let times = geometric(10.0, 100.0, 12);
    let fit = measure_decay(&model, grid, &datum, &times, true).unwrap();
    assert!((fit.slope_u + 0.25).abs() <= 0.10, "slope_u = {}", fit.slope_u);
    assert!((fit.slope_diff + 0.75).abs() <= 0.10, "slope_diff = {}", fit.slope_diff);
    // negative control: skipping the 1/2 factor collapses the mismatch rate
    // back to the density rate
    let unhalved = measure_decay(&model, grid, &datum, &times, false).unwrap();
    assert!(
        (unhalved.slope_diff + 0.25).abs() <= 0.10,
        "unhalved control slope = {}",
        unhalved.slope_diff
    );
    pass("7a decay exponents in d = 1 (with negative control)");
}

#[test]
fn criterion_07_decay_exponents_2d() {
    let model = VelocityModel::new(
        array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
        Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 0.25 }),
    )
    .unwrap();
    let grid = Grid::new(2, 100.0, 512).unwrap();
    let datum = InitialDatum {
        bumps: vec![GaussianBump {
            component: 0,
            amplitude: 1.0,
            center: vec![0.0, 0.0],
            width: 1.0,
        }],
        offsets: Vec::new(),
    };
    let times = geometric(4.0, 40.0, 8);
    let fit = measure_decay(&model, grid, &datum, &times, true).unwrap();
    assert!((fit.slope_u + 0.50).abs() <= 0.10, "slope_u = {}", fit.slope_u);
    assert!((fit.slope_diff + 1.00).abs() <= 0.15, "slope_diff = {}", fit.slope_diff);
    pass("7b decay exponents in d = 2");
}

#[test]
fn criterion_08_lyapunov_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x08);
    for trial in 0..20 {
        let model = random_symmetric_model(&mut rng, 6, 2);
        // grids fine enough that the Gaussian data are spectrally resolved;
        // otherwise truncation ringing masquerades as a monotonicity failure
        let grid = if model.dim() == 1 {
            Grid::new(1, 40.0, 512).unwrap()
        } else {
            Grid::new(2, 40.0, 128).unwrap()
        };
        let datum = InitialDatum {
            bumps: (0..model.num_states())
                .map(|c| GaussianBump {
                    component: c,
                    amplitude: rng.random_range(0.1..1.0),
                    center: vec![0.0; model.dim()],
                    width: rng.random_range(2.0..3.0),
                })
                .collect(),
            offsets: Vec::new(),
        };
        let f0 = datum.realize(grid, model.num_states()).unwrap();
        let mut times = vec![0.0];
        times.extend(geometric(0.1, 8.0, 9));
        let fields = solve_hyperbolic_many(&model, &f0, &times).unwrap();
        for eta in [Eta::Square, Eta::Absolute, Eta::PositivePart] {
            let series: Vec<f64> =
                fields.iter().map(|f| lyapunov_functional(f, &eta)).collect();
            let scale = series[0].abs().max(1e-300);
            for w in series.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-8 * scale,
                    "trial {trial}: functional increased: {series:?}"
                );
            }
        }
    }
    pass("8 dissipation functionals are nonincreasing");
}

#[test]
fn criterion_09_comparison_principle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x09);
    for _ in 0..10 {
        let model = random_symmetric_model(&mut rng, 5, 2);
        let grid = if model.dim() == 1 {
            Grid::new(1, 40.0, 256).unwrap()
        } else {
            Grid::new(2, 40.0, 64).unwrap()
        };
        let n = model.num_states();
        let lower = InitialDatum {
            bumps: (0..n)
                .map(|c| GaussianBump {
                    component: c,
                    amplitude: rng.random_range(0.1..0.8),
                    center: vec![0.0; model.dim()],
                    width: 2.0,
                })
                .collect(),
            offsets: Vec::new(),
        };
        // upper datum: same bumps scaled up plus a positive constant
        let upper = InitialDatum {
            bumps: lower
                .bumps
                .iter()
                .map(|b| GaussianBump { amplitude: b.amplitude * 1.5, ..b.clone() })
                .collect(),
            offsets: (0..n).map(|c| (c, 0.25)).collect(),
        };
        let f0 = lower.realize(grid, n).unwrap();
        let g0 = upper.realize(grid, n).unwrap();
        let report = comparison_check(&model, &f0, &g0, &[0.5, 1.0, 2.0, 5.0]).unwrap();
        assert!(
            report.ordered,
            "ordering violated by {} (tol {})",
            report.worst_violation, report.tolerance
        );
    }
    pass("9 comparison principle holds for ordered data");
}

#[test]
fn criterion_10_spectral_bounds() {
    // the five worked-example models
    let models: Vec<VelocityModel> = vec![
        goldstein_kac(1.0, 1.0),
        VelocityModel::new(
            array![[1.0, 0.0], [-0.5, 0.8660254037844386], [-0.5, -0.8660254037844386]],
            Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 }),
        )
        .unwrap(),
        {
            let mut rates = Array2::zeros((4, 4));
            for (i, j, r) in [(0, 1, 1.0), (1, 2, 1.5), (2, 3, 1.0), (3, 0, 1.5)] {
                rates[[i, j]] = r;
                rates[[j, i]] = r;
            }
            VelocityModel::new(
                array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                rates,
            )
            .unwrap()
        },
        {
            let mut rates = Array2::zeros((5, 5));
            for (j, r) in [(1, 1.0), (2, 2.0), (3, 1.0), (4, 2.0)] {
                rates[[0, j]] = r;
                rates[[j, 0]] = r;
            }
            VelocityModel::new(
                array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                rates,
            )
            .unwrap()
        },
    ];
    for (mi, model) in models.iter().enumerate() {
        assert!(vjump::model::check_sk_condition(model).unwrap());
        // generic direction so that all v . kappa are distinct
        let theta: f64 = 0.7;
        let dir: Vec<f64> = match model.dim() {
            1 => vec![1.0],
            _ => vec![theta.cos(), theta.sin()],
        };
        let kappa_top = 1e3 * model.max_rate();
        let kappas: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let r = kappa_top * 10f64.powf(-5.0 * (1.0 - i as f64 / 79.0));
                dir.iter().map(|x| x * r).collect()
            })
            .collect();
        let scan = spectral_abscissa_scan(model, &kappas).unwrap();
        assert!(
            scan.worst_abscissa < 0.0,
            "model {mi}: nonnegative abscissa {}",
            scan.worst_abscissa
        );
        assert!(scan.c0 > 0.0, "model {mi}: c0 = {}", scan.c0);
        let min_exit = (0..model.num_states())
            .map(|i| model.exit_rate(i))
            .fold(f64::INFINITY, f64::min);
        let plateau = scan.samples.last().unwrap().abscissa;
        assert!(
            (plateau + min_exit).abs() <= 0.05 * min_exit,
            "model {mi}: plateau {plateau} vs -{min_exit}"
        );
    }
    pass("10 spectral abscissa negative, c0 > 0, high-frequency plateau");
}

#[test]
fn criterion_11_monte_carlo_consistency() {
    let model = goldstein_kac(1.0, 1.0);
    let grid = Grid::new(1, 40.0, 256).unwrap();
    let bumps = vec![
        GaussianBump { component: 0, amplitude: 0.5, center: vec![0.0], width: 1.0 },
        GaussianBump { component: 1, amplitude: 0.5, center: vec![0.0], width: 1.0 },
    ];
    let datum = InitialDatum { bumps: bumps.clone(), offsets: Vec::new() };
    let t = 4.0;

    let f0 = datum.realize(grid, 2).unwrap();
    let mass: f64 = (0..2).map(|c| f0.mass(c)).sum();
    let fields = solve_hyperbolic_many(&model, &f0, &[t]).unwrap();
    let mut u = total_density(&fields[0]);
    for mode in 0..grid.num_cells() {
        *u.coeff_mut(mode, 0) *= ndarray_linalg::c64::new(1.0 / mass, 0.0);
    }

    let l1_at = |count: usize, seed: u64| -> f64 {
        let mut e = ParticleEnsemble::from_bumps(&model, &bumps, count, 0.01, seed).unwrap();
        e.advance_to(t);
        l1_distance(&density_histogram(&e, grid).unwrap(), &u).unwrap()
    };
    // fit the 1/sqrt(N_p) constant on smaller ensembles
    let mut c = 0.0;
    let mut fits = 0;
    for (count, seed) in [(2000, 21u64), (4000, 22), (8000, 23), (16000, 24)] {
        c += l1_at(count, seed) * (count as f64).sqrt();
        fits += 1;
    }
    c /= fits as f64;
    let np = 100_000;
    let l1_big = l1_at(np, 4242);
    assert!(
        l1_big <= 3.0 * c / (np as f64).sqrt(),
        "L1 = {l1_big} vs fitted bound {}",
        3.0 * c / (np as f64).sqrt()
    );

    // variance against the telegraph closed form
    let mut e = ParticleEnsemble::at_origin(&model, np, 0.005, 99).unwrap();
    e.advance_to(t);
    let var = e.position_variance()[0];
    let expect = t * (1.0 - (1.0 - (-2.0 * t).exp()) / (2.0 * t));
    let stderr = expect * (2.0 / (np as f64 - 1.0)).sqrt();
    assert!(
        (var - expect).abs() <= 3.0 * stderr,
        "variance {var} vs telegraph {expect} (3 SE = {})",
        3.0 * stderr
    );
    pass("11 Monte Carlo density and variance match");
}

#[test]
fn fixtures_are_connected_and_analyzable() {
    // every shipped fixture parses, validates, and yields a full report
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let cfg = vjump::config::RunConfig::from_path(&path).unwrap();
        let model = cfg.build_model().unwrap();
        assert!(check_irreducible(&model).connected, "{path:?}");
        vjump::dispersion::diffusion_report(&model).unwrap();
        seen += 1;
    }
    assert!(seen >= 6, "expected the example fixtures, found {seen}");
}
