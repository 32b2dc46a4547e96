//! Monte Carlo realization of the correlated random walk underlying the
//! transport system. Particles carry a state `i` and move by `v^i dt` each
//! step, switching to state `j` with probability `mu_ij dt`; a switching
//! particle is displaced by the new velocity within the same step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::VelocityModel;
use crate::par;
use crate::spectral::{Grid, SpectralField};

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    num_states: usize,
    /// Flattened positions, particle-major.
    positions: Vec<f64>,
    states: Vec<usize>,
    time: f64,
    dt: f64,
    seed: u64,
    velocities: Vec<f64>, // n x d, row-major
    /// Cumulative switch probabilities per state: row i holds the partial
    /// sums of mu_ij dt over j != i.
    switch_cdf: Vec<f64>, // n x n
    step_count: u64,
}

impl ParticleEnsemble {
    /// All particles at the origin with states drawn uniformly. `dt` must
    /// satisfy the admissibility condition `sum_j mu_ij dt <= 1` for all `i`.
    pub fn at_origin(model: &VelocityModel, count: usize, dt: f64, seed: u64) -> Result<Self> {
        let n = model.num_states();
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..count).map(|_| init.random_range(0..n)).collect();
        let positions = vec![0.0; count * model.dim()];
        Self::build(model, positions, states, dt, seed)
    }

    /// Positions sampled from a Gaussian-mixture initial datum, one mixture
    /// weight per bump; states follow the bump components.
    pub fn from_bumps(
        model: &VelocityModel,
        bumps: &[crate::spectral::GaussianBump],
        count: usize,
        dt: f64,
        seed: u64,
    ) -> Result<Self> {
        if bumps.is_empty() {
            return Err(Error::Invalid("particle init needs at least one bump".into()));
        }
        let d = model.dim();
        let weights: Vec<f64> = bumps
            .iter()
            .map(|b| b.amplitude * b.width.powi(d as i32))
            .collect();
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Invalid("particle init needs nonnegative bump masses".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("particle init needs positive total mass".into()));
        }
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = Vec::with_capacity(count * d);
        let mut states = Vec::with_capacity(count);
        for _ in 0..count {
            let mut pick = init.random::<f64>() * total;
            let mut chosen = 0;
            for (bi, w) in weights.iter().enumerate() {
                if pick < *w {
                    chosen = bi;
                    break;
                }
                pick -= w;
                chosen = bi;
            }
            let b = &bumps[chosen];
            for a in 0..d {
                // Box-Muller
                let u1: f64 = init.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = init.random();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                positions.push(b.center[a] + b.width * z);
            }
            states.push(b.component);
        }
        Self::build(model, positions, states, dt, seed)
    }

    fn build(
        model: &VelocityModel,
        positions: Vec<f64>,
        states: Vec<usize>,
        dt: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Invalid("dt must be positive".into()));
        }
        let n = model.num_states();
        for i in 0..n {
            if model.exit_rate(i) * dt > 1.0 {
                return Err(Error::Invalid(format!(
                    "dt = {dt} violates admissibility: state {i} has exit rate {}",
                    model.exit_rate(i)
                )));
            }
        }
        let d = model.dim();
        let mut switch_cdf = vec![0.0; n * n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                if j != i {
                    acc += model.rate(i, j) * dt;
                }
                switch_cdf[i * n + j] = acc;
            }
        }
        let velocities: Vec<f64> = model.velocities().iter().cloned().collect();
        Ok(Self {
            dim: d,
            num_states: n,
            positions,
            states,
            time: 0.0,
            dt,
            seed,
            velocities,
            switch_cdf,
            step_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn position(&self, p: usize) -> &[f64] {
        &self.positions[p * self.dim..(p + 1) * self.dim]
    }

    pub fn state(&self, p: usize) -> usize {
        self.states[p]
    }

    /// Advances every particle by one time step. Per-particle RNG streams are
    /// derived from the master seed, so the result does not depend on the
    /// parallel schedule.
    pub fn step(&mut self) {
        let d = self.dim;
        let n = self.num_states;
        let dt = self.dt;
        let seed = self.seed;
        let step_index = self.step_count;
        let velocities = &self.velocities;
        let cdf = &self.switch_cdf;
        let states = &mut self.states;
        let chunk = 1024;
        par::chunks_mut(&mut self.positions, chunk * d)
            .zip(par::chunks_mut(states, chunk))
            .enumerate()
            .for_each(|(block, (pos_block, state_block))| {
                for (local, state) in state_block.iter_mut().enumerate() {
                    let particle = block * chunk + local;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(particle as u64);
                    rng.set_word_pos(step_index as u128 * 4);
                    let r: f64 = rng.random();
                    let i = *state;
                    // invert the cumulative row: staying corresponds to the
                    // leftover probability p_i at the top of the range
                    let row = &cdf[i * n..(i + 1) * n];
                    let total = row[n - 1];
                    let next = if r < total {
                        row.iter().position(|&c| r < c).unwrap_or(i)
                    } else {
                        i
                    };
                    *state = next;
                    for a in 0..d {
                        pos_block[local * d + a] += velocities[next * d + a] * dt;
                    }
                }
            });
        self.step_count += 1;
        self.time += dt;
    }

    /// Runs steps until the ensemble time reaches `t` (within half a step).
    pub fn advance_to(&mut self, t: f64) {
        while self.time + 0.5 * self.dt < t {
            self.step();
        }
    }

    /// Empirical mean position displacement rate since t = 0.
    pub fn mean_position(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for p in 0..self.len() {
            for (a, m) in mean.iter_mut().enumerate() {
                *m += self.positions[p * self.dim + a];
            }
        }
        for m in mean.iter_mut() {
            *m /= self.len() as f64;
        }
        mean
    }

    /// Per-axis empirical position variance.
    pub fn position_variance(&self) -> Vec<f64> {
        let mean = self.mean_position();
        let mut var = vec![0.0; self.dim];
        for p in 0..self.len() {
            for (a, v) in var.iter_mut().enumerate() {
                let dxa = self.positions[p * self.dim + a] - mean[a];
                *v += dxa * dxa;
            }
        }
        for v in var.iter_mut() {
            *v /= (self.len() - 1) as f64;
        }
        var
    }

    /// Fraction of particles in each state.
    pub fn state_occupancy(&self) -> Vec<f64> {
        let mut occ = vec![0.0; self.num_states];
        for &s in &self.states {
            occ[s] += 1.0;
        }
        for o in occ.iter_mut() {
            *o /= self.len() as f64;
        }
        occ
    }
}

/// Mass-normalized density histogram on the grid, wrapped periodically, then
/// transformed. Block-ordered reduction keeps the result bit-stable.
pub fn density_histogram(ensemble: &ParticleEnsemble, grid: Grid) -> Result<SpectralField> {
    if grid.dim() != ensemble.dim {
        return Err(Error::Invalid("grid and ensemble dimensions differ".into()));
    }
    let cells = grid.num_cells();
    let np = ensemble.len();
    if np == 0 {
        return Err(Error::Invalid("empty ensemble".into()));
    }
    let npoints = grid.points();
    let l = grid.half_width();
    let dx = grid.delta_x();
    let mut counts = vec![0u64; cells];
    for p in 0..np {
        let mut flat = 0usize;
        for a in 0..ensemble.dim {
            let x = ensemble.positions[p * ensemble.dim + a];
            let wrapped = (x + l).rem_euclid(2.0 * l);
            let idx = ((wrapped / dx) as usize).min(npoints - 1);
            flat = flat * npoints + idx;
        }
        counts[flat] += 1;
    }
    let norm = 1.0 / (np as f64 * grid.cell_volume());
    let samples: Vec<f64> = counts.iter().map(|&c| c as f64 * norm).collect();
    SpectralField::from_physical(grid, &[samples])
}

/// Grid `L^1` distance between two scalar fields in physical space.
pub fn l1_distance(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    if u.grid() != v.grid() {
        return Err(Error::Invalid("fields live on different grids".into()));
    }
    let up = &u.to_physical()[0];
    let vp = &v.to_physical()[0];
    Ok(up
        .iter()
        .zip(vp)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * u.grid().cell_volume())
}
