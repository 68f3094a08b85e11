//! Dissipative Hamiltonian Itô SDE samplers whose invariant measure is the
//! kernel density estimate: full order in the working space, and reduced
//! order on a diffusion basis. Both use the same stochastic Störmer–Verlet step.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::KdeModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, labels, StreamRng};

/// Entries beyond this magnitude abort the integration.
pub const BLOWUP_LIMIT: f64 = 1e8;

/// Integration step, absolute or relative to the KDE bandwidth `s_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSize {
    Absolute(f64),
    BandwidthFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsdeConfig {
    /// Damping `f0`.
    pub f0: f64,
    pub step: StepSize,
    /// Steps before the first retained state.
    pub burn_in: usize,
    /// Steps between retained states.
    pub stride: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Independent chains sharing the `n_mc` realizations.
    pub chains: usize,
}

impl Default for IsdeConfig {
    fn default() -> Self {
        Self {
            f0: 4.0,
            step: StepSize::BandwidthFraction(0.25),
            burn_in: 200,
            stride: 50,
            n_mc: 1,
            seed: 0,
            chains: 1,
        }
    }
}

impl IsdeConfig {
    /// Step size for a KDE with shrunk bandwidth `s_hat`.
    pub fn resolve_step(&self, s_hat: f64) -> f64 {
        match self.step {
            StepSize::Absolute(dr) => dr,
            StepSize::BandwidthFraction(f) => f * s_hat,
        }
    }

    pub fn validate(&self, s_hat: f64) -> Result<()> {
        if !(self.f0 >= 0.0 && self.f0.is_finite()) {
            return Err(Error::invalid("f0 must be non-negative"));
        }
        let dr = self.resolve_step(s_hat);
        if !(dr > 0.0 && dr.is_finite()) {
            return Err(Error::invalid("ISDE step must be positive"));
        }
        if self.f0 * dr >= 4.0 {
            return Err(Error::invalid(format!(
                "f0 * dr = {} must stay below 4",
                self.f0 * dr
            )));
        }
        if self.burn_in < 1 || self.stride < 1 {
            return Err(Error::invalid("burn-in and stride must be at least 1"));
        }
        if self.chains < 1 {
            return Err(Error::invalid("need at least one chain"));
        }
        Ok(())
    }
}

/// Positions and velocities of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct IsdeState {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub step: usize,
}

impl IsdeState {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<IsdeState> {
        if u.dim() != v.dim() {
            return Err(Error::DimensionMismatch {
                what: "velocity entries",
                expected: u.len(),
                found: v.len(),
            });
        }
        Ok(IsdeState { u, v, step: 0 })
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.v.iter().map(|x| x * x).sum::<f64>()
    }
}

/// Reusable buffers for [`verlet_step`].
#[derive(Debug, Clone)]
pub struct StepBuffers {
    half: Array2<f64>,
    force: Array2<f64>,
}

impl StepBuffers {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            half: Array2::zeros((rows, cols)),
            force: Array2::zeros((rows, cols)),
        }
    }
}

/// One stochastic Störmer–Verlet step with `b = f0 dr / 4`:
/// half drift, damped kick with noise, half drift.
///
/// `force(u, out)` writes the force at `u` into `out`.
pub fn verlet_step<F>(
    state: &mut IsdeState,
    force: &mut F,
    f0: f64,
    dr: f64,
    noise: ArrayView2<f64>,
    buffers: &mut StepBuffers,
) -> Result<()>
where
    F: FnMut(ArrayView2<f64>, &mut Array2<f64>),
{
    let b = f0 * dr / 4.0;
    let half_dr = 0.5 * dr;
    let sigma = (f0 * dr).sqrt();
    let inv = 1.0 / (1.0 + b);

    ndarray::Zip::from(&mut buffers.half)
        .and(&state.u)
        .and(&state.v)
        .for_each(|h, &u, &v| *h = u + half_dr * v);
    force(buffers.half.view(), &mut buffers.force);
    ndarray::Zip::from(&mut state.v)
        .and(&buffers.force)
        .and(noise)
        .for_each(|v, &l, &w| *v = ((1.0 - b) * *v + dr * l + sigma * w) * inv);
    ndarray::Zip::from(&mut state.u)
        .and(&buffers.half)
        .and(&state.v)
        .for_each(|u, &h, &v| *u = h + half_dr * v);
    state.step += 1;

    let blown = state
        .u
        .iter()
        .chain(state.v.iter())
        .any(|x| !(x.abs() <= BLOWUP_LIMIT));
    if blown {
        return Err(Error::NumericalBlowup {
            step: state.step,
            limit: BLOWUP_LIMIT,
        });
    }
    Ok(())
}

/// Steps (counted from the initial state) at which states are retained.
pub fn sample_steps(burn_in: usize, stride: usize, n_mc: usize) -> Vec<usize> {
    (0..n_mc).map(|i| burn_in + i * stride).collect()
}

/// Picks states at steps `burn_in, burn_in + stride, ...` from a recorded
/// trajectory whose entry `k` is the state after `k` steps.
pub fn extract_samples<T: Clone>(
    trajectory: &[T],
    burn_in: usize,
    stride: usize,
    n_mc: usize,
) -> Result<Vec<T>> {
    if burn_in < 1 || stride < 1 {
        return Err(Error::invalid("burn-in and stride must be at least 1"));
    }
    let steps = sample_steps(burn_in, stride, n_mc);
    if let Some(&last) = steps.last() {
        if last >= trajectory.len() {
            return Err(Error::invalid(format!(
                "sample at step {last} requested but only {} steps were simulated",
                trajectory.len().saturating_sub(1)
            )));
        }
    }
    Ok(steps.into_iter().map(|k| trajectory[k].clone()).collect())
}

/// Number of realizations produced by `chain`.
fn chain_share(n_mc: usize, chains: usize, chain: usize) -> usize {
    n_mc / chains + usize::from(chain < n_mc % chains)
}

/// Runs one chain: initial velocity and one noise draw per step come from
/// the chain's stream, in that order. `project` maps a full-space matrix
/// (velocity or noise) into the integration space.
#[allow(clippy::too_many_arguments)]
fn run_chain<F, P>(
    mut state: IsdeState,
    full_shape: (usize, usize),
    mut rng: StreamRng,
    mut force: F,
    project: P,
    f0: f64,
    dr: f64,
    burn_in: usize,
    stride: usize,
    n_samples: usize,
) -> Result<Vec<Array2<f64>>>
where
    F: FnMut(ArrayView2<f64>, &mut Array2<f64>),
    P: Fn(Array2<f64>) -> Array2<f64>,
{
    let (rows, cols) = state.u.dim();
    let mut buffers = StepBuffers::new(rows, cols);
    let mut raw = Array2::zeros(full_shape);
    let mut out = Vec::with_capacity(n_samples);
    let mut next = burn_in;
    while out.len() < n_samples {
        rng::fill_standard_normal(&mut rng, &mut raw);
        let noise = project(raw.clone());
        verlet_step(&mut state, &mut force, f0, dr, noise.view(), &mut buffers)?;
        if state.step == next {
            out.push(state.u.clone());
            next += stride;
        }
    }
    Ok(out)
}

/// Full-order sampler: starts at the KDE centres with standard-normal
/// velocities and returns `n_mc` position matrices (nu x N), ordered by chain.
pub fn simulate_full(kde: &KdeModel, config: &IsdeConfig) -> Result<Vec<Array2<f64>>> {
    config.validate(kde.s_hat())?;
    if config.n_mc == 0 {
        return Ok(Vec::new());
    }
    let dr = config.resolve_step(kde.s_hat());
    let shape = kde.centers().dim();
    let per_chain: Vec<Result<Vec<Array2<f64>>>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let n = chain_share(config.n_mc, config.chains, c);
            if n == 0 {
                return Ok(Vec::new());
            }
            let mut rng = rng::stream(config.seed, labels::ISDE_CHAIN, c as u64);
            let v0 = rng::standard_normal_matrix(&mut rng, shape.0, shape.1);
            let state = IsdeState::new(kde.centers().clone(), v0)?;
            run_chain(
                state,
                shape,
                rng,
                |u, out| kde.force_matrix_into(u, out),
                |m| m,
                config.f0,
                dr,
                config.burn_in,
                config.stride,
                n,
            )
        })
        .collect();
    let mut samples = Vec::with_capacity(config.n_mc);
    for chain in per_chain {
        samples.extend(chain?);
    }
    Ok(samples)
}

/// Diffusion basis `g` (N x m) with its left inverse `a = g (g^T g)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    g: Array2<f64>,
    a: Array2<f64>,
}

impl ReducedBasis {
    pub fn new(g: Array2<f64>) -> Result<ReducedBasis> {
        let (n, m) = g.dim();
        if m == 0 || m > n {
            return Err(Error::invalid(format!(
                "reduced basis needs 1 <= m <= N (got m = {m}, N = {n})"
            )));
        }
        let gram = g.t().dot(&g);
        let a = g.dot(&linalg::spd_inverse(gram.view())?);
        let err = linalg::identity_error(g.t().dot(&a).view());
        if !(err <= 1e-10) {
            return Err(Error::NumericalFailure(format!(
                "reduced basis is ill-conditioned: |g^T a - I| = {err:e}"
            )));
        }
        Ok(ReducedBasis { g, a })
    }

    pub fn g(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    /// Projects nu x N onto the basis: `X a`.
    pub fn project(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.a)
    }

    /// Back to nu x N: `Z g^T`.
    pub fn reconstruct(&self, z: ArrayView2<f64>) -> Array2<f64> {
        z.dot(&self.g.t())
    }
}

/// Reduced-order sampler: evolves `Z = U a` and `Y = V a` with force
/// `L(Z g^T) a` and noise `dW a`. Returns `n_mc` reduced matrices (nu x m).
pub fn simulate_reduced(
    kde: &KdeModel,
    basis: &ReducedBasis,
    config: &IsdeConfig,
) -> Result<Vec<Array2<f64>>> {
    config.validate(kde.s_hat())?;
    if basis.g.nrows() != kde.n_centers() {
        return Err(Error::DimensionMismatch {
            what: "basis rows",
            expected: kde.n_centers(),
            found: basis.g.nrows(),
        });
    }
    if config.n_mc == 0 {
        return Ok(Vec::new());
    }
    let dr = config.resolve_step(kde.s_hat());
    let shape = kde.centers().dim();
    let per_chain: Vec<Result<Vec<Array2<f64>>>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let n = chain_share(config.n_mc, config.chains, c);
            if n == 0 {
                return Ok(Vec::new());
            }
            let mut rng = rng::stream(config.seed, labels::ISDE_CHAIN, c as u64);
            let v0 = rng::standard_normal_matrix(&mut rng, shape.0, shape.1);
            let state = IsdeState::new(basis.project(kde.centers().view()), basis.project(v0.view()))?;
            let mut full_force = Array2::zeros(shape);
            run_chain(
                state,
                shape,
                rng,
                |z, out| {
                    let u = basis.reconstruct(z);
                    kde.force_matrix_into(u.view(), &mut full_force);
                    out.assign(&basis.project(full_force.view()));
                },
                |m| basis.project(m.view()),
                config.f0,
                dr,
                config.burn_in,
                config.stride,
                n,
            )
        })
        .collect();
    let mut samples = Vec::with_capacity(config.n_mc);
    for chain in per_chain {
        samples.extend(chain?);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn no_force(_: ArrayView2<f64>, out: &mut Array2<f64>) {
        out.fill(0.0);
    }

    #[test]
    fn scalar_hand_step() {
        let mut s = IsdeState::new(array![[0.0]], array![[1.0]]).unwrap();
        let mut buf = StepBuffers::new(1, 1);
        let mut f = |u: ArrayView2<f64>, out: &mut Array2<f64>| out.assign(&u.mapv(|x| -x));
        verlet_step(&mut s, &mut f, 1.0, 0.1, array![[0.0]].view(), &mut buf).unwrap();
        // U½ = 0.05, b = 0.025, V⁺ = (0.975 - 0.005)/1.025, U⁺ = 0.05 + 0.05 V⁺
        let v = (0.975 - 0.1 * 0.05) / 1.025;
        assert!((s.v[[0, 0]] - v).abs() < 1e-15);
        assert!((s.v[[0, 0]] - 0.946_341_5).abs() < 1e-7);
        assert!((s.u[[0, 0]] - (0.05 + 0.05 * v)).abs() < 1e-15);
        assert!((s.u[[0, 0]] - 0.097_317_1).abs() < 1e-7);
    }

    #[test]
    fn free_flight_without_damping() {
        let mut s = IsdeState::new(array![[1.0, -2.0]], array![[0.5, 3.0]]).unwrap();
        let mut buf = StepBuffers::new(1, 2);
        let zero = Array2::zeros((1, 2));
        let e0 = s.kinetic_energy();
        verlet_step(&mut s, &mut no_force, 0.0, 0.2, zero.view(), &mut buf).unwrap();
        assert!((s.u[[0, 0]] - 1.1).abs() < 1e-15);
        assert!((s.u[[0, 1]] - -1.4).abs() < 1e-15);
        assert!((s.kinetic_energy() - e0).abs() < 1e-12);
    }

    #[test]
    fn damping_envelope() {
        let dr = 1e-3;
        let steps = (1.0 / dr) as usize;
        let mut s = IsdeState::new(array![[0.0]], array![[1.0]]).unwrap();
        let mut buf = StepBuffers::new(1, 1);
        let zero = Array2::zeros((1, 1));
        for _ in 0..steps {
            let before = s.kinetic_energy();
            verlet_step(&mut s, &mut no_force, 4.0, dr, zero.view(), &mut buf).unwrap();
            assert!(s.kinetic_energy() <= before);
        }
        assert!((s.v[[0, 0]] - (-2.0f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let mut s = IsdeState::new(array![[0.0]], array![[1.0]]).unwrap();
        let mut buf = StepBuffers::new(1, 1);
        let mut f = |_: ArrayView2<f64>, out: &mut Array2<f64>| out.fill(1e12);
        let err = verlet_step(&mut s, &mut f, 1.0, 0.1, array![[0.0]].view(), &mut buf).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowup { step: 1, .. }));
    }

    #[test]
    fn extraction_indices() {
        let traj: Vec<usize> = (0..20).collect();
        assert_eq!(extract_samples(&traj, 5, 2, 3).unwrap(), vec![5, 7, 9]);
        assert_eq!(extract_samples(&traj, 1, 1, 3).unwrap(), vec![1, 2, 3]);
        assert!(matches!(extract_samples(&traj, 15, 5, 2), Err(Error::InvalidParameter(_))));
        assert!(extract_samples(&traj, 0, 1, 1).is_err());
    }

    #[test]
    fn chain_shares_cover_all_samples() {
        for (n, c) in [(10, 3), (2, 5), (7, 1)] {
            let total: usize = (0..c).map(|k| chain_share(n, c, k)).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn config_rejects_large_steps() {
        let cfg = IsdeConfig {
            step: StepSize::Absolute(1.0),
            ..Default::default()
        };
        assert!(cfg.validate(0.5).is_err());
        assert!(IsdeConfig::default().validate(0.5).is_ok());
    }

    #[test]
    fn basis_left_inverse() {
        let g = array![[1.0, 0.5], [0.0, 1.0], [2.0, -1.0], [1.0, 1.0]];
        let b = ReducedBasis::new(g.clone()).unwrap();
        assert!(linalg::identity_error(g.t().dot(b.a()).view()) <= 1e-12);
        assert!(ReducedBasis::new(Array2::zeros((2, 3))).is_err());
    }
}
