//! The averaged slow equation: drift construction from an invariant-law
//! cloud, eta-averaged derivatives, and the interacting-particle scheme
//! coupled to a recorded Brownian family.

use std::sync::Arc;

use rayon::prelude::*;

use super::{
    check_finite_states, Ensemble, GridSpec, PathBundle, ProcessLabel, ResolvedGrid, ScaleParams,
    SeedLedger, PAR_CHUNK,
};
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureCache, MeasureView};
use crate::model::ModelSpec;
use crate::stats::pairwise_sum;

/// The averaged drift: x, mu ↦ average over the invariant cloud of
/// b1(x, mu, y_j, eta), with eta itself in the measure slot (the product
/// structure of the invariant law of the fast pair).
pub struct AveragedDrift {
    model: ModelSpec,
    eta: Arc<EmpiricalMeasure>,
    /// Precomputed cloud average of the fast part when the model declares
    /// the additive split; value-identical to the generic path.
    split_fast_avg: Option<Vec<f64>>,
}

impl AveragedDrift {
    pub fn eta(&self) -> &EmpiricalMeasure {
        &self.eta
    }

    /// Evaluate the averaged drift into `out` (length n).
    pub fn eval(&self, x: &[f64], mu: &MeasureView, out: &mut [f64]) {
        match (&self.model.b1_split, &self.split_fast_avg) {
            (Some(split), Some(fast_avg)) => {
                (split.slow)(x, mu, out);
                for (o, f) in out.iter_mut().zip(fast_avg) {
                    *o += f;
                }
            }
            _ => self.eval_generic(x, mu, out),
        }
    }

    /// The defining cloud average, independent of any declared split.
    pub fn eval_generic(&self, x: &[f64], mu: &MeasureView, out: &mut [f64]) {
        let n = out.len();
        let eta = &self.eta;
        cloud_average(eta, n, out, |j, buf| {
            (self.model.b1)(x, mu, eta.point(j), &eta.view(), buf);
        });
    }
}

/// Weighted cloud average of a vector-valued kernel over the atoms of
/// `eta`, pairwise-summed per component.
fn cloud_average(
    eta: &EmpiricalMeasure,
    n: usize,
    out: &mut [f64],
    mut kernel: impl FnMut(usize, &mut [f64]),
) {
    let atoms = eta.len();
    let mut buf = vec![0.0; n];
    let mut vals = vec![0.0; atoms * n];
    for j in 0..atoms {
        kernel(j, &mut buf);
        let w = eta.weights().map_or(1.0, |w| w[j] * atoms as f64);
        for c in 0..n {
            vals[c * atoms + j] = w * buf[c];
        }
    }
    for c in 0..n {
        out[c] = pairwise_sum(&vals[c * atoms..(c + 1) * atoms]) / atoms as f64;
    }
}

/// Build the averaged drift from an invariant-law cloud.
pub fn build_averaged_drift(model: &ModelSpec, eta: EmpiricalMeasure) -> Result<AveragedDrift> {
    if eta.is_empty() {
        return Err(Error::Config("averaged drift needs a nonempty invariant cloud".into()));
    }
    if eta.dim() != model.dims.m {
        return Err(Error::Dimension { got: eta.dim(), need: model.dims.m });
    }
    let eta = Arc::new(eta);
    let split_fast_avg = model.b1_split.as_ref().map(|split| {
        let n = model.dims.n;
        let mut out = vec![0.0; n];
        cloud_average(&eta, n, &mut out, |j, buf| {
            (split.fast)(eta.point(j), &eta.view(), buf);
        });
        out
    });
    Ok(AveragedDrift { model: model.clone(), eta, split_fast_avg })
}

/// Derivatives of the averaged coefficients: the invariant-cloud average of
/// the corresponding derivative of b1 (sigma1 never depends on the fast
/// pair, so its derivatives pass through unchanged).
pub struct AveragedDerivs {
    /// ∂_x bbar1(x, mu) · dir
    pub dx: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &mut [f64]) + Send + Sync>,
    /// ∂_mu bbar1(x, mu)(x_tilde) · dir
    pub dmu: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &[f64], &mut [f64]) + Send + Sync>,
    pub dmu_base_free: bool,
    /// ∂_x sigma1(x, mu) · dir
    pub dx_sigma1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &mut [f64]) + Send + Sync>,
    /// ∂_mu sigma1(x, mu)(x_tilde) · dir
    pub dmu_sigma1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &[f64], &mut [f64]) + Send + Sync>,
    pub dmu_sigma1_base_free: bool,
}

/// Build eta-averaged derivative callbacks. With a declared additive split
/// the (y, nu) dependence of ∂_x b1 and ∂_mu b1 vanishes and a single
/// evaluation at the first atom is exact; otherwise the full cloud average
/// runs per call.
pub fn averaged_derivs(model: &ModelSpec, eta: &Arc<EmpiricalMeasure>) -> Result<AveragedDerivs> {
    let d = model.derivs(" averaged derivative construction")?.clone();
    let n = model.dims.n;
    let has_split = model.b1_split.is_some();
    let eta_dx = Arc::clone(eta);
    let dx_b1 = d.dx_b1.clone();
    let dx = Arc::new(
        move |x: &[f64], mu: &MeasureView, dir: &[f64], out: &mut [f64]| {
            if has_split {
                (dx_b1)(x, mu, eta_dx.point(0), &eta_dx.view(), dir, out);
                return;
            }
            cloud_average(&eta_dx, n, out, |j, buf| {
                (dx_b1)(x, mu, eta_dx.point(j), &eta_dx.view(), dir, buf);
            });
        },
    );
    let eta_dmu = Arc::clone(eta);
    let dmu_b1 = d.dmu_b1.clone();
    let dmu = Arc::new(
        move |x: &[f64], mu: &MeasureView, xt: &[f64], dir: &[f64], out: &mut [f64]| {
            if has_split {
                (dmu_b1)(x, mu, eta_dmu.point(0), &eta_dmu.view(), xt, dir, out);
                return;
            }
            cloud_average(&eta_dmu, n, out, |j, buf| {
                (dmu_b1)(x, mu, eta_dmu.point(j), &eta_dmu.view(), xt, dir, buf);
            });
        },
    );
    Ok(AveragedDerivs {
        dx,
        dmu,
        dmu_base_free: d.dmu_b1_base_free,
        dx_sigma1: d.dx_sigma1.clone(),
        dmu_sigma1: d.dmu_sigma1.clone(),
        dmu_sigma1_base_free: d.dmu_sigma1_base_free,
    })
}

pub(crate) struct AveragedStepper<'m> {
    model: &'m ModelSpec,
    drift: &'m AveragedDrift,
    pub grid: ResolvedGrid,
    pub ledger: SeedLedger,
    pub step: usize,
    pub xbar: Vec<f64>,
    xbar_next: Vec<f64>,
}

impl<'m> AveragedStepper<'m> {
    pub fn new(
        model: &'m ModelSpec,
        drift: &'m AveragedDrift,
        scale: &ScaleParams,
        grid: &GridSpec,
        n_particles: usize,
        seed: u64,
        coupled_to: Option<&PathBundle>,
    ) -> Result<Self> {
        scale.validate(model.dims)?;
        let resolved = grid.resolve(scale.t, scale.eps)?;
        let ledger = SeedLedger::from_grid(seed, n_particles, &resolved);
        if let Some(coupled) = coupled_to {
            let c = &coupled.ledger;
            if c.master_seed != seed
                || c.n_particles != n_particles
                || c.n_steps != ledger.n_steps
                || c.noise_atoms != ledger.noise_atoms
                || c.horizon != ledger.horizon
                || c.record_stride != ledger.record_stride
            {
                return Err(Error::GridMismatch(format!(
                    "averaged run (seed {seed}, {} steps, {} atoms) cannot reuse the coupled \
                     bundle's noise (seed {}, {} steps, {} atoms)",
                    ledger.n_steps, ledger.noise_atoms, c.master_seed, c.n_steps, c.noise_atoms
                )));
            }
        }
        let n = model.dims.n;
        let mut xbar = vec![0.0; n_particles * n];
        for i in 0..n_particles {
            ledger.rho_draw(&scale.law_rho, i, &mut xbar[i * n..(i + 1) * n]);
        }
        Ok(AveragedStepper {
            model,
            drift,
            grid: resolved,
            ledger,
            step: 0,
            xbar_next: xbar.clone(),
            xbar,
        })
    }

    pub fn advance(&mut self) -> Result<()> {
        let n = self.model.dims.n;
        let d1 = self.model.dims.d1;
        let dt = self.grid.dt;
        let step = self.step;
        let mu_cache = MeasureCache::new();
        let xbar = &self.xbar;
        let ledger = &self.ledger;
        let model = self.model;
        let drift = self.drift;

        self.xbar_next
            .par_chunks_mut(PAR_CHUNK * n)
            .enumerate()
            .for_each(|(ci, xn)| {
                let mu = MeasureView::from_slice(xbar, n, &mu_cache);
                let mut b = vec![0.0; n];
                let mut s1 = vec![0.0; n * d1];
                let mut db = vec![0.0; d1];
                for local in 0..xn.len() / n {
                    let i = ci * PAR_CHUNK + local;
                    let x = &xbar[i * n..(i + 1) * n];
                    ledger.slow_increment(i, step, 1, &mut db);
                    drift.eval(x, &mu, &mut b);
                    (model.sigma1)(x, &mu, &mut s1);
                    let o = &mut xn[local * n..(local + 1) * n];
                    for c in 0..n {
                        let mut noise = 0.0;
                        for k in 0..d1 {
                            noise += s1[c * d1 + k] * db[k];
                        }
                        o[c] = x[c] + b[c] * dt + noise;
                    }
                }
            });

        check_finite_states(&self.xbar_next, n, "X_bar", step)?;
        std::mem::swap(&mut self.xbar, &mut self.xbar_next);
        self.step += 1;
        Ok(())
    }
}

/// Simulate the averaged slow equation with interacting particles.
///
/// With `coupled_to` supplied, the run draws the identical rho initial
/// values and Brownian increments as the coupled bundle (same master seed
/// and atom layout), which realizes the pathwise coupling behind the strong
/// rate statistic; grids must match exactly.
pub fn simulate_averaged(
    model: &ModelSpec,
    drift: &AveragedDrift,
    scale: &ScaleParams,
    grid: &GridSpec,
    n_particles: usize,
    seed: u64,
    coupled_to: Option<&PathBundle>,
) -> Result<PathBundle> {
    let mut stepper =
        AveragedStepper::new(model, drift, scale, grid, n_particles, seed, coupled_to)?;
    let g = stepper.grid;
    let n = model.dims.n;
    let mut xb = Ensemble::zeros(n_particles, g.n_frames, n);
    xb.frame_mut(0).copy_from_slice(&stepper.xbar);
    for s in 1..=g.n_steps {
        stepper.advance()?;
        if s % g.stride == 0 {
            xb.frame_mut(s / g.stride).copy_from_slice(&stepper.xbar);
        }
    }
    let mut ensembles = std::collections::BTreeMap::new();
    ensembles.insert(ProcessLabel::XBar, xb);
    Ok(PathBundle { times: g.frame_times(), ensembles, ledger: stepper.ledger })
}
