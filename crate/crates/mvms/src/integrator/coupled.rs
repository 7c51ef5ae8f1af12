//! The coupled slow-fast interacting particle system.
//!
//! Per step the scheme is reduce-then-map: empirical measures are frozen
//! from the pre-step ensemble, then every particle updates independently.
//! The two fast components are driven by the same W increments per
//! particle; B and W are independent streams.

use rayon::prelude::*;

use super::{
    check_finite_states, Ensemble, GridSpec, PathBundle, ProcessLabel, ResolvedGrid, ScaleParams,
    SeedLedger, PAR_CHUNK,
};
use crate::error::Result;
use crate::measure::{MeasureCache, MeasureView};
use crate::model::ModelSpec;

pub(crate) struct CoupledStepper<'m> {
    model: &'m ModelSpec,
    pub grid: ResolvedGrid,
    pub ledger: SeedLedger,
    pub step: usize,
    pub x: Vec<f64>,
    pub y_xi: Vec<f64>,
    pub y_y0: Vec<f64>,
    x_next: Vec<f64>,
    y_xi_next: Vec<f64>,
    y_y0_next: Vec<f64>,
}

impl<'m> CoupledStepper<'m> {
    pub fn new(
        model: &'m ModelSpec,
        scale: &ScaleParams,
        grid: &GridSpec,
        n_particles: usize,
        seed: u64,
    ) -> Result<Self> {
        scale.validate(model.dims)?;
        if n_particles < 2 {
            return Err(crate::error::Error::Config(format!(
                "coupled simulation needs at least 2 particles, got {n_particles}"
            )));
        }
        let resolved = grid.resolve(scale.t, scale.eps)?;
        let ledger = SeedLedger::from_grid(seed, n_particles, &resolved);
        let (n, m) = (model.dims.n, model.dims.m);
        let mut x = vec![0.0; n_particles * n];
        let mut y_xi = vec![0.0; n_particles * m];
        let mut y_y0 = vec![0.0; n_particles * m];
        for i in 0..n_particles {
            ledger.rho_draw(&scale.law_rho, i, &mut x[i * n..(i + 1) * n]);
            ledger.xi_draw(&scale.law_xi, i, &mut y_xi[i * m..(i + 1) * m]);
            y_y0[i * m..(i + 1) * m].copy_from_slice(&scale.y0);
        }
        Ok(CoupledStepper {
            model,
            grid: resolved,
            ledger,
            step: 0,
            x_next: x.clone(),
            y_xi_next: y_xi.clone(),
            y_y0_next: y_y0.clone(),
            x,
            y_xi,
            y_y0,
        })
    }

    /// One Euler-Maruyama step of the full system.
    pub fn advance(&mut self) -> Result<()> {
        let dims = self.model.dims;
        let (n, m, d1, d2) = (dims.n, dims.m, dims.d1, dims.d2);
        let dt = self.grid.dt;
        let eps = self.grid.eps;
        let inv_eps = 1.0 / eps;
        let inv_sqrt_eps = inv_eps.sqrt();
        let step = self.step;

        let mu_cache = MeasureCache::new();
        let nu_cache = MeasureCache::new();
        let x = &self.x;
        let y_xi = &self.y_xi;
        let y_y0 = &self.y_y0;
        let ledger = &self.ledger;
        let model = self.model;

        self.x_next
            .par_chunks_mut(PAR_CHUNK * n)
            .zip(self.y_xi_next.par_chunks_mut(PAR_CHUNK * m))
            .zip(self.y_y0_next.par_chunks_mut(PAR_CHUNK * m))
            .enumerate()
            .for_each(|(ci, ((xn, yxin), yy0n))| {
                let mu = MeasureView::from_slice(x, n, &mu_cache);
                let nu = MeasureView::from_slice(y_xi, m, &nu_cache);
                let mut drift1 = vec![0.0; n];
                let mut diff1 = vec![0.0; n * d1];
                let mut drift2 = vec![0.0; m];
                let mut diff2 = vec![0.0; m * d2];
                let mut db = vec![0.0; d1];
                let mut dw = vec![0.0; d2];
                for local in 0..xn.len() / n {
                    let i = ci * PAR_CHUNK + local;
                    let xi_state = &x[i * n..(i + 1) * n];
                    let yxi_state = &y_xi[i * m..(i + 1) * m];
                    let yy0_state = &y_y0[i * m..(i + 1) * m];

                    ledger.slow_increment(i, step, 1, &mut db);
                    ledger.fast_increment(i, step, &mut dw);

                    // Slow component: drift sees the y0-started fast state
                    // and the law of the xi-started one.
                    (model.b1)(xi_state, &mu, yy0_state, &nu, &mut drift1);
                    (model.sigma1)(xi_state, &mu, &mut diff1);
                    let xo = &mut xn[local * n..(local + 1) * n];
                    for c in 0..n {
                        let mut noise = 0.0;
                        for k in 0..d1 {
                            noise += diff1[c * d1 + k] * db[k];
                        }
                        xo[c] = xi_state[c] + drift1[c] * dt + noise;
                    }

                    // Fast pair: both legs read the xi-leg law and the same
                    // W increments.
                    (model.b2)(yxi_state, &nu, &mut drift2);
                    (model.sigma2)(yxi_state, &nu, &mut diff2);
                    let yo = &mut yxin[local * m..(local + 1) * m];
                    for c in 0..m {
                        let mut noise = 0.0;
                        for k in 0..d2 {
                            noise += diff2[c * d2 + k] * dw[k];
                        }
                        yo[c] = yxi_state[c] + drift2[c] * inv_eps * dt + noise * inv_sqrt_eps;
                    }

                    (model.b2)(yy0_state, &nu, &mut drift2);
                    (model.sigma2)(yy0_state, &nu, &mut diff2);
                    let zo = &mut yy0n[local * m..(local + 1) * m];
                    for c in 0..m {
                        let mut noise = 0.0;
                        for k in 0..d2 {
                            noise += diff2[c * d2 + k] * dw[k];
                        }
                        zo[c] = yy0_state[c] + drift2[c] * inv_eps * dt + noise * inv_sqrt_eps;
                    }
                }
            });

        check_finite_states(&self.x_next, n, "X_eps", step)?;
        check_finite_states(&self.y_xi_next, m, "Y_eps_xi", step)?;
        check_finite_states(&self.y_y0_next, m, "Y_eps_y0", step)?;
        std::mem::swap(&mut self.x, &mut self.x_next);
        std::mem::swap(&mut self.y_xi, &mut self.y_xi_next);
        std::mem::swap(&mut self.y_y0, &mut self.y_y0_next);
        self.step += 1;
        Ok(())
    }
}

/// Simulate the coupled slow-fast system with N interacting particles.
///
/// Returns trajectories for X_eps, Y_eps_xi and Y_eps_y0 on the recorded
/// frame grid, plus the seed ledger regenerating all driving noise.
pub fn simulate_coupled(
    model: &ModelSpec,
    scale: &ScaleParams,
    grid: &GridSpec,
    n_particles: usize,
    seed: u64,
) -> Result<PathBundle> {
    let mut stepper = CoupledStepper::new(model, scale, grid, n_particles, seed)?;
    let g = stepper.grid;
    let (n, m) = (model.dims.n, model.dims.m);
    let mut xe = Ensemble::zeros(n_particles, g.n_frames, n);
    let mut yxi = Ensemble::zeros(n_particles, g.n_frames, m);
    let mut yy0 = Ensemble::zeros(n_particles, g.n_frames, m);
    xe.frame_mut(0).copy_from_slice(&stepper.x);
    yxi.frame_mut(0).copy_from_slice(&stepper.y_xi);
    yy0.frame_mut(0).copy_from_slice(&stepper.y_y0);
    for s in 1..=g.n_steps {
        stepper.advance()?;
        if s % g.stride == 0 {
            let f = s / g.stride;
            xe.frame_mut(f).copy_from_slice(&stepper.x);
            yxi.frame_mut(f).copy_from_slice(&stepper.y_xi);
            yy0.frame_mut(f).copy_from_slice(&stepper.y_y0);
        }
    }
    let mut ensembles = std::collections::BTreeMap::new();
    ensembles.insert(ProcessLabel::XEps, xe);
    ensembles.insert(ProcessLabel::YEpsXi, yxi);
    ensembles.insert(ProcessLabel::YEpsY0, yy0);
    Ok(PathBundle { times: g.frame_times(), ensembles, ledger: stepper.ledger })
}
