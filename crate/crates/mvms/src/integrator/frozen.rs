//! The frozen fast system (the coupled fast pair with the scale set to 1)
//! and long-run sampling of its invariant law.

use rayon::prelude::*;

use super::{
    check_finite_states, Ensemble, GridSpec, InitLaw, PathBundle, ProcessLabel, ResolvedGrid,
    SeedLedger, PAR_CHUNK,
};
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureCache, MeasureView};
use crate::model::ModelSpec;
use crate::stats::pairwise_sum;

/// Frozen-system stepper: the law-carrying leg Y^xi and, optionally, the
/// point-started leg Y^{y0} reading that leg's law, both on shared W.
pub(crate) struct FrozenStepper<'m> {
    model: &'m ModelSpec,
    pub grid: ResolvedGrid,
    pub ledger: SeedLedger,
    pub step: usize,
    pub y_xi: Vec<f64>,
    pub y_y0: Option<Vec<f64>>,
    y_xi_next: Vec<f64>,
    y_y0_next: Option<Vec<f64>>,
}

impl<'m> FrozenStepper<'m> {
    pub fn new(
        model: &'m ModelSpec,
        law_xi: &InitLaw,
        y0: Option<&[f64]>,
        horizon: f64,
        grid: &GridSpec,
        n_particles: usize,
        seed: u64,
    ) -> Result<Self> {
        let m = model.dims.m;
        if law_xi.dim() != m {
            return Err(Error::Config(format!(
                "law_xi dimension {} != fast dimension {m}",
                law_xi.dim()
            )));
        }
        if let Some(y0) = y0 {
            if y0.len() != m {
                return Err(Error::Config(format!("y0 dimension {} != {m}", y0.len())));
            }
        }
        if n_particles < 2 {
            return Err(Error::Config("frozen simulation needs at least 2 particles".into()));
        }
        let resolved = grid.resolve_slow(horizon)?;
        let ledger = SeedLedger::from_grid(seed, n_particles, &resolved);
        let mut y_xi = vec![0.0; n_particles * m];
        for i in 0..n_particles {
            ledger.xi_draw(law_xi, i, &mut y_xi[i * m..(i + 1) * m]);
        }
        let y_y0 = y0.map(|y| {
            let mut buf = vec![0.0; n_particles * m];
            for i in 0..n_particles {
                buf[i * m..(i + 1) * m].copy_from_slice(y);
            }
            buf
        });
        Ok(FrozenStepper {
            model,
            grid: resolved,
            ledger,
            step: 0,
            y_xi_next: y_xi.clone(),
            y_y0_next: y_y0.clone(),
            y_xi,
            y_y0,
        })
    }

    pub fn advance(&mut self) -> Result<()> {
        let m = self.model.dims.m;
        let d2 = self.model.dims.d2;
        let dt = self.grid.dt;
        let step = self.step;
        let nu_cache = MeasureCache::new();
        let y_xi = &self.y_xi;
        let y_y0 = self.y_y0.as_deref();
        let ledger = &self.ledger;
        let model = self.model;

        let update_leg = |states: &[f64], out: &mut [f64], ci: usize| {
            let nu = MeasureView::from_slice(y_xi, m, &nu_cache);
            let mut drift = vec![0.0; m];
            let mut diff = vec![0.0; m * d2];
            let mut dw = vec![0.0; d2];
            for local in 0..out.len() / m {
                let i = ci * PAR_CHUNK + local;
                let y = &states[i * m..(i + 1) * m];
                ledger.fast_increment(i, step, &mut dw);
                (model.b2)(y, &nu, &mut drift);
                (model.sigma2)(y, &nu, &mut diff);
                let o = &mut out[local * m..(local + 1) * m];
                for c in 0..m {
                    let mut noise = 0.0;
                    for k in 0..d2 {
                        noise += diff[c * d2 + k] * dw[k];
                    }
                    o[c] = y[c] + drift[c] * dt + noise;
                }
            }
        };

        match (&mut self.y_y0_next, y_y0) {
            (Some(y0_next), Some(y0_states)) => {
                self.y_xi_next
                    .par_chunks_mut(PAR_CHUNK * m)
                    .zip(y0_next.par_chunks_mut(PAR_CHUNK * m))
                    .enumerate()
                    .for_each(|(ci, (a, b))| {
                        update_leg(y_xi, a, ci);
                        update_leg(y0_states, b, ci);
                    });
            }
            _ => {
                self.y_xi_next
                    .par_chunks_mut(PAR_CHUNK * m)
                    .enumerate()
                    .for_each(|(ci, a)| update_leg(y_xi, a, ci));
            }
        }

        check_finite_states(&self.y_xi_next, m, "Y_eps_xi", step)?;
        if let Some(buf) = &self.y_y0_next {
            check_finite_states(buf, m, "Y_eps_y0", step)?;
        }
        std::mem::swap(&mut self.y_xi, &mut self.y_xi_next);
        if let (Some(a), Some(b)) = (&mut self.y_y0, &mut self.y_y0_next) {
            std::mem::swap(a, b);
        }
        self.step += 1;
        Ok(())
    }
}

/// Simulate the frozen fast pair over `[0, t_frozen]`.
pub fn simulate_frozen(
    model: &ModelSpec,
    law_xi: &InitLaw,
    y0: &[f64],
    t_frozen: f64,
    grid: &GridSpec,
    n_particles: usize,
    seed: u64,
) -> Result<PathBundle> {
    let mut stepper = FrozenStepper::new(model, law_xi, Some(y0), t_frozen, grid, n_particles, seed)?;
    let g = stepper.grid;
    let m = model.dims.m;
    let mut yxi = Ensemble::zeros(n_particles, g.n_frames, m);
    let mut yy0 = Ensemble::zeros(n_particles, g.n_frames, m);
    yxi.frame_mut(0).copy_from_slice(&stepper.y_xi);
    yy0.frame_mut(0).copy_from_slice(stepper.y_y0.as_ref().unwrap());
    for s in 1..=g.n_steps {
        stepper.advance()?;
        if s % g.stride == 0 {
            let f = s / g.stride;
            yxi.frame_mut(f).copy_from_slice(&stepper.y_xi);
            yy0.frame_mut(f).copy_from_slice(stepper.y_y0.as_ref().unwrap());
        }
    }
    let mut ensembles = std::collections::BTreeMap::new();
    ensembles.insert(ProcessLabel::YEpsXi, yxi);
    ensembles.insert(ProcessLabel::YEpsY0, yy0);
    Ok(PathBundle { times: g.frame_times(), ensembles, ledger: stepper.ledger })
}

/// Pooled long-run sample of the frozen system's invariant law, with the
/// pooling layout kept for clustered error bars.
#[derive(Clone, Debug)]
pub struct InvariantEstimate {
    pub measure: EmpiricalMeasure,
    pub n_particles: usize,
    pub n_frames: usize,
}

impl InvariantEstimate {
    /// Mean and a clustered standard error of ∫f dη, treating per-particle
    /// time averages as independent units (particles interact only through
    /// the ensemble law, so this is the honest axis).
    pub fn clustered_integral(&self, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let dim = self.measure.dim();
        let data = self.measure.samples();
        let per_frame = self.n_particles * dim;
        let mut block_means = vec![0.0; self.n_particles];
        let mut scratch = vec![0.0; self.n_frames];
        for i in 0..self.n_particles {
            for fr in 0..self.n_frames {
                let base = fr * per_frame + i * dim;
                scratch[fr] = f(&data[base..base + dim]);
            }
            block_means[i] = pairwise_sum(&scratch) / self.n_frames as f64;
        }
        let mean = crate::stats::mean(&block_means);
        let se = crate::stats::standard_error(&block_means);
        (mean, se)
    }
}

/// Run the frozen law-carrying leg, discard `burn_in`, pool the recorded
/// frames of the following `collect` window across particles into one
/// empirical measure approximating the invariant law.
pub fn estimate_invariant_measure(
    model: &ModelSpec,
    law_xi: &InitLaw,
    burn_in: f64,
    collect: f64,
    grid: &GridSpec,
    n_particles: usize,
    seed: u64,
) -> Result<InvariantEstimate> {
    if !(burn_in > 0.0 && collect > 0.0) {
        return Err(Error::Config("burn_in and collect must be positive".into()));
    }
    let horizon = burn_in + collect;
    let mut stepper = FrozenStepper::new(model, law_xi, None, horizon, grid, n_particles, seed)?;
    let g = stepper.grid;
    let m = model.dims.m;
    let mut pooled: Vec<f64> = Vec::new();
    let mut n_frames = 0usize;
    for s in 1..=g.n_steps {
        stepper.advance()?;
        if s % g.stride == 0 && g.time_at_step(s) > burn_in {
            pooled.extend_from_slice(&stepper.y_xi);
            n_frames += 1;
        }
    }
    Ok(InvariantEstimate {
        measure: EmpiricalMeasure::new(pooled, m)?,
        n_particles,
        n_frames,
    })
}
