//! The auxiliary fluctuation process: the raw fluctuation source of the
//! coupled system plus the linearized mean-field dynamics around the
//! averaged path.
//!
//! The coupled and averaged simulations are replayed deterministically from
//! their seed ledgers (replay equality with the recorded bundles is a test
//! invariant), so no per-step noise or state needs to be stored.

use rayon::prelude::*;

use super::averaged::{AveragedDerivs, AveragedDrift, AveragedStepper};
use super::coupled::CoupledStepper;
use super::limit::{cloud_diffusion_at, cloud_drift_at, common_cloud_terms};
use super::{
    check_finite_states, Ensemble, GridSpec, PathBundle, ProcessLabel, ScaleParams, PAR_CHUNK,
};
use crate::error::{Error, Result};
use crate::measure::{MeasureCache, MeasureView};
use crate::model::ModelSpec;

/// Integrate the auxiliary process on the coupled run's fine grid.
///
/// `coupled` and `averaged` must share grids and Brownian increments (their
/// ledgers prove it); `scale`/`grid` must be the parameters the bundles
/// were produced with, since the replay reconstructs both state sequences.
#[allow(clippy::too_many_arguments)]
pub fn simulate_auxiliary(
    model: &ModelSpec,
    drift: &AveragedDrift,
    derivs: &AveragedDerivs,
    scale: &ScaleParams,
    grid: &GridSpec,
    coupled: &PathBundle,
    averaged: &PathBundle,
) -> Result<PathBundle> {
    let cl = &coupled.ledger;
    let al = &averaged.ledger;
    if !cl.shares_noise_with(al)
        || cl.n_steps != al.n_steps
        || cl.record_stride != al.record_stride
        || cl.master_seed != al.master_seed
    {
        return Err(Error::GridMismatch(
            "auxiliary process needs coupled and averaged bundles on one grid and noise family"
                .into(),
        ));
    }

    let mut cs = CoupledStepper::new(model, scale, grid, cl.n_particles, cl.master_seed)?;
    let mut asr = AveragedStepper::new(
        model,
        drift,
        scale,
        grid,
        al.n_particles,
        al.master_seed,
        Some(coupled),
    )?;
    if cs.grid.n_steps != cl.n_steps || cs.grid.atoms != cl.noise_atoms {
        return Err(Error::GridMismatch(format!(
            "replay grid ({} steps, {} atoms) does not match the bundle ledger ({} steps, {} atoms); \
             pass the original scale and grid",
            cs.grid.n_steps, cs.grid.atoms, cl.n_steps, cl.noise_atoms
        )));
    }

    let dims = model.dims;
    let (n, m, d1) = (dims.n, dims.m, dims.d1);
    let g = cs.grid;
    let n_particles = cl.n_particles;
    let inv_sqrt_eps = 1.0 / g.eps.sqrt();

    let mut theta = vec![0.0; n_particles * n];
    let mut theta_next = theta.clone();
    let mut out = Ensemble::zeros(n_particles, g.n_frames, n);

    for s in 0..g.n_steps {
        let dt = g.dt;
        let mu_cache = MeasureCache::new();
        let nu_cache = MeasureCache::new();
        let mubar_cache = MeasureCache::new();
        let x = &cs.x;
        let y_xi = &cs.y_xi;
        let y_y0 = &cs.y_y0;
        let xbar = &asr.xbar;
        let theta_ref = &theta;
        let ledger = &cs.ledger;

        let mubar = MeasureView::from_slice(xbar, n, &mubar_cache);
        let common = common_cloud_terms(derivs, xbar, &mubar, theta_ref, n, d1);

        theta_next
            .par_chunks_mut(PAR_CHUNK * n)
            .enumerate()
            .for_each(|(ci, tn)| {
                let mu = MeasureView::from_slice(x, n, &mu_cache);
                let nu = MeasureView::from_slice(y_xi, m, &nu_cache);
                let mubar = MeasureView::from_slice(xbar, n, &mubar_cache);
                let mut b_full = vec![0.0; n];
                let mut b_avg = vec![0.0; n];
                let mut lin = vec![0.0; n];
                let mut mu_drift = vec![0.0; n];
                let mut diff = vec![0.0; n * d1];
                let mut diff_mu = vec![0.0; n * d1];
                let mut db = vec![0.0; d1];
                for local in 0..tn.len() / n {
                    let i = ci * PAR_CHUNK + local;
                    let x_i = &x[i * n..(i + 1) * n];
                    let y_i = &y_y0[i * m..(i + 1) * m];
                    let xb_i = &xbar[i * n..(i + 1) * n];
                    let th_i = &theta_ref[i * n..(i + 1) * n];

                    // Raw fluctuation source along the coupled path.
                    (model.b1)(x_i, &mu, y_i, &nu, &mut b_full);
                    drift.eval(x_i, &mu, &mut b_avg);

                    // Linearized mean-field terms around the averaged path.
                    (derivs.dx)(xb_i, &mubar, th_i, &mut lin);
                    match &common.drift {
                        Some(cd) => mu_drift.copy_from_slice(cd),
                        None => {
                            cloud_drift_at(derivs, xb_i, &mubar, xbar, theta_ref, n, &mut mu_drift)
                        }
                    }
                    (derivs.dx_sigma1)(xb_i, &mubar, th_i, &mut diff);
                    match &common.diffusion {
                        Some(cdf) => diff_mu.copy_from_slice(cdf),
                        None => cloud_diffusion_at(
                            derivs, xb_i, &mubar, xbar, theta_ref, n, d1, &mut diff_mu,
                        ),
                    }

                    ledger.slow_increment(i, s, 1, &mut db);
                    let o = &mut tn[local * n..(local + 1) * n];
                    for c in 0..n {
                        let mut noise = 0.0;
                        for k in 0..d1 {
                            noise += (diff[c * d1 + k] + diff_mu[c * d1 + k]) * db[k];
                        }
                        let source = inv_sqrt_eps * (b_full[c] - b_avg[c]);
                        o[c] = th_i[c] + (source + lin[c] + mu_drift[c]) * dt + noise;
                    }
                }
            });

        check_finite_states(&theta_next, n, "theta_eps", s)?;
        std::mem::swap(&mut theta, &mut theta_next);
        cs.advance()?;
        asr.advance()?;
        if (s + 1) % g.stride == 0 {
            out.frame_mut((s + 1) / g.stride).copy_from_slice(&theta);
        }
    }

    let mut ensembles = std::collections::BTreeMap::new();
    ensembles.insert(ProcessLabel::ThetaEps, out);
    Ok(PathBundle { times: g.frame_times(), ensembles, ledger: cs.ledger })
}
