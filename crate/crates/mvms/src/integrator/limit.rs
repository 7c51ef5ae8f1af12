//! The fluctuation limit equation: a linear mean-field SDE for U driven by
//! the averaged path's Brownian motion plus fresh noise of intensity
//! Upsilon, integrated on the recorded frame grid of the averaged bundle.

use rayon::prelude::*;

use super::averaged::AveragedDerivs;
use super::{check_finite_states, Ensemble, PathBundle, ProcessLabel, SeedLedger, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::measure::{MeasureCache, MeasureView};
use crate::model::ModelSpec;
use crate::rng::Channel;
use crate::stats::pairwise_sum;

/// Upsilon callback: (x, mu) -> out[n*n], the CLT diffusion coefficient.
pub type UpsilonFn = dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync;

/// Cloud averages E[∂_mu f(u, mu)(Xbar_j) dir_j] that are shared by every
/// particle when the measure derivatives do not depend on their base point.
pub(crate) struct CommonCloudTerms {
    pub drift: Option<Vec<f64>>,
    pub diffusion: Option<Vec<f64>>,
}

pub(crate) fn common_cloud_terms(
    derivs: &AveragedDerivs,
    xbar: &[f64],
    mu: &MeasureView,
    dirs: &[f64],
    n: usize,
    d1: usize,
) -> CommonCloudTerms {
    let n_particles = xbar.len() / n;
    let drift = derivs.dmu_base_free.then(|| {
        let mut vals = vec![0.0; n_particles * n];
        let mut buf = vec![0.0; n];
        for j in 0..n_particles {
            (derivs.dmu)(&xbar[..n], mu, &xbar[j * n..(j + 1) * n], &dirs[j * n..(j + 1) * n], &mut buf);
            for c in 0..n {
                vals[c * n_particles + j] = buf[c];
            }
        }
        (0..n)
            .map(|c| pairwise_sum(&vals[c * n_particles..(c + 1) * n_particles]) / n_particles as f64)
            .collect()
    });
    let diffusion = derivs.dmu_sigma1_base_free.then(|| {
        let w = n * d1;
        let mut vals = vec![0.0; n_particles * w];
        let mut buf = vec![0.0; w];
        for j in 0..n_particles {
            (derivs.dmu_sigma1)(&xbar[..n], mu, &xbar[j * n..(j + 1) * n], &dirs[j * n..(j + 1) * n], &mut buf);
            for c in 0..w {
                vals[c * n_particles + j] = buf[c];
            }
        }
        (0..w)
            .map(|c| pairwise_sum(&vals[c * n_particles..(c + 1) * n_particles]) / n_particles as f64)
            .collect()
    });
    CommonCloudTerms { drift, diffusion }
}

/// Per-base-point fallback for measure derivatives that depend on where
/// they are evaluated: the faithful O(N) average per particle.
pub(crate) fn cloud_drift_at(
    derivs: &AveragedDerivs,
    base: &[f64],
    mu: &MeasureView,
    xbar: &[f64],
    dirs: &[f64],
    n: usize,
    out: &mut [f64],
) {
    let n_particles = xbar.len() / n;
    let mut vals = vec![0.0; n_particles * n];
    let mut buf = vec![0.0; n];
    for j in 0..n_particles {
        (derivs.dmu)(base, mu, &xbar[j * n..(j + 1) * n], &dirs[j * n..(j + 1) * n], &mut buf);
        for c in 0..n {
            vals[c * n_particles + j] = buf[c];
        }
    }
    for c in 0..n {
        out[c] = pairwise_sum(&vals[c * n_particles..(c + 1) * n_particles]) / n_particles as f64;
    }
}

pub(crate) fn cloud_diffusion_at(
    derivs: &AveragedDerivs,
    base: &[f64],
    mu: &MeasureView,
    xbar: &[f64],
    dirs: &[f64],
    n: usize,
    d1: usize,
    out: &mut [f64],
) {
    let n_particles = xbar.len() / n;
    let w = n * d1;
    let mut vals = vec![0.0; n_particles * w];
    let mut buf = vec![0.0; w];
    for j in 0..n_particles {
        (derivs.dmu_sigma1)(base, mu, &xbar[j * n..(j + 1) * n], &dirs[j * n..(j + 1) * n], &mut buf);
        for c in 0..w {
            vals[c * n_particles + j] = buf[c];
        }
    }
    for c in 0..w {
        out[c] = pairwise_sum(&vals[c * n_particles..(c + 1) * n_particles]) / n_particles as f64;
    }
}

/// Simulate the fluctuation limit pair (Xbar, U) on the frame grid of an
/// averaged bundle.
///
/// Xbar is read from the bundle's frames; its Brownian increments over each
/// frame interval are regenerated exactly from the seed ledger, so U is
/// driven by the same B that produced Xbar. The extra noise V is a fresh
/// stream keyed by `seed`, independent of B. U starts at zero.
pub fn simulate_limit(
    model: &ModelSpec,
    derivs: &AveragedDerivs,
    upsilon: &UpsilonFn,
    xbar_bundle: &PathBundle,
    seed: u64,
) -> Result<PathBundle> {
    let xb = xbar_bundle.ensemble(ProcessLabel::XBar)?;
    let n = model.dims.n;
    let d1 = model.dims.d1;
    if xb.dim != n {
        return Err(Error::Dimension { got: xb.dim, need: n });
    }
    let n_particles = xb.n_particles;
    let frames = xb.n_frames;
    let times = &xbar_bundle.times;
    let ledger = &xbar_bundle.ledger;
    let stride = ledger.record_stride;
    let v_stream = crate::rng::NoiseStream::new(seed, Channel::LimitV);

    let mut u = vec![0.0; n_particles * n];
    let mut u_next = u.clone();
    let mut out = Ensemble::zeros(n_particles, frames, n);

    for f in 0..frames - 1 {
        let dt = times[f + 1] - times[f];
        let sqrt_dt = dt.sqrt();
        let xbar = xb.frame(f);
        let mu_cache = MeasureCache::new();
        let mu = MeasureView::from_slice(xbar, n, &mu_cache);
        let common = common_cloud_terms(derivs, xbar, &mu, &u, n, d1);
        let u_ref = &u;

        u_next
            .par_chunks_mut(PAR_CHUNK * n)
            .enumerate()
            .for_each(|(ci, un)| {
                let mu = MeasureView::from_slice(xbar, n, &mu_cache);
                let mut drift = vec![0.0; n];
                let mut lin = vec![0.0; n];
                let mut diff = vec![0.0; n * d1];
                let mut diff_mu = vec![0.0; n * d1];
                let mut ups = vec![0.0; n * n];
                let mut db = vec![0.0; d1];
                let mut dv = vec![0.0; n];
                for local in 0..un.len() / n {
                    let i = ci * PAR_CHUNK + local;
                    let x_i = &xbar[i * n..(i + 1) * n];
                    let u_i = &u_ref[i * n..(i + 1) * n];

                    (derivs.dx)(x_i, &mu, u_i, &mut lin);
                    match &common.drift {
                        Some(cd) => drift.copy_from_slice(cd),
                        None => cloud_drift_at(derivs, x_i, &mu, xbar, u_ref, n, &mut drift),
                    }
                    for c in 0..n {
                        drift[c] += lin[c];
                    }

                    (derivs.dx_sigma1)(x_i, &mu, u_i, &mut diff);
                    match &common.diffusion {
                        Some(cdf) => diff_mu.copy_from_slice(cdf),
                        None => {
                            cloud_diffusion_at(derivs, x_i, &mu, xbar, u_ref, n, d1, &mut diff_mu)
                        }
                    }
                    for c in 0..n * d1 {
                        diff[c] += diff_mu[c];
                    }

                    upsilon(x_i, &mu, &mut ups);
                    ledger.slow_increment(i, f * stride, stride, &mut db);
                    v_stream.fill_normals(i as u64, f as u64, &mut dv);

                    let o = &mut un[local * n..(local + 1) * n];
                    for c in 0..n {
                        let mut noise = 0.0;
                        for k in 0..d1 {
                            noise += diff[c * d1 + k] * db[k];
                        }
                        for k in 0..n {
                            noise += ups[c * n + k] * dv[k] * sqrt_dt;
                        }
                        o[c] = u_i[c] + drift[c] * dt + noise;
                    }
                }
            });

        check_finite_states(&u_next, n, "U_limit", f)?;
        std::mem::swap(&mut u, &mut u_next);
        out.frame_mut(f + 1).copy_from_slice(&u);
    }

    let mut ensembles = std::collections::BTreeMap::new();
    ensembles.insert(ProcessLabel::ULimit, out);
    Ok(PathBundle {
        times: times.clone(),
        ensembles,
        ledger: SeedLedger { master_seed: seed, ..ledger.clone() },
    })
}
