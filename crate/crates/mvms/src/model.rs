//! Coefficient interface for slow-fast mean-field systems, the built-in
//! reference model, and a sampled audit of the structural assumptions the
//! convergence theory needs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{wasserstein2_two_atom, MeasureCache, MeasureView};
use crate::rng::{Channel, NoiseStream};

/// Declared dimensions: slow state n, fast state m, slow noise d1, fast
/// noise d2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub n: usize,
    pub m: usize,
    pub d1: usize,
    pub d2: usize,
}

/// b1(x, mu, y, nu) -> out[n]
pub type SlowDrift = dyn Fn(&[f64], &MeasureView, &[f64], &MeasureView, &mut [f64]) + Send + Sync;
/// sigma1(x, mu) -> out[n*d1], row-major
pub type SlowDiffusion = dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync;
/// b2(y, nu) -> out[m]
pub type FastDrift = dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync;
/// sigma2(y, nu) -> out[m*d2], row-major
pub type FastDiffusion = dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync;

/// Optional additive decomposition b1(x,mu,y,nu) = slow(x,mu) + fast(y,nu).
///
/// When present, the averaged drift collapses its cloud average of the fast
/// part into a precomputed constant, turning an O(|eta|) evaluation into
/// O(1). Consistency with the full `b1` is asserted in tests.
#[derive(Clone)]
pub struct B1Split {
    pub slow: Arc<dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync>,
    pub fast: Arc<dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync>,
}

/// Derivative callbacks. Only the fluctuation experiment and the corrector
/// cell need these; averaging runs work without them.
///
/// `dmu_*` callbacks evaluate the measure derivative at base point x applied
/// to a direction: ∂_mu f(x, mu)(x_tilde) · dir. The `*_base_free` flags
/// declare that the value does not depend on x (true for measure-linear
/// coefficients); the cloud averages in the fluctuation equations then cost
/// O(N) per step instead of O(N^2).
#[derive(Clone)]
pub struct ModelDerivs {
    /// ∂_x b1(x,mu,y,nu) · dir -> out[n]
    pub dx_b1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &MeasureView, &[f64], &mut [f64]) + Send + Sync>,
    /// ∂_y b1(x,mu,y,nu) -> out[n*m] full matrix
    pub dy_b1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &MeasureView, &mut [f64]) + Send + Sync>,
    /// ∂_mu b1(x,mu,y,nu)(x_tilde) · dir -> out[n]
    pub dmu_b1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &MeasureView, &[f64], &[f64], &mut [f64]) + Send + Sync>,
    pub dmu_b1_base_free: bool,
    /// ∂_x sigma1(x,mu) · dir -> out[n*d1]
    pub dx_sigma1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &mut [f64]) + Send + Sync>,
    /// ∂_mu sigma1(x,mu)(x_tilde) · dir -> out[n*d1]
    pub dmu_sigma1: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &[f64], &mut [f64]) + Send + Sync>,
    pub dmu_sigma1_base_free: bool,
    /// ∂_y b2(y,nu) -> out[m*m] full matrix
    pub dy_b2: Arc<dyn Fn(&[f64], &MeasureView, &mut [f64]) + Send + Sync>,
    /// ∂_y sigma2(y,nu) · dir -> out[m*d2]
    pub dy_sigma2: Arc<dyn Fn(&[f64], &MeasureView, &[f64], &mut [f64]) + Send + Sync>,
}

/// A slow-fast mean-field model: coefficient callbacks plus declared
/// dimensions.
///
/// Callbacks must be pure (same inputs, same outputs) and are invoked
/// concurrently. Output dimensions must match `dims` on every call.
#[derive(Clone)]
pub struct ModelSpec {
    pub dims: ModelDims,
    pub b1: Arc<SlowDrift>,
    pub sigma1: Arc<SlowDiffusion>,
    pub b2: Arc<FastDrift>,
    pub sigma2: Arc<FastDiffusion>,
    pub derivs: Option<ModelDerivs>,
    pub b1_split: Option<B1Split>,
}

impl ModelSpec {
    /// Derivative callbacks, or a capability error naming the caller.
    pub fn derivs(&self, needed_by: &str) -> Result<&ModelDerivs> {
        self.derivs
            .as_ref()
            .ok_or_else(|| Error::Capability(format!("{needed_by} needs derivative callbacks")))
    }

    /// True when b1 provably ignores its (y, nu) arguments, detected by
    /// probing; used to flag degenerate experiment configurations.
    pub fn b1_ignores_fast(&self, probes: usize, seed: u64) -> bool {
        let s = NoiseStream::new(seed, Channel::Probe);
        let cache = MeasureCache::new();
        let n = self.dims.n;
        let m = self.dims.m;
        let mut base = vec![0.0; n];
        let mut alt = vec![0.0; n];
        for i in 0..probes {
            let x: Vec<f64> = (0..n).map(|c| 2.0 * s.normal(i as u64, 0, c as u64)).collect();
            let mu_pt: Vec<f64> = (0..n).map(|c| s.normal(i as u64, 1, c as u64)).collect();
            let y1: Vec<f64> = (0..m).map(|c| 3.0 * s.normal(i as u64, 2, c as u64)).collect();
            let y2: Vec<f64> = (0..m).map(|c| 3.0 * s.normal(i as u64, 3, c as u64)).collect();
            let nu1_pt: Vec<f64> = (0..m).map(|c| s.normal(i as u64, 4, c as u64)).collect();
            let nu2_pt: Vec<f64> = (0..m).map(|c| s.normal(i as u64, 5, c as u64)).collect();
            let mu = MeasureView::from_slice(&mu_pt, n, &cache);
            let c1 = MeasureCache::new();
            let c2 = MeasureCache::new();
            let nu1 = MeasureView::from_slice(&nu1_pt, m, &c1);
            let nu2 = MeasureView::from_slice(&nu2_pt, m, &c2);
            (self.b1)(&x, &mu, &y1, &nu1, &mut base);
            (self.b1)(&x, &mu, &y2, &nu2, &mut alt);
            if base != alt {
                return false;
            }
        }
        true
    }
}

/// Parameters of the built-in reference model.
///
/// `a`, `b`, `q` are dimensionless frequencies; `k`, `m` drift rates; `p`
/// the moment order the dissipativity condition is checked at.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExampleParams {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub k: f64,
    pub m: f64,
    pub p: f64,
}

impl Default for ExampleParams {
    /// Numerically visible defaults; the strict-constant variant sits
    /// behind [`ExampleParams::strict_constants`].
    fn default() -> Self {
        ExampleParams { a: 1.0, b: 1.0, q: 1.0, k: 1.0, m: 0.25, p: 2.0 }
    }
}

impl ExampleParams {
    /// The conservative rates k = 1/(24p), m = 1/(48p) under which the
    /// dissipativity margin is provably positive.
    pub fn strict_constants(p: f64) -> Self {
        ExampleParams { a: 1.0, b: 1.0, q: 1.0, k: 1.0 / (24.0 * p), m: 1.0 / (48.0 * p), p }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if !(self.m >= 0.0) {
            return Err(Error::Config(format!("m must be nonnegative, got {}", self.m)));
        }
        if !(self.k > self.m) {
            return Err(Error::Config(format!(
                "k must exceed m for the frozen mean to contract (k={}, m={})",
                self.k, self.m
            )));
        }
        if !(self.p >= 2.0) {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        Ok(())
    }
}

/// The built-in one-dimensional reference model:
///
///   b1(x,mu,y,nu) = sin(a x) + <mu> + cos(b y) + ∫ cos(q y') nu(dy')
///   sigma1(x,mu)  = ∫ |x'|^3 / (1 + x'^2) mu(dx')
///   b2(y,nu)      = -k y + m <nu>
///   sigma2        = 1
///
/// with all derivative callbacks attached in closed form.
pub fn build_example_model(params: ExampleParams) -> Result<ModelSpec> {
    params.validate()?;
    let ExampleParams { a, b, q, k, m, .. } = params;

    let sigma1_kernel = |v: f64| v.abs().powi(3) / (1.0 + v * v);
    // d/dv [ |v|^3/(1+v^2) ] = sgn(v) (3v^2 + v^4) / (1+v^2)^2
    let sigma1_kernel_d = |v: f64| {
        let w = 1.0 + v * v;
        (3.0 * v * v + v.powi(4)) / (w * w) * v.signum()
    };

    let slow = move |x: &[f64], mu: &MeasureView, out: &mut [f64]| {
        out[0] = (a * x[0]).sin() + mu.mean1();
    };
    let fast = move |y: &[f64], nu: &MeasureView, out: &mut [f64]| {
        out[0] = (b * y[0]).cos() + nu.integrate_cached("example.cos_q", |v| (q * v[0]).cos());
    };

    let b1 = {
        move |x: &[f64], mu: &MeasureView, y: &[f64], nu: &MeasureView, out: &mut [f64]| {
            let mut s = [0.0];
            let mut f = [0.0];
            slow(x, mu, &mut s);
            fast(y, nu, &mut f);
            out[0] = s[0] + f[0];
        }
    };
    let sigma1 = move |_x: &[f64], mu: &MeasureView, out: &mut [f64]| {
        out[0] = mu.integrate_cached("example.sigma1", |v| sigma1_kernel(v[0]));
    };
    let b2 = move |y: &[f64], nu: &MeasureView, out: &mut [f64]| {
        out[0] = -k * y[0] + m * nu.mean1();
    };
    let sigma2 = |_y: &[f64], _nu: &MeasureView, out: &mut [f64]| {
        out[0] = 1.0;
    };

    let derivs = ModelDerivs {
        dx_b1: Arc::new(move |x, _mu, _y, _nu, dir, out| {
            out[0] = a * (a * x[0]).cos() * dir[0];
        }),
        dy_b1: Arc::new(move |_x, _mu, y, _nu, out| {
            out[0] = -b * (b * y[0]).sin();
        }),
        // ∂_mu b1 ≡ 1
        dmu_b1: Arc::new(move |_x, _mu, _y, _nu, _xt, dir, out| {
            out[0] = dir[0];
        }),
        dmu_b1_base_free: true,
        dx_sigma1: Arc::new(move |_x, _mu, _dir, out| {
            out[0] = 0.0;
        }),
        dmu_sigma1: Arc::new(move |_x, _mu, xt, dir, out| {
            out[0] = sigma1_kernel_d(xt[0]) * dir[0];
        }),
        dmu_sigma1_base_free: true,
        dy_b2: Arc::new(move |_y, _nu, out| {
            out[0] = -k;
        }),
        dy_sigma2: Arc::new(move |_y, _nu, _dir, out| {
            out[0] = 0.0;
        }),
    };

    Ok(ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(b1),
        sigma1: Arc::new(sigma1),
        b2: Arc::new(b2),
        sigma2: Arc::new(sigma2),
        derivs: Some(derivs),
        b1_split: Some(B1Split { slow: Arc::new(slow), fast: Arc::new(fast) }),
    })
}

/// Sampled estimates of the structural constants. Estimates, never proofs:
/// the underlying conditions quantify over all of R^m x P2, the report is a
/// maximum/minimum over the probe stream (`sampled_estimate` says so).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AuditReport {
    /// Norm difference quotient |Δ(b1,sigma1)| / |Δ(x,mu,y,nu)|, maximized.
    pub lip_b1s1_hat: f64,
    /// Norm difference quotient |Δ(b2,sigma2)| / |Δ(y,nu)|, maximized.
    pub lip_b2s2_hat: f64,
    /// Half the worst-case pure-state contraction rate observed on
    /// measure-matched probe pairs.
    pub beta1_hat: f64,
    /// Envelope sup over probes of (q + beta1|Δy|^2) / W2^2.
    pub beta2_hat: f64,
    /// beta1_hat - beta2_hat - 6 p lip_b2s2_hat, with lip in the norm
    /// quotient convention above.
    pub margin: f64,
    /// Same margin with the squared-form constant lip^2, the convention the
    /// dissipativity condition is usually stated in; the strict reference
    /// constants are positive under this one.
    pub margin_sq: f64,
    /// alpha1 = beta1 - 3 p L, alpha2 = beta2 + (3p-1) L with L = lip^2.
    pub alpha1: f64,
    pub alpha2: f64,
    pub margin_positive: bool,
    pub sample_count: usize,
    /// Always true: this report is a sampled estimate, not a proof.
    pub sampled_estimate: bool,
}

struct TwoAtom {
    atoms: [Vec<f64>; 2],
    w: f64,
}

impl TwoAtom {
    fn storage(&self) -> Vec<f64> {
        let mut v = self.atoms[0].clone();
        v.extend_from_slice(&self.atoms[1]);
        v
    }
    fn weights(&self) -> Vec<f64> {
        vec![self.w, 1.0 - self.w]
    }
    fn shifted(&self, shift: &[f64]) -> TwoAtom {
        TwoAtom {
            atoms: [
                self.atoms[0].iter().zip(shift).map(|(a, s)| a + s).collect(),
                self.atoms[1].iter().zip(shift).map(|(a, s)| a + s).collect(),
            ],
            w: self.w,
        }
    }
}

fn draw_two_atom(s: &NoiseStream, probe: u64, slot: u64, dim: usize, radius: f64) -> TwoAtom {
    let atom = |lane_base: u64| -> Vec<f64> {
        (0..dim)
            .map(|c| radius * (2.0 * s.uniform(probe, slot, lane_base + c as u64) - 1.0))
            .collect()
    };
    let w = 0.05 + 0.9 * s.uniform(probe, slot, 2 * dim as u64);
    TwoAtom { atoms: [atom(0), atom(dim as u64)], w }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>()
}

fn check_finite(tag: &str, out: &[f64], inputs: &[f64]) -> Result<()> {
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model {
            message: format!("{tag} returned a non-finite value"),
            inputs: inputs.to_vec(),
        });
    }
    Ok(())
}

/// Numerically audit the Lipschitz and dissipativity assumptions.
///
/// Draws `probes` pairs of points and two-atom measures (exact W2 between
/// two-atom measures keeps the audit oracle-free) uniformly in a box of the
/// given radius, then reports the tightest constants observed. Extending the
/// probe count with the same seed extends the same probe stream, so the
/// Lipschitz estimates are monotone in `probes`.
pub fn audit_assumptions(
    model: &ModelSpec,
    p: f64,
    probes: usize,
    box_radius: f64,
    seed: u64,
) -> Result<AuditReport> {
    if probes < 2 {
        return Err(Error::Config("audit needs at least 2 probes".into()));
    }
    if !(box_radius > 0.0) {
        return Err(Error::Config("audit box radius must be positive".into()));
    }
    let s = NoiseStream::new(seed, Channel::Probe);
    let n = model.dims.n;
    let m = model.dims.m;
    let d1 = model.dims.d1;
    let d2 = model.dims.d2;

    let mut lip_b1s1: f64 = 0.0;
    let mut lip_b2s2: f64 = 0.0;
    let mut pure_rate: f64 = f64::INFINITY;
    // (q, |Δy|^2, W2^2) triples for the beta2 envelope pass.
    let mut disp: Vec<(f64, f64, f64)> = Vec::with_capacity(probes);

    let mut b2a = vec![0.0; m];
    let mut b2b = vec![0.0; m];
    let mut s2a = vec![0.0; m * d2];
    let mut s2b = vec![0.0; m * d2];
    let mut b1a = vec![0.0; n];
    let mut b1b = vec![0.0; n];
    let mut s1a = vec![0.0; n * d1];
    let mut s1b = vec![0.0; n * d1];

    for i in 0..probes {
        let pid = i as u64;
        let uni = |slot: u64, lane: u64| 2.0 * s.uniform(pid, slot, lane) - 1.0;
        let point = |slot: u64, dim: usize| -> Vec<f64> {
            (0..dim).map(|c| box_radius * uni(slot, c as u64)).collect()
        };

        let y1 = point(0, m);
        let y2 = point(1, m);
        let nu1 = draw_two_atom(&s, pid, 2, m, box_radius);
        let rigid = s.uniform(pid, 3, 0) < 0.5;
        let shift = point(4, m);
        let nu2 = if rigid { nu1.shifted(&shift) } else { draw_two_atom(&s, pid, 5, m, box_radius) };
        let w2_nu = if rigid {
            norm2(&shift).sqrt()
        } else {
            wasserstein2_two_atom(
                &nu1.atoms[0], &nu1.atoms[1], nu1.w,
                &nu2.atoms[0], &nu2.atoms[1], nu2.w,
            )
        };

        let (c1, c2) = (MeasureCache::new(), MeasureCache::new());
        let nu1_store = nu1.storage();
        let nu2_store = nu2.storage();
        let nu1_w = nu1.weights();
        let nu2_w = nu2.weights();
        let nu1_view = weighted_view(&nu1_store, &nu1_w, m, &c1);
        let nu2_view = weighted_view(&nu2_store, &nu2_w, m, &c2);

        // Lipschitz quotient for the fast pair.
        (model.b2)(&y1, &nu1_view, &mut b2a);
        check_finite("b2", &b2a, &y1)?;
        (model.b2)(&y2, &nu2_view, &mut b2b);
        check_finite("b2", &b2b, &y2)?;
        (model.sigma2)(&y1, &nu1_view, &mut s2a);
        check_finite("sigma2", &s2a, &y1)?;
        (model.sigma2)(&y2, &nu2_view, &mut s2b);
        check_finite("sigma2", &s2b, &y2)?;

        let db2: Vec<f64> = b2a.iter().zip(&b2b).map(|(a, b)| a - b).collect();
        let ds2: Vec<f64> = s2a.iter().zip(&s2b).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - b).collect();
        let den = norm2(&dy) + w2_nu * w2_nu;
        if den > 1e-14 {
            lip_b2s2 = lip_b2s2.max(((norm2(&db2) + norm2(&ds2)) / den).sqrt());
        }

        // Dissipativity probe at moment order p.
        let qv = 2.0 * dy.iter().zip(&db2).map(|(a, b)| a * b).sum::<f64>()
            + (3.0 * p - 1.0) * norm2(&ds2);
        disp.push((qv, norm2(&dy), w2_nu * w2_nu));

        // Measure-matched pure-state probe for the contraction rate.
        (model.b2)(&y2, &nu1_view, &mut b2b);
        (model.sigma2)(&y2, &nu1_view, &mut s2b);
        let db2m: Vec<f64> = b2a.iter().zip(&b2b).map(|(a, b)| a - b).collect();
        let ds2m: Vec<f64> = s2a.iter().zip(&s2b).map(|(a, b)| a - b).collect();
        let dy2 = norm2(&dy);
        if dy2 > 1e-14 {
            let qm = 2.0 * dy.iter().zip(&db2m).map(|(a, b)| a * b).sum::<f64>()
                + (3.0 * p - 1.0) * norm2(&ds2m);
            pure_rate = pure_rate.min(-qm / dy2);
        }

        // Slow-pair Lipschitz quotient.
        let x1 = point(6, n);
        let x2 = point(7, n);
        let mu1 = draw_two_atom(&s, pid, 8, n, box_radius);
        let mu2 = draw_two_atom(&s, pid, 9, n, box_radius);
        let w2_mu = wasserstein2_two_atom(
            &mu1.atoms[0], &mu1.atoms[1], mu1.w,
            &mu2.atoms[0], &mu2.atoms[1], mu2.w,
        );
        let (c3, c4) = (MeasureCache::new(), MeasureCache::new());
        let mu1_store = mu1.storage();
        let mu2_store = mu2.storage();
        let mu1_w = mu1.weights();
        let mu2_w = mu2.weights();
        let mu1_view = weighted_view(&mu1_store, &mu1_w, n, &c3);
        let mu2_view = weighted_view(&mu2_store, &mu2_w, n, &c4);

        (model.b1)(&x1, &mu1_view, &y1, &nu1_view, &mut b1a);
        check_finite("b1", &b1a, &x1)?;
        (model.b1)(&x2, &mu2_view, &y2, &nu2_view, &mut b1b);
        check_finite("b1", &b1b, &x2)?;
        (model.sigma1)(&x1, &mu1_view, &mut s1a);
        check_finite("sigma1", &s1a, &x1)?;
        (model.sigma1)(&x2, &mu2_view, &mut s1b);
        check_finite("sigma1", &s1b, &x2)?;

        let db1: Vec<f64> = b1a.iter().zip(&b1b).map(|(a, b)| a - b).collect();
        let ds1: Vec<f64> = s1a.iter().zip(&s1b).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
        let den1 = norm2(&dx) + w2_mu * w2_mu + norm2(&dy) + w2_nu * w2_nu;
        if den1 > 1e-14 {
            lip_b1s1 = lip_b1s1.max(((norm2(&db1) + norm2(&ds1)) / den1).sqrt());
        }
    }

    let beta1 = if pure_rate.is_finite() { pure_rate / 2.0 } else { 0.0 };
    let mut beta2: f64 = 0.0;
    for &(qv, dy2, w2sq) in &disp {
        if w2sq > 1e-14 {
            beta2 = beta2.max((qv + beta1 * dy2) / w2sq);
        }
    }

    let lip_sq = lip_b2s2 * lip_b2s2;
    let margin = beta1 - beta2 - 6.0 * p * lip_b2s2;
    let margin_sq = beta1 - beta2 - 6.0 * p * lip_sq;
    Ok(AuditReport {
        lip_b1s1_hat: lip_b1s1,
        lip_b2s2_hat: lip_b2s2,
        beta1_hat: beta1,
        beta2_hat: beta2,
        margin,
        margin_sq,
        alpha1: beta1 - 3.0 * p * lip_sq,
        alpha2: beta2 + (3.0 * p - 1.0) * lip_sq,
        margin_positive: margin > 0.0,
        sample_count: probes,
        sampled_estimate: true,
    })
}

fn weighted_view<'a>(
    storage: &'a [f64],
    weights: &'a [f64],
    dim: usize,
    cache: &'a MeasureCache,
) -> MeasureView<'a> {
    MeasureView::from_weighted_slice(storage, weights, dim, cache)
}
