//! Empirical-measure machinery: sample clouds standing in for laws,
//! integration with per-measure caching, exact 1-D Wasserstein-2 via the
//! quantile coupling, and the two-sample Kolmogorov-Smirnov statistic.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::fnv1a64;
use crate::stats::pairwise_sum;

const WEIGHT_TOL: f64 = 1e-12;

/// Memo for integrals against one fixed measure. Values are pure functions
/// of the (immutable) sample cloud, so racing writers store identical bits.
#[derive(Debug, Default)]
pub struct MeasureCache {
    map: RwLock<HashMap<u64, f64>>,
}

impl MeasureCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_insert_with<F: FnOnce() -> f64>(&self, key: u64, f: F) -> f64 {
        if let Some(v) = self.map.read().unwrap().get(&key) {
            return *v;
        }
        let v = f();
        self.map.write().unwrap().insert(key, v);
        v
    }
}

const KEY_MEAN: u64 = 1 << 60;
const KEY_MOMENT: u64 = 2 << 60;

/// Read-only handle onto a sample cloud, passed to model callbacks.
///
/// Exposes ∫f dμ for caller-supplied test functions plus cached low moments;
/// `integrate_cached` memoizes by tag so that per-step ensemble reductions
/// cost O(N) once instead of O(N) per particle.
#[derive(Clone, Copy)]
pub struct MeasureView<'a> {
    samples: &'a [f64],
    weights: Option<&'a [f64]>,
    dim: usize,
    cache: &'a MeasureCache,
}

impl<'a> MeasureView<'a> {
    /// View over raw particle-major storage with uniform weights.
    pub fn from_slice(samples: &'a [f64], dim: usize, cache: &'a MeasureCache) -> Self {
        debug_assert!(dim > 0 && samples.len() % dim == 0);
        MeasureView { samples, weights: None, dim, cache }
    }

    /// View over raw storage with explicit weights (callers must ensure the
    /// weights are a probability vector).
    pub fn from_weighted_slice(
        samples: &'a [f64],
        weights: &'a [f64],
        dim: usize,
        cache: &'a MeasureCache,
    ) -> Self {
        debug_assert_eq!(samples.len() / dim, weights.len());
        MeasureView { samples, weights: Some(weights), dim, cache }
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Σᵢ wᵢ f(xᵢ), pairwise-summed.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let n = self.len();
        match self.weights {
            None => {
                let vals: Vec<f64> = (0..n).map(|i| f(self.point(i))).collect();
                pairwise_sum(&vals) / n as f64
            }
            Some(w) => {
                let vals: Vec<f64> = (0..n).map(|i| w[i] * f(self.point(i))).collect();
                pairwise_sum(&vals)
            }
        }
    }

    /// `integrate`, but failing with the offending sample index on a
    /// non-finite integrand value.
    pub fn integrate_checked<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<f64> {
        for i in 0..self.len() {
            if !f(self.point(i)).is_finite() {
                return Err(Error::NonFinite { index: i });
            }
        }
        Ok(self.integrate(f))
    }

    /// Memoized integral. The tag must uniquely identify `f` for the
    /// lifetime of the underlying measure.
    pub fn integrate_cached<F: Fn(&[f64]) -> f64>(&self, tag: &str, f: F) -> f64 {
        let key = fnv1a64(tag.as_bytes()) & !(0xF << 60);
        self.cache.get_or_insert_with(key, || self.integrate(f))
    }

    /// Cached mean of component `c`.
    pub fn mean_component(&self, c: usize) -> f64 {
        debug_assert!(c < self.dim);
        self.cache
            .get_or_insert_with(KEY_MEAN | c as u64, || self.integrate(|x| x[c]))
    }

    /// Cached mean for one-dimensional measures.
    pub fn mean1(&self) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.mean_component(0)
    }

    /// Cached absolute moment ∫ |x|^k dμ.
    pub fn moment(&self, k: u32) -> f64 {
        self.cache.get_or_insert_with(KEY_MOMENT | k as u64, || {
            self.integrate(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                r2.sqrt().powi(k as i32)
            })
        })
    }
}

/// Weighted sample cloud standing in for a probability law.
///
/// Immutable after construction; all operations are read-only and the cache
/// is safe to share across threads.
#[derive(Debug, Default)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    weights: Option<Vec<f64>>,
    dim: usize,
    cache: MeasureCache,
}

impl Clone for EmpiricalMeasure {
    fn clone(&self) -> Self {
        EmpiricalMeasure {
            samples: self.samples.clone(),
            weights: self.weights.clone(),
            dim: self.dim,
            cache: MeasureCache::new(),
        }
    }
}

impl EmpiricalMeasure {
    /// Uniformly weighted cloud from particle-major storage.
    pub fn new(samples: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || samples.is_empty() || samples.len() % dim != 0 {
            return Err(Error::Config(format!(
                "empirical measure needs a nonempty sample array divisible by dim (len {}, dim {dim})",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i / dim });
        }
        Ok(EmpiricalMeasure { samples, weights: None, dim, cache: MeasureCache::new() })
    }

    /// Weighted cloud; weights must be nonnegative and sum to 1 within 1e-12.
    pub fn weighted(samples: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        let m = Self::new(samples, dim)?;
        if weights.len() != m.len() {
            return Err(Error::Config(format!(
                "weight count {} != sample count {}",
                weights.len(),
                m.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        let total: f64 = pairwise_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!("weights sum to {total}, expected 1")));
        }
        Ok(EmpiricalMeasure { weights: Some(weights), ..m })
    }

    pub fn from_points_1d(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, 1)
    }

    /// Point mass δ_x.
    pub fn dirac(point: &[f64]) -> Self {
        EmpiricalMeasure {
            samples: point.to_vec(),
            weights: None,
            dim: point.len(),
            cache: MeasureCache::new(),
        }
    }

    /// Gauss-Hermite discretization of N(mean, var): an exact-to-quadrature
    /// weighted stand-in for the analytic law, used by oracles.
    pub fn gauss_hermite_1d(mean: f64, var: f64, n: usize) -> Self {
        let (nodes, w) = quad::gauss_hermite(n);
        let scale = (2.0 * var).sqrt();
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let samples: Vec<f64> = nodes.iter().map(|x| mean + scale * x).collect();
        let mut weights: Vec<f64> = w.iter().map(|wi| wi * inv_sqrt_pi).collect();
        let total = pairwise_sum(&weights);
        for wi in &mut weights {
            *wi /= total;
        }
        EmpiricalMeasure { samples, weights: Some(weights), dim: 1, cache: MeasureCache::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> MeasureView<'_> {
        MeasureView {
            samples: &self.samples,
            weights: self.weights.as_deref(),
            dim: self.dim,
            cache: &self.cache,
        }
    }

    /// Sorted (value, weight) pairs for 1-D measures; ties keep original
    /// order, which cannot change any transport cost but makes runs
    /// bit-reproducible.
    fn sorted_1d(&self) -> Vec<(f64, f64)> {
        let n = self.len();
        let uniform = 1.0 / n as f64;
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (self.samples[i], self.weights.as_ref().map_or(uniform, |w| w[i])))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    }

    /// Deterministic thinning to `k` uniform atoms at quantile midpoints
    /// (right-continuous inverse CDF at (j+1/2)/k). For smooth integrands
    /// this keeps the law's integrals to O(1/k^2) while shrinking the cloud.
    pub fn quantile_thin(&self, k: usize) -> Result<EmpiricalMeasure> {
        if self.dim != 1 {
            return Err(Error::Dimension { got: self.dim, need: 1 });
        }
        let sorted = self.sorted_1d();
        let mut atoms = Vec::with_capacity(k);
        let mut cum = 0.0;
        let mut idx = 0;
        for j in 0..k {
            let p = (j as f64 + 0.5) / k as f64;
            while idx + 1 < sorted.len() && cum + sorted[idx].1 < p {
                cum += sorted[idx].1;
                idx += 1;
            }
            atoms.push(sorted[idx].0);
        }
        EmpiricalMeasure::from_points_1d(atoms)
    }
}

/// Exact Wasserstein-2 distance between two 1-D discrete measures via the
/// monotone (quantile) coupling, which is optimal in one dimension.
///
/// Uniform equal-size clouds reduce to sorted pairing; the general case
/// couples right-continuous inverse CDFs on the merged weight grid.
pub fn wasserstein2_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim() != 1 {
        return Err(Error::Dimension { got: a.dim(), need: 1 });
    }
    if b.dim() != 1 {
        return Err(Error::Dimension { got: b.dim(), need: 1 });
    }
    if a.weights.is_none() && b.weights.is_none() && a.len() == b.len() {
        let mut xs = a.samples.clone();
        let mut ys = b.samples.clone();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let sq: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - y) * (x - y)).collect();
        return Ok((pairwise_sum(&sq) / xs.len() as f64).sqrt());
    }
    let pa = a.sorted_1d();
    let pb = b.sorted_1d();
    let mut cost = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ra, mut rb) = (pa[0].1, pb[0].1); // remaining mass in current atoms
    loop {
        let step = ra.min(rb);
        let d = pa[ia].0 - pb[ib].0;
        cost += step * d * d;
        ra -= step;
        rb -= step;
        if ra <= WEIGHT_TOL {
            ia += 1;
            if ia >= pa.len() {
                break;
            }
            ra = pa[ia].1;
        }
        if rb <= WEIGHT_TOL {
            ib += 1;
            if ib >= pb.len() {
                break;
            }
            rb = pb[ib].1;
        }
    }
    Ok(cost.max(0.0).sqrt())
}

/// Exact W2 between two-atom measures in any dimension: the 2x2 transport
/// problem is linear in the free mass, so the optimum sits at an endpoint.
pub fn wasserstein2_two_atom(
    a1: &[f64],
    a2: &[f64],
    wa: f64,
    b1: &[f64],
    b2: &[f64],
    wb: f64,
) -> f64 {
    let d2 = |p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    };
    let c11 = d2(a1, b1);
    let c12 = d2(a1, b2);
    let c21 = d2(a2, b1);
    let c22 = d2(a2, b2);
    // t = mass shipped a1 -> b1, feasible in [max(0, wa+wb-1), min(wa, wb)].
    let lo = (wa + wb - 1.0).max(0.0);
    let hi = wa.min(wb);
    let cost_at = |t: f64| t * c11 + (wa - t) * c12 + (wb - t) * c21 + (1.0 - wa - wb + t) * c22;
    cost_at(lo).min(cost_at(hi)).max(0.0).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_A(x) - F_B(x)|.
pub fn ks_statistic(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim() != 1 {
        return Err(Error::Dimension { got: a.dim(), need: 1 });
    }
    if b.dim() != 1 {
        return Err(Error::Dimension { got: b.dim(), need: 1 });
    }
    let pa = a.sorted_1d();
    let pb = b.sorted_1d();
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut sup: f64 = 0.0;
    while ia < pa.len() || ib < pb.len() {
        let va = pa.get(ia).map(|p| p.0);
        let vb = pb.get(ib).map(|p| p.0);
        let v = match (va, vb) {
            (Some(x), Some(y)) => x.min(y),
            (Some(x), None) => x,
            (None, Some(y)) => y,
            (None, None) => break,
        };
        while ia < pa.len() && pa[ia].0 == v {
            fa += pa[ia].1;
            ia += 1;
        }
        while ib < pb.len() && pb[ib].0 == v {
            fb += pb[ib].1;
            ib += 1;
        }
        sup = sup.max((fa - fb).abs());
    }
    Ok(sup.min(1.0))
}
