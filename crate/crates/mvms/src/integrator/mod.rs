//! Euler-Maruyama interacting-particle schemes for every system in the
//! toolkit: the coupled slow-fast system, the frozen fast system, the
//! averaged equation, the fluctuation limit equation and the auxiliary
//! process.
//!
//! All randomness is addressed through [`SeedLedger`]: a bundle carries its
//! master seed and stream layout instead of raw increments, so any consumer
//! (the averaged run coupled to the same Brownian motion, the auxiliary
//! replay, tests asserting the shared-noise contract) can regenerate any
//! increment bit-exactly.

mod averaged;
mod auxiliary;
mod coupled;
mod frozen;
mod limit;

pub use averaged::{averaged_derivs, build_averaged_drift, simulate_averaged, AveragedDerivs, AveragedDrift};
pub use auxiliary::simulate_auxiliary;
pub use coupled::simulate_coupled;
pub use frozen::{estimate_invariant_measure, simulate_frozen, InvariantEstimate};
pub use limit::simulate_limit;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::{Channel, NoiseStream, SubRng};

/// Sampler for an initial law.
#[derive(Clone)]
pub enum InitLaw {
    Normal { mean: Vec<f64>, std: Vec<f64> },
    Point { value: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Draw from an empirical cloud (weighted resampling).
    Samples(Arc<EmpiricalMeasure>),
}

impl std::fmt::Debug for InitLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitLaw::Normal { mean, std } => write!(f, "Normal(mean={mean:?}, std={std:?})"),
            InitLaw::Point { value } => write!(f, "Point({value:?})"),
            InitLaw::Uniform { lo, hi } => write!(f, "Uniform({lo:?}, {hi:?})"),
            InitLaw::Samples(m) => write!(f, "Samples(n={})", m.len()),
        }
    }
}

impl InitLaw {
    pub fn normal1(mean: f64, std: f64) -> Self {
        InitLaw::Normal { mean: vec![mean], std: vec![std] }
    }

    pub fn point1(value: f64) -> Self {
        InitLaw::Point { value: vec![value] }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitLaw::Normal { mean, .. } => mean.len(),
            InitLaw::Point { value } => value.len(),
            InitLaw::Uniform { lo, .. } => lo.len(),
            InitLaw::Samples(m) => m.dim(),
        }
    }

    /// Shift the law by a constant vector (used by two-copy contraction
    /// checks, where a rigid shift keeps the W2 distance explicit).
    pub fn shifted(&self, shift: &[f64]) -> Self {
        match self {
            InitLaw::Normal { mean, std } => InitLaw::Normal {
                mean: mean.iter().zip(shift).map(|(a, s)| a + s).collect(),
                std: std.clone(),
            },
            InitLaw::Point { value } => InitLaw::Point {
                value: value.iter().zip(shift).map(|(a, s)| a + s).collect(),
            },
            InitLaw::Uniform { lo, hi } => InitLaw::Uniform {
                lo: lo.iter().zip(shift).map(|(a, s)| a + s).collect(),
                hi: hi.iter().zip(shift).map(|(a, s)| a + s).collect(),
            },
            InitLaw::Samples(m) => {
                let dim = m.dim();
                let shifted: Vec<f64> = m
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + shift[i % dim])
                    .collect();
                let meas = match m.weights() {
                    Some(w) => EmpiricalMeasure::weighted(shifted, w.to_vec(), dim),
                    None => EmpiricalMeasure::new(shifted, dim),
                }
                .expect("shift of a valid measure stays valid");
                InitLaw::Samples(Arc::new(meas))
            }
        }
    }

    pub fn sample(&self, rng: &mut SubRng, out: &mut [f64]) {
        match self {
            InitLaw::Normal { mean, std } => {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = mean[c] + std[c] * rng.normal();
                }
            }
            InitLaw::Point { value } => out.copy_from_slice(value),
            InitLaw::Uniform { lo, hi } => {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = lo[c] + (hi[c] - lo[c]) * rng.uniform();
                }
            }
            InitLaw::Samples(m) => {
                let u = rng.uniform();
                let idx = match m.weights() {
                    None => ((u * m.len() as f64) as usize).min(m.len() - 1),
                    Some(w) => {
                        let mut cum = 0.0;
                        let mut pick = m.len() - 1;
                        for (i, wi) in w.iter().enumerate() {
                            cum += wi;
                            if u < cum {
                                pick = i;
                                break;
                            }
                        }
                        pick
                    }
                };
                out.copy_from_slice(m.point(idx));
            }
        }
    }
}

/// Scale and initial data for one simulation.
#[derive(Clone, Debug)]
pub struct ScaleParams {
    /// Scale ratio between the fast and slow clocks, in (0, 1].
    pub eps: f64,
    /// Horizon.
    pub t: f64,
    /// Moment order carried through reports; the initial laws are declared
    /// (not checked) to have finite 3p-th moment.
    pub p: f64,
    /// Deterministic initial point of the auxiliary fast component.
    pub y0: Vec<f64>,
    pub law_rho: InitLaw,
    pub law_xi: InitLaw,
}

impl ScaleParams {
    pub fn validate(&self, dims: crate::model::ModelDims) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps must lie in (0,1], got {}", self.eps)));
        }
        if !(self.t > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.t)));
        }
        if !(self.p >= 2.0) {
            return Err(Error::Config(format!("moment order p must be >= 2, got {}", self.p)));
        }
        if self.y0.len() != dims.m {
            return Err(Error::Config(format!(
                "y0 has dimension {}, model fast dimension is {}",
                self.y0.len(),
                dims.m
            )));
        }
        if self.law_rho.dim() != dims.n {
            return Err(Error::Config(format!(
                "law_rho dimension {} != slow dimension {}",
                self.law_rho.dim(),
                dims.n
            )));
        }
        if self.law_xi.dim() != dims.m {
            return Err(Error::Config(format!(
                "law_xi dimension {} != fast dimension {}",
                self.law_xi.dim(),
                dims.m
            )));
        }
        Ok(())
    }
}

/// Time-grid policy. The coupled system steps at min(h, eps/rho_fast); the
/// step is then shrunk so the horizon divides exactly and frames land on
/// grid points.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// Base slow time step.
    pub h: f64,
    /// Fast oversampling factor: the coupled step never exceeds eps/rho_fast.
    pub rho_fast: f64,
    /// Steps between recorded frames; 0 picks a stride targeting
    /// [`GridSpec::DEFAULT_FRAME_TARGET`] frames.
    pub record_stride: usize,
    /// Atomic Brownian slots per horizon for the slow noise; 0 means one
    /// slot per step. Sweeps set this to the finest grid's step count so
    /// every member consumes the same underlying Brownian path.
    pub noise_atoms: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { h: 0.01, rho_fast: 20.0, record_stride: 0, noise_atoms: 0 }
    }
}

impl GridSpec {
    pub const DEFAULT_FRAME_TARGET: usize = 320;

    /// Concrete grid for the coupled system at scale `eps`.
    pub fn resolve(&self, t: f64, eps: f64) -> Result<ResolvedGrid> {
        if !(self.h > 0.0) || !(self.rho_fast > 0.0) {
            return Err(Error::Config("grid needs positive h and rho_fast".into()));
        }
        let bound = self.h.min(eps / self.rho_fast);
        self.resolve_with_step_bound(t, bound, eps)
    }

    /// Concrete grid for eps-free systems (frozen, averaged-only runs).
    pub fn resolve_slow(&self, t: f64) -> Result<ResolvedGrid> {
        if !(self.h > 0.0) {
            return Err(Error::Config("grid needs positive h".into()));
        }
        self.resolve_with_step_bound(t, self.h, 1.0)
    }

    fn resolve_with_step_bound(&self, t: f64, bound: f64, eps: f64) -> Result<ResolvedGrid> {
        let raw = (t / bound - 1e-9).ceil().max(1.0) as usize;
        let stride = if self.record_stride > 0 {
            self.record_stride
        } else {
            (raw / Self::DEFAULT_FRAME_TARGET).max(1)
        };
        let n_steps = raw.div_ceil(stride) * stride;
        let atoms = if self.noise_atoms == 0 { n_steps } else { self.noise_atoms };
        if atoms % n_steps != 0 {
            return Err(Error::Config(format!(
                "noise_atoms {atoms} must be a multiple of the step count {n_steps}"
            )));
        }
        Ok(ResolvedGrid {
            t,
            eps,
            n_steps,
            dt: t / n_steps as f64,
            stride,
            n_frames: n_steps / stride + 1,
            atoms,
        })
    }
}

/// A fully determined uniform grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedGrid {
    pub t: f64,
    pub eps: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub stride: usize,
    pub n_frames: usize,
    pub atoms: usize,
}

impl ResolvedGrid {
    pub fn time_at_step(&self, step: usize) -> f64 {
        self.t * (step as f64 / self.n_steps as f64)
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames).map(|f| self.time_at_step(f * self.stride)).collect()
    }
}

/// Named processes a [`PathBundle`] can carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ProcessLabel {
    XEps,
    YEpsXi,
    YEpsY0,
    XBar,
    UEps,
    ThetaEps,
    ULimit,
}

impl ProcessLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessLabel::XEps => "X_eps",
            ProcessLabel::YEpsXi => "Y_eps_xi",
            ProcessLabel::YEpsY0 => "Y_eps_y0",
            ProcessLabel::XBar => "X_bar",
            ProcessLabel::UEps => "U_eps",
            ProcessLabel::ThetaEps => "theta_eps",
            ProcessLabel::ULimit => "U_limit",
        }
    }
}

/// Recorded trajectory block: frame-major storage, each frame holding the
/// whole ensemble particle-major.
#[derive(Clone, Debug)]
pub struct Ensemble {
    data: Vec<f64>,
    pub n_particles: usize,
    pub n_frames: usize,
    pub dim: usize,
}

impl Ensemble {
    pub fn zeros(n_particles: usize, n_frames: usize, dim: usize) -> Self {
        Ensemble { data: vec![0.0; n_particles * n_frames * dim], n_particles, n_frames, dim }
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let w = self.n_particles * self.dim;
        &self.data[f * w..(f + 1) * w]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        let w = self.n_particles * self.dim;
        &mut self.data[f * w..(f + 1) * w]
    }

    pub fn value(&self, particle: usize, f: usize, c: usize) -> f64 {
        self.data[f * self.n_particles * self.dim + particle * self.dim + c]
    }

    pub fn point(&self, particle: usize, f: usize) -> &[f64] {
        let base = f * self.n_particles * self.dim + particle * self.dim;
        &self.data[base..base + self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Per-particle sup over frames of the Euclidean distance to the same
    /// particle in `other`.
    pub fn sup_distance_per_particle(&self, other: &Ensemble) -> Vec<f64> {
        assert_eq!(self.n_particles, other.n_particles);
        assert_eq!(self.n_frames, other.n_frames);
        assert_eq!(self.dim, other.dim);
        let mut sup = vec![0.0f64; self.n_particles];
        for f in 0..self.n_frames {
            let a = self.frame(f);
            let b = other.frame(f);
            for i in 0..self.n_particles {
                let mut d2 = 0.0;
                for c in 0..self.dim {
                    let d = a[i * self.dim + c] - b[i * self.dim + c];
                    d2 += d * d;
                }
                sup[i] = sup[i].max(d2.sqrt());
            }
        }
        sup
    }

    /// Terminal-frame scalar samples (dim must be 1).
    pub fn terminal_1d(&self) -> Vec<f64> {
        assert_eq!(self.dim, 1);
        self.frame(self.n_frames - 1).to_vec()
    }
}

/// Master seed plus stream layout: everything needed to regenerate any
/// increment a simulation consumed.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeedLedger {
    pub master_seed: u64,
    pub n_particles: usize,
    pub n_steps: usize,
    pub record_stride: usize,
    pub noise_atoms: usize,
    pub dt: f64,
    pub eps: f64,
    pub horizon: f64,
}

impl SeedLedger {
    pub fn from_grid(master_seed: u64, n_particles: usize, grid: &ResolvedGrid) -> Self {
        SeedLedger {
            master_seed,
            n_particles,
            n_steps: grid.n_steps,
            record_stride: grid.stride,
            noise_atoms: grid.atoms,
            dt: grid.dt,
            eps: grid.eps,
            horizon: grid.t,
        }
    }

    pub fn stream(&self, channel: Channel) -> NoiseStream {
        NoiseStream::new(self.master_seed, channel)
    }

    /// Slow-noise increment over steps [step, step+span): the sum of the
    /// atomic N(0, horizon/atoms) increments inside the window, per
    /// component. Identical for every run sharing (seed, atoms, horizon),
    /// which is the cross-run coupling contract.
    pub fn slow_increment(&self, particle: usize, step: usize, span: usize, out: &mut [f64]) {
        let stream = self.stream(Channel::SlowB);
        let per_step = self.noise_atoms / self.n_steps;
        let scale = (self.horizon / self.noise_atoms as f64).sqrt();
        out.fill(0.0);
        let mut buf = [0.0f64; 8];
        let dim = out.len();
        debug_assert!(dim <= buf.len());
        for a in step * per_step..(step + span) * per_step {
            stream.fill_normals(particle as u64, a as u64, &mut buf[..dim]);
            for c in 0..dim {
                out[c] += scale * buf[c];
            }
        }
    }

    /// Fast-noise increment for one step: sqrt(dt) standard normals at
    /// (particle, step). Consumed identically by both fast components.
    pub fn fast_increment(&self, particle: usize, step: usize, out: &mut [f64]) {
        let stream = self.stream(Channel::FastW);
        let scale = self.dt.sqrt();
        stream.fill_normals(particle as u64, step as u64, out);
        for v in out.iter_mut() {
            *v *= scale;
        }
    }

    /// Initial slow draw for one particle.
    pub fn rho_draw(&self, law: &InitLaw, particle: usize, out: &mut [f64]) {
        let mut rng = SubRng::new(self.stream(Channel::InitRho), particle as u64);
        law.sample(&mut rng, out);
    }

    /// Initial fast draw for one particle.
    pub fn xi_draw(&self, law: &InitLaw, particle: usize, out: &mut [f64]) {
        let mut rng = SubRng::new(self.stream(Channel::InitXi), particle as u64);
        law.sample(&mut rng, out);
    }

    /// True when `other` consumes the same Brownian paths and initial draws
    /// on a compatible grid.
    pub fn shares_noise_with(&self, other: &SeedLedger) -> bool {
        self.master_seed == other.master_seed
            && self.n_particles == other.n_particles
            && self.noise_atoms == other.noise_atoms
            && self.horizon == other.horizon
    }
}

/// Time-gridded ensemble trajectories plus the seed ledger that regenerates
/// their driving noise.
#[derive(Clone, Debug)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub ensembles: BTreeMap<ProcessLabel, Ensemble>,
    pub ledger: SeedLedger,
}

impl PathBundle {
    pub fn ensemble(&self, label: ProcessLabel) -> Result<&Ensemble> {
        self.ensembles
            .get(&label)
            .ok_or_else(|| Error::Config(format!("bundle has no {} ensemble", label.as_str())))
    }

    pub fn n_frames(&self) -> usize {
        self.times.len()
    }
}

/// The fluctuation ensemble (X_eps - X_bar)/sqrt(eps) on shared frames.
pub fn fluctuation_ensemble(coupled: &PathBundle, averaged: &PathBundle) -> Result<Ensemble> {
    if coupled.times != averaged.times {
        return Err(Error::GridMismatch(
            "coupled and averaged bundles record different frames".into(),
        ));
    }
    let xe = coupled.ensemble(ProcessLabel::XEps)?;
    let xb = averaged.ensemble(ProcessLabel::XBar)?;
    let eps = coupled.ledger.eps;
    let mut u = Ensemble::zeros(xe.n_particles, xe.n_frames, xe.dim);
    let inv = 1.0 / eps.sqrt();
    for f in 0..xe.n_frames {
        let (a, b) = (xe.frame(f), xb.frame(f));
        let out = u.frame_mut(f);
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o = (x - y) * inv;
        }
    }
    Ok(u)
}

/// Scan freshly written states for non-finite values; blow-ups abort with
/// the first offending (step, particle) and never clamp.
pub(crate) fn check_finite_states(
    states: &[f64],
    dim: usize,
    process: &'static str,
    step: usize,
) -> Result<()> {
    if let Some(pos) = states.iter().position(|v| !v.is_finite()) {
        return Err(Error::BlowUp { process, step, particle: pos / dim });
    }
    Ok(())
}

pub(crate) const PAR_CHUNK: usize = 64;
