//! Deterministic quadrature used by the closed-form oracles: Gauss-Hermite
//! rules for Gaussian expectations and composite Simpson for decaying
//! integrands on [0, T].

/// Gauss-Hermite rule (physicists' weight e^{-x^2}) with `n` nodes.
///
/// Nodes are found by Newton iteration on the Hermite recurrence, largest
/// root first, with the standard asymptotic initial guesses.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pim4 = 0.751_125_544_464_942_9_f64; // pi^(-1/4)
    let m = (n + 1) / 2;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => ((2 * n + 1) as f64).sqrt() - 1.855_75 * ((2 * n + 1) as f64).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// E[f(Z)] for Z ~ N(mean, var) by Gauss-Hermite with `n` nodes.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(mean: f64, var: f64, n: usize, f: F) -> f64 {
    let (nodes, weights) = gauss_hermite(n);
    let scale = (2.0 * var).sqrt();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mean + scale * x);
    }
    acc * inv_sqrt_pi
}

/// Composite Simpson on [a, b] with `n` panels (n rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Trapezoid rule over uniformly spaced samples with spacing `h`.
pub fn trapezoid_uniform(samples: &[f64], h: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let inner: f64 = samples[1..samples.len() - 1].iter().sum();
    h * (0.5 * samples[0] + inner + 0.5 * samples[samples.len() - 1])
}
