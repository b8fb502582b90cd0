//! Fourier diagnostics for near-invariant sets.
//!
//! Everything here works with the balanced indicator f = 1_A − α of a set
//! A ⊂ F_p of density α, and its transform f̂(r) = Σ_x f(x) e(−rx/p) where
//! e(θ) = exp(2πiθ). Parseval gives Σ_r |f̂(r)|² = α(1−α)p², and the
//! nonzero frequencies carry a probability measure
//!
//! ```text
//!     μ(r) = |f̂(r)|² / M,   M = Σ_{r≠0} |f̂(r)|².
//! ```
//!
//! When A moves little under x ↦ x + b for |b| ≤ K, the weighted energy
//! Σ_r |f̂(r)|² W_K(r/p) is small, which forces μ to concentrate on the
//! short interval I = {r : 1 ≤ |r| ≤ N}. Folding μ onto {1..N} gives a
//! second measure λ whose stability under n ↦ qn (total-variation against
//! the dilated copy) controls the expected q-adic valuation E_λ v_q, and
//! summing log q · E_λ v_q over small primes q can never exceed log N —
//! the chain inequality the certificate assembles and checks.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::arith::{primes_up_to, Prime};
use crate::error::{Error, Result};
use crate::indicator::IndicatorSet;

/// Relative Parseval error tolerated by the transform self-check.
pub const PARSEVAL_TOLERANCE: f64 = 1e-6;

/// Transform of the balanced indicator of a set.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub p: Prime,
    /// Density |A|/p.
    pub alpha: f64,
    /// f̂(r) for r = 0..p−1.
    pub fhat: Vec<Complex<f64>>,
    /// M = Σ_{r≠0} |f̂(r)|².
    pub total_mass: f64,
}

/// The normalized squared spectrum μ(r) = |f̂(r)|²/M on F_p^× together
/// with the interval radius used by downstream statistics.
#[derive(Debug, Clone)]
pub struct SpectralMeasure {
    pub p: Prime,
    /// μ indexed by residue; entry 0 is unused and holds 0.
    pub mu: Vec<f64>,
    /// Interval radius N, so I = {r : 1 ≤ |r| ≤ N}.
    pub n_radius: u64,
}

/// The folded interval measure λ(n) = (μ(n) + μ(−n)) / μ(I) on {1..N}.
#[derive(Debug, Clone)]
pub struct LambdaMeasure {
    pub n_radius: u64,
    /// λ indexed by n; entry 0 is unused and holds 0.
    pub lambda: Vec<f64>,
    /// μ(I), the normalizing interval mass.
    pub mass_in_interval: f64,
}

/// Transform f = 1_A − α with a full-length FFT (Bluestein under the
/// hood for prime sizes) and verify Parseval against the exact value
/// |A|·(p − |A|).
pub fn dft(set: &IndicatorSet) -> Result<SpectralData> {
    let prime = set.modulus();
    let p = prime.get();
    if p < 3 {
        return Err(Error::DegenerateParams {
            reason: format!("transform length must be an odd prime, got {p}"),
        });
    }
    let cardinality = set.len();
    let alpha = cardinality as f64 / p as f64;

    let mut buffer: Vec<Complex<f64>> = (0..p)
        .map(|x| {
            let fx = if set.contains(x) { 1.0 - alpha } else { -alpha };
            Complex::new(fx, 0.0)
        })
        .collect();
    FftPlanner::new()
        .plan_fft_forward(p as usize)
        .process(&mut buffer);

    // Parseval: Σ_r |f̂(r)|² = p Σ_x f(x)² = |A|(p − |A|), exactly.
    let expected = (cardinality as u128 * (p - cardinality) as u128) as f64;
    let zero_energy = buffer[0].norm_sqr();
    let total_mass: f64 = buffer[1..].iter().map(|c| c.norm_sqr()).sum();
    let achieved = total_mass + zero_energy;
    let error = (achieved - expected).abs();
    let bound = if expected > 0.0 {
        PARSEVAL_TOLERANCE * expected
    } else {
        1e-9
    };
    if error > bound {
        return Err(Error::AccuracyViolation {
            context: "Parseval self-check of the balanced-indicator transform",
            error,
            bound,
        });
    }

    Ok(SpectralData {
        p: prime,
        alpha,
        fhat: buffer,
        total_mass,
    })
}

/// Normalize the nonzero spectrum into a probability measure with an
/// attached interval radius N ≤ (p−1)/2.
pub fn spectral_measure(data: &SpectralData, n_radius: u64) -> Result<SpectralMeasure> {
    let p = data.p.get();
    if n_radius == 0 || n_radius > (p - 1) / 2 {
        return Err(Error::DegenerateParams {
            reason: format!("interval radius {n_radius} must lie in 1..=(p-1)/2 = {}", (p - 1) / 2),
        });
    }
    if data.total_mass <= 0.0 {
        return Err(Error::DegenerateSpectrum {
            reason: "nonzero-frequency mass vanishes (the set is empty or full)".to_string(),
        });
    }
    let mut mu = vec![0.0f64; p as usize];
    for (r, value) in mu.iter_mut().enumerate().skip(1) {
        *value = data.fhat[r].norm_sqr() / data.total_mass;
    }
    Ok(SpectralMeasure {
        p: data.p,
        mu,
        n_radius,
    })
}

/// μ(I) = Σ_{1 ≤ |r| ≤ N} μ(r).
pub fn interval_mass(mu: &SpectralMeasure) -> f64 {
    let p = mu.p.get() as usize;
    let mut mass = 0.0f64;
    for r in 1..=mu.n_radius as usize {
        mass += mu.mu[r] + mu.mu[p - r];
    }
    mass
}

/// Mass outside the interval, computed as 1 − μ(I) rather than by
/// summing the (possibly tiny) tail, so near-concentrated spectra do not
/// lose the tail to cancellation.
pub fn tail_mass(mu: &SpectralMeasure) -> f64 {
    1.0 - interval_mass(mu)
}

/// W_K(t) = (1/K) Σ_{b=1}^{K} |e(bt) − 1|² = (4/K) Σ_b sin²(πbt).
pub fn w_kernel(t: f64, k: u64) -> f64 {
    assert!(k >= 1, "kernel order must be positive");
    let mut sum = 0.0f64;
    for b in 1..=k {
        let s = (std::f64::consts::PI * b as f64 * t).sin();
        sum += 4.0 * s * s;
    }
    sum / k as f64
}

/// Grid minimum of W_K(t) over K ∈ [2, k_max] and t = i/grid_points with
/// distance to the nearest integer at least 2/(5K). The minimum is
/// strictly positive; it is measured, never assumed.
pub fn estimate_c0(k_max: u64, grid_points: u32) -> Result<f64> {
    if k_max < 2 {
        return Err(Error::DegenerateParams {
            reason: format!("kernel floor needs k_max >= 2, got {k_max}"),
        });
    }
    if grid_points < 10 {
        return Err(Error::DegenerateParams {
            reason: format!("kernel floor needs at least 10 grid points, got {grid_points}"),
        });
    }
    let mut minimum = f64::INFINITY;
    for k in 2..=k_max {
        let threshold = 2.0 / (5.0 * k as f64);
        for i in 1..grid_points {
            let t = i as f64 / grid_points as f64;
            let dist = t.min(1.0 - t);
            if dist < threshold {
                continue;
            }
            let w = w_kernel(t, k);
            if w < minimum {
                minimum = w;
            }
        }
    }
    Ok(minimum)
}

/// (1/p²) Σ_r |f̂(r)|² W_K(r/p). By Parseval this equals the mean of
/// |A △ (A + b)| / p over 1 ≤ b ≤ K, so it is bounded by the worst
/// translation defect of the set.
pub fn translation_energy(data: &SpectralData, k: u64) -> Result<f64> {
    let p = data.p.get();
    if k == 0 || k >= p {
        return Err(Error::DegenerateParams {
            reason: format!("translation range {k} must lie in 1..p = {p}"),
        });
    }
    let pf = p as f64;
    let mut energy = 0.0f64;
    for (r, c) in data.fhat.iter().enumerate().skip(1) {
        energy += c.norm_sqr() * w_kernel(r as f64 / pf, k);
    }
    Ok(energy / (pf * pf))
}

/// Total variation between μ and its dilation: Σ_{r≠0} |μ(r) − μ(qr)|.
pub fn dilation_tv(mu: &SpectralMeasure, q: u64) -> Result<f64> {
    let p = mu.p.get();
    if q % p == 0 {
        return Err(Error::DegenerateParams {
            reason: format!("dilation factor {q} vanishes mod {p}"),
        });
    }
    let qm = (q % p) as u128;
    let mut tv = 0.0f64;
    for r in 1..p {
        let qr = (qm * r as u128 % p as u128) as usize;
        tv += (mu.mu[r as usize] - mu.mu[qr]).abs();
    }
    Ok(tv)
}

/// Fold μ onto {1..N}: λ(n) = (μ(n) + μ(−n)) / μ(I).
pub fn lambda_measure(mu: &SpectralMeasure) -> Result<LambdaMeasure> {
    let p = mu.p.get() as usize;
    let n_radius = mu.n_radius;
    let mass = interval_mass(mu);
    if mass <= 0.0 {
        return Err(Error::EmptyInterval { n_radius });
    }
    let mut lambda = vec![0.0f64; n_radius as usize + 1];
    for n in 1..=n_radius as usize {
        lambda[n] = (mu.mu[n] + mu.mu[p - n]) / mass;
    }
    Ok(LambdaMeasure {
        n_radius,
        lambda,
        mass_in_interval: mass,
    })
}

/// ℓ¹ distance between λ and its dilated pushback:
/// Σ_{n ≤ N} |λ(n) − [qn ≤ N] λ(qn)|.
pub fn lambda_dilation_tv(lam: &LambdaMeasure, q: u64) -> Result<f64> {
    if q < 2 {
        return Err(Error::DegenerateParams {
            reason: format!("dilation factor must be at least 2, got {q}"),
        });
    }
    let n_radius = lam.n_radius;
    let mut tv = 0.0f64;
    for n in 1..=n_radius {
        let dilated = q as u128 * n as u128;
        let shifted = if dilated <= n_radius as u128 {
            lam.lambda[dilated as usize]
        } else {
            0.0
        };
        tv += (lam.lambda[n as usize] - shifted).abs();
    }
    Ok(tv)
}

/// E_λ v_q = Σ_n λ(n) · v_q(n), the expected q-adic valuation.
pub fn expected_valuation(lam: &LambdaMeasure, q: u64) -> Result<f64> {
    if q < 2 {
        return Err(Error::DegenerateParams {
            reason: format!("valuation base must be at least 2, got {q}"),
        });
    }
    let mut expectation = 0.0f64;
    for n in 1..=lam.n_radius {
        let weight = lam.lambda[n as usize];
        if weight == 0.0 {
            continue;
        }
        let mut m = n;
        let mut v = 0u32;
        while m % q == 0 {
            m /= q;
            v += 1;
        }
        if v > 0 {
            expectation += weight * v as f64;
        }
    }
    Ok(expectation)
}

/// Per-prime dilation diagnostics inside a certificate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DilationRow {
    pub q: u64,
    pub tv_mu: f64,
    pub tv_lambda: f64,
    pub e_valuation: f64,
}

/// The assembled spectral certificate for one set.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub p: u64,
    pub k: u64,
    /// Interval radius N = ⌊(p−1)/(2K)⌋.
    pub n_radius: u64,
    /// Prime cutoff M₀ = min(K, N).
    pub m0: u64,
    pub cardinality: u64,
    pub density: f64,
    pub mass_in_interval: f64,
    pub rows: Vec<DilationRow>,
    /// max(1/p, worst tv_lambda over the prime rows).
    pub eta: f64,
    /// log N.
    pub log_radius: f64,
    /// Σ_q log q · E_λ v_q over the prime rows; never exceeds log N.
    pub valuation_mass: f64,
    /// eta · log N / Σ_q log q, for inspection; absent when no prime
    /// is ≤ M₀.
    pub implied_bound: Option<f64>,
    /// Grid floor of W_K away from integers (k_max 64, 10⁴ points).
    pub c0_estimate: f64,
}

/// Run the full diagnostic chain on one set: transform, measures,
/// per-prime dilation statistics, and the valuation chain check.
pub fn certificate(set: &IndicatorSet, k: u64) -> Result<CertificateReport> {
    let p = set.modulus().get();
    if k == 0 || k >= p {
        return Err(Error::DegenerateParams {
            reason: format!("map range {k} must lie in 1..p = {p}"),
        });
    }
    let n_radius = (p - 1) / (2 * k);
    if n_radius == 0 {
        return Err(Error::DegenerateParams {
            reason: format!("interval radius vanishes at p = {p}, K = {k}"),
        });
    }
    let m0 = k.min(n_radius);

    let data = dft(set)?;
    let mu = spectral_measure(&data, n_radius)?;
    let mass = interval_mass(&mu);
    let lam = lambda_measure(&mu)?;

    let mut rows = Vec::new();
    let mut eta = 1.0 / p as f64;
    let mut valuation_mass = 0.0f64;
    let mut log_weight = 0.0f64;
    for q in primes_up_to(m0) {
        let tv_mu = dilation_tv(&mu, q)?;
        let tv_lambda = lambda_dilation_tv(&lam, q)?;
        let e_valuation = expected_valuation(&lam, q)?;
        eta = eta.max(tv_lambda);
        valuation_mass += (q as f64).ln() * e_valuation;
        log_weight += (q as f64).ln();
        rows.push(DilationRow {
            q,
            tv_mu,
            tv_lambda,
            e_valuation,
        });
    }

    let log_radius = (n_radius as f64).ln();
    // Pointwise Σ_q v_q(n) log q = log n ≤ log N, so the expectation over
    // any probability measure obeys the same bound.
    if valuation_mass > log_radius + 1e-9 {
        return Err(Error::AccuracyViolation {
            context: "valuation chain inequality",
            error: valuation_mass - log_radius,
            bound: 1e-9,
        });
    }
    let implied_bound = if log_weight > 0.0 {
        Some(eta * log_radius / log_weight)
    } else {
        None
    };

    Ok(CertificateReport {
        p,
        k,
        n_radius,
        m0,
        cardinality: set.len(),
        density: set.density(),
        mass_in_interval: mass,
        rows,
        eta,
        log_radius,
        valuation_mass,
        implied_bound,
        c0_estimate: estimate_c0(64, 10_000)?,
    })
}

impl CertificateReport {
    /// CSV export of the per-prime rows: `q,tv_mu,tv_lambda,e_valuation`.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> Result<()> {
        out.write_all(b"q,tv_mu,tv_lambda,e_valuation\n")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                r.q, r.tv_mu, r.tv_lambda, r.e_valuation
            )?;
        }
        Ok(())
    }
}
