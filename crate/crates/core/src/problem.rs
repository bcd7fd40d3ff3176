//! Physical problem description: grating geometry, materials, incidence.
//!
//! The scattering cell is one period of a two-layer slab: a dielectric
//! (`Region::Upper`, permittivity `eps1 > 0`, permeability `mu1 > 0`) sits on
//! top of a negative-index filling (`Region::Lower`, `eps2 < 0`, `mu2 < 0`),
//! which in turn rests on a perfectly conducting plane at `x2 = 0`. The two
//! materials meet along the corrugated interface `x2 = f(x1)`; the artificial
//! top boundary carrying the transparent boundary condition is the line
//! `x2 = h1` above the corrugation.

use num_complex::Complex64;

use crate::error::{Error, Result, Violation};
use crate::limits::CRITICAL_CONTRAST_GUARD;

/// Interface height profile: a real trigonometric polynomial
/// `f(x1) = mean + sum_m (cosine[m-1] cos(2 pi m x1 / period)
///                        + sine[m-1] sin(2 pi m x1 / period))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GratingProfile {
    /// Period of the grating (same length unit as all heights).
    pub period: f64,
    /// Mean interface height (zeroth Fourier coefficient).
    pub mean: f64,
    /// Cosine coefficients for harmonics m = 1, 2, ...
    pub cosine: Vec<f64>,
    /// Sine coefficients for harmonics m = 1, 2, ...
    pub sine: Vec<f64>,
}

impl GratingProfile {
    /// Profile of a flat interface at the given height.
    pub fn flat(period: f64, height: f64) -> Self {
        GratingProfile {
            period,
            mean: height,
            cosine: Vec::new(),
            sine: Vec::new(),
        }
    }

    /// True when every oscillatory coefficient is exactly zero.
    pub fn is_flat(&self) -> bool {
        self.cosine.iter().all(|&c| c == 0.0) && self.sine.iter().all(|&s| s == 0.0)
    }

    /// Interface height f(x1).
    pub fn evaluate(&self, x1: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let mut f = self.mean;
        for (m, &a) in self.cosine.iter().enumerate() {
            f += a * ((m + 1) as f64 * w * x1).cos();
        }
        for (m, &b) in self.sine.iter().enumerate() {
            f += b * ((m + 1) as f64 * w * x1).sin();
        }
        f
    }

    /// Slope f'(x1).
    pub fn derivative(&self, x1: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let mut d = 0.0;
        for (m, &a) in self.cosine.iter().enumerate() {
            let mw = (m + 1) as f64 * w;
            d -= a * mw * (mw * x1).sin();
        }
        for (m, &b) in self.sine.iter().enumerate() {
            let mw = (m + 1) as f64 * w;
            d += b * mw * (mw * x1).cos();
        }
        d
    }

    /// Curvature f''(x1).
    pub fn second_derivative(&self, x1: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let mut d = 0.0;
        for (m, &a) in self.cosine.iter().enumerate() {
            let mw = (m + 1) as f64 * w;
            d -= a * mw * mw * (mw * x1).cos();
        }
        for (m, &b) in self.sine.iter().enumerate() {
            let mw = (m + 1) as f64 * w;
            d -= b * mw * mw * (mw * x1).sin();
        }
        d
    }

    /// Extremal heights (min, max) of f over one period.
    ///
    /// The profile is a trigonometric polynomial, so sampling well above the
    /// Nyquist density of its highest harmonic brackets every extremum; a few
    /// Newton steps on f' then polish each bracket to machine precision.
    pub fn range(&self) -> (f64, f64) {
        let harmonics = self.cosine.len().max(self.sine.len()).max(1);
        let samples = 64 * harmonics;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..samples {
            let x = self.period * k as f64 / samples as f64;
            let x = self.polish_extremum(x);
            let f = self.evaluate(x);
            lo = lo.min(f);
            hi = hi.max(f);
            let raw = self.evaluate(self.period * k as f64 / samples as f64);
            lo = lo.min(raw);
            hi = hi.max(raw);
        }
        (lo, hi)
    }

    fn polish_extremum(&self, mut x: f64) -> f64 {
        for _ in 0..8 {
            let d2 = self.second_derivative(x);
            if d2.abs() < 1e-14 {
                break;
            }
            let step = self.derivative(x) / d2;
            x -= step;
            if step.abs() < 1e-13 * self.period {
                break;
            }
        }
        x
    }
}

/// Material subdomain of the periodic cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Dielectric between the interface and the top boundary x2 = h1.
    Upper,
    /// Negative-index filling between the conducting plane and the interface.
    Lower,
}

/// Complete description of one scattering computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    /// Interface profile (owns the period).
    pub profile: GratingProfile,
    /// Height of the artificial top boundary; must clear the interface crest.
    pub h1: f64,
    /// Dielectric permittivity (> 0).
    pub eps1: f64,
    /// Dielectric permeability (> 0).
    pub mu1: f64,
    /// Filling permittivity (< 0).
    pub eps2: f64,
    /// Filling permeability (< 0).
    pub mu2: f64,
    /// Angular frequency (> 0).
    pub omega: f64,
    /// Incidence angle from vertical, in (-pi/2, pi/2).
    pub theta: f64,
    /// Artificial damping parameter (>= 0); zero is the lossless problem.
    pub sigma: f64,
}

/// Scalars derived from a configuration, fixed for the whole computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedScalars {
    /// Dielectric wavenumber kappa1 = omega sqrt(eps1 mu1).
    pub kappa1: f64,
    /// Squared filling wavenumber omega^2 eps2 mu2 (positive: both signs flip).
    pub kappa2_squared: f64,
    /// Horizontal wavenumber of the incident wave, kappa1 sin(theta).
    pub alpha: f64,
    /// Vertical wavenumber of the incident wave, kappa1 cos(theta).
    pub beta: f64,
}

impl ProblemConfig {
    /// Checks every admissibility rule; an empty list means the configuration
    /// can be solved. Violations never abort early: all are collected.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |key: &str, message: String| {
            v.push(Violation {
                key: key.to_string(),
                message,
            })
        };

        if !(self.profile.period > 0.0) || !self.profile.period.is_finite() {
            push("grating.period", format!("must be positive and finite, got {}", self.profile.period));
        }
        let finite_profile = self.profile.period.is_finite()
            && self.profile.mean.is_finite()
            && self.profile.cosine.iter().all(|c| c.is_finite())
            && self.profile.sine.iter().all(|s| s.is_finite());
        if !finite_profile {
            push("grating", "profile coefficients must be finite".to_string());
        }
        if finite_profile && self.profile.period > 0.0 {
            let (fmin, fmax) = self.profile.range();
            if !(fmin > 0.0) {
                push(
                    "grating",
                    format!("interface must stay above the conducting plane; min f = {fmin}"),
                );
            }
            if !(self.h1 > fmax) {
                push(
                    "grating.h1",
                    format!("top boundary h1 = {} must lie above the interface crest {fmax}", self.h1),
                );
            }
        }
        if !(self.eps1 > 0.0) {
            push("materials.eps1", format!("dielectric permittivity must be positive, got {}", self.eps1));
        }
        if !(self.mu1 > 0.0) {
            push("materials.mu1", format!("dielectric permeability must be positive, got {}", self.mu1));
        }
        if !(self.eps2 < 0.0) {
            push("materials.eps2", format!("filling permittivity must be negative, got {}", self.eps2));
        }
        if !(self.mu2 < 0.0) {
            push("materials.mu2", format!("filling permeability must be negative, got {}", self.mu2));
        }
        if self.eps2 != 0.0 {
            let contrast = self.eps1 / self.eps2;
            if (contrast + 1.0).abs() < CRITICAL_CONTRAST_GUARD {
                push(
                    "materials",
                    format!(
                        "permittivity contrast eps1/eps2 = {contrast} is within {CRITICAL_CONTRAST_GUARD} \
                         of the forbidden value -1"
                    ),
                );
            }
        }
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            push("incidence.omega", format!("frequency must be positive and finite, got {}", self.omega));
        }
        if !(self.theta.abs() < std::f64::consts::FRAC_PI_2) {
            push(
                "incidence.theta",
                format!("incidence angle must lie strictly inside (-pi/2, pi/2), got {}", self.theta),
            );
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            push("incidence.sigma", format!("damping must be non-negative and finite, got {}", self.sigma));
        }
        v
    }

    /// Non-fatal observations about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.profile.is_flat() {
            w.push(
                "interface profile is flat; the layered reference solution applies and \
                 the corrugated machinery reduces to a two-layer slab"
                    .to_string(),
            );
        }
        w
    }

    /// Computes the incidence scalars, rejecting out-of-domain parameters.
    pub fn derive_scalars(&self) -> Result<DerivedScalars> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega must be positive and finite, got {}",
                self.omega
            )));
        }
        if !(self.theta.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie strictly inside (-pi/2, pi/2), got {}",
                self.theta
            )));
        }
        if !(self.eps1 * self.mu1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps1*mu1 must be positive to define the dielectric wavenumber, got {}",
                self.eps1 * self.mu1
            )));
        }
        let kappa1 = self.omega * (self.eps1 * self.mu1).sqrt();
        Ok(DerivedScalars {
            kappa1,
            kappa2_squared: self.omega * self.omega * self.eps2 * self.mu2,
            alpha: kappa1 * self.theta.sin(),
            beta: kappa1 * self.theta.cos(),
        })
    }

    /// Effective (damped) permittivity entering the divergence-form operator.
    ///
    /// The damping shifts only the filling: eps2 + i sigma / omega. The
    /// dielectric stays real.
    pub fn permittivity_at(&self, region: Region) -> Complex64 {
        match region {
            Region::Upper => Complex64::new(self.eps1, 0.0),
            Region::Lower => Complex64::new(self.eps2, self.sigma / self.omega),
        }
    }

    /// Permeability of a region (always real).
    pub fn permeability_at(&self, region: Region) -> f64 {
        match region {
            Region::Upper => self.mu1,
            Region::Lower => self.mu2,
        }
    }

    /// The same configuration with a different damping value.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        let mut c = self.clone();
        c.sigma = sigma;
        c
    }
}
