//! Closed-form reference solution for a flat interface.
//!
//! With a flat interface at height `h2` the cell is a two-layer slab and the
//! field separates per diffraction order. Below the interface the conducting
//! plane forces an even standing wave `A_n cos(gamma_n x2)` with
//! `gamma_n^2 = (eps2 + i sigma/omega)(omega^2 mu2 + i sigma) - alpha_n^2`;
//! above it the field is the incident wave plus one outgoing order
//! `r_n exp(i beta_n (x2 - h1))`, anchored at the top boundary so `r_n`
//! matches the coefficients the discrete solver extracts there. Matching the
//! field and `eps^{-1}` times its vertical derivative across the interface
//! gives an independent 2 x 2 system per order; only order 0 is sourced, so
//! all other orders vanish identically. Everything is branch-free: the lower
//! solution is even in `gamma_n`, so either square root works.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::dtn::{self, ModeSet};
use crate::error::{Error, Result};
use crate::limits::LAYER_DETERMINANT_FLOOR;
use crate::problem::{ProblemConfig, Region};

/// Escape hatches for sanity checks outside the physical parameter range.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleOptions {
    /// Accept `eps2 >= 0` (an ordinary dielectric or vacuum filling). Used by
    /// tests that compare against a homogeneous half-space; the physical
    /// configuration always has a negative filling permittivity.
    pub allow_nonnegative_lower_permittivity: bool,
}

/// Per-order coefficients of the two-layer reference solution.
#[derive(Debug, Clone)]
pub struct LayeredSolution {
    pub modes: ModeSet,
    /// Interface height (the flat profile's mean).
    pub interface_height: f64,
    /// Top boundary height; outgoing coefficients are anchored here.
    pub top_height: f64,
    /// Incident vertical wavenumber.
    pub beta: f64,
    /// Incident horizontal wavenumber.
    pub alpha: f64,
    /// Vertical wavenumbers in the filling, one per order.
    pub gamma: Vec<Complex64>,
    /// Standing-wave amplitudes in the filling, one per order.
    pub cavity: Vec<Complex64>,
    /// Outgoing amplitudes at the top boundary, one per order.
    pub outgoing: Vec<Complex64>,
}

impl LayeredSolution {
    /// Outgoing coefficient of order `n`.
    pub fn outgoing_of(&self, n: i64) -> Complex64 {
        self.outgoing[self.modes.index_of(n)]
    }

    /// Total field at a point of the slab `0 <= x2 <= h1`.
    pub fn field(&self, x1: f64, x2: f64) -> Result<Complex64> {
        let tol = 1e-12 * (1.0 + self.top_height.abs());
        if x2 < -tol || x2 > self.top_height + tol {
            return Err(Error::PointOutsideRegion {
                x1,
                x2,
                h1: self.top_height,
            });
        }
        let mut u = Complex64::new(0.0, 0.0);
        if x2 <= self.interface_height {
            for n in self.modes.orders() {
                let k = self.modes.index_of(n);
                let a = self.cavity[k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let osc = (self.gamma[k] * x2).cos();
                u += a * osc * (Complex64::i() * self.modes.alpha_n(n) * x1).exp();
            }
        } else {
            u += (Complex64::i() * (self.alpha * x1 - self.beta * x2)).exp();
            for n in self.modes.orders() {
                let k = self.modes.index_of(n);
                let r = self.outgoing[k];
                if r == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let vertical = (Complex64::i() * self.modes.beta(n) * (x2 - self.top_height)).exp();
                u += r * vertical * (Complex64::i() * self.modes.alpha_n(n) * x1).exp();
            }
        }
        Ok(u)
    }

    /// Energy fraction radiated into each propagating order.
    pub fn efficiencies(&self) -> Vec<(i64, f64)> {
        dtn::efficiencies(&self.modes, &self.outgoing, self.beta)
            .expect("coefficient count matches the owned mode set")
    }

    /// Per-order table as CSV.
    pub fn write_table<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "n,gamma_re,gamma_im,cavity_re,cavity_im,outgoing_re,outgoing_im")?;
        for n in self.modes.orders() {
            let k = self.modes.index_of(n);
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                n,
                self.gamma[k].re,
                self.gamma[k].im,
                self.cavity[k].re,
                self.cavity[k].im,
                self.outgoing[k].re,
                self.outgoing[k].im
            )?;
        }
        Ok(())
    }
}

/// Solves the two-layer slab for a flat-interface configuration.
pub fn solve_layered(
    config: &ProblemConfig,
    modes: &ModeSet,
    options: OracleOptions,
) -> Result<LayeredSolution> {
    if !config.profile.is_flat() {
        return Err(Error::OracleUnavailable(
            "the layered reference solution requires a flat interface profile".to_string(),
        ));
    }
    if !options.allow_nonnegative_lower_permittivity && !(config.eps2 < 0.0) {
        return Err(Error::OracleUnavailable(format!(
            "filling permittivity must be negative, got {} (relax via OracleOptions for \
             homogeneous sanity checks)",
            config.eps2
        )));
    }
    let h2 = config.profile.mean;
    let h1 = config.h1;
    if !(h2 > 0.0 && h2 < h1) {
        return Err(Error::OracleUnavailable(format!(
            "interface height {h2} must lie strictly between the plane and the top boundary {h1}"
        )));
    }
    let scalars = config.derive_scalars()?;
    let eps_lower = config.permittivity_at(Region::Lower);
    let eps1_inv = 1.0 / config.eps1;
    // Squared filling wavenumber including damping in both material laws.
    let kappa2_sq = eps_lower
        * Complex64::new(
            config.omega * config.omega * config.mu2,
            config.sigma,
        );

    let count = modes.count();
    let mut gamma = Vec::with_capacity(count);
    let mut cavity = Vec::with_capacity(count);
    let mut outgoing = Vec::with_capacity(count);
    for n in modes.orders() {
        let alpha_n = modes.alpha_n(n);
        let g = (kappa2_sq - alpha_n * alpha_n).sqrt();
        gamma.push(g);

        let beta_n = modes.beta(n);
        let up = (Complex64::i() * beta_n * (h2 - h1)).exp();
        // Continuity of u and of eps^{-1} du/dx2 at x2 = h2:
        //   A cos(g h2) - r up                        = src0
        //   -A eps_l^{-1} g sin(g h2) - r eps1^{-1} i beta_n up = src1
        let m00 = (g * h2).cos();
        let m01 = -up;
        let m10 = -eps_lower.inv() * g * (g * h2).sin();
        let m11 = -eps1_inv * Complex64::i() * beta_n * up;
        let det = m00 * m11 - m01 * m10;
        let col0 = (m00.norm_sqr() + m10.norm_sqr()).sqrt();
        let col1 = (m01.norm_sqr() + m11.norm_sqr()).sqrt();
        let det_scaled = det.norm() / (col0 * col1);
        if det_scaled < LAYER_DETERMINANT_FLOOR {
            return Err(Error::DegenerateLayer {
                n,
                det_mag: det_scaled,
            });
        }
        if n == 0 {
            let down = (-Complex64::i() * scalars.beta * h2).exp();
            let src0 = down;
            let src1 = -eps1_inv * Complex64::i() * scalars.beta * down;
            cavity.push((src0 * m11 - src1 * m01) / det);
            outgoing.push((m00 * src1 - m10 * src0) / det);
        } else {
            cavity.push(Complex64::new(0.0, 0.0));
            outgoing.push(Complex64::new(0.0, 0.0));
        }
    }

    Ok(LayeredSolution {
        modes: modes.clone(),
        interface_height: h2,
        top_height: h1,
        beta: scalars.beta,
        alpha: scalars.alpha,
        gamma,
        cavity,
        outgoing,
    })
}
