//! Diffraction orders and the transparent boundary operator on the top edge.
//!
//! Above the corrugation the scattered field separates into quasi-periodic
//! plane-wave orders `exp(i alpha_n x1 + i beta_n x2)` with
//! `alpha_n = alpha + 2 pi n / period` and vertical wavenumber
//! `beta_n = sqrt(kappa1^2 - alpha_n^2)` taken positive real for propagating
//! orders and positive imaginary for evanescent ones. The operator `T`
//! multiplies the n-th trace coefficient by `i beta_n`; imposing
//! `d u / d x2 = T u + g` on the top edge makes that edge transparent for
//! outgoing waves, with `g` carrying the incident plane wave.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::limits::{GRAZING_ORDER_GUARD, TRUNCATION_TAIL_TARGET};
use crate::problem::{DerivedScalars, ProblemConfig};

/// Retained diffraction orders `n = -truncation ..= truncation` with their
/// vertical wavenumbers.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub period: f64,
    pub alpha: f64,
    pub kappa1: f64,
    pub truncation: usize,
    betas: Vec<Complex64>,
}

impl ModeSet {
    /// Number of retained orders, `2 * truncation + 1`.
    pub fn count(&self) -> usize {
        2 * self.truncation + 1
    }

    /// Iterates the order indices in storage order.
    pub fn orders(&self) -> impl Iterator<Item = i64> + '_ {
        let n = self.truncation as i64;
        -n..=n
    }

    /// Position of order `n` in coefficient vectors.
    pub fn index_of(&self, n: i64) -> usize {
        (n + self.truncation as i64) as usize
    }

    /// Horizontal wavenumber of order `n`.
    pub fn alpha_n(&self, n: i64) -> f64 {
        self.alpha + 2.0 * std::f64::consts::PI * n as f64 / self.period
    }

    /// Vertical wavenumber of order `n`.
    pub fn beta(&self, n: i64) -> Complex64 {
        self.betas[self.index_of(n)]
    }

    /// True when order `n` carries energy away from the grating.
    pub fn is_propagating(&self, n: i64) -> bool {
        self.beta(n).im == 0.0
    }
}

/// Builds the mode set for the given truncation, refusing grazing orders.
pub fn build_mode_set(scalars: &DerivedScalars, period: f64, truncation: usize) -> Result<ModeSet> {
    if !(period > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "period must be positive, got {period}"
        )));
    }
    let kappa1 = scalars.kappa1;
    let n_max = truncation as i64;
    let mut betas = Vec::with_capacity(2 * truncation + 1);
    for n in -n_max..=n_max {
        let alpha_n = scalars.alpha + 2.0 * std::f64::consts::PI * n as f64 / period;
        let gap = alpha_n.abs() - kappa1;
        if gap.abs() < GRAZING_ORDER_GUARD {
            return Err(Error::GrazingOrder {
                n,
                alpha_n_abs: alpha_n.abs(),
                kappa1,
                guard: GRAZING_ORDER_GUARD,
            });
        }
        let beta = if gap < 0.0 {
            Complex64::new((kappa1 * kappa1 - alpha_n * alpha_n).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (alpha_n * alpha_n - kappa1 * kappa1).sqrt())
        };
        betas.push(beta);
    }
    Ok(ModeSet {
        period,
        alpha: scalars.alpha,
        kappa1,
        truncation,
        betas,
    })
}

/// Picks the number of retained orders for a mesh with `nx` cells per period.
///
/// The truncation grows until the slowest evanescent tail in the set decays
/// by [`TRUNCATION_TAIL_TARGET`] between the interface crest and the top
/// boundary (and is at least three wavenumbers into the evanescent regime),
/// is capped at `(nx - 4) / 4` so the trace grid oversamples the highest
/// retained order enough for coefficient extraction, and finally backs off
/// below any grazing order, which would otherwise poison the whole set.
pub fn default_truncation(config: &ProblemConfig, scalars: &DerivedScalars, nx: usize) -> usize {
    let period = config.profile.period;
    let (_, fmax) = config.profile.range();
    let gap = (config.h1 - fmax).max(0.0);
    let kappa1 = scalars.kappa1;
    let cap = nx.saturating_sub(4) / 4;

    let tail_resolved = |n: usize| -> bool {
        // The slower-decaying of the two edge orders +-n governs the tail.
        let worst = [n as i64, -(n as i64)]
            .into_iter()
            .map(|n| (scalars.alpha + 2.0 * std::f64::consts::PI * n as f64 / period).abs())
            .fold(f64::INFINITY, f64::min);
        if worst < 3.0 * kappa1 {
            return false;
        }
        let rate = (worst * worst - kappa1 * kappa1).max(0.0).sqrt();
        (-rate * gap).exp() <= TRUNCATION_TAIL_TARGET
    };

    let mut n_sel = cap;
    for n in 1..=cap {
        if tail_resolved(n) {
            n_sel = n;
            break;
        }
    }
    // Back off below the smallest grazing order.
    for n in 1..=n_sel {
        for signed in [n as i64, -(n as i64)] {
            let alpha_n = scalars.alpha + 2.0 * std::f64::consts::PI * signed as f64 / period;
            if (alpha_n.abs() - kappa1).abs() < GRAZING_ORDER_GUARD {
                return n - 1;
            }
        }
    }
    n_sel
}

/// Applies the transparent boundary operator to trace coefficients:
/// order `n` is multiplied by `i beta_n`.
pub fn apply_dtn(modes: &ModeSet, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    if coeffs.len() != modes.count() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} trace coefficients, got {}",
            modes.count(),
            coeffs.len()
        )));
    }
    Ok(modes
        .orders()
        .map(|n| Complex64::i() * modes.beta(n) * coeffs[modes.index_of(n)])
        .collect())
}

/// Boundary datum of the incident plane wave on the top edge:
/// `g(x1) = -2 i beta exp(i (alpha x1 - beta h1))`.
pub fn incident_datum(scalars: &DerivedScalars, h1: f64, x1: f64) -> Complex64 {
    Complex64::new(0.0, -2.0 * scalars.beta)
        * (Complex64::i() * (scalars.alpha * x1 - scalars.beta * h1)).exp()
}

/// Fourier coefficient of `g` in order 0 (the only nonzero one).
pub fn incident_datum_coefficient(scalars: &DerivedScalars, h1: f64) -> Complex64 {
    Complex64::new(0.0, -2.0 * scalars.beta) * (Complex64::i() * (-scalars.beta * h1)).exp()
}

/// Incident field value `exp(i (alpha x1 - beta x2))`.
pub fn incident_field(scalars: &DerivedScalars, x: [f64; 2]) -> Complex64 {
    (Complex64::i() * (scalars.alpha * x[0] - scalars.beta * x[1])).exp()
}

/// Trace samples -> order coefficients by the trapezoidal rule.
///
/// `values[j]` is the trace at `x1 = j * period / values.len()`; the sample
/// at the right edge is excluded (quasi-periodicity makes it redundant, and
/// on a periodic grid the trapezoidal rule degenerates to the plain mean).
/// Spectrally accurate for smooth traces; requires at least `4N + 4` samples
/// for `N` retained orders so the highest order is comfortably oversampled
/// rather than sitting at the alias limit.
pub fn rayleigh_coefficients(modes: &ModeSet, values: &[Complex64]) -> Result<Vec<Complex64>> {
    let nx = values.len();
    let required = 4 * modes.truncation + 4;
    if nx < required {
        return Err(Error::TruncationMismatch {
            modes: modes.truncation,
            required,
            nx,
        });
    }
    let mut coeffs = Vec::with_capacity(modes.count());
    for n in modes.orders() {
        let alpha_n = modes.alpha_n(n);
        let mut sum = Complex64::new(0.0, 0.0);
        for (j, &v) in values.iter().enumerate() {
            let x1 = modes.period * j as f64 / nx as f64;
            sum += v * (-Complex64::i() * alpha_n * x1).exp();
        }
        coeffs.push(sum / nx as f64);
    }
    Ok(coeffs)
}

/// Fraction of the incident energy carried by each propagating order.
///
/// `refl[k]` are the outgoing coefficients at the top edge and `beta` is the
/// incident vertical wavenumber; order `n` radiates `Re(beta_n)/beta |r_n|^2`.
pub fn efficiencies(modes: &ModeSet, refl: &[Complex64], beta: f64) -> Result<Vec<(i64, f64)>> {
    if refl.len() != modes.count() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} coefficients, got {}",
            modes.count(),
            refl.len()
        )));
    }
    Ok(modes
        .orders()
        .filter(|&n| modes.is_propagating(n))
        .map(|n| {
            let r = refl[modes.index_of(n)];
            (n, modes.beta(n).re / beta * r.norm_sqr())
        })
        .collect())
}

/// Writes the per-order table as CSV: wavenumbers, outgoing coefficients and
/// efficiencies (efficiency is empty for evanescent orders).
pub fn write_mode_table<W: Write>(
    out: &mut W,
    modes: &ModeSet,
    refl: &[Complex64],
    effs: &[(i64, f64)],
) -> io::Result<()> {
    writeln!(out, "n,alpha_n,beta_re,beta_im,coeff_re,coeff_im,efficiency")?;
    for n in modes.orders() {
        let beta = modes.beta(n);
        let r = refl[modes.index_of(n)];
        let eff = effs
            .iter()
            .find(|(m, _)| *m == n)
            .map(|(_, e)| e.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            n,
            modes.alpha_n(n),
            beta.re,
            beta.im,
            r.re,
            r.im,
            eff
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{GratingProfile, ProblemConfig};

    fn scalars(alpha: f64, kappa1: f64) -> DerivedScalars {
        DerivedScalars {
            kappa1,
            kappa2_squared: 2.0,
            alpha,
            beta: (kappa1 * kappa1 - alpha * alpha).sqrt(),
        }
    }

    #[test]
    fn half_period_cell_wavenumbers() {
        let modes = build_mode_set(&scalars(0.0, 1.0), std::f64::consts::PI, 1).unwrap();
        assert_eq!(modes.count(), 3);
        assert!((modes.alpha_n(1) - 2.0).abs() < 1e-14);
        assert!((modes.alpha_n(-1) + 2.0).abs() < 1e-14);
        assert_eq!(modes.beta(0), Complex64::new(1.0, 0.0));
        let b1 = modes.beta(1);
        assert!(b1.re == 0.0 && (b1.im - 3.0f64.sqrt()).abs() < 1e-14);
        assert_eq!(modes.beta(-1), b1);
        assert!(modes.is_propagating(0));
        assert!(!modes.is_propagating(1));
    }

    #[test]
    fn grazing_order_is_a_hard_error() {
        // Full 2 pi period at unit wavenumber: order 1 grazes exactly.
        let err = build_mode_set(&scalars(0.0, 1.0), 2.0 * std::f64::consts::PI, 1).unwrap_err();
        match err {
            Error::GrazingOrder { n, .. } => assert_eq!(n.abs(), 1),
            other => panic!("expected grazing order error, got {other}"),
        }
        // Truncating below the grazing order is fine.
        assert!(build_mode_set(&scalars(0.0, 1.0), 2.0 * std::f64::consts::PI, 0).is_ok());
    }

    #[test]
    fn normal_incidence_spectrum_is_symmetric() {
        let modes = build_mode_set(&scalars(0.0, 2.3), 1.7, 4).unwrap();
        for n in 1..=4i64 {
            assert_eq!(modes.beta(n), modes.beta(-n));
        }
    }

    #[test]
    fn incident_datum_at_half_wavelength_boundary() {
        // alpha = 0, beta = 1, h1 = pi: g = -2i exp(-i pi) = 2i everywhere.
        let s = scalars(0.0, 1.0);
        for &x1 in &[0.0, 0.7, 3.1] {
            let g = incident_datum(&s, std::f64::consts::PI, x1);
            assert!((g - Complex64::new(0.0, 2.0)).norm() < 1e-14);
        }
        assert!((incident_datum_coefficient(&s, std::f64::consts::PI) - Complex64::new(0.0, 2.0))
            .norm()
            < 1e-14);
    }

    #[test]
    fn operator_damps_evanescent_and_rotates_propagating_orders() {
        let modes = build_mode_set(&scalars(0.0, 1.0), std::f64::consts::PI, 2).unwrap();
        let coeffs = vec![Complex64::new(1.0, 0.0); modes.count()];
        let out = apply_dtn(&modes, &coeffs).unwrap();
        // Order 0 propagates: i * beta_0 is purely imaginary.
        assert!((out[modes.index_of(0)] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        // Evanescent orders: i * (i s) = -s is negative real (damping).
        for n in [-2i64, -1, 1, 2] {
            let v = out[modes.index_of(n)];
            assert!(v.im.abs() < 1e-14 && v.re < 0.0);
        }
    }

    #[test]
    fn operator_is_linear() {
        let modes = build_mode_set(&scalars(0.3, 1.4), 2.0, 3).unwrap();
        let a: Vec<Complex64> = (0..modes.count())
            .map(|k| Complex64::new(k as f64, -(k as f64) * 0.5))
            .collect();
        let b: Vec<Complex64> = (0..modes.count())
            .map(|k| Complex64::new(1.0 / (k + 1) as f64, 0.2))
            .collect();
        let lam = Complex64::new(0.7, -1.3);
        let combo: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + lam * y).collect();
        let lhs = apply_dtn(&modes, &combo).unwrap();
        let ta = apply_dtn(&modes, &a).unwrap();
        let tb = apply_dtn(&modes, &b).unwrap();
        for k in 0..modes.count() {
            assert!((lhs[k] - (ta[k] + lam * tb[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn trace_quadrature_recovers_bandlimited_coefficients_exactly() {
        let modes = build_mode_set(&scalars(0.4, 1.2), 2.0, 3).unwrap();
        let truth: Vec<Complex64> = (0..modes.count())
            .map(|k| Complex64::new(0.3 * k as f64 - 1.0, 0.1 * k as f64))
            .collect();
        let nx = 16;
        let values: Vec<Complex64> = (0..nx)
            .map(|j| {
                let x1 = modes.period * j as f64 / nx as f64;
                modes
                    .orders()
                    .map(|n| truth[modes.index_of(n)] * (Complex64::i() * modes.alpha_n(n) * x1).exp())
                    .sum()
            })
            .collect();
        let rec = rayleigh_coefficients(&modes, &values).unwrap();
        for k in 0..modes.count() {
            assert!((rec[k] - truth[k]).norm() < 1e-12, "order slot {k}");
        }
    }

    #[test]
    fn trace_quadrature_satisfies_parseval_for_bandlimited_traces() {
        let modes = build_mode_set(&scalars(0.0, 1.2), 2.0, 2).unwrap();
        let truth: Vec<Complex64> = (0..modes.count())
            .map(|k| Complex64::new((k as f64).sin(), (k as f64).cos()))
            .collect();
        let nx = 12;
        let values: Vec<Complex64> = (0..nx)
            .map(|j| {
                let x1 = modes.period * j as f64 / nx as f64;
                modes
                    .orders()
                    .map(|n| truth[modes.index_of(n)] * (Complex64::i() * modes.alpha_n(n) * x1).exp())
                    .sum()
            })
            .collect();
        let rec = rayleigh_coefficients(&modes, &values).unwrap();
        let grid_l2: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * modes.period / nx as f64;
        let spec_l2: f64 = rec.iter().map(|c| c.norm_sqr()).sum::<f64>() * modes.period;
        assert!((grid_l2 - spec_l2).abs() < 1e-10 * grid_l2);
    }

    #[test]
    fn undersampled_trace_is_rejected() {
        let modes = build_mode_set(&scalars(0.0, 1.2), 2.0, 3).unwrap();
        let values = vec![Complex64::new(1.0, 0.0); 6]; // needs >= 7
        assert!(matches!(
            rayleigh_coefficients(&modes, &values),
            Err(Error::TruncationMismatch { .. })
        ));
    }

    #[test]
    fn truncation_tail_shrinks_with_growing_overlap() {
        // Smooth trace: coefficients decay exponentially. The operator output
        // beyond the shared truncation shrinks as the overlap grows.
        let s = scalars(0.0, 1.0);
        let period = std::f64::consts::PI;
        let coeff = |n: i64| Complex64::new((-(n.abs() as f64)).exp(), 0.0);
        let tail_norm = |n_small: usize, n_big: usize| -> f64 {
            let big = build_mode_set(&s, period, n_big).unwrap();
            // Difference of the two truncated operator outputs has only the
            // orders between the truncations.
            let mut sum = 0.0;
            for n in big.orders() {
                if n.unsigned_abs() as usize > n_small {
                    let alpha_n = big.alpha_n(n);
                    let term = (Complex64::i() * big.beta(n) * coeff(n)).norm_sqr();
                    sum += term / (1.0 + alpha_n * alpha_n).sqrt();
                }
            }
            (period * sum).sqrt()
        };
        let t1 = tail_norm(1, 8);
        let t3 = tail_norm(3, 8);
        let t5 = tail_norm(5, 8);
        assert!(t1 > t3 && t3 > t5, "{t1} {t3} {t5}");
    }

    #[test]
    fn efficiencies_weight_by_vertical_flux() {
        let modes = build_mode_set(&scalars(0.0, 2.5), std::f64::consts::PI, 1).unwrap();
        // Orders -1, 0, 1 all propagate (alpha = 0, +-2 with kappa1 = 2.5).
        let mut refl = vec![Complex64::new(0.0, 0.0); modes.count()];
        refl[modes.index_of(0)] = Complex64::new(0.6, 0.0);
        refl[modes.index_of(1)] = Complex64::new(0.0, 0.5);
        let beta = 2.5;
        let effs = efficiencies(&modes, &refl, beta).unwrap();
        assert_eq!(effs.len(), 3);
        let e0 = effs.iter().find(|(n, _)| *n == 0).unwrap().1;
        let e1 = effs.iter().find(|(n, _)| *n == 1).unwrap().1;
        assert!((e0 - 0.36).abs() < 1e-14);
        let beta1 = (2.5f64 * 2.5 - 4.0).sqrt();
        assert!((e1 - beta1 / 2.5 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn default_truncation_caps_and_dodges_grazing_orders() {
        // Reference cell: period 2 pi at kappa1 = 1 grazes at order 1, so the
        // automatic choice must fall back to the single central order.
        let config = ProblemConfig {
            profile: GratingProfile {
                period: 2.0 * std::f64::consts::PI,
                mean: 1.0,
                cosine: vec![0.2],
                sine: vec![],
            },
            h1: 2.0,
            eps1: 1.0,
            mu1: 1.0,
            eps2: -2.0,
            mu2: -1.0,
            omega: 1.0,
            theta: 0.0,
            sigma: 0.0,
        };
        let s = config.derive_scalars().unwrap();
        assert_eq!(default_truncation(&config, &s, 48), 0);

        // A half-size period has no grazing order; the tail rule applies and
        // the trace-sampling cap binds on coarse grids.
        let mut c2 = config.clone();
        c2.profile.period = std::f64::consts::PI;
        c2.profile.cosine = vec![0.1];
        let s2 = c2.derive_scalars().unwrap();
        let n_fine = default_truncation(&c2, &s2, 1024);
        assert!(n_fine >= 2, "tail rule picked {n_fine}");
        let modes = build_mode_set(&s2, c2.profile.period, n_fine).unwrap();
        let a = modes.alpha_n(n_fine as i64).abs();
        assert!(a >= 3.0 * s2.kappa1);
        let n_coarse = default_truncation(&c2, &s2, 8);
        assert!(n_coarse <= 3, "alias cap ignored: {n_coarse}");
    }

    #[test]
    fn mode_table_csv_has_header_and_rows() {
        let modes = build_mode_set(&scalars(0.0, 1.0), std::f64::consts::PI, 1).unwrap();
        let refl = vec![Complex64::new(0.5, -0.5); modes.count()];
        let effs = efficiencies(&modes, &refl, 1.0).unwrap();
        let mut buf = Vec::new();
        write_mode_table(&mut buf, &modes, &refl, &effs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + modes.count());
        assert!(lines[0].starts_with("n,alpha_n"));
        assert!(!text.contains('\r'));
    }
}
