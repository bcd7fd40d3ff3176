//! Diagnostics behind the solvability guarantees: fractional trace norms,
//! the harmonic extension into the filling with the contrast condition built
//! on it, and the boundary-symbol independence check at the interface.
//!
//! The contrast condition compares the gradient energy of the harmonically
//! extended interface trace against the weighted upper-region energy of the
//! field; its value gates nothing — solves stand on their own — but the
//! report records whether the sufficient condition held.  The symbol check
//! forms the boundary matrix of the flattened transmission system at a
//! sampled interface point, reduces it modulo the decaying-root factor, and
//! reports the smallest singular value of the remainder as the independence
//! margin; a zero margin pinpoints a degenerate contrast.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::assembly::Discretization;
use crate::dtn::ModeSet;
use crate::error::{Error, Result};
use crate::limits::RCOND_FLOOR;
use crate::linalg::{dense_solve, BandMatrix};
use crate::mesh::Mesh;
use crate::problem::{ProblemConfig, Region};
use crate::solver::{map_indexed, ComplexField};

/// Discrete fractional trace norm over retained orders:
/// `value^2 = period * sum_n (1 + alpha_n^2)^s |u_n|^2`.
///
/// Only the two orders the transmission analysis uses are supported:
/// `s = 1/2` (traces) and `s = -1/2` (data and conormal derivatives).
pub fn trace_norm(modes: &ModeSet, coeffs: &[Complex64], s: f64) -> Result<f64> {
    if s != 0.5 && s != -0.5 {
        return Err(Error::UnsupportedSobolevOrder(s));
    }
    if coeffs.len() != modes.count() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} trace coefficients, got {}",
            modes.count(),
            coeffs.len()
        )));
    }
    let mut sum = 0.0;
    for n in modes.orders() {
        let alpha_n = modes.alpha_n(n);
        let weight = (1.0 + alpha_n * alpha_n).powf(s);
        sum += weight * coeffs[modes.index_of(n)].norm_sqr();
    }
    Ok((modes.period * sum).sqrt())
}

/// Harmonic extension of an interface trace into the filling strip.
///
/// Folded nodal values on rows `0 ..= ny2`, bottom row first, `nx` values
/// per row; the top row holds the given trace verbatim.
#[derive(Debug, Clone)]
pub struct Extension {
    nx: usize,
    ny2: usize,
    phase: Complex64,
    values: Vec<Complex64>,
}

impl Extension {
    /// Value at lower-grid node (`ix`, `iy`), `iy = 0` on the mirror plane;
    /// the right column is reconstructed through the cell phase.
    pub fn node_value(&self, ix: usize, iy: usize) -> Complex64 {
        assert!(ix <= self.nx && iy <= self.ny2);
        if ix == self.nx {
            self.phase * self.values[iy * self.nx]
        } else {
            self.values[iy * self.nx + ix]
        }
    }

    /// Folded values, row-major from the mirror plane to the interface.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Exact element integrals of `|grad|^2` and `|.|^2` over the filling.
    pub fn energies(&self, mesh: &Mesh) -> (f64, f64) {
        assert_eq!(mesh.nx, self.nx);
        assert_eq!(mesh.ny2, self.ny2);
        let mut grad_sq = 0.0;
        let mut l2_sq = 0.0;
        for tri in &mesh.triangles {
            if tri.region != Region::Lower {
                continue;
            }
            let xs: Vec<[f64; 2]> = tri.vertices.iter().map(|&v| mesh.nodes[v]).collect();
            let vals: Vec<Complex64> = tri
                .vertices
                .iter()
                .map(|&v| {
                    let ix = v % (mesh.nx + 1);
                    let iy = v / (mesh.nx + 1);
                    self.node_value(ix, iy)
                })
                .collect();
            let b = [
                xs[1][1] - xs[2][1],
                xs[2][1] - xs[0][1],
                xs[0][1] - xs[1][1],
            ];
            let c = [
                xs[2][0] - xs[1][0],
                xs[0][0] - xs[2][0],
                xs[1][0] - xs[0][0],
            ];
            let area2 = b[0] * c[1] - b[1] * c[0];
            let area = 0.5 * area2;
            let gx = (vals[0] * b[0] + vals[1] * b[1] + vals[2] * b[2]) / area2;
            let gy = (vals[0] * c[0] + vals[1] * c[1] + vals[2] * c[2]) / area2;
            grad_sq += area * (gx.norm_sqr() + gy.norm_sqr());
            let s: Complex64 = vals.iter().sum();
            let q: f64 = vals.iter().map(|v| v.norm_sqr()).sum();
            l2_sq += area / 12.0 * (s.norm_sqr() + q);
        }
        (grad_sq, l2_sq)
    }

    /// `integral of |grad|^2` over the filling strip.
    pub fn gradient_energy(&self, mesh: &Mesh) -> f64 {
        self.energies(mesh).0
    }
}

/// P1 stiffness entries of one triangle, `1/(2 area) (b_a b_b + c_a c_b)`.
fn triangle_stiffness(xs: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let b = [
        xs[1][1] - xs[2][1],
        xs[2][1] - xs[0][1],
        xs[0][1] - xs[1][1],
    ];
    let c = [
        xs[2][0] - xs[1][0],
        xs[0][0] - xs[2][0],
        xs[1][0] - xs[0][0],
    ];
    let area2 = b[0] * c[1] - b[1] * c[0];
    let gscale = 0.5 / area2;
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for bb in 0..3 {
            k[a][bb] = gscale * (b[a] * b[bb] + c[a] * c[bb]);
        }
    }
    k
}

/// Extends an interface trace harmonically into the filling strip.
///
/// Solves the Laplace equation below the interface with the trace as
/// Dirichlet data, the natural (mirror) condition on the bottom plane, and
/// the cell phase `e^{i alpha period}` folding the side walls.  The trace is
/// given on the folded interface unknowns (`nx` values at `x_j = j
/// period/nx`); its nodal values are reproduced exactly.
pub fn extension_r(mesh: &Mesh, alpha: f64, trace: &[Complex64]) -> Result<Extension> {
    if trace.len() != mesh.nx {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} values, interface row has {} unknowns",
            trace.len(),
            mesh.nx
        )));
    }
    let nx = mesh.nx;
    let ny2 = mesh.ny2;
    let phase = (Complex64::i() * alpha * mesh.profile.period).exp();
    let n = nx * ny2;
    let half_band = 2 * nx - 1;
    let mut matrix = BandMatrix::zeros(n, half_band, half_band);
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];

    // Fold a grid node onto (unknown-or-data index, phase weight).
    let fold = |ix: usize, iy: usize| -> (usize, usize, Complex64) {
        if ix == nx {
            (0, iy, phase)
        } else {
            (ix, iy, Complex64::new(1.0, 0.0))
        }
    };
    for tri in &mesh.triangles {
        if tri.region != Region::Lower {
            continue;
        }
        let xs = [
            mesh.nodes[tri.vertices[0]],
            mesh.nodes[tri.vertices[1]],
            mesh.nodes[tri.vertices[2]],
        ];
        let k = triangle_stiffness(&xs);
        let local: Vec<(usize, usize, Complex64)> = tri
            .vertices
            .iter()
            .map(|&v| fold(v % (nx + 1), v / (nx + 1)))
            .collect();
        for a in 0..3 {
            let (ixa, iya, wa) = local[a];
            if iya == ny2 {
                continue;
            }
            let row = iya * nx + ixa;
            for bb in 0..3 {
                let (ixb, iyb, wb) = local[bb];
                let weight = wa.conj() * wb * k[a][bb];
                if iyb == ny2 {
                    rhs[row] -= weight * trace[ixb];
                } else {
                    matrix.add(row, iyb * nx + ixb, weight);
                }
            }
        }
    }

    let lu = matrix.factorize()?;
    let rcond = lu.rcond_estimate();
    if rcond < RCOND_FLOOR {
        return Err(Error::SingularSystem { rcond });
    }
    let mut values = rhs;
    lu.solve(&mut values)?;
    values.extend_from_slice(trace);
    Ok(Extension {
        nx,
        ny2,
        phase,
        values,
    })
}

/// Contrast-condition report for one solved field.
///
/// All fields after `upper_energy` are `None` when the upper-region gradient
/// energy vanishes (the quotient is undefined for such degenerate fields).
#[derive(Debug, Clone)]
pub struct CoercivityReport {
    /// `integral of eps1^-1 |grad u|^2` over the dielectric.
    pub upper_energy: f64,
    /// `integral of |grad R(u|_S)|^2` over the filling.
    pub extension_energy: f64,
    /// Energy quotient `extension_energy / upper_energy`.
    pub k: Option<f64>,
    /// `(|eps2| + sigma/omega) / (eps2^2 + (sigma/omega)^2) * k`.
    pub condition_value: Option<f64>,
    /// Whether `condition_value < 1`.
    pub condition_met: Option<bool>,
    /// Balancing parameter `sqrt(condition_value)`, clipped into `(0, 1)`.
    pub eps_parameter: Option<f64>,
    /// The two bracketed coercivity factors at `eps_parameter`: the
    /// dielectric factor `1 - condition_value/eps` and the filling factor
    /// `1 - eps`; both positive iff the condition holds with room.
    pub lower_bound_terms: Option<(f64, f64)>,
}

impl CoercivityReport {
    pub fn is_defined(&self) -> bool {
        self.k.is_some()
    }
}

/// Evaluates the contrast condition for a solved field.
///
/// The interface trace of `field` is extended harmonically into the filling
/// and its gradient energy is compared against the weighted upper-region
/// energy of the field itself.  Reported, never used to gate a solve.
pub fn coercivity_check(disc: &Discretization, field: &ComplexField) -> Result<CoercivityReport> {
    let config = disc.config;
    let energies = disc.field_energies(field.coefficients());
    let upper_energy = energies.grad_sq_upper / config.eps1;
    let extension = extension_r(disc.mesh, disc.scalars.alpha, field.trace_interface())?;
    let extension_energy = extension.gradient_energy(disc.mesh);
    if upper_energy <= 0.0 {
        return Ok(CoercivityReport {
            upper_energy,
            extension_energy,
            k: None,
            condition_value: None,
            condition_met: None,
            eps_parameter: None,
            lower_bound_terms: None,
        });
    }
    let k = extension_energy / upper_energy;
    let ratio = sigma_contrast_weight(config);
    let condition_value = ratio * k;
    let eps_parameter = condition_value.sqrt().clamp(1e-12, 1.0 - 1e-12);
    Ok(CoercivityReport {
        upper_energy,
        extension_energy,
        k: Some(k),
        condition_value: Some(condition_value),
        condition_met: Some(condition_value < 1.0),
        eps_parameter: Some(eps_parameter),
        lower_bound_terms: Some((
            1.0 - condition_value / eps_parameter,
            1.0 - eps_parameter,
        )),
    })
}

/// `(|eps2| + sigma/omega) / (eps2^2 + (sigma/omega)^2)`; at zero absorption
/// this is `1/|eps2|`.
fn sigma_contrast_weight(config: &ProblemConfig) -> f64 {
    let s = config.sigma / config.omega;
    (config.eps2.abs() + s) / (config.eps2 * config.eps2 + s * s)
}

/// Dense interface energy matrix of the harmonic extension into `region`:
/// `S[k][j] = a(E e_j, E e_k)` over the folded interface unknowns, where `E`
/// extends a trace harmonically into the region (natural conditions on the
/// far boundary).  Hermitian positive semi-definite.
fn interface_energy_matrix(mesh: &Mesh, alpha: f64, region: Region) -> Result<Vec<Complex64>> {
    let nx = mesh.nx;
    let phase = (Complex64::i() * alpha * mesh.profile.period).exp();
    let interface_row = mesh.ny2;
    let (row_lo, row_hi) = match region {
        Region::Lower => (0usize, mesh.ny2),
        Region::Upper => (mesh.ny2 + 1, mesh.ny2 + mesh.ny1 + 1),
    };
    let rows = row_hi - row_lo;
    let n = nx * rows;
    let unknown = |ix: usize, iy: usize| -> Option<usize> {
        (iy != interface_row).then(|| (iy - row_lo) * nx + ix)
    };
    let fold = |ix: usize, iy: usize| -> (usize, usize, Complex64) {
        if ix == nx {
            (0, iy, phase)
        } else {
            (ix, iy, Complex64::new(1.0, 0.0))
        }
    };

    let half_band = 2 * nx - 1;
    let mut matrix = BandMatrix::zeros(n, half_band, half_band);
    let mut dirichlet_rhs = vec![vec![Complex64::new(0.0, 0.0); n]; nx];
    for tri in &mesh.triangles {
        if tri.region != region {
            continue;
        }
        let xs = [
            mesh.nodes[tri.vertices[0]],
            mesh.nodes[tri.vertices[1]],
            mesh.nodes[tri.vertices[2]],
        ];
        let k = triangle_stiffness(&xs);
        let local: Vec<(usize, usize, Complex64)> = tri
            .vertices
            .iter()
            .map(|&v| fold(v % (nx + 1), v / (nx + 1)))
            .collect();
        for a in 0..3 {
            let (ixa, iya, wa) = local[a];
            let Some(row) = unknown(ixa, iya) else { continue };
            for bb in 0..3 {
                let (ixb, iyb, wb) = local[bb];
                let weight = wa.conj() * wb * k[a][bb];
                match unknown(ixb, iyb) {
                    Some(col) => matrix.add(row, col, weight),
                    None => dirichlet_rhs[ixb][row] -= weight,
                }
            }
        }
    }
    let lu = matrix.factorize()?;

    // Extend each unit trace, then read the interface-row residual of the
    // full stiffness: for a harmonic extension the interior rows vanish, so
    // the energy pairing collapses onto the interface entries.
    let mut s = vec![Complex64::new(0.0, 0.0); nx * nx];
    for j in 0..nx {
        let mut interior = dirichlet_rhs[j].clone();
        lu.solve(&mut interior)?;
        let value_at = |ix: usize, iy: usize| -> Complex64 {
            if iy == interface_row {
                if ix == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                interior[(iy - row_lo) * nx + ix]
            }
        };
        let mut interface_residual = vec![Complex64::new(0.0, 0.0); nx];
        for tri in &mesh.triangles {
            if tri.region != region {
                continue;
            }
            let xs = [
                mesh.nodes[tri.vertices[0]],
                mesh.nodes[tri.vertices[1]],
                mesh.nodes[tri.vertices[2]],
            ];
            let k = triangle_stiffness(&xs);
            let local: Vec<(usize, usize, Complex64)> = tri
                .vertices
                .iter()
                .map(|&v| fold(v % (nx + 1), v / (nx + 1)))
                .collect();
            for a in 0..3 {
                let (ixa, iya, wa) = local[a];
                if iya != interface_row {
                    continue;
                }
                for bb in 0..3 {
                    let (ixb, iyb, wb) = local[bb];
                    interface_residual[ixa] +=
                        wa.conj() * wb * k[a][bb] * value_at(ixb, iyb);
                }
            }
        }
        for kk in 0..nx {
            s[kk * nx + j] = interface_residual[kk];
        }
    }
    Ok(s)
}

fn matvec(n: usize, a: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}

fn hermitian_quadratic(n: usize, a: &[Complex64], x: &[Complex64]) -> f64 {
    matvec(n, a, x)
        .iter()
        .zip(x)
        .map(|(yi, xi)| (xi.conj() * yi).re)
        .sum()
}

/// Worst-case energy quotient over all discrete interface traces.
///
/// Maximizes `|grad R psi|^2_lower / (eps1^-1 |grad E psi|^2_upper)` where
/// both extensions are harmonic (the denominator uses the energy-minimizing
/// upper extension, the most favorable competitor).  Solved as a generalized
/// eigenvalue problem on the two interface energy matrices by power
/// iteration to relative tolerance `1e-8`.  When the cell phase is trivial
/// both matrices annihilate constants, so the iteration is deflated onto the
/// zero-mean complement.
pub fn worst_case_k(disc: &Discretization) -> Result<f64> {
    let mesh = disc.mesh;
    let alpha = disc.scalars.alpha;
    let nx = mesh.nx;
    let s_lower = interface_energy_matrix(mesh, alpha, Region::Lower)?;
    let s_upper = interface_energy_matrix(mesh, alpha, Region::Upper)?;
    let phase = (Complex64::i() * alpha * mesh.profile.period).exp();
    let deflate = (phase - Complex64::new(1.0, 0.0)).norm() < 1e-12;

    let project = |v: &mut Vec<Complex64>| {
        if deflate {
            let mean = v.iter().sum::<Complex64>() / nx as f64;
            for z in v.iter_mut() {
                *z -= mean;
            }
        }
    };
    // Rank-one shift keeps the denominator matrix invertible on constants
    // without touching the zero-mean complement.
    let shift = (0..nx).map(|i| s_upper[i * nx + i].norm()).sum::<f64>() / nx as f64;
    let solve_upper = |rhs: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut a = s_upper.clone();
        if deflate {
            for z in a.iter_mut() {
                *z += shift / nx as f64;
            }
        }
        let mut x = rhs.to_vec();
        dense_solve(nx, &mut a, &mut x)?;
        Ok(x)
    };

    let mut psi: Vec<Complex64> = (0..nx)
        .map(|j| Complex64::new(1.0 + j as f64 / nx as f64, 0.3 * (j as f64).sin()))
        .collect();
    project(&mut psi);
    let scale = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in psi.iter_mut() {
        *z /= scale;
    }

    let mut lambda = 0.0;
    for _ in 0..1000 {
        let num = hermitian_quadratic(nx, &s_lower, &psi);
        let den = hermitian_quadratic(nx, &s_upper, &psi);
        let candidate = if den > 0.0 { num / den } else { 0.0 };
        let z = matvec(nx, &s_lower, &psi);
        let mut next = solve_upper(&z)?;
        project(&mut next);
        let scale = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if scale == 0.0 {
            return Ok(0.0);
        }
        for z in next.iter_mut() {
            *z /= scale;
        }
        psi = next;
        if (candidate - lambda).abs() <= 1e-8 * candidate.abs().max(1.0) {
            lambda = candidate;
            break;
        }
        lambda = candidate;
    }
    Ok(disc.config.eps1 * lambda)
}

/// One interface sample of the boundary-symbol independence check.
#[derive(Debug, Clone)]
pub struct AdnSample {
    pub x1: f64,
    /// Interface height and slope at `x1`.
    pub f: f64,
    pub fp: f64,
    /// Tangential frequency of the symbol (nonzero).
    pub xi1: f64,
    pub sigma: f64,
    /// Decaying/growing symbol roots of the upper quadratic.
    pub tau1_plus: Complex64,
    pub tau1_minus: Complex64,
    /// Decaying/growing symbol roots of the reflected lower quadratic.
    pub tau2_plus: Complex64,
    pub tau2_minus: Complex64,
    /// Smallest singular value of the stacked remainder coefficients; zero
    /// means the boundary rows degenerate at this sample.
    pub independence_margin: f64,
    /// Largest normalized value of the characteristic quartic at its own
    /// four roots — a factorization self-check, not a property of the data.
    pub delta_residual: f64,
}

/// Complex polynomial in ascending powers; degree = len - 1.
type Poly = Vec<Complex64>;

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Poly {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_eval(a: &[Complex64], tau: Complex64) -> Complex64 {
    a.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * tau + c)
}

/// Remainder of `a` after division by the monic quadratic `m`.
fn poly_rem_quadratic(a: &[Complex64], m: &[Complex64; 3]) -> [Complex64; 2] {
    debug_assert_eq!(m[2], Complex64::new(1.0, 0.0));
    let mut r: Poly = a.to_vec();
    while r.len() > 2 {
        let d = r.len() - 1;
        let lead = r[d];
        r[d - 1] -= lead * m[1];
        r[d - 2] -= lead * m[0];
        r.pop();
    }
    [
        r.first().copied().unwrap_or_default(),
        r.get(1).copied().unwrap_or_default(),
    ]
}

/// Smallest singular value of a 2 x 4 complex matrix via the closed-form
/// eigenvalues of its 2 x 2 Gram matrix.
fn smallest_singular_value(rows: &[[Complex64; 4]; 2]) -> f64 {
    let g11: f64 = rows[0].iter().map(|z| z.norm_sqr()).sum();
    let g22: f64 = rows[1].iter().map(|z| z.norm_sqr()).sum();
    let g12: Complex64 = rows[0]
        .iter()
        .zip(rows[1].iter())
        .map(|(a, b)| a * b.conj())
        .sum();
    let trace = g11 + g22;
    let det = g11 * g22 - g12.norm_sqr();
    let disc = (trace * trace - 4.0 * det).max(0.0).sqrt();
    let lambda_min = (0.5 * (trace - disc)).max(0.0);
    lambda_min.sqrt()
}

/// Checks row independence of the flattened boundary symbol at one
/// interface sample.
///
/// The two symbol quadratics (upper and reflected-lower metric contractions)
/// factor over conjugate root pairs; the boundary matrix is multiplied by
/// the adjugate of the interior symbol, each entry reduced modulo the
/// decaying factor `M+ = (tau - tau1+)(tau - tau2+)`, and the smallest
/// singular value of the stacked degree-1 remainders is the margin.  The
/// `sigma` argument overrides the configuration's absorption so sweeps can
/// probe the vanishing-absorption limit.
pub fn adn_check(config: &ProblemConfig, x1: f64, xi1: f64, sigma: f64) -> Result<AdnSample> {
    if xi1 == 0.0 || !xi1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "symbol check needs a nonzero finite tangential frequency, got {xi1}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "absorption must be nonnegative, got {sigma}"
        )));
    }
    let period = config.profile.period;
    let f = config.profile.evaluate(x1);
    let fp = config.profile.derivative(x1);
    if f <= 0.0 || config.h1 - f <= 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "interface height {f} at x1 = {x1} leaves no strip below h1 = {}",
            config.h1
        )));
    }

    let denom = period * (fp * fp + 1.0);
    let root_pair = |scale: f64, re_sign: f64| -> (Complex64, Complex64) {
        let re = re_sign * 2.0 * fp * xi1 * scale / denom;
        let im = 2.0 * xi1 * scale / denom;
        let plus = Complex64::new(re, im.abs());
        (plus, plus.conj())
    };
    let (tau1_plus, tau1_minus) = root_pair(config.h1 - f, 1.0);
    let (tau2_plus, tau2_minus) = root_pair(f, -1.0);

    let j_up = 0.5 * period * (config.h1 - f);
    let j_lo = 0.5 * period * f;
    // Upper metric at the flattened interface and the reflected lower
    // metric: shared horizontal entry, opposite shear signs.
    let p11 = 4.0 / (period * period);
    let p12 = -2.0 * fp / (period * (config.h1 - f));
    let p22 = (fp * fp + 1.0) / ((config.h1 - f) * (config.h1 - f));
    let ph11 = p11;
    let ph12 = 2.0 * fp / (period * f);
    let ph22 = (fp * fp + 1.0) / (f * f);

    let real = |x: f64| Complex64::new(x, 0.0);
    let inv_eps1 = 1.0 / config.eps1;
    // Interior symbol diagonal: q_up = eps1^-1 J+ (psi+ xi.xi), q_lo = J- (psi_hat xi.xi).
    let q_up: Poly = vec![
        real(inv_eps1 * j_up * p11 * xi1 * xi1),
        real(inv_eps1 * j_up * 2.0 * p12 * xi1),
        real(inv_eps1 * j_up * p22),
    ];
    let q_lo: Poly = vec![
        real(j_lo * ph11 * xi1 * xi1),
        real(j_lo * 2.0 * ph12 * xi1),
        real(j_lo * ph22),
    ];
    // Boundary rows: trace matching and conormal matching.
    let eps_damped = Complex64::new(config.eps2, sigma / config.omega);
    let b11: Poly = vec![real(1.0)];
    let b12: Poly = vec![-eps_damped];
    let b21: Poly = vec![
        real(inv_eps1 * j_up * p12 * xi1),
        real(inv_eps1 * j_up * p22),
    ];
    let b22: Poly = vec![real(j_lo * ph12 * xi1), real(j_lo * ph22)];

    // D = B adj(L): adjugate of diag(q_up, q_lo) swaps the diagonal.
    let d = [
        [poly_mul(&b11, &q_lo), poly_mul(&b12, &q_up)],
        [poly_mul(&b21, &q_lo), poly_mul(&b22, &q_up)],
    ];
    let m_plus: [Complex64; 3] = [
        tau1_plus * tau2_plus,
        -(tau1_plus + tau2_plus),
        Complex64::new(1.0, 0.0),
    ];
    let mut rows = [[Complex64::new(0.0, 0.0); 4]; 2];
    for i in 0..2 {
        for k in 0..2 {
            let rem = poly_rem_quadratic(&d[i][k], &m_plus);
            rows[i][2 * k] = rem[0];
            rows[i][2 * k + 1] = rem[1];
        }
    }
    let independence_margin = smallest_singular_value(&rows);

    // Self-check: the characteristic quartic vanishes at its four roots.
    let delta = poly_mul(&q_up, &q_lo);
    let delta_residual = [tau1_plus, tau1_minus, tau2_plus, tau2_minus]
        .into_iter()
        .map(|tau| {
            let value = poly_eval(&delta, tau).norm();
            let scale: f64 = delta
                .iter()
                .enumerate()
                .map(|(i, c)| c.norm() * tau.norm().powi(i as i32))
                .sum();
            value / scale.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);

    Ok(AdnSample {
        x1,
        f,
        fp,
        xi1,
        sigma,
        tau1_plus,
        tau1_minus,
        tau2_plus,
        tau2_minus,
        independence_margin,
        delta_residual,
    })
}

/// Grid for [`adn_sweep`]: equispaced interface samples crossed with
/// explicit frequency and absorption lists.
#[derive(Debug, Clone)]
pub struct AdnGrid {
    /// Number of equispaced `x1` samples over one period.
    pub x1_samples: usize,
    pub xi1_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
}

impl AdnGrid {
    pub fn row_count(&self) -> usize {
        self.x1_samples * self.xi1_values.len() * self.sigma_values.len()
    }
}

/// Evaluates the symbol check over a sample grid.
///
/// Rows are ordered absorption-major, then frequency, then `x1`, so tables
/// are reproducible; grid points are checked concurrently.
pub fn adn_sweep(config: &ProblemConfig, grid: &AdnGrid) -> Result<Vec<AdnSample>> {
    if grid.x1_samples == 0 || grid.xi1_values.is_empty() || grid.sigma_values.is_empty() {
        return Err(Error::InvalidParameter(
            "symbol sweep needs at least one sample in every grid direction".into(),
        ));
    }
    let period = config.profile.period;
    let mut points = Vec::with_capacity(grid.row_count());
    for &sigma in &grid.sigma_values {
        for &xi1 in &grid.xi1_values {
            for j in 0..grid.x1_samples {
                let x1 = period * j as f64 / grid.x1_samples as f64;
                points.push((x1, xi1, sigma));
            }
        }
    }
    map_indexed(points.len(), |k| {
        let (x1, xi1, sigma) = points[k];
        adn_check(config, x1, xi1, sigma)
    })
    .into_iter()
    .collect()
}

/// Writes the symbol-check table as CSV, one row per sample.
pub fn write_adn_table<W: Write>(out: &mut W, samples: &[AdnSample]) -> io::Result<()> {
    writeln!(
        out,
        "sigma,xi1,x1,f,fp,tau1_plus_re,tau1_plus_im,tau2_plus_re,tau2_plus_im,margin,delta_residual"
    )?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.sigma,
            s.xi1,
            s.x1,
            s.f,
            s.fp,
            s.tau1_plus.re,
            s.tau1_plus.im,
            s.tau2_plus.re,
            s.tau2_plus.im,
            s.independence_margin,
            s.delta_residual
        )?;
    }
    Ok(())
}

/// Writes contrast-condition reports as CSV, one row per absorption.
pub fn write_coercivity_table<W: Write>(
    out: &mut W,
    rows: &[(f64, CoercivityReport)],
) -> io::Result<()> {
    writeln!(
        out,
        "sigma,upper_energy,extension_energy,k,condition_value,condition_met,eps_parameter,\
         term_dielectric,term_filling"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (sigma, r) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            sigma,
            r.upper_energy,
            r.extension_energy,
            opt(r.k),
            opt(r.condition_value),
            r.condition_met.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.eps_parameter),
            opt(r.lower_bound_terms.map(|t| t.0)),
            opt(r.lower_bound_terms.map(|t| t.1))
        )?;
    }
    Ok(())
}
