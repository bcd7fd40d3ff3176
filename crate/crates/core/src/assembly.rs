//! Assembly of the discrete variational system on the folded periodic cell.
//!
//! Unknowns are the grid nodes with the right cell wall folded onto the left:
//! the coefficient on a right-wall node is the left partner's times the cell
//! phase `exp(i alpha period)`, and test functions are folded with the same
//! weights (conjugated, as the form conjugates its test slot). The assembled
//! matrix is complex symmetric at normal incidence; at oblique incidence the
//! wrap-around couplings pick up the fold phase on one side.
//!
//! Element integrals use exact piecewise-linear stiffness and a one-point
//! centroid mass rule. The transparent-boundary block and the incident load
//! use the same trapezoidal trace quadrature as the order extraction, which
//! makes the discrete energy balance an algebraic identity of the assembled
//! system rather than an approximation (the `tests` module checks it entry
//! for entry).

use num_complex::Complex64;

use crate::dtn::{incident_datum, ModeSet};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::mesh::{check_quality, Mesh};
use crate::problem::{DerivedScalars, ProblemConfig, Region};

/// Mapping from grid nodes to folded unknowns.
///
/// Unknown index is `iy * nx + ix` for columns `ix < nx`; the right wall
/// column `ix = nx` maps to the left unknown of the same row with the cell
/// phase as weight.
#[derive(Debug, Clone)]
pub struct DofMap {
    nx: usize,
    n_rows: usize,
    phase: Complex64,
}

impl DofMap {
    pub fn n_unknowns(&self) -> usize {
        self.nx * self.n_rows
    }

    /// Phase factor relating the right cell wall to the left.
    pub fn phase(&self) -> Complex64 {
        self.phase
    }

    /// Unknown index and trial weight for grid position (`ix`, `iy`).
    pub fn fold(&self, ix: usize, iy: usize) -> (usize, Complex64) {
        debug_assert!(ix <= self.nx && iy < self.n_rows);
        if ix == self.nx {
            (iy * self.nx, self.phase)
        } else {
            (iy * self.nx + ix, Complex64::new(1.0, 0.0))
        }
    }
}

/// Plain quadrature energies of a discrete field, unweighted by material
/// coefficients.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldEnergies {
    /// Exact integral of `|grad u|^2` over the dielectric.
    pub grad_sq_upper: f64,
    /// Exact integral of `|grad u|^2` over the filling.
    pub grad_sq_lower: f64,
    /// Exact integral of `|u|^2` over the dielectric.
    pub l2_upper: f64,
    /// Exact integral of `|u|^2` over the filling.
    pub l2_lower: f64,
    /// Centroid-rule integral of `|u|^2` over the filling (the rule the
    /// system mass matrix uses; the energy balance needs exactly this one).
    pub l2_lower_one_point: f64,
}

impl FieldEnergies {
    pub fn l2_sq(&self) -> f64 {
        self.l2_upper + self.l2_lower
    }

    pub fn grad_sq(&self) -> f64 {
        self.grad_sq_upper + self.grad_sq_lower
    }

    pub fn h1_sq(&self) -> f64 {
        self.l2_sq() + self.grad_sq()
    }
}

/// Discrete operator for one (mesh, configuration, mode set) triple.
pub struct Discretization<'a> {
    pub mesh: &'a Mesh,
    pub config: &'a ProblemConfig,
    pub modes: &'a ModeSet,
    pub scalars: DerivedScalars,
    dofs: DofMap,
    /// Dense transparent-boundary block among top-row unknowns, row-major.
    dtn_block: Vec<Complex64>,
}

impl<'a> Discretization<'a> {
    pub fn new(mesh: &'a Mesh, config: &'a ProblemConfig, modes: &'a ModeSet) -> Result<Self> {
        check_quality(mesh)?;
        let scalars = config.derive_scalars()?;
        if modes.count() > mesh.nx {
            return Err(Error::TruncationMismatch {
                modes: modes.truncation,
                required: modes.count(),
                nx: mesh.nx,
            });
        }
        let period = config.profile.period;
        if (modes.period - period).abs() > 1e-12 * period.abs()
            || (modes.alpha - scalars.alpha).abs() > 1e-12 * (1.0 + scalars.alpha.abs())
        {
            return Err(Error::DimensionMismatch(format!(
                "mode set was built for period {} / alpha {}, configuration has {} / {}",
                modes.period, modes.alpha, period, scalars.alpha
            )));
        }
        let dofs = DofMap {
            nx: mesh.nx,
            n_rows: mesh.n_rows(),
            phase: (Complex64::i() * scalars.alpha * period).exp(),
        };

        // Dense boundary block: with b_n[j] = exp(-i alpha_n x_j) / nx the
        // block is -period / eps1 * sum_n conj(b_n[k]) (i beta_n) b_n[j].
        let nx = mesh.nx;
        let mut dtn_block = vec![Complex64::new(0.0, 0.0); nx * nx];
        let scale = -period / config.eps1;
        for n in modes.orders() {
            let alpha_n = modes.alpha_n(n);
            let ib = Complex64::i() * modes.beta(n);
            let row: Vec<Complex64> = (0..nx)
                .map(|j| {
                    let x1 = period * j as f64 / nx as f64;
                    (-Complex64::i() * alpha_n * x1).exp() / nx as f64
                })
                .collect();
            for k in 0..nx {
                let left = scale * row[k].conj() * ib;
                for j in 0..nx {
                    dtn_block[k * nx + j] += left * row[j];
                }
            }
        }

        Ok(Discretization {
            mesh,
            config,
            modes,
            scalars,
            dofs,
            dtn_block,
        })
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_unknowns(&self) -> usize {
        self.dofs.n_unknowns()
    }

    /// Half bandwidth of the assembled matrix (wrap-around couplings of
    /// adjacent rows are the widest entries).
    pub fn band_width(&self) -> usize {
        2 * self.mesh.nx - 1
    }

    fn coefficients(&self, region: Region) -> (Complex64, Complex64) {
        let stiff = self.config.permittivity_at(region).inv();
        let omega = self.config.omega;
        let mass = match region {
            Region::Upper => Complex64::new(omega * omega * self.config.mu1, 0.0),
            Region::Lower => Complex64::new(omega * omega * self.config.mu2, self.config.sigma),
        };
        (stiff, mass)
    }

    fn fold_node(&self, node: usize) -> (usize, Complex64) {
        let nx1 = self.mesh.nx + 1;
        self.dofs.fold(node % nx1, node / nx1)
    }

    /// Visits every matrix entry (row, column, value); entries repeat and are
    /// meant to be accumulated.
    pub fn for_each_entry<F: FnMut(usize, usize, Complex64)>(&self, mut f: F) {
        let mesh = self.mesh;
        for t in &mesh.triangles {
            let p = t.vertices.map(|v| mesh.nodes[v]);
            let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
            let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
            let area2 = b[0] * c[1] - b[1] * c[0];
            debug_assert!(area2 > 0.0);
            let (cs, cm) = self.coefficients(t.region);
            let gscale = cs / (2.0 * area2);
            let mterm = cm * (area2 / 18.0);
            let folded = t.vertices.map(|v| self.fold_node(v));
            for a in 0..3 {
                let (ia, wa) = folded[a];
                let wac = wa.conj();
                for bb in 0..3 {
                    let (jb, wb) = folded[bb];
                    let v = gscale * (b[a] * b[bb] + c[a] * c[bb]) - mterm;
                    f(ia, jb, wac * wb * v);
                }
            }
        }
        let nx = mesh.nx;
        let top0 = mesh.top_row() * nx;
        for k in 0..nx {
            for j in 0..nx {
                let v = self.dtn_block[k * nx + j];
                if v != Complex64::new(0.0, 0.0) {
                    f(top0 + k, top0 + j, v);
                }
            }
        }
    }

    /// Assembles the system matrix in band storage.
    pub fn assemble_matrix(&self) -> BandMatrix {
        let bw = self.band_width();
        let mut m = BandMatrix::zeros(self.n_unknowns(), bw, bw);
        self.for_each_entry(|i, j, v| m.add(i, j, v));
        m
    }

    /// Incident-wave load: nonzero only on top-row unknowns, carrying the
    /// boundary datum through the trapezoidal trace quadrature.
    pub fn rhs(&self) -> Vec<Complex64> {
        let nx = self.mesh.nx;
        let period = self.config.profile.period;
        let mut b = vec![Complex64::new(0.0, 0.0); self.n_unknowns()];
        let top0 = self.mesh.top_row() * nx;
        let w = period / (self.config.eps1 * nx as f64);
        for j in 0..nx {
            let x1 = period * j as f64 / nx as f64;
            b[top0 + j] = w * incident_datum(&self.scalars, self.config.h1, x1);
        }
        b
    }

    /// Matrix-vector product without materializing the matrix.
    pub fn apply_operator(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch(format!(
                "operator expects {} coefficients, got {}",
                self.n_unknowns(),
                x.len()
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        self.for_each_entry(|i, j, v| y[i] += v * x[j]);
        Ok(y)
    }

    /// All matrix entries as accumulated triplets (testing / export).
    pub fn matrix_entries(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::new();
        self.for_each_entry(|i, j, v| out.push((i, j, v)));
        out
    }

    /// Solution samples on the top boundary at `x1 = j period / nx`.
    pub fn trace_top(&self, sol: &[Complex64]) -> Vec<Complex64> {
        let nx = self.mesh.nx;
        let top0 = self.mesh.top_row() * nx;
        sol[top0..top0 + nx].to_vec()
    }

    /// Field value at grid position (`ix`, `iy`), fold phase applied.
    pub fn node_value(&self, sol: &[Complex64], ix: usize, iy: usize) -> Complex64 {
        let (u, w) = self.dofs.fold(ix, iy);
        w * sol[u]
    }

    /// Field values at every grid node, indexed like mesh nodes.
    pub fn grid_values(&self, sol: &[Complex64]) -> Vec<Complex64> {
        let nx = self.mesh.nx;
        let mut out = Vec::with_capacity((nx + 1) * self.mesh.n_rows());
        for iy in 0..self.mesh.n_rows() {
            for ix in 0..=nx {
                out.push(self.node_value(sol, ix, iy));
            }
        }
        out
    }

    /// Region-resolved quadrature energies of a discrete field.
    pub fn field_energies(&self, sol: &[Complex64]) -> FieldEnergies {
        let mesh = self.mesh;
        let mut e = FieldEnergies::default();
        for t in &mesh.triangles {
            let p = t.vertices.map(|v| mesh.nodes[v]);
            let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
            let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
            let area2 = b[0] * c[1] - b[1] * c[0];
            let area = 0.5 * area2;
            let v = t.vertices.map(|node| {
                let (u, w) = self.fold_node(node);
                w * sol[u]
            });
            let gx = (v[0] * b[0] + v[1] * b[1] + v[2] * b[2]) / area2;
            let gy = (v[0] * c[0] + v[1] * c[1] + v[2] * c[2]) / area2;
            let grad_sq = (gx.norm_sqr() + gy.norm_sqr()) * area;
            let s = v[0] + v[1] + v[2];
            let l2_exact = area / 12.0 * (s.norm_sqr() + v.iter().map(|z| z.norm_sqr()).sum::<f64>());
            match t.region {
                Region::Upper => {
                    e.grad_sq_upper += grad_sq;
                    e.l2_upper += l2_exact;
                }
                Region::Lower => {
                    e.grad_sq_lower += grad_sq;
                    e.l2_lower += l2_exact;
                    e.l2_lower_one_point += area * s.norm_sqr() / 9.0;
                }
            }
        }
        e
    }
}
