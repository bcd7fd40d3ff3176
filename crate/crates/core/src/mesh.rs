//! Boundary-fitted triangulation of one periodic cell.
//!
//! A regular `nx x ny2` grid on the lower reference strip and `nx x ny1` on
//! the upper one are pushed through the inverse flattening maps, so grid rows
//! follow the corrugation and the interface row lies exactly on `x2 = f(x1)`.
//! Each quadrilateral is split into two triangles along the same diagonal.
//! Matching left/right side nodes are recorded as periodic pairs; the degree
//! of freedom folding happens at assembly time.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::limits::MIN_TRIANGLE_ANGLE_DEG;
use crate::problem::{GratingProfile, Region};
use crate::transforms::FlatteningMap;

/// Triangle as three node indices (counterclockwise) plus its material region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub region: Region,
}

/// Edges making up each tagged part of the cell boundary, as node pairs.
#[derive(Debug, Clone, Default)]
pub struct BoundaryEdges {
    /// Conducting plane x2 = 0.
    pub plane: Vec<[usize; 2]>,
    /// Transparent top boundary x2 = h1.
    pub top: Vec<[usize; 2]>,
    /// Material interface x2 = f(x1).
    pub interface: Vec<[usize; 2]>,
    /// Left cell wall x1 = 0.
    pub left: Vec<[usize; 2]>,
    /// Right cell wall x1 = period.
    pub right: Vec<[usize; 2]>,
}

/// Triangulated periodic cell.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Node coordinates; index `iy * (nx + 1) + ix`.
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    /// Cells across the period.
    pub nx: usize,
    /// Cell rows above the interface.
    pub ny1: usize,
    /// Cell rows below the interface.
    pub ny2: usize,
    /// Generating profile, kept so refinement re-projects through the exact f.
    pub profile: GratingProfile,
    pub h1: f64,
    pub boundary: BoundaryEdges,
    /// (left node, right node) per grid row, bottom to top.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Smallest interior angle over all triangles, degrees.
    pub min_angle_deg: f64,
}

impl Mesh {
    /// Node index for grid position (column `ix`, row `iy`).
    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    /// Total grid rows (`ny1 + ny2 + 1`).
    pub fn n_rows(&self) -> usize {
        self.ny1 + self.ny2 + 1
    }

    /// Grid row lying on the material interface.
    pub fn interface_row(&self) -> usize {
        self.ny2
    }

    /// Grid row lying on the transparent top boundary.
    pub fn top_row(&self) -> usize {
        self.ny1 + self.ny2
    }

    /// True for nodes on the right cell wall (the ones folded away).
    pub fn is_right_column(&self, node: usize) -> bool {
        node % (self.nx + 1) == self.nx
    }

    /// Triangle area (positive for counterclockwise orientation).
    pub fn triangle_area(&self, t: &Triangle) -> f64 {
        let [a, b, c] = t.vertices.map(|v| self.nodes[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// The same cell re-meshed at doubled resolution in every direction.
    /// New interface nodes are placed on the exact profile, not interpolated.
    pub fn refine(&self) -> Result<Mesh> {
        build_mesh(&self.profile, self.h1, 2 * self.nx, 2 * self.ny1, 2 * self.ny2)
    }

    /// Nodes as CSV (`id,x1,x2`).
    pub fn write_nodes_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "id,x1,x2")?;
        for (id, p) in self.nodes.iter().enumerate() {
            writeln!(out, "{},{},{}", id, p[0], p[1])?;
        }
        Ok(())
    }

    /// Triangles as CSV (`v0,v1,v2,region`).
    pub fn write_triangles_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "v0,v1,v2,region")?;
        for t in &self.triangles {
            let tag = match t.region {
                Region::Upper => "upper",
                Region::Lower => "lower",
            };
            writeln!(out, "{},{},{},{}", t.vertices[0], t.vertices[1], t.vertices[2], tag)?;
        }
        Ok(())
    }
}

/// Builds the boundary-fitted mesh with `nx` columns, `ny1` upper rows and
/// `ny2` lower rows of cells.
pub fn build_mesh(
    profile: &GratingProfile,
    h1: f64,
    nx: usize,
    ny1: usize,
    ny2: usize,
) -> Result<Mesh> {
    if nx < 2 || ny1 < 1 || ny2 < 1 {
        return Err(Error::InvalidParameter(format!(
            "mesh needs nx >= 2, ny1 >= 1, ny2 >= 1; got nx={nx}, ny1={ny1}, ny2={ny2}"
        )));
    }
    let upper = FlatteningMap::new(profile, h1, Region::Upper)?;
    let lower = FlatteningMap::new(profile, h1, Region::Lower)?;

    let n_rows = ny1 + ny2 + 1;
    let mut nodes = Vec::with_capacity(n_rows * (nx + 1));
    for iy in 0..n_rows {
        for ix in 0..=nx {
            let xt1 = 2.0 * ix as f64 / nx as f64 - 1.0;
            let p = if iy <= ny2 {
                lower.inverse([xt1, iy as f64 / ny2 as f64 - 1.0])
            } else {
                upper.inverse([xt1, (iy - ny2) as f64 / ny1 as f64])
            };
            nodes.push(p);
        }
    }

    let node_id = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut triangles = Vec::with_capacity(2 * nx * (ny1 + ny2));
    for iy in 0..(ny1 + ny2) {
        let region = if iy < ny2 { Region::Lower } else { Region::Upper };
        for ix in 0..nx {
            let v00 = node_id(ix, iy);
            let v10 = node_id(ix + 1, iy);
            let v01 = node_id(ix, iy + 1);
            let v11 = node_id(ix + 1, iy + 1);
            triangles.push(Triangle {
                vertices: [v00, v10, v11],
                region,
            });
            triangles.push(Triangle {
                vertices: [v00, v11, v01],
                region,
            });
        }
    }

    let mut boundary = BoundaryEdges::default();
    for ix in 0..nx {
        boundary.plane.push([node_id(ix, 0), node_id(ix + 1, 0)]);
        boundary.interface.push([node_id(ix, ny2), node_id(ix + 1, ny2)]);
        boundary.top.push([node_id(ix, ny1 + ny2), node_id(ix + 1, ny1 + ny2)]);
    }
    for iy in 0..(ny1 + ny2) {
        boundary.left.push([node_id(0, iy), node_id(0, iy + 1)]);
        boundary.right.push([node_id(nx, iy), node_id(nx, iy + 1)]);
    }
    let periodic_pairs = (0..n_rows).map(|iy| (node_id(0, iy), node_id(nx, iy))).collect();

    let mut mesh = Mesh {
        nodes,
        triangles,
        nx,
        ny1,
        ny2,
        profile: profile.clone(),
        h1,
        boundary,
        periodic_pairs,
        min_angle_deg: 0.0,
    };

    let mut min_angle = f64::INFINITY;
    for t in &mesh.triangles {
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "triangle {:?} has non-positive area {area}; the corrugation is too steep \
                 for this resolution",
                t.vertices
            )));
        }
        min_angle = min_angle.min(smallest_angle_deg(
            mesh.nodes[t.vertices[0]],
            mesh.nodes[t.vertices[1]],
            mesh.nodes[t.vertices[2]],
        ));
    }
    mesh.min_angle_deg = min_angle;
    Ok(mesh)
}

/// Smallest interior angle of a triangle, in degrees.
fn smallest_angle_deg(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let mut smallest = f64::INFINITY;
    let pts = [a, b, c];
    for k in 0..3 {
        let p = pts[k];
        let q = pts[(k + 1) % 3];
        let r = pts[(k + 2) % 3];
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        let dot = u[0] * v[0] + u[1] * v[1];
        let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let cos = (dot / (nu * nv)).clamp(-1.0, 1.0);
        smallest = smallest.min(cos.acos().to_degrees());
    }
    smallest
}

/// Gate used at assembly time: refuse meshes whose worst angle is below the
/// conditioning threshold.
pub fn check_quality(mesh: &Mesh) -> Result<()> {
    if mesh.min_angle_deg < MIN_TRIANGLE_ANGLE_DEG {
        return Err(Error::MeshQuality {
            min_angle_deg: mesh.min_angle_deg,
            limit_deg: MIN_TRIANGLE_ANGLE_DEG,
        });
    }
    Ok(())
}
