//! Structured P1 triangulation of a perforated rectangle.
//!
//! Lattice cell `(i, j)` is split along its rising diagonal into a lower
//! triangle `(i,j) (i+1,j) (i+1,j+1)` and an upper triangle
//! `(i,j) (i+1,j+1) (i,j+1)`, both counter-clockwise. A triangle is removed
//! when its centroid lies inside a perforation.

use crate::error::{NlmcError, Result};
use crate::geometry::{BoundaryKind, BoundaryRules, PerforatedGeometry, Side};

/// Sentinel for eliminated (Dirichlet) degrees of freedom.
pub const FIXED: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetTag {
    /// Edge on the boundary of perforation `l` (0-based).
    Perforation(usize),
    Dirichlet(Side),
    Neumann(Side),
}

impl FacetTag {
    pub fn perforation(self) -> Option<usize> {
        match self {
            FacetTag::Perforation(l) => Some(l),
            _ => None,
        }
    }
}

/// A boundary edge together with the kept triangle it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub triangle: usize,
    pub tag: FacetTag,
}

/// Maps `(node, component)` pairs to equation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    ncomp: usize,
    dof_of: Vec<usize>,
    slot_of: Vec<usize>,
}

impl DofMap {
    /// `fixed[node * ncomp + comp]` marks eliminated slots.
    pub fn from_fixed(ncomp: usize, fixed: &[bool]) -> Self {
        let mut dof_of = vec![FIXED; fixed.len()];
        let mut slot_of = Vec::with_capacity(fixed.len());
        for (slot, &f) in fixed.iter().enumerate() {
            if !f {
                dof_of[slot] = slot_of.len();
                slot_of.push(slot);
            }
        }
        Self {
            ncomp,
            dof_of,
            slot_of,
        }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn ndof(&self) -> usize {
        self.slot_of.len()
    }

    /// Number of `(node, component)` slots, free or fixed.
    pub fn nslots(&self) -> usize {
        self.dof_of.len()
    }

    #[inline]
    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        let d = self.dof_of[node * self.ncomp + comp];
        (d != FIXED).then_some(d)
    }

    /// Slot-indexed map with [`FIXED`] for eliminated slots.
    pub fn slot_to_dof(&self) -> &[usize] {
        &self.dof_of
    }

    /// `(node, component)` of an equation index.
    pub fn slot(&self, dof: usize) -> (usize, usize) {
        let s = self.slot_of[dof];
        (s / self.ncomp, s % self.ncomp)
    }

    /// Free values to a full slot vector, zero on fixed slots.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        assert_eq!(reduced.len(), self.ndof());
        let mut full = vec![0.0; self.dof_of.len()];
        for (d, &s) in self.slot_of.iter().enumerate() {
            full[s] = reduced[d];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.dof_of.len());
        self.slot_of.iter().map(|&s| full[s]).collect()
    }
}

/// Tagged triangulation plus the scalar degree-of-freedom map.
#[derive(Debug, Clone)]
pub struct FineMesh {
    pub h: f64,
    /// Lattice cells per direction.
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Lattice cell `(i, j)` of each triangle.
    pub triangle_cell: Vec<[usize; 2]>,
    pub facets: Vec<Facet>,
    pub boundary: BoundaryRules,
    pub perforation_count: usize,
    /// Removed triangles per perforation, after cleanup.
    pub removed_triangles: Vec<usize>,
    pub dof_map: DofMap,
    adj_offsets: Vec<usize>,
    adj_triangles: Vec<usize>,
}

impl FineMesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|n| self.nodes[n]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|n| self.nodes[n]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].nodes.map(|n| self.nodes[n]);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Triangles sharing `node`.
    pub fn node_triangles(&self, node: usize) -> &[usize] {
        &self.adj_triangles[self.adj_offsets[node]..self.adj_offsets[node + 1]]
    }

    pub fn perforation_facets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.facets
            .iter()
            .enumerate()
            .filter_map(|(f, facet)| facet.tag.perforation().map(|l| (f, l)))
    }

    /// Discrete perimeter of each perforation.
    pub fn perforation_perimeters(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.perforation_count];
        for (f, l) in self.perforation_facets() {
            p[l] += self.facet_length(f);
        }
        p
    }

    /// Facet field equal to `value` on perforation edges and 0 elsewhere.
    pub fn perforation_field(&self, value: f64) -> Vec<f64> {
        self.facets
            .iter()
            .map(|f| if f.tag.perforation().is_some() { value } else { 0.0 })
            .collect()
    }

    /// Two-component map with roller supports: Dirichlet sides fix the
    /// displacement component normal to them.
    pub fn elastic_dof_map(&self) -> DofMap {
        let mut fixed = vec![false; 2 * self.nodes.len()];
        for f in &self.facets {
            if let FacetTag::Dirichlet(side) = f.tag {
                let c = side.normal_component();
                for n in f.nodes {
                    fixed[2 * n + c] = true;
                }
            }
        }
        DofMap::from_fixed(2, &fixed)
    }

    /// Scalar map (`ncomp == 1`) or the elastic roller map (`ncomp == 2`).
    pub fn dof_map_for(&self, ncomp: usize) -> DofMap {
        if ncomp == 1 {
            self.dof_map.clone()
        } else {
            self.elastic_dof_map()
        }
    }

    /// Number of distinct edges.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |k| {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    (a.min(b), a.max(b))
                })
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Kept,
    Removed(usize),
}

/// Triangulates `geom` with lattice spacing `h`.
pub fn build_fine_mesh(geom: &PerforatedGeometry, h: f64) -> Result<FineMesh> {
    if !(h.is_finite() && h > 0.0) {
        return Err(NlmcError::InvalidSpacing(format!("h = {h} must be positive")));
    }
    let d = geom.domain;
    let cells = |len: f64| -> Result<usize> {
        let n = (len / h).round();
        if n < 1.0 || (n * h - len).abs() > 1e-9 * len {
            return Err(NlmcError::InvalidSpacing(format!(
                "h = {h} does not divide the side length {len}"
            )));
        }
        Ok(n as usize)
    };
    let (nx, ny) = (cells(d.width())?, cells(d.height())?);
    let clearance = 2.0 * std::f64::consts::SQRT_2 * h;
    geom.validate(clearance)?;

    let tri_id = |i: usize, j: usize, upper: usize| 2 * (j * nx + i) + upper;
    let point = |i: usize, j: usize| [d.x0 + i as f64 * h, d.y0 + j as f64 * h];
    let centroid = |i: usize, j: usize, upper: usize| {
        let (fx, fy) = if upper == 0 { (2.0, 1.0) } else { (1.0, 2.0) };
        [d.x0 + (i as f64 + fx / 3.0) * h, d.y0 + (j as f64 + fy / 3.0) * h]
    };

    let mut state = vec![State::Kept; 2 * nx * ny];
    let mut rasterized = vec![0usize; geom.perforations.len()];
    for (l, p) in geom.perforations.iter().enumerate() {
        let b = p.bounding_box();
        let lo = |v: f64, o: f64| (((v - o) / h).floor().max(0.0)) as usize;
        let (i0, j0) = (lo(b[0], d.x0), lo(b[1], d.y0));
        let (i1, j1) = (lo(b[2], d.x0).min(nx - 1), lo(b[3], d.y0).min(ny - 1));
        for j in j0..=j1 {
            for i in i0..=i1 {
                for upper in 0..2 {
                    if p.contains(centroid(i, j, upper)) {
                        state[tri_id(i, j, upper)] = State::Removed(l);
                        rasterized[l] += 1;
                    }
                }
            }
        }
        if rasterized[l] < 4 {
            return Err(NlmcError::PerforationTooSmall {
                id: l + 1,
                removed: rasterized[l],
            });
        }
    }

    // Neighbor across each edge, in edge order (p0p1, p1p2, p2p0).
    let neighbors = |i: usize, j: usize, upper: usize| -> [Option<usize>; 3] {
        if upper == 0 {
            [
                (j > 0).then(|| tri_id(i, j - 1, 1)),
                (i + 1 < nx).then(|| tri_id(i + 1, j, 1)),
                Some(tri_id(i, j, 1)),
            ]
        } else {
            [
                Some(tri_id(i, j, 0)),
                (j + 1 < ny).then(|| tri_id(i, j + 1, 0)),
                (i > 0).then(|| tri_id(i - 1, j, 0)),
            ]
        }
    };

    // Drop slivers: kept triangles with two or more removed neighbors.
    loop {
        let mut changed = false;
        for j in 0..ny {
            for i in 0..nx {
                for upper in 0..2 {
                    let t = tri_id(i, j, upper);
                    if state[t] != State::Kept {
                        continue;
                    }
                    let removed: Vec<usize> = neighbors(i, j, upper)
                        .into_iter()
                        .flatten()
                        .filter_map(|n| match state[n] {
                            State::Removed(l) => Some(l),
                            State::Kept => None,
                        })
                        .collect();
                    if removed.len() >= 2 {
                        state[t] = State::Removed(removed[0]);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let lattice_nodes = |i: usize, j: usize, upper: usize| -> [(usize, usize); 3] {
        if upper == 0 {
            [(i, j), (i + 1, j), (i + 1, j + 1)]
        } else {
            [(i, j), (i + 1, j + 1), (i, j + 1)]
        }
    };
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            for upper in 0..2 {
                if state[tri_id(i, j, upper)] == State::Kept {
                    for (a, b) in lattice_nodes(i, j, upper) {
                        used[b * (nx + 1) + a] = true;
                    }
                }
            }
        }
    }
    let mut node_id = vec![FIXED; used.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if used[j * (nx + 1) + i] {
                node_id[j * (nx + 1) + i] = nodes.len();
                nodes.push(point(i, j));
            }
        }
    }

    let mut triangles = Vec::new();
    let mut triangle_cell = Vec::new();
    let mut facets = Vec::new();
    let mut removed_triangles = vec![0usize; geom.perforations.len()];
    for j in 0..ny {
        for i in 0..nx {
            for upper in 0..2 {
                match state[tri_id(i, j, upper)] {
                    State::Removed(l) => {
                        removed_triangles[l] += 1;
                        continue;
                    }
                    State::Kept => {}
                }
                let t = triangles.len();
                let verts = lattice_nodes(i, j, upper).map(|(a, b)| node_id[b * (nx + 1) + a]);
                triangles.push(verts);
                triangle_cell.push([i, j]);
                for (k, nb) in neighbors(i, j, upper).into_iter().enumerate() {
                    let tag = match nb {
                        Some(n) => match state[n] {
                            State::Removed(l) => FacetTag::Perforation(l),
                            State::Kept => continue,
                        },
                        None => {
                            let side = if upper == 0 {
                                if k == 0 {
                                    Side::Bottom
                                } else {
                                    Side::Right
                                }
                            } else if k == 1 {
                                Side::Top
                            } else {
                                Side::Left
                            };
                            match geom.boundary.kind(side) {
                                BoundaryKind::Dirichlet => FacetTag::Dirichlet(side),
                                BoundaryKind::Neumann => FacetTag::Neumann(side),
                            }
                        }
                    };
                    facets.push(Facet {
                        nodes: [verts[k], verts[(k + 1) % 3]],
                        triangle: t,
                        tag,
                    });
                }
            }
        }
    }

    let mut adj_offsets = vec![0usize; nodes.len() + 1];
    for tri in &triangles {
        for &n in tri {
            adj_offsets[n + 1] += 1;
        }
    }
    for n in 0..nodes.len() {
        adj_offsets[n + 1] += adj_offsets[n];
    }
    let mut fill = adj_offsets.clone();
    let mut adj_triangles = vec![0usize; adj_offsets[nodes.len()]];
    for (t, tri) in triangles.iter().enumerate() {
        for &n in tri {
            adj_triangles[fill[n]] = t;
            fill[n] += 1;
        }
    }

    let mut fixed = vec![false; nodes.len()];
    for f in &facets {
        if matches!(f.tag, FacetTag::Dirichlet(_)) {
            fixed[f.nodes[0]] = true;
            fixed[f.nodes[1]] = true;
        }
    }

    let mesh = FineMesh {
        h,
        nx,
        ny,
        origin: [d.x0, d.y0],
        nodes,
        triangles,
        triangle_cell,
        facets,
        boundary: geom.boundary,
        perforation_count: geom.perforations.len(),
        removed_triangles,
        dof_map: DofMap::from_fixed(1, &fixed),
        adj_offsets,
        adj_triangles,
    };
    if let Some(t) = (0..mesh.triangles.len()).find(|&t| mesh.triangle_area(t) <= 0.0) {
        return Err(NlmcError::DegenerateTriangle {
            triangle: t,
            area: mesh.triangle_area(t),
        });
    }
    Ok(mesh)
}
