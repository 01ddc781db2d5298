//! Coarse block partition, oversampled regions and per-block perforation
//! segments.

use crate::error::{NlmcError, Result};
use crate::mesh::FineMesh;

/// One non-empty coarse block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Block position in the `nx × ny` grid.
    pub ix: usize,
    pub iy: usize,
    /// `[x0, y0, x1, y1]`.
    pub rect: [f64; 4],
    pub triangles: Vec<usize>,
    /// In-domain area (holes excluded).
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct CoarseGrid {
    pub nx: usize,
    pub ny: usize,
    /// Fine lattice cells per block, per direction.
    pub cells_per_block: [usize; 2],
    pub blocks: Vec<Block>,
    /// Triangle to block index.
    pub block_of: Vec<usize>,
    /// Grid position `iy * nx + ix` to block index, if the block is kept.
    pub block_at: Vec<Option<usize>>,
}

impl CoarseGrid {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Chebyshev distance between two blocks in index space.
    pub fn layer_distance(&self, a: usize, b: usize) -> usize {
        let (ba, bb) = (&self.blocks[a], &self.blocks[b]);
        ba.ix.abs_diff(bb.ix).max(ba.iy.abs_diff(bb.iy))
    }
}

/// Assigns each fine triangle to the block containing its lattice cell.
pub fn build_coarse_grid(mesh: &FineMesh, nx: usize, ny: usize) -> Result<CoarseGrid> {
    let nested = |cells: usize, n: usize| n > 0 && cells.is_multiple_of(n);
    if !nested(mesh.nx, nx) || !nested(mesh.ny, ny) {
        return Err(NlmcError::NonNestedGrids {
            fine_x: mesh.nx,
            fine_y: mesh.ny,
            nx,
            ny,
        });
    }
    let (bx, by) = (mesh.nx / nx, mesh.ny / ny);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (t, &[i, j]) in mesh.triangle_cell.iter().enumerate() {
        members[(j / by) * nx + i / bx].push(t);
    }
    let mut blocks = Vec::new();
    let mut block_at = vec![None; nx * ny];
    let mut block_of = vec![0usize; mesh.triangles.len()];
    let (hx, hy) = (bx as f64 * mesh.h, by as f64 * mesh.h);
    for iy in 0..ny {
        for ix in 0..nx {
            let tris = std::mem::take(&mut members[iy * nx + ix]);
            if tris.is_empty() {
                continue;
            }
            let b = blocks.len();
            for &t in &tris {
                block_of[t] = b;
            }
            let area = tris.iter().map(|&t| mesh.triangle_area(t)).sum();
            let x0 = mesh.origin[0] + ix as f64 * hx;
            let y0 = mesh.origin[1] + iy as f64 * hy;
            blocks.push(Block {
                ix,
                iy,
                rect: [x0, y0, x0 + hx, y0 + hy],
                triangles: tris,
                area,
            });
            block_at[iy * nx + ix] = Some(b);
        }
    }
    Ok(CoarseGrid {
        nx,
        ny,
        cells_per_block: [bx, by],
        blocks,
        block_of,
        block_at,
    })
}

/// A block enlarged by `layers` rings of neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct OversampleRegion {
    pub center_block: usize,
    pub layers: usize,
    /// Sorted block indices.
    pub member_blocks: Vec<usize>,
}

impl OversampleRegion {
    pub fn contains(&self, block: usize) -> bool {
        self.member_blocks.binary_search(&block).is_ok()
    }

    /// Membership mask over all blocks.
    pub fn mask(&self, grid: &CoarseGrid) -> Vec<bool> {
        let mut m = vec![false; grid.n_blocks()];
        for &b in &self.member_blocks {
            m[b] = true;
        }
        m
    }

    pub fn triangles<'a>(&'a self, grid: &'a CoarseGrid) -> impl Iterator<Item = usize> + 'a {
        self.member_blocks
            .iter()
            .flat_map(|&b| grid.blocks[b].triangles.iter().copied())
    }

    /// Nodes all of whose triangles lie in the region, i.e. nodes not on the
    /// artificial boundary of the region.
    pub fn interior_nodes(&self, mesh: &FineMesh, grid: &CoarseGrid) -> Vec<bool> {
        let mask = self.mask(grid);
        let mut touched = vec![false; mesh.nodes.len()];
        for t in self.triangles(grid) {
            for n in mesh.triangles[t] {
                touched[n] = true;
            }
        }
        (0..mesh.nodes.len())
            .map(|n| touched[n] && mesh.node_triangles(n).iter().all(|&t| mask[grid.block_of[t]]))
            .collect()
    }

    /// Whether the region covers every block of the grid.
    pub fn is_saturated(&self, grid: &CoarseGrid) -> bool {
        self.member_blocks.len() == grid.n_blocks()
    }
}

/// Blocks within Chebyshev distance `s` of block `i`, clipped to the grid.
pub fn oversample(grid: &CoarseGrid, i: usize, s: usize) -> OversampleRegion {
    let c = &grid.blocks[i];
    let (x0, x1) = (c.ix.saturating_sub(s), (c.ix + s).min(grid.nx - 1));
    let (y0, y1) = (c.iy.saturating_sub(s), (c.iy + s).min(grid.ny - 1));
    let mut member_blocks = Vec::new();
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            if let Some(b) = grid.block_at[iy * grid.nx + ix] {
                member_blocks.push(b);
            }
        }
    }
    OversampleRegion {
        center_block: i,
        layers: s,
        member_blocks,
    }
}

/// Connected run of perforation edges inside one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Global perforation (0-based).
    pub perforation: usize,
    pub facets: Vec<usize>,
    pub length: f64,
    /// Segments with fewer than two edges carry no continuum.
    pub active: bool,
}

#[derive(Debug, Clone)]
pub struct PerforationSegmentIndex {
    /// All segments of each block, ordered by their smallest facet index.
    pub segments: Vec<Vec<Segment>>,
    /// Facet to `(block, position in segments[block])`.
    pub owner: Vec<Option<(usize, usize)>>,
}

impl PerforationSegmentIndex {
    /// Active segments of a block; local component `l` (1-based) is
    /// `active(j).nth(l - 1)`.
    pub fn active(&self, block: usize) -> impl Iterator<Item = &Segment> + '_ {
        self.segments[block].iter().filter(|s| s.active)
    }

    /// Number of perforation continua `L_j`.
    pub fn count(&self, block: usize) -> usize {
        self.active(block).count()
    }

    /// Total length of active segments in a block.
    pub fn merged_length(&self, block: usize) -> f64 {
        self.active(block).map(|s| s.length).sum()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits the perforation edges of every block into connected components.
pub fn index_perforation_segments(mesh: &FineMesh, grid: &CoarseGrid) -> PerforationSegmentIndex {
    let perf: Vec<(usize, usize)> = mesh.perforation_facets().collect();
    let block_of_facet = |f: usize| grid.block_of[mesh.facets[f].triangle];
    let mut parent: Vec<usize> = (0..perf.len()).collect();
    // Facets sharing a node and a block belong to the same component.
    let mut first_at: std::collections::HashMap<(usize, usize), usize> = Default::default();
    for (k, &(f, _)) in perf.iter().enumerate() {
        let b = block_of_facet(f);
        for n in mesh.facets[f].nodes {
            match first_at.get(&(b, n)) {
                Some(&other) => {
                    let (ra, rb) = (find(&mut parent, k), find(&mut parent, other));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
                None => {
                    first_at.insert((b, n), k);
                }
            }
        }
    }
    let mut segments: Vec<Vec<Segment>> = vec![Vec::new(); grid.n_blocks()];
    let mut owner = vec![None; mesh.facets.len()];
    let mut slot_of_root: std::collections::HashMap<usize, (usize, usize)> = Default::default();
    for (k, &(f, l)) in perf.iter().enumerate() {
        let root = find(&mut parent, k);
        let b = block_of_facet(f);
        let slot = *slot_of_root.entry(root).or_insert_with(|| {
            segments[b].push(Segment {
                perforation: l,
                facets: Vec::new(),
                length: 0.0,
                active: false,
            });
            (b, segments[b].len() - 1)
        });
        let seg = &mut segments[slot.0][slot.1];
        seg.facets.push(f);
        seg.length += mesh.facet_length(f);
        owner[f] = Some(slot);
    }
    for (b, segs) in segments.iter_mut().enumerate() {
        for s in segs.iter_mut() {
            s.active = s.facets.len() >= 2;
            if !s.active {
                log::warn!(
                    "block {b}: perforation {} clipped to a single edge, no continuum assigned",
                    s.perforation + 1
                );
            }
        }
    }
    PerforationSegmentIndex { segments, owner }
}
