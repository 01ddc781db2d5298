use std::collections::HashMap;

use nlmc::coarse::{build_coarse_grid, index_perforation_segments, oversample};
use nlmc::geometry::{BoundaryRules, PerforatedGeometry, Perforation, Rect};
use nlmc::mesh::{build_fine_mesh, FacetTag};
use proptest::prelude::*;

const H: f64 = 1.0 / 32.0;

fn disks() -> impl Strategy<Value = PerforatedGeometry> {
    prop::collection::vec((0.15..0.85f64, 0.15..0.85f64, 0.04..0.12f64), 0..4).prop_filter_map(
        "holes must be separated",
        |d| {
            let g = PerforatedGeometry::new(
                Rect::unit(),
                BoundaryRules::dirichlet_left_bottom(),
                d.into_iter().map(|(x, y, r)| Perforation::disk(x, y, r)).collect(),
            );
            g.validate(3.0 * H).ok().map(|_| g)
        },
    )
}

fn divisor() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 4, 8])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn blocks_partition_the_triangles(g in disks(), nx in divisor(), ny in divisor()) {
        let mesh = build_fine_mesh(&g, H).unwrap();
        let grid = build_coarse_grid(&mesh, nx, ny).unwrap();
        let total: usize = grid.blocks.iter().map(|b| b.triangles.len()).sum();
        prop_assert_eq!(total, mesh.triangles.len());
        let mut seen = vec![0u8; mesh.triangles.len()];
        for (b, block) in grid.blocks.iter().enumerate() {
            for &t in &block.triangles {
                seen[t] += 1;
                prop_assert_eq!(grid.block_of[t], b);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let area: f64 = grid.blocks.iter().map(|b| b.area).sum();
        prop_assert!((area - mesh.total_area()).abs() < 1e-12);
    }

    #[test]
    fn every_boundary_edge_is_tagged_once(g in disks()) {
        let mesh = build_fine_mesh(&g, H).unwrap();
        let mut uses: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *uses.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let mut boundary: Vec<[usize; 2]> = uses.into_iter().filter(|e| e.1 == 1).map(|e| e.0).collect();
        let mut tagged: Vec<[usize; 2]> = mesh.facets.iter().map(|f| [f.nodes[0].min(f.nodes[1]), f.nodes[0].max(f.nodes[1])]).collect();
        boundary.sort();
        tagged.sort();
        prop_assert_eq!(boundary, tagged);
        for f in &mesh.facets {
            if let FacetTag::Perforation(l) = f.tag {
                prop_assert!(l < mesh.perforation_count);
            }
        }
    }

    #[test]
    fn segments_conserve_perforation_edges(g in disks(), nx in divisor(), ny in divisor()) {
        let mesh = build_fine_mesh(&g, H).unwrap();
        let grid = build_coarse_grid(&mesh, nx, ny).unwrap();
        let segs = index_perforation_segments(&mesh, &grid);
        let edges: usize = segs.segments.iter().flatten().map(|s| s.facets.len()).sum();
        prop_assert_eq!(edges, mesh.perforation_facets().count());
        let length: f64 = segs.segments.iter().flatten().map(|s| s.length).sum();
        let perimeter: f64 = mesh.perforation_perimeters().iter().sum();
        prop_assert!((length - perimeter).abs() < 1e-12);
        for (j, list) in segs.segments.iter().enumerate() {
            for s in list {
                prop_assert_eq!(s.active, s.facets.len() >= 2);
                for &f in &s.facets {
                    prop_assert_eq!(grid.block_of[mesh.facets[f].triangle], j);
                    prop_assert_eq!(mesh.facets[f].tag, FacetTag::Perforation(s.perforation));
                }
            }
        }
    }

    #[test]
    fn oversampling_grows_until_saturation(nx in 1usize..7, ny in 1usize..7, pick in any::<prop::sample::Index>()) {
        let mesh = build_fine_mesh(&PerforatedGeometry::unit_square(), 1.0 / 60.0).unwrap();
        let grid = build_coarse_grid(&mesh, nx, ny).unwrap();
        let i = pick.index(grid.n_blocks());
        let mut prev = oversample(&grid, i, 0);
        prop_assert_eq!(&prev.member_blocks, &vec![i]);
        for s in 1..=nx.max(ny) {
            let next = oversample(&grid, i, s);
            prop_assert!(prev.member_blocks.iter().all(|&b| next.contains(b)));
            for &b in &next.member_blocks {
                prop_assert!(grid.layer_distance(i, b) <= s);
            }
            prev = next;
        }
        prop_assert!(prev.is_saturated(&grid));
    }
}

#[test]
fn triangle_areas_are_identical() {
    let g = PerforatedGeometry::new(
        Rect::unit(),
        BoundaryRules::default(),
        vec![Perforation::disk(0.4, 0.6, 0.15), Perforation::disk(0.75, 0.25, 0.1)],
    );
    let mesh = build_fine_mesh(&g, H).unwrap();
    let a0 = mesh.triangle_area(0);
    assert!(mesh.triangles.iter().enumerate().all(|(t, _)| mesh.triangle_area(t) == a0));
    assert_eq!(a0, 0.5 * H * H);
}
