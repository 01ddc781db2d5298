mod common;

use std::collections::HashMap;

use nlmc::basis::{basis_decay_profile, BasisType, Discretization, CONSTRAINT_TOL};
use nlmc::coarse::{build_coarse_grid, index_perforation_segments};
use nlmc::fem::MaterialParams;
use nlmc::geometry::BoundaryRules;
use nlmc::mesh::build_fine_mesh;
use nlmc::metrics::cell_average;
use nlmc::upscale::downscale;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{geometry, segment_average, stationarity};

const H: f64 = 1.0 / 32.0;

fn layout() -> Vec<(f64, f64, f64)> {
    vec![(0.3, 0.3, 0.1), (0.72, 0.62, 0.13), (0.25, 0.78, 0.07)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn downscaled_fields_reproduce_coarse_values(seed in any::<u64>(), s in 1usize..3, elastic in any::<bool>(), t2 in any::<bool>()) {
        let g = geometry(&layout(), BoundaryRules::dirichlet_left_bottom());
        let mesh = build_fine_mesh(&g, H).unwrap();
        let grid = build_coarse_grid(&mesh, 4, 4).unwrap();
        let segs = index_perforation_segments(&mesh, &grid);
        let p = MaterialParams::default();
        let disc = if elastic {
            Discretization::elasticity(&mesh, &grid, &segs, &p).unwrap()
        } else {
            Discretization::laplace(&mesh, &grid, &segs, &p).unwrap()
        };
        let bt = if t2 { BasisType::Type2 } else { BasisType::Type1 };
        let r = disc.build_basis(s, bt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse: Vec<f64> = (0..r.n_coarse()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let u = disc.dofs.expand(&downscale(&r, &coarse).unwrap());
        let nc = disc.ncomp();
        let avg = cell_average(&u, nc, &mesh, &grid).unwrap();
        for (label, &value) in r.labels.iter().zip(&coarse) {
            let got = if label.continuum == 0 {
                avg.get(label.block, label.component())
            } else {
                segment_average(&mesh, &segs, &u, nc, label, bt)
            };
            prop_assert!((got - value).abs() <= 1e-9, "{:?}: {} vs {}", label, got, value);
        }
    }

    #[test]
    fn types_agree_with_at_most_one_segment_per_block(
        picks in prop::collection::btree_set(prop::sample::select(vec![5usize, 6, 9, 10]), 1..5),
        radius in 0.04..0.08f64,
        shift in (-0.03..0.03f64, -0.03..0.03f64),
        s in 1usize..3,
    ) {
        let disks: Vec<(f64, f64, f64)> = picks
            .iter()
            .map(|&b| ((b % 4) as f64 * 0.25 + 0.125 + shift.0, (b / 4) as f64 * 0.25 + 0.125 + shift.1, radius))
            .collect();
        let g = geometry(&disks, BoundaryRules::dirichlet_left_bottom());
        let mesh = build_fine_mesh(&g, H).unwrap();
        let grid = build_coarse_grid(&mesh, 4, 4).unwrap();
        let segs = index_perforation_segments(&mesh, &grid);
        prop_assert!((0..grid.n_blocks()).all(|j| segs.count(j) <= 1));
        let disc = Discretization::laplace(&mesh, &grid, &segs, &MaterialParams::default()).unwrap();
        let r1 = disc.build_basis(s, BasisType::Type1).unwrap();
        let r2 = disc.build_basis(s, BasisType::Type2).unwrap();
        prop_assert_eq!(r1.n_coarse(), r2.n_coarse());
        let rows2: HashMap<_, _> = r2.labels.iter().enumerate().map(|(k, l)| (*l, k)).collect();
        for (k, l) in r1.labels.iter().enumerate() {
            let (a, b) = (r1.basis_vector(k), r2.basis_vector(rows2[l]));
            let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            prop_assert!(diff <= 1e-9, "{:?} differs by {:e}", l, diff);
        }
    }
}

#[test]
fn bases_are_constrained_minimizers() {
    let g = geometry(&layout(), BoundaryRules::dirichlet_left_bottom());
    let mesh = build_fine_mesh(&g, H).unwrap();
    let grid = build_coarse_grid(&mesh, 4, 4).unwrap();
    let segs = index_perforation_segments(&mesh, &grid);
    let p = MaterialParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for elastic in [false, true] {
        let disc = if elastic {
            Discretization::elasticity(&mesh, &grid, &segs, &p).unwrap()
        } else {
            Discretization::laplace(&mesh, &grid, &segs, &p).unwrap()
        };
        for bt in [BasisType::Type1, BasisType::Type2] {
            let r = disc.build_basis(2, bt).unwrap();
            assert!(r.max_constraint_residual() <= CONSTRAINT_TOL);
            for row in (0..r.n_coarse()).step_by(5) {
                let worst = stationarity(&disc, &r, row, 5, &mut rng);
                assert!(worst <= 1e-8, "{bt} row {row}: {worst:e}");
            }
        }
    }
}

#[test]
fn bases_vanish_outside_their_region_and_decay() {
    let g = geometry(&layout(), BoundaryRules::dirichlet_left_bottom());
    let mesh = build_fine_mesh(&g, 1.0 / 48.0).unwrap();
    let grid = build_coarse_grid(&mesh, 6, 6).unwrap();
    let segs = index_perforation_segments(&mesh, &grid);
    let disc = Discretization::laplace(&mesh, &grid, &segs, &MaterialParams::default()).unwrap();
    let s = 3;
    let r = disc.build_basis(s, BasisType::Type2).unwrap();
    for (row, label) in r.labels.iter().enumerate() {
        let prof = basis_decay_profile(&r.basis_vector(row), label.block, &mesh, &grid, &disc.dofs);
        assert!((prof.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(prof.iter().skip(s + 1).all(|&p| p == 0.0), "{label:?}: {prof:?}");
        let near: f64 = prof.iter().take(2).sum();
        assert!(near > 0.9, "{label:?}: {prof:?}");
    }
}
