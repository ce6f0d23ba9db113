use harmap_core::demos::{demo_grid, grassmann_demo, singular_curve, sphere_demo, uniton_pairs};
use harmap_core::dpw::{
    extended_solution, harmonic_map, verify_extended_solution, verify_harmonic, PipelineOptions,
};
use harmap_core::grassmann::{
    add_uniton_unchecked, adjoint_duality_defect, backward_uniton, cartan_embed, cartan_invert,
    converse_uniton, derivative_identity_check, finite_type_gauss_theorem, gauss_bundle,
    uniton_condition_check, uniton_theorem, Direction, GAUSS_RANK_TOL,
};
use harmap_core::grid::{tabulate, Field, Grid, SubbundleField};
use harmap_core::matrix::{c64, hermitian_projection, identity, ComplexMatrix};

fn block_diag(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = ComplexMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

#[test]
fn adding_a_uniton_matches_the_gauged_potential() {
    let grid = demo_grid();
    for pair in uniton_pairs().unwrap() {
        let th = uniton_theorem(&pair.mu, &pair.frame, &grid, &PipelineOptions::default()).unwrap();
        let name = pair.name;
        assert!(th.distance.max < 1e-6, "{name}: {:?}", th.distance);
        assert!(
            th.conditions.cond_a.max < 1e-6,
            "{name}: {:?}",
            th.conditions
        );
        assert!(
            th.conditions.cond_b.max < 1e-6,
            "{name}: {:?}",
            th.conditions
        );
        assert!(
            th.converse_closure.max < 1e-6,
            "{name}: {:?}",
            th.converse_closure
        );
        assert!(
            th.converse_recovery.max < 1e-6,
            "{name}: {:?}",
            th.converse_recovery
        );
        assert!(
            th.converse.admissibility.max < 1e-6,
            "{name}: {:?}",
            th.converse.admissibility
        );
        assert!(
            th.converse.dbar_defect.max < 1e-6,
            "{name}: {:?}",
            th.converse.dbar_defect
        );
        assert!(verify_extended_solution(&th.added).worst() < 1e-5);
        assert!(
            verify_harmonic(&harmonic_map(&th.gauged.phi)).unwrap().max < 1e-4,
            "{name}"
        );
    }
}

#[test]
fn non_holomorphic_uniton_fails_condition_b() {
    let grid = Grid::centered(0.5, 17);
    let p = tabulate(grid, |_, _, z| {
        let f = ComplexMatrix::from_column_slice(2, 1, &[c64(1.0, 0.0), z.conj()]);
        hermitian_projection(&f).unwrap()
    });
    let pi_hat = SubbundleField::from_projections(grid, 1, p.values);
    let phi = Field {
        grid,
        values: vec![identity(2); grid.len()],
    };
    let r = uniton_condition_check(&pi_hat, &phi).unwrap();
    assert!(r.cond_b.max > 1e-2, "{r:?}");
}

#[test]
fn corrupted_uniton_has_nonholomorphic_preimage() {
    let grid = Grid::centered(0.5, 17);
    let pair = &uniton_pairs().unwrap()[1];
    let ext = extended_solution(&pair.mu, &grid, &PipelineOptions::default()).unwrap();
    let p = tabulate(grid, |_, _, z| {
        let f = ComplexMatrix::from_column_slice(2, 1, &[c64(1.0, 0.0), z.conj() * 0.5]);
        hermitian_projection(&f).unwrap()
    });
    let bad = SubbundleField::from_projections(grid, 1, p.values);
    let rep = converse_uniton(&bad, &ext.b, &pair.mu).unwrap();
    assert!(rep.dbar_defect.max > 1e-2, "{:?}", rep.dbar_defect);
}

#[test]
fn finite_type_maps_land_in_the_grassmannian() {
    let grid = demo_grid();
    for ft in [sphere_demo(), grassmann_demo()] {
        let q0 = ft.q0.clone().unwrap();
        let ext = extended_solution(&ft.potential(), &grid, &PipelineOptions::default()).unwrap();
        let phi = harmonic_map(&ext.phi);
        let psi = cartan_invert(&phi, &q0, 1e-7).unwrap();
        assert_eq!(psi.flag_count(), 0);
        let again = cartan_embed(&psi, &q0).unwrap();
        assert!(
            cartan_invert(&again, &q0, 1e-9)
                .unwrap()
                .distance(&psi, 0)
                .max
                < 1e-12
        );
        assert!(derivative_identity_check(&psi, &phi).unwrap().max < 1e-5);
        assert!(adjoint_duality_defect(&psi).max < 1e-8);
    }
}

#[test]
fn backward_gauss_bundle_is_a_uniton_addition() {
    let grid = demo_grid();
    let ft = grassmann_demo();
    let q0 = ft.q0.clone().unwrap();
    let ext = extended_solution(&ft.potential(), &grid, &PipelineOptions::default()).unwrap();
    let psi = cartan_invert(&harmonic_map(&ext.phi), &q0, 1e-7).unwrap();
    let g = gauss_bundle(&psi, Direction::Backward, GAUSS_RANK_TOL).unwrap();
    assert_eq!(g.generic_rank, 1);
    let ell = backward_uniton(&psi, GAUSS_RANK_TOL).unwrap();
    assert_eq!(ell.rank, 1);
    let added = add_uniton_unchecked(&ext.phi, &ell, None).unwrap();
    let tilde = cartan_invert(&harmonic_map(&added), &q0, 1e-7).unwrap();
    let d = tilde.distance(&g.bundle, g.margin);
    assert!(d.max < 1e-5, "{d:?}");
}

#[test]
fn gauss_bundle_theorem_on_the_demos() {
    let grid = demo_grid();
    for ft in [sphere_demo(), grassmann_demo()] {
        let th = finite_type_gauss_theorem(&ft, &grid, &PipelineOptions::default(), 1e-7).unwrap();
        assert!(th.distance.max < 1e-5, "{:?}", th.distance);
        assert!(th.forms_sum.max < 1e-5, "{:?}", th.forms_sum);
        assert!(th.gauss.rank_drops.is_empty());
    }
}

#[test]
fn holomorphic_summand_with_a_branch_point_is_flagged() {
    let grid = demo_grid();
    let ft = sphere_demo();
    let ext = extended_solution(&ft.potential(), &grid, &PipelineOptions::default()).unwrap();
    let psi = cartan_invert(&harmonic_map(&ext.phi), ft.q0.as_ref().unwrap(), 1e-7).unwrap();
    let curve = singular_curve().unwrap();
    let delta = tabulate(grid, |_, _, z| curve.projection_jet(z).unwrap().pi);
    let sum = SubbundleField::from_projections(
        grid,
        2,
        psi.projections
            .iter()
            .zip(&delta.values)
            .map(|(a, b)| block_diag(a, b))
            .collect(),
    );
    let g = gauss_bundle(&sum, Direction::Forward, GAUSS_RANK_TOL).unwrap();
    assert!(g.rank_drops.contains(&grid.anchor()), "{:?}", g.rank_drops);
    let clean = gauss_bundle(&psi, Direction::Forward, GAUSS_RANK_TOL).unwrap();
    assert!(clean.rank_drops.is_empty());
}
