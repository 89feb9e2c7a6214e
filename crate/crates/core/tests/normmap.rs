use kgsa_core::normmap::{
    export_grid, find_threshold, fraction_below, grid_norms, max_neighbor_jump, read_grid, write_grid, GridPoint,
    GridSpec, NormGrid, NormMapError, NormStatus,
};
use kgsa_core::potential::SpikeFamily;
use kgsa_core::reduced::ReducedParams;
use kgsa_core::weyl::{deficiency_psi, PsiOptions};
use proptest::prelude::*;

fn family() -> SpikeFamily {
    let mut v = SpikeFamily::standard();
    v.prepare(70.0).unwrap();
    v
}

fn synthetic(norms: &[f64]) -> NormGrid {
    NormGrid {
        spec: GridSpec::cube(1.0, 2.0, 2),
        l: 60.0,
        tol: 1e-10,
        points: norms
            .iter()
            .enumerate()
            .map(|(i, &n)| GridPoint {
                params: ReducedParams::new(1.0, 1.0, i as f64),
                norm: n,
                tail_bound: 0.1,
                status: NormStatus::Converged,
            })
            .collect(),
    }
}

#[test]
fn coarse_grid_is_finite_positive_and_continuous() {
    let v = family();
    let g = grid_norms(&v, &GridSpec::cube(1.0, 2.0, 5), 60.0, 1e-10).unwrap();
    assert_eq!(g.points.len(), 125);
    for p in &g.points {
        assert_eq!(p.status, NormStatus::Converged, "{p:?}");
        assert!(p.norm.is_finite() && p.norm > 0.0);
        assert!(p.tail_bound.is_finite() && p.tail_bound > 0.0);
        assert!(p.params.p_z >= 1.0);
    }
    // spacing 0.25 here, twice the 9³ spacing the 0.5 continuity bound is stated for
    assert!(max_neighbor_jump(&g) < 1.0, "{}", max_neighbor_jump(&g));
    let t = find_threshold(&g, 0.5).unwrap();
    assert!(t.fraction_below >= 0.5);
    assert!(t.min_norm > 0.0);
}

#[test]
fn single_point_grid_matches_deficiency_psi() {
    let v = family();
    let rp = ReducedParams::new(1.5, 1.5, 1.5);
    let g = grid_norms(&v, &GridSpec::single(&rp), 60.0, 1e-10).unwrap();
    let psi = deficiency_psi(&v, &rp, 60.0, &PsiOptions::norm_only(1e-10)).unwrap();
    assert_eq!(g.points.len(), 1);
    assert_eq!(g.points[0].norm, psi.norm());
    assert_eq!(g.points[0].tail_bound, psi.tail_bound);
}

#[test]
fn sweep_preconditions() {
    let v = family();
    assert!(matches!(
        grid_norms(&v, &GridSpec::cube(1.0, 2.0, 2), 30.0, 1e-10),
        Err(NormMapError::ShortInterval(_))
    ));
    assert!(matches!(
        grid_norms(&v, &GridSpec::cube(1.0, 2.0, 1), 60.0, 1e-10),
        Err(NormMapError::BadSpec { .. })
    ));
}

#[test]
fn sweep_records_failures_without_aborting() {
    let v = family();
    // a tolerance the solver rejects fails every point but still returns the grid
    let g = grid_norms(&v, &GridSpec::cube(1.0, 2.0, 2), 60.0, -1.0).unwrap();
    assert_eq!(g.points.len(), 8);
    assert!(g.points.iter().all(|p| matches!(p.status, NormStatus::Failed(_))));
    assert!(matches!(find_threshold(&g, 0.5), Err(NormMapError::EmptyGrid)));
}

#[test]
fn threshold_quantiles() {
    let g = synthetic(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6]);
    let half = find_threshold(&g, 0.5).unwrap();
    assert_eq!(half.m, 2.6f64.next_up());
    assert_eq!(half.fraction_below, 0.5);
    assert_eq!(half.median_norm, 0.5 * (2.6 + 3.0));
    let all = find_threshold(&g, 1.0).unwrap();
    assert_eq!(all.m, 9.0f64.next_up());
    assert_eq!(all.fraction_below, 1.0);
    assert_eq!((all.min_norm, all.max_norm), (1.0, 9.0));
    assert_eq!(fraction_below(&g, 0.99), 0.0);
    assert!(matches!(find_threshold(&g, 0.0), Err(NormMapError::BadTarget(_))));
    assert!(matches!(find_threshold(&g, 1.5), Err(NormMapError::BadTarget(_))));
    assert!(matches!(find_threshold(&synthetic(&[]), 0.5), Err(NormMapError::EmptyGrid)));
}

#[test]
fn export_round_trips_and_is_idempotent() {
    let g = synthetic(&[1.0 / 3.0, std::f64::consts::PI, 1e-300, 12345.678901234567]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let header = vec!["kgsa test".to_string()];
    export_grid(&g, &path, &header).unwrap();
    let first = std::fs::read(&path).unwrap();
    export_grid(&g, &path, &header).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
    assert!(first.starts_with(b"# kgsa test\np_y,p_z,p_eta,norm,tail_bound,status\n"));
    let rows = read_grid(first.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    for i in [0, 1, 3] {
        assert_eq!(rows[i].norm, g.points[i].norm);
        assert_eq!(rows[i].p_eta, g.points[i].params.p_eta);
        assert_eq!(rows[i].tail_bound, g.points[i].tail_bound);
        assert_eq!(rows[i].status, "converged");
    }
    let mut empty = Vec::new();
    write_grid(&synthetic(&[]), &mut empty, &[]).unwrap();
    assert_eq!(empty, b"p_y,p_z,p_eta,norm,tail_bound,status\n");
}

proptest! {
    #[test]
    fn threshold_is_monotone_in_target(norms in prop::collection::vec(0.1f64..100.0, 1..40), f1 in 0.01f64..1.0, f2 in 0.01f64..1.0) {
        let g = synthetic(&norms);
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let a = find_threshold(&g, lo).unwrap();
        let b = find_threshold(&g, hi).unwrap();
        prop_assert!(a.m <= b.m);
        prop_assert!(a.fraction_below >= lo);
        prop_assert!(b.fraction_below >= hi);
        prop_assert!(a.fraction_below > 0.0);
    }

    #[test]
    fn floats_survive_csv(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let g = synthetic(&[x]);
        let mut buf = Vec::new();
        write_grid(&g, &mut buf, &[]).unwrap();
        let rows = read_grid(buf.as_slice()).unwrap();
        prop_assert_eq!(rows[0].norm.to_bits(), x.to_bits());
    }
}
