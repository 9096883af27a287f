use nsstab::mesh::{DomainMesh, PatchSide, Side};
use proptest::prelude::*;

const SIDES: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patches_and_collars_keep_invariants(
        nx in 4usize..20,
        ny in 4usize..20,
        side in 0usize..4,
        fraction in 0.3f64..=1.0,
        depth in 1usize..3,
    ) {
        let m = DomainMesh::build(&[nx, ny], &[1.0, 0.5 + ny as f64 / 10.0], 2)
            .unwrap()
            .select_patch(PatchSide::One(SIDES[side]), fraction)
            .unwrap()
            .build_collar(depth)
            .unwrap();
        prop_assert!(m.check_invariants().is_ok());
        prop_assert!(m.patch_connected());
        prop_assert!(m.collar().contains(&1));
        prop_assert!(m.patch().iter().all(|&p| m.in_patch(p)));
    }
}

#[test]
fn whole_boundary_patch_in_three_dimensions() {
    let m = DomainMesh::build(&[4, 4, 4], &[1.0, 1.0, 1.0], 3)
        .unwrap()
        .select_patch(PatchSide::All, 1.0)
        .unwrap()
        .build_collar(1)
        .unwrap();
    m.check_invariants().unwrap();
    assert_eq!(m.patch().len(), m.nodes().len());
}

#[test]
fn boundary_dump_file_has_one_line_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("boundary.txt");
    let m = DomainMesh::build(&[6, 8], &[1.0, 2.0], 2).unwrap();
    m.dump_boundary(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), m.nodes().len());
    for line in text.lines() {
        let v: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let (x, y, nx, ny) = (v[1], v[2], v[3], v[4]);
        assert!((nx * nx + ny * ny - 1.0).abs() < 1e-12);
        assert!(x.abs() < 1e-12 || (x - 1.0).abs() < 1e-12 || y.abs() < 1e-12 || (y - 2.0).abs() < 1e-12);
    }
}

#[test]
fn tiny_fraction_is_rejected() {
    let m = DomainMesh::build(&[4, 4], &[1.0, 1.0], 2).unwrap();
    assert!(matches!(
        m.select_patch(PatchSide::One(Side::Left), 0.05),
        Err(nsstab::Error::EmptyPatch { .. })
    ));
}
