mod common;

#[test]
fn adjoint_identity_over_100_geometries() {
    let worst = common::adjoint::worst_violation(100);
    assert!(worst < 1e-5, "worst relative violation {worst}");
}
