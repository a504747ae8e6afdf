use dm_core::plate_model::{build_grid, BoundaryMode, MaterialParams};
use dm_core::zernike::{noll_modes, synthesize_target, ModeIndex, ZernikeMap};
use proptest::prelude::*;

fn disc(pitch: f64, radius: f64) -> Vec<(f64, f64)> {
    let g = build_grid(&MaterialParams::zerodur(), pitch, BoundaryMode::Free).unwrap();
    (0..g.len()).map(|i| g.coords(i)).filter(|&(x, y)| x.hypot(y) <= radius).collect()
}

#[test]
fn projection_inverts_basis_on_samples() {
    let pts = disc(0.05, 0.6);
    let zmap = ZernikeMap::with_modes(&pts, 20, 0.6).unwrap();
    let prod = zmap.c1.dot(&zmap.z);
    for i in 0..zmap.l() {
        for j in 0..zmap.l() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((prod[[i, j]] - want).abs() < 1e-10, "({i},{j}) = {}", prod[[i, j]]);
        }
    }
}

#[test]
fn basis_is_nearly_orthonormal_on_a_fine_disc() {
    let pts = disc(0.01, 1.0);
    let zmap = ZernikeMap::with_modes(&pts, 10, 1.0).unwrap();
    let gram = zmap.z.t().dot(&zmap.z) / pts.len() as f64;
    for i in 0..zmap.l() {
        for j in 0..zmap.l() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((gram[[i, j]] - want).abs() < 0.03, "({i},{j}) = {}", gram[[i, j]]);
        }
    }
}

#[test]
fn labels_and_indices_agree() {
    let modes = noll_modes(6).unwrap();
    assert!(modes.iter().all(|m| !m.is_piston()));
    for m in modes {
        let back: ModeIndex = m.label().parse().unwrap();
        assert_eq!(back, m);
    }
    assert_eq!("Z2^0".parse::<ModeIndex>().unwrap(), ModeIndex::from_nm(2, 0).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_recovers_random_coefficients(seed in any::<u64>()) {
        let pts = disc(0.1, 0.6);
        let zmap = ZernikeMap::with_modes(&pts, 8, 0.6).unwrap();
        let mut rng = dm_core::rng::stream(seed, "coef");
        let a: Vec<f64> = dm_core::rng::normal_vec(&mut rng, zmap.l(), 1.0);
        let y: Vec<f64> = (0..zmap.r()).map(|i| (0..zmap.l()).map(|j| zmap.z[[i, j]] * a[j]).sum()).collect();
        let back = zmap.project(&y);
        for (x, b) in a.iter().zip(&back) {
            prop_assert!((x - b).abs() < 1e-9);
        }
    }

    #[test]
    fn radial_modes_are_rotation_invariant(n in 1u32..5, angle in 0.0f64..6.28, rho in 0.0f64..1.0) {
        let mode = ModeIndex::from_nm(2 * n, 0).unwrap();
        let p = [(rho, 0.0), (rho * angle.cos(), rho * angle.sin())];
        let v = synthesize_target(mode, 1.0, &p, 1.0).unwrap();
        prop_assert!((v[0] - v[1]).abs() < 1e-9);
    }

    #[test]
    fn azimuthal_modes_rotate_with_their_order(mag in 1i32..4, extra in 0u32..2, phase in 0.0f64..6.28, rho in 0.05f64..1.0) {
        // Z_n^m and Z_n^-m span a rotation-invariant pair: the summed squares do not depend on angle.
        let n = mag as u32 + 2 * extra;
        let a = ModeIndex::from_nm(n, mag).unwrap();
        let b = ModeIndex::from_nm(n, -mag).unwrap();
        let pts = [(rho, 0.0), (rho * phase.cos(), rho * phase.sin())];
        let va = synthesize_target(a, 1.0, &pts, 1.0).unwrap();
        let vb = synthesize_target(b, 1.0, &pts, 1.0).unwrap();
        let e0 = va[0] * va[0] + vb[0] * vb[0];
        let e1 = va[1] * va[1] + vb[1] * vb[1];
        prop_assert!((e0 - e1).abs() < 1e-9 * (1.0 + e0));
    }
}
