use dm_core::plate_model::{
    assemble_bending_stiffness, assemble_model, build_grid, build_layout, ActuatorParams, BoundaryMode, MaterialParams, RayleighDamping,
};
use dm_core::scalar::dot;
use proptest::prelude::*;

fn grid(pitch: f64) -> dm_core::Grid {
    build_grid(&MaterialParams::zerodur(), pitch, BoundaryMode::Free).unwrap()
}

#[test]
fn stiffness_annihilates_rigid_motion() {
    let mat = MaterialParams::zerodur();
    let g = grid(0.1);
    let k = assemble_bending_stiffness(&g, &mat);
    let scale = k.max_abs();
    for f in [|_: f64, _: f64| 1.0, |x: f64, _: f64| x, |_: f64, y: f64| y] {
        let w: Vec<f64> = (0..g.len()).map(|i| {
            let (x, y) = g.coords(i);
            f(x, y)
        }).collect();
        let kw = k.dot_vec(&w);
        let worst = kw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 1e-9 * scale, "rigid mode leaks: {worst:e} vs {scale:e}");
    }
}

#[test]
fn curvature_has_positive_energy() {
    let mat = MaterialParams::zerodur();
    let g = grid(0.1);
    let k = assemble_bending_stiffness(&g, &mat);
    let w: Vec<f64> = (0..g.len()).map(|i| {
        let (x, y) = g.coords(i);
        x * x + y * y
    }).collect();
    assert!(dot(&w, &k.dot_vec(&w)) > 0.0);
}

#[test]
fn model_matrices_are_symmetric_with_expected_shapes() {
    let mat = MaterialParams::zerodur();
    let g = grid(0.1);
    let act = ActuatorParams::with_pitch(0.4);
    let layout = build_layout(&act).unwrap();
    let model = assemble_model(&g, &mat, &act, &layout, 0.6, RayleighDamping::default()).unwrap();
    for m in [&model.m1, &model.m2, &model.m3] {
        assert_eq!(m.shape(), (model.n(), model.n()));
        assert!(m.is_symmetric(1e-12));
    }
    assert_eq!(model.b.shape(), (model.n(), model.m()));
    assert_eq!(model.c.shape(), (model.r(), model.n()));
    assert!(model.observation_points().iter().all(|&(x, y)| (x * x + y * y).sqrt() <= 0.6 + 1e-12));
}

#[test]
fn actuator_count_at_reference_pitch() {
    assert_eq!(build_layout(&ActuatorParams::<f64>::with_pitch(0.2)).unwrap().count(), 69);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stiffness_is_positive_semidefinite(seed in any::<u64>()) {
        let mat = MaterialParams::zerodur();
        let g = grid(0.2);
        let k = assemble_bending_stiffness(&g, &mat);
        let mut rng = dm_core::rng::stream(seed, "psd");
        let w: Vec<f64> = dm_core::rng::normal_vec(&mut rng, g.len(), 1.0);
        let energy = dot(&w, &k.dot_vec(&w));
        prop_assert!(energy >= -1e-12 * k.max_abs() * dot(&w, &w));
    }

    #[test]
    fn layout_is_invariant_under_quarter_turns(pitch in 0.12f64..0.6, inclusion in 0.3f64..0.95) {
        let act = ActuatorParams { inclusion_radius: inclusion, ..ActuatorParams::with_pitch(pitch) };
        let layout = build_layout(&act).unwrap();
        let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9;
        for &(x, y) in &layout.positions {
            prop_assert!(x.hypot(y) <= inclusion + 1e-12);
            let turned = (-y, x);
            prop_assert!(layout.positions.iter().any(|&q| close(q, turned)));
        }
    }
}
