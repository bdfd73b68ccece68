mod common;

use common::*;
use jumpflow::control::{dyadic_shift, l2_distance, Control, StateGrid, StepControl};
use jumpflow::stats::Estimate;
use jumpflow::CatalogModel;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restart_at_any_grid_node_is_exact(seed in 0u64..1000, x in -2.0f64..2.0, k in 1usize..31) {
        let it = integrator(CatalogModel::jump_linear(0.8, 0.1, 0.4, 0.3, 0.2, 0.6), noise(measure(3.0, 2.0, 1), 5, 1));
        let sc = it.noise().scenario(seed, 0);
        let path = it.integrate(0.0, &[x], &Control::None, &sc).unwrap();
        let u = k as f64 / 32.0;
        let again = it.flow_restart(u, &path, &Control::None, &sc).unwrap();
        prop_assert_eq!(again.sup_distance(&path, u), 0.0);
    }

    #[test]
    fn multilinear_interpolation_reproduces_affine_maps(
        w in prop::array::uniform2(-3.0f64..3.0),
        c in -1.0f64..1.0,
        q in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let g = StateGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![4, 6]).unwrap();
        let values: Vec<f64> = g.points().iter().map(|p| w[0] * p[0] + w[1] * p[1] + c).collect();
        let (v, clamped) = g.interpolate(&values, &q);
        prop_assert!(!clamped);
        prop_assert!((v - (w[0] * q[0] + w[1] * q[1] + c)).abs() < 1e-12);
    }

    #[test]
    fn shift_distance_equals_l2_distance(t1 in 0.01f64..0.45, t2 in 0.55f64..0.99, a in -2.0f64..2.0, b in -2.0f64..2.0, level in 4u32..10) {
        let c = StepControl::new(vec![0.0, t1, t2, 1.0], vec![vec![a], vec![b], vec![a + b]]).unwrap();
        // A cut that rounds up onto T cannot be separated at this level.
        let refined = jumpflow::control::dyadic_refinement(&c, level);
        if t2 > 1.0 - 0.5f64.powi(level as i32) {
            prop_assert!(refined.is_err());
            return Ok(());
        }
        let q = refined.unwrap();
        let s = dyadic_shift(&c, &q).unwrap();
        let direct = l2_distance(&c, &s.control).unwrap();
        prop_assert!((s.distance - direct).abs() < 1e-12);
    }

    #[test]
    fn estimates_are_shift_equivariant(xs in prop::collection::vec(-10.0f64..10.0, 2..50), shift in -5.0f64..5.0) {
        let a = Estimate::from_samples(&xs);
        let moved: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        let b = Estimate::from_samples(&moved);
        prop_assert!((b.mean - a.mean - shift).abs() < 1e-9);
        prop_assert!((b.stderr - a.stderr).abs() < 1e-9);
    }
}
