//! Property tests for the flow and the parameter flat view.

use proptest::prelude::*;
use slowflow_core::affine::Affine;
use slowflow_core::flow::{ConditionerMode, FlowConfig, FlowModel, FlowWorkspace};
use slowflow_core::net::{made_masks, Mlp};
use slowflow_core::rng::stream_rng;
use slowflow_core::stats::ks_distance;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// inverse(sample(z | x0) | x0) recovers z for any finite inputs,
    /// across dimensions, depths, and conditioner modes.
    #[test]
    fn flow_round_trip(
        seed in 0u64..1_000,
        dim in 1usize..3,
        layers in 1usize..6,
        full_maf in any::<bool>(),
        z0 in -6.0f64..6.0,
        z1 in -6.0f64..6.0,
        x0a in -3.0f64..3.0,
        x0b in -3.0f64..3.0,
    ) {
        let mode = if full_maf { ConditionerMode::FullMaf } else { ConditionerMode::Hypernet };
        let cfg = FlowConfig::new(dim).with_layers(layers).with_mode(mode);
        let norm = Affine { mean: vec![0.2; dim], scale: vec![1.4; dim] };
        let model = FlowModel::new(cfg, norm, seed).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let z = [z0, z1][..dim].to_vec();
        let x0 = [x0a, x0b][..dim].to_vec();
        let x1 = model.sample(&x0, &z, &mut ws).unwrap();
        let (z_back, _) = model.inverse(&x0, &x1, &mut ws).unwrap();
        for j in 0..dim {
            prop_assert!((z_back[j] - z[j]).abs() < 1e-10);
        }
    }

    /// Writing through the flat view and reading structured values back is
    /// the identity, with or without masks.
    #[test]
    fn flat_view_round_trip(seed in 0u64..1_000, masked in any::<bool>()) {
        let sizes = [3usize, 20, 20, 20, 4];
        let masks = if masked {
            made_masks(&[0, 0, 1], &[20, 20, 20], &[1, 1, 1, 1], 0)
        } else {
            vec![None; 4]
        };
        let mut net = Mlp::glorot(&sizes, masks, &mut stream_rng(seed, 0)).unwrap();
        let flat = net.params().to_vec();
        net.set_params(&flat).unwrap();
        prop_assert_eq!(net.params(), &flat[..]);
    }

    /// The KS statistic is symmetric and exactly invariant under a common
    /// strictly increasing transform.
    #[test]
    fn ks_rank_properties(seed in 0u64..1_000, na in 2usize..60, nb in 2usize..60) {
        let mut rng = stream_rng(seed, 0);
        let a: Vec<f64> = (0..na).map(|_| slowflow_core::rng::normal(&mut rng)).collect();
        let b: Vec<f64> = (0..nb).map(|_| slowflow_core::rng::normal(&mut rng) * 0.7 - 0.2).collect();
        let d = ks_distance(&a, &b).unwrap();
        prop_assert_eq!(ks_distance(&b, &a).unwrap(), d);
        let t = |x: f64| (x / 3.0).tanh() * 5.0 + x; // strictly increasing
        let ta: Vec<f64> = a.iter().map(|&x| t(x)).collect();
        let tb: Vec<f64> = b.iter().map(|&x| t(x)).collect();
        prop_assert_eq!(ks_distance(&ta, &tb).unwrap(), d);
        prop_assert!((0.0..=1.0).contains(&d));
    }
}
