use std::sync::OnceLock;

use msnn_core::grad::{eval_loss_and_grad, finite_diff_grad, predict};
use msnn_core::models::{a2rl_step, A2rlParams, A2rlState, ModelDocument, ModelKind, ModelSpec, WindowInput};
use msnn_core::simulator::{generate_laps, steady_state, LapConfig, VehicleParams};
use msnn_core::telemetry::{make_windows, select_split, DatasetSplit, WindowedSample};
use msnn_core::training::{train, TrainConfig};
use proptest::prelude::*;

fn samples() -> &'static [WindowedSample] {
    static CACHE: OnceLock<Vec<WindowedSample>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let laps = generate_laps(&VehicleParams::default(), &LapConfig::default(), 13).unwrap();
        let small = select_split(&laps.records, DatasetSplit::Small).unwrap();
        make_windows(&small, 9, 0.05).unwrap()
    })
}

fn kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::MsNnBase), Just(ModelKind::MsNnSteer), Just(ModelKind::Gnn)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tape_gradient_matches_differences(kind in kind(), seed in 0u64..1000, start in 0usize..900) {
        let all = samples();
        let net = ModelSpec::with_kind(kind).build(all).unwrap();
        let params = net.init_params(seed, 0.05, true);
        let batch = &all[start..start + 8];
        let ad = eval_loss_and_grad(&net, &params, batch).unwrap().gradient;
        let fd = finite_diff_grad(&net, &params, batch, 1e-6).unwrap();
        let scale = ad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, f) in ad.iter().zip(&fd) {
            prop_assert!((a - f).abs() <= 1e-5 * a.abs().max(f.abs()).max(1e-3 * scale), "{a} vs {f}");
        }
    }

    #[test]
    fn prediction_does_not_depend_on_batch(kind in kind(), seed in 0u64..1000, start in 0usize..900) {
        let all = samples();
        let net = ModelSpec::with_kind(kind).build(all).unwrap();
        let params = net.init_params(seed, 0.1, true);
        let inputs: Vec<&WindowInput> = all[start..start + 16].iter().map(|s| &s.input).collect();
        let batch = predict(&net, &params, &inputs).unwrap();
        for (k, input) in inputs.iter().enumerate() {
            prop_assert_eq!(predict(&net, &params, &[*input]).unwrap()[0], batch[k]);
        }
    }

    #[test]
    fn saved_models_predict_identically(kind in kind(), seed in 0u64..1000) {
        let all = samples();
        let net = ModelSpec::with_kind(kind).build(all).unwrap();
        let params = net.init_params(seed, 0.1, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ModelDocument::new(net.clone(), &params).unwrap().save(&path).unwrap();
        let (net2, params2) = ModelDocument::load(&path).unwrap().into_parts().unwrap();
        let inputs: Vec<&WindowInput> = all[..32].iter().map(|s| &s.input).collect();
        prop_assert_eq!(predict(&net, &params, &inputs).unwrap(), predict(&net2, &params2, &inputs).unwrap());
    }

    #[test]
    fn zero_gain_a2rl_is_kinematic(a_y in -30.0f64..30.0, a_x in -20.0f64..10.0, v_x in 5.0f64..90.0, us in -0.1f64..0.1, f in -0.01f64..0.01) {
        // time constants equal to dt forget the previous state in one step
        let p = A2rlParams::kinematic(0.05, 3.0);
        let state = A2rlState { delta_us_prev: us, ax_filter_prev: f };
        let (delta, _) = a2rl_step(a_y, a_x, v_x, &p, state, 5.0).unwrap();
        prop_assert!((delta - a_y * 3.0 / (v_x * v_x)).abs() < 1e-15);
    }

    #[test]
    fn steady_states_are_consistent(v_x in 15.0f64..80.0, frac in -0.8f64..0.8) {
        let p = VehicleParams::default();
        // steer for a fraction of the grip limit, via the kinematic angle
        let delta = frac * p.max_lateral_accel(v_x) * p.wheelbase / (v_x * v_x);
        let s = steady_state(&p, v_x, delta, None).unwrap();
        prop_assert!((s.a_y - v_x * s.r).abs() < 1e-6 * (1.0 + s.a_y.abs()));
        prop_assert_eq!(s.a_y.signum(), delta.signum());
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let all = samples();
    let (tr, va) = all.split_at(600);
    let tc = TrainConfig { max_epochs: 5, patience: 5, seed: 3, ..TrainConfig::default() };
    let spec = ModelSpec::with_kind(ModelKind::MsNnSteer);
    let a = train(&spec, tr, va, &tc).unwrap().result;
    let b = train(&spec, tr, va, &tc).unwrap().result;
    assert_eq!(a, b);
    let c = train(&spec, tr, va, &TrainConfig { seed: 4, ..tc }).unwrap().result;
    assert_ne!(a.best_params, c.best_params);
}
