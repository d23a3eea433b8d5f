use reward_probe_core::dataset::Task;
use reward_probe_core::ndmath::{Rng, Stream};
use reward_probe_core::nets::gradcheck::{self, Objective};
use reward_probe_core::nets::{ActorCriticNet, NetConfig, ValueOutput};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-5;

/// A net and an input with every pre-activation well clear of a kink.
fn triple(rng: &mut Rng, k: u64) -> (ActorCriticNet, Vec<f64>) {
    loop {
        let mut cfg = NetConfig::mnist(Task::TenClass);
        if k % 2 == 1 {
            cfg.value_output = ValueOutput::Linear;
        }
        let net = ActorCriticNet::init_with(cfg, rng.next_u64()).unwrap();
        // Roughly MNIST-like sparsity: most pixels zero.
        let x: Vec<f64> = (0..cfg.input)
            .map(|_| if rng.next_f64() < 0.8 { 0.0 } else { rng.next_f64() })
            .collect();
        if gradcheck::kink_margin(&net, &x).unwrap() > 1e-4 {
            return (net, x);
        }
    }
}

fn run(make_obj: impl Fn(&mut Rng) -> Objective, seed: u64) {
    let mut rng = Rng::derive(seed, Stream::Oracle, 0);
    for k in 0..10 {
        let (net, x) = triple(&mut rng, k);
        let obj = make_obj(&mut rng);
        let r = gradcheck::check(&net, &x, obj, EPS, 40, &mut rng).unwrap();
        assert!(
            r.worst_relative < TOL,
            "{obj:?} triple {k}: relative error {:e} at {:?}",
            r.worst_relative,
            r.worst_at
        );
    }
}

#[test]
fn value_gradient_matches_finite_differences() {
    run(|_| Objective::Value, 1);
}

#[test]
fn log_policy_gradient_matches_finite_differences() {
    run(|rng| Objective::LogPolicy(rng.below(10) as usize), 2);
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    run(|rng| Objective::CrossEntropy(rng.below(10) as usize), 3);
}

#[test]
fn parity_head_matches_finite_differences() {
    let mut rng = Rng::new(4);
    let net = ActorCriticNet::init(9, true);
    let x: Vec<f64> = (0..784).map(|i| if i % 7 == 0 { rng.next_f64() } else { 0.0 }).collect();
    assert!(gradcheck::kink_margin(&net, &x).unwrap() > 1e-4);
    for obj in [Objective::LogPolicy(1), Objective::CrossEntropy(0), Objective::Value] {
        let r = gradcheck::check(&net, &x, obj, EPS, 40, &mut rng).unwrap();
        assert!(r.worst_relative < TOL, "{obj:?}: {:e}", r.worst_relative);
    }
}
