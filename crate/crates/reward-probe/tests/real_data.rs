mod common;

use reward_probe::idx::{load_idx_images, load_idx_labels, MnistFiles};
use reward_probe::mdp_json;
use reward_probe_core::dataset::{encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, MNIST_SIDE};
use reward_probe_core::envsim::{bellman_residual, bellman_solve};
use reward_probe_core::trainer::{td_evaluate_swept, TabularTdConfig};

#[test]
fn first_hundred_images_round_trip() {
    let files = MnistFiles::in_dir(&common::require_real_mnist());
    let stack = load_idx_images(&files.train_images).unwrap();
    let labels = load_idx_labels(&files.train_labels).unwrap();
    assert_eq!((stack.rows, stack.cols, stack.images.len(), labels.len()), (28, 28, 60_000, 60_000));
    let head = &stack.images[..100];
    let bytes = encode_idx_images(head, MNIST_SIDE, MNIST_SIDE).unwrap();
    let raw = std::fs::read(&files.train_images).unwrap();
    assert_eq!(&bytes[16..], &raw[16..16 + 100 * 784]);
    assert_eq!(parse_idx_images(&bytes).unwrap().images, head);
    let lbytes = encode_idx_labels(&labels[..100]);
    assert_eq!(parse_idx_labels(&lbytes).unwrap(), &labels[..100]);
    // The well-known first training label is a 5.
    assert_eq!(labels[0].get(), 5);
}

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn chain_fixture_matches_hand_solution() {
    let (doc, mdp) = mdp_json::load(&fixture("chain.json")).unwrap();
    let v = bellman_solve(&mdp).unwrap();
    assert_eq!(v, doc.expected_values.unwrap());
    assert!(bellman_residual(&mdp, &v) < 1e-12);
}

#[test]
fn two_action_fixture_td_agrees_with_bellman() {
    let (_, mdp) = mdp_json::load(&fixture("two_action.json")).unwrap();
    let exact = bellman_solve(&mdp).unwrap();
    assert!(bellman_residual(&mdp, &exact) < 1e-10);
    let cfg = TabularTdConfig { alpha: 0.5, gamma: mdp.gamma(), sweeps: 5000, decay: 0.001 };
    let td = td_evaluate_swept(&mdp, &cfg).unwrap();
    for (a, b) in td.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-3, "{td:?} vs {exact:?}");
    }
}

#[test]
fn malformed_fixture_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"gamma": 0.5, "policy": [[0.7]], "kernel": [[[{"prob": 1.0, "next": 0, "reward": 0.0}]]]}"#).unwrap();
    assert!(mdp_json::load(&p).is_err());
    std::fs::write(&p, r#"{"gamma": 0.5, "policy": [[1.0]], "kernel": [[[]]], "extra": 1}"#).unwrap();
    assert!(mdp_json::load(&p).is_err());
}
