//! Training, tandem and inverse-design contracts on a small dataset.

use thinfilm::dataset::{generate_dataset, Dataset, GenConfig, SplitPart};
use thinfilm::models::{build_fnn, build_inn, compose_tandem, Algorithm};
use thinfilm::neural::{mse, Mode, Tensor};
use thinfilm::optics::{Simulator, GRID_LEN};
use thinfilm::training::{
    evaluate_tandem, predict_inverse, train_fnn, train_tandem, train_tandem_with, TrainConfig,
};

fn small_data(seed: u64) -> (Dataset, Simulator) {
    let sim = Simulator::shipped().unwrap();
    (generate_dataset(&GenConfig::new(8, 60, seed), &sim).unwrap(), sim)
}

fn spectra(data: &Dataset, rows: &[usize]) -> Tensor {
    Tensor::new(vec![rows.len(), GRID_LEN], data.spectra(rows)).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 8, learning_rate: 1e-3, seed: 5, ..TrainConfig::fnn_default() }
}

#[test]
fn tandem_forward_is_the_composition() {
    let (data, _) = small_data(1);
    let inn = build_inn(Algorithm::Mlp, 8, 1).unwrap();
    let fnn = build_fnn(Algorithm::Mlp, 8, 2).unwrap();
    let mut tandem = compose_tandem(inn.clone(), fnn.clone()).unwrap();
    let x = spectra(&data, &[0, 1, 2]);
    let out = tandem.forward(&x, Mode::Eval).unwrap();
    let (mut inn, mut fnn) = (inn, fnn);
    let mid = inn.forward(&x, Mode::Eval).unwrap();
    let recon = fnn.forward(&mid, Mode::Eval).unwrap();
    assert_eq!(out.thicknesses.shape(), &[3, 8]);
    assert!(out.thicknesses.data().iter().zip(mid.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(out.spectra.data().iter().zip(recon.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(out.thicknesses.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn tandem_epoch_zero_loss_matches_a_manual_forward_pass() {
    let (data, _) = small_data(2);
    let inn = build_inn(Algorithm::Mlp, 8, 3).unwrap();
    let fnn = build_fnn(Algorithm::Mlp, 8, 4).unwrap();
    let (mut inn_copy, mut fnn_copy) = (inn.clone(), fnn.clone());
    let mut tandem = compose_tandem(inn, fnn).unwrap();
    let r = train_tandem(&mut tandem, &data, &quick(1)).unwrap();
    let x = spectra(&data, &data.split.val);
    let manual = mse(&fnn_copy.forward(&inn_copy.forward(&x, Mode::Eval).unwrap(), Mode::Eval).unwrap(), &x).unwrap();
    assert!((r.val_loss[0] - manual).abs() < 1e-9, "{} vs {manual}", r.val_loss[0]);
}

#[test]
fn forward_network_survives_tandem_steps_bit_for_bit() {
    let (data, _) = small_data(3);
    let fnn = build_fnn(Algorithm::Mlp, 8, 5).unwrap();
    let before = fnn.parameter_hash();
    let mut tandem = compose_tandem(build_inn(Algorithm::Mlp, 8, 6).unwrap(), fnn).unwrap();
    let mut seen = Vec::new();
    let r = train_tandem_with(&mut tandem, &data, &quick(3), |e| seen.push(e.tandem.fnn.parameter_hash())).unwrap();
    assert!(r.optimizer_steps >= 10, "{} steps", r.optimizer_steps);
    assert_eq!(seen.len(), 4);
    assert!(seen.iter().all(|h| *h == before));
    assert_eq!(tandem.fnn.parameter_hash(), before);
    assert_eq!(r.fnn_hash.as_deref(), Some(before.as_str()));
}

#[test]
fn reruns_are_bit_identical() {
    let (data, _) = small_data(4);
    let run = || {
        let mut net = build_fnn(Algorithm::Cnn, 8, 9).unwrap();
        let r = train_fnn(&mut net, &data, &quick(3)).unwrap();
        (r.train_loss, r.val_loss, net.parameter_hash())
    };
    let (a, b) = (run(), run());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
    assert_eq!(a.2, b.2);
}

#[test]
fn returned_weights_are_the_best_validation_epoch() {
    let (data, _) = small_data(5);
    let mut net = build_fnn(Algorithm::Mlp, 8, 1).unwrap();
    // A large step size makes validation loss wander, so the best epoch is
    // usually not the last.
    let cfg = TrainConfig { learning_rate: 3e-2, ..quick(12) };
    let r = train_fnn(&mut net, &data, &cfg).unwrap();
    let best = r.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(r.val_loss[r.best_epoch], best);
    let x = Tensor::new(vec![data.split.val.len(), 8], data.inputs(&data.split.val)).unwrap();
    let y = spectra(&data, &data.split.val);
    let now = mse(&net.forward(&x, Mode::Eval).unwrap(), &y).unwrap();
    // Stored weights are rounded to single precision after training.
    assert!((now - best).abs() <= 1e-5 * best, "{now} vs {best}");
}

#[test]
fn patience_stops_training() {
    let (data, _) = small_data(6);
    let mut net = build_fnn(Algorithm::Mlp, 8, 2).unwrap();
    let cfg = TrainConfig { learning_rate: 0.5, patience: Some(2), ..quick(50) };
    let r = train_fnn(&mut net, &data, &cfg).unwrap();
    assert!(r.stopped_early);
    assert_eq!(r.epochs_run, r.best_epoch + 2);
    assert_eq!(r.val_loss.len(), r.epochs_run + 1);
}

#[test]
fn evaluation_leaves_batch_norm_statistics_alone() {
    let (data, _) = small_data(7);
    let inn = build_inn(Algorithm::Cnn, 8, 1).unwrap();
    let mut tandem = compose_tandem(inn, build_fnn(Algorithm::Mlp, 8, 1).unwrap()).unwrap();
    let before = tandem.inn.parameter_hash();
    let a = evaluate_tandem(&mut tandem, &data, SplitPart::Val).unwrap();
    let b = evaluate_tandem(&mut tandem, &data, SplitPart::Val).unwrap();
    assert_eq!(a, b);
    assert_eq!(tandem.inn.parameter_hash(), before);
}

#[test]
fn inverse_design_is_resimulated_on_the_grid() {
    let (data, sim) = small_data(8);
    let mut tandem =
        compose_tandem(build_inn(Algorithm::Mlp, 8, 3).unwrap(), build_fnn(Algorithm::Mlp, 8, 3).unwrap()).unwrap();
    let target = sim.alternating_spectrum(&[35.0, 60.0, 41.0, 55.0, 68.0, 30.0, 47.0, 52.0]).unwrap();
    let d = predict_inverse(&mut tandem, &target, &data.grid(), &sim).unwrap();
    assert_eq!(d.thicknesses_nm.len(), 8);
    assert!(d.thicknesses_nm.iter().all(|&t| (30.0..=70.0).contains(&t) && t.fract() == 0.0));
    assert_eq!(d.reconstructed, sim.alternating_spectrum(&d.thicknesses_nm).unwrap());
    assert_eq!(d.design_mse, target.mse(&d.reconstructed));
    assert!(d.design_mse.is_finite() && d.design_mse > 0.0);
}
