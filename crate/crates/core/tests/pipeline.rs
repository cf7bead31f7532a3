mod common;

use common::{small_config, small_dataset, small_prepared};
use igcl::expcli::{
    accuracy, export_report, prepare, run_regime, run_regime_with, Classifier, Regime, RegimeSpec, MATRIX_FILE,
};
use igcl::siggen::{load_dataset, save_dataset};
use igcl::train::{FeatureSet, Method};
use igcl::Result;
use rand::Rng;

/// Returns the true labels of whatever it is asked about.
struct Oracle;

impl Classifier for Oracle {
    fn predict_set(&self, set: &FeatureSet<f64>) -> Result<Vec<usize>> {
        Ok(set.labels.iter().map(|l| l.unwrap()).collect())
    }
}

struct Coin(u64);

impl Classifier for Coin {
    fn predict_set(&self, set: &FeatureSet<f64>) -> Result<Vec<usize>> {
        let mut rng = igcl::rng::rng_for(self.0, &[]);
        Ok((0..set.len()).map(|_| rng.random_range(0..3)).collect())
    }
}

#[test]
fn saved_dataset_prepares_identically() {
    let cfg = small_config();
    let ds = small_dataset(&cfg);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    let (a, b) = (prepare(&cfg, &ds).unwrap(), prepare(&cfg, &back).unwrap());
    assert_eq!(a.test_hash, b.test_hash);
    assert_eq!(a.pretrain.x, b.pretrain.x);
    assert_eq!(a.n_stations, 3);
    assert!(!a.test.is_empty() && !a.val.is_empty() && !a.finetune.is_empty());
}

#[test]
fn perfect_classifier_scores_every_cell_full() {
    let (cfg, prepared) = small_prepared();
    for regime in Regime::ALL {
        let spec = RegimeSpec { regime, station: None, method: Method::IgAnchor, repeats: 2 };
        let rep = run_regime_with(&cfg, &prepared, &spec, |_| Ok(Oracle)).unwrap();
        assert_eq!(rep.mean, 100.0, "{}", regime.as_str());
        assert_eq!(rep.std, 0.0);
        assert!(rep.matrix.cells.iter().flatten().all(|&v| v == 100.0));
    }
}

#[test]
fn random_guessing_is_near_chance() {
    let (cfg, prepared) = small_prepared();
    let labels: Vec<usize> = prepared.test.labels.iter().map(|l| l.unwrap()).collect();
    let mut rng = igcl::rng::rng_for(77, &[]);
    let trials = 400;
    let mean = (0..trials)
        .map(|_| {
            let preds: Vec<usize> = (0..labels.len()).map(|_| rng.random_range(0..3)).collect();
            accuracy(&preds, &labels).unwrap()
        })
        .sum::<f64>()
        / trials as f64;
    assert!((mean - 100.0 / 3.0).abs() < 3.0, "mean accuracy {mean}");

    let spec = RegimeSpec { regime: Regime::All, station: None, method: Method::Xe, repeats: 2 };
    let rep = run_regime_with(&cfg, &prepared, &spec, |ctx| Ok(Coin(ctx.repeat as u64))).unwrap();
    assert!(rep.mean > 15.0 && rep.mean < 52.0, "coin mean {}", rep.mean);
}

#[test]
fn one_station_report_has_square_matrix() {
    let (cfg, prepared) = small_prepared();
    let spec = RegimeSpec { regime: Regime::OneStation, station: None, method: Method::Xe, repeats: 2 };
    let rep = run_regime(&cfg, &prepared, &spec).unwrap();
    assert_eq!(rep.accuracies.len(), 2);
    assert_eq!(rep.repeats.len(), 2);
    assert!(rep.repeats.iter().all(|r| r.rows.len() == 3));
    assert_eq!(rep.matrix.cells.len(), 3);
    assert!(rep.matrix.cells.iter().all(|r| r.len() == 3));
    assert!(rep.cross_station_mean.is_some());

    let dir = tempfile::tempdir().unwrap();
    export_report(&rep, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(MATRIX_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("train\\test,ILL01,ILL02,ILL03"));
}

#[test]
fn single_station_row_and_test_hash_are_shared() {
    let (cfg, prepared) = small_prepared();
    let spec = RegimeSpec { regime: Regime::OneStationSc, station: Some(1), method: Method::IgLink, repeats: 1 };
    let a = run_regime(&cfg, &prepared, &spec).unwrap();
    assert_eq!(a.repeats[0].rows.len(), 1);
    assert_eq!(a.repeats[0].rows[0].train_stations, vec![1]);
    let spec = RegimeSpec { regime: Regime::AllSc, station: None, method: Method::IgAnchor, repeats: 1 };
    let b = run_regime(&cfg, &prepared, &spec).unwrap();
    assert_eq!(a.meta.test_hash, b.meta.test_hash);
    assert_eq!(a.meta.test_hash, prepared.test_hash);
}

#[test]
fn invalid_cells_are_rejected() {
    let (cfg, prepared) = small_prepared();
    let spec = RegimeSpec { regime: Regime::AllSc, station: None, method: Method::Xe, repeats: 1 };
    assert!(run_regime(&cfg, &prepared, &spec).is_err());
    let spec = RegimeSpec { regime: Regime::OneStation, station: Some(7), method: Method::Xe, repeats: 1 };
    assert!(run_regime(&cfg, &prepared, &spec).is_err());
}
