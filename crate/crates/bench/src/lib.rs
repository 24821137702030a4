//! Shared inputs for the benchmarks.

use cssi_core::eval::ScoredPrediction;
use cssi_core::ncd::{NcdData, NcdHyper, NcdModel};
use cssi_core::synth::make_example;
use cssi_core::{rng, ExampleKind, ParentSet};

/// `n` rows of 9 scores rounded to a 1/100 grid, so the ROC sees ties.
pub fn random_predictions(n: usize, seed: u64) -> Vec<ScoredPrediction> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let scores: Vec<f64> = (0..9).map(|_| (rng::open01(&mut r) * 100.0).round() / 100.0).collect();
            let truth = ParentSet::from_indices((0..9).filter(|_| rng::open01(&mut r) < 0.3));
            ScoredPrediction::new(scores, truth).expect("truth within 9 parents")
        })
        .collect()
}

/// A freshly initialized model next to one minibatch of Example 1 rows.
pub fn example1_batch(rows: usize, hidden: Vec<usize>) -> (NcdModel, NcdData) {
    let ds = make_example(ExampleKind::Example1).sample(rows, 1).expect("example draws");
    let data = NcdData::from_dataset(&ds, 0).expect("single target");
    let model = NcdModel::for_data(&data, NcdHyper { hidden, ..Default::default() }).expect("valid hyperparameters");
    (model, data)
}
