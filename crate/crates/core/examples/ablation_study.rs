// Trains every ablation on the same synthetic graphs and tests each one
// against the full model with a paired t-test over seeds.

use lcv::corpus::SynthSpec;
use lcv::eval::paired_t_test;
use lcv::model::Ablation;
use lcv::pipeline::{prepare_synthetic, run_experiment, split_graphs, PipelineConfig};

/// Test macro-F1 of one ablation, one value per seed.
pub type AblationScores = (Ablation, Vec<f64>);

/// Scores for every ablation in `Ablation::ALL` order.
pub fn ablation_study(num_events: usize) -> Result<Vec<AblationScores>, Box<dyn std::error::Error>> {
    let config = PipelineConfig::compact();
    let spec = SynthSpec { num_events, ..SynthSpec::default() };
    let (_, graphs) = prepare_synthetic(&spec, &config)?;
    let splits = split_graphs(graphs);

    let mut results = Vec::new();
    for ablation in Ablation::ALL {
        let model = lcv::model::ModelConfig { ablation, ..config.model.clone() };
        let scores = run_experiment(&splits, &model, &config.train)?.test_macro_f1();
        results.push((ablation, scores));
    }

    let full = results[0].1.clone();
    println!("{:<20} {:>8}  {:>8}  {:>8}", "ablation", "mean F1", "t", "p");
    for (ablation, scores) in &results {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        match paired_t_test(&full, scores) {
            Ok(t) => println!("{:<20} {mean:>8.4}  {:>8.3}  {:>8.4}", ablation.name(), t.t, t.p),
            Err(_) => println!("{:<20} {mean:>8.4}  {:>8}  {:>8}", ablation.name(), "-", "-"),
        }
    }
    Ok(results)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    ablation_study(std::env::args().nth(1).map(|n| n.parse()).transpose()?.unwrap_or(200))?;
    Ok(())
}
