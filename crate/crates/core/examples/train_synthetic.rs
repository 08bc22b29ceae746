// Trains the full model on the synthetic corpus, one run per seed, and
// prints test metrics.
//
// ```text
// cargo run --release --example train_synthetic -- [ablation] [num_events]
// ```

use std::time::Instant;

use lcv::corpus::SynthSpec;
use lcv::model::Ablation;
use lcv::pipeline::{prepare_synthetic, run_experiment, split_graphs, Experiment, PipelineConfig};

pub fn train_synthetic(ablation: Ablation, num_events: usize) -> Result<Experiment, Box<dyn std::error::Error>> {
    let mut config = PipelineConfig::compact();
    config.model.ablation = ablation;
    let spec = SynthSpec { num_events, ..SynthSpec::default() };

    let started = Instant::now();
    let (_, graphs) = prepare_synthetic(&spec, &config)?;
    let splits = split_graphs(graphs);
    println!(
        "graphs: {} train / {} val / {} test ({:.1?})",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        started.elapsed()
    );

    let experiment = run_experiment(&splits, &config.model, &config.train)?;
    for run in &experiment.runs {
        let o = &run.outcome;
        let losses: Vec<String> = o.history.iter().take(5).map(|h| format!("{:.4}", h.train_loss)).collect();
        println!(
            "seed {:>5}: best epoch {:>2} of {:>2}, val macro-F1 {:.4}, test macro-F1 {:.4}, first losses [{}]",
            o.seed,
            o.best_epoch,
            o.history.len(),
            o.best_val().macro_f1,
            run.test.macro_f1,
            losses.join(", ")
        );
    }
    if let Some(agg) = &experiment.aggregate {
        println!("{}: test macro-F1 {:.4} ± {:.4}", ablation.name(), agg.macro_f1.mean, agg.macro_f1.std);
    }
    println!("elapsed {:.1?}", started.elapsed());
    Ok(experiment)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let ablation = args.next().map(|a| a.parse()).transpose()?.unwrap_or(Ablation::Full);
    let events = args.next().map(|n| n.parse()).transpose()?.unwrap_or(200);
    train_synthetic(ablation, events)?;
    Ok(())
}
