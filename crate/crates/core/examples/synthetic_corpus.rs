// Generates the synthetic omission corpus and shows one event.
//
// ```text
// cargo run --example synthetic_corpus -- [num_events] [out.jsonl]
// ```

use std::collections::HashSet;

use lcv::corpus::{synth_generate_with_truth, CorpusStore, Label, SynthSpec, SynthTruth};
use lcv::text::tokenize;

/// Fraction of targets whose critical fact is missing from their own text
/// but present in at least one of their context articles.
pub fn omitted_critical_fraction(store: &CorpusStore, truth: &SynthTruth) -> f64 {
    let hits = truth
        .events
        .iter()
        .filter(|ev| {
            let has = |text: &str| {
                let tokens: HashSet<String> = tokenize(text).into_iter().collect();
                ev.facts[ev.critical].iter().all(|w| tokens.contains(w))
            };
            let target = store.get(&ev.target_id).expect("target exists");
            !has(&target.text) && ev.context_ids.iter().any(|c| has(&store.get(c).expect("context exists").text))
        })
        .count();
    hits as f64 / truth.events.len() as f64
}

pub fn synthetic_corpus(num_events: usize) -> Result<(CorpusStore, SynthTruth), Box<dyn std::error::Error>> {
    let spec = SynthSpec { num_events, ..SynthSpec::default() };
    let (store, truth) = synth_generate_with_truth(&spec)?;

    let misinfo = truth.events.iter().filter(|e| e.label == Label::Misinfo).count();
    println!("{} articles, {} targets, {} misinfo", store.len(), truth.events.len(), misinfo);
    println!("critical fact omitted in {:.3} of targets", omitted_critical_fraction(&store, &truth));

    if let Some(ev) = truth.events.iter().find(|e| e.label == Label::Misinfo) {
        println!("\nevent {} (critical fact: {})", ev.target_id, ev.facts[ev.critical].join(" "));
        println!("  target: {}", store.get(&ev.target_id).unwrap().text);
        for c in &ev.context_ids {
            println!("  {c}: {}", store.get(c).unwrap().text);
        }
    }
    Ok((store, truth))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let events = args.next().map(|n| n.parse()).transpose()?.unwrap_or(200);
    let (store, _) = synthetic_corpus(events)?;
    if let Some(path) = args.next() {
        store.save(&path)?;
        println!("\nwrote {path}");
    }
    Ok(())
}
