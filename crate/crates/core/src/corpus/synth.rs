//! Synthetic omission corpus.
//!
//! Each event owns a two-token frame and `facts_per_event` two-token fact
//! phrases drawn from a pseudo-word vocabulary. Fact 0 is the critical fact.
//! Context articles restate the frame plus the critical fact and a random
//! subset of the other facts, glued together with stop words only. A target
//! article has three sentences, each restating the frame and every fact it
//! reports, so a real target covers every content token of its contexts. A
//! misinfo target swaps the critical fact (and each other fact with
//! probability `omission_rate`) for a decoy phrase of the same length, so the
//! label is visible only through what the context has and the target lacks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Article, CorpusError, CorpusStore, Label, Split};

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const SYLLABLES_PER_WORD: u32 = 3;
const TARGET_SENTENCES: usize = 3;
const CONTEXT_FACT_RATE: f64 = 0.5;
const FILLERS: [&str; TARGET_SENTENCES] = ["officials confirmed", "witnesses described", "reporters summarized"];
const FRAMING: &str = "yet critics question the official account";
const GLUE: [&str; 3] = ["with", "and", "after"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_events: usize,
    pub facts_per_event: usize,
    pub context_articles_per_event: usize,
    pub omission_rate: f64,
    pub misinfo_fraction: f64,
    pub vocabulary_size: usize,
    pub seed: u64,
    /// Context articles fall in the `window_days` days before their target.
    pub window_days: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_events: 200,
            facts_per_event: 4,
            context_articles_per_event: 3,
            omission_rate: 0.25,
            misinfo_fraction: 0.5,
            vocabulary_size: 2000,
            seed: 7,
            window_days: 7,
        }
    }
}

fn max_vocabulary() -> usize {
    (CONSONANTS.len() * VOWELS.len()).pow(SYLLABLES_PER_WORD)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.num_events == 0 || self.facts_per_event == 0 || self.context_articles_per_event == 0 {
            return bad("all counts must be at least 1".into());
        }
        for (name, p) in [("omission_rate", self.omission_rate), ("misinfo_fraction", self.misinfo_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.window_days < 1 {
            return bad("window_days must be at least 1".into());
        }
        let needed = tokens_per_event(self.facts_per_event);
        if self.vocabulary_size < needed {
            return bad(format!("vocabulary_size {} is below the {} tokens one event needs", self.vocabulary_size, needed));
        }
        if self.vocabulary_size > max_vocabulary() {
            return bad(format!("vocabulary_size is capped at {}", max_vocabulary()));
        }
        Ok(())
    }
}

fn tokens_per_event(facts: usize) -> usize {
    2 + 4 * facts
}

/// Pseudo-word number `index`: three consonant-vowel syllables.
pub(crate) fn pseudo_word(index: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut rest = index;
    let mut word = String::with_capacity(2 * SYLLABLES_PER_WORD as usize);
    for _ in 0..SYLLABLES_PER_WORD {
        let syl = rest % base;
        rest /= base;
        word.push(CONSONANTS[syl / VOWELS.len()]);
        word.push(VOWELS[syl % VOWELS.len()]);
    }
    word
}

/// What the generator planted for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub target_id: String,
    pub context_ids: Vec<String>,
    pub frame: [String; 2],
    pub facts: Vec<[String; 2]>,
    pub critical: usize,
    /// Fact indices replaced by decoys in the target.
    pub omitted: Vec<usize>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub events: Vec<EventTruth>,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<CorpusStore, CorpusError> {
    synth_generate_with_truth(spec).map(|(store, _)| store)
}

fn phrase(p: &[String; 2]) -> String {
    format!("{} {}", p[0], p[1])
}

/// Assigns `Misinfo` to exactly `round(fraction * n)` events and a
/// label-stratified 70/15/15 train/val/test split.
fn plan_events(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<(Label, Split)> {
    let n = spec.num_events;
    let n_misinfo = ((spec.misinfo_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![Label::Real; n];
    for &e in &order[..n_misinfo] {
        labels[e] = Label::Misinfo;
    }
    let mut plan: Vec<(Label, Split)> = labels.iter().map(|&l| (l, Split::Train)).collect();
    for class in [Label::Real, Label::Misinfo] {
        let mut members: Vec<usize> = (0..n).filter(|&e| labels[e] == class).collect();
        members.shuffle(rng);
        let n_train = (0.70 * members.len() as f64).round() as usize;
        let n_val = (0.15 * members.len() as f64).round() as usize;
        for (rank, &e) in members.iter().enumerate() {
            plan[e].1 = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    plan
}

/// Generates the corpus together with the planted ground truth.
pub fn synth_generate_with_truth(spec: &SynthSpec) -> Result<(CorpusStore, SynthTruth), CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plan = plan_events(spec, &mut rng);
    let facts_n = spec.facts_per_event;
    let mut articles = Vec::new();
    let mut events = Vec::with_capacity(spec.num_events);

    for (e, &(label, split)) in plan.iter().enumerate() {
        let picks = rand::seq::index::sample(&mut rng, spec.vocabulary_size, tokens_per_event(facts_n)).into_vec();
        let words: Vec<String> = picks.into_iter().map(pseudo_word).collect();
        let pair = |k: usize| [words[k].clone(), words[k + 1].clone()];
        let frame = pair(0);
        let facts: Vec<[String; 2]> = (0..facts_n).map(|k| pair(2 + 2 * k)).collect();
        let decoys: Vec<[String; 2]> = (0..facts_n).map(|k| pair(2 + 2 * facts_n + 2 * k)).collect();
        let critical = 0;

        let target_day = (e as i64 + 1) * spec.window_days;
        let mut context_ids = Vec::with_capacity(spec.context_articles_per_event);
        for j in 0..spec.context_articles_per_event {
            let mut included: Vec<usize> = std::iter::once(critical)
                .chain((0..facts_n).filter(|&k| k != critical && rng.random::<f64>() < CONTEXT_FACT_RATE))
                .collect();
            included.shuffle(&mut rng);
            let text = included
                .iter()
                .enumerate()
                .map(|(s, &k)| format!("{} {} {}.", phrase(&frame), GLUE[s % GLUE.len()], phrase(&facts[k])))
                .collect::<Vec<_>>()
                .join(" ");
            let id = format!("e{e:04}-c{j}");
            let day = target_day - rng.random_range(1..=spec.window_days);
            articles.push(Article { id: id.clone(), text, day, label: None, split: Split::ContextPool });
            context_ids.push(id);
        }

        let mut omitted = Vec::new();
        if label == Label::Misinfo {
            omitted.push(critical);
            for k in (0..facts_n).filter(|&k| k != critical) {
                if rng.random::<f64>() < spec.omission_rate {
                    omitted.push(k);
                }
            }
        }
        let reported: Vec<String> = (0..facts_n)
            .map(|k| if omitted.contains(&k) { phrase(&decoys[k]) } else { phrase(&facts[k]) })
            .collect();
        let sentences: Vec<String> = (0..TARGET_SENTENCES)
            .map(|s| {
                let mut order = reported.clone();
                order.rotate_left(s % facts_n);
                let framing = if s == 0 { format!(", {FRAMING}") } else { String::new() };
                format!("{}: {} {}{}.", phrase(&frame), order.join(", "), FILLERS[s], framing)
            })
            .collect();
        let target_id = format!("e{e:04}-t");
        articles.push(Article {
            id: target_id.clone(),
            text: sentences.join(" "),
            day: target_day,
            label: Some(label),
            split,
        });
        events.push(EventTruth { target_id, context_ids, frame, facts, critical, omitted, label });
    }

    Ok((CorpusStore::new(articles)?, SynthTruth { events }))
}
