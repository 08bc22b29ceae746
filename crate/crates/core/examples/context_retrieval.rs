// Ranks earlier articles against a target with TF-IDF cosine inside the
// `[day - delta, day)` window.

use lcv::corpus::{Article, CorpusStore, Label, Split};
use lcv::retrieval::{build_pool_index, retrieve, RetrievalResult};

fn article(id: &str, day: i64, text: &str) -> Article {
    Article { id: id.into(), text: text.into(), day, label: None, split: Split::ContextPool }
}

pub fn context_retrieval(k: usize, delta: i64) -> Result<RetrievalResult, Box<dyn std::error::Error>> {
    let target = Article {
        id: "target".into(),
        text: "The council approved the bridge budget after a long vote.".into(),
        day: 10,
        label: Some(Label::Misinfo),
        split: Split::Test,
    };
    let store = CorpusStore::new(vec![
        article("a", 9, "Council members approved the bridge budget, cutting the school fund."),
        article("b", 8, "A long vote on the bridge ended late at night."),
        article("c", 7, "Weather stays mild across the region this week."),
        article("d", 2, "The bridge budget was first proposed last spring."),
        article("e", 10, "Published the same day, so outside the window."),
        target.clone(),
    ])?;
    let index = build_pool_index(&store)?;
    let result = retrieve(&target, &store, &index, k, delta);
    println!("window [{}, {}) top-{k}:", target.day - delta, target.day);
    for (id, score) in result.context_ids.iter().zip(&result.scores) {
        println!("  {id}  {score:.4}");
    }
    Ok(result)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    context_retrieval(3, 7)?;
    Ok(())
}
