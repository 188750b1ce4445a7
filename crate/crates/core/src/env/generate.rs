//! Seeded corpus and task generation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, EnvError, Fact, TaskInstance, WikiPage};
use crate::rng;
use crate::trajectory::Query;

/// Relation vocabulary pool; a corpus uses the first `n_relations`.
const RELATION_POOL: [&str; 12] = [
    "capital", "founder", "ally", "rival", "emblem", "hue", "motto", "origin", "patron", "craft",
    "relic", "steward",
];

const SYLLABLES: [&str; 20] = [
    "ka", "ve", "lo", "ra", "tin", "mor", "sel", "dra", "quin", "tal", "bry", "os", "ner", "ful",
    "gar", "wex", "zhu", "pel", "arn", "ost",
];

/// Words with structural meaning in observations, queries, and plans;
/// generated names must avoid them so term overlap stays meaningful.
const RESERVED: [&str; 24] = [
    "page", "links", "results", "none", "no", "found", "for", "starting", "from", "follow",
    "then", "what", "do", "you", "reach", "goals", "find", "consider", "via", "search", "visit",
    "answer", "hop", "unknown",
];

/// Corpus generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub n_pages: usize,
    pub n_relations: usize,
    /// Entity-valued facts (outgoing links) per page.
    pub branching: usize,
}

impl GenParams {
    pub fn new(n_pages: usize, n_relations: usize, branching: usize) -> Self {
        Self {
            n_pages,
            n_relations,
            branching,
        }
    }

    fn validate(&self) -> Result<(), EnvError> {
        if self.n_pages < 2 {
            return Err(EnvError::ParamOutOfRange(format!(
                "n_pages must be >= 2, got {}",
                self.n_pages
            )));
        }
        if !(1..=4).contains(&self.branching) {
            return Err(EnvError::ParamOutOfRange(format!(
                "branching must be in 1..=4, got {}",
                self.branching
            )));
        }
        // each page needs branching entity facts + 2 value facts with
        // distinct relations
        let needed = self.branching + 2;
        if self.n_relations < needed || self.n_relations > RELATION_POOL.len() {
            return Err(EnvError::ParamOutOfRange(format!(
                "n_relations must be in {}..={}, got {}",
                needed,
                RELATION_POOL.len(),
                self.n_relations
            )));
        }
        Ok(())
    }
}

fn fresh_word(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>, capitalize: bool) -> String {
    for attempt in 0..200 {
        let syllables = if attempt < 50 { rng.gen_range(2..=3) } else { 4 };
        let mut word = String::new();
        for _ in 0..syllables {
            word.push_str(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]);
        }
        if used.contains(&word) || RESERVED.contains(&word.as_str()) {
            continue;
        }
        used.insert(word.clone());
        if capitalize {
            let mut chars = word.chars();
            let first = chars.next().unwrap().to_ascii_uppercase();
            return std::iter::once(first).chain(chars).collect();
        }
        return word;
    }
    unreachable!("word space exhausted");
}

/// Generates a deterministic corpus: same arguments, same corpus.
///
/// Every page gets `branching` entity facts (rendered as links) and two
/// value facts whose objects are unique corpus-wide. A fix-up pass adds
/// one extra fact per orphan page so every page is reachable from at
/// least one other page's links.
pub fn generate_corpus(seed: u64, params: &GenParams) -> Result<Corpus, EnvError> {
    params.validate()?;
    let mut rng = rng::stream(seed, "corpus", &[]);
    let n = params.n_pages;
    let relations: Vec<String> = RELATION_POOL[..params.n_relations]
        .iter()
        .map(|r| r.to_string())
        .collect();

    let mut used = BTreeSet::new();
    for r in &relations {
        used.insert(r.clone());
    }
    let titles: Vec<String> = (0..n).map(|_| fresh_word(&mut rng, &mut used, true)).collect();
    let width = if n <= 1000 { 3 } else { 4 };
    let ids: Vec<String> = (0..n).map(|i| format!("p{i:0width$}")).collect();

    let mut pages: Vec<WikiPage> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rel_order: Vec<usize> = (0..relations.len()).collect();
        rel_order.shuffle(&mut rng);

        let mut targets: Vec<usize> = Vec::new();
        for _ in 0..params.branching {
            for _ in 0..20 {
                let t = rng.gen_range(0..n);
                if t != i && !targets.contains(&t) {
                    targets.push(t);
                    break;
                }
            }
        }

        let mut facts = Vec::new();
        let mut links = Vec::new();
        for (slot, &t) in targets.iter().enumerate() {
            facts.push(Fact {
                subject: titles[i].clone(),
                relation: relations[rel_order[slot]].clone(),
                object: titles[t].clone(),
            });
            links.push(ids[t].clone());
        }
        for slot in 0..2 {
            let value = fresh_word(&mut rng, &mut used, false);
            facts.push(Fact {
                subject: titles[i].clone(),
                relation: relations[rel_order[targets.len() + slot]].clone(),
                object: value,
            });
        }
        pages.push(WikiPage {
            page_id: ids[i].clone(),
            title: titles[i].clone(),
            facts,
            links,
        });
    }

    // reachability fix-up: give every orphan page one incoming link
    let mut indegree = vec![0usize; n];
    let id_index: BTreeMap<String, usize> = ids.iter().cloned().zip(0..n).collect();
    for page in &pages {
        for link in &page.links {
            indegree[id_index[link]] += 1;
        }
    }
    for i in 0..n {
        if indegree[i] > 0 {
            continue;
        }
        let mut donated = false;
        for offset in 1..n {
            let d = (i + offset) % n;
            if d == i || pages[d].links.contains(&ids[i]) {
                continue;
            }
            let used_rels: BTreeSet<&str> =
                pages[d].facts.iter().map(|f| f.relation.as_str()).collect();
            if let Some(rel) = relations.iter().find(|r| !used_rels.contains(r.as_str())) {
                let fact = Fact {
                    subject: titles[d].clone(),
                    relation: rel.clone(),
                    object: titles[i].clone(),
                };
                pages[d].facts.push(fact);
                pages[d].links.push(ids[i].clone());
                indegree[i] += 1;
                donated = true;
                break;
            }
        }
        if !donated {
            return Err(EnvError::ParamOutOfRange(
                "could not satisfy reachability; raise n_relations".to_string(),
            ));
        }
    }

    Ok(Corpus::from_pages(seed, pages, relations))
}

/// Samples a planted `hops`-hop task from the corpus.
///
/// The chain follows entity facts for `hops - 1` steps and ends on a
/// value fact; the value is unique corpus-wide by construction, so the
/// task's gold answer appears on the last hop page only.
pub fn generate_task(corpus: &Corpus, hops: usize, seed: u64) -> Result<TaskInstance, EnvError> {
    if !(1..=4).contains(&hops) {
        return Err(EnvError::ParamOutOfRange(format!(
            "hops must be in 1..=4, got {hops}"
        )));
    }
    let mut rng = rng::stream(seed, "task", &[hops as u64]);
    let ids: Vec<&String> = corpus.pages.keys().collect();
    let title_to_id: BTreeMap<&str, &str> = corpus
        .pages
        .values()
        .map(|p| (p.title.as_str(), p.page_id.as_str()))
        .collect();

    'attempt: for _ in 0..2000 {
        let mut chain: Vec<String> = vec![ids[rng.gen_range(0..ids.len())].clone()];
        let mut relations: Vec<String> = Vec::with_capacity(hops);
        for _ in 1..hops {
            let page = &corpus.pages[chain.last().unwrap()];
            let entity_facts: Vec<&Fact> = page
                .facts
                .iter()
                .filter(|f| title_to_id.contains_key(f.object.as_str()))
                .collect();
            if entity_facts.is_empty() {
                continue 'attempt;
            }
            let fact = entity_facts[rng.gen_range(0..entity_facts.len())];
            let next_id = title_to_id[fact.object.as_str()].to_string();
            if chain.contains(&next_id) {
                continue 'attempt;
            }
            relations.push(fact.relation.clone());
            chain.push(next_id);
        }
        let last = &corpus.pages[chain.last().unwrap()];
        let value_facts: Vec<&Fact> = last
            .facts
            .iter()
            .filter(|f| !title_to_id.contains_key(f.object.as_str()))
            .collect();
        if value_facts.is_empty() {
            continue 'attempt;
        }
        let fact = value_facts[rng.gen_range(0..value_facts.len())];
        relations.push(fact.relation.clone());
        let gold = fact.object.clone();

        let start_title = corpus.pages[&chain[0]].title.clone();
        let mut text = format!("Starting from {start_title} , follow {}", relations[0]);
        for r in &relations[1..] {
            text.push_str(&format!(" , then follow {r}"));
        }
        text.push_str(" . What do you reach ?");

        return Ok(TaskInstance {
            query: Query {
                id: format!("task-{seed:016x}"),
                text,
                gold_answer: gold,
            },
            hop_chain: chain,
            hops,
        });
    }
    Err(EnvError::NoValidChain { hops })
}
