//! Decision contexts: candidate lists and sparse feature extraction.
//!
//! [`AgentState`] is the deterministic bookkeeping a rollout keeps
//! about (query, plan, observations so far): which facts have been
//! seen, which chain hops are already resolved, what the current
//! frontier entity is. Every decision point asks the state for a
//! [`ContextFeatures`]: the legal token set plus the sparse feature
//! vector the policy scores against.
//!
//! Feature layout: a small block of global context features, then one
//! 8-feature block per candidate slot. Slot blocks are shared across
//! pick families; the family determines what each slot feature means.

use std::collections::BTreeSet;

use super::vocab::{self, TokenId, Vocabulary, NUM_SLOTS};
use super::{ContextFeatures, PolicyParams};
use crate::env::{parse_query, Fact};

// global context features
pub const F_BIAS: usize = 0;
pub const F_STEP_FRAC: usize = 1;
pub const F_BUDGET_LEFT: usize = 2;
pub const F_QUERY_HOPS: usize = 3; // + (h-1), h in 1..=4
pub const F_SUBGOAL: usize = 7; // + g, g in 0..=3 (plan decisions)
pub const F_RESOLVED: usize = 11; // + min(resolved, 3)
pub const F_PROGRESS: usize = 15;
pub const F_OBS_RESULTS: usize = 16;
pub const F_OBS_PAGE: usize = 17;
pub const F_FACTS_SEEN: usize = 18;
pub const F_ALL_RESOLVED: usize = 19;
pub const F_HAVE_UNRESOLVED: usize = 20;
pub const F_PLAN_NOM_SEARCH: usize = 21;
pub const F_PLAN_NOM_VISIT: usize = 22;
pub const F_PLAN_MATCHES_HOPS: usize = 23;
/// The latest observation advanced the resolved-hop count.
pub const F_OBS_ADVANCED: usize = 24;

// per-slot features
pub const SLOT_BASE: usize = 25;
pub const SLOT_FEATS: usize = 8;
pub const SF_PRESENT: usize = 0;
/// Family-specific main alignment signal: the relation the chain needs
/// now, the frontier entity, the top-ranked result, or the
/// chain-completing answer value.
pub const SF_PRIMARY: usize = 1;
/// Candidate equals the plan's constraint for the current sub-goal.
pub const SF_PLAN_PICK: usize = 2;
pub const SF_QUERY_TERM: usize = 3;
pub const SF_IN_LAST_OBS: usize = 4;
pub const SF_FRESH: usize = 5;
pub const SF_USED: usize = 6;
/// Secondary family signal: result title equals the frontier entity,
/// or the value's source-fact relation equals the final query relation.
pub const SF_EXTRA: usize = 7;

pub const FEATURE_DIM: usize = SLOT_BASE + NUM_SLOTS * SLOT_FEATS;

pub fn slot_feature(slot: usize, offset: usize) -> usize {
    SLOT_BASE + slot * SLOT_FEATS + offset
}

/// Fallback answer candidate; always legal, never correct.
pub const UNKNOWN_ANSWER: &str = "unknown";

/// Plan choices as picked during the plan phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanInfo {
    pub claimed: usize,
    pub constraints: Vec<String>,
    pub tools: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRef {
    pub page_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum LastObs {
    #[default]
    None,
    Results(Vec<ResultRef>),
    Page {
        links: Vec<String>,
    },
    NotFound,
}

fn is_page_id(word: &str) -> bool {
    word.len() >= 2
        && word.starts_with('p')
        && word[1..].chars().all(|c| c.is_ascii_digit())
}

/// Parses an observation into structured form plus any fact sentences
/// it revealed. Inverse of the environment's rendering.
pub fn parse_observation(text: &str) -> (LastObs, Vec<Fact>) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return (LastObs::None, Vec::new());
    }
    let chunks: Vec<&[&str]> = words.split(|w| *w == ".").collect();
    match words[0] {
        "results" => {
            if words.get(2) == Some(&"none") {
                return (LastObs::Results(Vec::new()), Vec::new());
            }
            let mut refs = Vec::new();
            let mut facts = Vec::new();
            for chunk in &chunks {
                let Some(pid_at) = chunk.iter().position(|w| is_page_id(w)) else {
                    continue;
                };
                let Some(title) = chunk.get(pid_at + 1) else {
                    continue;
                };
                refs.push(ResultRef {
                    page_id: chunk[pid_at].to_string(),
                    title: title.to_string(),
                });
                // snippet fact follows the second colon, when present
                if let Some(colon) = chunk[pid_at..].iter().position(|w| *w == ":") {
                    let rest = &chunk[pid_at + colon + 1..];
                    if rest.len() == 3 {
                        facts.push(Fact {
                            subject: rest[0].to_string(),
                            relation: rest[1].to_string(),
                            object: rest[2].to_string(),
                        });
                    }
                }
            }
            (LastObs::Results(refs), facts)
        }
        "page" => {
            let mut facts = Vec::new();
            let mut links = Vec::new();
            for chunk in &chunks {
                if chunk.first() == Some(&"links") {
                    links.extend(
                        chunk
                            .iter()
                            .filter(|w| is_page_id(w))
                            .map(|w| w.to_string()),
                    );
                } else if chunk.len() == 3 && chunk[0] != "page" {
                    facts.push(Fact {
                        subject: chunk[0].to_string(),
                        relation: chunk[1].to_string(),
                        object: chunk[2].to_string(),
                    });
                }
            }
            (LastObs::Page { links }, facts)
        }
        _ => (LastObs::NotFound, Vec::new()),
    }
}

/// Deterministic rollout bookkeeping; a pure function of
/// (query, plan so far, observations so far).
#[derive(Debug, Clone)]
pub struct AgentState {
    pub seed_entity: String,
    pub query_relations: Vec<String>,
    /// Relation vocabulary of the corpus, used for plan distractor
    /// candidates.
    pub relation_pool: Vec<String>,
    pub max_steps: usize,
    pub step_index: usize,
    pub plan: PlanInfo,
    seen_facts: Vec<Fact>,
    fresh_start: usize,
    last_obs: LastObs,
    searched: BTreeSet<(String, String)>,
    visited: BTreeSet<String>,
    pub resolved: usize,
    pub frontier: String,
    pub chain_answer: Option<String>,
    obs_advanced: bool,
}

impl AgentState {
    pub fn new(query_text: &str, relation_pool: &[String], max_steps: usize) -> Self {
        let (seed_entity, query_relations) = parse_query(query_text).unwrap_or_else(|| {
            let first = query_text.split_whitespace().next().unwrap_or("").to_string();
            (first, Vec::new())
        });
        let frontier = seed_entity.clone();
        Self {
            seed_entity,
            query_relations,
            relation_pool: relation_pool.to_vec(),
            max_steps,
            step_index: 0,
            plan: PlanInfo::default(),
            seen_facts: Vec::new(),
            fresh_start: 0,
            last_obs: LastObs::None,
            searched: BTreeSet::new(),
            visited: BTreeSet::new(),
            resolved: 0,
            frontier,
            chain_answer: None,
            obs_advanced: false,
        }
    }

    pub fn hops(&self) -> usize {
        self.query_relations.len()
    }

    pub fn note_search(&mut self, entity: &str, relation: &str) {
        self.searched
            .insert((entity.to_string(), relation.to_string()));
    }

    pub fn note_visit(&mut self, page_id: &str) {
        self.visited.insert(page_id.to_string());
    }

    /// Ingest an observation: parse it, extend the seen-fact list, and
    /// re-derive chain progress.
    pub fn observe(&mut self, text: &str) {
        let (obs, facts) = parse_observation(text);
        self.fresh_start = self.seen_facts.len();
        for fact in facts {
            if !self.seen_facts.contains(&fact) {
                self.seen_facts.push(fact);
            }
        }
        self.last_obs = obs;
        let before = self.resolved;
        self.recompute_chain();
        self.obs_advanced = self.resolved > before;
    }

    /// Re-walk the query chain over the seen facts: how many hops are
    /// resolved, what entity is the current frontier, and (once all
    /// hops resolve) which object completes the chain.
    fn recompute_chain(&mut self) {
        self.resolved = 0;
        self.frontier = self.seed_entity.clone();
        self.chain_answer = None;
        for relation in self.query_relations.clone() {
            let found = self
                .seen_facts
                .iter()
                .find(|f| f.subject == self.frontier && f.relation == relation)
                .map(|f| f.object.clone());
            match found {
                Some(object) => {
                    self.resolved += 1;
                    if self.resolved == self.hops() {
                        self.chain_answer = Some(object.clone());
                    }
                    self.frontier = object;
                }
                None => break,
            }
        }
    }

    fn first_seen_fresh(&self, object: &str) -> bool {
        let earlier = self.seen_facts[..self.fresh_start]
            .iter()
            .any(|f| f.object == object);
        let now = self.seen_facts[self.fresh_start..]
            .iter()
            .any(|f| f.object == object);
        now && !earlier
    }

    fn in_last_obs_word(&self, word: &str) -> bool {
        match &self.last_obs {
            LastObs::Results(refs) => {
                refs.iter().any(|r| r.title == word || r.page_id == word)
                    || self.seen_facts[self.fresh_start..]
                        .iter()
                        .any(|f| f.subject == word || f.relation == word || f.object == word)
            }
            LastObs::Page { links } => {
                links.iter().any(|l| l == word)
                    || self.seen_facts[self.fresh_start..]
                        .iter()
                        .any(|f| f.subject == word || f.relation == word || f.object == word)
            }
            _ => false,
        }
    }

    // ---- candidate lists -------------------------------------------------

    /// Relation candidates: the query's relations, two corpus
    /// distractor relations, and (for the executor) the plan's own
    /// picks, in a deterministic per-query shuffle. The shuffle keeps
    /// slot position from leaking resolution order across queries, so
    /// the plan's committed constraint is the executor's only reliable
    /// per-slot signal, and a bad plan pollutes the executor's search
    /// space.
    pub fn rel_candidates(&self, for_plan: bool) -> Vec<String> {
        let mut cands: Vec<String> = self.query_relations.clone();
        if !for_plan {
            for c in &self.plan.constraints {
                if !cands.contains(c) {
                    cands.push(c.clone());
                }
            }
        }
        let mut extras = 0;
        for r in &self.relation_pool {
            if extras == 2 {
                break;
            }
            if !cands.contains(r) {
                cands.push(r.clone());
                extras += 1;
            }
        }
        let query_key = crate::rng::hash_label(&self.seed_entity)
            ^ crate::rng::hash_label(self.query_relations.join(" ").as_str());
        cands.sort_by_key(|w| crate::rng::derive_seed(query_key, w, &[]));
        cands.truncate(NUM_SLOTS);
        cands
    }

    /// Entity candidates: the seed entity, then fact objects newest
    /// first.
    pub fn ent_candidates(&self) -> Vec<String> {
        let mut cands = vec![self.seed_entity.clone()];
        for fact in self.seen_facts.iter().rev() {
            if !cands.contains(&fact.object) {
                cands.push(fact.object.clone());
            }
            if cands.len() == NUM_SLOTS {
                break;
            }
        }
        cands
    }

    /// Page candidates come from the latest observation only: result
    /// hits in rank order, or the links of the visited page.
    pub fn page_candidates(&self) -> Vec<String> {
        let mut cands = Vec::new();
        match &self.last_obs {
            LastObs::Results(refs) => {
                cands.extend(refs.iter().map(|r| r.page_id.clone()));
            }
            LastObs::Page { links } => cands.extend(links.iter().cloned()),
            _ => {}
        }
        cands.dedup();
        cands.truncate(NUM_SLOTS);
        cands
    }

    /// Answer candidates: the fallback word, then fact objects newest
    /// first.
    pub fn val_candidates(&self) -> Vec<String> {
        let mut cands = vec![UNKNOWN_ANSWER.to_string()];
        for fact in self.seen_facts.iter().rev() {
            if !cands.contains(&fact.object) {
                cands.push(fact.object.clone());
            }
            if cands.len() == NUM_SLOTS {
                break;
            }
        }
        cands
    }

    fn result_title(&self, page_id: &str) -> Option<&str> {
        match &self.last_obs {
            LastObs::Results(refs) => refs
                .iter()
                .find(|r| r.page_id == page_id)
                .map(|r| r.title.as_str()),
            _ => None,
        }
    }

    // ---- feature extraction ----------------------------------------------

    fn base_features(&self, subgoal: Option<usize>) -> Vec<(usize, f64)> {
        let mut f = vec![(F_BIAS, 1.0)];
        let frac = self.step_index as f64 / self.max_steps.max(1) as f64;
        f.push((F_STEP_FRAC, frac));
        f.push((F_BUDGET_LEFT, 1.0 - frac));
        let hops = self.hops();
        if (1..=4).contains(&hops) {
            f.push((F_QUERY_HOPS + hops - 1, 1.0));
        }
        if let Some(g) = subgoal {
            f.push((F_SUBGOAL + g.min(3), 1.0));
        }
        f.push((F_RESOLVED + self.resolved.min(3), 1.0));
        if hops > 0 {
            f.push((F_PROGRESS, self.resolved as f64 / hops as f64));
        }
        match &self.last_obs {
            LastObs::Results(_) => f.push((F_OBS_RESULTS, 1.0)),
            LastObs::Page { .. } => f.push((F_OBS_PAGE, 1.0)),
            _ => {}
        }
        if !self.seen_facts.is_empty() {
            f.push((F_FACTS_SEEN, (self.seen_facts.len() as f64 / 8.0).min(1.0)));
        }
        if hops > 0 && self.resolved >= hops {
            f.push((F_ALL_RESOLVED, 1.0));
        } else {
            f.push((F_HAVE_UNRESOLVED, 1.0));
        }
        if self.obs_advanced {
            f.push((F_OBS_ADVANCED, 1.0));
        }
        if self.plan.claimed > 0 {
            let g = self.resolved.min(self.plan.claimed - 1);
            match self.plan.tools.get(g) {
                Some(&vocab::NOM_SEARCH) => f.push((F_PLAN_NOM_SEARCH, 1.0)),
                Some(&vocab::NOM_VISIT) => f.push((F_PLAN_NOM_VISIT, 1.0)),
                _ => {}
            }
            if self.plan.claimed == hops {
                f.push((F_PLAN_MATCHES_HOPS, 1.0));
            }
        }
        f
    }

    pub fn plan_count_ctx(&self) -> ContextFeatures {
        let legal = (1..=4).map(Vocabulary::count_token).collect();
        ContextFeatures::new(self.base_features(Some(0)), legal)
    }

    pub fn plan_style_ctx(&self, subgoal: usize) -> ContextFeatures {
        ContextFeatures::new(
            self.base_features(Some(subgoal)),
            vec![vocab::STYLE_FIND, vocab::STYLE_CONSIDER],
        )
    }

    pub fn plan_rel_ctx(&self, subgoal: usize) -> ContextFeatures {
        let cands = self.rel_candidates(true);
        let mut f = self.base_features(Some(subgoal));
        for (s, cand) in cands.iter().enumerate() {
            f.push((slot_feature(s, SF_PRESENT), 1.0));
            if self.query_relations.get(subgoal) == Some(cand) {
                f.push((slot_feature(s, SF_PRIMARY), 1.0));
            }
            if self.query_relations.contains(cand) {
                f.push((slot_feature(s, SF_QUERY_TERM), 1.0));
            }
            if self.plan.constraints.contains(cand) {
                f.push((slot_feature(s, SF_USED), 1.0));
            }
        }
        let legal = (0..cands.len()).map(Vocabulary::rel_slot).collect();
        ContextFeatures::new(f, legal)
    }

    pub fn plan_tool_ctx(&self, subgoal: usize) -> ContextFeatures {
        ContextFeatures::new(
            self.base_features(Some(subgoal)),
            vec![vocab::NOM_SEARCH, vocab::NOM_VISIT, vocab::NOM_ANSWER],
        )
    }

    pub fn action_kind_ctx(&self) -> ContextFeatures {
        let mut legal = Vec::new();
        if !self.ent_candidates().is_empty() && !self.rel_candidates(false).is_empty() {
            legal.push(vocab::ACT_SEARCH);
        }
        if !self.page_candidates().is_empty() {
            legal.push(vocab::ACT_VISIT);
        }
        legal.push(vocab::ACT_ANSWER);
        ContextFeatures::new(self.base_features(None), legal)
    }

    /// Entity choice leans on the deterministic frontier tracking; no
    /// recency channels, so the policy cannot learn to wander off the
    /// chain.
    pub fn search_ent_ctx(&self) -> ContextFeatures {
        let cands = self.ent_candidates();
        let mut f = self.base_features(None);
        for (s, cand) in cands.iter().enumerate() {
            f.push((slot_feature(s, SF_PRESENT), 1.0));
            if *cand == self.frontier {
                f.push((slot_feature(s, SF_PRIMARY), 1.0));
            }
            if *cand == self.seed_entity {
                f.push((slot_feature(s, SF_QUERY_TERM), 1.0));
            }
        }
        let legal = (0..cands.len()).map(Vocabulary::ent_slot).collect();
        ContextFeatures::new(f, legal)
    }

    /// Relation choice is bound to the committed plan: the constraint
    /// for the current sub-goal is the only discriminative signal, so
    /// execution stays aligned with the plan it anchored on.
    pub fn search_rel_ctx(&self) -> ContextFeatures {
        let cands = self.rel_candidates(false);
        let mut f = self.base_features(None);
        let plan_current = self.plan.constraints.get(self.resolved);
        for (s, cand) in cands.iter().enumerate() {
            f.push((slot_feature(s, SF_PRESENT), 1.0));
            if plan_current == Some(cand) {
                f.push((slot_feature(s, SF_PLAN_PICK), 1.0));
            }
        }
        let legal = (0..cands.len()).map(Vocabulary::rel_slot).collect();
        ContextFeatures::new(f, legal)
    }

    pub fn visit_page_ctx(&self) -> ContextFeatures {
        let cands = self.page_candidates();
        let mut f = self.base_features(None);
        let top = match &self.last_obs {
            LastObs::Results(refs) => refs.first().map(|r| r.page_id.clone()),
            _ => None,
        };
        for (s, cand) in cands.iter().enumerate() {
            f.push((slot_feature(s, SF_PRESENT), 1.0));
            if top.as_deref() == Some(cand.as_str()) {
                f.push((slot_feature(s, SF_PRIMARY), 1.0));
            }
            if self.in_last_obs_word(cand) {
                f.push((slot_feature(s, SF_IN_LAST_OBS), 1.0));
            }
            if self.visited.contains(cand) {
                f.push((slot_feature(s, SF_USED), 1.0));
            }
            if self.result_title(cand) == Some(self.frontier.as_str()) {
                f.push((slot_feature(s, SF_EXTRA), 1.0));
            }
        }
        let legal = (0..cands.len()).map(Vocabulary::page_slot).collect();
        ContextFeatures::new(f, legal)
    }

    pub fn answer_val_ctx(&self) -> ContextFeatures {
        let cands = self.val_candidates();
        let mut f = self.base_features(None);
        let final_rel = self.query_relations.last();
        for (s, cand) in cands.iter().enumerate() {
            f.push((slot_feature(s, SF_PRESENT), 1.0));
            if self.chain_answer.as_deref() == Some(cand.as_str()) {
                f.push((slot_feature(s, SF_PRIMARY), 1.0));
            }
            if self.in_last_obs_word(cand) {
                f.push((slot_feature(s, SF_IN_LAST_OBS), 1.0));
            }
            if self.first_seen_fresh(cand) {
                f.push((slot_feature(s, SF_FRESH), 1.0));
            }
            let source_rel = self
                .seen_facts
                .iter()
                .rev()
                .find(|fact| fact.object == *cand)
                .map(|fact| &fact.relation);
            if source_rel.is_some() && source_rel.map(|r| Some(r) == final_rel).unwrap_or(false) {
                f.push((slot_feature(s, SF_EXTRA), 1.0));
            }
        }
        let legal = (0..cands.len()).map(Vocabulary::val_slot).collect();
        ContextFeatures::new(f, legal)
    }
}

/// Heuristic tool-use priors: the stand-in for the pretrained base
/// policy. Plan decisions get no priors; Stage 1 has to learn them.
pub fn apply_executor_priors(params: &mut PolicyParams) {
    let mut set = |f: usize, t: TokenId, w: f64| {
        *params.weight_mut(f, t) += w;
    };
    set(F_OBS_RESULTS, vocab::ACT_VISIT, 3.4);
    set(F_ALL_RESOLVED, vocab::ACT_ANSWER, 4.4);
    set(F_HAVE_UNRESOLVED, vocab::ACT_SEARCH, 1.6);
    set(F_OBS_PAGE, vocab::ACT_SEARCH, 1.4);
    set(F_HAVE_UNRESOLVED, vocab::ACT_ANSWER, -2.2);
    set(F_STEP_FRAC, vocab::ACT_ANSWER, 0.6);
    set(F_PROGRESS, vocab::ACT_ANSWER, 0.3);
    set(F_FACTS_SEEN, vocab::ACT_SEARCH, -0.5);
    set(F_OBS_ADVANCED, vocab::ACT_SEARCH, 1.2);
    set(F_OBS_ADVANCED, vocab::ACT_VISIT, -0.8);
    set(F_PLAN_NOM_SEARCH, vocab::ACT_SEARCH, 0.4);
    set(F_PLAN_NOM_VISIT, vocab::ACT_VISIT, 0.4);
    for s in 0..NUM_SLOTS {
        // relation picks: trust the plan; query membership is a weak
        // fallback and repeats are discouraged
        set(slot_feature(s, SF_PLAN_PICK), Vocabulary::rel_slot(s), 3.5);
        set(slot_feature(s, SF_QUERY_TERM), Vocabulary::rel_slot(s), 0.2);
        // entity picks: search the frontier
        set(slot_feature(s, SF_PRIMARY), Vocabulary::ent_slot(s), 3.4);
        set(slot_feature(s, SF_QUERY_TERM), Vocabulary::ent_slot(s), 0.3);
        // page picks: matching title first, then rank, never revisits
        set(slot_feature(s, SF_PRIMARY), Vocabulary::page_slot(s), 0.6);
        set(slot_feature(s, SF_EXTRA), Vocabulary::page_slot(s), 4.0);
        set(slot_feature(s, SF_FRESH), Vocabulary::page_slot(s), 0.5);
        set(slot_feature(s, SF_USED), Vocabulary::page_slot(s), -2.0);
        // answer picks: the chain-completing value
        set(slot_feature(s, SF_PRIMARY), Vocabulary::val_slot(s), 3.8);
        set(slot_feature(s, SF_EXTRA), Vocabulary::val_slot(s), 0.8);
        set(slot_feature(s, SF_FRESH), Vocabulary::val_slot(s), 0.3);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUERY: &str = "Starting from Velora , follow capital , then follow hue . What do you reach ?";

    fn pool() -> Vec<String> {
        ["capital", "founder", "ally", "hue"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn parse_results_observation() {
        let (obs, facts) = parse_observation(
            "results : p003 Velora : Velora capital Kintar . p044 Brimos : Brimos ally Velora .",
        );
        match obs {
            LastObs::Results(refs) => {
                assert_eq!(refs.len(), 2);
                assert_eq!(refs[0].page_id, "p003");
                assert_eq!(refs[0].title, "Velora");
            }
            other => panic!("expected results, got {other:?}"),
        }
        assert_eq!(facts.len(), 2);
        assert_eq!(facts[0].object, "Kintar");
    }

    #[test]
    fn parse_page_observation() {
        let (obs, facts) = parse_observation(
            "page p003 Velora . Velora capital Kintar . Velora hue silver . links : p004 p009",
        );
        match obs {
            LastObs::Page { links } => assert_eq!(links, vec!["p004", "p009"]),
            other => panic!("expected page, got {other:?}"),
        }
        assert_eq!(facts.len(), 2);
    }

    #[test]
    fn parse_not_found_observation() {
        let (obs, facts) = parse_observation("no page found for p999");
        assert_eq!(obs, LastObs::NotFound);
        assert!(facts.is_empty());
    }

    #[test]
    fn chain_progress_tracks_resolved_hops() {
        let mut state = AgentState::new(QUERY, &pool(), 8);
        assert_eq!(state.hops(), 2);
        assert_eq!(state.frontier, "Velora");
        state.observe("page p003 Velora . Velora capital Kintar . links : p004");
        assert_eq!(state.resolved, 1);
        assert_eq!(state.frontier, "Kintar");
        assert_eq!(state.chain_answer, None);
        state.observe("page p004 Kintar . Kintar hue ossmor . links : p003");
        assert_eq!(state.resolved, 2);
        assert_eq!(state.chain_answer.as_deref(), Some("ossmor"));
    }

    #[test]
    fn first_step_legal_actions_are_search_and_answer() {
        let state = AgentState::new(QUERY, &pool(), 8);
        let ctx = state.action_kind_ctx();
        assert_eq!(ctx.legal, vec![vocab::ACT_SEARCH, vocab::ACT_ANSWER]);
    }

    #[test]
    fn visit_becomes_legal_after_results() {
        let mut state = AgentState::new(QUERY, &pool(), 8);
        state.observe("results : p003 Velora : Velora capital Kintar .");
        let ctx = state.action_kind_ctx();
        assert!(ctx.legal.contains(&vocab::ACT_VISIT));
    }

    #[test]
    fn plan_rel_candidates_add_two_distractors() {
        let state = AgentState::new(QUERY, &pool(), 8);
        let mut cands = state.rel_candidates(true);
        // order is a per-query shuffle but deterministic
        assert_eq!(cands, state.rel_candidates(true));
        cands.sort();
        assert_eq!(cands, vec!["ally", "capital", "founder", "hue"]);
    }

    #[test]
    fn executor_rel_candidates_include_plan_junk() {
        let mut state = AgentState::new(QUERY, &pool(), 8);
        state.plan = PlanInfo {
            claimed: 2,
            constraints: vec!["ally".into(), "capital".into()],
            tools: vec![vocab::NOM_SEARCH, vocab::NOM_SEARCH],
        };
        let mut cands = state.rel_candidates(false);
        cands.sort();
        // query relations, the plan's junk pick, and corpus distractors
        assert_eq!(cands, vec!["ally", "capital", "founder", "hue"]);
    }

    #[test]
    fn answer_candidates_always_include_fallback() {
        let state = AgentState::new(QUERY, &pool(), 8);
        assert_eq!(state.val_candidates(), vec![UNKNOWN_ANSWER]);
        let ctx = state.answer_val_ctx();
        assert_eq!(ctx.legal.len(), 1);
    }

    #[test]
    fn feature_indices_stay_in_bounds() {
        let mut state = AgentState::new(QUERY, &pool(), 8);
        state.plan = PlanInfo {
            claimed: 2,
            constraints: vec!["capital".into(), "hue".into()],
            tools: vec![vocab::NOM_SEARCH, vocab::NOM_VISIT],
        };
        state.observe("results : p003 Velora : Velora capital Kintar .");
        state.observe("page p003 Velora . Velora capital Kintar . links : p004");
        for ctx in [
            state.plan_count_ctx(),
            state.plan_style_ctx(1),
            state.plan_rel_ctx(1),
            state.plan_tool_ctx(1),
            state.action_kind_ctx(),
            state.search_ent_ctx(),
            state.search_rel_ctx(),
            state.visit_page_ctx(),
            state.answer_val_ctx(),
        ] {
            for (f, v) in &ctx.values {
                assert!(*f < FEATURE_DIM);
                assert!(v.is_finite());
            }
            for t in &ctx.legal {
                assert!((*t as usize) < vocab::VOCAB_SIZE);
            }
        }
    }
}
