//! Deterministic feature judge: a rule table over measurable plan
//! properties. Pure function of (query text, plan text, dimension), so
//! training and CI runs are exactly reproducible.

use super::RubricDimension;
use crate::env::parse_query;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureJudgeConfig {
    /// Tool names considered valid nominations.
    pub tools: Vec<String>,
}

impl Default for FeatureJudgeConfig {
    fn default() -> Self {
        Self {
            tools: vec!["search".to_string(), "visit".to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SubGoal {
    style: String,
    relation: String,
    tool: String,
}

/// Measurable facts extracted from one (query, plan) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFacts {
    pub hops: usize,
    query_relations: Vec<String>,
    claimed: usize,
    subgoals: Vec<SubGoal>,
    pub word_count: usize,
}

impl PlanFacts {
    pub fn extract(query_text: &str, plan: &str) -> Self {
        let (_, query_relations) = parse_query(query_text).unwrap_or_default();
        let words: Vec<&str> = plan.split_whitespace().collect();
        let mut claimed = 0;
        let mut subgoals = Vec::new();
        if words.first() == Some(&"goals") {
            claimed = words.get(1).and_then(|w| w.parse().ok()).unwrap_or(0);
            // sub-goal lines are 4 words: <style> <relation> via <tool>
            for chunk in words[2..].chunks(4) {
                if let [style, relation, "via", tool] = chunk {
                    subgoals.push(SubGoal {
                        style: style.to_string(),
                        relation: relation.to_string(),
                        tool: tool.to_string(),
                    });
                }
            }
        }
        Self {
            hops: query_relations.len(),
            query_relations,
            claimed,
            subgoals,
            word_count: words.len(),
        }
    }

    /// Fraction of named constraints that are real query relations.
    pub fn alignment(&self) -> f64 {
        if self.subgoals.is_empty() {
            return 0.0;
        }
        let valid = self
            .subgoals
            .iter()
            .filter(|s| self.query_relations.contains(&s.relation))
            .count();
        valid as f64 / self.subgoals.len() as f64
    }

    /// Fraction of the query's hops covered by a distinct constraint.
    pub fn coverage(&self) -> f64 {
        if self.hops == 0 {
            return 0.0;
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.subgoals {
            if self.query_relations.contains(&s.relation) {
                seen.insert(s.relation.clone());
            }
        }
        seen.len() as f64 / self.hops as f64
    }

    /// Fraction of adjacent valid constraints in resolution order.
    fn ordering(&self) -> f64 {
        let indices: Vec<usize> = self
            .subgoals
            .iter()
            .filter_map(|s| self.query_relations.iter().position(|r| *r == s.relation))
            .collect();
        match indices.len() {
            0 => 0.0,
            1 => 1.0,
            n => {
                let ordered = indices.windows(2).filter(|w| w[0] < w[1]).count();
                ordered as f64 / (n - 1) as f64
            }
        }
    }

    fn tool_validity(&self, cfg: &FeatureJudgeConfig) -> f64 {
        if self.subgoals.is_empty() {
            return 0.0;
        }
        let valid = self
            .subgoals
            .iter()
            .filter(|s| cfg.tools.contains(&s.tool))
            .count();
        valid as f64 / self.subgoals.len() as f64
    }

    fn imperative_ratio(&self) -> f64 {
        if self.subgoals.is_empty() {
            return 0.0;
        }
        let imperative = self.subgoals.iter().filter(|s| s.style == "find").count();
        imperative as f64 / self.subgoals.len() as f64
    }

    /// Closeness to the ideal length band for this hop count.
    pub fn length_band(&self) -> f64 {
        if self.subgoals.is_empty() {
            return 0.0;
        }
        let ideal = 2 + 4 * self.hops;
        let deviation = self.word_count.abs_diff(ideal) as f64;
        (1.0 - deviation / 10.0).max(0.0)
    }
}

/// Scores one dimension; the fraction from the rule table is scaled to
/// the dimension's integer range.
pub(super) fn judge(
    cfg: &FeatureJudgeConfig,
    query_text: &str,
    plan: &str,
    dimension: &RubricDimension,
) -> (i64, String) {
    let facts = PlanFacts::extract(query_text, plan);
    let (frac, detail) = match dimension.name.as_str() {
        "Goal Alignment" => (facts.alignment(), "constraint overlap with the query"),
        "Subgoal Coverage" => (facts.coverage(), "distinct hops covered"),
        "Tool Appropriateness" => (facts.tool_validity(cfg), "valid tool nominations"),
        "Logical Ordering" => (facts.ordering(), "constraints in resolution order"),
        "Actionability" => (facts.imperative_ratio(), "imperative sub-goals"),
        "Clarity and Conciseness" => (facts.length_band(), "length within band"),
        _ => (
            0.5 * (facts.alignment() + facts.coverage()),
            "general plan quality proxy",
        ),
    };
    let score = (frac * dimension.max_score as f64).round() as i64;
    (score, format!("{detail}: {frac:.2}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{score_plan, JudgeBackend, RubricSet};

    const Q3: &str = "Starting from Velora , follow capital , then follow founder , then follow hue . What do you reach ?";

    fn seeded_dim(name: &str) -> RubricDimension {
        RubricSet::seeded()
            .dimensions
            .into_iter()
            .find(|d| d.name == name)
            .unwrap()
    }

    #[test]
    fn full_coverage_plan_scores_five_on_coverage() {
        let plan = "goals 3 find capital via search find founder via search find hue via visit";
        let cfg = FeatureJudgeConfig::default();
        let (score, _) = judge(&cfg, Q3, plan, &seeded_dim("Subgoal Coverage"));
        assert_eq!(score, 5);
    }

    #[test]
    fn empty_plan_scores_zero_everywhere() {
        let cfg = FeatureJudgeConfig::default();
        for dim in RubricSet::seeded().dimensions {
            let (score, _) = judge(&cfg, Q3, "", &dim);
            assert_eq!(score, 0, "dimension {}", dim.name);
        }
    }

    #[test]
    fn misordered_constraints_lower_logical_ordering() {
        let cfg = FeatureJudgeConfig::default();
        let dim = seeded_dim("Logical Ordering");
        let good = "goals 2 find capital via search find hue via search";
        let bad = "goals 2 find hue via search find capital via search";
        let q2 = "Starting from Velora , follow capital , then follow hue . What do you reach ?";
        assert!(judge(&cfg, q2, good, &dim).0 > judge(&cfg, q2, bad, &dim).0);
    }

    #[test]
    fn invalid_tool_nominations_lower_tool_score() {
        let cfg = FeatureJudgeConfig::default();
        let dim = seeded_dim("Tool Appropriateness");
        let good = "goals 1 find capital via search";
        let bad = "goals 1 find capital via answer";
        assert!(judge(&cfg, Q3, good, &dim).0 > judge(&cfg, Q3, bad, &dim).0);
    }

    #[test]
    fn consider_style_lowers_actionability() {
        let cfg = FeatureJudgeConfig::default();
        let dim = seeded_dim("Actionability");
        let good = "goals 2 find capital via search find hue via search";
        let bad = "goals 2 consider capital via search consider hue via search";
        assert_eq!(judge(&cfg, Q3, good, &dim).0, 5);
        assert_eq!(judge(&cfg, Q3, bad, &dim).0, 0);
    }

    #[test]
    fn feature_judge_is_pure() {
        let rubrics = RubricSet::seeded();
        let plan = "goals 2 find capital via search find hue via visit";
        let judge = JudgeBackend::feature();
        let a = score_plan(&rubrics, Q3, plan, &judge).unwrap();
        let b = score_plan(&rubrics, Q3, plan, &judge).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_plan_outscores_junk_plan() {
        let rubrics = RubricSet::seeded();
        let judge = JudgeBackend::feature();
        let q2 = "Starting from Velora , follow capital , then follow hue . What do you reach ?";
        let oracle = "goals 2 find capital via search find hue via search";
        let junk = "goals 1 consider ally via answer";
        let good = score_plan(&rubrics, q2, oracle, &judge).unwrap().total;
        let bad = score_plan(&rubrics, q2, junk, &judge).unwrap().total;
        assert!(good > bad + 0.3, "good {good} vs bad {bad}");
    }
}
