//! Reference-table construction, voting and the posterior probability of
//! the selected model.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::forest::{grow_forest, oob_error_curve, plurality, Forest, ForestConfig};
use super::lda::{fit_lda, LdaProjection};
use super::tree::{Dataset, Targets};
use super::RfError;
use crate::abc::draw_uniform;
use crate::parallel::map_indexed;
use crate::seed::replicate_rng;
use crate::simulator::{run_simulation, SimulationConfig};
use crate::stats::{summarize, StatsLayout, SummaryStats, TopListPolicy};

pub const REFERENCE_SCHEMA_VERSION: u32 = 1;

/// Candidate transmission models, in tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelLabel {
    Conformity,
    Novelty,
    Neutrality,
}

impl ModelLabel {
    pub const ALL: [ModelLabel; 3] = [ModelLabel::Conformity, ModelLabel::Novelty, ModelLabel::Neutrality];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelLabel::Conformity => "conformity",
            ModelLabel::Novelty => "novelty",
            ModelLabel::Neutrality => "neutrality",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Uniform prior bounds on `b` per biased model; neutrality fixes `b = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPriors {
    pub conformity: (f64, f64),
    pub novelty: (f64, f64),
}

impl Default for ModelPriors {
    fn default() -> Self {
        ModelPriors {
            conformity: (-0.2, 0.0),
            novelty: (0.0, 0.2),
        }
    }
}

impl ModelPriors {
    fn bounds(&self, model: ModelLabel) -> (f64, f64) {
        match model {
            ModelLabel::Conformity => self.conformity,
            ModelLabel::Novelty => self.novelty,
            ModelLabel::Neutrality => (0.0, 0.0),
        }
    }
}

/// Simulated rows labelled by generating model, with LDA axes appended.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub layout: StatsLayout,
    pub labels: Vec<ModelLabel>,
    pub b: Vec<f64>,
    /// Base statistics followed by LD1 and LD2.
    pub features: Vec<Vec<f64>>,
    pub lda: LdaProjection,
}

impl ReferenceTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.layout.names();
        names.push("LD1".into());
        names.push("LD2".into());
        names
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::from_rows(&self.features)
    }

    pub fn label_indices(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.index() as u8).collect()
    }

    /// Full feature vector for observed statistics.
    pub fn observed_features(&self, stats: &SummaryStats) -> Result<Vec<f64>, RfError> {
        if stats.layout() != self.layout {
            return Err(RfError::Observed(format!(
                "layout {:?} differs from the reference layout {:?}",
                stats.layout(),
                self.layout
            )));
        }
        let mut v = stats.to_vec();
        let [ld1, ld2] = self.lda.project(&v);
        v.push(ld1);
        v.push(ld2);
        Ok(v)
    }

    /// `model,b,f1..fK` with one row per simulation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RfError> {
        let io = |e: csv::Error| RfError::Format(e.to_string());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let k = self.features.first().map_or(0, Vec::len);
        let mut header = vec!["model".to_string(), "b".to_string()];
        header.extend((1..=k).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(io)?;
        for ((label, b), row) in self.labels.iter().zip(&self.b).zip(&self.features) {
            let mut rec = vec![label.name().to_string(), b.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| RfError::Format(e.to_string()))
    }

    /// Sidecar naming each `f<i>` column.
    pub fn schema_json(&self) -> serde_json::Value {
        let columns: Vec<serde_json::Value> = self
            .feature_names()
            .into_iter()
            .enumerate()
            .map(|(i, name)| serde_json::json!({ "column": format!("f{}", i + 1), "name": name }))
            .collect();
        serde_json::json!({
            "schema_version": REFERENCE_SCHEMA_VERSION,
            "layout": self.layout,
            "columns": columns,
        })
    }
}

/// Simulates `n_per_model` rows for each model, fits the LDA on the base
/// statistics and appends the two projected axes to every row.
///
/// Rows are ordered conformity, novelty, neutrality; global row `i` draws
/// from replicate stream `i` of `seed`.
pub fn build_reference_table(
    n_per_model: usize,
    template: &SimulationConfig,
    layout: StatsLayout,
    priors: &ModelPriors,
    seed: u64,
) -> Result<ReferenceTable, RfError> {
    if n_per_model < 10 {
        return Err(RfError::Config(format!("n_per_model must be >= 10, got {n_per_model}")));
    }
    let rows = map_indexed(3 * n_per_model, |i| {
        let model = ModelLabel::ALL[i / n_per_model];
        let (lo, hi) = priors.bounds(model);
        let mut rng = replicate_rng(seed, i as u64);
        let b = draw_uniform(lo, hi, &mut rng);
        let sim = SimulationConfig {
            bias: b,
            seed: rng.next_u64(),
            ..template.clone()
        };
        let row_err = |message: String| RfError::Row { index: i, message };
        let out = run_simulation(&sim).map_err(|e| row_err(e.to_string()))?;
        let stats = summarize(&out.table, layout, TopListPolicy::Truncate).map_err(|e| row_err(e.to_string()))?;
        Ok((model, b, stats.to_vec()))
    })?;
    let labels: Vec<ModelLabel> = rows.iter().map(|r| r.0).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let base: Vec<Vec<f64>> = rows.into_iter().map(|r| r.2).collect();
    let label_idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let lda = fit_lda(&base, &label_idx)?;
    let features = base
        .into_iter()
        .map(|mut v| {
            let [a, c] = lda.project(&v);
            v.push(a);
            v.push(c);
            v
        })
        .collect();
    Ok(ReferenceTable {
        layout,
        labels,
        b,
        features,
        lda,
    })
}

/// Classification forest over the reference table.
pub fn grow_model_forest(table: &ReferenceTable, config: &ForestConfig, seed: u64) -> Result<Forest, RfError> {
    if table.is_empty() {
        return Err(RfError::EmptyTable);
    }
    let labels = table.label_indices();
    grow_forest(
        &table.dataset(),
        Targets::Classes {
            labels: &labels,
            n_classes: ModelLabel::ALL.len(),
        },
        config,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Votes {
    pub conformity: usize,
    pub novelty: usize,
    pub neutrality: usize,
    pub selected: ModelLabel,
    /// The top vote count was shared; `selected` is the first tied model.
    pub tie: bool,
}

impl Votes {
    pub fn total(&self) -> usize {
        self.conformity + self.novelty + self.neutrality
    }

    pub fn count(&self, model: ModelLabel) -> usize {
        match model {
            ModelLabel::Conformity => self.conformity,
            ModelLabel::Novelty => self.novelty,
            ModelLabel::Neutrality => self.neutrality,
        }
    }
}

fn check_observed(forest: &Forest, observed: &[f64]) -> Result<(), RfError> {
    if observed.len() != forest.n_features {
        return Err(RfError::Observed(format!(
            "expected {} features, found {}",
            forest.n_features,
            observed.len()
        )));
    }
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(RfError::Observed("non-finite feature".into()));
    }
    Ok(())
}

/// Each tree votes for one model; the plurality wins.
pub fn classify_observed(forest: &Forest, observed: &[f64]) -> Result<Votes, RfError> {
    check_observed(forest, observed)?;
    let v = forest.votes(observed);
    let (best, tie) = plurality(&v);
    Ok(Votes {
        conformity: v[0],
        novelty: v[1],
        neutrality: v[2],
        selected: ModelLabel::ALL[best],
        tie,
    })
}

pub fn oob_error_curve_for(forest: &Forest, table: &ReferenceTable) -> Vec<Option<f64>> {
    oob_error_curve(forest, &table.dataset(), &table.label_indices())
}

/// Final out-of-bag misclassification rate.
pub fn oob_error(forest: &Forest, table: &ReferenceTable) -> Option<f64> {
    oob_error_curve_for(forest, table).last().copied().flatten()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance: f64,
}

/// Mean Gini decrease per feature, most important first.
pub fn gini_importance(forest: &Forest, names: &[String]) -> Vec<FeatureImportance> {
    let imp = forest.feature_importances();
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .map(|j| FeatureImportance {
            feature: names.get(j).cloned().unwrap_or_else(|| format!("f{}", j + 1)),
            importance: imp[j],
        })
        .collect()
}

/// Probability that the selected model is right at the observed point.
///
/// A regression forest learns, over the reference rows, whether each row's
/// out-of-bag vote misclassifies it; the result is one minus its prediction
/// at `observed`. Rows no tree left out are skipped.
pub fn posterior_probability(
    forest: &Forest,
    table: &ReferenceTable,
    observed: &[f64],
    regression: &ForestConfig,
    seed: u64,
) -> Result<f64, RfError> {
    check_observed(forest, observed)?;
    let data = table.dataset();
    let votes = forest.oob_votes(&data);
    let covered: Vec<usize> = (0..table.len()).filter(|&r| votes[r].iter().any(|&v| v > 0)).collect();
    let excluded = table.len() - covered.len();
    if 2 * excluded > table.len() {
        return Err(RfError::InsufficientOob {
            excluded,
            total: table.len(),
        });
    }
    let misclassified: Vec<f64> = covered
        .iter()
        .map(|&r| f64::from(plurality(&votes[r]).0 != table.labels[r].index()))
        .collect();
    let reg = grow_forest(
        &data.subset(&covered),
        Targets::Values(&misclassified),
        regression,
        seed,
    )?;
    Ok((1.0 - reg.predict_mean(observed)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSettings {
    pub n_trees: usize,
    pub bootstrap_rows: Option<usize>,
    /// Trees in the misclassification regression forest.
    pub posterior_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoiceResult {
    pub votes: Votes,
    pub selected: ModelLabel,
    pub posterior_probability: f64,
    pub oob_error: f64,
    pub importances: Vec<FeatureImportance>,
}

/// Votes, posterior probability, OOB error and importances for one observed
/// feature vector against a trained forest.
pub fn choose_model(
    forest: &Forest,
    table: &ReferenceTable,
    observed: &[f64],
    posterior_trees: usize,
    seed: u64,
) -> Result<ModelChoiceResult, RfError> {
    let votes = classify_observed(forest, observed)?;
    let posterior = posterior_probability(
        forest,
        table,
        observed,
        &ForestConfig::regression(posterior_trees),
        seed,
    )?;
    let oob = oob_error(forest, table).ok_or(RfError::InsufficientOob {
        excluded: table.len(),
        total: table.len(),
    })?;
    Ok(ModelChoiceResult {
        selected: votes.selected,
        votes,
        posterior_probability: posterior,
        oob_error: oob,
        importances: gini_importance(forest, &table.feature_names()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Three separated clusters in a 4-feature space; feature 0 carries the class.
    fn fixture(n_per: usize, seed: u64, spread: f64) -> ReferenceTable {
        let mut rng = crate::seed::rng_from_seed(seed);
        let mut labels = Vec::new();
        let mut base = Vec::new();
        for m in ModelLabel::ALL {
            for _ in 0..n_per {
                let centre = m.index() as f64 * 10.0;
                base.push(vec![
                    centre + rng.gen_range(-spread..spread),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                ]);
                labels.push(m);
            }
        }
        let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        let lda = fit_lda(&base, &idx).unwrap();
        let features = base
            .into_iter()
            .map(|mut v| {
                let p = lda.project(&v);
                v.extend(p);
                v
            })
            .collect();
        ReferenceTable {
            layout: StatsLayout {
                y_max: 1,
                timepoints: 1,
            },
            b: vec![0.0; labels.len()],
            labels,
            features,
            lda,
        }
    }

    #[test]
    fn unanimous_vote_inside_a_class() {
        let table = fixture(60, 1, 1.0);
        let forest = grow_model_forest(&table, &ForestConfig::classification(50), 2).unwrap();
        let mut observed = vec![10.2, 0.5, 0.5, 0.5];
        observed.extend(table.lda.project(&observed));
        let votes = classify_observed(&forest, &observed).unwrap();
        assert_eq!(votes.novelty, 50);
        assert_eq!(votes.selected, ModelLabel::Novelty);
        assert!(!votes.tie);
        assert!(oob_error(&forest, &table).unwrap() <= 0.05);

        let p = posterior_probability(&forest, &table, &observed, &ForestConfig::regression(50), 3).unwrap();
        assert!(p >= 0.95, "{p}");
    }

    #[test]
    fn informative_feature_ranks_first() {
        let table = fixture(60, 4, 1.0);
        let forest = grow_model_forest(
            &table,
            &ForestConfig {
                mtry: Some(6),
                ..ForestConfig::classification(30)
            },
            5,
        )
        .unwrap();
        let names = table.feature_names();
        let imp = gini_importance(&forest, &names);
        assert!(["f1", "LD1", "LD2", "x"].contains(&imp[0].feature.as_str()) || imp[0].feature == names[0]);
        assert!(imp.iter().all(|f| f.importance >= 0.0));
        assert!(imp.windows(2).all(|w| w[0].importance >= w[1].importance));
        assert!(imp.iter().map(|f| f.importance).sum::<f64>() > 0.0);
    }

    #[test]
    fn tie_goes_to_first_label() {
        let table = fixture(20, 6, 1.0);
        let mut forest = grow_model_forest(&table, &ForestConfig::classification(2), 7).unwrap();
        // one tree says novelty, the other neutrality
        forest.trees[0].tree.nodes = vec![crate::rf::tree::Node::Leaf { value: 2.0 }];
        forest.trees[1].tree.nodes = vec![crate::rf::tree::Node::Leaf { value: 1.0 }];
        let votes = classify_observed(&forest, &table.features[0]).unwrap();
        assert_eq!(votes.selected, ModelLabel::Novelty);
        assert!(votes.tie);
        assert_eq!(votes.total(), 2);
    }

    #[test]
    fn observed_checks() {
        let table = fixture(20, 8, 1.0);
        let forest = grow_model_forest(&table, &ForestConfig::classification(3), 9).unwrap();
        assert!(classify_observed(&forest, &[1.0]).is_err());
        assert!(classify_observed(&forest, &[f64::NAN; 6]).is_err());
    }

    #[test]
    fn too_few_oob_rows() {
        let table = fixture(20, 10, 1.0);
        let forest = grow_model_forest(&table, &ForestConfig::classification(1), 11).unwrap();
        let err =
            posterior_probability(&forest, &table, &table.features[0], &ForestConfig::regression(5), 1).unwrap_err();
        assert!(matches!(err, RfError::InsufficientOob { .. }), "{err}");
    }

    #[test]
    fn reference_table_shape_and_determinism() {
        let template = SimulationConfig {
            population_size: 80,
            innovation_rate: 0.1,
            warmup_steps: 30,
            record_steps: 6,
            ..SimulationConfig::standard(0.0, 0)
        };
        let layout = StatsLayout {
            y_max: 8,
            timepoints: 6,
        };
        let t = build_reference_table(10, &template, layout, &ModelPriors::default(), 3).unwrap();
        assert_eq!(t.len(), 30);
        assert!(t.features.iter().all(|f| f.len() == layout.len() + 2));
        for (l, b) in t.labels.iter().zip(&t.b) {
            match l {
                ModelLabel::Neutrality => assert_eq!(*b, 0.0),
                ModelLabel::Conformity => assert!((-0.2..=0.0).contains(b)),
                ModelLabel::Novelty => assert!((0.0..=0.2).contains(b)),
            }
        }
        assert_eq!(
            t,
            build_reference_table(10, &template, layout, &ModelPriors::default(), 3).unwrap()
        );
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("model,b,f1,f2,"));
        assert_eq!(text.lines().count(), 31);
        let schema = t.schema_json();
        assert_eq!(schema["columns"][0]["name"], "x");
        assert_eq!(schema["columns"][layout.len() + 1]["name"], "LD2");
        assert!(build_reference_table(9, &template, layout, &ModelPriors::default(), 3).is_err());
    }
}
