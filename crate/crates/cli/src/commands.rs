//! The pipeline commands. Each reads its resolved [`Settings`], writes data
//! files through [`Outputs`] and leaves manifest bookkeeping to the caller.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde_json::json;

use cultabc::abc::{
    cross_validate_with, generate_reference, goodness_of_fit_with, posterior_from, RejectionConfig, Rejector,
};
use cultabc::corpus::{build_frequency_table, estimate_params, parse_events};
use cultabc::parallel::map_indexed;
use cultabc::rf::{
    build_reference_table, choose_model, grow_model_forest, oob_error_curve_for, ForestConfig, ModelPriors,
};
use cultabc::seed::{replicate_seed, stage_seed};
use cultabc::simulator::{estimate_warmup, plateau};
use cultabc::stats::{diversity_series, fit_turnover_profile, ks_two_sample, summarize, turnover_rates_with};
use cultabc::{run_simulation, FrequencyTable, SimulationConfig, StatsLayout, TimeRange, TopListPolicy};

use crate::error::Failure;
use crate::manifest::{csv_bytes, Outputs};
use crate::settings::Settings;

const POLICY: TopListPolicy = TopListPolicy::Truncate;

fn input(s: &Settings) -> Result<&Path, Failure> {
    s.input
        .as_deref()
        .ok_or_else(|| Failure::usage("no input file given (positional argument or `input` in the config)"))
}

fn load_table(s: &Settings) -> Result<FrequencyTable, Failure> {
    let path = input(s)?;
    if !path.is_file() {
        return Err(Failure::usage(format!("{}: no such file", path.display())));
    }
    FrequencyTable::load(path).map_err(|e| Failure::usage(format!("corpus: {}: {e}", path.display())))
}

fn template(s: &Settings, timepoints: usize) -> SimulationConfig {
    SimulationConfig {
        population_size: s.population_size,
        innovation_rate: s.innovation_rate,
        bias: s.bias,
        warmup_steps: s.warmup_steps,
        record_steps: timepoints,
        seed: 0,
        initial: s.initial,
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn ingest(s: &Settings, out: &mut Outputs) -> Result<(), Failure> {
    let path = input(s)?;
    let file = File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let log =
        parse_events(BufReader::new(file)).map_err(|e| Failure::usage(format!("corpus: {}: {e}", path.display())))?;
    let range = TimeRange::new(
        s.range_start.unwrap_or(log.timepoint_range.start),
        s.range_end.unwrap_or(log.timepoint_range.end),
    );
    let table = build_frequency_table(&log, range)?;
    let params = estimate_params(&log, range)?;
    out.write("table.csv", table.to_csv_string())?;
    out.write("table.json", table.to_json())?;
    out.write_json("params.json", &params)
}

pub fn simulate(s: &Settings, seed: u64, out: &mut Outputs) -> Result<(), Failure> {
    let config = SimulationConfig {
        seed: stage_seed(seed, "simulate"),
        ..template(s, s.timepoints)
    };
    let table = run_simulation(&config)?.table;
    out.write("table.csv", table.to_csv_string())?;
    out.write("table.json", table.to_json())
}

pub fn turnover(s: &Settings, seed: u64, out: &mut Outputs) -> Result<(), Failure> {
    let table = load_table(s)?;
    let observed = turnover_rates_with(&table, s.y_max, POLICY)?;
    let supported = table.richness().into_iter().min().unwrap_or(0).min(s.y_max);
    let profile = fit_turnover_profile(&observed[..supported])?;
    let diversity = diversity_series(&table)?;

    let baseline = if s.neutral_reps > 0 {
        let config = SimulationConfig {
            bias: 0.0,
            ..template(s, table.n_timepoints())
        };
        let base = stage_seed(seed, "turnover-neutral");
        let runs = map_indexed(s.neutral_reps, |i| {
            let sim = SimulationConfig {
                seed: replicate_seed(base, i as u64),
                ..config.clone()
            };
            let t = run_simulation(&sim).map_err(Failure::from)?.table;
            let layout = StatsLayout {
                y_max: s.y_max,
                timepoints: t.n_timepoints(),
            };
            let stats = summarize(&t, layout, POLICY)?;
            Ok::<_, Failure>((stats.mean_turnover_by_size, stats.exponent_x))
        })?;
        let n = runs.len() as f64;
        let mean: Vec<f64> = (0..s.y_max)
            .map(|y| runs.iter().map(|r| r.0[y]).sum::<f64>() / n)
            .collect();
        let exponent = runs.iter().map(|r| r.1).sum::<f64>() / n;
        Some((mean, exponent))
    } else {
        None
    };

    let mut header = vec!["y", "mean_turnover", "fitted"];
    if baseline.is_some() {
        header.push("neutral_mean_turnover");
    }
    let rows = (0..s.y_max).map(|i| {
        let mut row = vec![(i + 1).to_string(), fmt(observed[i]), fmt(profile.predict(i + 1))];
        if let Some((mean, _)) = &baseline {
            row.push(fmt(mean[i]));
        }
        row
    });
    out.write("turnover.csv", csv_bytes(&header, rows))?;
    out.write_json(
        "fit.json",
        &json!({
            "coefficient": profile.coefficient,
            "exponent": profile.exponent,
            "fitted_sizes": supported,
            "y_max": s.y_max,
            "mean_diversity": diversity.mean,
        }),
    )?;
    let rows = table
        .timepoints
        .iter()
        .zip(&diversity.per_timepoint)
        .map(|(t, d)| vec![t.to_string(), fmt(*d)]);
    out.write("diversity.csv", csv_bytes(&["timepoint", "simpson_diversity"], rows))?;
    if let Some((mean, exponent)) = baseline {
        let ks = ks_two_sample(&observed, &mean)?;
        out.write_json(
            "neutral_ks.json",
            &json!({
                "neutral_reps": s.neutral_reps,
                "statistic": ks.statistic,
                "p_value": ks.p_value,
                "neutral_mean_exponent": exponent,
            }),
        )?;
    }
    Ok(())
}

pub fn warmup(s: &Settings, seed: u64, out: &mut Outputs) -> Result<(), Failure> {
    if s.plateau_tolerance.is_nan() || s.plateau_tolerance <= 0.0 {
        return Err(Failure::usage(format!(
            "plateau_tolerance must be positive, got {}",
            s.plateau_tolerance
        )));
    }
    let curve = estimate_warmup(
        s.innovation_rate,
        s.population_size,
        s.horizon,
        s.warmup_iterations,
        stage_seed(seed, "warmup"),
    )?;
    let rows = curve
        .mean_diversity
        .iter()
        .enumerate()
        .map(|(i, d)| vec![(i + 1).to_string(), fmt(*d)]);
    out.write("warmup.csv", csv_bytes(&["step", "mean_diversity"], rows))?;
    out.write_json(
        "plateau.json",
        &json!({
            "plateau_step": plateau(&curve.mean_diversity, s.plateau_tolerance),
            "relative_tolerance": s.plateau_tolerance,
            "final_diversity": curve.mean_diversity.last(),
            "horizon": s.horizon,
            "iterations": s.warmup_iterations,
        }),
    )
}

pub fn infer(s: &Settings, seed: u64, out: &mut Outputs) -> Result<(), Failure> {
    let config = RejectionConfig {
        iterations: s.iterations,
        tolerance: s.tolerance,
        prior_low: s.prior_low,
        prior_high: s.prior_high,
    };
    config.validate()?;
    if let Some(n) = s.gof_pseudo {
        if n < 100 || n >= s.iterations {
            return Err(Failure::usage(format!(
                "gof needs 100 <= pseudo-observations < iterations, got {n}"
            )));
        }
    }
    if let Some(n) = s.cv_folds {
        if n < 2 || n >= s.iterations {
            return Err(Failure::usage(format!("cv needs 2 <= folds < iterations, got {n}")));
        }
        if s.cv_tolerances.is_empty() || s.cv_tolerances.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Failure::usage("cv tolerances must be non-empty and lie in (0, 1]"));
        }
    }
    let table = load_table(s)?;
    let layout = StatsLayout {
        y_max: s.y_max,
        timepoints: table.n_timepoints(),
    };
    let observed = summarize(&table, layout, POLICY)?;
    let target = [observed.exponent_x, observed.mean_diversity];
    let rows = generate_reference(
        &config,
        &template(s, table.n_timepoints()),
        layout,
        stage_seed(seed, "infer-reference"),
    )?;
    let rejector = Rejector::from_rows(&rows)?;
    let posterior = posterior_from(&rejector, &target, s.tolerance, None)?;

    let reference = rows.iter().map(|r| vec![fmt(r.b), fmt(r.x), fmt(r.mean_d)]);
    out.write("reference.csv", csv_bytes(&["b", "x", "mean_D"], reference))?;
    out.write_json(
        "posterior.json",
        &json!({
            "observed": { "x": target[0], "mean_D": target[1] },
            "tolerance": s.tolerance,
            "n_reference": rows.len(),
            "n_accepted": posterior.n_accepted(),
            "median": posterior.median,
            "hdpi_mass": 0.95,
            "hdpi_low": posterior.hdpi_low,
            "hdpi_high": posterior.hdpi_high,
        }),
    )?;
    let accepted = posterior
        .accepted_b
        .iter()
        .zip(&posterior.accepted_distances)
        .enumerate()
        .map(|(i, (b, d))| vec![(i + 1).to_string(), fmt(*b), fmt(*d)]);
    out.write("accepted.csv", csv_bytes(&["rank", "b", "distance"], accepted))?;

    if let Some(n) = s.gof_pseudo {
        let gof = goodness_of_fit_with(&rejector, &target, s.tolerance, n, stage_seed(seed, "infer-gof"))?;
        out.write_json(
            "gof.json",
            &json!({
                "p_value": gof.p_value,
                "observed_statistic": gof.observed_statistic,
                "n_pseudo": n,
                "tolerance": s.tolerance,
            }),
        )?;
        let null = gof.null_statistics.iter().map(|v| vec![fmt(*v)]);
        out.write("gof_null.csv", csv_bytes(&["statistic"], null))?;
    }
    if let Some(folds) = s.cv_folds {
        let cv = cross_validate_with(&rejector, &s.cv_tolerances, folds, stage_seed(seed, "infer-cv"))?;
        let rows = cv.iter().map(|p| vec![fmt(p.tolerance), fmt(p.prediction_error)]);
        out.write("cv.csv", csv_bytes(&["tolerance", "prediction_error"], rows))?;
    }
    Ok(())
}

pub fn choose(s: &Settings, seed: u64, out: &mut Outputs) -> Result<(), Failure> {
    if s.n_trees == 0 || s.posterior_trees == 0 {
        return Err(Failure::usage("tree counts must be >= 1"));
    }
    if s.n_per_model < 10 {
        return Err(Failure::usage(format!(
            "n_per_model must be >= 10, got {}",
            s.n_per_model
        )));
    }
    if s.bootstrap_rows == Some(0) {
        return Err(Failure::usage("bootstrap_rows must be >= 1"));
    }
    let table = load_table(s)?;
    let layout = StatsLayout {
        y_max: s.y_max,
        timepoints: table.n_timepoints(),
    };
    let observed = summarize(&table, layout, POLICY)?;
    let priors = ModelPriors {
        conformity: s.conformity_prior,
        novelty: s.novelty_prior,
    };
    let reference = build_reference_table(
        s.n_per_model,
        &template(s, table.n_timepoints()),
        layout,
        &priors,
        stage_seed(seed, "choose-reference"),
    )?;
    let forest_config = ForestConfig {
        n_trees: s.n_trees,
        bootstrap_rows: s.bootstrap_rows,
        ..ForestConfig::classification(s.n_trees)
    };
    let forest = grow_model_forest(&reference, &forest_config, stage_seed(seed, "choose-forest"))?;
    let features = reference.observed_features(&observed)?;
    let result = choose_model(
        &forest,
        &reference,
        &features,
        s.posterior_trees,
        stage_seed(seed, "choose-posterior"),
    )?;

    out.write_json(
        "result.json",
        &json!({
            "selected": result.selected,
            "votes": result.votes,
            "n_trees": forest.trees.len(),
            "posterior_probability": result.posterior_probability,
            "oob_error": result.oob_error,
        }),
    )?;
    let rows = result
        .importances
        .iter()
        .map(|f| vec![f.feature.clone(), fmt(f.importance)]);
    out.write("importance.csv", csv_bytes(&["feature", "importance"], rows))?;
    let rows = oob_error_curve_for(&forest, &reference)
        .into_iter()
        .enumerate()
        .map(|(i, e)| vec![(i + 1).to_string(), e.map(fmt).unwrap_or_default()]);
    out.write("oob_curve.csv", csv_bytes(&["trees", "oob_error"], rows))?;
    let k = features.len();
    let mut rows: Vec<Vec<String>> = reference
        .labels
        .iter()
        .zip(&reference.b)
        .zip(&reference.features)
        .map(|((m, b), f)| {
            vec![
                "reference".into(),
                m.name().into(),
                fmt(*b),
                fmt(f[k - 2]),
                fmt(f[k - 1]),
            ]
        })
        .collect();
    rows.push(vec![
        "observed".into(),
        String::new(),
        String::new(),
        fmt(features[k - 2]),
        fmt(features[k - 1]),
    ]);
    out.write("lda.csv", csv_bytes(&["source", "model", "b", "LD1", "LD2"], rows))?;
    let mut buf = Vec::new();
    reference.write_csv(&mut buf)?;
    out.write("reference.csv", buf)?;
    out.write_json("reference_schema.json", &reference.schema_json())?;
    out.write("forest.json", forest.to_json())
}
