use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::artifacts::*;
use super::Context;
use crate::archetype::{
    clustering_view, discover, profile_archetypes, ClusterSolution, ClusteringView,
    RetainedCluster, ValidityIndices, NOISE,
};
use crate::classifier::{
    feature_importance, shuffled_label_control, train_and_evaluate, ArchetypeModel, ClassifierData,
    CvResult, EvalReport, Metrics, TrainTest,
};
use crate::domain::{
    derive_outcome_labels, read_raw_tables, validate_raw, write_dataset, Dataset, StudentId,
    TableKind, ValidationReport,
};
use crate::error::{CapireError, Result};
use crate::features::extract_features;
use crate::matrix::{impute, matrix_csv_bytes, read_matrix_csv, FeatureMatrix, RunManifest};
use crate::rng::{derive_seed, stream_id};
use crate::synth::{generate, write_ground_truth};
use crate::validation::{
    bootstrap_stability, hyperparameter_sensitivity, noise_analysis, permutation_silhouette_test,
    split_discrepancy, temporal_stability, SensitivityGrid, SplitDiscrepancy,
};
use crate::vot::{audit_eligibility, leakage_probe, ProbeOptions};

/// Placeholder written when an analysis cannot run on the data at hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub skipped: String,
}

fn section<T: Serialize>(result: Result<T>) -> Result<Vec<u8>> {
    match result {
        Ok(v) => json_bytes(&v),
        Err(e @ (CapireError::Degenerate(_) | CapireError::InvalidInput(_))) => {
            json_bytes(&Skipped {
                skipped: e.to_string(),
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicesReport {
    pub eps: f64,
    pub min_pts: usize,
    pub n_archetypes: usize,
    pub residual: usize,
    pub retained: Vec<RetainedCluster>,
    pub columns: Vec<String>,
    pub excluded_columns: Vec<String>,
    pub excluded_rows: usize,
    pub indices: Option<ValidityIndices>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub train: Vec<StudentId>,
    pub test: Vec<StudentId>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub report: EvalReport,
    pub chance_level: f64,
    pub shuffled_control: Option<CvResult>,
    pub split_discrepancy: Option<SplitDiscrepancy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_discrepancy_error: Option<String>,
    pub level_shares: BTreeMap<String, f64>,
    pub interaction_share: f64,
}

fn seed(ctx: &Context<'_>, stream: &str) -> u64 {
    derive_seed(ctx.cfg.seed, stream_id(stream))
}

/// Parses and validates the input tables.
fn load_inputs(ctx: &Context<'_>) -> Result<(ValidationReport, Dataset)> {
    let dir = ctx.cfg.input_dir(&ctx.out);
    if ctx.cfg.inputs.is_none() && !dir.join(TableKind::Students.file_name()).exists() {
        return Err(CapireError::MissingArtifact {
            artifact: dir,
            stage: "synth",
        });
    }
    let raw = read_raw_tables(&dir)?;
    Ok(validate_raw(&raw, &ctx.cfg.validation_rules))
}

/// The input dataset, gated on a passing `validate` run.
fn validated_dataset(ctx: &Context<'_>) -> Result<Dataset> {
    let report: ValidationReport = read_json(&ctx.out, VALIDATION_REPORT, "validate")?;
    if !report.passed() {
        return Err(CapireError::ValidationFailed {
            violations: report.hard_violations,
        });
    }
    let (report, dataset) = load_inputs(ctx)?;
    if !report.passed() {
        return Err(CapireError::ValidationFailed {
            violations: report.hard_violations,
        });
    }
    Ok(dataset)
}

fn attrition_by_student(ctx: &Context<'_>, dataset: &Dataset) -> BTreeMap<StudentId, u8> {
    derive_outcome_labels(dataset, ctx.cfg.vot.horizon, ctx.cfg.vot.grace)
        .into_iter()
        .map(|l| (l.student_id, l.attrition_flag))
        .collect()
}

/// Matrix, row metadata and the standardized clustering view.
fn load_view(ctx: &Context<'_>) -> Result<(FeatureMatrix, ExtractionMeta, ClusteringView)> {
    let matrix = read_matrix_csv(&require(&ctx.out, MATRIX, "assemble")?)?;
    let meta: ExtractionMeta = read_json(&ctx.out, EXTRACTION, "extract")?;
    if meta.rows.len() != matrix.n_rows() {
        return Err(CapireError::SchemaMismatch(format!(
            "{MATRIX} has {} rows, {EXTRACTION} describes {}",
            matrix.n_rows(),
            meta.rows.len()
        )));
    }
    let view = clustering_view(&matrix, &meta.window_empty(), &meta.training())?;
    Ok((matrix, meta, view))
}

/// Rebuilds the clustering solution from `clusters.csv`, `embedding.csv`
/// and `indices.json`, checking it lines up with the view rows.
fn load_solution(
    ctx: &Context<'_>,
    matrix: &FeatureMatrix,
    view: &ClusteringView,
) -> Result<ClusterSolution> {
    let rows = read_clusters(&ctx.out)?;
    let (ids, coordinates) = read_embedding(&ctx.out)?;
    let summary: IndicesReport = read_json(&ctx.out, INDICES, "cluster")?;
    let expected: Vec<&StudentId> = view.rows.iter().map(|&i| &matrix.student_ids[i]).collect();
    let listed: Vec<&StudentId> = rows.iter().map(|r| &r.student_id).collect();
    if listed != expected || ids.iter().collect::<Vec<_>>() != expected {
        return Err(CapireError::SchemaMismatch(
            "cluster artifacts do not match the matrix rows; re-run `cluster`".into(),
        ));
    }
    Ok(ClusterSolution {
        coordinates,
        raw_labels: rows.iter().map(|r| r.raw_label).collect(),
        labels: rows.iter().map(|r| r.label).collect(),
        eps: summary.eps,
        min_pts: summary.min_pts,
        retained: summary.retained,
        residual: summary.residual,
        indices: summary.indices,
    })
}

pub(super) fn synth(ctx: &mut Context<'_>) -> Result<()> {
    let source = ctx.cfg.synth.as_ref().ok_or_else(|| {
        CapireError::Config("the `synth` stage needs a `synth` section in the config".into())
    })?;
    let gen = source.generator()?;
    let dir = ctx.cfg.input_dir(&ctx.out);
    let students = dir.join(TableKind::Students.file_name());
    if students.exists() && !ctx.force {
        return Err(CapireError::OutputExists(students));
    }
    let cohort = generate(&gen)?;
    let prefix = dir.strip_prefix(&ctx.out).ok().map(|p| p.to_path_buf());
    for path in write_dataset(&cohort.dataset, &dir)? {
        let bytes = std::fs::read(&path)?;
        let name = match &prefix {
            Some(p) => p
                .join(path.file_name().expect("file path"))
                .to_string_lossy()
                .into_owned(),
            None => path.to_string_lossy().into_owned(),
        };
        ctx.recorded(&name, &bytes);
    }
    let truth_path = ctx.path(GROUND_TRUTH);
    write_ground_truth(&cohort.ground_truth, &truth_path, ctx.force)?;
    let bytes = std::fs::read(&truth_path)?;
    ctx.recorded(GROUND_TRUTH, &bytes);
    ctx.note(format!(
        "{} students, {} enrolments, {} templates",
        cohort.dataset.students.len(),
        cohort.dataset.enrolments.len(),
        gen.templates.len()
    ));
    Ok(())
}

pub(super) fn validate(ctx: &mut Context<'_>) -> Result<()> {
    let (report, _) = load_inputs(ctx)?;
    ctx.write(VALIDATION_REPORT, &json_bytes(&report)?)?;
    ctx.note(format!(
        "verdict {:?}, {} hard violation(s), {} warning(s)",
        report.verdict,
        report.hard_violations,
        report.warnings.len()
    ));
    if !report.passed() {
        return Err(CapireError::ValidationFailed {
            violations: report.hard_violations,
        });
    }
    Ok(())
}

pub(super) fn audit(ctx: &mut Context<'_>) -> Result<()> {
    let report = audit_eligibility(&ctx.cfg.dictionary()?, &ctx.cfg.vot)?;
    ctx.write(AUDIT, &json_bytes(&report)?)?;
    ctx.note(format!(
        "{} admissible, {} excluded",
        report.admissible.len(),
        report.excluded.len()
    ));
    Ok(())
}

fn extract_matrix(
    ctx: &Context<'_>,
    dataset: &Dataset,
    admissible: &[String],
) -> Result<(FeatureMatrix, ExtractionMeta)> {
    let extraction = extract_features(dataset, &ctx.cfg.vot, &ctx.cfg.features)?;
    let raw = FeatureMatrix::from_vectors(&extraction.vectors, admissible)?;
    let mut vectors: Vec<_> = extraction.vectors.iter().collect();
    vectors.sort_by(|a, b| a.student_id.cmp(&b.student_id));
    let rows = vectors
        .iter()
        .map(|v| RowMeta {
            student_id: v.student_id.clone(),
            cohort_year: v.cohort_year,
            region: v.region.clone(),
            training: extraction.training.contains(&v.student_id),
            window_empty: v.window_empty,
        })
        .collect();
    let meta = ExtractionMeta {
        admissible: admissible.to_vec(),
        excluded: Vec::new(),
        rows,
        friction: extraction.friction,
    };
    Ok((raw, meta))
}

fn impute_matrix(
    ctx: &Context<'_>,
    raw: &FeatureMatrix,
    meta: &ExtractionMeta,
) -> Result<(FeatureMatrix, crate::matrix::ImputationModel)> {
    impute(
        raw,
        &meta.regions(),
        &meta.training(),
        &ctx.cfg.imputation,
        &ctx.cfg.dictionary()?,
        &ctx.cfg.features.interactions,
    )
}

pub(super) fn extract(ctx: &mut Context<'_>) -> Result<()> {
    let dataset = validated_dataset(ctx)?;
    let audit = audit_eligibility(&ctx.cfg.dictionary()?, &ctx.cfg.vot)?;
    let (raw, mut meta) = extract_matrix(ctx, &dataset, &audit.admissible)?;
    meta.excluded = audit.excluded;
    ctx.write(RAW_MATRIX, &matrix_csv_bytes(&raw)?)?;
    ctx.write(EXTRACTION, &json_bytes(&meta)?)?;
    let empty = meta.rows.iter().filter(|r| r.window_empty).count();
    ctx.note(format!(
        "{} students x {} features, {empty} empty window(s)",
        raw.n_rows(),
        raw.n_cols()
    ));
    Ok(())
}

pub(super) fn assemble(ctx: &mut Context<'_>) -> Result<()> {
    let raw = read_matrix_csv(&require(&ctx.out, RAW_MATRIX, "extract")?)?;
    let meta: ExtractionMeta = read_json(&ctx.out, EXTRACTION, "extract")?;
    let validation: ValidationReport = read_json(&ctx.out, VALIDATION_REPORT, "validate")?;
    let (imputed, model) = impute_matrix(ctx, &raw, &meta)?;
    let view = clustering_view(&imputed, &meta.window_empty(), &meta.training())?;
    ctx.write(MATRIX, &matrix_csv_bytes(&imputed)?)?;
    ctx.write(IMPUTATION, &json_bytes(&model)?)?;
    ctx.write(SCALING, &json_bytes(&view.scaling)?)?;
    let mut cohorts: Vec<i32> = meta.cohort_years();
    cohorts.sort_unstable();
    cohorts.dedup();
    let indicators = imputed.columns.iter().filter(|c| c.indicator).count();
    ctx.note(format!(
        "{} rows, {} features + {indicators} indicators",
        imputed.n_rows(),
        imputed.n_cols() - indicators
    ));
    ctx.commit(|m: &mut RunManifest| {
        m.feature_count = imputed.n_cols() - indicators;
        m.indicator_count = indicators;
        m.columns = imputed
            .column_names()
            .into_iter()
            .map(str::to_string)
            .collect();
        m.feature_missingness = RunManifest::feature_missingness_of(&raw);
        m.input_missingness = validation.missingness.clone();
        m.included_cohorts = cohorts;
        m.sample_size = imputed.n_rows();
        m.training_size = meta.rows.iter().filter(|r| r.training).count();
        m.empty_window_students = meta.rows.iter().filter(|r| r.window_empty).count();
    })
}

pub(super) fn cluster(ctx: &mut Context<'_>) -> Result<()> {
    let (matrix, _, view) = load_view(ctx)?;
    let dataset = validated_dataset(ctx)?;
    let sol = discover(
        &view.points,
        &ctx.cfg.embedding,
        &ctx.cfg.clustering,
        seed(ctx, "embedding"),
    )?;
    let ids: Vec<StudentId> = view
        .rows
        .iter()
        .map(|&i| matrix.student_ids[i].clone())
        .collect();
    let rows: Vec<ClusterRow> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| ClusterRow {
            student_id: id.clone(),
            label: sol.labels[k],
            retained: sol.labels[k] != NOISE,
            raw_label: sol.raw_labels[k],
        })
        .collect();
    let attrition = attrition_by_student(ctx, &dataset);
    let flags: Vec<Option<u8>> = ids.iter().map(|id| attrition.get(id).copied()).collect();
    let profiles = profile_archetypes(&matrix.select_rows(&view.rows), &sol.labels, &flags);
    let summary = IndicesReport {
        eps: sol.eps,
        min_pts: sol.min_pts,
        n_archetypes: sol.n_archetypes(),
        residual: sol.residual,
        retained: sol.retained.clone(),
        columns: view.columns.clone(),
        excluded_columns: view.excluded_columns.clone(),
        excluded_rows: view.excluded_rows,
        indices: sol.indices,
    };
    ctx.write(CLUSTERS, &clusters_csv(&rows)?)?;
    ctx.write(EMBEDDING, &embedding_csv(&ids, &sol.coordinates)?)?;
    ctx.write(INDICES, &json_bytes(&summary)?)?;
    ctx.write(PROFILES, &json_bytes(&profiles)?)?;
    ctx.note(format!(
        "eps {:.4}, {} archetype(s) {:?}, {} residual",
        sol.eps,
        sol.n_archetypes(),
        sol.retained.iter().map(|r| r.size).collect::<Vec<_>>(),
        sol.residual
    ));
    Ok(())
}

fn median_cohort(years: &[i32]) -> Option<i32> {
    let mut distinct = years.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let half = years.len() as f64 / 2.0;
    distinct
        .iter()
        .skip(1)
        .copied()
        .find(|&y| years.iter().filter(|&&c| c < y).count() as f64 >= half)
}

pub(super) fn validate_clusters(ctx: &mut Context<'_>) -> Result<()> {
    let (matrix, meta, view) = load_view(ctx)?;
    let sol = load_solution(ctx, &matrix, &view)?;
    let dataset = validated_dataset(ctx)?;
    let (emb, clu, v) = (&ctx.cfg.embedding, &ctx.cfg.clustering, &ctx.cfg.validation);

    let stability = bootstrap_stability(
        &view.points,
        &sol.labels,
        emb,
        clu,
        v.bootstrap_resamples,
        seed(ctx, "bootstrap"),
    );
    let stability_note = stability
        .as_ref()
        .ok()
        .map(|s| format!("bootstrap mean ARI {:?}", s.mean_ari()));
    let stability = section(stability)?;

    let permutation = permutation_silhouette_test(
        &sol.coordinates,
        &sol.labels,
        v.permutations,
        seed(ctx, "permutation"),
    );
    let permutation_note = permutation
        .as_ref()
        .ok()
        .map(|p| format!("permutation p {:.4}", p.p_value));
    let permutation = section(permutation)?;

    let years: Vec<i32> = view
        .rows
        .iter()
        .map(|&i| meta.rows[i].cohort_year)
        .collect();
    let attrition = attrition_by_student(ctx, &dataset);
    let flags: Vec<Option<u8>> = view
        .rows
        .iter()
        .map(|&i| attrition.get(&matrix.student_ids[i]).copied())
        .collect();
    let temporal = match v.temporal_split_year.or_else(|| median_cohort(&years)) {
        Some(split) => section(temporal_stability(
            &view.points,
            &years,
            &flags,
            split,
            emb,
            clu,
            seed(ctx, "temporal"),
        ))?,
        None => json_bytes(&Skipped {
            skipped: "a single entry cohort has no second period".into(),
        })?,
    };

    let noise_matrix = matrix.select_rows(&view.rows);
    let noise = section(noise_analysis(
        &noise_matrix,
        &sol.labels,
        &sol.coordinates,
        &v.noise_features,
        seed(ctx, "noise"),
    ))?;

    ctx.write(STABILITY, &stability)?;
    ctx.write(PERMUTATION, &permutation)?;
    ctx.write(TEMPORAL, &temporal)?;
    ctx.write(NOISE_ANALYSIS, &noise)?;
    if v.sensitivity {
        let grid = SensitivityGrid::around(emb, clu);
        let report = hyperparameter_sensitivity(
            &view.points,
            &sol,
            emb,
            clu,
            &grid,
            seed(ctx, "embedding"),
        )?;
        ctx.write(SENSITIVITY, &report.to_csv()?)?;
        ctx.write(SENSITIVITY_SUMMARY, &json_bytes(&report)?)?;
        if let Some(s) = &report.summary {
            ctx.note(format!(
                "sensitivity ARI min {:.3} mean {:.3}",
                s.min, s.mean
            ));
        }
    }
    for n in [stability_note, permutation_note].into_iter().flatten() {
        ctx.note(n);
    }
    Ok(())
}

/// Classifier rows: clustered students with a retained archetype.
fn classifier_data(ctx: &Context<'_>) -> Result<ClassifierData> {
    let (matrix, meta, view) = load_view(ctx)?;
    let sol = load_solution(ctx, &matrix, &view)?;
    let sub = matrix.select_rows(&view.rows);
    let years: Vec<i32> = view
        .rows
        .iter()
        .map(|&i| meta.rows[i].cohort_year)
        .collect();
    ClassifierData::new(&sub, &sol.labels, &years)
}

pub(super) fn train(ctx: &mut Context<'_>) -> Result<()> {
    let data = classifier_data(ctx)?;
    let c = &ctx.cfg.classifier;
    let trained = train_and_evaluate(
        &data,
        &c.split,
        &c.forest,
        &c.tuning,
        seed(ctx, "classifier"),
    )?;
    let ids = |rows: &[usize]| rows.iter().map(|&r| data.student_ids[r].clone()).collect();
    let record = TrainingRecord {
        train: ids(&trained.split.train),
        test: ids(&trained.split.test),
        report: trained.report,
    };
    ctx.write(MODEL, &json_bytes(&trained.model)?)?;
    ctx.write(TRAINING, &json_bytes(&record)?)?;
    ctx.note(format!(
        "{} classes, train {} / test {}, cv macro F1 {:.3}",
        data.classes.len(),
        record.train.len(),
        record.test.len(),
        record.report.cv.mean_macro_f1
    ));
    Ok(())
}

fn rows_of(data: &ClassifierData, ids: &[StudentId]) -> Result<Vec<usize>> {
    let index: BTreeMap<&StudentId, usize> = data
        .student_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    ids.iter()
        .map(|id| {
            index.get(id).copied().ok_or_else(|| {
                CapireError::SchemaMismatch(format!("student {} not in classifier rows", id.0))
            })
        })
        .collect()
}

pub(super) fn evaluate(ctx: &mut Context<'_>) -> Result<()> {
    let data = classifier_data(ctx)?;
    let model: ArchetypeModel = read_json(&ctx.out, MODEL, "train")?;
    let record: TrainingRecord = read_json(&ctx.out, TRAINING, "train")?;
    if model.classes != data.classes {
        return Err(CapireError::SchemaMismatch(
            "model classes differ from the current archetypes; re-run `train`".into(),
        ));
    }
    let split = TrainTest {
        train: rows_of(&data, &record.train)?,
        test: rows_of(&data, &record.test)?,
        split_year: record.report.split_year,
    };
    let test: Metrics = data.score(&model.forest, &split.test, &data.y)?;
    let c = &ctx.cfg.classifier;
    let shuffled = if c.shuffled_control {
        Some(shuffled_label_control(
            &data,
            &record.report.cv.config,
            c.split.k_folds,
            seed(ctx, "shuffle-control"),
        )?)
    } else {
        None
    };
    let (discrepancy, discrepancy_error) = if c.split_discrepancy {
        match split_discrepancy(
            &data,
            &record.report.cv.config,
            c.split.train_fraction,
            c.split.split_year,
            seed(ctx, "discrepancy"),
        ) {
            Ok(d) => (Some(d), None),
            Err(e @ (CapireError::Degenerate(_) | CapireError::InvalidInput(_))) => {
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    let interactions: Vec<String> = ctx
        .cfg
        .features
        .interactions
        .0
        .iter()
        .map(|p| p.name.clone())
        .collect();
    let importance = feature_importance(&model.forest.importances, &data.columns, &interactions)?;
    let chance_level = 1.0 / data.classes.len() as f64;
    let report = EvaluationReport {
        report: EvalReport {
            test,
            ..record.report
        },
        chance_level,
        shuffled_control: shuffled,
        split_discrepancy: discrepancy,
        split_discrepancy_error: discrepancy_error,
        level_shares: importance
            .level_shares
            .iter()
            .map(|(l, v)| (l.as_str().to_string(), *v))
            .collect(),
        interaction_share: importance.interaction_share,
    };
    ctx.write(EVAL_REPORT, &json_bytes(&report)?)?;
    ctx.write(IMPORTANCE, &importance.to_csv()?)?;
    ctx.note(format!(
        "test accuracy {:.3}, macro F1 {:.3}, majority baseline {:.3}",
        report.report.test.accuracy, report.report.test.macro_f1, report.report.baselines.majority
    ));
    if let Some(s) = &report.shuffled_control {
        ctx.note(format!(
            "shuffled-label CV accuracy {:.3} (chance {chance_level:.3})",
            s.mean_accuracy
        ));
    }
    Ok(())
}

pub(super) fn predict(ctx: &mut Context<'_>) -> Result<()> {
    let matrix = read_matrix_csv(&require(&ctx.out, MATRIX, "assemble")?)?;
    let model: ArchetypeModel = read_json(&ctx.out, MODEL, "train")?;
    let predictions = model.predict_matrix(&matrix)?;
    ctx.write(PREDICTIONS, &predictions_csv(&model.classes, &predictions)?)?;
    ctx.note(format!("{} predictions", predictions.len()));
    Ok(())
}

pub(super) fn probe(ctx: &mut Context<'_>) -> Result<()> {
    let dataset = validated_dataset(ctx)?;
    let audit = audit_eligibility(&ctx.cfg.dictionary()?, &ctx.cfg.vot)?;
    let run = |d: &Dataset| -> Result<FeatureMatrix> {
        let (raw, meta) = extract_matrix(ctx, d, &audit.admissible)?;
        Ok(impute_matrix(ctx, &raw, &meta)?.0)
    };
    let report = leakage_probe(
        run,
        &dataset,
        &ctx.cfg.vot,
        seed(ctx, "probe"),
        &ProbeOptions::default(),
    )?;
    ctx.write(PROBE, &json_bytes(&report)?)?;
    ctx.note(format!(
        "{} injected enrolments, {} altered outcomes, identical: {}",
        report.injected_enrolments, report.altered_outcomes, report.identical
    ));
    if !report.identical {
        return Err(CapireError::LeakageDetected(report.total_changed_cells));
    }
    Ok(())
}
