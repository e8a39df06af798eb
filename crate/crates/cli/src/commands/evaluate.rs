use sst_core::analysis::mcnemar_exact;
use sst_core::inference::{flat_depth_report, GenerationRun, PassFailMatrix};
use sst_core::model::SstModel;
use sst_core::traceio::{num, write_csv_series};

use super::generate::{flat_question, load_checkpoint, load_questions, outcome, GenSettings};
use super::opt_num;
use crate::data::Question;
use crate::error::CliError;
use crate::run::Run;
use crate::settings::Settings;

/// Runs indexed `[depth − 1][question][turn]`.
pub type DepthRuns = Vec<Vec<Vec<GenerationRun>>>;

/// Flat runs at every depth `1..=i_max`. Decoding is deterministic, so the
/// stage-`k` run of the escalation is the flat depth-`k` run.
pub fn pass_fail(
    model: &SstModel,
    questions: &[Question],
    i_max: usize,
    g: &GenSettings,
) -> Result<(PassFailMatrix, DepthRuns), CliError> {
    if questions.iter().any(|q| q.expected.is_none()) {
        return Err(CliError::Validation("evaluation needs an expected answer on every question".into()));
    }
    let runs: DepthRuns = (1..=i_max)
        .map(|d| questions.iter().map(|q| flat_question(model, q, d, g)).collect())
        .collect::<Result<_, _>>()?;
    let flat: Vec<Vec<bool>> = questions
        .iter()
        .enumerate()
        .map(|(qi, q)| runs.iter().map(|r| outcome(q, &r[qi]).unwrap_or(false)).collect())
        .collect();
    Ok((PassFailMatrix { staged: flat.clone(), flat }, runs))
}

pub fn run(run: &mut Run, s: &mut Settings) -> Result<(), CliError> {
    let model = load_checkpoint(run, s)?;
    let questions = load_questions(run, s)?;
    let i_max = s.get("i_max", 4usize)?;
    let g = GenSettings::read(s)?;
    s.finish()?;
    if i_max == 0 {
        return Err(CliError::Validation("i_max must be at least 1".into()));
    }
    run.create_out()?;
    let (matrix, _) = pass_fail(&model, &questions, i_max, &g)?;

    write_csv_series(
        &run.output("passfail.csv"),
        &["question", "depth", "flat", "staged"],
        (0..questions.len()).flat_map(|q| {
            let m = &matrix;
            (0..i_max).map(move |d| [q.to_string(), (d + 1).to_string(), m.flat[q][d].to_string(), m.staged[q][d].to_string()])
        }),
    )?;
    let caps = matrix.staged_capacities()?;
    write_csv_series(
        &run.output("capacity.csv"),
        &["stage", "capacity"],
        caps.iter().enumerate().map(|(k, c)| [(k + 1).to_string(), num(*c)]),
    )?;
    let depth1: Vec<bool> = matrix.flat.iter().map(|r| r[0]).collect();
    let mut rows = Vec::new();
    for d in 1..=i_max {
        let dk: Vec<bool> = matrix.flat.iter().map(|r| r[d - 1]).collect();
        let r = flat_depth_report(&depth1, &dk)?;
        let p = mcnemar_exact(r.regressions as u64, r.recoveries as u64).ok().map(|p| p.value());
        rows.push([
            d.to_string(),
            r.passes.to_string(),
            num(r.accuracy),
            r.regressions.to_string(),
            r.recoveries.to_string(),
            num(r.delta),
            opt_num(p),
        ]);
    }
    write_csv_series(
        &run.output("flat_report.csv"),
        &["depth", "passes", "accuracy", "regressions", "recoveries", "delta", "mcnemar_p"],
        rows,
    )?;
    run.write_manifest(s, &[("questions".into(), questions.len().to_string())])?;
    println!("staged capacities: {}", caps.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join(" "));
    println!("wrote {}", run.out.display());
    Ok(())
}
