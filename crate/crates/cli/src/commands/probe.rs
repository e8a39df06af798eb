use sst_core::probe::{
    build_labels, default_evaluator, effective_direction, input_dim_ablation, loocv, probe_driven_generate, select_layer,
    train_probe, LayerResult, ProbeItem, ProbeModel, ProbeTrainConfig,
};
use sst_core::traceio::{num, write_csv_series};

use super::evaluate::{pass_fail, DepthRuns};
use super::generate::{load_checkpoint, load_questions, outcome, GenSettings};
use crate::error::CliError;
use crate::run::Run;
use crate::settings::Settings;

/// Position-0 hidden state of a turn after `depth` iterations.
fn hidden_at(runs: &DepthRuns, layer: usize) -> impl Fn(usize, usize, usize) -> Option<Vec<f64>> + '_ {
    move |q, turn, depth| {
        let rec = runs.get(depth - 1)?.get(q)?.get(turn)?.records.first()?;
        rec.iterations.last()?.hidden.get(layer).cloned()
    }
}

struct LayerOutcome {
    result: LayerResult,
    items: Vec<ProbeItem>,
    probe: ProbeModel,
    folds: Vec<(usize, bool)>,
    correct: usize,
    base_rate: f64,
}

pub fn run(run: &mut Run, s: &mut Settings) -> Result<(), CliError> {
    let model = load_checkpoint(run, s)?;
    let questions = load_questions(run, s)?;
    let i_max = s.get("i_max", 4usize)?;
    let layers = s.list("layers", (0..model.config.layers).collect())?;
    let d = ProbeTrainConfig::default();
    let base = ProbeTrainConfig {
        hidden: s.get("hidden", d.hidden)?,
        epochs: s.get("epochs", d.epochs)?,
        batch: s.get("batch", d.batch)?,
        lr: s.get("lr", d.lr)?,
        seed: run.seed,
        layer: 0,
    };
    let g = GenSettings::read(s)?;
    s.finish()?;
    if i_max == 0 || g.spec.positions == Some(0) {
        return Err(CliError::Validation("probing needs i_max ≥ 1 and at least one recorded position".into()));
    }
    if let Some(l) = layers.iter().find(|l| **l >= model.config.layers) {
        return Err(CliError::Validation(format!("layer {l} does not exist (model has {})", model.config.layers)));
    }
    run.create_out()?;

    let (matrix, runs) = pass_fail(&model, &questions, i_max, &g)?;
    let turn_counts: Vec<usize> = questions.iter().map(|q| q.turns.len()).collect();
    let mut outcomes = Vec::new();
    for &layer in &layers {
        let items = build_labels(&matrix, &turn_counts, hidden_at(&runs, layer))?;
        let cfg = ProbeTrainConfig { layer, ..base };
        let report = loocv(&items, &cfg, default_evaluator)?;
        let all: Vec<&ProbeItem> = items.iter().collect();
        let probe = train_probe(&all, &cfg)?;
        // Overthink: solvable at some depth, yet the probe-driven run fails.
        let mut overthinks = 0;
        for (qi, q) in questions.iter().enumerate() {
            if matrix.correct_depth(qi).is_none() {
                continue;
            }
            let turns: Vec<(Vec<u32>, usize)> = q.turns.iter().map(|t| (t.clone(), g.max_new)).collect();
            let r = probe_driven_generate(&model, &probe, &turns, i_max, &g.spec)?;
            if outcome(q, &r) != Some(true) {
                overthinks += 1;
            }
        }
        outcomes.push(LayerOutcome {
            result: LayerResult { layer, overthinks, p: report.p.value() },
            items,
            probe,
            folds: report.folds,
            correct: report.correct,
            base_rate: report.base_rate,
        });
    }

    let results: Vec<LayerResult> = outcomes.iter().map(|o| o.result).collect();
    let (chosen, how) = match select_layer(&results) {
        Some(l) => (l, "rule"),
        None => {
            let best = results.iter().min_by(|a, b| a.p.total_cmp(&b.p).then(a.layer.cmp(&b.layer))).expect("nonempty");
            (best.layer, "lowest_p")
        }
    };
    write_csv_series(
        &run.output("layers.csv"),
        &["layer", "items", "must_halt", "loocv_correct", "folds", "base_rate", "p", "overthinks"],
        outcomes.iter().map(|o| {
            [
                o.result.layer.to_string(),
                o.items.len().to_string(),
                o.items.iter().filter(|i| i.must_halt).count().to_string(),
                o.correct.to_string(),
                o.folds.len().to_string(),
                num(o.base_rate),
                num(o.result.p),
                o.result.overthinks.to_string(),
            ]
        }),
    )?;
    write_csv_series(
        &run.output("loocv.csv"),
        &["layer", "question", "correct"],
        outcomes.iter().flat_map(|o| o.folds.iter().map(|(q, c)| [o.result.layer.to_string(), q.to_string(), c.to_string()])),
    )?;

    let o = outcomes.iter().find(|o| o.result.layer == chosen).expect("chosen layer was evaluated");
    o.probe.to_container().write(&run.output("probe.sst"))?;
    let inputs: Vec<Vec<f64>> = o.items.iter().map(|i| i.hidden.clone()).collect();
    let ablation = input_dim_ablation(&o.probe, &inputs)?;
    write_csv_series(
        &run.output("ablation.csv"),
        &["dimension", "importance", "essential"],
        ablation.importance.iter().enumerate().map(|(i, v)| {
            [i.to_string(), num(*v), ablation.essential.binary_search(&i).is_ok().to_string()]
        }),
    )?;
    let must_halt: Vec<Vec<f64>> = o.items.iter().filter(|i| i.must_halt).map(|i| i.hidden.clone()).collect();
    let direction = effective_direction(&o.probe, &must_halt)?;
    write_csv_series(
        &run.output("direction.csv"),
        &["dimension", "direction", "gradient_magnitude"],
        direction
            .direction
            .iter()
            .zip(&direction.gradient_magnitude)
            .enumerate()
            .map(|(i, (a, b))| [i.to_string(), num(*a), num(*b)]),
    )?;
    run.write_manifest(
        s,
        &[
            ("selected_layer".into(), chosen.to_string()),
            ("selection".into(), how.into()),
            ("top_k".into(), ablation.top_k.to_string()),
            ("essential".into(), ablation.essential.len().to_string()),
            ("direction_r".into(), num(direction.r)),
        ],
    )?;
    println!(
        "layer {chosen} ({how}): LOOCV {}/{} p={:.3e}, {} essential dimensions",
        o.correct,
        o.folds.len(),
        o.result.p,
        ablation.essential.len()
    );
    println!("wrote {}", run.out.display());
    Ok(())
}
