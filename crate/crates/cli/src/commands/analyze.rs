use std::path::PathBuf;

use sst_core::analysis::gmm::stable_crossover;
use sst_core::analysis::logit::summarize;
use sst_core::analysis::{
    alpha_deviation_summary, alpha_premise, gmm_fit, l2_delta_profile, layer_profile, logit_dynamics_within,
    overlap_grid, position_labels, precision_floor_test, Band, OverlapGrid, PositionRule, GMM_MAX_ITERS,
};
use sst_core::traceio::{format_kv, load_model, num, write_csv_series, TraceArchive};

use super::opt_num;
use crate::error::CliError;
use crate::run::Run;
use crate::settings::Settings;

fn band_cells(b: &Band) -> [String; 8] {
    [b.n.to_string(), num(b.p5), num(b.p10), num(b.p25), num(b.median), num(b.p75), num(b.p90), num(b.p95)]
}

const BAND_COLUMNS: [&str; 8] = ["n", "p5", "p10", "p25", "median", "p75", "p90", "p95"];

pub fn run(run: &mut Run, s: &mut Settings) -> Result<(), CliError> {
    let dir = s.required_path("traces")?;
    run.input("traces", &dir);
    let iter_a = s.get("iter_a", 1usize)?;
    let iter_b = s.optional::<usize>("iter_b")?;
    let k = s.optional::<usize>("overlap_k")?;
    let gmm_k = s.get("gmm_components", 2usize)?;
    let fallback = s.get("threshold", 0.5f64)?;
    let rule = match s.get("position_rule", "any".to_string())?.as_str() {
        "any" => PositionRule::AnyLayer,
        "band" => PositionRule::Band { start: s.get("band_start", 0usize)?, end: s.get("band_end", usize::MAX)? },
        other => return Err(CliError::Validation(format!("position_rule must be any or band, got {other:?}"))),
    };
    let checkpoint = s.path("checkpoint")?;
    s.finish()?;

    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Runtime(format!("no .trace files in {}", dir.display())));
    }
    let traces: Vec<(String, TraceArchive)> = files
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            TraceArchive::read(p).map(|t| (name, t)).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_, _>>()?;
    let layers = traces[0].1.layers;
    if traces.iter().any(|(_, t)| t.layers != layers) {
        return Err(CliError::Runtime("traces disagree on layer count".into()));
    }
    run.create_out()?;

    // Overlap grids, one file per trace, pooled for the mixture fit.
    let mut pooled = OverlapGrid { values: Vec::new() };
    let mut grids = Vec::new();
    for (name, t) in &traces {
        let b = iter_b.unwrap_or(t.iterations);
        let kk = k.unwrap_or(8.min(t.d));
        if kk == 0 || kk > t.d {
            return Err(CliError::Validation(format!("overlap_k={kk} outside 1..={}", t.d)));
        }
        let grid = overlap_grid(t, iter_a, b, kk)?;
        write_csv_series(
            &run.output(&format!("overlap_{name}.csv")),
            &["position", "layer", "overlap"],
            grid.values.iter().enumerate().flat_map(|(p, row)| {
                row.iter().enumerate().map(move |(l, v)| [p.to_string(), l.to_string(), num(*v)])
            }),
        )?;
        pooled.values.extend(grid.values.iter().cloned());
        grids.push(grid);
    }

    let samples = pooled.flatten();
    let fit = gmm_fit(&samples, gmm_k, run.seed, GMM_MAX_ITERS);
    let (threshold, source) = match fit.as_ref().map_err(|e| e.to_string()).and_then(|f| stable_crossover(f).map_err(|e| e.to_string())) {
        Ok(t) => (t, "gmm".to_string()),
        Err(why) => (fallback, format!("fallback ({why})")),
    };
    if let Ok(f) = &fit {
        write_csv_series(
            &run.output("gmm.csv"),
            &["component", "mean", "std", "weight"],
            f.components.iter().enumerate().map(|(j, c)| [j.to_string(), num(c.mean), num(c.std), num(c.weight)]),
        )?;
    }

    let labels: Vec<Vec<bool>> = grids.iter().map(|g| position_labels(g, threshold, rule)).collect();
    let flat_labels: Vec<bool> = labels.iter().flatten().copied().collect();
    let low = flat_labels.iter().filter(|l| **l).count();
    let mut profile_rows = Vec::new();
    for (group, flag) in [("low", true), ("stable", false)] {
        let sel: Vec<bool> = flat_labels.iter().map(|l| *l == flag).collect();
        if sel.iter().any(|x| *x) {
            for (l, b) in layer_profile(&pooled, &sel)?.iter().enumerate() {
                let mut row = vec![group.to_string(), l.to_string()];
                row.extend(band_cells(b));
                profile_rows.push(row);
            }
        }
    }
    let mut cols = vec!["group", "layer"];
    cols.extend(BAND_COLUMNS);
    write_csv_series(&run.output("layer_profile.csv"), &cols, profile_rows)?;

    let mut logit_rows = Vec::new();
    let mut records = Vec::new();
    let mut regime = Vec::new();
    let mut precision_rows = Vec::new();
    let mut l2_rows = Vec::new();
    for ((name, t), lab) in traces.iter().zip(&labels) {
        let b = iter_b.unwrap_or(t.iterations);
        if t.top_k >= 2 && t.positions > 0 {
            for r in logit_dynamics_within(t, iter_a, b)? {
                logit_rows.push([
                    name.clone(),
                    r.position.to_string(),
                    r.argmax_changed.to_string(),
                    num(r.gap),
                    num(r.top1_shift),
                    r.top1_shift_bound.to_string(),
                    r.replacements.to_string(),
                    num(r.suppression),
                    r.suppression_bound.to_string(),
                    r.new_winner_rank.map_or(String::new(), |v| v.to_string()),
                ]);
                regime.push(lab[r.position]);
                records.push(r);
            }
        }
        for lp in precision_floor_test(t, lab, iter_a, b)? {
            precision_rows.push([
                name.clone(),
                lp.layer.to_string(),
                lp.n.to_string(),
                lp.above_one.to_string(),
                num(lp.fraction_above),
                opt_num(lp.p.map(|p| p.value())),
                lp.excluded_zero.to_string(),
            ]);
        }
        if t.iterations >= 2 {
            for l in 0..t.layers {
                for d in l2_delta_profile(t, l, None)? {
                    l2_rows.push([name.clone(), l.to_string(), d.position.to_string(), d.iteration.to_string(), num(d.delta)]);
                }
            }
        }
    }
    write_csv_series(
        &run.output("logit_dynamics.csv"),
        &[
            "trace",
            "position",
            "argmax_changed",
            "gap",
            "top1_shift",
            "top1_shift_bound",
            "replacements",
            "suppression",
            "suppression_bound",
            "new_winner_rank",
        ],
        logit_rows,
    )?;
    write_csv_series(
        &run.output("precision.csv"),
        &["trace", "layer", "n", "above_one", "fraction_above", "p", "excluded_zero"],
        precision_rows,
    )?;
    write_csv_series(&run.output("l2_delta.csv"), &["trace", "layer", "position", "iteration", "delta"], l2_rows)?;

    let mut summary = vec![
        ("traces".to_string(), traces.len().to_string()),
        ("positions".to_string(), flat_labels.len().to_string()),
        ("threshold".to_string(), num(threshold)),
        ("threshold_source".to_string(), source),
        ("low_overlap_positions".to_string(), low.to_string()),
        ("stable_positions".to_string(), (flat_labels.len() - low).to_string()),
    ];
    if !records.is_empty() {
        let top_k = traces.iter().map(|(_, t)| t.top_k).min().unwrap_or(0);
        let ls = summarize(&records, &regime, top_k)?;
        summary.extend([
            ("argmax_changes".to_string(), ls.changed.to_string()),
            ("argmax_change_rate".to_string(), num(ls.change_rate)),
            ("argmax_change_ci_low".to_string(), num(ls.change_ci.0)),
            ("argmax_change_ci_high".to_string(), num(ls.change_ci.1)),
            ("exact_ties".to_string(), ls.exact_ties.to_string()),
            ("mean_replacements".to_string(), num(ls.mean_replacements)),
            ("top_k_degraded".to_string(), ls.degraded.to_string()),
        ]);
    }
    if let Some(path) = checkpoint {
        run.input("checkpoint", &path);
        let model = load_model(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let dev = alpha_deviation_summary(&model.config, &model.params);
        write_csv_series(
            &run.output("alpha_deviation.csv"),
            &["layer", "dimension", "deviation"],
            dev.deviation
                .iter()
                .enumerate()
                .flat_map(|(l, row)| row.iter().enumerate().map(move |(d, v)| [l.to_string(), d.to_string(), num(*v)])),
        )?;
        let (min_alpha, clears) = alpha_premise(&model.config, &model.params);
        summary.push(("min_alpha".into(), num(min_alpha)));
        summary.push(("alpha_clears_bf16_epsilon".into(), clears.to_string()));
        summary.push(("alpha_pca".into(), if dev.pca.is_some() { "defined" } else { "undefined" }.into()));
    }
    std::fs::write(run.output("summary.txt"), format_kv(&summary))?;
    run.write_manifest(s, &[])?;
    println!("{} traces, threshold {threshold:.4}, {low} low-overlap positions", traces.len());
    println!("wrote {}", run.out.display());
    Ok(())
}
