use sst_core::model::SstParams;
use sst_core::traceio::{num, save_model, write_csv_series};
use sst_core::trainer::{copy_task, train, Dataset, OptimConfig, TrainConfig, TrainPath};

use crate::data::read_examples;
use crate::error::CliError;
use crate::run::Run;
use crate::settings::Settings;

pub fn run(run: &mut Run, s: &mut Settings) -> Result<(), CliError> {
    let cfg = s.model()?;
    let steps = s.get("steps", 500usize)?;
    let d = OptimConfig::default();
    let optim = OptimConfig {
        lr_stream: s.get("lr_stream", d.lr_stream)?,
        lr_base: s.get("lr_base", d.lr_base)?,
        warmup_steps: s.get("warmup_steps", d.warmup_steps)?,
        total_steps: s.get("total_steps", steps)?,
        min_lr_ratio: s.get("min_lr_ratio", d.min_lr_ratio)?,
        beta1: s.get("beta1", d.beta1)?,
        beta2: s.get("beta2", d.beta2)?,
        eps: s.get("eps", d.eps)?,
        weight_decay: s.get("weight_decay", d.weight_decay)?,
        clip_norm: s.get("clip_norm", d.clip_norm)?,
    };
    let t = TrainConfig::default();
    let tc = TrainConfig {
        steps,
        path: s.get("path", TrainPath::TwoPass)?,
        accumulation: s.get("accumulation", t.accumulation)?,
        validate_every: s.get("validate_every", t.validate_every)?,
        optim,
        stop_grad_pass1: false,
    };

    let data = match s.path("data")? {
        Some(path) => {
            run.input("data", &path);
            let validation = match s.path("validation")? {
                Some(v) => {
                    run.input("validation", &v);
                    read_examples(&v)?
                }
                None => Vec::new(),
            };
            Dataset { train: read_examples(&path)?, validation }
        }
        None => {
            let count = s.get("copy_count", 2000usize)?;
            let len = s.get("copy_len", 8usize)?;
            let alphabet = s.get("copy_alphabet", 32u32)?;
            let held_out = s.get("copy_validation", 64usize)?;
            Dataset {
                train: copy_task(count, len, alphabet, cfg.vocab, run.seed)?,
                validation: copy_task(held_out, len, alphabet, cfg.vocab, run.seed.wrapping_add(1))?,
            }
        }
    };
    s.finish()?;
    cfg.validate()?;
    tc.validate()?;
    run.create_out()?;

    let init = SstParams::init(&cfg, run.seed)?;
    let report = train(&cfg, init, &data, &tc)?;
    let model = sst_core::model::SstModel::new(cfg.clone(), report.params.clone())?;
    save_model(&model, &run.output("checkpoint.sst"))?;
    write_csv_series(
        &run.output("loss.csv"),
        &["step", "loss", "grad_norm", "clipped", "lr_base", "lr_stream"],
        report.losses.iter().zip(&report.steps).map(|(l, i)| {
            [i.step.to_string(), num(*l), num(i.grad_norm), i.clipped.to_string(), num(i.lr_base), num(i.lr_stream)]
        }),
    )?;
    write_csv_series(
        &run.output("validation.csv"),
        &["step", "loss"],
        report.validation.iter().map(|(st, l)| [st.to_string(), num(*l)]),
    )?;
    let mut extra: Vec<(String, String)> = cfg.to_pairs().into_iter().map(|(k, v)| (format!("model.{k}"), v)).collect();
    extra.push(("forward_passes".into(), report.forward_passes.to_string()));
    run.write_manifest(s, &extra)?;
    if let (Some(first), Some(last)) = (report.losses.first(), report.losses.last()) {
        println!("trained {steps} steps: loss {first:.4} -> {last:.4}");
    }
    println!("wrote {}", run.out.display());
    Ok(())
}
