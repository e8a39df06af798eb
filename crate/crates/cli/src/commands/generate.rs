use std::path::Path;
use std::str::FromStr;

use sst_core::inference::{generate_turns, staged_compute, Flat, GenerationRun, TraceSpec};
use sst_core::model::SstModel;
use sst_core::probe::{probe_driven_generate, ProbeModel};
use sst_core::traceio::{load_model, num, write_csv_series, Container, TraceArchive};

use super::join_tokens;
use crate::data::{read_questions, Question};
use crate::error::CliError;
use crate::run::Run;
use crate::settings::Settings;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Flat,
    Staged,
    Probe,
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flat" => Ok(Policy::Flat),
            "staged" => Ok(Policy::Staged),
            "probe" => Ok(Policy::Probe),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Flat => "flat",
            Policy::Staged => "staged",
            Policy::Probe => "probe",
        })
    }
}

/// Settings shared by every command that generates.
pub struct GenSettings {
    pub max_new: usize,
    pub spec: TraceSpec,
}

impl GenSettings {
    pub fn read(s: &mut Settings) -> Result<Self, CliError> {
        let max_new = s.get("max_new", 16usize)?;
        let positions = s.get("record_positions", "10".to_string())?;
        let positions = match positions.as_str() {
            "all" => None,
            n => Some(n.parse().map_err(|_| CliError::Validation(format!("record_positions: {n:?} is not a count or `all`")))?),
        };
        let top_k = s.get("top_k", 100usize)?;
        Ok(Self { max_new, spec: TraceSpec { positions, top_k } })
    }
}

pub fn load_checkpoint(run: &mut Run, s: &mut Settings) -> Result<SstModel, CliError> {
    let path = s.required_path("checkpoint")?;
    run.input("checkpoint", &path);
    load_model(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn load_questions(run: &mut Run, s: &mut Settings) -> Result<Vec<Question>, CliError> {
    let path = s.required_path("prompts")?;
    run.input("prompts", &path);
    read_questions(&path)
}

pub fn load_probe(path: &Path) -> Result<ProbeModel, CliError> {
    Container::read(path)
        .and_then(|c| ProbeModel::from_container(&c))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn turns(q: &Question, max_new: usize) -> Vec<(Vec<u32>, usize)> {
    q.turns.iter().map(|t| (t.clone(), max_new)).collect()
}

pub fn flat_question(model: &SstModel, q: &Question, depth: usize, g: &GenSettings) -> Result<Vec<GenerationRun>, CliError> {
    Ok(generate_turns(model, &turns(q, g.max_new), &mut Flat(depth), &g.spec)?)
}

pub fn outcome(q: &Question, runs: &[GenerationRun]) -> Option<bool> {
    q.passes(&runs.last().map(|r| r.generated.clone()).unwrap_or_default())
}

/// Traces per turn plus one CSV row per turn.
fn write_runs(dir: &Path, questions: &[Question], runs: &[Vec<GenerationRun>]) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (qi, (q, turns)) in questions.iter().zip(runs).enumerate() {
        for (ti, r) in turns.iter().enumerate() {
            let name = format!("q{qi:03}_t{ti}.trace");
            TraceArchive::from_run(r)?.write(&dir.join(&name))?;
            names.push(name);
            let passed = if ti + 1 == turns.len() { outcome(q, turns).map_or(String::new(), |p| p.to_string()) } else { String::new() };
            rows.push([
                qi.to_string(),
                ti.to_string(),
                r.depths.first().map_or(String::new(), usize::to_string),
                join_tokens(&r.generated),
                passed,
            ]);
        }
    }
    write_csv_series(&dir.join("generations.csv"), &["question", "turn", "depth", "generated", "passed"], rows)?;
    names.push("generations.csv".into());
    Ok(names)
}

pub fn run(run: &mut Run, s: &mut Settings) -> Result<(), CliError> {
    let model = load_checkpoint(run, s)?;
    let questions = load_questions(run, s)?;
    let policy = s.get("policy", Policy::Flat)?;
    let g = GenSettings::read(s)?;
    let repeat = s.get("repeat", 1usize)?;
    let (iters, i_max, probe) = match policy {
        Policy::Flat => (s.get("iters", 1usize)?, 0, None),
        Policy::Staged => (0, s.get("i_max", 4usize)?, None),
        Policy::Probe => {
            let i_max = s.get("i_max", 4usize)?;
            let path = s.path("probe")?.ok_or_else(|| CliError::Validation("policy=probe needs probe=PATH".into()))?;
            run.input("probe", &path);
            (0, i_max, Some(load_probe(&path)?))
        }
    };
    s.finish()?;
    if policy == Policy::Flat && iters == 0 || policy != Policy::Flat && i_max == 0 {
        return Err(CliError::Validation("iteration depth must be at least 1".into()));
    }
    if repeat == 0 {
        return Err(CliError::Validation("repeat must be at least 1".into()));
    }
    if policy == Policy::Staged && questions.iter().any(|q| q.expected.is_none()) {
        return Err(CliError::Validation("policy=staged needs an expected answer on every question".into()));
    }
    run.create_out()?;

    // Each stage of a staged run is a flat run at that depth.
    let depths: Vec<usize> = match policy {
        Policy::Flat => vec![iters],
        Policy::Staged => (1..=i_max).collect(),
        Policy::Probe => vec![i_max],
    };
    let mut per_depth = Vec::new();
    for &depth in &depths {
        let once = || -> Result<Vec<Vec<GenerationRun>>, CliError> {
            questions
                .iter()
                .map(|q| match &probe {
                    Some(p) => Ok(probe_driven_generate(&model, p, &turns(q, g.max_new), depth, &g.spec)?),
                    None => flat_question(&model, q, depth, &g),
                })
                .collect()
        };
        let first = once()?;
        for k in 1..repeat {
            if once()? != first {
                return Err(CliError::Runtime(format!("repeat run {} differs from the first at depth {depth}", k + 1)));
            }
        }
        per_depth.push(first);
    }

    let mut outputs = Vec::new();
    if policy == Policy::Staged {
        let mut outcomes = vec![Vec::new(); questions.len()];
        for (k, runs) in per_depth.iter().enumerate() {
            let sub = format!("stage{}", k + 1);
            for name in write_runs(&run.out.join(&sub), &questions, runs)? {
                outputs.push(format!("{sub}/{name}"));
            }
            for (qi, (q, r)) in questions.iter().zip(runs).enumerate() {
                outcomes[qi].push(outcome(q, r).unwrap_or(false));
            }
        }
        let caps = staged_compute(&outcomes)?;
        write_csv_series(
            &run.output("capacity.csv"),
            &["stage", "capacity"],
            caps.iter().enumerate().map(|(k, c)| [(k + 1).to_string(), num(*c)]),
        )?;
        println!("staged capacities: {}", caps.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join(" "));
    } else {
        outputs = write_runs(&run.out, &questions, &per_depth[0])?;
        let passed: Vec<bool> = questions.iter().zip(&per_depth[0]).filter_map(|(q, r)| outcome(q, r)).collect();
        if !passed.is_empty() {
            println!("{} of {} questions pass", passed.iter().filter(|p| **p).count(), passed.len());
        }
    }
    for o in outputs {
        run.output(&o);
    }
    run.write_manifest(s, &[])?;
    println!("wrote {}", run.out.display());
    Ok(())
}
