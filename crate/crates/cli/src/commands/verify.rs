use sst_core::verify::{run_one, CRITERIA};

use crate::error::CliError;
use crate::run::Run;
use crate::settings::Settings;

/// Model settings are passed through unvalidated so that a tampered value
/// shows up as failing criteria.
pub fn run(_: &mut Run, s: &mut Settings) -> Result<(), CliError> {
    let cfg = s.model()?;
    let ids = s.list("criteria", (1..=CRITERIA.len()).collect())?;
    s.finish()?;
    if let Some(bad) = ids.iter().find(|i| **i == 0 || **i > CRITERIA.len()) {
        return Err(CliError::Validation(format!("no criterion {bad} (1..={})", CRITERIA.len())));
    }
    let mut failed = 0;
    for id in ids {
        let r = run_one(id, &cfg).expect("id checked above");
        println!("{r}");
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError::Acceptance(failed));
    }
    println!("all criteria passed");
    Ok(())
}
