pub mod analyze;
pub mod evaluate;
pub mod generate;
pub mod probe;
pub mod train;
pub mod verify;

use sst_core::traceio::num;

/// Space-separated token ids for CSV cells.
pub fn join_tokens(t: &[u32]) -> String {
    t.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}
