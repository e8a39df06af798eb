//! On-disk formats: trace archives, checkpoints, key=value files and CSV.

pub mod checkpoint;
pub mod csv_out;
pub mod kv;
pub mod trace;

pub use checkpoint::{load_model, model_container, model_from_container, save_model, Container};
pub use csv_out::{num, write_csv_series};
pub use kv::{format_kv, parse_kv, parse_override, read_kv, write_kv, Setting};
pub use trace::TraceArchive;
