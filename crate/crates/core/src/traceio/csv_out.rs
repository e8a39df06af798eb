use std::path::Path;

use crate::error::Result;

/// Writes a header row and then `rows` in the given order.
pub fn write_csv_series<I, R>(path: &Path, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Formats a float so it reads back bit-identically.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_and_known_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_csv_series(&p, &["x", "y"], Vec::<Vec<String>>::new()).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "x,y\n");
        write_csv_series(&p, &["x", "y"], [[num(1.0), num(2.5)], [num(-3.0), num(0.1)]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "x,y\n1.0,2.5\n-3.0,0.1\n");
    }
}
