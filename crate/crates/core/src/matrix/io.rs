use std::io::{Read, Write};

use super::SymmetricMatrix;
use crate::error::{Error, Result};

/// Writes one matrix row per line with 17 significant digits per entry.
pub fn write_matrix_csv<W: Write>(m: &SymmetricMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.dim() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a square CSV matrix; near-symmetric input is symmetrized, anything else rejected.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<SymmetricMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}, column {}: '{field}' is not a number", i + 1, j + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidMatrix("empty matrix file".into()));
    }
    SymmetricMatrix::from_rows(&rows)
}
