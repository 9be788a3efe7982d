//! Small CSV formats owned by the command line: target spectra, designs
//! and reconstructions.

use std::path::Path;

use thinfilm::dataset::format_sig9;
use thinfilm::optics::{alternating_materials, wavelength_grid, Spectrum, GRID_LEN};

use crate::exit::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Reads a `wl,<value>` CSV on the 400..800 nm grid.
pub fn read_spectrum(path: &Path) -> CliResult<Spectrum> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut values = Vec::with_capacity(GRID_LEN);
    let mut grid = wavelength_grid();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let field = |k: usize| -> CliResult<f64> {
            record
                .get(k)
                .ok_or_else(|| CliError::data(format!("{}:{line}: expected columns wl,value", path.display())))?
                .parse::<f64>()
                .map_err(|e| CliError::data(format!("{}:{line}: {e}", path.display())))
        };
        let (wl, v) = (field(0)?, field(1)?);
        if let Some(expected) = grid.next() {
            if (wl - expected).abs() > 1e-6 {
                return Err(CliError::data(format!(
                    "{}:{line}: wavelength {wl} nm, expected {expected} nm",
                    path.display()
                )));
            }
        }
        values.push(v);
    }
    if values.len() != GRID_LEN {
        return Err(CliError::data(format!(
            "{}: target spectrum has {} rows, expected {GRID_LEN} (400..800 nm in 1 nm steps)",
            path.display(),
            values.len()
        )));
    }
    Spectrum::new(values).map_err(CliError::from)
}

pub fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("wl,T\n");
    for (wl, v) in wavelength_grid().zip(spectrum.values()) {
        out.push_str(&format!("{wl},{}\n", format_sig9(*v)));
    }
    out
}

pub fn reconstruction_csv(target: &Spectrum, predicted: &Spectrum) -> String {
    let mut out = String::from("wl,target,predicted\n");
    for ((wl, t), p) in wavelength_grid().zip(target.values()).zip(predicted.values()) {
        out.push_str(&format!("{wl},{},{}\n", format_sig9(*t), format_sig9(*p)));
    }
    out
}

pub fn thickness_csv(thicknesses_nm: &[f64]) -> String {
    let mut out = String::from("layer,material,thickness_nm\n");
    for (i, (d, m)) in thicknesses_nm.iter().zip(alternating_materials(thicknesses_nm.len())).enumerate() {
        out.push_str(&format!("{},{m},{d}\n", i + 1));
    }
    out
}

/// Numeric columns of a headed CSV, by header name.
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                col.push(field.parse::<f64>().map_err(|e| {
                    CliError::data(format!("{}:{}: {field:?}: {e}", path.display(), i + 2))
                })?);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn column(&self, name: &str) -> CliResult<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| CliError::data(format!("missing column {name:?} (found {:?})", self.headers)))
    }
}
