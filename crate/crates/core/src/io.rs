//! File output: CSV tables, JSON documents and gnuplot scripts.
//!
//! CSV files follow RFC 4180 (CRLF, quoted fields where needed) preceded by a
//! single `#` provenance line that gnuplot and most readers skip. Floats are
//! written with 17 significant digits so values round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::TrajectoryRecord;
use crate::ensemble::EnsembleResult;
use crate::error::{Error, Result};
use crate::noise::SampledPath;
use crate::observables::ConcurrenceSeries;
use crate::spectral::SpectrumEstimate;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_digest: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn new(config_digest: impl Into<String>, master_seed: u64) -> Self {
        Self { config_digest: config_digest.into(), master_seed }
    }

    fn line(&self) -> String {
        format!("# config_digest={} master_seed={}", self.config_digest, self.master_seed)
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

/// Write a CSV table; every row must have `header.len()` fields.
pub fn write_csv<I>(path: &Path, prov: &Provenance, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut buf = Vec::new();
    write!(buf, "{}\r\n", prov.line())?;
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(&mut buf);
        w.write_record(header).map_err(|e| io_err(path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| io_err(path, e))?;
        }
        w.flush()?;
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Pretty JSON with `config_digest` and `master_seed` merged into the top-level object.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.entry("config_digest").or_insert_with(|| prov.config_digest.clone().into());
        map.entry("master_seed").or_insert_with(|| prov.master_seed.into());
    }
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_path_csv(path: &Path, prov: &Provenance, p: &SampledPath) -> Result<()> {
    let g = *p.grid();
    let rows = p.values().iter().enumerate().map(|(n, v)| vec![fmt_f64(g.time(n)), fmt_f64(*v)]);
    write_csv(path, prov, &["t", "xi"], rows)
}

pub fn write_spectrum_csv(path: &Path, prov: &Provenance, est: &SpectrumEstimate) -> Result<()> {
    let rows = est.frequencies.iter().zip(&est.densities).map(|(w, d)| vec![fmt_f64(*w), fmt_f64(*d)]);
    write_csv(path, prov, &["omega", "density"], rows)
}

pub fn write_trajectory_csv(path: &Path, prov: &Provenance, rec: &TrajectoryRecord) -> Result<()> {
    let header = ["t", "re_c1", "im_c1", "re_c2", "im_c2", "re_c3", "im_c3", "re_i", "im_i", "norm"];
    let rows = rec.times().zip(&rec.states).map(|(t, s)| {
        [t, s.c1.re, s.c1.im, s.c2.re, s.c2.im, s.c3.re, s.c3.im, s.memory.re, s.memory.im, s.norm_sqr()]
            .iter()
            .map(|x| fmt_f64(*x))
            .collect()
    });
    write_csv(path, prov, &header, rows)
}

pub fn write_concurrence_csv(path: &Path, prov: &Provenance, c: &ConcurrenceSeries) -> Result<()> {
    let rows = (0..c.len()).map(|i| vec![fmt_f64(c.times[i]), fmt_f64(c.values[i]), fmt_f64(c.stderr[i])]);
    write_csv(path, prov, &["t", "concurrence", "stderr"], rows)
}

/// `result.json`, `concurrence.csv`, `rho.csv`, `norm.csv` and the final
/// density matrix in `rho_final.json`.
pub fn write_ensemble_dir<M: Serialize>(dir: &Path, result: &EnsembleResult, meta: &M) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let prov = Provenance::new(result.config_digest.clone(), result.master_seed);
    write_json(&dir.join("result.json"), &prov, meta)?;
    write_concurrence_csv(&dir.join("concurrence.csv"), &prov, &result.concurrence)?;
    let times = result.times();
    let rho = times.iter().zip(&result.rho_entries).map(|(t, r)| {
        [*t, r.rho22, r.rho33, r.rho23_re, r.rho23_im].iter().map(|x| fmt_f64(*x)).collect()
    });
    write_csv(&dir.join("rho.csv"), &prov, &["t", "rho22", "rho33", "re_rho23", "im_rho23"], rho)?;
    let norm = times.iter().zip(&result.mean_norm).map(|(t, n)| vec![fmt_f64(*t), fmt_f64(*n)]);
    write_csv(&dir.join("norm.csv"), &prov, &["t", "mean_norm"], norm)?;
    if let Some(snap) = crate::ensemble::final_density_matrix(result)? {
        write_json(&dir.join("rho_final.json"), &prov, &snap)?;
    }
    Ok(())
}

/// gnuplot script with the provenance in its leading comment.
pub fn write_gnuplot(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    let text = format!("{}\n{body}", prov.line());
    fs::write(path, text).map_err(|e| io_err(path, e))
}
