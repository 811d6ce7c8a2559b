//! File output helpers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::flow::MeasureFlow;
use crate::grid::TimeGrid;

/// Creates `dir/name` (and `dir`) and hands a buffered writer to `f`.
pub fn write_file<F>(dir: &Path, name: &str, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Flow in long format: `node, t, sample, value`.
pub fn write_flow_csv<W: Write>(flow: &MeasureFlow, grid: TimeGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "t", "sample", "value"])?;
    for k in 0..flow.nodes() {
        let t = grid.time(k).to_string();
        for (s, v) in flow.at(k).samples().iter().enumerate() {
            w.write_record([k.to_string(), t.clone(), s.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-node summary of a flow: `node, t, mean, min, max`.
pub fn write_flow_summary_csv<W: Write>(flow: &MeasureFlow, grid: TimeGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "t", "mean", "min", "max"])?;
    for k in 0..flow.nodes() {
        let s = flow.at(k).samples();
        w.write_record([
            k.to_string(),
            grid.time(k).to_string(),
            flow.at(k).mean().to_string(),
            s[0].to_string(),
            s[s.len() - 1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
