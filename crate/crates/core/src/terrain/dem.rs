//! DEM files: a one-line text header followed by little-endian `f64`
//! heights, or a CSV variant with the same header fields.
//!
//! ```text
//! KDEM1 rows=81 cols=81 resolution=0.5 origin_x=-20 origin_y=-20\n<rows*cols*8 bytes>
//! KDEM-CSV,81,81,0.5,-20,-20\n<row 0 heights>\n<row 1 heights>...
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use super::HeightGrid;
use crate::error::{Error, Result};

pub const DEM_MAGIC: &str = "KDEM1";
const CSV_MAGIC: &str = "KDEM-CSV";

pub fn write_dem_binary<W: Write>(grid: &HeightGrid, mut w: W) -> Result<()> {
    let [ox, oy] = grid.origin();
    writeln!(
        w,
        "{DEM_MAGIC} rows={} cols={} resolution={} origin_x={} origin_y={}",
        grid.rows(),
        grid.cols(),
        grid.resolution(),
        ox,
        oy
    )?;
    for h in grid.heights() {
        w.write_all(&h.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_dem_csv<W: Write>(grid: &HeightGrid, mut w: W) -> Result<()> {
    let [ox, oy] = grid.origin();
    writeln!(w, "{CSV_MAGIC},{},{},{},{},{}", grid.rows(), grid.cols(), grid.resolution(), ox, oy)?;
    for row in grid.heights().chunks(grid.cols()) {
        let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads either DEM form, detected from the header magic.
pub fn read_dem(path: impl AsRef<Path>) -> Result<HeightGrid> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dem_from(std::io::BufReader::new(file))
}

pub fn read_dem_from<R: BufRead>(mut r: R) -> Result<HeightGrid> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let header = header.trim_end();
    if let Some(rest) = header.strip_prefix(DEM_MAGIC) {
        let mut fields = std::collections::HashMap::new();
        for tok in rest.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad DEM header token {tok:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| -> Result<&str> {
            fields.get(k).copied().ok_or_else(|| Error::Format(format!("DEM header missing {k}")))
        };
        let rows: usize = parse(get("rows")?)?;
        let cols: usize = parse(get("cols")?)?;
        let res: f64 = parse(get("resolution")?)?;
        let origin = [parse(get("origin_x")?)?, parse(get("origin_y")?)?];
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != rows * cols * 8 {
            return Err(Error::Format(format!(
                "DEM payload has {} bytes, expected {}",
                bytes.len(),
                rows * cols * 8
            )));
        }
        let heights = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        HeightGrid::new(origin, res, rows, cols, heights)
    } else if let Some(rest) = header.strip_prefix(CSV_MAGIC) {
        let vals: Vec<&str> = rest.trim_start_matches(',').split(',').collect();
        if vals.len() != 5 {
            return Err(Error::Format("CSV DEM header needs rows,cols,resolution,origin_x,origin_y".into()));
        }
        let rows: usize = parse(vals[0])?;
        let cols: usize = parse(vals[1])?;
        let res: f64 = parse(vals[2])?;
        let origin = [parse(vals[3])?, parse(vals[4])?];
        let mut heights = Vec::with_capacity(rows * cols);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line.split(',').map(|t| parse(t.trim())).collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Error::Format(format!("CSV DEM row has {} values, expected {cols}", row.len())));
            }
            heights.extend(row);
        }
        HeightGrid::new(origin, res, rows, cols, heights)
    } else {
        Err(Error::Format("unrecognised DEM header".into()))
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse {s:?}")))
}
