//! Map archives and input tables.
//!
//! RMQ1 layout: the magic `RMQ1`, the map count and the side as `u64`
//! little endian, a one-byte real format flag (1 = 64-bit little-endian
//! IEEE reals), then `count · side²` reals, each map row-major. The CSV
//! alternative is a directory holding one `side × side` file per map.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use raremap::MapSet;

use crate::config::MapFormat;
use crate::error::{io_error, CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"RMQ1";
const REAL_F64_LE: u8 = 1;
const HEADER_LEN: usize = 4 + 8 + 8 + 1;

pub fn encode(maps: &MapSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * maps.flat().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(maps.len() as u64).to_le_bytes());
    out.extend_from_slice(&(maps.side() as u64).to_le_bytes());
    out.push(REAL_F64_LE);
    for v in maps.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> CliResult<MapSet> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CliError::Data("bad archive magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CliError::Data("truncated archive header".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (count, side) = (word(4), word(12));
    if bytes[20] != REAL_F64_LE {
        return Err(CliError::Data(format!("unsupported real format flag {}", bytes[20])));
    }
    let values = count
        .checked_mul(side)
        .and_then(|v| v.checked_mul(side))
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| CliError::Data("archive header overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if values.checked_mul(8) != Some(payload.len()) {
        return Err(CliError::Data(format!(
            "archive header announces {count} maps of side {side} ({values} reals) but the payload holds {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if count == 0 {
        return Ok(MapSet::new(side as usize));
    }
    Ok(MapSet::from_flat(side as usize, data)?)
}

fn csv_map_name(k: usize) -> String {
    format!("map_{:06}.csv", k + 1)
}

fn write_csv_dir(dir: &Path, maps: &MapSet) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let s = maps.side();
    for (k, m) in maps.iter().enumerate() {
        let path = dir.join(csv_map_name(k));
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for row in m.chunks_exact(s) {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

fn read_csv_map(path: &Path) -> CliResult<(usize, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        rows += 1;
        for field in rec.iter() {
            values.push(parse_real(field, path)?);
        }
    }
    if rows == 0 || values.len() != rows * rows {
        return Err(CliError::Data(format!(
            "{}: expected a square map, got {rows} rows and {} values",
            path.display(),
            values.len()
        )));
    }
    Ok((rows, values))
}

fn read_csv_dir(dir: &Path) -> CliResult<MapSet> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no CSV maps found", dir.display())));
    }
    let mut side = None;
    let mut data = Vec::new();
    for f in &files {
        let (s, v) = read_csv_map(f)?;
        if *side.get_or_insert(s) != s {
            return Err(CliError::Data(format!(
                "{}: side {s} differs from the first map's",
                f.display()
            )));
        }
        data.extend(v);
    }
    Ok(MapSet::from_flat(side.unwrap_or(0), data)?)
}

/// Reads an RMQ1 file, or a directory of CSV maps.
pub fn read_maps(path: &Path) -> CliResult<MapSet> {
    if path.is_dir() {
        return read_csv_dir(path);
    }
    decode(&fs::read(path).map_err(|e| io_error(path, e))?)
}

pub fn write_maps(path: &Path, maps: &MapSet, format: MapFormat) -> CliResult<()> {
    match format {
        MapFormat::Rmq1 => write_bytes(path, &encode(maps)),
        MapFormat::Csv => write_csv_dir(path, maps),
    }
}

/// File name (or directory name) conventionally used for an archive.
pub fn archive_name(stem: &str, format: MapFormat) -> String {
    match format {
        MapFormat::Rmq1 => format!("{stem}.rmq"),
        MapFormat::Csv => stem.to_string(),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| io_error(path, e))?;
    f.write_all(bytes).map_err(|e| io_error(path, e))
}

fn parse_real(field: &str, path: &Path) -> CliResult<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| CliError::Data(format!("{}: `{field}` is not a number", path.display())))?;
    if !v.is_finite() {
        return Err(CliError::Data(format!("{}: non-finite value `{field}`", path.display())));
    }
    Ok(v)
}

/// Input vectors from a CSV table with one header line.
pub fn read_inputs(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(|f| parse_real(f, path)).collect::<CliResult<Vec<f64>>>()?);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no input rows", path.display())));
    }
    Ok(rows)
}

pub fn write_inputs(path: &Path, rows: &[Vec<f64>]) -> CliResult<()> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut bytes = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        w.write_record(&header).map_err(err)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(err)?;
        }
        w.flush().map_err(|e| io_error(path, e))?;
    }
    write_bytes(path, &bytes)
}
