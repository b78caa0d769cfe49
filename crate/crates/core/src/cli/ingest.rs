//! CSV panels in and out.
//!
//! Three layouts are read:
//!
//! * long: `timestamp,asset,price` rows in any order;
//! * wide: a `t` column of timestamps followed by one price column per asset;
//! * panel: returns as written by [`write_panel`], with `# key=value`
//!   metadata lines before the header.
//!
//! Prices are aligned on the union of all timestamps. Missing prices are
//! forward-filled (back-filled before an asset's first observation); an
//! asset missing more than [`MAX_MISSING_FRACTION`] of the grid is dropped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::warn;

use super::config::PanelFormat;
use super::CliError;
use crate::panel::{PricePanel, ReturnPanel};

pub const MAX_MISSING_FRACTION: f64 = 0.05;
const PANEL_MAGIC: &str = "# xcorr panel";

#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Prices(PricePanel),
    Returns(ReturnPanel),
}

/// Outcome of aligning prices on a common grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FillReport {
    /// `(asset, filled bars)` for every asset that needed filling.
    pub filled: Vec<(String, usize)>,
    /// `(asset, missing bars)` for every dropped asset.
    pub dropped: Vec<(String, usize)>,
}

pub fn ingest(
    path: &Path,
    format: Option<PanelFormat>,
    bars_per_day: Option<usize>,
) -> Result<(Ingested, FillReport), CliError> {
    let text = read_text(path)?;
    let format = match format {
        Some(f) => f,
        None => sniff(&text),
    };
    let bpd = bars_per_day.unwrap_or(super::config::DEFAULT_BARS_PER_DAY);
    match format {
        PanelFormat::Long => {
            let (p, report) = read_long(path, &text, bpd)?;
            Ok((Ingested::Prices(p), report))
        }
        PanelFormat::Wide => {
            let (p, report) = read_wide(path, &text, bpd)?;
            Ok((Ingested::Prices(p), report))
        }
        PanelFormat::Panel => Ok((
            Ingested::Returns(read_panel(path, &text, bars_per_day)?),
            FillReport::default(),
        )),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn sniff(text: &str) -> PanelFormat {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    match first {
        Some(l) if l.starts_with('#') => PanelFormat::Panel,
        Some(l) => {
            let cols: Vec<String> = l.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
            if cols.len() == 3 && ["timestamp", "asset", "price"].iter().all(|c| cols.iter().any(|x| x == c)) {
                PanelFormat::Long
            } else {
                PanelFormat::Wide
            }
        }
        None => PanelFormat::Wide,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// CSV records with their 1-based line numbers; blank lines and `#`
/// comments are skipped.
fn records(path: &Path, text: &str) -> Result<std::vec::IntoIter<(usize, Vec<String>)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let line_of = |p: Option<&csv::Position>| p.map_or(0, |p| p.line() as usize);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, line_of(e.position()), e.to_string()))?;
        out.push((line_of(rec.position()), rec.iter().map(str::to_string).collect()));
    }
    Ok(out.into_iter())
}

fn read_long(path: &Path, text: &str, bpd: usize) -> Result<(PricePanel, FillReport), CliError> {
    let mut recs = records(path, text)?;
    let (hline, header) = recs.next().ok_or_else(|| parse_err(path, 1, "missing header row"))?;
    let col = |name: &str| {
        header
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(path, hline, format!("header lacks a `{name}` column")))
    };
    let (ct, ca, cp) = (col("timestamp")?, col("asset")?, col("price")?);

    let mut assets: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut obs: Vec<(i64, usize, f64)> = Vec::new();
    for (line, fields) in recs {
        if fields.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        let ts = parse_timestamp(path, line, &fields[ct])?;
        let price = parse_price(path, line, &fields[cp])?;
        let name = fields[ca].as_str();
        if name.is_empty() {
            return Err(parse_err(path, line, "empty asset name"));
        }
        let k = *index.entry(name.to_string()).or_insert_with(|| {
            assets.push(name.to_string());
            assets.len() - 1
        });
        obs.push((ts, k, price));
    }
    let mut grid: Vec<i64> = obs.iter().map(|o| o.0).collect();
    grid.sort_unstable();
    grid.dedup();
    let pos: HashMap<i64, usize> = grid.iter().enumerate().map(|(j, t)| (*t, j)).collect();
    let mut cells = vec![vec![None; grid.len()]; assets.len()];
    for (ts, k, price) in obs {
        let cell = &mut cells[k][pos[&ts]];
        if cell.is_some() {
            return Err(CliError::Duplicate {
                asset: assets[k].clone(),
                timestamp: ts,
            });
        }
        *cell = Some(price);
    }
    fill(assets, grid, cells, bpd)
}

fn read_wide(path: &Path, text: &str, bpd: usize) -> Result<(PricePanel, FillReport), CliError> {
    let mut recs = records(path, text)?;
    let (hline, header) = recs.next().ok_or_else(|| parse_err(path, 1, "missing header row"))?;
    if header.len() < 2 {
        return Err(parse_err(path, hline, "header needs a time column and at least one asset"));
    }
    let assets: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    for (i, a) in assets.iter().enumerate() {
        if a.is_empty() || assets[..i].contains(a) {
            return Err(parse_err(path, hline, format!("empty or repeated asset name `{a}`")));
        }
    }
    let mut grid = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); assets.len()];
    for (line, fields) in recs {
        if fields.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        let ts = parse_timestamp(path, line, &fields[0])?;
        if grid.last().is_some_and(|&prev| ts <= prev) {
            return Err(parse_err(path, line, "timestamps must be strictly increasing"));
        }
        grid.push(ts);
        for (k, f) in fields[1..].iter().enumerate() {
            cells[k].push(if f.is_empty() {
                None
            } else {
                Some(parse_price(path, line, f)?)
            });
        }
    }
    fill(assets, grid, cells, bpd)
}

fn parse_timestamp(path: &Path, line: usize, s: &str) -> Result<i64, CliError> {
    s.parse::<i64>()
        .map_err(|_| parse_err(path, line, format!("timestamp `{s}` is not an integer")))
}

fn parse_price(path: &Path, line: usize, s: &str) -> Result<f64, CliError> {
    match s.parse::<f64>() {
        Ok(p) if p.is_finite() && p > 0.0 => Ok(p),
        Ok(p) => Err(parse_err(path, line, format!("price must be positive, got {p}"))),
        Err(_) => Err(parse_err(path, line, format!("cannot parse price `{s}`"))),
    }
}

fn fill(
    assets: Vec<String>,
    grid: Vec<i64>,
    cells: Vec<Vec<Option<f64>>>,
    bpd: usize,
) -> Result<(PricePanel, FillReport), CliError> {
    let t = grid.len();
    let mut report = FillReport::default();
    let mut kept_assets = Vec::new();
    let mut prices = Vec::new();
    for (name, row) in assets.into_iter().zip(cells) {
        let missing = row.iter().filter(|c| c.is_none()).count();
        if missing as f64 > MAX_MISSING_FRACTION * t as f64 {
            warn!("dropping asset `{name}`: {missing} of {t} bars missing");
            report.dropped.push((name, missing));
            continue;
        }
        if missing > 0 {
            warn!("asset `{name}`: filled {missing} missing bar(s)");
            report.filled.push((name.clone(), missing));
        }
        let first = row.iter().flatten().next().copied().expect("asset has observations");
        let mut last = first;
        prices.push(
            row.into_iter()
                .map(|c| {
                    if let Some(p) = c {
                        last = p;
                    }
                    last
                })
                .collect(),
        );
        kept_assets.push(name);
    }
    if kept_assets.is_empty() {
        return Err(crate::Error::NoAssets.into());
    }
    Ok((PricePanel::new(kept_assets, grid, prices, bpd)?, report))
}

fn read_panel(path: &Path, text: &str, bars_per_day: Option<usize>) -> Result<ReturnPanel, CliError> {
    let mut meta: HashMap<&str, (usize, &str)> = HashMap::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if let Some(body) = l.strip_prefix('#') {
            if let Some((k, v)) = body.split_once('=') {
                meta.insert(k.trim(), (i + 1, v.trim()));
            }
        } else if !l.is_empty() {
            break;
        }
    }
    let meta_parse = |key: &str| -> Result<Option<f64>, CliError> {
        meta.get(key)
            .map(|(line, v)| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(path, *line, format!("bad `{key}` value `{v}`")))
            })
            .transpose()
    };
    let bpd = match bars_per_day {
        Some(b) => b,
        None => meta_parse("bars_per_day")?.map_or(super::config::DEFAULT_BARS_PER_DAY, |b| b as usize),
    };
    let dt = meta_parse("dt_seconds")?.unwrap_or(300.0);
    let standardized = meta.get("standardized").is_some_and(|(_, v)| *v == "true");

    let mut recs = records(path, text)?;
    let (hline, header) = recs.next().ok_or_else(|| parse_err(path, 1, "missing header row"))?;
    if header.len() < 2 {
        return Err(parse_err(path, hline, "header needs an index column and at least one asset"));
    }
    let assets: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); assets.len()];
    for (line, fields) in recs {
        if fields.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        for (k, f) in fields[1..].iter().enumerate() {
            if f.is_empty() {
                return Err(parse_err(path, line, format!("missing return for `{}`", assets[k])));
            }
            let v = f
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("cannot parse return `{f}`")))?;
            rows[k].push(v);
        }
    }
    let panel = ReturnPanel::new(assets, rows, bpd, dt)?;
    Ok(if standardized {
        panel.mark_standardized()?
    } else {
        panel
    })
}

/// Writes a return panel so that [`ingest`] reads it back bit for bit.
pub fn write_panel(path: &Path, r: &ReturnPanel) -> Result<(), CliError> {
    let mut s = String::new();
    writeln!(s, "{PANEL_MAGIC}").unwrap();
    writeln!(s, "# bars_per_day={}", r.bars_per_day()).unwrap();
    writeln!(s, "# dt_seconds={}", r.dt_seconds()).unwrap();
    writeln!(s, "# standardized={}", r.is_standardized()).unwrap();
    let mut w = csv::Writer::from_writer(s.into_bytes());
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(std::iter::once("t").chain(r.assets().iter().map(String::as_str)))
        .map_err(csv_err)?;
    let m = r.matrix();
    let mut record = Vec::with_capacity(r.n_assets() + 1);
    for j in 0..r.len() {
        record.clear();
        record.push(j.to_string());
        // `{:e}` prints the shortest representation that parses back to the
        // same float.
        record.extend((0..r.n_assets()).map(|k| format!("{:e}", m[(j, k)])));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    write_file(path, &bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: PathBuf::from(path),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn wide_three_rows() {
        let f = tmp("t,AAA,BBB\n0,10,20\n300,11,19\n600,12,21\n");
        let (got, report) = ingest(f.path(), Some(PanelFormat::Wide), None).unwrap();
        let Ingested::Prices(p) = got else { panic!() };
        assert_eq!(p.assets(), ["AAA", "BBB"]);
        assert_eq!(p.timestamps(), [0, 300, 600]);
        assert_eq!(p.prices()[1], [20.0, 19.0, 21.0]);
        assert_eq!(report, FillReport::default());
        let r = crate::panel::log_returns(&p).unwrap();
        assert_eq!((r.n_assets(), r.len()), (2, 2));
    }

    #[test]
    fn long_fills_one_gap() {
        let mut csv = String::from("timestamp,asset,price\n");
        for j in 0..40 {
            writeln!(csv, "{},A,{}", j * 60, 100 + j).unwrap();
            if j != 17 {
                writeln!(csv, "{},B,{}", j * 60, 50 + j).unwrap();
            }
        }
        let f = tmp(&csv);
        let (got, report) = ingest(f.path(), None, Some(10)).unwrap();
        let Ingested::Prices(p) = got else { panic!() };
        assert_eq!(report.filled, vec![("B".to_string(), 1)]);
        assert!(report.dropped.is_empty());
        assert_eq!(p.prices()[1][17], p.prices()[1][16]);
        assert_eq!(p.dt_seconds(), 60.0);
    }

    #[test]
    fn long_drops_sparse_asset_and_rejects_duplicates() {
        let mut csv = String::from("timestamp,asset,price\n");
        for j in 0..20 {
            writeln!(csv, "{j},A,1.5").unwrap();
            if j % 2 == 0 {
                writeln!(csv, "{j},B,2.5").unwrap();
            }
        }
        let f = tmp(&csv);
        let (got, report) = ingest(f.path(), Some(PanelFormat::Long), None).unwrap();
        let Ingested::Prices(p) = got else { panic!() };
        assert_eq!(p.assets(), ["A"]);
        assert_eq!(report.dropped, vec![("B".to_string(), 10)]);

        let f = tmp("timestamp,asset,price\n1,A,2\n2,A,3\n1,A,4\n");
        assert!(matches!(
            ingest(f.path(), None, None),
            Err(CliError::Duplicate { timestamp: 1, .. })
        ));
    }

    #[test]
    fn bad_row_reports_line() {
        let f = tmp("t,A\n0,1\n1,abc\n");
        match ingest(f.path(), Some(PanelFormat::Wide), None) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_return_is_an_error() {
        let f = tmp("# standardized=false\nt,A,B\n0,0.1,0.2\n1,,0.3\n");
        assert!(matches!(
            ingest(f.path(), None, None),
            Err(CliError::Parse { line: 4, .. })
        ));
    }
}
