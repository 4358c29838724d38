use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};

use super::{normalize_power, FarmMeta, ScenarioDataset, Terrain};
use crate::error::{Error, Result};

/// Result of [`load_csv`].
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: ScenarioDataset,
    /// Calendar days skipped because some farm lacked a reading.
    pub dropped_days: usize,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str], optional: &[&str]) -> Result<usize> {
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let ok = names.len() >= expected.len()
        && names.len() <= expected.len() + optional.len()
        && names.iter().zip(expected.iter().chain(optional)).all(|(a, b)| a == b);
    if !ok {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), names.join(",")),
        ));
    }
    Ok(names.len())
}

fn records(path: &Path, reader: csv::Reader<File>) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    reader.into_records().map(move |r| match r {
        Ok(rec) => {
            let line = rec.position().map_or(0, |p| p.line());
            Ok((line, rec))
        }
        Err(e) => {
            let line = e.position().map_or(0, |p| p.line());
            Err(parse_err(path, line, e.to_string()))
        }
    })
}

/// Reads `farm_id,terrain,max_power`.
pub(crate) fn read_meta(path: &Path) -> Result<Vec<FarmMeta>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &["farm_id", "terrain", "max_power"], &[])?;
    let mut farms = Vec::new();
    for rec in records(path, reader) {
        let (line, rec) = rec?;
        let terrain: Terrain = rec[1].parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?;
        let max_power: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid max_power {:?}", &rec[2])))?;
        if !(max_power > 0.0) || !max_power.is_finite() {
            return Err(parse_err(path, line, format!("max_power must be positive, got {max_power}")));
        }
        if farms.iter().any(|f: &FarmMeta| f.farm_id == rec[0]) {
            return Err(parse_err(path, line, format!("duplicate farm_id {:?}", &rec[0])));
        }
        farms.push(FarmMeta {
            farm_id: rec[0].to_string(),
            terrain,
            max_power,
        });
    }
    if farms.is_empty() {
        return Err(Error::data(format!("{} lists no farms", path.display())));
    }
    Ok(farms)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        // Local wall-clock time of the recorded offset; no conversion.
        return Some(t.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Ingests raw `timestamp,farm_id,power` readings into normalized day samples.
///
/// Readings are bucketed by calendar day of their (unconverted) timestamp and
/// by `resolution_hours`-long step within the day. A day is kept only when
/// every farm has exactly one reading for each of its `24 / resolution_hours`
/// steps; an empty `power` field counts as a missing reading.
pub fn load_csv(data_path: impl AsRef<Path>, meta_path: impl AsRef<Path>, resolution_hours: f64) -> Result<Ingested> {
    let data_path = data_path.as_ref();
    let farms = read_meta(meta_path.as_ref())?;
    let steps_per_day = 24.0 / resolution_hours;
    if !(resolution_hours > 0.0) || steps_per_day.fract() != 0.0 {
        return Err(Error::config(format!(
            "resolution of {resolution_hours} h does not divide a day"
        )));
    }
    let horizon = steps_per_day as usize;
    let step_minutes = (resolution_hours * 60.0).round() as u32;
    let index: HashMap<&str, usize> = farms.iter().enumerate().map(|(i, f)| (f.farm_id.as_str(), i)).collect();

    // day -> per (farm, step): (reading count, last value)
    let mut days: BTreeMap<NaiveDate, Vec<(u32, Option<f64>)>> = BTreeMap::new();
    let mut reader = csv_reader(data_path)?;
    check_header(data_path, &mut reader, &["timestamp", "farm_id", "power"], &[])?;
    for rec in records(data_path, reader) {
        let (line, rec) = rec?;
        if rec.len() != 3 {
            return Err(parse_err(data_path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| parse_err(data_path, line, format!("invalid timestamp {:?}", &rec[0])))?;
        let farm = *index
            .get(&rec[1])
            .ok_or_else(|| parse_err(data_path, line, format!("unknown farm_id {:?}", &rec[1])))?;
        let minute_of_day = ts.hour() * 60 + ts.minute();
        if ts.second() != 0 || minute_of_day % step_minutes != 0 {
            return Err(parse_err(
                data_path,
                line,
                format!("timestamp {:?} is not on a {resolution_hours} h step boundary", &rec[0]),
            ));
        }
        let step = (minute_of_day / step_minutes) as usize;
        let power = if rec[2].is_empty() {
            None
        } else {
            let v: f64 = rec[2]
                .parse()
                .map_err(|_| parse_err(data_path, line, format!("invalid power {:?}", &rec[2])))?;
            if !v.is_finite() {
                return Err(parse_err(data_path, line, format!("non-finite power {v}")));
            }
            Some(normalize_power(v, farms[farm].max_power))
        };
        let cells = days
            .entry(ts.date())
            .or_insert_with(|| vec![(0, None); farms.len() * horizon]);
        let cell = &mut cells[farm * horizon + step];
        cell.0 += 1;
        cell.1 = power;
    }

    let mut samples = Vec::new();
    let mut dropped_days = 0;
    for cells in days.into_values() {
        if cells.iter().all(|(count, v)| *count == 1 && v.is_some()) {
            samples.push(cells.into_iter().map(|(_, v)| v.unwrap_or_default()).collect());
        } else {
            dropped_days += 1;
        }
    }
    if dropped_days > 0 {
        log::warn!("{}: dropped {dropped_days} incomplete days", data_path.display());
    }
    Ok(Ingested {
        dataset: ScenarioDataset::new(farms, horizon, samples)?,
        dropped_days,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_meta(path: &Path, farms: &[FarmMeta]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "farm_id,terrain,max_power").map_err(io)?;
    for f in farms {
        writeln!(w, "{},{},{}", f.farm_id, f.terrain, f.max_power).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `day_index,farm_id,step,power_normalized[,source]` rows.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a write/read cycle is bit-exact.
pub fn write_samples_csv(path: impl AsRef<Path>, dataset: &ScenarioDataset, source: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    match source {
        Some(_) => writeln!(w, "day_index,farm_id,step,power_normalized,source"),
        None => writeln!(w, "day_index,farm_id,step,power_normalized"),
    }
    .map_err(io)?;
    for s in 0..dataset.len() {
        for (f, farm) in dataset.farms().iter().enumerate() {
            for (step, v) in dataset.farm_row(s, f).iter().enumerate() {
                match source {
                    Some(src) => writeln!(w, "{s},{},{step},{v},{src}", farm.farm_id),
                    None => writeln!(w, "{s},{},{step},{v}", farm.farm_id),
                }
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// Reads a samples CSV against a known farm list, returning the dataset and
/// the `source` tag when the file carries one.
pub fn read_samples_csv(path: impl AsRef<Path>, farms: &[FarmMeta]) -> Result<(ScenarioDataset, Option<String>)> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let width = check_header(
        path,
        &mut reader,
        &["day_index", "farm_id", "step", "power_normalized"],
        &["source"],
    )?;
    let index: HashMap<&str, usize> = farms.iter().enumerate().map(|(i, f)| (f.farm_id.as_str(), i)).collect();
    let mut cells: BTreeMap<u64, HashMap<(usize, usize), f64>> = BTreeMap::new();
    let mut source: Option<String> = None;
    let mut horizon = 0;
    for rec in records(path, reader) {
        let (line, rec) = rec?;
        if rec.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, found {}", rec.len())));
        }
        let day: u64 = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid day_index {:?}", &rec[0])))?;
        let farm = *index
            .get(&rec[1])
            .ok_or_else(|| parse_err(path, line, format!("unknown farm_id {:?}", &rec[1])))?;
        let step: usize = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid step {:?}", &rec[2])))?;
        let v: f64 = rec[3]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid power {:?}", &rec[3])))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(parse_err(path, line, format!("normalized power {v} outside [0, 1]")));
        }
        if width == 5 {
            match &source {
                None => source = Some(rec[4].to_string()),
                Some(s) if s != &rec[4] => {
                    return Err(parse_err(path, line, format!("mixed sources {s:?} and {:?}", &rec[4])))
                }
                _ => {}
            }
        }
        horizon = horizon.max(step + 1);
        if cells.entry(day).or_default().insert((farm, step), v).is_some() {
            return Err(parse_err(path, line, format!("duplicate cell day {day}, farm {:?}, step {step}", &rec[1])));
        }
    }
    if cells.is_empty() {
        return Err(Error::data(format!("{} contains no samples", path.display())));
    }
    let mut samples = Vec::with_capacity(cells.len());
    for (day, map) in cells {
        let mut sample = Vec::with_capacity(farms.len() * horizon);
        for f in 0..farms.len() {
            for step in 0..horizon {
                let v = map.get(&(f, step)).ok_or_else(|| {
                    Error::data(format!(
                        "{}: day {day} lacks farm {:?} step {step}",
                        path.display(),
                        farms[f].farm_id
                    ))
                })?;
                sample.push(*v);
            }
        }
        samples.push(sample);
    }
    Ok((ScenarioDataset::new(farms.to_vec(), horizon, samples)?, source))
}

/// Writes `meta.csv` and `samples.csv` into `dir`, creating it if needed.
pub fn write_archive(dir: impl AsRef<Path>, dataset: &ScenarioDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_meta(&dir.join("meta.csv"), dataset.farms())?;
    write_samples_csv(dir.join("samples.csv"), dataset, None)
}

pub fn read_archive(dir: impl AsRef<Path>) -> Result<ScenarioDataset> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    let farms = read_meta(&dir.join("meta.csv"))?;
    Ok(read_samples_csv(dir.join("samples.csv"), &farms)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn meta(dir: &Path) -> PathBuf {
        write(dir, "meta.csv", "farm_id,terrain,max_power\nw1,flatland,2000\nw2,offshore,5000\n")
    }

    fn readings(days: &[u32], skip: Option<(u32, &str, u32)>) -> String {
        let mut s = String::from("timestamp,farm_id,power\n");
        for &d in days {
            for h in 0..24 {
                for (farm, max) in [("w1", 2000.0), ("w2", 5000.0)] {
                    if skip == Some((d, farm, h)) {
                        continue;
                    }
                    let p = max * (h as f64 / 23.0);
                    writeln!(s, "2017-03-{d:02}T{h:02}:00:00,{farm},{p}").unwrap();
                }
            }
        }
        s
    }

    #[test]
    fn complete_days_become_samples() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.csv", &readings(&[1, 2, 3], None));
        let got = load_csv(&data, meta(dir.path()), 1.0).unwrap();
        assert_eq!(got.dropped_days, 0);
        assert_eq!(got.dataset.len(), 3);
        assert_eq!(got.dataset.parks(), 2);
        assert_eq!(got.dataset.horizon(), 24);
        // Reading at max power normalizes to exactly one.
        assert_eq!(got.dataset.value(0, 1, 23), 1.0);
        assert_eq!(got.dataset.value(2, 0, 0), 0.0);
    }

    #[test]
    fn incomplete_day_is_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.csv", &readings(&[1, 2, 3], Some((2, "w2", 17))));
        let got = load_csv(&data, meta(dir.path()), 1.0).unwrap();
        assert_eq!(got.dropped_days, 1);
        assert_eq!(got.dataset.len(), 2);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = readings(&[1], None);
        body.push_str("2017-03-02T00:00:00,w1,abc\n");
        let data = write(dir.path(), "d.csv", &body);
        match load_csv(&data, meta(dir.path()), 1.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 50),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_farm_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.csv", "timestamp,farm_id,power\n2017-03-01T00:00:00,zz,3\n");
        let err = load_csv(&data, meta(dir.path()), 1.0).unwrap_err();
        assert!(err.to_string().contains("unknown farm_id"));
    }

    #[test]
    fn three_hour_resolution_gives_eight_steps() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.csv", "farm_id,terrain,max_power\ns1,solar,10\n");
        let mut body = String::from("timestamp,farm_id,power\n");
        for h in (0..24).step_by(3) {
            writeln!(body, "2015-06-01 {h:02}:00:00,s1,{}", h as f64 / 3.0).unwrap();
        }
        let data = write(dir.path(), "d.csv", &body);
        let got = load_csv(&data, m, 3.0).unwrap();
        assert_eq!(got.dataset.horizon(), 8);
        assert!((got.dataset.value(0, 0, 7) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let farms = vec![
            FarmMeta { farm_id: "a".into(), terrain: Terrain::Forest, max_power: 1.0 },
            FarmMeta { farm_id: "b".into(), terrain: Terrain::Offshore, max_power: 3.5 },
        ];
        let samples = (0..4)
            .map(|s| (0..16).map(|i| ((s * 16 + i) as f64 * 0.123_456_789_f64).sin().abs()).collect())
            .collect();
        let ds = ScenarioDataset::new(farms, 8, samples).unwrap();
        write_archive(dir.path(), &ds).unwrap();
        assert_eq!(read_archive(dir.path()).unwrap(), ds);

        let tagged = dir.path().join("gen.csv");
        write_samples_csv(&tagged, &ds, Some("dc-wgan")).unwrap();
        let (back, source) = read_samples_csv(&tagged, ds.farms()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(source.as_deref(), Some("dc-wgan"));
    }

    #[test]
    fn empty_samples_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "day_index,farm_id,step,power_normalized\n");
        let farms = vec![FarmMeta { farm_id: "a".into(), terrain: Terrain::Forest, max_power: 1.0 }];
        assert!(read_samples_csv(p, &farms).is_err());
    }
}
