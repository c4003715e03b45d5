//! Trajectory CSV format and dataset directories.
//!
//! One CSV per trajectory with header `t,dim_0,…,dim_{D−1},mask,is_changepoint`;
//! floats carry 17 significant digits so every f64 round-trips bit-exactly.
//! A dataset is a directory of numbered CSVs per split plus `manifest.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{MaskClass, Trajectory};

pub const CSV_FORMAT_VERSION: u32 = 1;

/// 17 significant digits: exact round-trip for every finite f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn malformed(path: &Path, msg: impl Into<String>) -> Error {
    Error::MalformedFile { path: path.display().to_string(), msg: msg.into() }
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let d = traj.dim();
    let dims: Vec<String> = (0..d).map(|i| format!("dim_{i}")).collect();
    writeln!(w, "t,{},mask,is_changepoint", dims.join(","))?;
    for i in 0..traj.len() {
        let vals: Vec<String> = traj.values[i].iter().map(|&v| format_f64(v)).collect();
        writeln!(
            w,
            "{},{},{},{}",
            format_f64(traj.times[i]),
            vals.join(","),
            traj.mask[i].to_code(),
            u8::from(traj.changepoints.binary_search(&i).is_ok()),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed(path, "empty file"))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "t" || cols[cols.len() - 2] != "mask" {
        return Err(malformed(path, format!("unexpected header `{header}`")));
    }
    let d = cols.len() - 3;

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut changepoints = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = times.len();
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 3 {
            return Err(malformed(path, format!("row {row}: expected {} fields", d + 3)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| malformed(path, format!("row {row}: {e}")))
        };
        times.push(parse(fields[0])?);
        values.push(fields[1..=d].iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?);
        let mask_code: u8 = fields[d + 1]
            .parse()
            .map_err(|e| malformed(path, format!("row {row}: bad mask ({e})")))?;
        mask.push(MaskClass::from_code(mask_code)?);
        match fields[d + 2] {
            "0" => {}
            "1" => changepoints.push(row),
            other => return Err(malformed(path, format!("row {row}: bad is_changepoint `{other}`"))),
        }
    }

    let traj = Trajectory { times, values, mask, changepoints, segment_params: Vec::new() };
    traj.validate()
        .map_err(|e| malformed(path, format!("invalid trajectory: {e}")))?;
    Ok(traj)
}

/// Spec echo plus provenance for a generated dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Generator family, e.g. "sine" or "lotka_volterra".
    pub kind: String,
    pub seed: u64,
    /// Trajectories per split name.
    pub counts: std::collections::BTreeMap<String, usize>,
    /// Full generator spec, echoed verbatim.
    pub spec: serde_json::Value,
    /// Whether the internal heldout mask pattern is shared across the set.
    pub shared_mask: bool,
}

impl DatasetManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let file = fs::File::open(&path)?;
        let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(file))?;
        if manifest.format_version != CSV_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: manifest.format_version,
                expected: CSV_FORMAT_VERSION,
            });
        }
        Ok(manifest)
    }
}

/// Write `trajs` as `dir/<split>/traj_#####.csv`.
pub fn write_dataset_split(dir: &Path, split: &str, trajs: &[Trajectory]) -> Result<()> {
    let split_dir = dir.join(split);
    fs::create_dir_all(&split_dir)?;
    for (i, t) in trajs.iter().enumerate() {
        write_trajectory_csv(&split_dir.join(format!("traj_{i:05}.csv")), t)?;
    }
    Ok(())
}

pub fn read_dataset_split(dir: &Path, split: &str) -> Result<Vec<Trajectory>> {
    let split_dir = dir.join(split);
    let mut names: Vec<_> = fs::read_dir(&split_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    names.sort();
    names.iter().map(|p| read_trajectory_csv(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{apply_masking, gen_sine, SineSpec};

    #[test]
    fn float_formatting_round_trips_bit_exactly() {
        for x in [0.1, -3.25e-17, 1.0 / 3.0, 2.718281828459045, f64::MIN_POSITIVE, 0.0] {
            let parsed: f64 = format_f64(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "round trip of {x}");
        }
    }

    #[test]
    fn trajectory_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SineSpec::default();
        for (i, t) in gen_sine(&spec, 5, 77).unwrap().into_iter().enumerate() {
            let t = apply_masking(&t, 5).unwrap();
            let path = dir.path().join(format!("t{i}.csv"));
            write_trajectory_csv(&path, &t).unwrap();
            let back = read_trajectory_csv(&path).unwrap();
            assert_eq!(back.times, t.times);
            assert_eq!(back.values, t.values);
            assert_eq!(back.mask, t.mask);
            assert_eq!(back.changepoints, t.changepoints);
        }
    }

    #[test]
    fn truncated_file_is_malformed_not_a_crash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,dim_0,mask,is_changepoint\n1.0,2.0,0\n").unwrap();
        match read_trajectory_csv(&path) {
            Err(Error::MalformedFile { .. }) => {}
            other => panic!("expected MalformedFile, got {other:?}"),
        }
    }

    #[test]
    fn dataset_split_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trajs = gen_sine(&SineSpec::default(), 3, 1).unwrap();
        write_dataset_split(dir.path(), "train", &trajs).unwrap();
        let back = read_dataset_split(dir.path(), "train").unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&trajs) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn manifest_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = DatasetManifest {
            format_version: CSV_FORMAT_VERSION,
            kind: "sine".into(),
            seed: 9,
            counts: [("train".to_string(), 3usize)].into_iter().collect(),
            spec: serde_json::to_value(SineSpec::default()).unwrap(),
            shared_mask: true,
        };
        manifest.write(dir.path()).unwrap();
        let back = DatasetManifest::read(dir.path()).unwrap();
        assert_eq!(back.kind, "sine");
        assert_eq!(back.seed, 9);

        let mut bad = manifest.clone();
        bad.format_version = 99;
        bad.write(dir.path()).unwrap();
        assert!(matches!(DatasetManifest::read(dir.path()), Err(Error::VersionMismatch { .. })));
    }
}
