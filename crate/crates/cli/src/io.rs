//! Trajectory CSV and report JSON artifacts.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hjlab_core::solver::{Sample, Trajectory};
use serde::Serialize;

pub const CSV_HEADER: [&str; 6] = ["t", "M", "m", "osc", "grad_sup", "grad_q"];
/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "HJLAB_OUT";
pub const DEFAULT_OUT: &str = "hjlab-out";

/// Command-line flag, then `HJLAB_OUT`, then the config, then the default.
pub fn resolve_out_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf)
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in &traj.samples {
        w.write_record([
            fmt(s.t),
            fmt(s.max),
            fmt(s.min),
            fmt(s.osc()),
            fmt(s.grad_sup),
            fmt(s.grad_q),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> anyhow::Result<Trajectory> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        bail!("unexpected header {header:?}, expected {CSV_HEADER:?}");
    }
    let mut samples = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let v: Vec<f64> = record
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("row {}: non-numeric field", row + 1))?;
        samples.push(Sample {
            t: v[0],
            max: v[1],
            min: v[2],
            grad_sup: v[4],
            grad_q: v[5],
            snapshot: None,
        });
    }
    if samples.windows(2).any(|w| w[1].t <= w[0].t) {
        bail!(
            "sample times in {} are not strictly increasing",
            path.display()
        );
    }
    Ok(Trajectory::from_samples(samples))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, max: f64, min: f64) -> Sample {
        Sample {
            t,
            max,
            min,
            grad_sup: 0.1 + t,
            grad_q: std::f64::consts::PI * t,
            snapshot: None,
        }
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let traj = Trajectory::from_samples(vec![
            sample(0.0, 1.0, -1.0),
            sample(0.1, 0.9 + 1e-17, -0.3333333333333333),
            sample(0.2, 1e-300, -5e-324),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&traj, File::create(&path).unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,M,m,osc,grad_sup,grad_q\n"));
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.samples, traj.samples);
    }

    #[test]
    fn reader_rejects_bad_header_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "t,max,min,osc,grad_sup,grad_q\n0,1,0,1,0,0\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
        std::fs::write(
            &path,
            "t,M,m,osc,grad_sup,grad_q\n1,1,0,1,0,0\n0,1,0,1,0,0\n",
        )
        .unwrap();
        assert!(read_trajectory_csv(&path).is_err());
    }

    #[test]
    fn flag_wins_over_config() {
        let flag = PathBuf::from("from-flag");
        let cfg = PathBuf::from("from-config");
        assert_eq!(resolve_out_root(Some(&flag), Some(&cfg)), flag);
    }
}
