//! Output files: binary snapshots with JSON sidecars and CSV tables.
//!
//! Every file is written to a temporary sibling and renamed into place, so an
//! interrupted run never leaves a truncated file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use porodyn_core::evolution::{dissipation, energy, Trajectory};
use porodyn_core::grid::{integral, norm_lp};
use porodyn_core::kinetic::KineticSample;
use porodyn_core::regularity::RegularityReport;
use porodyn_core::{BoundaryCondition, Field, Grid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Context, Result};

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// JSON sidecar of a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub bc: String,
    pub t: f64,
}

fn bc_name(bc: BoundaryCondition) -> &'static str {
    match bc {
        BoundaryCondition::Periodic => "periodic",
        BoundaryCondition::ZeroFlux => "zero_flux",
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `<stem>.bin` (little-endian `f64`, row-major) and `<stem>.json`.
pub fn write_snapshot(dir: &Path, stem: &str, field: &Field, t: f64) -> Result<()> {
    let bytes: Vec<u8> = field
        .values()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    write_atomic(&dir.join(format!("{stem}.bin")), &bytes)?;
    let g = field.grid();
    let header = SnapshotHeader {
        d: g.dim(),
        n: g.n(),
        half_width: g.half_width(),
        bc: bc_name(g.bc()).into(),
        t,
    };
    write_atomic(&dir.join(format!("{stem}.json")), &json(&header)?)
}

/// Reads a snapshot pair written by [`write_snapshot`].
pub fn read_snapshot(dir: &Path, stem: &str) -> Result<(Field, f64)> {
    let meta_path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
    let header: SnapshotHeader = serde_json::from_str(&text)
        .map_err(|e| CliError::Format(format!("{}: {e}", meta_path.display())))?;
    let bc = match header.bc.as_str() {
        "periodic" => BoundaryCondition::Periodic,
        "zero_flux" => BoundaryCondition::ZeroFlux,
        other => {
            return Err(CliError::Format(format!(
                "{}: unknown bc {other:?}",
                meta_path.display()
            )))
        }
    };
    let grid = Grid::new(header.d, header.n, header.half_width, bc).context("snapshot grid")?;
    let bin_path = dir.join(format!("{stem}.bin"));
    let bytes = fs::read(&bin_path).map_err(|e| CliError::io(&bin_path, e))?;
    if bytes.len() != 8 * grid.cells() {
        return Err(CliError::Format(format!(
            "{}: expected {} bytes, found {}",
            bin_path.display(),
            8 * grid.cells(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((
        Field::from_values(&grid, values).context("snapshot")?,
        header.t,
    ))
}

/// `t, mass, min, max, L1, L2, energy, dissipation` per stored state.
pub fn manifest_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,mass,min,max,L1,L2,energy,dissipation\n");
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            integral(u),
            u.min(),
            u.max(),
            norm_lp(u, 1.0),
            norm_lp(u, 2.0),
            energy(&traj.model, u),
            dissipation(&traj.model, u)
        );
    }
    out
}

/// Writes the manifest and snapshots `state_NNNNNN` every `stride` steps,
/// always including the first and last state. Returns the snapshot count.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, stride: usize) -> Result<usize> {
    create_dir(dir)?;
    write_atomic(&dir.join("manifest.csv"), manifest_csv(traj).as_bytes())?;
    let last = traj.steps();
    let mut count = 0;
    for (n, (t, u)) in traj.times.iter().zip(&traj.states).enumerate() {
        if n == 0 || n == last || (stride > 0 && n % stride == 0) {
            write_snapshot(dir, &format!("state_{n:06}"), u, *t)?;
            count += 1;
        }
    }
    Ok(count)
}

/// Header of the kinetic output, describing the velocity binning.
#[derive(Clone, Debug, Serialize)]
pub struct KineticHeader {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub tau: f64,
    pub steps: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub bins: usize,
    pub total_mass: f64,
    pub max_density: f64,
    pub bound: f64,
}

/// `t_index, v_bin, mass` rows of the defect measure (nonzero entries).
pub fn kinetic_csv(sample: &KineticSample) -> String {
    let mut out = String::from("t_index,v_bin,mass\n");
    for n in 0..sample.steps() {
        for b in 0..sample.bins.bins() {
            let m = sample.step_bin_mass(n, b);
            if m != 0.0 {
                let _ = writeln!(out, "{},{},{:.16e}", n + 1, b, m);
            }
        }
    }
    out
}

pub fn write_kinetic(dir: &Path, sample: &KineticSample, bound: f64) -> Result<()> {
    let j = sample.bins.interval();
    let header = KineticHeader {
        d: sample.grid.dim(),
        n: sample.grid.n(),
        half_width: sample.grid.half_width(),
        tau: sample.tau,
        steps: sample.steps(),
        v_min: j.lo,
        v_max: j.hi,
        bins: sample.bins.bins(),
        total_mass: sample.total_mass(),
        max_density: sample.max_density(),
        bound,
    };
    write_atomic(&dir.join("kinetic.json"), &json(&header)?)?;
    write_atomic(&dir.join("kinetic.csv"), kinetic_csv(sample).as_bytes())
}

/// `test_id, value, h, tau` rows of kinetic residuals.
pub fn residual_csv(rows: &[(usize, f64, f64, f64)]) -> String {
    let mut out = String::from("test_id,value,h,tau\n");
    for (id, value, h, tau) in rows {
        let _ = writeln!(out, "{id},{value:.16e},{h:.16e},{tau:.16e}");
    }
    out
}

/// `level, sigma_t, sigma_x, p, value, verdict` rows.
pub fn regularity_csv(report: &RegularityReport) -> String {
    let mut out = String::from("level,sigma_t,sigma_x,p,value,verdict\n");
    for e in &report.entries {
        for (level, value) in e.values.iter().enumerate() {
            let _ = writeln!(
                out,
                "{level},{:.16e},{:.16e},{:.16e},{value:.16e},{}",
                e.sigma_t,
                e.sigma_x,
                report.p,
                e.verdict.as_str()
            );
        }
    }
    out
}

#[derive(Serialize)]
struct RegularitySummary<'a> {
    p: f64,
    kappa_t: f64,
    kappa_x: f64,
    levels: usize,
    stable_below_kappa: bool,
    entries: Vec<EntrySummary<'a>>,
}

#[derive(Serialize)]
struct EntrySummary<'a> {
    sigma_t: f64,
    sigma_x: f64,
    verdict: &'a str,
    growth: &'a [f64],
    fitted_critical: Option<f64>,
    below_kappa: bool,
}

pub fn regularity_json(report: &RegularityReport) -> Result<Vec<u8>> {
    json(&RegularitySummary {
        p: report.p,
        kappa_t: report.kappa_t,
        kappa_x: report.kappa_x,
        levels: report.levels,
        stable_below_kappa: report.stable_below_kappa(),
        entries: report
            .entries
            .iter()
            .map(|e| EntrySummary {
                sigma_t: e.sigma_t,
                sigma_x: e.sigma_x,
                verdict: e.verdict.as_str(),
                growth: &e.growth,
                fitted_critical: e.fitted_critical,
                below_kappa: e.below_kappa,
            })
            .collect(),
    })
}

pub fn write_regularity(dir: &Path, report: &RegularityReport) -> Result<()> {
    write_atomic(
        &dir.join("regularity.csv"),
        regularity_csv(report).as_bytes(),
    )?;
    write_atomic(&dir.join("regularity.json"), &regularity_json(report)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &json(value)?)
}

/// Resolves the output directory: `--out` wins over the config value.
pub fn output_dir(config_dir: &Path, cli: Option<&PathBuf>) -> PathBuf {
    cli.cloned().unwrap_or_else(|| config_dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let dir = std::env::temp_dir().join(format!("porodyn-io-{}", std::process::id()));
        let grid = Grid::new(2, 4, 0.5, BoundaryCondition::ZeroFlux).unwrap();
        let field = grid.sample(|x| x[0] * 3.0 + x[1]);
        write_snapshot(&dir, "s", &field, 0.25).unwrap();
        let (back, t) = read_snapshot(&dir, "s").unwrap();
        assert_eq!(back, field);
        assert_eq!(t, 0.25);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = std::env::temp_dir().join(format!("porodyn-atomic-{}", std::process::id()));
        let path = dir.join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        let _ = fs::remove_dir_all(&dir);
    }
}
