//! On-disk representations.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same bits, so serialize → parse → serialize is byte-stable.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use dmpkit_core::dmp::DmpError;
use dmpkit_core::rnn::{Detection, Normalizer, ParamSet, Recording, RnnError, RnnModel};
use dmpkit_core::sim::ScenarioResult;
use dmpkit_core::{Dmp, DmpParts, Trajectory, TrajectoryError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack allowed between a time stamp and `t0 + k·dt`.
const TIME_TOLERANCE: f64 = 1e-6;

pub const MANIFEST_NAME: &str = "peaks.json";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("refusing to write non-finite value to {0}")]
    NonFinite(PathBuf),
}

impl FormatError {
    fn invalid(path: &Path, message: impl Into<String>) -> Self {
        Self::Invalid { path: path.to_path_buf(), message: message.into() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> FormatError + '_ {
    move |source| FormatError::Csv { path: path.to_path_buf(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> FormatError + '_ {
    move |source| FormatError::Json { path: path.to_path_buf(), source }
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------- CSV

/// Reads a `t,<channel>...` table. Channel names are free-form; rows must be
/// evenly spaced in `t`.
pub fn read_trajectory_from<R: Read>(reader: R, path: &Path) -> Result<Trajectory, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("t") {
        return Err(FormatError::invalid(path, "first column must be `t`"));
    }
    let dims = header.len() - 1;
    if dims == 0 {
        return Err(FormatError::invalid(path, "no channel columns"));
    }
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                FormatError::invalid(path, format!("row {}, column {}: `{field}` is not a number", row + 1, col))
            })?;
            if !v.is_finite() {
                return Err(FormatError::invalid(path, format!("row {}, column {col}: non-finite value", row + 1)));
            }
            if col == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if times.len() < 2 {
        return Err(FormatError::invalid(path, "need at least two samples"));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(FormatError::invalid(path, "time stamps must increase"));
    }
    for (k, &t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * dt;
        if (t - expected).abs() > TIME_TOLERANCE * dt.max(expected.abs()) {
            return Err(FormatError::invalid(path, format!("row {}: samples are not evenly spaced", k + 1)));
        }
    }
    Trajectory::from_flat(data, dims, dt).map_err(|e: TrajectoryError| FormatError::invalid(path, e.to_string()))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, FormatError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_trajectory_from(file, path)
}

fn write_table<W: Write>(
    writer: W,
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(path.to_path_buf()));
        }
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn trajectory_rows(traj: &Trajectory) -> impl Iterator<Item = Vec<f64>> + '_ {
    traj.rows().enumerate().map(move |(k, r)| {
        let mut row = Vec::with_capacity(r.len() + 1);
        row.push(k as f64 * traj.dt());
        row.extend_from_slice(r);
        row
    })
}

pub fn write_trajectory_to<W: Write>(traj: &Trajectory, writer: W, path: &Path) -> Result<(), FormatError> {
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.dims()).map(|c| format!("ch{c}")));
    write_table(writer, path, &header, trajectory_rows(traj))
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_trajectory_to(traj, std::io::BufWriter::new(file), path)
}

/// Joint torques use `tau1..tauN` column names.
pub fn write_torques(traj: &Trajectory, path: &Path) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dims()).map(|c| format!("tau{c}")));
    write_table(std::io::BufWriter::new(file), path, &header, trajectory_rows(traj))
}

/// Columns `t,y_u,y_c,y_a,acc,tau_a,e`; vector quantities get a `_<channel>`
/// suffix when there is more than one channel.
pub fn sim_log_header(dims: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let vector = |name: &str, h: &mut Vec<String>| {
        if dims == 1 {
            h.push(name.to_string());
        } else {
            h.extend((0..dims).map(|c| format!("{name}_{c}")));
        }
    };
    for name in ["y_u", "y_c", "y_a", "acc"] {
        vector(name, &mut h);
    }
    h.push("tau_a".to_string());
    vector("e", &mut h);
    h
}

pub fn write_sim_log_to<W: Write>(result: &ScenarioResult, writer: W, path: &Path) -> Result<(), FormatError> {
    let rows = result.log.iter().map(|r| {
        let mut row = vec![r.t];
        row.extend(r.y_u.iter().chain(&r.y_c).chain(&r.y_a).chain(&r.acc));
        row.push(r.tau_a);
        row.extend(&r.e);
        row
    });
    write_table(writer, path, &sim_log_header(result.dims), rows)
}

pub fn write_sim_log(result: &ScenarioResult, path: &Path) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_sim_log_to(result, std::io::BufWriter::new(file), path)
}

/// Columns `index,peak_index,time,confidence`.
pub fn write_detections(detections: &[Detection], path: &Path) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["index", "peak_index", "time", "confidence"]).map_err(csv_err(path))?;
    for d in detections {
        let row = [d.index.to_string(), d.peak_index.to_string(), fmt_f64(d.time), fmt_f64(d.confidence)];
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

// ---------------------------------------------------------------- JSON

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn write_string(path: &Path, contents: &str) -> Result<(), FormatError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmpFile {
    /// `[n_basis][dims]`
    pub weights: Vec<Vec<f64>>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub goal: Vec<f64>,
    pub start: Vec<f64>,
    pub tau: f64,
    pub alpha_z: f64,
    pub beta_z: f64,
    pub alpha_x: f64,
}

impl From<&Dmp> for DmpFile {
    fn from(dmp: &Dmp) -> Self {
        let p = dmp.to_parts();
        Self {
            weights: p.weights,
            centers: p.centers,
            widths: p.widths,
            goal: p.goal,
            start: p.start,
            tau: p.tau,
            alpha_z: p.alpha_z,
            beta_z: p.beta_z,
            alpha_x: p.alpha_x,
        }
    }
}

impl TryFrom<DmpFile> for Dmp {
    type Error = DmpError;

    fn try_from(f: DmpFile) -> Result<Self, DmpError> {
        Dmp::from_parts(DmpParts {
            weights: f.weights,
            centers: f.centers,
            widths: f.widths,
            goal: f.goal,
            start: f.start,
            tau: f.tau,
            alpha_z: f.alpha_z,
            beta_z: f.beta_z,
            alpha_x: f.alpha_x,
        })
    }
}

pub fn dmp_to_json(dmp: &Dmp) -> Result<String, FormatError> {
    let f = DmpFile::from(dmp);
    let finite = f.weights.iter().flatten().chain(&f.centers).chain(&f.widths).chain(&f.goal).chain(&f.start);
    if finite.copied().chain([f.tau, f.alpha_z, f.beta_z, f.alpha_x]).any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(PathBuf::from("<dmp>")));
    }
    Ok(to_json(&f))
}

pub fn dmp_from_json(text: &str, path: &Path) -> Result<Dmp, FormatError> {
    let f: DmpFile = serde_json::from_str(text).map_err(json_err(path))?;
    Dmp::try_from(f).map_err(|e| FormatError::invalid(path, e.to_string()))
}

pub fn write_dmp(dmp: &Dmp, path: &Path) -> Result<(), FormatError> {
    let text = dmp_to_json(dmp).map_err(|_| FormatError::NonFinite(path.to_path_buf()))?;
    write_string(path, &text)
}

pub fn read_dmp(path: &Path) -> Result<Dmp, FormatError> {
    dmp_from_json(&read_string(path)?, path)
}

/// Matrices are stored as lists of rows: `U` and `W` are `n_ch × n_ch`,
/// `V` is `2 × n_ch`. `input_mean`/`input_std` are the per-channel
/// statistics applied to raw torques before the network sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub n_pre: usize,
    pub n_post: usize,
    pub n_ch: usize,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

fn to_rows(flat: &[f64], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

fn from_rows(rows: &[Vec<f64>], n_rows: usize, cols: usize, name: &str) -> Result<Vec<f64>, String> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != cols) {
        return Err(format!("{name} must be {n_rows} x {cols}"));
    }
    Ok(rows.concat())
}

impl From<&RnnModel> for ModelFile {
    fn from(m: &RnnModel) -> Self {
        let n = m.n_ch();
        let p = m.params();
        Self {
            u: to_rows(p.u(), n),
            w: to_rows(p.w(), n),
            v: to_rows(p.v(), n),
            b: p.b().to_vec(),
            c: p.c().to_vec(),
            n_pre: m.n_pre(),
            n_post: m.n_post(),
            n_ch: n,
            input_mean: m.normalizer().mean.clone(),
            input_std: m.normalizer().std.clone(),
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<RnnModel, String> {
        let n = self.n_ch;
        if n == 0 {
            return Err("n_ch must be positive".into());
        }
        let mut p = ParamSet::zeros(n);
        p.u_mut().copy_from_slice(&from_rows(&self.u, n, n, "U")?);
        p.w_mut().copy_from_slice(&from_rows(&self.w, n, n, "W")?);
        p.v_mut().copy_from_slice(&from_rows(&self.v, 2, n, "V")?);
        if self.b.len() != n || self.c.len() != 2 {
            return Err("b must have n_ch entries and c two".into());
        }
        p.b_mut().copy_from_slice(&self.b);
        p.c_mut().copy_from_slice(&self.c);
        let normalizer = Normalizer { mean: self.input_mean, std: self.input_std };
        RnnModel::from_params(self.n_pre, self.n_post, p, normalizer).map_err(|e: RnnError| e.to_string())
    }
}

pub fn model_to_json(model: &RnnModel) -> String {
    to_json(&ModelFile::from(model))
}

pub fn model_from_json(text: &str, path: &Path) -> Result<RnnModel, FormatError> {
    let f: ModelFile = serde_json::from_str(text).map_err(json_err(path))?;
    f.into_model().map_err(|m| FormatError::invalid(path, m))
}

pub fn write_model(model: &RnnModel, path: &Path) -> Result<(), FormatError> {
    if model.params().as_slice().iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(path.to_path_buf()));
    }
    write_string(path, &model_to_json(model))
}

pub fn read_model(path: &Path) -> Result<RnnModel, FormatError> {
    model_from_json(&read_string(path)?, path)
}

/// Any serializable summary, pretty-printed with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FormatError> {
    write_string(path, &to_json(value))
}

pub fn json_string<T: Serialize>(value: &T) -> String {
    to_json(value)
}

// ---------------------------------------------------------------- recordings

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    /// Torque CSV, relative to the manifest's directory.
    pub file: String,
    /// Sample indices of the transient peaks.
    pub peaks: Vec<usize>,
}

/// Sidecar listing every recording of a data directory and its peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub recordings: Vec<RecordingEntry>,
}

/// Writes `rec_000.csv, rec_001.csv, ...` and [`MANIFEST_NAME`] into `dir`.
pub fn write_recordings(recordings: &[Recording], dir: &Path) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let width = recordings.len().saturating_sub(1).to_string().len().max(3);
    let mut manifest = Manifest { recordings: Vec::with_capacity(recordings.len()) };
    for (i, rec) in recordings.iter().enumerate() {
        let file = format!("rec_{i:0width$}.csv");
        write_torques(&rec.torques, &dir.join(&file))?;
        manifest.recordings.push(RecordingEntry { file, peaks: rec.peaks.clone() });
    }
    write_json(&manifest, &dir.join(MANIFEST_NAME))
}

/// Loads a directory written by [`write_recordings`] (or by hand in the same
/// layout). Peaks must lie inside their recording.
pub fn read_recordings(dir: &Path) -> Result<Vec<Recording>, FormatError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest: Manifest = serde_json::from_str(&read_string(&manifest_path)?).map_err(json_err(&manifest_path))?;
    if manifest.recordings.is_empty() {
        return Err(FormatError::invalid(&manifest_path, "no recordings listed"));
    }
    let mut out = Vec::with_capacity(manifest.recordings.len());
    let mut dims = None;
    for entry in manifest.recordings {
        let path = dir.join(&entry.file);
        let torques = read_trajectory(&path)?;
        if *dims.get_or_insert(torques.dims()) != torques.dims() {
            return Err(FormatError::invalid(&path, "channel count differs from the first recording"));
        }
        if let Some(&p) = entry.peaks.iter().find(|&&p| p >= torques.len()) {
            return Err(FormatError::invalid(&manifest_path, format!("peak {p} outside {}", entry.file)));
        }
        out.push(Recording { torques, peaks: entry.peaks });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 2.5e-8, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.1), "0.1");
    }

    #[test]
    fn sim_header_expands_per_channel() {
        assert_eq!(sim_log_header(1).join(","), "t,y_u,y_c,y_a,acc,tau_a,e");
        assert_eq!(sim_log_header(2).join(","), "t,y_u_0,y_u_1,y_c_0,y_c_1,y_a_0,y_a_1,acc_0,acc_1,tau_a,e_0,e_1");
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let t = Trajectory::from_rows(&[[0.0, 1.5], [0.25, 1.0], [1.0 / 3.0, 0.5]], 0.004).unwrap();
        let mut buf = Vec::new();
        write_trajectory_to(&t, &mut buf, Path::new("mem")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,ch0,ch1\n0,0,1.5\n0.004,"));
        let back = read_trajectory_from(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn uneven_or_malformed_csv_is_rejected() {
        let bad = [
            "x,a\n0,1\n1,2\n",
            "t,a\n0,1\n0.1,2\n0.3,3\n",
            "t,a\n0,1\n0.1,oops\n",
            "t,a\n0,1\n",
            "t,a\n0,1\n0.1,2,3\n",
            "t\n0\n1\n",
        ];
        for text in bad {
            assert!(read_trajectory_from(text.as_bytes(), Path::new("mem")).is_err(), "{text:?}");
        }
    }

    #[test]
    fn model_shape_errors_are_reported() {
        let m = RnnModel::zeros(2, 1, 1);
        let mut f = ModelFile::from(&m);
        f.u.pop();
        assert!(f.into_model().unwrap_err().contains("U"));
    }
}
