//! Artifact persistence: trajectory CSVs shared bit-for-bit between the SGD
//! and ODE engines, dense matrix files (CSV or raw binary), network-state
//! checkpoints, diagnostic CSVs, and run manifests.
//!
//! All CSVs are UTF-8 with LF line endings, `.` decimal separators, and
//! 17-significant-digit scientific floats, so byte-identical reruns are a
//! meaningful reproducibility check. Manifests never contain timestamps;
//! wall-clock stamps go to a separate sidecar file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::ScalingFit;
use crate::network::{NetworkConfig, NetworkState, OrderParams};
use crate::sgd::RunRecord;

/// Format one float with 17 significant digits (round-trip exact for f64).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Trajectory CSV (shared by SGD and ODE records)
// ---------------------------------------------------------------------------

/// The exact header used by every trajectory CSV: `t, eps_g`, then `Q`, `R`,
/// `T` entries in row-major index order, then the second-layer weights.
pub fn run_csv_header(k: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "eps_g".to_string()];
    for a in 0..k {
        for b in 0..k {
            cols.push(format!("Q_{a}_{b}"));
        }
    }
    for a in 0..k {
        for b in 0..m {
            cols.push(format!("R_{a}_{b}"));
        }
    }
    for a in 0..m {
        for b in 0..m {
            cols.push(format!("T_{a}_{b}"));
        }
    }
    for a in 0..k {
        cols.push(format!("v_{a}"));
    }
    cols
}

/// Write a trajectory record as CSV, one row per snapshot.
pub fn write_run_csv(path: &Path, record: &RunRecord) -> Result<()> {
    if record.snaps.is_empty() {
        return Err(Error::Parameter("cannot persist an empty trajectory".into()));
    }
    let (k, m) = (record.k(), record.m());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(run_csv_header(k, m))?;
    for snap in &record.snaps {
        let mut row = Vec::with_capacity(2 + k * k + k * m + m * m + k);
        row.push(format_float(snap.t));
        row.push(format_float(snap.eps_g));
        row.extend(snap.q.iter().map(|&x| format_float(x)));
        row.extend(snap.r.iter().map(|&x| format_float(x)));
        row.extend(snap.t_mat.iter().map(|&x| format_float(x)));
        row.extend(snap.v.iter().map(|&x| format_float(x)));
        w.write_record(&row)?;
    }
    w.flush().map_err(std::io::Error::from)?;
    Ok(())
}

/// Read a trajectory CSV back into a record. The header must match
/// [`run_csv_header`] exactly (the layout is shared bit-for-bit between the
/// engines). Weight-space overlaps that are not part of the schema (`Ω`, `Σ`)
/// come back as zeros; label and seeds live in the manifest, not the CSV.
pub fn read_run_csv(path: &Path) -> Result<RunRecord> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    // Infer K from the Q block and M from the R block, then demand an exact
    // header match so schema drift cannot pass silently.
    let n_q = header.iter().filter(|h| h.starts_with("Q_")).count();
    let k = (n_q as f64).sqrt().round() as usize;
    let n_r = header.iter().filter(|h| h.starts_with("R_")).count();
    if k == 0 || k * k != n_q || n_r % k != 0 {
        return Err(Error::Config(format!(
            "trajectory header of {path:?} has inconsistent Q/R blocks"
        )));
    }
    let m = n_r / k;
    if header != run_csv_header(k, m) {
        return Err(Error::Config(format!(
            "trajectory header of {path:?} does not match the shared schema for K={k}, M={m}"
        )));
    }
    let mut snaps = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let vals: Vec<f64> = row
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad float `{s}` in {path:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 2 + k * k + k * m + m * m + k {
            return Err(Error::Config(format!("short row in {path:?}")));
        }
        let mut at = 2;
        let mut take = |len: usize| -> Vec<f64> {
            let out = vals[at..at + len].to_vec();
            at += len;
            out
        };
        let q = Array2::from_shape_vec((k, k), take(k * k)).expect("sized above");
        let r = Array2::from_shape_vec((k, m), take(k * m)).expect("sized above");
        let t_mat = Array2::from_shape_vec((m, m), take(m * m)).expect("sized above");
        let v = Array1::from_vec(take(k));
        snaps.push(OrderParams {
            t: vals[0],
            eps_g: vals[1],
            q,
            r,
            t_mat,
            omega: Array2::zeros((k, k)),
            sigma: Array2::zeros((k, k)),
            v,
            s: None,
        });
    }
    if snaps.is_empty() {
        return Err(Error::Config(format!("trajectory {path:?} has no snapshots")));
    }
    Ok(RunRecord {
        label: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        seeds: Vec::new(),
        snaps,
        wall_secs: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Dense matrices: CSV and raw binary
// ---------------------------------------------------------------------------

/// Write a P×D matrix as CSV with header `c_0,...,c_{D-1}`.
pub fn write_matrix_csv(path: &Path, mat: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..mat.ncols()).map(|c| format!("c_{c}")))?;
    for row in mat.rows() {
        w.write_record(row.iter().map(|&x| format_float(x)))?;
    }
    w.flush().map_err(std::io::Error::from)?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let d = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for row in rdr.records() {
        let row = row?;
        if row.len() != d {
            return Err(Error::Config(format!("ragged row in {path:?}")));
        }
        for s in row.iter() {
            data.push(
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad float `{s}` in {path:?}: {e}")))?,
            );
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, d), data)
        .map_err(|e| Error::Shape(format!("matrix shape error reading {path:?}: {e}")))
}

const MATRIX_MAGIC: &[u8; 4] = b"HMMC";

/// Write a matrix in the raw binary format: a 16-byte header (magic `HMMC`,
/// little-endian u32 row count, u32 column count, u32 reserved zero) followed
/// by row-major little-endian f64 values.
pub fn write_matrix_bin(path: &Path, mat: &Array2<f64>) -> Result<()> {
    let (p, d) = mat.dim();
    if p > u32::MAX as usize || d > u32::MAX as usize {
        return Err(Error::Parameter("matrix too large for the binary header".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(p as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for &x in mat.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_bin`].
pub fn read_matrix_bin(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != MATRIX_MAGIC {
        return Err(Error::Config(format!("{path:?} is not a matrix binary (bad magic)")));
    }
    let p = u32::from_le_bytes(header[4..8].try_into().expect("sized")) as usize;
    let d = u32::from_le_bytes(header[8..12].try_into().expect("sized")) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != p * d * 8 {
        return Err(Error::Config(format!(
            "{path:?} payload is {} bytes, header promises {}",
            bytes.len(),
            p * d * 8
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("sized")))
        .collect();
    Array2::from_shape_vec((p, d), data)
        .map_err(|e| Error::Shape(format!("matrix shape error reading {path:?}: {e}")))
}

// ---------------------------------------------------------------------------
// Network-state checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct StateManifest {
    config: NetworkConfig,
    files: Vec<String>,
}

const STATE_FILES: [&str; 5] = ["w_tilde", "v_tilde", "w", "v", "f_mat"];

/// Persist all weights of a state into `dir`, one binary matrix per file plus
/// a `state.json` manifest carrying the configuration.
pub fn save_state(dir: &Path, state: &NetworkState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let as_row = |v: &Array1<f64>| {
        Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("1×n reshape")
    };
    write_matrix_bin(&dir.join("w_tilde.bin"), &state.w_tilde)?;
    write_matrix_bin(&dir.join("v_tilde.bin"), &as_row(&state.v_tilde))?;
    write_matrix_bin(&dir.join("w.bin"), &state.w)?;
    write_matrix_bin(&dir.join("v.bin"), &as_row(&state.v))?;
    write_matrix_bin(&dir.join("f_mat.bin"), &state.f_mat)?;
    let manifest = StateManifest {
        config: state.config.clone(),
        files: STATE_FILES.iter().map(|f| format!("{f}.bin")).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("cannot serialize state manifest: {e}")))?;
    std::fs::write(dir.join("state.json"), json + "\n")?;
    Ok(())
}

/// Load a checkpoint written by [`save_state`] and validate all shapes.
pub fn load_state(dir: &Path) -> Result<NetworkState> {
    let json = std::fs::read_to_string(dir.join("state.json"))?;
    let manifest: StateManifest = serde_json::from_str(&json)
        .map_err(|e| Error::Config(format!("bad state manifest in {dir:?}: {e}")))?;
    let cfg = manifest.config;
    cfg.validate()?;
    let as_vec = |m: Array2<f64>, what: &str| -> Result<Array1<f64>> {
        if m.nrows() != 1 {
            return Err(Error::Shape(format!("{what} should be a 1-row matrix")));
        }
        Ok(m.row(0).to_owned())
    };
    let state = NetworkState {
        w_tilde: read_matrix_bin(&dir.join("w_tilde.bin"))?,
        v_tilde: as_vec(read_matrix_bin(&dir.join("v_tilde.bin"))?, "v_tilde")?,
        w: read_matrix_bin(&dir.join("w.bin"))?,
        v: as_vec(read_matrix_bin(&dir.join("v.bin"))?, "v")?,
        f_mat: read_matrix_bin(&dir.join("f_mat.bin"))?,
        config: cfg,
    };
    let c = &state.config;
    let shapes_ok = state.w_tilde.dim() == (c.m, c.d)
        && state.v_tilde.len() == c.m
        && state.w.dim() == (c.k, c.n)
        && state.v.len() == c.k
        && state.f_mat.dim() == (c.d, c.n);
    if !shapes_ok {
        return Err(Error::Shape(format!("checkpoint in {dir:?} does not match its config")));
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Diagnostic CSVs
// ---------------------------------------------------------------------------

/// One row of a scaling diagnostic: a statistic measured at block size `m`
/// and ambient dimension `d`.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticRow {
    pub m: usize,
    pub d: usize,
    pub statistic: f64,
    pub stderr: f64,
}

/// Write a diagnostic CSV `m,D,m_over_D,statistic,stderr`, optionally followed
/// by a `#`-prefixed fit summary line consumed by the report generator.
pub fn write_diagnostic_csv(
    path: &Path,
    rows: &[DiagnosticRow],
    fit: Option<&ScalingFit>,
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Parameter("diagnostic CSV needs at least one row".into()));
    }
    let mut out = String::from("m,D,m_over_D,statistic,stderr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.m,
            r.d,
            format_float(r.m as f64 / r.d as f64),
            format_float(r.statistic),
            format_float(r.stderr)
        ));
    }
    if let Some(f) = fit {
        out.push_str(&format!(
            "# fit slope={} intercept={} r2={} x_range=[{},{}] n={}\n",
            format_float(f.slope),
            format_float(f.intercept),
            format_float(f.r2),
            format_float(f.x_lo),
            format_float(f.x_hi),
            f.n_used
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifests and hashes
// ---------------------------------------------------------------------------

/// FNV-1a over the canonical JSON encoding of any serializable value; struct
/// fields serialize in declaration order, so the hash is deterministic.
pub fn config_hash<T: Serialize>(value: &T) -> Result<u64> {
    let json = serde_json::to_string(value)
        .map_err(|e| Error::Config(format!("cannot serialize config for hashing: {e}")))?;
    let mut h: u64 = 0xcbf29ce484222325;
    for b in json.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(h)
}

/// Provenance manifest written next to every artifact bundle. Deliberately
/// timestamp-free so reruns are byte-identical; see [`write_timestamp`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub label: String,
    /// Hex FNV-1a hash of the generating config.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Free-form details (input law, standardization mode, spec seeds, …).
    pub details: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new<T: Serialize>(label: &str, config: &T, seeds: &[u64]) -> Result<Manifest> {
        Ok(Manifest {
            label: label.to_string(),
            config_hash: format!("{:016x}", config_hash(config)?),
            seeds: seeds.to_vec(),
            details: BTreeMap::new(),
        })
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let json = std::fs::read_to_string(path)?;
    serde_json::from_str(&json).map_err(|e| Error::Config(format!("bad manifest {path:?}: {e}")))
}

/// Write the wall-clock stamp sidecar (unix seconds), kept out of manifests
/// so that reruns of the same config produce byte-identical artifacts.
pub fn write_timestamp(path: &Path) -> Result<()> {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    std::fs::write(path, format!("unix_seconds={secs}\n"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Act;
    use crate::network::{init_gaussian, measure_order_params};
    use crate::sgd::{run_sgd, SampleSource, SgdConfig};

    fn tiny_record() -> RunRecord {
        let cfg = NetworkConfig { n: 32, d: 16, k: 2, m: 2, g: Act::Relu, f: Act::Tanh };
        let mut state = init_gaussian(&cfg, 5, true).unwrap();
        let model = crate::inputs::GaussianLatent { d: 16 };
        let source = SampleSource::new(&model, None, 6);
        let stats = crate::integrals::nonlinearity_stats(Act::Tanh, 80).unwrap();
        let sgd = SgdConfig { eta: 0.2, steps: 64, stride: 16, p_eval: 1000, sample_seed: 6, eval_seed: 7 };
        let eval = crate::sgd::EvalSet::build(&state, &source, 1000).unwrap();
        run_sgd(&mut state, &source, &sgd, &stats, &eval).unwrap()
    }

    #[test]
    fn run_csv_round_trip_preserves_compared_quantities() {
        let rec = tiny_record();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_run_csv(&path, &rec).unwrap();
        let back = read_run_csv(&path).unwrap();
        assert_eq!(back.snaps.len(), rec.snaps.len());
        for (a, b) in rec.snaps.iter().zip(&back.snaps) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.eps_g, b.eps_g);
            assert_eq!(a.q, b.q);
            assert_eq!(a.r, b.r);
            assert_eq!(a.t_mat, b.t_mat);
            assert_eq!(a.v, b.v);
        }
    }

    #[test]
    fn run_csv_rewrite_is_byte_identical() {
        let rec = tiny_record();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_run_csv(&p1, &rec).unwrap();
        write_run_csv(&p2, &rec).unwrap();
        let (b1, b2) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert!(!b1.is_empty() && b1 == b2);
        assert!(!b1.contains(&b'\r'), "line endings must be LF");
    }

    #[test]
    fn headers_are_shared_between_engines() {
        // The ODE engine reuses RunRecord, so writing either engine's record
        // must produce the same header for the same (K, M).
        let h = run_csv_header(2, 3);
        assert_eq!(h[0..2], ["t".to_string(), "eps_g".to_string()]);
        assert_eq!(h[2], "Q_0_0");
        assert_eq!(h[5], "Q_1_1");
        assert_eq!(h[6], "R_0_0");
        assert_eq!(h[12], "T_0_0");
        assert_eq!(h[21], "v_0");
        assert_eq!(h.len(), 2 + 4 + 6 + 9 + 2);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64) - 0.25 * j as f64);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("c_0,c_1,c_2\n"));
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn matrix_binary_round_trip_and_header() {
        let m = Array2::from_shape_fn((7, 4), |(i, j)| (i * 31 + j) as f64 / 13.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_matrix_bin(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"HMMC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(bytes.len(), 16 + 7 * 4 * 8);
        assert_eq!(read_matrix_bin(&path).unwrap(), m);
    }

    #[test]
    fn matrix_binary_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        assert!(read_matrix_bin(&path).is_err());
        let m = Array2::from_elem((2, 2), 1.0);
        write_matrix_bin(&path, &m).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        assert!(read_matrix_bin(&path).is_err());
    }

    #[test]
    fn state_checkpoint_round_trip_is_exact() {
        let cfg = NetworkConfig { n: 24, d: 12, k: 3, m: 2, g: Act::Relu, f: Act::Tanh };
        let state = init_gaussian(&cfg, 9, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &state).unwrap();
        let back = load_state(dir.path()).unwrap();
        assert_eq!(back.config, state.config);
        assert_eq!(back.w_tilde, state.w_tilde);
        assert_eq!(back.v_tilde, state.v_tilde);
        assert_eq!(back.w, state.w);
        assert_eq!(back.v, state.v);
        assert_eq!(back.f_mat, state.f_mat);
        // The round-tripped state is directly usable.
        let stats = crate::integrals::nonlinearity_stats(Act::Tanh, 80).unwrap();
        let a = measure_order_params(&state, &stats, false);
        let b = measure_order_params(&back, &stats, false);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn diagnostic_csv_layout() {
        let rows = vec![
            DiagnosticRow { m: 4, d: 512, statistic: 0.125, stderr: 0.001 },
            DiagnosticRow { m: 16, d: 512, statistic: 0.25, stderr: 0.002 },
        ];
        let points: Vec<(f64, f64)> =
            rows.iter().map(|r| (r.m as f64 / r.d as f64, r.statistic)).collect();
        let fit = crate::lab::fit_scaling(
            &[points[0], points[1], (0.125, 0.5), (0.25, 0.7)],
            None,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.csv");
        write_diagnostic_csv(&path, &rows, Some(&fit)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "m,D,m_over_D,statistic,stderr");
        assert!(lines.next().unwrap().starts_with("4,512,"));
        assert!(lines.next().unwrap().starts_with("16,512,"));
        assert!(lines.next().unwrap().starts_with("# fit slope="));
        assert!(write_diagnostic_csv(&path, &[], None).is_err());
    }

    #[test]
    fn manifest_round_trip_and_hash_stability() {
        let cfg = NetworkConfig { n: 32, d: 16, k: 2, m: 2, g: Act::Relu, f: Act::Tanh };
        let mut man = Manifest::new("baseline", &cfg, &[1, 2, 3]).unwrap();
        man.details.insert("input".into(), "gaussian".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        write_manifest(&path, &man).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), man);
        // Same config hashes identically; a changed config does not.
        assert_eq!(config_hash(&cfg).unwrap(), config_hash(&cfg.clone()).unwrap());
        let other = NetworkConfig { n: 64, ..cfg.clone() };
        assert_ne!(config_hash(&cfg).unwrap(), config_hash(&other).unwrap());
        // Timestamps live in the sidecar, never the manifest.
        let json = std::fs::read_to_string(&path).unwrap();
        assert!(!json.contains("time"));
        write_timestamp(&dir.path().join("stamp.txt")).unwrap();
        let stamp = std::fs::read_to_string(dir.path().join("stamp.txt")).unwrap();
        assert!(stamp.starts_with("unix_seconds="));
    }

    #[test]
    fn float_formatting_has_17_significant_digits() {
        let s = format_float(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
