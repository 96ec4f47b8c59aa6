//! Deterministic file emission: CSV and JSON writers with shortest
//! round-trip float formatting, density-matrix snapshots, and the run
//! manifest with per-file checksums.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Complex, DMatrix};
use rabiq::hilbert::DensityMatrix;
use rabiq::tomography::{PhaseGrid, QGrid, WignerGrid};

/// Collects emitted files so the manifest can list each exactly once.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` listing every emitted file with its SHA-256.
    /// The manifest lists itself with a null checksum — its own digest would
    /// otherwise have to appear inside the bytes being digested.
    pub fn finish(
        mut self,
        config_sha256: &str,
        simulated_span_us: Option<[f64; 2]>,
    ) -> std::io::Result<PathBuf> {
        self.files.sort();
        let mut entries: Vec<ManifestFile> = Vec::with_capacity(self.files.len() + 1);
        for name in &self.files {
            let bytes = std::fs::read(self.root.join(name))?;
            entries.push(ManifestFile { path: name.clone(), sha256: Some(hex_digest(&bytes)) });
        }
        entries.push(ManifestFile { path: "manifest.json".to_string(), sha256: None });
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_sha256.to_string(),
            simulated_span_us,
            files: entries,
        };
        let path = self.root.join("manifest.json");
        std::fs::write(&path, to_json(&manifest))?;
        Ok(path)
    }
}

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_sha256: String,
    /// Simulated time span of the run in µs (not wall-clock — outputs must
    /// be byte-identical across reruns).
    pub simulated_span_us: Option<[f64; 2]>,
    pub files: Vec<ManifestFile>,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: Option<String>,
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// One CSV cell: shortest representation that round-trips, locale-free.
fn cell(v: f64) -> String {
    format!("{v}")
}

/// `t_us,xi,nbar,p_g,p_e,p_f,parity` — the fixed observable schema. The
/// `p_f` column is 0 for two-level models so the layout never shifts.
pub fn observables_csv(
    times: &[f64],
    xi: &[f64],
    nbar: &[f64],
    p_g: &[f64],
    p_e: &[f64],
    p_f: &[f64],
    parity: &[f64],
) -> String {
    let mut out = String::from("t_us,xi,nbar,p_g,p_e,p_f,parity\n");
    for i in 0..times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell(times[i]),
            cell(xi[i]),
            cell(nbar[i]),
            cell(p_g[i]),
            cell(p_e[i]),
            cell(p_f[i]),
            cell(parity[i]),
        );
    }
    out
}

/// `re,im,value` rows in grid flat order.
pub fn grid_csv(grid: &PhaseGrid<f64>, values: &[f64]) -> String {
    let mut out = String::from("re,im,value\n");
    for (i, point) in grid.points().into_iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", cell(point.re), cell(point.im), cell(values[i]));
    }
    out
}

pub fn wigner_csv(w: &WignerGrid<f64>) -> String {
    grid_csv(w.grid(), w.values())
}

pub fn q_csv(q: &QGrid<f64>) -> String {
    grid_csv(q.grid(), q.values())
}

/// `phase_rad,sample_index,value` rows for per-phase population curves.
pub fn curves_csv(phases: &[f64], curves: &[Vec<f64>]) -> String {
    let mut out = String::from("phase_rad,sample_index,value\n");
    for (p, curve) in phases.iter().zip(curves) {
        for (i, v) in curve.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", cell(*p), i, cell(*v));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Density-matrix snapshots
// ---------------------------------------------------------------------------

/// Text snapshot of a density matrix: nested real/imaginary arrays plus the
/// space bookkeeping needed to interpret the joint index (level·cutoff + n).
#[derive(Serialize, Deserialize)]
pub struct Snapshot {
    /// "joint" (qubit ⊗ field) or "field".
    pub kind: String,
    pub levels: usize,
    pub cutoff: usize,
    pub t_us: Option<f64>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn from_density(
        rho: &DensityMatrix<f64>,
        kind: &str,
        levels: usize,
        cutoff: usize,
        t_us: Option<f64>,
    ) -> Self {
        let dim = rho.dim();
        assert_eq!(dim, if kind == "joint" { levels * cutoff } else { cutoff });
        let m = rho.matrix();
        let re = (0..dim).map(|i| (0..dim).map(|j| m[(i, j)].re).collect()).collect();
        let im = (0..dim).map(|i| (0..dim).map(|j| m[(i, j)].im).collect()).collect();
        Self { kind: kind.to_string(), levels, cutoff, t_us, re, im }
    }

    pub fn to_density(&self) -> Result<DensityMatrix<f64>, String> {
        let dim = self.re.len();
        if dim == 0 || self.im.len() != dim {
            return Err("snapshot matrix arrays are empty or ragged".into());
        }
        let expected = match self.kind.as_str() {
            "joint" => self.levels * self.cutoff,
            "field" => self.cutoff,
            other => return Err(format!("unknown snapshot kind '{other}'")),
        };
        if dim != expected {
            return Err(format!(
                "snapshot dimension {dim} does not match {} x {} layout",
                self.levels, self.cutoff
            ));
        }
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            if self.re[i].len() != dim || self.im[i].len() != dim {
                return Err("snapshot matrix arrays are ragged".into());
            }
            for j in 0..dim {
                m[(i, j)] = Complex::new(self.re[i][j], self.im[i][j]);
            }
        }
        DensityMatrix::new(m).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: cannot read snapshot: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
