//! Persistence: `.gfn` grid functions, the on-disk kernel cache and
//! coefficient tables.
//!
//! A `.gfn` file is one line of JSON (the grid description) terminated by
//! `\n`, followed by the node values as little-endian `f64` pairs `(re, im)`
//! in row-major node order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::CoefficientArray;
use crate::grid::{GridDoc, GridFunction, GridSpec};
use crate::spectral::{Backend, BackendUsed, MultiplierProfile, SpectralKernel, SubLaplacian};

/// Environment variable naming the kernel cache directory.
pub const CACHE_ENV: &str = "CARNOT_CACHE";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GfnHeader {
    format: String,
    #[serde(flatten)]
    grid: GridDoc,
}

pub fn write_gfn_to<W: Write>(mut out: W, f: &GridFunction) -> Result<()> {
    let header = GfnHeader {
        format: "gfn1".into(),
        grid: f.grid().to_doc(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(16 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn write_gfn(path: &Path, f: &GridFunction) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_gfn_to(BufWriter::new(fs::File::create(path)?), f)
}

/// Reads a `.gfn` stream; the grid is rebuilt from the header.
pub fn read_gfn_from<R: Read>(input: R) -> Result<GridFunction> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: GfnHeader = serde_json::from_str(line.trim_end())?;
    if header.format != "gfn1" {
        return Err(Error::Format(format!(
            "unknown gfn format tag {:?}",
            header.format
        )));
    }
    let grid = Arc::new(GridSpec::from_doc(&header.grid)?);
    read_payload(&mut reader, grid)
}

pub fn read_gfn(path: &Path) -> Result<GridFunction> {
    read_gfn_from(fs::File::open(path)?)
}

/// Reads a `.gfn` file whose grid must coincide with `grid`; the result
/// shares `grid`.
pub fn read_gfn_on(path: &Path, grid: &Arc<GridSpec>) -> Result<GridFunction> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: GfnHeader = serde_json::from_str(line.trim_end())?;
    if serde_json::to_string(&header.grid)? != serde_json::to_string(&grid.to_doc())? {
        return Err(Error::GridMismatch);
    }
    read_payload(&mut reader, grid.clone())
}

fn read_payload<R: Read>(reader: &mut R, grid: Arc<GridSpec>) -> Result<GridFunction> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let expected = 16 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "gfn payload has {} bytes, grid needs {expected}",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    GridFunction::new(grid, values)
}

/// Sidecar written next to every cached kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub profile: String,
    pub profile_hash: String,
    pub backend: String,
    pub degree: Option<usize>,
    pub chebyshev_error: Option<f64>,
    pub lambda_max: f64,
}

/// Directory of kernel files keyed by operator, profile and backend.
#[derive(Clone, Debug)]
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(KernelCache { dir })
    }

    /// Cache at `$CARNOT_CACHE`, if the variable is set and non-empty.
    pub fn from_env() -> Result<Option<Self>> {
        match std::env::var_os(CACHE_ENV) {
            Some(v) if !v.is_empty() => Ok(Some(Self::new(PathBuf::from(v))?)),
            _ => Ok(None),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Key of the kernel of `prof(L)` for this operator and requested backend.
    pub fn key(lm: &SubLaplacian, prof: &MultiplierProfile, backend: Backend) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&lm.grid().to_doc())?);
        h.update(serde_json::to_vec(lm.basis())?);
        h.update(serde_json::to_vec(&backend)?);
        h.update(lm.lambda_max().to_le_bytes());
        h.update(prof.label().as_bytes());
        Ok(h.finalize()
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    pub fn kernel_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.gfn"))
    }

    pub fn sidecar_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Cached kernel, or `None` when absent or inconsistent with `lm`.
    pub fn load(
        &self,
        lm: &SubLaplacian,
        prof: &MultiplierProfile,
        backend: Backend,
    ) -> Result<Option<SpectralKernel>> {
        let key = Self::key(lm, prof, backend)?;
        let (kp, sp) = (self.kernel_path(&key), self.sidecar_path(&key));
        if !kp.exists() || !sp.exists() {
            return Ok(None);
        }
        let side: KernelSidecar = serde_json::from_slice(&fs::read(&sp)?)?;
        if side.profile_hash != prof.hash_hex()
            || side.lambda_max.to_bits() != lm.lambda_max().to_bits()
        {
            return Ok(None);
        }
        let backend_used = match (side.backend.as_str(), side.degree) {
            ("eig", _) => BackendUsed::Eig,
            ("chebyshev", Some(degree)) => BackendUsed::Chebyshev {
                degree,
                error: side.chebyshev_error.unwrap_or(f64::NAN),
            },
            _ => return Ok(None),
        };
        let kernel = match read_gfn_on(&kp, lm.grid()) {
            Ok(k) => k,
            Err(Error::GridMismatch) => return Ok(None),
            Err(e) => return Err(e),
        };
        Ok(Some(SpectralKernel {
            kernel,
            profile: prof.clone(),
            backend: backend_used,
            lambda_max: lm.lambda_max(),
        }))
    }

    pub fn store(&self, lm: &SubLaplacian, backend: Backend, k: &SpectralKernel) -> Result<String> {
        let key = Self::key(lm, &k.profile, backend)?;
        write_gfn(&self.kernel_path(&key), &k.kernel)?;
        let (degree, chebyshev_error) = match k.backend {
            BackendUsed::Eig => (None, None),
            BackendUsed::Chebyshev { degree, error } => (Some(degree), Some(error)),
        };
        let side = KernelSidecar {
            profile: k.profile.label().to_string(),
            profile_hash: k.profile.hash_hex(),
            backend: k.backend.name().to_string(),
            degree,
            chebyshev_error,
            lambda_max: k.lambda_max,
        };
        fs::write(self.sidecar_path(&key), serde_json::to_vec_pretty(&side)?)?;
        Ok(key)
    }

    pub fn kernel_of(
        &self,
        lm: &SubLaplacian,
        prof: &MultiplierProfile,
        backend: Backend,
    ) -> Result<SpectralKernel> {
        if let Some(k) = self.load(lm, prof, backend)? {
            return Ok(k);
        }
        let k = lm.kernel_of(prof, backend)?;
        self.store(lm, backend, &k)?;
        Ok(k)
    }
}

/// Sidecar of a coefficient table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSidecar {
    pub alpha: f64,
    pub tile: Vec<f64>,
    pub j_range: (i32, i32),
    pub dropped: usize,
    pub entries: usize,
}

/// Writes `j,gamma_index,re,im` rows; `gamma_index` joins the lattice
/// coordinates with `:`.
pub fn write_coefficients_csv<W: Write>(out: W, c: &CoefficientArray) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "gamma_index", "re", "im"])
        .map_err(csv_err)?;
    for (j, sc) in &c.scales {
        for (idx, v) in sc.indices.iter().zip(&sc.values) {
            let gamma = idx
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(":");
            w.write_record([
                j.to_string(),
                gamma,
                format!("{:e}", v.re),
                format!("{:e}", v.im),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn coefficient_sidecar(c: &CoefficientArray) -> CoefficientSidecar {
    CoefficientSidecar {
        alpha: c.alpha,
        tile: c.tile.clone(),
        j_range: c.j_range,
        dropped: c.dropped(),
        entries: c.len(),
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_coefficients(
    dir: &Path,
    stem: &str,
    c: &CoefficientArray,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_coefficients_csv(BufWriter::new(fs::File::create(&csv_path)?), c)?;
    fs::write(
        &json_path,
        serde_json::to_vec_pretty(&coefficient_sidecar(c))?,
    )?;
    Ok((csv_path, json_path))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
