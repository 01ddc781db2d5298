//! File formats: legacy VTK fields, CSV tables and the binary basis cache.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::basis::{BasisLabel, BasisType, Direction, ProjectionMatrix};
use crate::error::{NlmcError, Result};
use crate::geometry::hex;
use crate::mesh::FineMesh;
use crate::metrics::ErrorReport;
use crate::sparse::SparseMatrix;

/// Data attached to a VTK file: one value per point or per triangle, with
/// one or two components.
pub struct VtkField<'a> {
    pub name: &'a str,
    pub ncomp: usize,
    pub values: &'a [f64],
}

/// Writes an ASCII legacy VTK unstructured grid. Two-component fields are
/// written as 3-vectors with zero z.
pub fn write_vtk<W: Write>(mut w: W, mesh: &FineMesh, title: &str, point_data: &[VtkField], cell_data: &[VtkField]) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.nodes.len())?;
    for p in &mesh.nodes {
        writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
    }
    let nt = mesh.triangles.len();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    let section = |w: &mut W, fields: &[VtkField], count: usize| -> Result<()> {
        for f in fields {
            if f.values.len() != count * f.ncomp {
                return Err(NlmcError::DimensionMismatch {
                    what: "VTK field",
                    expected: count * f.ncomp,
                    found: f.values.len(),
                });
            }
            let name = f.name.replace(char::is_whitespace, "_");
            if f.ncomp == 1 {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in f.values {
                    writeln!(w, "{v:e}")?;
                }
            } else {
                writeln!(w, "VECTORS {name} double")?;
                for v in f.values.chunks(f.ncomp) {
                    writeln!(w, "{:e} {:e} 0", v[0], v[1])?;
                }
            }
        }
        Ok(())
    };
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.nodes.len())?;
        section(&mut w, point_data, mesh.nodes.len())?;
    }
    if !cell_data.is_empty() {
        writeln!(w, "CELL_DATA {nt}")?;
        section(&mut w, cell_data, nt)?;
    }
    Ok(())
}

pub fn write_vtk_file(path: &Path, mesh: &FineMesh, title: &str, point_data: &[VtkField], cell_data: &[VtkField]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    write_vtk(w, mesh, title, point_data, cell_data)
}

/// Writes error rows as RFC-4180 CSV with a header line.
pub fn write_reports_csv<W: Write>(w: W, rows: &[ErrorReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    if rows.is_empty() {
        wr.write_record([
            "scenario", "problem", "nx", "ny", "basis_type", "layers", "step", "time", "component",
            "error_percent", "reference_percent", "dof_f", "dof_c", "status", "message",
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_reports_csv<R: Read>(r: R) -> Result<Vec<ErrorReport>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(NlmcError::from)).collect()
}

/// Identifies a basis set for caching.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisKey {
    pub geometry_hash: String,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub layers: usize,
    pub basis_type: BasisType,
    /// Operator and boundary-condition signature (e.g. `laplace k=1 DNDN`).
    pub operator: String,
}

impl BasisKey {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.geometry_hash.as_bytes());
        h.update(self.h.to_le_bytes());
        h.update((self.nx as u64).to_le_bytes());
        h.update((self.ny as u64).to_le_bytes());
        h.update((self.layers as u64).to_le_bytes());
        h.update(self.basis_type.as_str().as_bytes());
        h.update(self.operator.as_bytes());
        hex(&h.finalize())
    }

    pub fn file_name(&self) -> String {
        format!(
            "basis_{}x{}_s{}_{}_{}.bin",
            self.nx,
            self.ny,
            self.layers,
            self.basis_type,
            &self.digest()[..16]
        )
    }
}

const MAGIC: &[u8; 8] = b"NLMCR\x00\x00\x01";

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

/// Binary dump of `R` with labels:
/// magic, key digest (64 bytes), layers, type, ncomp, nrows, ncols, nnz,
/// labels `(block, continuum, direction)`, residuals, CSR arrays. All
/// integers and floats are little-endian 8-byte words.
pub fn write_projection<W: Write>(mut w: W, key: &BasisKey, r: &ProjectionMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(key.digest().as_bytes())?;
    put_u64(&mut w, r.layers as u64)?;
    put_u64(&mut w, matches!(r.basis_type, BasisType::Type2) as u64)?;
    put_u64(&mut w, r.ncomp as u64)?;
    let m = &r.matrix;
    put_u64(&mut w, m.nrows() as u64)?;
    put_u64(&mut w, m.ncols() as u64)?;
    put_u64(&mut w, m.nnz() as u64)?;
    for l in &r.labels {
        put_u64(&mut w, l.block as u64)?;
        put_u64(&mut w, l.continuum as u64)?;
        put_u64(&mut w, match l.direction {
            None => 0,
            Some(Direction::X) => 1,
            Some(Direction::Y) => 2,
        })?;
    }
    for v in &r.constraint_residuals {
        put_u64(&mut w, v.to_bits())?;
    }
    for &p in m.row_ptr() {
        put_u64(&mut w, p as u64)?;
    }
    for &c in m.col_idx() {
        put_u64(&mut w, c as u64)?;
    }
    for v in m.values() {
        put_u64(&mut w, v.to_bits())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_projection`]; `None` if the key differs.
pub fn read_projection<R: Read>(mut r: R, key: &BasisKey) -> Result<Option<ProjectionMatrix>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NlmcError::Config("not a basis cache file".into()));
    }
    let mut digest = [0u8; 64];
    r.read_exact(&mut digest)?;
    if digest != key.digest().as_bytes() {
        return Ok(None);
    }
    let layers = get_u64(&mut r)? as usize;
    let basis_type = if get_u64(&mut r)? == 1 { BasisType::Type2 } else { BasisType::Type1 };
    let ncomp = get_u64(&mut r)? as usize;
    let nrows = get_u64(&mut r)? as usize;
    let ncols = get_u64(&mut r)? as usize;
    let nnz = get_u64(&mut r)? as usize;
    let mut labels = Vec::with_capacity(nrows);
    for _ in 0..nrows {
        let block = get_u64(&mut r)? as usize;
        let continuum = get_u64(&mut r)? as usize;
        let direction = match get_u64(&mut r)? {
            0 => None,
            1 => Some(Direction::X),
            _ => Some(Direction::Y),
        };
        labels.push(BasisLabel { block, continuum, direction });
    }
    let residuals = (0..nrows).map(|_| get_f64(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
    let ptr = (0..=nrows).map(|_| get_u64(&mut r).map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>()?;
    let cols = (0..nnz).map(|_| get_u64(&mut r).map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>()?;
    let vals = (0..nnz).map(|_| get_f64(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
    let rows: Vec<Vec<(usize, f64)>> = (0..nrows)
        .map(|i| (ptr[i]..ptr[i + 1]).map(|k| (cols[k], vals[k])).collect())
        .collect();
    Ok(Some(ProjectionMatrix {
        matrix: SparseMatrix::from_rows(ncols, &rows),
        labels,
        layers,
        basis_type,
        ncomp,
        constraint_residuals: residuals,
    }))
}

/// Directory of cached projection matrices.
#[derive(Debug, Clone)]
pub struct BasisCache {
    pub dir: PathBuf,
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path(&self, key: &BasisKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    pub fn load(&self, key: &BasisKey) -> Result<Option<ProjectionMatrix>> {
        let p = self.path(key);
        if !p.exists() {
            return Ok(None);
        }
        read_projection(BufReader::new(File::open(p)?), key)
    }

    /// Writes through a temporary file so concurrent readers never see a
    /// partial dump.
    pub fn store(&self, key: &BasisKey, r: &ProjectionMatrix) -> Result<()> {
        let p = self.path(key);
        let tmp = p.with_extension(format!("tmp{}", std::process::id()));
        write_projection(BufWriter::new(File::create(&tmp)?), key, r)?;
        std::fs::rename(tmp, p)?;
        Ok(())
    }
}
