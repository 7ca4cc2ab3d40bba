//! On-disk formats.
//!
//! * Snapshot matrices: `"CDR1"`, version `u32`, rows `u64`, columns `u64`,
//!   then the entries column-major as little-endian `f64`.
//! * Reduced bases: a snapshot container plus a `index,sigma` CSV.
//! * Reduced operators and kernel models: a [`Blob`], a tagged list of named
//!   fields that can be inspected without knowing the producing type.
//! * Output curves: CSV with header `t,f`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::{AffineOperatorSet, Grid1D};
use crate::kernel::{KernelConfig, KernelModel, Normalization, StopReason};
use crate::linalg::Tridiagonal;
use crate::pod::ReducedBasis;
use crate::rom::ReducedOperatorSet;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CDR1";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const BLOB_MAGIC: &[u8; 4] = b"CDRB";
pub const BLOB_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Cursor over a byte buffer that reports truncation as a format error.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::format(self.path, format!("length {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::format(self.path, "length overflow"))?;
        let raw = self.take(len)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(self.path, "invalid UTF-8"))
    }

    fn finished(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::format(self.path, format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    open(path)?.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_snapshots(path: &Path, snapshots: &DMatrix<f64>) -> Result<()> {
    let mut out = Vec::with_capacity(24 + snapshots.len() * 8);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(snapshots.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(snapshots.ncols() as u64).to_le_bytes());
    put_f64s(&mut out, snapshots.as_slice());
    write_all(path, &out)
}

pub fn read_snapshots(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = read_all(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(Error::format(path, "bad magic, expected CDR1"));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let rows = r.usize()?;
    let cols = r.usize()?;
    let count = rows.checked_mul(cols).ok_or_else(|| Error::format(path, "size overflow"))?;
    let data = r.f64s(count)?;
    r.finished()?;
    Ok(DMatrix::from_vec(rows, cols, data))
}

/// Writes `<stem>.bin` and `<stem>_sv.csv`.
pub fn write_basis(stem: &Path, basis: &ReducedBasis) -> Result<()> {
    write_snapshots(&stem.with_extension("bin"), &basis.basis)?;
    let sv_path = singular_value_path(stem);
    let mut w = create(&sv_path)?;
    let mut text = String::from("index,sigma\n");
    for (i, s) in basis.singular_values.iter().enumerate() {
        text.push_str(&format!("{i},{s:e}\n"));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&sv_path, e))
}

pub fn singular_value_path(stem: &Path) -> std::path::PathBuf {
    let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    stem.with_file_name(format!("{name}_sv.csv"))
}

pub fn read_basis(stem: &Path, product: Tridiagonal, tolerance: f64) -> Result<ReducedBasis> {
    let basis = read_snapshots(&stem.with_extension("bin"))?;
    let sv_path = singular_value_path(stem);
    let rows = read_csv(&sv_path, &["index", "sigma"])?;
    let singular_values: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    if singular_values.len() != basis.ncols() {
        return Err(Error::format(
            &sv_path,
            format!("{} singular values for {} modes", singular_values.len(), basis.ncols()),
        ));
    }
    if basis.nrows() != product.size() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, product has size {}",
            basis.nrows(),
            product.size()
        )));
    }
    Ok(ReducedBasis { basis, singular_values, product, tolerance })
}

pub fn write_qoi_csv(path: &Path, times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(format!("{} times, {} values", times.len(), values.len())));
    }
    let mut text = String::with_capacity(32 * times.len() + 4);
    text.push_str("t,f\n");
    for (t, f) in times.iter().zip(values) {
        text.push_str(&format!("{t:e},{f:e}\n"));
    }
    write_all(path, text.as_bytes())
}

pub fn read_qoi_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_csv(path, &["t", "f"])?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

/// Numeric CSV with a fixed header.
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = open(path)?.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let found: Vec<&str> = first.split(',').map(str::trim).collect();
    if found != header {
        return Err(Error::format(path, format!("expected header {}, got {first}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        if row.len() != header.len() {
            return Err(Error::format(path, format!("line {}: expected {} fields", n + 2, header.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Float(f64),
    Int(u64),
    Text(String),
    Matrix(DMatrix<f64>),
    Ints(Vec<u64>),
}

impl Field {
    fn tag(&self) -> u8 {
        match self {
            Field::Float(_) => 0,
            Field::Int(_) => 1,
            Field::Text(_) => 2,
            Field::Matrix(_) => 3,
            Field::Ints(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Field::Float(_) => "float",
            Field::Int(_) => "int",
            Field::Text(_) => "text",
            Field::Matrix(_) => "matrix",
            Field::Ints(_) => "ints",
        }
    }
}

/// Named, typed fields under a kind string.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub kind: String,
    pub fields: Vec<(String, Field)>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Blob {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.to_string(), fields: Vec::new() }
    }

    pub fn push(&mut self, name: &str, field: Field) -> &mut Self {
        self.fields.push((name.to_string(), field));
        self
    }

    pub fn float(&mut self, name: &str, v: f64) -> &mut Self {
        self.push(name, Field::Float(v))
    }

    pub fn int(&mut self, name: &str, v: usize) -> &mut Self {
        self.push(name, Field::Int(v as u64))
    }

    pub fn text(&mut self, name: &str, v: &str) -> &mut Self {
        self.push(name, Field::Text(v.to_string()))
    }

    pub fn matrix(&mut self, name: &str, v: &DMatrix<f64>) -> &mut Self {
        self.push(name, Field::Matrix(v.clone()))
    }

    pub fn vector(&mut self, name: &str, v: &[f64]) -> &mut Self {
        self.push(name, Field::Matrix(DMatrix::from_column_slice(v.len(), 1, v)))
    }

    pub fn get(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    fn missing(&self, name: &str, want: &str) -> Error {
        Error::InvalidArgument(format!("{} blob: field {name} missing or not {want}", self.kind))
    }

    pub fn get_float(&self, name: &str) -> Result<f64> {
        match self.get(name) {
            Some(Field::Float(v)) => Ok(*v),
            _ => Err(self.missing(name, "a float")),
        }
    }

    pub fn get_int(&self, name: &str) -> Result<usize> {
        match self.get(name) {
            Some(Field::Int(v)) => Ok(*v as usize),
            _ => Err(self.missing(name, "an int")),
        }
    }

    pub fn get_text(&self, name: &str) -> Result<&str> {
        match self.get(name) {
            Some(Field::Text(v)) => Ok(v),
            _ => Err(self.missing(name, "text")),
        }
    }

    pub fn get_matrix(&self, name: &str) -> Result<&DMatrix<f64>> {
        match self.get(name) {
            Some(Field::Matrix(v)) => Ok(v),
            _ => Err(self.missing(name, "a matrix")),
        }
    }

    pub fn get_vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.get_matrix(name)?;
        if m.ncols() != 1 {
            return Err(self.missing(name, "a column vector"));
        }
        Ok(m.column(0).into_owned())
    }

    pub fn get_ints(&self, name: &str) -> Result<&[u64]> {
        match self.get(name) {
            Some(Field::Ints(v)) => Ok(v),
            _ => Err(self.missing(name, "an int list")),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, field) in &self.fields {
            put_str(&mut out, name);
            out.push(field.tag());
            match field {
                Field::Float(v) => out.extend_from_slice(&v.to_le_bytes()),
                Field::Int(v) => out.extend_from_slice(&v.to_le_bytes()),
                Field::Text(s) => put_str(&mut out, s),
                Field::Matrix(m) => {
                    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
                    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
                    put_f64s(&mut out, m.as_slice());
                }
                Field::Ints(v) => {
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::format(path, "bad magic, expected CDRB"));
        }
        let version = r.u32()?;
        if version != BLOB_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let kind = r.string()?;
        let count = r.u32()? as usize;
        let mut fields = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let field = match r.u8()? {
                0 => Field::Float(f64::from_le_bytes(r.take(8)?.try_into().unwrap())),
                1 => Field::Int(r.u64()?),
                2 => Field::Text(r.string()?),
                3 => {
                    let rows = r.usize()?;
                    let cols = r.usize()?;
                    let n = rows.checked_mul(cols).ok_or_else(|| Error::format(path, "size overflow"))?;
                    Field::Matrix(DMatrix::from_vec(rows, cols, r.f64s(n)?))
                }
                4 => {
                    let n = r.usize()?;
                    let mut v = Vec::with_capacity(n.min(1 << 20));
                    for _ in 0..n {
                        v.push(r.u64()?);
                    }
                    Field::Ints(v)
                }
                t => return Err(Error::format(path, format!("unknown field tag {t} for {name}"))),
            };
            fields.push((name, field));
        }
        r.finished()?;
        Ok(Self { kind, fields })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_all(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_all(path)?, path)
    }

    fn expect_kind(self, kind: &str, path: &Path) -> Result<Self> {
        if self.kind == kind {
            Ok(self)
        } else {
            Err(Error::format(path, format!("expected a {kind} blob, found {}", self.kind)))
        }
    }
}

pub const FOM_KIND: &str = "fom-operators";

fn put_tridiagonal(b: &mut Blob, name: &str, t: &Tridiagonal) {
    b.vector(&format!("{name}.lower"), &t.lower)
        .vector(&format!("{name}.diag"), &t.diag)
        .vector(&format!("{name}.upper"), &t.upper);
}

fn get_tridiagonal(b: &Blob, name: &str) -> Result<Tridiagonal> {
    let v = |part: &str| -> Result<Vec<f64>> { Ok(b.get_vector(&format!("{name}.{part}"))?.as_slice().to_vec()) };
    Tridiagonal::new(v("lower")?, v("diag")?, v("upper")?)
}

pub fn fom_to_blob(ops: &AffineOperatorSet) -> Blob {
    let mut b = Blob::new(FOM_KIND);
    b.int("num_intervals", ops.grid.num_intervals);
    for (name, t) in [
        ("mass", &ops.mass),
        ("a_diff", &ops.a_diff),
        ("a_conv", &ops.a_conv),
        ("a_reac", &ops.a_reac),
        ("h1_product", &ops.h1_product),
    ] {
        put_tridiagonal(&mut b, name, t);
    }
    b.vector("rhs_diff", &ops.rhs_diff)
        .vector("rhs_conv", &ops.rhs_conv)
        .vector("rhs_reac", &ops.rhs_reac)
        .vector("qoi", &ops.qoi_vector)
        .vector("lift", &ops.lift)
        .push("dirichlet_dofs", Field::Ints(ops.dirichlet_dofs.iter().map(|&d| d as u64).collect()));
    b
}

pub fn fom_from_blob(b: &Blob) -> Result<AffineOperatorSet> {
    let v = |name: &str| -> Result<Vec<f64>> { Ok(b.get_vector(name)?.as_slice().to_vec()) };
    let ops = AffineOperatorSet {
        grid: Grid1D::new(b.get_int("num_intervals")?)?,
        mass: get_tridiagonal(b, "mass")?,
        a_diff: get_tridiagonal(b, "a_diff")?,
        a_conv: get_tridiagonal(b, "a_conv")?,
        a_reac: get_tridiagonal(b, "a_reac")?,
        rhs_diff: v("rhs_diff")?,
        rhs_conv: v("rhs_conv")?,
        rhs_reac: v("rhs_reac")?,
        qoi_vector: v("qoi")?,
        h1_product: get_tridiagonal(b, "h1_product")?,
        dirichlet_dofs: b.get_ints("dirichlet_dofs")?.iter().map(|&d| d as usize).collect(),
        lift: v("lift")?,
    };
    let n = ops.num_nodes();
    let sizes_ok = [&ops.mass, &ops.a_diff, &ops.a_conv, &ops.a_reac, &ops.h1_product].iter().all(|t| t.size() == n)
        && [&ops.rhs_diff, &ops.rhs_conv, &ops.rhs_reac, &ops.qoi_vector, &ops.lift].iter().all(|x| x.len() == n)
        && ops.dirichlet_dofs.iter().all(|&d| d < n);
    if !sizes_ok {
        return Err(Error::DimensionMismatch(format!("operator sizes inconsistent with {n} nodes")));
    }
    Ok(ops)
}

pub fn write_fom_operators(path: &Path, ops: &AffineOperatorSet) -> Result<()> {
    fom_to_blob(ops).write(path)
}

pub fn read_fom_operators(path: &Path) -> Result<AffineOperatorSet> {
    fom_from_blob(&Blob::read(path)?.expect_kind(FOM_KIND, path)?)
}

pub const ROM_KIND: &str = "reduced-operators";
pub const KERNEL_KIND: &str = "kernel-model";

pub fn rom_to_blob(red: &ReducedOperatorSet) -> Blob {
    let mut b = Blob::new(ROM_KIND);
    b.int("dim", red.dim())
        .text("basis_digest", &red.basis_digest)
        .matrix("mass", &red.mass)
        .matrix("a_diff", &red.a_diff)
        .matrix("a_conv", &red.a_conv)
        .matrix("a_reac", &red.a_reac)
        .vector("rhs_diff", red.rhs_diff.as_slice())
        .vector("rhs_conv", red.rhs_conv.as_slice())
        .vector("rhs_reac", red.rhs_reac.as_slice())
        .vector("qoi", red.qoi.as_slice())
        .float("qoi_lift_offset", red.qoi_lift_offset)
        .vector("initial_state", red.initial_state.as_slice());
    b
}

pub fn rom_from_blob(b: &Blob) -> Result<ReducedOperatorSet> {
    let red = ReducedOperatorSet {
        mass: b.get_matrix("mass")?.clone(),
        a_diff: b.get_matrix("a_diff")?.clone(),
        a_conv: b.get_matrix("a_conv")?.clone(),
        a_reac: b.get_matrix("a_reac")?.clone(),
        rhs_diff: b.get_vector("rhs_diff")?,
        rhs_conv: b.get_vector("rhs_conv")?,
        rhs_reac: b.get_vector("rhs_reac")?,
        qoi: b.get_vector("qoi")?,
        qoi_lift_offset: b.get_float("qoi_lift_offset")?,
        initial_state: b.get_vector("initial_state")?,
        basis_digest: b.get_text("basis_digest")?.to_string(),
    };
    let n = b.get_int("dim")?;
    let square = [&red.mass, &red.a_diff, &red.a_conv, &red.a_reac].iter().all(|m| m.shape() == (n, n));
    let vectors = [&red.rhs_diff, &red.rhs_conv, &red.rhs_reac, &red.qoi, &red.initial_state]
        .iter()
        .all(|v| v.len() == n);
    if !(square && vectors) {
        return Err(Error::DimensionMismatch(format!("reduced operators inconsistent with dim {n}")));
    }
    Ok(red)
}

pub fn write_rom(path: &Path, red: &ReducedOperatorSet) -> Result<()> {
    rom_to_blob(red).write(path)
}

pub fn read_rom(path: &Path) -> Result<ReducedOperatorSet> {
    rom_from_blob(&Blob::read(path)?.expect_kind(ROM_KIND, path)?)
}

fn stop_reason_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Converged => "converged",
        StopReason::MaxPoints => "max-points",
        StopReason::PowerFloor => "power-floor",
        StopReason::Exhausted => "exhausted",
    }
}

fn parse_stop_reason(s: &str) -> Result<StopReason> {
    Ok(match s {
        "converged" => StopReason::Converged,
        "max-points" => StopReason::MaxPoints,
        "power-floor" => StopReason::PowerFloor,
        "exhausted" => StopReason::Exhausted,
        other => return Err(Error::InvalidArgument(format!("unknown stop reason {other}"))),
    })
}

pub fn kernel_to_blob(model: &KernelModel) -> Blob {
    let c = &model.config;
    let centers = DMatrix::from_fn(model.num_centers(), 2, |i, j| model.centers[i][j]);
    let mut b = Blob::new(KERNEL_KIND);
    b.float("shape_gamma", c.shape_gamma)
        .float("lambda_reg", c.lambda_reg)
        .int("max_points", c.max_points)
        .float("greedy_tol", c.greedy_tol)
        .float("output_tol", c.output_tol)
        .vector("norm_offset", &c.normalization.offset)
        .vector("norm_scale", &c.normalization.scale)
        .int("d_out", model.d_out)
        .int("num_train", model.num_train)
        .text("stop_reason", stop_reason_name(model.stop_reason))
        .matrix("centers", &centers)
        .push("center_indices", Field::Ints(model.center_indices.iter().map(|&i| i as u64).collect()))
        .matrix("coefficients", &model.coefficients)
        .matrix("newton_factor", &model.newton_factor)
        .vector("residual_history", &model.residual_history);
    if let Some(w) = &model.output_basis {
        b.matrix("output_basis", w);
    }
    b
}

pub fn kernel_from_blob(b: &Blob) -> Result<KernelModel> {
    let pair = |name: &str| -> Result<[f64; 2]> {
        let v = b.get_vector(name)?;
        if v.len() != 2 {
            return Err(Error::DimensionMismatch(format!("{name} must have 2 entries")));
        }
        Ok([v[0], v[1]])
    };
    let config = KernelConfig {
        shape_gamma: b.get_float("shape_gamma")?,
        lambda_reg: b.get_float("lambda_reg")?,
        max_points: b.get_int("max_points")?,
        greedy_tol: b.get_float("greedy_tol")?,
        output_tol: b.get_float("output_tol")?,
        normalization: Normalization { offset: pair("norm_offset")?, scale: pair("norm_scale")? },
    };
    let centers_m = b.get_matrix("centers")?;
    let n = centers_m.nrows();
    let d_out = b.get_int("d_out")?;
    let coefficients = b.get_matrix("coefficients")?.clone();
    let output_basis = match b.get("output_basis") {
        Some(Field::Matrix(w)) => Some(w.clone()),
        Some(_) => return Err(b.missing("output_basis", "a matrix")),
        None => None,
    };
    let width = output_basis.as_ref().map_or(d_out, |w| w.ncols());
    let newton_factor = b.get_matrix("newton_factor")?.clone();
    let consistent = centers_m.ncols() == 2
        && coefficients.shape() == (n, width)
        && newton_factor.shape() == (n, n)
        && output_basis.as_ref().is_none_or(|w| w.nrows() == d_out);
    let center_indices: Vec<usize> = b.get_ints("center_indices")?.iter().map(|&i| i as usize).collect();
    if !consistent || center_indices.len() != n {
        return Err(Error::DimensionMismatch("kernel model fields have inconsistent shapes".into()));
    }
    Ok(KernelModel {
        centers: (0..n).map(|i| [centers_m[(i, 0)], centers_m[(i, 1)]]).collect(),
        center_indices,
        coefficients,
        output_basis,
        newton_factor,
        config,
        d_out,
        num_train: b.get_int("num_train")?,
        stop_reason: parse_stop_reason(b.get_text("stop_reason")?)?,
        residual_history: b.get_vector("residual_history")?.as_slice().to_vec(),
    })
}

pub fn write_kernel(path: &Path, model: &KernelModel) -> Result<()> {
    kernel_to_blob(model).write(path)
}

pub fn read_kernel(path: &Path) -> Result<KernelModel> {
    kernel_from_blob(&Blob::read(path)?.expect_kind(KERNEL_KIND, path)?)
}
