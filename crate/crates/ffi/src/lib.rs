//! C ABI over `filpost`.
//!
//! Every function returns a [`FilpostStatus`]. On failure a message is kept
//! per thread and can be read with [`filpost_last_error`]. Results files are
//! exposed through the opaque [`FilpostStream`] handle, released with
//! [`filpost_stream_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use filpost::codec::{self, DataItem, FilStream};
use filpost::czm::{
    self, CzmError, ForwardConfig, InverseOptions, ResponseCurve, SyntheticModel, TSLParams,
};
use filpost::records::{self, RecordError};
use filpost::truss::{self, AnalyticTruss, OptimizeOptions, TrussError, TrussProblem};
use filpost::weibull::{self, ElementField, WeibullParams};

/// Number of points on a cohesive response curve.
pub const FILPOST_CURVE_POINTS: usize = 12;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilpostStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Codec = 4,
    Record = 5,
    Weibull = 6,
    Infeasible = 7,
    NoConvergence = 8,
    BoxTooSmall = 9,
    Job = 10,
    OutOfRange = 11,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilpostItemKind {
    Int = 0,
    Float = 1,
    Text = 2,
}

/// Decoded results file.
pub struct FilpostStream(FilStream);

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FilpostWeibullParams {
    pub sigma_th: f64,
    pub m: f64,
    pub sigma_u: f64,
    pub v0: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FilpostTrussProblem {
    pub youngs_modulus: f64,
    pub rho: f64,
    pub length: f64,
    pub load: f64,
    pub d_max: f64,
    pub sigma_max: f64,
    pub area_min: f64,
    pub area_max: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FilpostTrussResult {
    pub areas: [f64; 2],
    /// `u_x`, `u_y` at the loaded node.
    pub displacements: [f64; 2],
    pub member_stresses: [f64; 2],
    pub weight: f64,
    pub iterations: usize,
    pub objective_evals: usize,
    pub constraint_evals: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FilpostCzmResult {
    pub tc: f64,
    pub gamma_c: f64,
    pub mismatch: f64,
    pub iterations: usize,
    pub at_boundary: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(FilpostStatus, String);

impl Failure {
    fn new(status: FilpostStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<codec::CodecError> for Failure {
    fn from(e: codec::CodecError) -> Self {
        let status = match e {
            codec::CodecError::FileNotFound(_) | codec::CodecError::Io(_) => FilpostStatus::Io,
            _ => FilpostStatus::Codec,
        };
        Failure::new(status, e)
    }
}

impl From<RecordError> for Failure {
    fn from(e: RecordError) -> Self {
        Failure::new(FilpostStatus::Record, e)
    }
}

impl From<weibull::WeibullError> for Failure {
    fn from(e: weibull::WeibullError) -> Self {
        Failure::new(FilpostStatus::Weibull, e)
    }
}

impl From<TrussError> for Failure {
    fn from(e: TrussError) -> Self {
        let status = match e {
            TrussError::InvalidProblem(_) => FilpostStatus::InvalidArgument,
            TrussError::Infeasible(_) => FilpostStatus::Infeasible,
            TrussError::NoConvergence { .. } => FilpostStatus::NoConvergence,
            TrussError::Job(_) => FilpostStatus::Job,
            _ => FilpostStatus::InvalidArgument,
        };
        Failure::new(status, e)
    }
}

impl From<CzmError> for Failure {
    fn from(e: CzmError) -> Self {
        let status = match e {
            CzmError::NoConvergence { .. } => FilpostStatus::NoConvergence,
            CzmError::BoxTooSmall { .. } => FilpostStatus::BoxTooSmall,
            CzmError::Job(_) => FilpostStatus::Job,
            _ => FilpostStatus::InvalidArgument,
        };
        Failure::new(status, e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FilpostStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            FilpostStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FilpostStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(
            FilpostStatus::NullPointer,
            format!("{name} is null"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            FilpostStatus::InvalidArgument,
            format!("{name} is not UTF-8"),
        )
    })
}

unsafe fn stream<'a>(h: *const FilpostStream) -> Result<&'a FilStream, Failure> {
    non_null(h, "stream")?;
    Ok(&(*h).0)
}

unsafe fn item<'a>(
    h: *const FilpostStream,
    record: usize,
    index: usize,
) -> Result<&'a DataItem, Failure> {
    let s = stream(h)?;
    s.records
        .get(record)
        .and_then(|r| r.attributes().get(index))
        .ok_or_else(|| {
            Failure::new(
                FilpostStatus::OutOfRange,
                format!("no item {index} in record {record}"),
            )
        })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn filpost_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn filpost_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads and decodes a results file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_read(
    path: *const c_char,
    out: *mut *mut FilpostStream,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        let s = codec::read_fil(Path::new(path))?;
        *out = Box::into_raw(Box::new(FilpostStream(s)));
        Ok(())
    })
}

/// Decodes results-file text; line breaks are ignored.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_decode(
    text: *const c_char,
    out: *mut *mut FilpostStream,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = c_str(text, "text")?;
        let s = codec::decode_stream(&codec::strip_line_breaks(text))?;
        *out = Box::into_raw(Box::new(FilpostStream(s)));
        Ok(())
    })
}

/// # Safety
/// `stream` must come from this library and not be used afterwards. Null is
/// accepted.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_free(stream: *mut FilpostStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Number of logical records.
///
/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_len(
    stream: *const FilpostStream,
    out: *mut usize,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = self::stream(stream)?.len();
        Ok(())
    })
}

/// Number of records with the given key.
///
/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_count_key(
    stream: *const FilpostStream,
    key: i64,
    out: *mut usize,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = self::stream(stream)?.with_key(key).count();
        Ok(())
    })
}

/// Key and attribute count of record `record`.
///
/// # Safety
/// `stream` must be a live handle; `key` and `attributes` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_record(
    stream: *const FilpostStream,
    record: usize,
    key: *mut i64,
    attributes: *mut usize,
) -> FilpostStatus {
    guard(|| {
        non_null(key, "key")?;
        non_null(attributes, "attributes")?;
        let r = self::stream(stream)?.records.get(record).ok_or_else(|| {
            Failure::new(FilpostStatus::OutOfRange, format!("no record {record}"))
        })?;
        *key = r.key();
        *attributes = r.attributes().len();
        Ok(())
    })
}

/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_item_kind(
    stream: *const FilpostStream,
    record: usize,
    index: usize,
    out: *mut FilpostItemKind,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = match item(stream, record, index)? {
            DataItem::Int(_) => FilpostItemKind::Int,
            DataItem::Float(_) => FilpostItemKind::Float,
            DataItem::Str8(_) => FilpostItemKind::Text,
        };
        Ok(())
    })
}

/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_item_int(
    stream: *const FilpostStream,
    record: usize,
    index: usize,
    out: *mut i64,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        let it = item(stream, record, index)?;
        *out = it.as_int().ok_or_else(|| {
            Failure::new(
                FilpostStatus::InvalidArgument,
                format!("item is {it}, not an integer"),
            )
        })?;
        Ok(())
    })
}

/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_item_float(
    stream: *const FilpostStream,
    record: usize,
    index: usize,
    out: *mut f64,
) -> FilpostStatus {
    guard(|| {
        non_null(out, "out")?;
        let it = item(stream, record, index)?;
        *out = it.as_float().ok_or_else(|| {
            Failure::new(
                FilpostStatus::InvalidArgument,
                format!("item is {it}, not a float"),
            )
        })?;
        Ok(())
    })
}

/// Copies the 8 characters of a text item plus a NUL into `buf`, which must
/// hold at least 9 bytes.
///
/// # Safety
/// `stream` must be a live handle and `buf` writable for 9 bytes.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_item_text(
    stream: *const FilpostStream,
    record: usize,
    index: usize,
    buf: *mut c_char,
) -> FilpostStatus {
    guard(|| {
        non_null(buf, "buf")?;
        let it = item(stream, record, index)?;
        let text = it.as_text().ok_or_else(|| {
            Failure::new(
                FilpostStatus::InvalidArgument,
                format!("item is {it}, not text"),
            )
        })?;
        let out = slice::from_raw_parts_mut(buf.cast::<u8>(), 9);
        out[..8].copy_from_slice(text.as_bytes());
        out[8] = 0;
        Ok(())
    })
}

/// Writes the stream as 80-column results-file text into `buf`.
///
/// `needed` receives the byte count including the trailing NUL. When `cap`
/// is too small nothing is written and `OutOfRange` is returned; `buf` may be
/// null to query the size.
///
/// # Safety
/// `stream` must be a live handle, `needed` valid, `buf` writable for `cap`
/// bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_encode(
    stream: *const FilpostStream,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> FilpostStatus {
    guard(|| {
        non_null(needed, "needed")?;
        let text = codec::encode_stream(self::stream(stream)?);
        *needed = text.len() + 1;
        if buf.is_null() || cap < text.len() + 1 {
            return Err(Failure::new(
                FilpostStatus::OutOfRange,
                format!("buffer needs {} bytes", text.len() + 1),
            ));
        }
        let out = slice::from_raw_parts_mut(buf.cast::<u8>(), text.len() + 1);
        out[..text.len()].copy_from_slice(text.as_bytes());
        out[text.len()] = 0;
        Ok(())
    })
}

/// Nodal output for `key` (101 displacements, 104 reaction forces).
///
/// `rows` and `width` receive the table shape. `node_ids` must hold `cap`
/// entries and `components` `cap * width`, row-major. When either is null or
/// `cap` is smaller than the row count, only the shape is written and
/// `OutOfRange` is returned.
///
/// # Safety
/// `stream` must be a live handle; `rows` and `width` valid; the buffers
/// writable as described when non-null.
#[no_mangle]
pub unsafe extern "C" fn filpost_stream_nodal_field(
    stream: *const FilpostStream,
    key: i64,
    node_ids: *mut i64,
    components: *mut f64,
    cap: usize,
    rows: *mut usize,
    width: *mut usize,
) -> FilpostStatus {
    guard(|| {
        non_null(rows, "rows")?;
        non_null(width, "width")?;
        let table = records::extract_nodal_field(self::stream(stream)?, key)?;
        let n = table.rows.len();
        let w = table.rows.first().map_or(0, |r| r.components.len());
        *rows = n;
        *width = w;
        if node_ids.is_null() || components.is_null() || cap < n {
            return Err(Failure::new(
                FilpostStatus::OutOfRange,
                format!("table has {n} rows"),
            ));
        }
        let ids = slice::from_raw_parts_mut(node_ids, n);
        let values = slice::from_raw_parts_mut(components, n * w);
        for (i, row) in table.rows.iter().enumerate() {
            ids[i] = row.node_id;
            values[i * w..(i + 1) * w].copy_from_slice(&row.components);
        }
        Ok(())
    })
}

fn weibull_params(p: &FilpostWeibullParams) -> Result<WeibullParams, Failure> {
    Ok(WeibullParams::new(p.sigma_th, p.m, p.sigma_u, p.v0)?)
}

/// Weibull stress of an element field given as `n` maximum principal
/// stresses and volumes.
///
/// # Safety
/// `sigma1` and `volume` must each point to `n` doubles; `params` and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn filpost_weibull_stress(
    sigma1: *const f64,
    volume: *const f64,
    n: usize,
    params: *const FilpostWeibullParams,
    out: *mut f64,
) -> FilpostStatus {
    guard(|| {
        non_null(sigma1, "sigma1")?;
        non_null(volume, "volume")?;
        non_null(params, "params")?;
        non_null(out, "out")?;
        let p = weibull_params(&*params)?;
        let field = ElementField::new(
            0.0,
            slice::from_raw_parts(sigma1, n).to_vec(),
            slice::from_raw_parts(volume, n).to_vec(),
        )?;
        *out = weibull::weibull_stress(&field, &p);
        Ok(())
    })
}

/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn filpost_failure_probability(
    sigma_w: f64,
    params: *const FilpostWeibullParams,
    out: *mut f64,
) -> FilpostStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        *out = weibull::failure_probability(sigma_w, &weibull_params(&*params)?)?;
        Ok(())
    })
}

/// Minimum-weight sizing of the two-bar truss from `x0` (two areas).
///
/// # Safety
/// `problem` and `out` must be valid; `x0` must point to two doubles.
#[no_mangle]
pub unsafe extern "C" fn filpost_truss_optimize(
    problem: *const FilpostTrussProblem,
    x0: *const f64,
    tol_f: f64,
    tol_c: f64,
    out: *mut FilpostTrussResult,
) -> FilpostStatus {
    guard(|| {
        non_null(problem, "problem")?;
        non_null(x0, "x0")?;
        non_null(out, "out")?;
        let p = &*problem;
        let problem = TrussProblem {
            youngs_modulus: p.youngs_modulus,
            rho: p.rho,
            length: p.length,
            load: p.load,
            d_max: p.d_max,
            sigma_max: p.sigma_max,
            area_bounds: [p.area_min, p.area_max],
        };
        let opts = OptimizeOptions {
            tol_f,
            tol_c,
            ..OptimizeOptions::default()
        };
        let x0 = [*x0, *x0.add(1)];
        let opt = truss::optimize_truss(&problem, x0, &opts, &mut AnalyticTruss)?;
        *out = FilpostTrussResult {
            areas: opt.state.areas,
            displacements: opt.state.displacements,
            member_stresses: opt.state.member_stresses,
            weight: opt.state.weight,
            iterations: opt.iterations,
            objective_evals: opt.objective_evals,
            constraint_evals: opt.constraint_evals,
        };
        Ok(())
    })
}

/// Synthetic cohesive response for `(tc, gamma_c)` with default model
/// constants, written as 12 CMOD and load values.
///
/// # Safety
/// `cmod` and `load` must each be writable for 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn filpost_czm_forward(
    tc: f64,
    gamma_c: f64,
    cmod: *mut f64,
    load: *mut f64,
) -> FilpostStatus {
    guard(|| {
        non_null(cmod, "cmod")?;
        non_null(load, "load")?;
        let params = TSLParams::new(tc, gamma_c)?;
        let curve = czm::forward_model(&params, &ForwardConfig::default());
        slice::from_raw_parts_mut(cmod, FILPOST_CURVE_POINTS).copy_from_slice(curve.cmod());
        slice::from_raw_parts_mut(load, FILPOST_CURVE_POINTS).copy_from_slice(curve.load());
        Ok(())
    })
}

/// Identifies `(tc, gamma_c)` from a 12-point target load curve on the
/// default CMOD abscissae, using the synthetic forward model.
///
/// `bounds` is `[tc_min, tc_max, gamma_min, gamma_max]`.
///
/// # Safety
/// `target_load` must point to 12 doubles, `bounds` to 4, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn filpost_czm_identify(
    target_load: *const f64,
    bounds: *const f64,
    tol: f64,
    max_outer: usize,
    out: *mut FilpostCzmResult,
) -> FilpostStatus {
    guard(|| {
        non_null(target_load, "target_load")?;
        non_null(bounds, "bounds")?;
        non_null(out, "out")?;
        let config = ForwardConfig::default();
        let target = ResponseCurve::new(
            config.abscissae(),
            slice::from_raw_parts(target_load, FILPOST_CURVE_POINTS).to_vec(),
        )?;
        let b = slice::from_raw_parts(bounds, 4);
        let opts = InverseOptions {
            bounds: [[b[0], b[1]], [b[2], b[3]]],
            tol,
            max_outer,
            ..InverseOptions::default()
        };
        let r = czm::inverse_identify(&target, &mut SyntheticModel { config }, &opts)?;
        *out = FilpostCzmResult {
            tc: r.params.tc,
            gamma_c: r.params.gamma_c,
            mismatch: r.mismatch,
            iterations: r.iterations,
            at_boundary: r.on_boundary(),
        };
        Ok(())
    })
}
