//! C interface to `dphase`.
//!
//! Every function returns a [`DphaseStatus`]; on failure the message is
//! available from [`dphase_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dphase::approx::{energy, gradient_bound_check, mollify, MollifierSpec, TestField};
use dphase::conditions::{check_f1, check_zsigma, convex_hull_1d, ConditionReport, ZsigmaConstants};
use dphase::densities::{DensitySpec, ExponentConfig, WeightSpec};
use dphase::fields::{Ball, Grid, MatRef, SampledField};
use dphase::sampling::SamplerConfig;
use dphase::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DphaseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DimensionMismatch = 3,
    OutOfDomain = 4,
    Precondition = 5,
    Inconclusive = 6,
    NotConverged = 7,
    Config = 8,
    FieldCsv = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DphaseWeightKind {
    Zero = 0,
    Constant = 1,
    Holder = 2,
    Step = 3,
    TwoThreshold = 4,
}

/// Weight parameters; fields not used by `kind` are ignored.
/// `Holder`: `value * |x1 - r1|^sigma`. `Step`: jump at `r1`.
/// `TwoThreshold`: thresholds `r1 < r2`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DphaseWeight {
    pub kind: DphaseWeightKind,
    pub value: f64,
    pub r1: f64,
    pub r2: f64,
    pub sigma: f64,
    pub h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DphaseDensityKind {
    Zhikov = 0,
    Example1 = 1,
    Example2 = 2,
    PPower = 3,
}

pub struct DphaseDensity(DensitySpec);
pub struct DphaseField(SampledField);
pub struct DphaseReport(ConditionReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DphaseStatus {
    match e {
        Error::DimensionMismatch(_) => DphaseStatus::DimensionMismatch,
        Error::InvalidParameter(_) => DphaseStatus::InvalidParameter,
        Error::OutOfDomain(_) => DphaseStatus::OutOfDomain,
        Error::Precondition(_) => DphaseStatus::Precondition,
        Error::Inconclusive(_) => DphaseStatus::Inconclusive,
        Error::NotConverged(_) => DphaseStatus::NotConverged,
        Error::Config { .. } => DphaseStatus::Config,
        Error::FieldCsv { .. } => DphaseStatus::FieldCsv,
        Error::Io { .. } => DphaseStatus::Io,
    }
}

struct Fail(DphaseStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DphaseStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> DphaseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DphaseStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            DphaseStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn weight_spec(w: &DphaseWeight) -> Result<WeightSpec, Fail> {
    let spec = match w.kind {
        DphaseWeightKind::Zero => WeightSpec::Zero,
        DphaseWeightKind::Constant => WeightSpec::Constant(w.value),
        DphaseWeightKind::Holder => WeightSpec::Holder {
            coef: w.value,
            shift: w.r1,
            sigma: w.sigma,
        },
        DphaseWeightKind::Step => WeightSpec::StepHolder {
            r: w.r1,
            sigma: w.sigma,
            h: w.h,
        },
        DphaseWeightKind::TwoThreshold => WeightSpec::TwoThreshold {
            r1: w.r1,
            r2: w.r2,
            sigma: w.sigma,
            h: w.h,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dphase_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a density. `weight` may be null for kinds without a weight.
///
/// # Safety
/// `weight` must be null or point to a valid `DphaseWeight`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_density_new(
    kind: DphaseDensityKind,
    p: f64,
    q: f64,
    weight: *const DphaseWeight,
    out_density: *mut *mut DphaseDensity,
) -> DphaseStatus {
    guard(|| {
        let slot = out(out_density, "out_density")?;
        let w = match weight.as_ref() {
            Some(w) => weight_spec(w)?,
            None => WeightSpec::Zero,
        };
        let f = match kind {
            DphaseDensityKind::Zhikov => DensitySpec::zhikov(p, q, w),
            DphaseDensityKind::Example1 => DensitySpec::example1(p, q, w),
            DphaseDensityKind::Example2 => DensitySpec::example2(p, q),
            DphaseDensityKind::PPower => DensitySpec::PPower { p },
        };
        f.validate()?;
        *slot = Box::into_raw(Box::new(DphaseDensity(f)));
        Ok(())
    })
}

/// # Safety
/// `density` must come from `dphase_density_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn dphase_density_free(density: *mut DphaseDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// `f(x, z)` with `x` of length `n` and `z` a row-major `rows × n` matrix.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn dphase_density_eval(
    density: *const DphaseDensity,
    x: *const f64,
    n: usize,
    z: *const f64,
    rows: usize,
    out_value: *mut f64,
) -> DphaseStatus {
    guard(|| {
        let f = handle(density, "density")?;
        let x = slice(x, n, "x")?;
        let z = slice(z, rows * n, "z")?;
        let slot = out(out_value, "out_value")?;
        *slot = f.0.eval(x, MatRef::new(rows, n, z))?;
        Ok(())
    })
}

/// Writes 1 to `out_holds` when `q ≤ p (1 + σ/n)`, else 0.
///
/// # Safety
/// `out_holds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_check_f1(p: f64, q: f64, n: usize, sigma: f64, out_holds: *mut c_int) -> DphaseStatus {
    guard(|| {
        let slot = out(out_holds, "out_holds")?;
        let e = ExponentConfig::new(p, q, n, 1, sigma)?;
        *slot = c_int::from(check_f1(&e));
        Ok(())
    })
}

/// Samples `a(x) ≤ c6 a(x~) + c5 |x − x~|^σ` over pairs in `B(center, radius)`.
///
/// # Safety
/// `weight` and `center` must be valid; `out_report` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dphase_check_zsigma(
    weight: *const DphaseWeight,
    c5: f64,
    c6: f64,
    sigma: f64,
    center: *const f64,
    n: usize,
    radius: f64,
    budget: usize,
    seed: u64,
    out_report: *mut *mut DphaseReport,
) -> DphaseStatus {
    guard(|| {
        let w = weight_spec(handle(weight, "weight")?)?;
        let center = slice(center, n, "center")?;
        let slot = out(out_report, "out_report")?;
        let c = ZsigmaConstants::new(c5, c6, sigma)?;
        let ball = Ball::new(center.to_vec(), radius)?;
        let r = check_zsigma(&w, &c, &ball, &SamplerConfig::new(budget, seed));
        *slot = Box::into_raw(Box::new(DphaseReport(r)));
        Ok(())
    })
}

/// 1 when the report found no violation.
///
/// # Safety
/// `report` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn dphase_report_passed(report: *const DphaseReport) -> c_int {
    report.as_ref().map_or(0, |r| c_int::from(r.0.passed()))
}

/// Text rendering of a report; release with `dphase_string_free`.
///
/// # Safety
/// `report` must be a valid handle; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_report_text(report: *const DphaseReport, out_text: *mut *mut c_char) -> DphaseStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let slot = out(out_text, "out_text")?;
        let s = CString::new(r.0.to_text().replace('\0', " ")).unwrap_or_default();
        *slot = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dphase_report_free(report: *mut DphaseReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dphase_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Lower convex hull of `(xs[i], ys[i])` evaluated at `queries`; values
/// outside the hull's range are NaN.
///
/// # Safety
/// Arrays must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn dphase_convex_hull_eval(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    queries: *const f64,
    qlen: usize,
    out_values: *mut f64,
) -> DphaseStatus {
    guard(|| {
        let xs = slice(xs, len, "xs")?;
        let ys = slice(ys, len, "ys")?;
        let qs = slice(queries, qlen, "queries")?;
        if qlen > 0 && out_values.is_null() {
            return Err(null("out_values"));
        }
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let hull = convex_hull_1d(&pts)?;
        for (i, &s) in qs.iter().enumerate() {
            *out_values.add(i) = hull.eval(s).unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Field with `target_dim` components on the cube grid `[lo, hi]^n` with
/// `cells` nodes per axis; `values` is node-major, `cells^n · target_dim` long.
///
/// # Safety
/// `values` must be valid for `len` doubles; `out_field` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_field_new(
    n: usize,
    lo: f64,
    hi: f64,
    cells: usize,
    target_dim: usize,
    values: *const f64,
    len: usize,
    out_field: *mut *mut DphaseField,
) -> DphaseStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        let slot = out(out_field, "out_field")?;
        let grid = Grid::cube(n, lo, hi, cells)?;
        *slot = Box::into_raw(Box::new(DphaseField(SampledField::new(grid, target_dim, v.to_vec())?)));
        Ok(())
    })
}

/// The kinked test field `|x1 − r|^exponent` (plus smooth components) sampled
/// on `[lo, hi]^n`.
///
/// # Safety
/// `out_field` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_field_kinked(
    n: usize,
    lo: f64,
    hi: f64,
    cells: usize,
    target_dim: usize,
    r: f64,
    exponent: f64,
    out_field: *mut *mut DphaseField,
) -> DphaseStatus {
    guard(|| {
        let slot = out(out_field, "out_field")?;
        let grid = Grid::cube(n, lo, hi, cells)?;
        let u = TestField::Kinked { r, exponent, target_dim }.sample(&grid)?;
        *slot = Box::into_raw(Box::new(DphaseField(u)));
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dphase_field_free(field: *mut DphaseField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of doubles held by the field (`nodes · target_dim`).
///
/// # Safety
/// `field` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn dphase_field_len(field: *const DphaseField) -> usize {
    field.as_ref().map_or(0, |f| f.0.values().len())
}

/// Nodes per axis of the field's grid (the first axis).
///
/// # Safety
/// `field` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn dphase_field_nodes_per_axis(field: *const DphaseField) -> usize {
    field.as_ref().map_or(0, |f| f.0.grid().counts()[0])
}

/// Copies the field's values into `buf`.
///
/// # Safety
/// `buf` must be writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dphase_field_values(field: *const DphaseField, buf: *mut f64, cap: usize) -> DphaseStatus {
    guard(|| {
        let f = handle(field, "field")?;
        let v = f.0.values();
        if cap < v.len() {
            return Err(Fail(
                DphaseStatus::BufferTooSmall,
                format!("buffer holds {cap} values, field has {}", v.len()),
            ));
        }
        if !v.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        }
        Ok(())
    })
}

/// Mollified field at radius `eps`, on the grid shrunk by the kernel margin.
///
/// # Safety
/// `field` must be valid; `out_field` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_mollify(field: *const DphaseField, eps: f64, out_field: *mut *mut DphaseField) -> DphaseStatus {
    guard(|| {
        let f = handle(field, "field")?;
        let slot = out(out_field, "out_field")?;
        let m = MollifierSpec::new(eps)?;
        *slot = Box::into_raw(Box::new(DphaseField(mollify(&f.0, &m)?)));
        Ok(())
    })
}

/// `max |Du_ε| ≤ c₁ ε^{−n/p}` with 1% slack; writes the bound and the
/// observed maximum.
///
/// # Safety
/// `field` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_gradient_bound(
    field: *const DphaseField,
    eps: f64,
    p: f64,
    out_bound: *mut f64,
    out_max: *mut f64,
    out_passed: *mut c_int,
) -> DphaseStatus {
    guard(|| {
        let f = handle(field, "field")?;
        let (b, m, ok) = (out(out_bound, "out_bound")?, out(out_max, "out_max")?, out(out_passed, "out_passed")?);
        let r = gradient_bound_check(&f.0, &MollifierSpec::new(eps)?, p, None)?;
        *b = r.bound;
        *m = r.max_grad;
        *ok = c_int::from(r.passed);
        Ok(())
    })
}

/// `∫_{B(center, radius)} f(x, Du)` by the midpoint rule.
///
/// # Safety
/// Handles and `center` must be valid; `out_energy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dphase_energy(
    density: *const DphaseDensity,
    field: *const DphaseField,
    center: *const f64,
    radius: f64,
    out_energy: *mut f64,
) -> DphaseStatus {
    guard(|| {
        let d = handle(density, "density")?;
        let f = handle(field, "field")?;
        let n = f.0.grid().dim();
        let c = slice(center, n, "center")?;
        let slot = out(out_energy, "out_energy")?;
        *slot = energy(&d.0, &f.0, &Ball::new(c.to_vec(), radius)?)?;
        Ok(())
    })
}

/// Runs the command-line tool with `argv` (including the program name) and
/// returns its exit code.
///
/// # Safety
/// `argv` must hold `argc` valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dphase_cli_run(argc: c_int, argv: *const *const c_char) -> c_int {
    if argv.is_null() || argc < 0 {
        set_error("argv is null".into());
        return 2;
    }
    let args: Vec<String> = (0..argc as usize)
        .map(|i| {
            let a = *argv.add(i);
            if a.is_null() {
                String::new()
            } else {
                CStr::from_ptr(a).to_string_lossy().into_owned()
            }
        })
        .collect();
    catch_unwind(|| dphase::cli::run(args)).unwrap_or(2)
}
