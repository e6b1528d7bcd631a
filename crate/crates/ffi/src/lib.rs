// SPDX-License-Identifier: Apache-2.0

//! C ABI over the Olympus service.
//!
//! Handles are opaque. Every function returns an [`OlympusStatus`]; when it
//! is not `OLYMPUS_STATUS_OK`, `olympus_last_error_message` and
//! `olympus_last_error_code` describe the failure on the calling thread.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with `olympus_string_free`; byte buffers with
//! `olympus_buffer_free`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use olympus::api::{handle, ApiRequest};
use olympus::model::Role;
use olympus::persistence::{CatalogueDocument, ImportMode};
use olympus::storage::DirStorage;
use olympus::{Config, Error, Olympus};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlympusStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The operation failed; see the last error code and message.
    Failed = 3,
    /// The library panicked. The handle should not be used further.
    Panic = 4,
}

/// Opaque service handle.
pub struct OlympusService {
    inner: Olympus,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<(CString, CString)>> = const { RefCell::new(None) };
}

fn set_error(code: &str, message: &str) {
    let clean = |s: &str| CString::new(s.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some((clean(code), clean(message))));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(OlympusStatus);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        set_error(err.code(), &err.to_string());
        Failure(OlympusStatus::Failed)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> OlympusStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OlympusStatus::Ok,
        Ok(Err(Failure(status))) => status,
        Err(_) => {
            set_error("panic", "internal panic");
            OlympusStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    set_error("null_argument", &format!("{what} must not be null"));
    Failure(OlympusStatus::NullArgument)
}

/// # Safety
/// `ptr` is null or a valid NUL-terminated string.
unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("invalid_utf8", &format!("{what} is not valid UTF-8"));
        Failure(OlympusStatus::InvalidUtf8)
    })
}

/// # Safety
/// `ptr` is null or a valid NUL-terminated string.
unsafe fn optional_text<'a>(ptr: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        text(ptr, what).map(Some)
    }
}

/// # Safety
/// `svc` is null or a handle returned by an open function.
unsafe fn service<'a>(svc: *const OlympusService) -> Result<&'a Olympus, Failure> {
    svc.as_ref().map(|s| &s.inner).ok_or_else(|| null("service"))
}

fn out_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let value = CString::new(value.replace('\0', " ")).expect("nul bytes removed");
    // SAFETY: checked non-null above; the caller provides writable storage.
    unsafe { *out = value.into_raw() };
    Ok(())
}

fn store_handle(out: *mut *mut OlympusService, inner: Olympus) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null above.
    unsafe { *out = Box::into_raw(Box::new(OlympusService { inner })) };
    Ok(())
}

/// Opens (creating if needed) a service persisted under `data_dir`.
///
/// # Safety
/// `data_dir` is a NUL-terminated string; `out` points to writable storage.
#[no_mangle]
pub unsafe extern "C" fn olympus_open(data_dir: *const c_char, out: *mut *mut OlympusService) -> OlympusStatus {
    guard(|| {
        let dir = text(data_dir, "data_dir")?;
        let storage = DirStorage::open(dir)?;
        store_handle(out, Olympus::open(Box::new(storage), Config::default())?)
    })
}

/// Opens a service that keeps everything in memory.
///
/// # Safety
/// `out` points to writable storage.
#[no_mangle]
pub unsafe extern "C" fn olympus_open_in_memory(out: *mut *mut OlympusService) -> OlympusStatus {
    guard(|| store_handle(out, Olympus::in_memory(Config::default())))
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `svc` is null or a handle not yet closed.
#[no_mangle]
pub unsafe extern "C" fn olympus_close(svc: *mut OlympusService) {
    if !svc.is_null() {
        drop(Box::from_raw(svc));
    }
}

/// Performs one API request, exactly as the HTTP server would.
///
/// `token`, `body` and `content_type` may be null. `path` may include a
/// query string. On `OLYMPUS_STATUS_OK` the HTTP status is written to
/// `out_status` and the response body to `out_body`/`out_len`, including
/// for error responses, whose body is the JSON error object.
///
/// # Safety
/// String arguments are null or NUL-terminated; `body` points to `body_len`
/// readable bytes when non-null; out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn olympus_request(
    svc: *const OlympusService,
    method: *const c_char,
    path: *const c_char,
    token: *const c_char,
    content_type: *const c_char,
    body: *const u8,
    body_len: usize,
    out_status: *mut u16,
    out_body: *mut *mut u8,
    out_len: *mut usize,
) -> OlympusStatus {
    guard(|| {
        let svc = service(svc)?;
        let mut request = ApiRequest::new(text(method, "method")?, text(path, "path")?);
        request.bearer = optional_text(token, "token")?.map(str::to_owned);
        request.content_type = optional_text(content_type, "content_type")?.map(str::to_owned);
        if !body.is_null() && body_len > 0 {
            request.body = std::slice::from_raw_parts(body, body_len).to_vec();
        }
        if out_status.is_null() || out_body.is_null() || out_len.is_null() {
            return Err(null("output pointer"));
        }
        let response = handle(svc, &request);
        let bytes = response.body.into_boxed_slice();
        *out_status = response.status;
        *out_len = bytes.len();
        *out_body = Box::into_raw(bytes) as *mut u8;
        Ok(())
    })
}

/// Creates or updates a user and returns a fresh bearer token.
/// `roles` is a comma-separated list such as `"crowd_worker,student"`.
///
/// # Safety
/// String arguments are NUL-terminated; `out_token` is writable.
#[no_mangle]
pub unsafe extern "C" fn olympus_issue_token(
    svc: *const OlympusService,
    display_name: *const c_char,
    roles: *const c_char,
    out_token: *mut *mut c_char,
) -> OlympusStatus {
    guard(|| {
        let svc = service(svc)?;
        let roles = text(roles, "roles")?
            .split(',')
            .map(str::trim)
            .filter(|r| !r.is_empty())
            .map(str::parse::<Role>)
            .collect::<Result<Vec<_>, _>>()?;
        let (_, token) = svc.issue_token(text(display_name, "display_name")?, &roles)?;
        out_string(out_token, token)
    })
}

/// Writes the interchange document as JSON.
///
/// # Safety
/// `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn olympus_export_json(svc: *const OlympusService, out_json: *mut *mut c_char) -> OlympusStatus {
    guard(|| {
        let doc = service(svc)?.export_catalogue().to_json_bytes();
        out_string(out_json, String::from_utf8(doc).expect("JSON is UTF-8"))
    })
}

/// Imports a document. `mode` is `"replace"` or `"fail_on_conflict"`.
/// Asset bytes must already be in the store. The summary is returned as
/// JSON in `out_summary`, which may be null.
///
/// # Safety
/// String arguments are NUL-terminated; `out_summary` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn olympus_import_json(
    svc: *const OlympusService,
    json: *const c_char,
    mode: *const c_char,
    out_summary: *mut *mut c_char,
) -> OlympusStatus {
    guard(|| {
        let svc = service(svc)?;
        let mode = match text(mode, "mode")?.replace('-', "_").as_str() {
            "replace" => ImportMode::Replace,
            "fail_on_conflict" => ImportMode::FailOnConflict,
            other => return Err(Error::Validation {
                field: "mode".into(),
                message: format!("unknown import mode {other:?}"),
            }
            .into()),
        };
        let doc = CatalogueDocument::from_json(text(json, "json")?.as_bytes())?;
        let summary = svc.import_catalogue(doc, mode, &BTreeMap::new())?;
        if out_summary.is_null() {
            return Ok(());
        }
        out_string(out_summary, serde_json::to_string(&summary).expect("summary serializes"))
    })
}

fn last_error_field(pick: impl Fn(&(CString, CString)) -> &CString) -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |e| pick(e).as_ptr()))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn olympus_last_error_message() -> *const c_char {
    last_error_field(|e| &e.1)
}

/// Stable code of the last failure on this thread (for example
/// `"not_found"`), or null. Same lifetime as the message.
#[no_mangle]
pub extern "C" fn olympus_last_error_code() -> *const c_char {
    last_error_field(|e| &e.0)
}

/// # Safety
/// `s` is null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn olympus_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `buf`/`len` are null/any or exactly a buffer returned by
/// `olympus_request`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn olympus_buffer_free(buf: *mut u8, len: usize) {
    if !buf.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf, len)));
    }
}
