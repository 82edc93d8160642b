//! C interface to ialp agents.
//!
//! Agents are opaque handles created by `ialp_agent_new` or `ialp_agent_load`
//! and released with `ialp_agent_free`. Every fallible call returns an
//! `IalpStatus`; on failure `ialp_last_error` describes the most recent error
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ialp::agent::AgentBundle;
use ialp::encoder::EncoderConfig;
use ialp::harness::checkpoint::{load_checkpoint, save_checkpoint};
use ialp::nn::argmax;
use ialp::rng::{stream_rng, streams};
use ialp::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IalpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NonFinite = 5,
    Checkpoint = 6,
    Config = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A trained or freshly initialised agent.
pub struct IalpAgent {
    inner: AgentBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> IalpStatus {
    match e {
        Error::Io { .. } => IalpStatus::Io,
        Error::Parse { .. } => IalpStatus::Parse,
        Error::InvalidArgument(_) => IalpStatus::InvalidArgument,
        Error::NonFinite(_) => IalpStatus::NonFinite,
        Error::Checkpoint(_) => IalpStatus::Checkpoint,
        Error::Config(_) => IalpStatus::Config,
        Error::Environment(_) | Error::Oracle(_) => IalpStatus::Internal,
    }
}

struct Failure(IalpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IalpStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IalpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            IalpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            IalpStatus::Internal
        }
    }
}

unsafe fn agent_ref<'a>(agent: *const IalpAgent) -> Result<&'a AgentBundle, Failure> {
    agent
        .as_ref()
        .map(|a| &a.inner)
        .ok_or_else(|| null("agent"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| {
            Failure(
                IalpStatus::InvalidArgument,
                "path is not valid UTF-8".into(),
            )
        })
}

unsafe fn history_arg<'a>(history: *const usize, len: usize) -> Result<&'a [usize], Failure> {
    if len == 0 {
        return Err(Failure(
            IalpStatus::InvalidArgument,
            "history is empty".into(),
        ));
    }
    if history.is_null() {
        return Err(null("history"));
    }
    Ok(std::slice::from_raw_parts(history, len))
}

unsafe fn write_out(values: &[f64], out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len < values.len() {
        return Err(Failure(
            IalpStatus::BufferTooSmall,
            format!("output holds {out_len} values, {} needed", values.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Create a randomly initialised agent; `*out` receives the handle.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_new(
    embed_dim: usize,
    max_seq_len: usize,
    num_items: usize,
    gamma: f64,
    seed: u64,
    out: *mut *mut IalpAgent,
) -> IalpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = EncoderConfig::new(embed_dim, max_seq_len, num_items)?;
        let inner = AgentBundle::new(config, gamma, &mut stream_rng(seed, streams::INIT))?;
        *out = Box::into_raw(Box::new(IalpAgent { inner }));
        Ok(())
    })
}

/// Load an agent checkpoint; `*out` receives the handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_load(
    path: *const c_char,
    out: *mut *mut IalpAgent,
) -> IalpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(IalpAgent { inner }));
        Ok(())
    })
}

/// Write the agent to a checkpoint file.
///
/// # Safety
/// `agent` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_save(
    agent: *const IalpAgent,
    path: *const c_char,
) -> IalpStatus {
    guard(|| {
        save_checkpoint(agent_ref(agent)?, &path_arg(path)?)?;
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `agent` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_free(agent: *mut IalpAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Catalogue size of the agent, or 0 for a null handle.
///
/// # Safety
/// `agent` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_num_items(agent: *const IalpAgent) -> usize {
    agent.as_ref().map_or(0, |a| a.inner.num_items())
}

/// Actor softmax over all items after `history`, written to `out[0..num_items]`.
///
/// # Safety
/// `history` must hold `history_len` ids and `out` room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_action_distribution(
    agent: *const IalpAgent,
    history: *const usize,
    history_len: usize,
    out: *mut f64,
    out_len: usize,
) -> IalpStatus {
    guard(|| {
        let probs = agent_ref(agent)?.policy(history_arg(history, history_len)?)?;
        write_out(&probs, out, out_len)
    })
}

/// Critic Q-values of all items after `history`, written to `out[0..num_items]`.
///
/// # Safety
/// `history` must hold `history_len` ids and `out` room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_q_values(
    agent: *const IalpAgent,
    history: *const usize,
    history_len: usize,
    out: *mut f64,
    out_len: usize,
) -> IalpStatus {
    guard(|| {
        let q = agent_ref(agent)?.q_for_history(history_arg(history, history_len)?)?;
        write_out(&q, out, out_len)
    })
}

/// Most probable item under the actor; ties go to the lowest id.
///
/// # Safety
/// `history` must hold `history_len` ids and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ialp_agent_greedy_action(
    agent: *const IalpAgent,
    history: *const usize,
    history_len: usize,
    out: *mut usize,
) -> IalpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let probs = agent_ref(agent)?.policy(history_arg(history, history_len)?)?;
        *out = argmax(&probs);
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ialp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn ialp_status_name(status: IalpStatus) -> *const c_char {
    let name: &'static CStr = match status {
        IalpStatus::Ok => c"ok",
        IalpStatus::NullPointer => c"null_pointer",
        IalpStatus::InvalidArgument => c"invalid_argument",
        IalpStatus::Io => c"io",
        IalpStatus::Parse => c"parse",
        IalpStatus::NonFinite => c"non_finite",
        IalpStatus::Checkpoint => c"checkpoint",
        IalpStatus::Config => c"config",
        IalpStatus::BufferTooSmall => c"buffer_too_small",
        IalpStatus::Internal => c"internal",
    };
    name.as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_names_are_distinct() {
        let all = [
            IalpStatus::Ok,
            IalpStatus::NullPointer,
            IalpStatus::InvalidArgument,
            IalpStatus::Io,
            IalpStatus::Parse,
            IalpStatus::NonFinite,
            IalpStatus::Checkpoint,
            IalpStatus::Config,
            IalpStatus::BufferTooSmall,
            IalpStatus::Internal,
        ];
        let names: std::collections::BTreeSet<_> = all
            .iter()
            .map(|&s| unsafe { CStr::from_ptr(ialp_status_name(s)) })
            .collect();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn errors_map_to_their_codes() {
        assert_eq!(
            status_of(&Error::InvalidArgument("x".into())),
            IalpStatus::InvalidArgument
        );
        assert_eq!(
            status_of(&Error::Checkpoint("x".into())),
            IalpStatus::Checkpoint
        );
        assert_eq!(
            status_of(&Error::NonFinite("x".into())),
            IalpStatus::NonFinite
        );
    }
}
