//! Per-iteration log records shared by every descent driver, and their
//! JSONL encoding.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// One record per iterate. `step` is the step size taken *from* this
/// iterate (0 on the terminal record). `grad_norm` is the norm of the
/// driver's search quantity: the gradient, or for non-smooth and
/// zeroth-order drivers the sampled direction / estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterTrace {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub rho: f64,
}

/// Write one JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, trace: &[IterTrace]) -> io::Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(trace: &[IterTrace]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, trace).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
