//! Report rendering: node-table CSV and JSON documents.
//!
//! Every number is written in its shortest round-trip decimal form (the same
//! encoder serde_json uses), so identical runs produce byte-identical files
//! and the files re-parse to the exact binary values.

use serde::Serialize;

use crate::bsde::Solution;

/// Shortest round-trip decimal rendering of one float.
pub fn fmt_f64(x: f64) -> String {
    debug_assert!(x.is_finite());
    let mut s = serde_json::to_string(&x).expect("finite float always serializes");
    // serde_json writes integral floats as "1.0"; keep that, but normalize
    // negative zero for diff stability.
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

/// Node table of a solution: one row per node with the value, martingale
/// part, cumulative compensator and barrier. Fields without a defined value
/// (Z and dK at the terminal layer, L without a barrier) stay empty.
pub fn solution_csv(sol: &Solution) -> String {
    let n = sol.lattice.steps();
    let mut out = String::with_capacity((n + 1) * (n + 2) * 24);
    out.push_str("step,index,t,B,Y,Z,K,L\n");
    for i in 0..=n {
        let t = sol.lattice.time(i);
        for j in 0..=i {
            let b = sol.lattice.value(i, j);
            out.push_str(&i.to_string());
            out.push(',');
            out.push_str(&j.to_string());
            out.push(',');
            out.push_str(&fmt_f64(t));
            out.push(',');
            out.push_str(&fmt_f64(b));
            out.push(',');
            out.push_str(&fmt_f64(sol.y.at(i, j)));
            out.push(',');
            if i < n {
                out.push_str(&fmt_f64(sol.z.at(i, j)));
            }
            out.push(',');
            out.push_str(&fmt_f64(sol.k.at(i, j)));
            out.push(',');
            if let Some(l) = &sol.barrier {
                out.push_str(&fmt_f64(l.at(i, j)));
            }
            out.push('\n');
        }
    }
    out
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types always serialize");
    s.push('\n');
    s
}

/// Generic CSV table from a header and rows of already-rendered cells.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
