//! JSON system specification files.
//!
//! ```json
//! { "d": 1, "n": 2, "r": 1,
//!   "A": [[[3, 1], [1, 1]]],
//!   "S": [[-1]],
//!   "B": [[1, 0], [0, 1]],
//!   "labels": { "state": ["u", "v"], "boundary": ["g", "h"] } }
//! ```
//!
//! `Q` may replace `S`. Supplying `A0` (and optionally `P`) marks the
//! system as raw; it is then validated and mapped to canonical form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{canonicalize, RawSystem, RelaxationSystem, Transform};
use crate::error::{Error, Result};
use crate::linalg::RMat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub state: Vec<String>,
    pub boundary: Vec<String>,
}

impl Labels {
    pub fn default_for(n: usize, r: usize, rows: usize) -> Self {
        let mut state: Vec<String> = (1..=n - r).map(|i| format!("u{i}")).collect();
        state.extend((1..=r).map(|i| format!("v{i}")));
        Labels {
            state,
            boundary: (1..=rows).map(|i| format!("b{i}")).collect(),
        }
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "A")]
    pub a: Vec<Rows>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Rows>,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "A0", default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Rows>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

fn field_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("field `{field}`"),
        message: msg.into(),
    }
}

fn to_matrix(field: &str, rows: &Rows, shape: (Option<usize>, usize)) -> Result<RMat> {
    let (want_rows, cols) = shape;
    if let Some(m) = want_rows {
        if rows.len() != m {
            return Err(field_err(field, format!("expected {m} rows, found {}", rows.len())));
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(field_err(
                field,
                format!(
                    "row {i} has {} entries, expected {cols} (matrices must be rectangular)",
                    row.len()
                ),
            ));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(field_err(field, format!("entry ({i},{j}) is not finite")));
        }
    }
    Ok(RMat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl SystemFile {
    pub fn from_system(sys: &RelaxationSystem) -> Self {
        let rows = |m: &RMat| -> Rows { (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect() };
        SystemFile {
            d: sys.d,
            n: sys.n,
            r: sys.r,
            a: sys.a.iter().map(rows).collect(),
            q: None,
            s: Some(rows(&sys.s())),
            b: rows(&sys.b),
            a0: None,
            p: None,
            labels: Some(sys.labels.clone()),
        }
    }

    /// Converts to a canonical system, canonicalizing raw input.
    pub fn into_system(self) -> Result<(RelaxationSystem, Transform)> {
        let (n, r, d) = (self.n, self.r, self.d);
        if n < 2 {
            return Err(field_err("n", "state dimension must be at least 2"));
        }
        if r == 0 || r >= n {
            return Err(field_err("r", format!("need 1 <= r < n, got r = {r}")));
        }
        if d == 0 || self.a.len() != d {
            return Err(field_err(
                "A",
                format!("expected d = {d} matrices, found {}", self.a.len()),
            ));
        }
        let a = self
            .a
            .iter()
            .enumerate()
            .map(|(j, m)| to_matrix(&format!("A[{j}]"), m, (Some(n), n)))
            .collect::<Result<Vec<_>>>()?;
        let b = to_matrix("B", &self.b, (None, n))?;
        let q = match (&self.q, &self.s) {
            (Some(_), Some(_)) => return Err(field_err("Q", "give either Q or S, not both")),
            (None, None) => return Err(field_err("S", "one of Q or S is required")),
            (Some(q), None) => to_matrix("Q", q, (Some(n), n))?,
            (None, Some(s)) => {
                let s = to_matrix("S", s, (Some(r), r))?;
                crate::linalg::blockdiag(&RMat::zeros(n - r, n - r), &s)
            }
        };
        if let Some(l) = &self.labels {
            if l.state.len() != n {
                return Err(field_err("labels.state", format!("expected {n} labels")));
            }
            if l.boundary.len() != b.nrows() {
                return Err(field_err("labels.boundary", format!("expected {} labels", b.nrows())));
            }
        }
        match &self.a0 {
            Some(a0) => {
                let a0 = to_matrix("A0", a0, (Some(n), n))?;
                let p = self.p.as_ref().map(|p| to_matrix("P", p, (Some(n), n))).transpose()?;
                let raw = RawSystem {
                    a0,
                    a,
                    q,
                    p,
                    b,
                    labels: self.labels.clone(),
                };
                let (sys, t) = canonicalize(&raw)?;
                if sys.r != r {
                    return Err(field_err("r", format!("rank(Q) = {} but r = {r}", sys.r)));
                }
                Ok((sys, t))
            }
            None => {
                if self.p.is_some() {
                    return Err(field_err("P", "P is only meaningful together with A0"));
                }
                let nu = n - r;
                let off = q
                    .view((0, 0), (nu, n))
                    .abs()
                    .max()
                    .max(q.view((0, 0), (n, nu)).abs().max());
                if off != 0.0 {
                    return Err(field_err(
                        "Q",
                        "canonical Q must be diag(0, S); supply A0 for raw systems",
                    ));
                }
                let s = q.view((nu, nu), (r, r)).into_owned();
                let mut sys = RelaxationSystem::new(a, s, b)?;
                if let Some(l) = self.labels {
                    sys = sys.with_labels(l);
                }
                Ok((sys, Transform::identity(n)))
            }
        }
    }
}

/// Parses a system file from JSON text. `origin` names the source in
/// diagnostics.
pub fn parse_system(text: &str, origin: &str) -> Result<(RelaxationSystem, Transform)> {
    let file: SystemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("{origin}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    file.into_system().map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{origin}: {location}"),
            message,
        },
        other => other,
    })
}

pub fn load_system(path: &Path) -> Result<(RelaxationSystem, Transform)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_system(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_roundtrip() {
        let text = r#"{"d":1,"n":2,"r":1,"A":[[[3,1],[1,1]]],"S":[[-1]],"B":[[1,0],[0,1]]}"#;
        let (sys, t) = parse_system(text, "inline").unwrap();
        assert!(t.is_identity());
        assert_eq!(sys.a1()[(0, 0)], 3.0);
        assert_eq!(sys.labels.state, vec!["u1", "v1"]);
        let back = serde_json::to_string(&SystemFile::from_system(&sys)).unwrap();
        let (again, _) = parse_system(&back, "roundtrip").unwrap();
        assert_eq!(again.a, sys.a);
        assert_eq!(again.q, sys.q);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = r#"{"d":1,"n":2,"r":1,"A":[[[3,1],[1]]],"S":[[-1]],"B":[[1,0],[0,1]]}"#;
        let err = parse_system(text, "ragged").unwrap_err();
        match err {
            Error::Parse { location, message } => {
                assert!(location.contains("A[0]"), "{location}");
                assert!(message.contains("row 1"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let text = "{\n \"d\": 1,\n \"n\": oops }";
        match parse_system(text, "bad.json").unwrap_err() {
            Error::Parse { location, .. } => assert!(location.starts_with("bad.json:3:"), "{location}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn raw_system_is_canonicalized() {
        let text = r#"{"d":1,"n":2,"r":1,"A0":[[4,0],[0,1]],
            "A":[[[2,0.5],[2,-1]]],"Q":[[0,0],[0,-2]],"B":[[1,0]]}"#;
        let (sys, t) = parse_system(text, "raw").unwrap();
        assert!(!t.is_identity());
        let a = sys.a1();
        assert!((a - a.transpose()).abs().max() < 1e-14);
    }
}
