//! Deterministic result serialization: CSV tables, JSON summaries, manifests.
//!
//! Every float is rendered with 17 significant digits (`{:.16e}`) in both the
//! CSV and the JSON summary, so the two files parse back to bit-identical
//! values and a rerun with the same configuration reproduces every result
//! file byte for byte.  The single timestamp lives in the manifest and is the
//! only field allowed to differ between reruns.

use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// Renders a float with 17 significant digits; parses back to the same bits.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One table cell.  Non-finite floats are demoted to text (`+inf`, `-inf`,
/// `nan`) so CSV and JSON stay parseable.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn float(x: f64) -> Self {
        if x.is_finite() {
            Cell::Float(x)
        } else if x.is_nan() {
            Cell::Text("nan".into())
        } else if x > 0.0 {
            Cell::Text("+inf".into())
        } else {
            Cell::Text("-inf".into())
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(x) => fmt_sig17(*x),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Cell::Int(v) => Json::U(*v),
            Cell::Float(x) => Json::F(*x),
            Cell::Text(s) => Json::S(s.clone()),
        }
    }
}

/// A rectangular result table with a fixed column schema.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match schema");
        self.rows.push(row);
    }
}

/// Writes `# seed=`, the header row, then the data rows.  An empty table
/// still gets its header.
pub fn write_csv(dest: &Path, seed: u64, table: &Table) -> io::Result<()> {
    let mut s = String::new();
    s.push_str(&format!("# seed={seed}\n"));
    s.push_str(&table.columns.join(","));
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::csv).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    std::fs::write(dest, s)
}

/// A JSON value rendered deterministically: object keys keep insertion
/// order and floats use the 17-significant-digit form (a valid JSON number).
#[derive(Debug, Clone)]
pub enum Json {
    U(u64),
    F(f64),
    S(String),
    B(bool),
    A(Vec<Json>),
    O(Vec<(&'static str, Json)>),
    Null,
}

impl Json {
    pub fn float(x: f64) -> Self {
        if x.is_finite() {
            Json::F(x)
        } else if x.is_nan() {
            Json::S("nan".into())
        } else if x > 0.0 {
            Json::S("+inf".into())
        } else {
            Json::S("-inf".into())
        }
    }

    pub fn opt<T>(v: Option<T>, f: impl Fn(T) -> Json) -> Json {
        v.map(f).unwrap_or(Json::Null)
    }

    fn render(&self, indent: usize, out: &mut String) {
        match self {
            Json::U(v) => out.push_str(&v.to_string()),
            Json::F(x) => out.push_str(&fmt_sig17(*x)),
            Json::S(s) => {
                out.push('"');
                for ch in s.chars() {
                    match ch {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        '\r' => out.push_str("\\r"),
                        c if (c as u32) < 0x20 => {
                            out.push_str(&format!("\\u{:04x}", c as u32));
                        }
                        c => out.push(c),
                    }
                }
                out.push('"');
            }
            Json::B(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Null => out.push_str("null"),
            Json::A(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&" ".repeat(indent + 2));
                    item.render(indent + 2, out);
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent));
                out.push(']');
            }
            Json::O(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (key, value)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&" ".repeat(indent + 2));
                    out.push_str(&format!("\"{key}\": "));
                    value.render(indent + 2, out);
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent));
                out.push('}');
            }
        }
    }

    pub fn to_string_pretty(&self) -> String {
        let mut out = String::new();
        self.render(0, &mut out);
        out.push('\n');
        out
    }
}

/// Outcome of the `--assert` gate for an experiment run.
#[derive(Debug, Clone)]
pub struct Assertion {
    pub enabled: bool,
    pub passed: bool,
    pub detail: String,
}

/// The JSON summary mirroring a CSV table: seed, mode, per-mode metadata,
/// the column schema, the rows, and the assertion verdict.
pub fn summary_json(
    seed: u64,
    mode: &str,
    meta: Vec<(&'static str, Json)>,
    table: &Table,
    assertion: &Assertion,
) -> String {
    let mut fields = vec![
        ("seed", Json::U(seed)),
        ("mode", Json::S(mode.to_string())),
    ];
    fields.extend(meta);
    fields.push((
        "columns",
        Json::A(
            table
                .columns
                .iter()
                .map(|c| Json::S((*c).to_string()))
                .collect(),
        ),
    ));
    fields.push((
        "rows",
        Json::A(
            table
                .rows
                .iter()
                .map(|row| Json::A(row.iter().map(Cell::json).collect()))
                .collect(),
        ),
    ));
    fields.push((
        "assertion",
        Json::O(vec![
            ("enabled", Json::B(assertion.enabled)),
            ("passed", Json::B(assertion.passed)),
            ("detail", Json::S(assertion.detail.clone())),
        ]),
    ));
    Json::O(fields).to_string_pretty()
}

/// The manifest written beside every output set: code version, command,
/// resolved configuration echo, and the run timestamp (the only
/// nondeterministic field).
pub fn manifest_json(command: &str, config: Vec<(&'static str, Json)>) -> String {
    let unix_time = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Json::O(vec![
        ("version", Json::S(env!("CARGO_PKG_VERSION").to_string())),
        ("command", Json::S(command.to_string())),
        ("config", Json::O(config)),
        ("unix_time", Json::U(unix_time)),
    ])
    .to_string_pretty()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips_awkward_floats() {
        for x in [
            0.1,
            1.0 / 3.0,
            6.02e23,
            -7.2e-12,
            f64::MIN_POSITIVE,
            1.8446744073709552e19,
        ] {
            let back: f64 = fmt_sig17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} must survive the trip");
        }
    }

    #[test]
    fn csv_has_comment_header_and_rows() {
        let mut t = Table::new(&["n", "v"]);
        t.push_row(vec![Cell::Int(2), Cell::float(0.5)]);
        let dir = std::env::temp_dir().join("covol_output_test");
        std::fs::create_dir_all(&dir).unwrap();
        let dest = dir.join("t.csv");
        write_csv(&dest, 9, &t).unwrap();
        let text = std::fs::read_to_string(&dest).unwrap();
        assert_eq!(
            text,
            "# seed=9\nn,v\n2,5.0000000000000000e-1\n",
            "exact serialized form"
        );
    }

    #[test]
    fn empty_tables_serialize_as_header_only_csv() {
        let t = Table::new(&["a", "b", "c"]);
        let dir = std::env::temp_dir().join("covol_output_test");
        std::fs::create_dir_all(&dir).unwrap();
        let dest = dir.join("empty.csv");
        write_csv(&dest, 3, &t).unwrap();
        let text = std::fs::read_to_string(&dest).unwrap();
        assert_eq!(text, "# seed=3\na,b,c\n", "no rows means header only");
    }

    #[test]
    fn json_renders_deterministically_and_escapes() {
        let j = Json::O(vec![
            ("a", Json::F(1.5)),
            ("b", Json::S("x\"y\\z".into())),
            ("c", Json::A(vec![Json::U(1), Json::B(false), Json::Null])),
        ]);
        let s = j.to_string_pretty();
        assert!(s.contains("1.5000000000000000e0"));
        assert!(s.contains("\"x\\\"y\\\\z\""));
        assert_eq!(s, j.to_string_pretty(), "rendering is deterministic");
    }

    #[test]
    fn non_finite_floats_become_text() {
        assert!(matches!(Cell::float(f64::INFINITY), Cell::Text(s) if s == "+inf"));
        assert!(matches!(Cell::float(f64::NEG_INFINITY), Cell::Text(s) if s == "-inf"));
        assert!(matches!(Cell::float(f64::NAN), Cell::Text(s) if s == "nan"));
        assert!(matches!(Cell::float(1.0), Cell::Float(_)));
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_are_rejected() {
        let mut t = Table::new(&["a", "b"]);
        t.push_row(vec![Cell::Int(1)]);
    }
}
