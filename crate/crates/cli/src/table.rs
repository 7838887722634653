use std::fmt;

/// One table cell. Numbers print in shortest round-trip form, so equal
/// values always print identically.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) if *v == 0.0 || (1e-4..1e15).contains(&v.abs()) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v:e}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Empty => Ok(()),
        }
    }
}

impl Cell {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Num(v) if v.is_finite() => (*v).into(),
            Cell::Num(v) => v.to_string().into(),
            Cell::Text(s) => s.clone().into(),
            Cell::Bool(b) => (*b).into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

/// A row with its certification status.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<Cell>,
    /// `bound - exact_hi`, when the row certifies a bound.
    pub margin: Option<f64>,
    /// A failed invariant with no margin attached (verify rows).
    pub failed: bool,
    pub skipped: Option<Skip>,
}

/// Why a row was not computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Skip {
    pub reason: String,
    /// The row hit an enumeration or state-space budget.
    pub resource: bool,
}

impl Row {
    pub fn new(cells: Vec<Cell>) -> Self {
        Row {
            cells,
            margin: None,
            failed: false,
            skipped: None,
        }
    }

    pub fn skip(reason: &stein_core::Error, width: usize) -> Self {
        Row {
            cells: vec![Cell::Empty; width],
            margin: None,
            failed: false,
            skipped: Some(Skip {
                reason: reason.to_string(),
                resource: matches!(reason, stein_core::Error::Resource(_)),
            }),
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn status(&self) -> String {
        match &self.skipped {
            Some(s) => format!("skipped: {}", s.reason),
            None if self.alarm() => "FAIL".into(),
            None => "ok".into(),
        }
    }

    pub fn alarm(&self) -> bool {
        self.failed || self.margin.is_some_and(|m| !(m >= 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub experiment: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Row>,
    /// `(name, x, y)` series for plotting.
    pub series: Vec<(&'static str, Vec<(f64, f64)>)>,
}

impl Table {
    pub fn new(experiment: &'static str, columns: Vec<&'static str>) -> Self {
        Table {
            experiment,
            columns,
            rows: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn alarms(&self) -> usize {
        self.rows.iter().filter(|r| r.alarm()).count()
    }

    pub fn skipped(&self) -> impl Iterator<Item = &Skip> {
        self.rows.iter().filter_map(|r| r.skipped.as_ref())
    }
}
