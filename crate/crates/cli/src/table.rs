//! Row-oriented output shared by `omp` and `scan`: CSV with a header, or a
//! JSON array of objects keyed by the header.

use serde_json::{Map, Value};

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(v) => format!("{v:.16e}"),
                Cell::Int(i) => i.to_string(),
                Cell::Text(s) => s.clone(),
            }))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (key, cell) in self.header.iter().zip(row) {
                    let v = match cell {
                        Cell::Num(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
                        Cell::Int(i) => Value::from(*i),
                        Cell::Text(s) => Value::from(s.as_str()),
                    };
                    obj.insert(key.clone(), v);
                }
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

/// `beta_1..beta_n` column names.
pub fn beta_columns(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|i| format!("beta_{i}"))
}
