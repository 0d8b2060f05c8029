//! Records rendered as JSON or CSV. Floats carry 17 significant digits and
//! infinities are written as the strings `"inf"` / `"-inf"`.

use serde_json::{Map, Number, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Int(u64),
    Float(f64),
    Text(String),
    Group(Record),
    /// Tabular payload; in CSV it becomes the body of the output.
    Rows(Vec<Record>),
}

/// Ordered key/value pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Record(pub Vec<(&'static str, Field)>);

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn int(mut self, key: &'static str, v: u64) -> Self {
        self.0.push((key, Field::Int(v)));
        self
    }

    pub fn float(mut self, key: &'static str, v: f64) -> Self {
        self.0.push((key, Field::Float(v)));
        self
    }

    pub fn text(mut self, key: &'static str, v: impl Into<String>) -> Self {
        self.0.push((key, Field::Text(v.into())));
        self
    }

    pub fn group(mut self, key: &'static str, v: Record) -> Self {
        self.0.push((key, Field::Group(v)));
        self
    }

    pub fn rows(mut self, key: &'static str, v: Vec<Record>) -> Self {
        self.0.push((key, Field::Rows(v)));
        self
    }
}

/// Scientific notation with 17 significant digits and a signed exponent.
pub fn format_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        let s = format!("{v:.16e}");
        match s.split_once('e') {
            Some((mantissa, exp)) if !exp.starts_with('-') => format!("{mantissa}e+{exp}"),
            _ => s,
        }
    }
}

fn float_value(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(
            format_float(v)
                .parse::<Number>()
                .expect("formatted float is a JSON number"),
        )
    } else {
        Value::String(format_float(v))
    }
}

fn to_value(record: &Record) -> Value {
    let mut map = Map::new();
    for (key, field) in &record.0 {
        let v = match field {
            Field::Int(i) => Value::Number((*i).into()),
            Field::Float(f) => float_value(*f),
            Field::Text(s) => Value::String(s.clone()),
            Field::Group(g) => to_value(g),
            Field::Rows(rows) => Value::Array(rows.iter().map(to_value).collect()),
        };
        map.insert((*key).to_string(), v);
    }
    Value::Object(map)
}

pub fn to_json(record: &Record) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(record)).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn flatten(record: &Record, out: &mut Vec<(&'static str, String)>) {
    for (key, field) in &record.0 {
        match field {
            Field::Int(i) => out.push((key, i.to_string())),
            Field::Float(f) => out.push((key, format_float(*f))),
            Field::Text(s) => out.push((key, s.clone())),
            Field::Group(g) => flatten(g, out),
            Field::Rows(_) => {}
        }
    }
}

/// A record holding `Rows` renders as that table; otherwise as a single row
/// with nested groups flattened into columns.
pub fn to_csv(record: &Record) -> String {
    let table = record.0.iter().find_map(|(_, f)| match f {
        Field::Rows(rows) => Some(rows.clone()),
        _ => None,
    });
    let rows = table.unwrap_or_else(|| vec![record.clone()]);
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (i, row) in rows.iter().enumerate() {
        let mut cells = Vec::new();
        flatten(row, &mut cells);
        if i == 0 {
            writer
                .write_record(cells.iter().map(|(k, _)| *k))
                .expect("writing to memory");
        }
        writer
            .write_record(cells.iter().map(|(_, v)| v.as_str()))
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(1.0), "1.0000000000000000e+0");
        assert_eq!(format_float(-2.5e10), "-2.5000000000000000e+10");
        assert_eq!(format_float(f64::INFINITY), "inf");
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_preserves_order_and_infinity() {
        let r = Record::new()
            .float("epsilon", f64::INFINITY)
            .float("delta", 0.5)
            .group("params", Record::new().int("n", 3));
        let s = to_json(&r);
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["epsilon"], "inf");
        assert_eq!(v["params"]["n"], 3);
        assert!(s.find("epsilon").unwrap() < s.find("delta").unwrap());
        assert!(s.contains("5.0000000000000000e-1"));
    }

    #[test]
    fn csv_flattens_groups_and_renders_tables() {
        let r = Record::new()
            .text("command", "delta")
            .group("params", Record::new().int("n", 3).float("p", 0.5));
        assert_eq!(to_csv(&r), "command,n,p\ndelta,3,5.0000000000000000e-1\n");
        let rows = vec![Record::new().float("epsilon", 0.0), Record::new().float("epsilon", 1.0)];
        let t = Record::new().text("command", "curve").rows("rows", rows);
        assert_eq!(to_csv(&t), "epsilon\n0.0000000000000000e+0\n1.0000000000000000e+0\n");
    }
}
