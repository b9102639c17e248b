//! Dataset CSV: attribute columns, an optional `window` column, then `label`.
//! Missing values are written as `?`.

use std::path::Path;

use vidtel_core::labels::{IDENTIFIER_CLASSES, RESOLUTION_CLASSES};
use vidtel_core::ml::{Dataset, Instance};

use crate::error::{Error, Result};

pub const MISSING: &str = "?";

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    write_records(&mut w, data).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn dataset_to_string(data: &Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_records(&mut w, data).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn write_records<W: std::io::Write>(w: &mut csv::Writer<W>, data: &Dataset) -> csv::Result<()> {
    let windowed = data.instances.iter().any(|i| i.window.is_some());
    let mut header: Vec<&str> = data.attribute_names.iter().map(String::as_str).collect();
    if windowed {
        header.push("window");
    }
    header.push("label");
    w.write_record(&header)?;
    for inst in &data.instances {
        let mut row: Vec<String> = inst
            .values
            .iter()
            .map(|v| v.map_or_else(|| MISSING.to_string(), |x| x.to_string()))
            .collect();
        if windowed {
            row.push(inst.window.map_or_else(|| MISSING.to_string(), |w| w.to_string()));
        }
        row.push(data.class_names[inst.label].clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Known label vocabularies keep their canonical order; anything else is
/// ordered by first appearance.
fn class_order(labels: &[String]) -> Vec<String> {
    for known in [&IDENTIFIER_CLASSES[..], &RESOLUTION_CLASSES[..]] {
        if labels.iter().all(|l| known.contains(&l.as_str())) {
            return known.iter().map(|s| s.to_string()).collect();
        }
    }
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn parse_dataset(text: &str) -> std::result::Result<Dataset, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(str::to_string)
        .collect();
    if header.last().map(String::as_str) != Some("label") {
        return Err("last column must be `label`".into());
    }
    let windowed = header.len() >= 2 && header[header.len() - 2] == "window";
    let n_attrs = header.len() - 1 - usize::from(windowed);
    if n_attrs == 0 {
        return Err("no attribute columns".into());
    }

    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let mut values = Vec::with_capacity(n_attrs);
        for field in rec.iter().take(n_attrs) {
            let field = field.trim();
            values.push(if field == MISSING {
                None
            } else {
                let v: f64 = field.parse().map_err(|_| format!("line {line}: bad value {field:?}"))?;
                if !v.is_finite() {
                    return Err(format!("line {line}: non-finite value"));
                }
                Some(v)
            });
        }
        let window = if windowed {
            match rec[n_attrs].trim() {
                MISSING => None,
                w => Some(
                    w.parse::<usize>()
                        .map_err(|_| format!("line {line}: bad window {w:?}"))?,
                ),
            }
        } else {
            None
        };
        rows.push((values, window, rec[header.len() - 1].trim().to_string()));
    }
    if rows.is_empty() {
        return Err("dataset has no rows".into());
    }

    let labels: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
    let classes = class_order(&labels);
    let mut data = Dataset::new(&header[..n_attrs], &classes);
    for (values, window, label) in rows {
        let label = classes
            .iter()
            .position(|c| *c == label)
            .expect("class list covers all labels");
        data.push_instance(Instance {
            values,
            label,
            weight: 1.0,
            window,
        })
        .map_err(|e| e.to_string())?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vidtel_core::traffgen::{generate_dataset, DatasetConfig, GenParams};

    #[test]
    fn round_trip() {
        let cfg = DatasetConfig {
            videos: [1, 1, 1, 1],
            downloads: 2,
            apps: 1,
            seed: 4,
        };
        let d = generate_dataset(&cfg, &GenParams::default());
        for data in [&d.identifier, &d.resolution] {
            let text = dataset_to_string(data);
            let back = parse_dataset(&text).unwrap();
            assert_eq!(&back, data);
        }
        assert!(dataset_to_string(&d.identifier)
            .lines()
            .nth(1)
            .unwrap()
            .contains(",?,?,0,video"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_dataset("a,b\n1,x\n").is_err());
        assert!(parse_dataset("a,label\nzz,x\n").is_err());
        assert!(parse_dataset("a,label\n").is_err());
        let d = parse_dataset("a,label\n1,b\n2,a\n").unwrap();
        assert_eq!(d.class_names, ["b", "a"]);
    }
}
