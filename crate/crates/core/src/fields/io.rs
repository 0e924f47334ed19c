use std::io::{Read, Write};

use super::{Grid, SampledField};
use crate::error::{Error, Result};

fn csv_err(line: usize, message: impl Into<String>) -> Error {
    Error::FieldCsv {
        line,
        message: message.into(),
    }
}

/// Writes `i1,...,in,u1,...,uN` rows in node order after a header row.
pub fn write_field_csv<W: Write>(field: &SampledField, out: W) -> Result<()> {
    let g = field.grid();
    let n = g.dim();
    let nn = field.target_dim();
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=n)
        .map(|i| format!("i{i}"))
        .chain((1..=nn).map(|a| format!("u{a}")))
        .collect();
    let to_io = |e: csv::Error| csv_err(0, e.to_string());
    w.write_record(&header).map_err(to_io)?;
    let mut idx = vec![0; n];
    let mut record = Vec::with_capacity(n + nn);
    for node in 0..g.node_count() {
        g.multi_index(node, &mut idx);
        record.clear();
        record.extend(idx.iter().map(|i| i.to_string()));
        record.extend(field.value(node).iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(to_io)?;
    }
    w.flush().map_err(|e| csv_err(0, e.to_string()))?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`]; `N` is inferred from the header
/// and lines starting with `#` are skipped.
pub fn read_field_csv<R: Read>(input: R, grid: &Grid) -> Result<SampledField> {
    let n = grid.dim();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let header = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if header.len() <= n {
        return Err(csv_err(1, format!("header needs {n} index columns and at least one value column")));
    }
    for (col, name) in header.iter().enumerate() {
        let expected = if col < n {
            format!("i{}", col + 1)
        } else {
            format!("u{}", col - n + 1)
        };
        if name.trim() != expected {
            return Err(csv_err(1, format!("column {} should be `{expected}`, found `{name}`", col + 1)));
        }
    }
    let nn = header.len() - n;
    let mut values = Vec::with_capacity(grid.node_count() * nn);
    let mut idx = vec![0; n];
    let mut rows = 0usize;
    let mut line = 1;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(line + 1, e.to_string()))?;
        line = record.position().map_or(line + 1, |p| p.line() as usize);
        if rows >= grid.node_count() {
            return Err(csv_err(line, "more rows than grid nodes"));
        }
        grid.multi_index(rows, &mut idx);
        for (axis, expected) in idx.iter().enumerate() {
            let got: usize = record[axis]
                .trim()
                .parse()
                .map_err(|_| csv_err(line, format!("bad index `{}`", &record[axis])))?;
            if got != *expected {
                return Err(csv_err(line, format!("expected index {expected} on axis {}, found {got}", axis + 1)));
            }
        }
        for col in n..n + nn {
            let v: f64 = record[col]
                .trim()
                .parse()
                .map_err(|_| csv_err(line, format!("bad value `{}`", &record[col])))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows != grid.node_count() {
        return Err(csv_err(line, format!("expected {} rows, found {rows}", grid.node_count())));
    }
    SampledField::new(grid.clone(), nn, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major_with_header() {
        let g = Grid::cube(2, 0.0, 1.0, 2).unwrap();
        let u = SampledField::new(g, 1, vec![0.5, 1.0, -2.0, 0.125]).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "i1,i2,u1\n0,0,0.5\n0,1,1\n1,0,-2\n1,1,0.125\n");
    }

    #[test]
    fn reports_line_of_bad_row() {
        let g = Grid::cube(2, 0.0, 1.0, 2).unwrap();
        let text = "i1,i2,u1\n0,0,1\n0,1,x\n1,0,1\n1,1,1\n";
        match read_field_csv(text.as_bytes(), &g) {
            Err(Error::FieldCsv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_field_csv("u1,i1,i2\n".as_bytes(), &g).is_err());
        assert!(read_field_csv("i1,i2,u1\n0,0,1\n".as_bytes(), &g).is_err());
    }
}
