use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Pipeline state recorded at the end of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub tick: u64,
    pub t_s: f64,
    pub occupied: bool,
    pub centroid_x: Option<f64>,
    pub region: Option<usize>,
    pub dwell_ms: u64,
    pub base: Vec<f64>,
    pub panels: Vec<f64>,
    pub angles: Vec<f64>,
    pub tx_bytes: usize,
    pub failsafe: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n_regions: usize,
    pub m_panels: usize,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(n_regions: usize, m_panels: usize) -> Self {
        Trace {
            n_regions,
            m_panels,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = ["tick", "t_s", "occupied", "centroid_x", "region", "dwell_ms"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..self.n_regions).map(|i| format!("base_{i}")));
        cols.extend((0..self.m_panels).map(|j| format!("panel_{j}")));
        cols.extend((0..self.m_panels).map(|j| format!("angle_{j}")));
        cols.push("tx_bytes".into());
        cols.push("failsafe".into());
        cols
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for row in &self.rows {
            if row.base.len() != self.n_regions
                || row.panels.len() != self.m_panels
                || row.angles.len() != self.m_panels
            {
                return Err(Error::invalid(format!("row {} does not match trace layout", row.tick)));
            }
            let mut rec = vec![
                row.tick.to_string(),
                real(row.t_s),
                flag(row.occupied),
                row.centroid_x.map(real).unwrap_or_default(),
                row.region.map(|r| r.to_string()).unwrap_or_default(),
                row.dwell_ms.to_string(),
            ];
            rec.extend(row.base.iter().copied().map(real));
            rec.extend(row.panels.iter().copied().map(real));
            rec.extend(row.angles.iter().copied().map(real));
            rec.push(row.tx_bytes.to_string());
            rec.push(flag(row.failsafe));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("rows were produced for this layout");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let mut trace = Trace::new(count("base_"), count("panel_"));
        if trace.header().iter().map(String::as_str).ne(header.iter()) {
            return Err(Error::invalid("trace header does not match the expected column layout"));
        }
        let (n, m) = (trace.n_regions, trace.m_panels);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let bad = |col: &str| Error::invalid(format!("row {}: bad `{col}`", line + 1));
            let reals = |from: usize, len: usize, name: &str| -> Result<Vec<f64>> {
                (from..from + len)
                    .map(|i| field(i).parse::<f64>().map_err(|_| bad(name)))
                    .collect()
            };
            let opt_real = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad("centroid_x"))
                }
            };
            let opt_usize = |s: &str| -> Result<Option<usize>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad("region"))
                }
            };
            let tail = 6 + n + 2 * m;
            trace.rows.push(TraceRow {
                tick: field(0).parse().map_err(|_| bad("tick"))?,
                t_s: field(1).parse().map_err(|_| bad("t_s"))?,
                occupied: parse_flag(field(2)).ok_or_else(|| bad("occupied"))?,
                centroid_x: opt_real(field(3))?,
                region: opt_usize(field(4))?,
                dwell_ms: field(5).parse().map_err(|_| bad("dwell_ms"))?,
                base: reals(6, n, "base")?,
                panels: reals(6 + n, m, "panel")?,
                angles: reals(6 + n + m, m, "angle")?,
                tx_bytes: field(tail).parse().map_err(|_| bad("tx_bytes"))?,
                failsafe: parse_flag(field(tail + 1)).ok_or_else(|| bad("failsafe"))?,
            });
        }
        Ok(trace)
    }
}

fn real(v: f64) -> String {
    format!("{v:.6}")
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn parse_flag(s: &str) -> Option<bool> {
    match s {
        "1" => Some(true),
        "0" => Some(false),
        _ => None,
    }
}

pub fn export_trace(trace: &Trace) -> String {
    trace.to_csv()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tick: u64) -> TraceRow {
        TraceRow {
            tick,
            t_s: tick as f64 / 30.0,
            occupied: tick.is_multiple_of(2),
            centroid_x: (tick.is_multiple_of(2)).then_some(0.123_456_789),
            region: (tick.is_multiple_of(2)).then_some(1),
            dwell_ms: 40 * tick,
            base: vec![0.1, 0.2],
            panels: vec![0.1, 0.15, 0.2],
            angles: vec![17.0, 20.5, 24.0],
            tx_bytes: 11,
            failsafe: false,
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        let csv = Trace::new(2, 3).to_csv();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("tick,t_s,occupied,centroid_x,region,dwell_ms,base_0,base_1,panel_0"));
        assert!(csv.trim_end().ends_with("angle_2,tx_bytes,failsafe"));
    }

    #[test]
    fn one_row_is_two_lines() {
        let mut t = Trace::new(2, 3);
        t.rows.push(row(0));
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("0,0.000000,1,0.123457,1,0,0.100000"));
    }

    #[test]
    fn mismatched_row_is_rejected() {
        let mut t = Trace::new(3, 3);
        t.rows.push(row(0));
        assert!(t.write_csv(Vec::new()).is_err());
    }

    #[test]
    fn read_rejects_foreign_csv() {
        assert!(Trace::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
